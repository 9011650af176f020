//! Tie breaking plus resident-oriented deferred acceptance. Any tie-broken
//! stable matching is weakly stable in the tied instance, which makes it a
//! valid incumbent and lower bound for the exact search.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::{Hospital, Instance, Matching, PreferenceList};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreakPolicy {
    /// Keep tie members in their stored order.
    ListOrder,
    /// Shuffle each tie with a generator seeded from `seed`.
    SeededRandom(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeuristicError {
    #[error("deferred acceptance needs strict preference lists")]
    TiedInput,
}

fn break_list(list: &PreferenceList, rng: Option<&mut ChaCha8Rng>) -> PreferenceList {
    match rng {
        None => PreferenceList::strict(list.iter()),
        Some(rng) => {
            let mut out = Vec::with_capacity(list.len());
            for group in list.groups() {
                let mut g = group.clone();
                g.shuffle(rng);
                out.extend(g);
            }
            PreferenceList::strict(out)
        }
    }
}

/// Replaces every tie, on both sides, by an ordering of its members.
pub fn break_ties(inst: &Instance, policy: TieBreakPolicy) -> Instance {
    let mut rng = match policy {
        TieBreakPolicy::ListOrder => None,
        TieBreakPolicy::SeededRandom(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let residents = (0..inst.n_residents())
        .map(|r| break_list(inst.resident_prefs(r), rng.as_mut()))
        .collect();
    let hospitals = inst
        .hospitals()
        .iter()
        .map(|h| Hospital {
            capacity: h.capacity,
            prefs: break_list(&h.prefs, rng.as_mut()),
        })
        .collect();
    Instance::from_parts_unchecked(residents, hospitals)
}

/// Resident-proposing deferred acceptance on a strict instance.
pub fn gale_shapley(inst: &Instance) -> Result<Matching, HeuristicError> {
    if inst.has_resident_ties() || inst.has_hospital_ties() {
        return Err(HeuristicError::TiedInput);
    }
    let ranks = inst.ranks();
    let n1 = inst.n_residents();
    let prefs: Vec<Vec<usize>> = (0..n1)
        .map(|r| inst.resident_prefs(r).iter().collect())
        .collect();
    let mut next = vec![0usize; n1];
    let mut held: Vec<Vec<usize>> = vec![Vec::new(); inst.n_hospitals()];
    let mut matching = Matching::empty(n1);
    let mut free: VecDeque<usize> = (0..n1).collect();

    while let Some(r) = free.pop_front() {
        let Some(&h) = prefs[r].get(next[r]) else {
            continue;
        };
        next[r] += 1;
        let cap = inst.capacity(h) as usize;
        if held[h].len() < cap {
            held[h].push(r);
            matching.assign(r, h);
            continue;
        }
        let worst = held[h]
            .iter()
            .enumerate()
            .max_by_key(|(_, &x)| ranks.hospital_rank(h, x))
            .map(|(k, &x)| (k, x));
        match worst {
            Some((k, w)) if ranks.hospital_rank(h, r) < ranks.hospital_rank(h, w) => {
                held[h][k] = r;
                matching.assign(r, h);
                matching.unassign(w);
                free.push_back(w);
            }
            _ => free.push_back(r),
        }
    }
    Ok(matching)
}

/// Stable matching of `inst` from a seeded tie break followed by deferred
/// acceptance.
pub fn warm_start(inst: &Instance, seed: u64) -> Matching {
    let strict = break_ties(inst, TieBreakPolicy::SeededRandom(seed));
    gale_shapley(&strict).expect("tie breaking leaves no ties")
}
