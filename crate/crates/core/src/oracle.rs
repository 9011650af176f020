//! Exhaustive enumeration of every weakly stable matching of a small
//! instance. Ground truth for the solver and for the reduction.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::instance::{is_stable, validate_matching, Instance, Matching, RankTable, INFINITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimit {
    pub max_residents: usize,
    pub max_pairs: usize,
    /// Search nodes allowed before giving up.
    pub node_budget: u64,
}

impl Default for OracleLimit {
    fn default() -> Self {
        OracleLimit {
            max_residents: 12,
            max_pairs: 24,
            node_budget: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("{got} residents exceeds the oracle limit of {limit}")]
    TooManyResidents { got: usize, limit: usize },
    #[error("{got} acceptable pairs exceeds the oracle limit of {limit}")]
    TooManyPairs { got: usize, limit: usize },
    #[error("enumeration exceeded its budget of {0} nodes")]
    BudgetExceeded(u64),
}

fn check_limits(inst: &Instance, limit: &OracleLimit) -> Result<(), OracleError> {
    if inst.n_residents() > limit.max_residents {
        return Err(OracleError::TooManyResidents {
            got: inst.n_residents(),
            limit: limit.max_residents,
        });
    }
    if inst.num_pairs() > limit.max_pairs {
        return Err(OracleError::TooManyPairs {
            got: inst.num_pairs(),
            limit: limit.max_pairs,
        });
    }
    Ok(())
}

struct Walk<'a> {
    inst: &'a Instance,
    ranks: RankTable,
    prefs: Vec<Vec<usize>>,
    current: Matching,
    load: Vec<u32>,
    /// Residents at index >= k still to be placed that list each hospital.
    remaining: Vec<Vec<u32>>,
    prune: bool,
    nodes: u64,
    budget: u64,
    found: BTreeSet<Matching>,
}

impl<'a> Walk<'a> {
    fn new(inst: &'a Instance, limit: &OracleLimit, prune: bool) -> Self {
        let n1 = inst.n_residents();
        let n2 = inst.n_hospitals();
        let prefs: Vec<Vec<usize>> = (0..n1)
            .map(|r| inst.resident_prefs(r).iter().collect())
            .collect();
        let mut remaining = vec![vec![0u32; n2]; n1 + 1];
        for k in (0..n1).rev() {
            remaining[k] = remaining[k + 1].clone();
            for &h in &prefs[k] {
                remaining[k][h] += 1;
            }
        }
        Walk {
            inst,
            ranks: inst.ranks(),
            prefs,
            current: Matching::empty(n1),
            load: vec![0; n2],
            remaining,
            prune,
            nodes: 0,
            budget: limit.node_budget,
            found: BTreeSet::new(),
        }
    }

    /// True when some already placed resident is certain to block whatever
    /// the remaining residents do: the hospital it wants already holds a
    /// resident it ranks lower, or can no longer fill up.
    fn doomed(&self, placed: usize) -> bool {
        for r in 0..placed {
            let cur = self
                .current
                .hospital_of(r)
                .map_or(INFINITY, |h| self.ranks.resident_rank(r, h));
            for &h in &self.prefs[r] {
                if self.ranks.resident_rank(r, h) >= cur {
                    continue;
                }
                if self.load[h] + self.remaining[placed][h] < self.inst.capacity(h) {
                    return true;
                }
                let mine = self.ranks.hospital_rank(h, r);
                if self
                    .current
                    .assignees(h)
                    .any(|o| self.ranks.hospital_rank(h, o) > mine)
                {
                    return true;
                }
            }
        }
        false
    }

    fn go(&mut self, k: usize) -> Result<(), OracleError> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(OracleError::BudgetExceeded(self.budget));
        }
        if self.prune && self.doomed(k) {
            return Ok(());
        }
        if k == self.inst.n_residents() {
            if is_stable(self.inst, &self.ranks, &self.current) {
                debug_assert!(validate_matching(self.inst, &self.current).is_empty());
                self.found.insert(self.current.clone());
            }
            return Ok(());
        }
        self.go(k + 1)?;
        for i in 0..self.prefs[k].len() {
            let h = self.prefs[k][i];
            if self.load[h] >= self.inst.capacity(h) {
                continue;
            }
            self.load[h] += 1;
            self.current.assign(k, h);
            let res = self.go(k + 1);
            self.current.unassign(k);
            self.load[h] -= 1;
            res?;
        }
        Ok(())
    }
}

/// All weakly stable matchings. Walks every capacity-respecting assignment,
/// cutting branches that already contain a pair certain to block.
pub fn enumerate_stable_matchings(
    inst: &Instance,
    limit: &OracleLimit,
) -> Result<BTreeSet<Matching>, OracleError> {
    check_limits(inst, limit)?;
    let mut walk = Walk::new(inst, limit, true);
    walk.go(0)?;
    Ok(walk.found)
}

/// Same set as [`enumerate_stable_matchings`], testing every complete
/// capacity-respecting assignment with no pruning.
pub fn enumerate_stable_matchings_naive(
    inst: &Instance,
    limit: &OracleLimit,
) -> Result<BTreeSet<Matching>, OracleError> {
    check_limits(inst, limit)?;
    let mut walk = Walk::new(inst, limit, false);
    walk.go(0)?;
    Ok(walk.found)
}

pub fn max_stable_size(inst: &Instance, limit: &OracleLimit) -> Result<usize, OracleError> {
    Ok(enumerate_stable_matchings(inst, limit)?
        .iter()
        .map(Matching::size)
        .max()
        .expect("every instance admits a stable matching"))
}
