//! Instance reduction for ties on the hospital side only.
//!
//! Two passes delete acceptable pairs that can belong to no stable matching
//! and block none, so the reduced instance has exactly the stable matchings
//! of the original:
//!
//! * hospitals offer whole ties while they have room for them, and each
//!   resident that receives an offer drops every hospital it ranks below the
//!   offering one;
//! * residents apply down their lists, and a hospital that becomes full (or
//!   oversubscribed) drops every resident it ranks strictly below its
//!   `c`-th best assignee.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::instance::{HospitalId, Instance, RankTable, ResidentId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PreprocessError {
    #[error("reduction requires strictly ordered resident lists")]
    ResidentTies,
}

/// A reduced instance together with the pairs removed from the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reduction {
    pub instance: Instance,
    pub deleted: BTreeSet<(ResidentId, HospitalId)>,
}

/// Acceptable-pair bookkeeping shared by both passes.
struct Lists<'a> {
    inst: &'a Instance,
    n2: usize,
    alive: Vec<bool>,
    deleted: BTreeSet<(ResidentId, HospitalId)>,
}

impl<'a> Lists<'a> {
    fn new(inst: &'a Instance) -> Self {
        let n2 = inst.n_hospitals();
        let mut alive = vec![false; inst.n_residents() * n2];
        for (r, h) in inst.pairs() {
            alive[r * n2 + h] = true;
        }
        Lists {
            inst,
            n2,
            alive,
            deleted: BTreeSet::new(),
        }
    }

    fn alive(&self, r: ResidentId, h: HospitalId) -> bool {
        self.alive[r * self.n2 + h]
    }

    fn delete(&mut self, r: ResidentId, h: HospitalId) {
        debug_assert!(self.alive(r, h));
        self.alive[r * self.n2 + h] = false;
        self.deleted.insert((r, h));
    }

    /// Hospitals on `r`'s current list, in order.
    fn resident_list(&self, r: ResidentId) -> impl Iterator<Item = HospitalId> + '_ {
        self.inst
            .resident_prefs(r)
            .iter()
            .filter(move |&h| self.alive(r, h))
    }

    fn finish(self) -> Reduction {
        let Lists { inst, deleted, .. } = self;
        let instance = inst.restrict(|r, h| !deleted.contains(&(r, h)));
        Reduction { instance, deleted }
    }
}

/// FIFO work queue that holds each item at most once.
struct WorkQueue {
    queue: VecDeque<usize>,
    queued: Vec<bool>,
}

impl WorkQueue {
    fn new(order: &[usize], n: usize) -> Self {
        let mut q = WorkQueue {
            queue: VecDeque::with_capacity(n),
            queued: vec![false; n],
        };
        for &x in order {
            q.push(x);
        }
        q
    }

    fn push(&mut self, x: usize) {
        if !std::mem::replace(&mut self.queued[x], true) {
            self.queue.push_back(x);
        }
    }

    fn pop(&mut self) -> Option<usize> {
        let x = self.queue.pop_front()?;
        self.queued[x] = false;
        Some(x)
    }
}

fn check_precondition(inst: &Instance) -> Result<(), PreprocessError> {
    if inst.has_resident_ties() {
        Err(PreprocessError::ResidentTies)
    } else {
        Ok(())
    }
}

/// Hospitals-offer pass with hospitals examined in index order.
pub fn hospitals_offer(inst: &Instance) -> Result<Reduction, PreprocessError> {
    let order: Vec<_> = (0..inst.n_hospitals()).collect();
    hospitals_offer_ordered(inst, &order)
}

/// Hospitals-offer pass; `order` gives the initial queue of hospitals and
/// must be a permutation of all hospital indices.
pub fn hospitals_offer_ordered(
    inst: &Instance,
    order: &[HospitalId],
) -> Result<Reduction, PreprocessError> {
    check_precondition(inst)?;
    let n2 = inst.n_hospitals();
    let mut lists = Lists::new(inst);
    let mut assigned_to: Vec<Option<HospitalId>> = vec![None; inst.n_residents()];
    let mut load = vec![0u32; n2];
    let mut queue = WorkQueue::new(order, n2);

    while let Some(h) = queue.pop() {
        let tie = active_tie(&lists, &assigned_to, h);
        let vacancies = inst.capacity(h) - load[h];
        if tie.is_empty() || (vacancies as usize) < tie.len() {
            continue;
        }
        for r in tie {
            if let Some(k) = assigned_to[r] {
                load[k] -= 1;
                queue.push(k);
            }
            assigned_to[r] = Some(h);
            load[h] += 1;
            let successors: Vec<_> = lists.resident_list(r).skip_while(|&x| x != h).skip(1).collect();
            for k in successors {
                lists.delete(r, k);
                queue.push(k);
            }
        }
        queue.push(h);
    }
    Ok(lists.finish())
}

/// Current members of the tie right after `h`'s least preferred assignee, or
/// of its first tie when it has no assignees.
fn active_tie(lists: &Lists<'_>, assigned_to: &[Option<HospitalId>], h: HospitalId) -> Vec<ResidentId> {
    let groups = lists.inst.hospital(h).prefs.groups();
    let start = groups
        .iter()
        .rposition(|g| g.iter().any(|&r| assigned_to[r] == Some(h)))
        .map_or(0, |k| k + 1);
    groups[start..]
        .iter()
        .map(|g| {
            g.iter()
                .copied()
                .filter(|&r| lists.alive(r, h))
                .collect::<Vec<_>>()
        })
        .find(|g| !g.is_empty())
        .unwrap_or_default()
}

/// Residents-apply pass with free residents examined in index order.
pub fn residents_apply(inst: &Instance) -> Result<Reduction, PreprocessError> {
    let order: Vec<_> = (0..inst.n_residents()).collect();
    residents_apply_ordered(inst, &order)
}

/// Residents-apply pass; `order` gives the initial queue of free residents
/// and must be a permutation of all resident indices.
pub fn residents_apply_ordered(
    inst: &Instance,
    order: &[ResidentId],
) -> Result<Reduction, PreprocessError> {
    check_precondition(inst)?;
    let ranks = inst.ranks();
    let mut lists = Lists::new(inst);
    let mut assigned_to: Vec<Option<HospitalId>> = vec![None; inst.n_residents()];
    let mut assignees: Vec<Vec<ResidentId>> = vec![Vec::new(); inst.n_hospitals()];
    let mut free = WorkQueue::new(order, inst.n_residents());

    while let Some(r) = free.pop() {
        if assigned_to[r].is_some() {
            continue;
        }
        let Some(h) = lists.resident_list(r).next() else {
            continue;
        };
        assigned_to[r] = Some(h);
        assignees[h].push(r);
        if assignees[h].len() < inst.capacity(h) as usize {
            continue;
        }
        let cutoff = cth_choice_rank(&ranks, h, &assignees[h], inst.capacity(h));
        for l in strict_successors(&lists, &ranks, h, cutoff) {
            if assigned_to[l] == Some(h) {
                assigned_to[l] = None;
                assignees[h].retain(|&x| x != l);
                free.push(l);
            }
            lists.delete(l, h);
        }
    }
    Ok(lists.finish())
}

/// Rank of `h`'s `c`-th choice assignee; 0 when `h` has no capacity, so that
/// every listed resident is a strict successor.
fn cth_choice_rank(ranks: &RankTable, h: HospitalId, assignees: &[ResidentId], c: u32) -> u32 {
    if c == 0 {
        return 0;
    }
    let mut r: Vec<u32> = assignees.iter().map(|&x| ranks.hospital_rank(h, x)).collect();
    r.sort_unstable();
    r[c as usize - 1]
}

fn strict_successors(
    lists: &Lists<'_>,
    ranks: &RankTable,
    h: HospitalId,
    cutoff: u32,
) -> Vec<ResidentId> {
    lists
        .inst
        .hospital(h)
        .prefs
        .iter()
        .filter(|&l| lists.alive(l, h) && ranks.hospital_rank(h, l) > cutoff)
        .collect()
}

/// Hospitals-offer followed by residents-apply, one pass each.
pub fn reduce(inst: &Instance) -> Result<Reduction, PreprocessError> {
    let first = hospitals_offer(inst)?;
    let second = residents_apply(&first.instance)?;
    let mut deleted = first.deleted;
    deleted.extend(second.deleted);
    Ok(Reduction {
        instance: second.instance,
        deleted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::figure1;
    use crate::instance::{Hospital, PreferenceList};

    fn set(pairs: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
        pairs.iter().copied().collect()
    }

    fn single() -> Instance {
        Instance::new(
            vec![PreferenceList::strict([0])],
            vec![Hospital {
                capacity: 1,
                prefs: PreferenceList::strict([0]),
            }],
        )
        .unwrap()
    }

    #[test]
    fn hospitals_offer_on_figure1() {
        let red = hospitals_offer(&figure1()).unwrap();
        assert_eq!(red.deleted, set(&[(0, 1)]));
        assert_eq!(red.instance.num_pairs(), 9);
    }

    #[test]
    fn residents_apply_on_figure1() {
        let red = residents_apply(&figure1()).unwrap();
        assert_eq!(red.deleted, set(&[(2, 0), (5, 0)]));
    }

    #[test]
    fn reduce_on_figure1() {
        let red = reduce(&figure1()).unwrap();
        assert_eq!(red.deleted, set(&[(0, 1), (2, 0), (5, 0)]));
        let remaining: BTreeSet<_> = red.instance.pairs().collect();
        assert_eq!(
            remaining,
            set(&[(0, 0), (1, 0), (2, 2), (3, 1), (4, 1), (4, 2), (5, 1)])
        );
        let again = reduce(&red.instance).unwrap();
        assert!(again.deleted.is_empty());
    }

    #[test]
    fn single_pair_untouched() {
        assert!(hospitals_offer(&single()).unwrap().deleted.is_empty());
        assert!(residents_apply(&single()).unwrap().deleted.is_empty());
    }

    #[test]
    fn oversized_first_ties_block_offers() {
        // both hospitals have capacity 1 and a first tie of size 2
        let inst = Instance::new(
            vec![
                PreferenceList::strict([0, 1]),
                PreferenceList::strict([1, 0]),
            ],
            vec![
                Hospital {
                    capacity: 1,
                    prefs: PreferenceList::new(vec![vec![0, 1]]),
                },
                Hospital {
                    capacity: 1,
                    prefs: PreferenceList::new(vec![vec![0, 1]]),
                },
            ],
        )
        .unwrap();
        assert!(hospitals_offer(&inst).unwrap().deleted.is_empty());
    }

    #[test]
    fn tie_at_capacity_boundary_is_kept() {
        // h1 (c=1) ranks r1 r2 tied then r3; both r1 and r2 apply.
        let inst = Instance::new(
            vec![
                PreferenceList::strict([0]),
                PreferenceList::strict([0]),
                PreferenceList::strict([0]),
            ],
            vec![Hospital {
                capacity: 1,
                prefs: PreferenceList::new(vec![vec![0, 1], vec![2]]),
            }],
        )
        .unwrap();
        let red = residents_apply(&inst).unwrap();
        // r1 fills h1: r3 is a strict successor and r2 (tied with r1) is not
        assert_eq!(red.deleted, set(&[(2, 0)]));
    }

    #[test]
    fn cth_assignee_choice_is_immaterial() {
        let inst = Instance::new(
            vec![
                PreferenceList::strict([0]),
                PreferenceList::strict([0]),
                PreferenceList::strict([0]),
                PreferenceList::strict([0]),
            ],
            vec![Hospital {
                capacity: 2,
                prefs: PreferenceList::new(vec![vec![0], vec![1, 2], vec![3]]),
            }],
        )
        .unwrap();
        let ranks = inst.ranks();
        let lists = Lists::new(&inst);
        let assignees = [0, 1, 2];
        let cutoff = cth_choice_rank(&ranks, 0, &assignees, 2);
        // either tied member may be "the" 2nd-choice assignee
        let via_r2 = strict_successors(&lists, &ranks, 0, ranks.hospital_rank(0, 1));
        let via_r3 = strict_successors(&lists, &ranks, 0, ranks.hospital_rank(0, 2));
        assert_eq!(via_r2, via_r3);
        assert_eq!(strict_successors(&lists, &ranks, 0, cutoff), vec![3]);
    }

    #[test]
    fn zero_capacity_hospital_loses_everyone() {
        let inst = Instance::new(
            vec![PreferenceList::strict([0, 1])],
            vec![
                Hospital {
                    capacity: 0,
                    prefs: PreferenceList::strict([0]),
                },
                Hospital {
                    capacity: 1,
                    prefs: PreferenceList::strict([0]),
                },
            ],
        )
        .unwrap();
        let red = reduce(&inst).unwrap();
        assert_eq!(red.deleted, set(&[(0, 0)]));
    }

    #[test]
    fn resident_ties_rejected() {
        let inst = Instance::new(
            vec![PreferenceList::new(vec![vec![0, 1]])],
            vec![
                Hospital {
                    capacity: 1,
                    prefs: PreferenceList::strict([0]),
                },
                Hospital {
                    capacity: 1,
                    prefs: PreferenceList::strict([0]),
                },
            ],
        )
        .unwrap();
        assert_eq!(reduce(&inst), Err(PreprocessError::ResidentTies));
        assert_eq!(hospitals_offer(&inst), Err(PreprocessError::ResidentTies));
        assert_eq!(residents_apply(&inst), Err(PreprocessError::ResidentTies));
    }
}
