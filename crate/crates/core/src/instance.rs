//! Domain model: HRT instances, rank tables, matchings and weak stability.
//!
//! Agents are addressed by dense zero-based indices. Resident `i` is printed
//! as `r{i+1}` and hospital `j` as `h{j+1}`; see [`resident_name`] and
//! [`hospital_name`].

use std::fmt;

use thiserror::Error;

pub type ResidentId = usize;
pub type HospitalId = usize;

/// Rank assigned to an unacceptable pair.
pub const INFINITY: u32 = u32::MAX;

pub fn resident_name(r: ResidentId) -> String {
    format!("r{}", r + 1)
}

pub fn hospital_name(h: HospitalId) -> String {
    format!("h{}", h + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("instance needs at least one resident and one hospital")]
    Empty,
    #[error("{owner} lists unknown agent id {id}")]
    UnknownId { owner: String, id: usize },
    #[error("{owner} lists {agent} more than once")]
    DuplicateEntry { owner: String, agent: String },
    #[error("pair ({}, {}) is not mutually acceptable", resident_name(*.0), hospital_name(*.1))]
    NotMutual(ResidentId, HospitalId),
    #[error("pair ({}, {}) is not acceptable", resident_name(*.0), hospital_name(*.1))]
    NotAcceptable(ResidentId, HospitalId),
}

/// An ordered sequence of ties. A strict entry is a tie of size one.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PreferenceList {
    groups: Vec<Vec<usize>>,
}

impl PreferenceList {
    /// Empty groups are dropped.
    pub fn new(groups: Vec<Vec<usize>>) -> Self {
        PreferenceList {
            groups: groups.into_iter().filter(|g| !g.is_empty()).collect(),
        }
    }

    pub fn strict(ids: impl IntoIterator<Item = usize>) -> Self {
        PreferenceList {
            groups: ids.into_iter().map(|id| vec![id]).collect(),
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Entries in preference order, ties flattened in stored order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.groups.iter().flatten().copied()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.iter().any(|x| x == id)
    }

    pub fn is_strict(&self) -> bool {
        self.groups.iter().all(|g| g.len() == 1)
    }

    /// Keeps only the entries accepted by `keep`, dropping groups left empty.
    pub fn retain(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        PreferenceList::new(
            self.groups
                .iter()
                .map(|g| g.iter().copied().filter(|&x| keep(x)).collect())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hospital {
    pub capacity: u32,
    pub prefs: PreferenceList,
}

/// One-sided list entry removed while building an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrunedEntry {
    /// The hospital listed the resident, but not the other way round.
    HospitalSide(ResidentId, HospitalId),
    /// The resident listed the hospital, but not the other way round.
    ResidentSide(ResidentId, HospitalId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    residents: Vec<PreferenceList>,
    hospitals: Vec<Hospital>,
}

impl Instance {
    /// Builds an instance, requiring every list entry to be reciprocated.
    pub fn new(
        residents: Vec<PreferenceList>,
        hospitals: Vec<Hospital>,
    ) -> Result<Self, InstanceError> {
        let inst = Self::unchecked(residents, hospitals)?;
        if let Some(&e) = inst.one_sided_entries().first() {
            let (r, h) = match e {
                PrunedEntry::HospitalSide(r, h) | PrunedEntry::ResidentSide(r, h) => (r, h),
            };
            return Err(InstanceError::NotMutual(r, h));
        }
        Ok(inst)
    }

    /// Builds an instance, dropping entries that are not reciprocated.
    pub fn with_pruning(
        residents: Vec<PreferenceList>,
        hospitals: Vec<Hospital>,
    ) -> Result<(Self, Vec<PrunedEntry>), InstanceError> {
        let mut inst = Self::unchecked(residents, hospitals)?;
        let pruned = inst.one_sided_entries();
        if !pruned.is_empty() {
            let n2 = inst.n_hospitals();
            let mut res_has = vec![false; inst.n_residents() * n2];
            for (r, list) in inst.residents.iter().enumerate() {
                for h in list.iter() {
                    res_has[r * n2 + h] = true;
                }
            }
            let mut hos_has = vec![false; inst.n_residents() * n2];
            for (h, hosp) in inst.hospitals.iter().enumerate() {
                for r in hosp.prefs.iter() {
                    hos_has[r * n2 + h] = true;
                }
            }
            for (r, list) in inst.residents.iter_mut().enumerate() {
                *list = list.retain(|h| hos_has[r * n2 + h]);
            }
            for (h, hosp) in inst.hospitals.iter_mut().enumerate() {
                hosp.prefs = hosp.prefs.retain(|r| res_has[r * n2 + h]);
            }
        }
        Ok((inst, pruned))
    }

    fn unchecked(
        residents: Vec<PreferenceList>,
        hospitals: Vec<Hospital>,
    ) -> Result<Self, InstanceError> {
        if residents.is_empty() || hospitals.is_empty() {
            return Err(InstanceError::Empty);
        }
        let (n1, n2) = (residents.len(), hospitals.len());
        for (r, list) in residents.iter().enumerate() {
            check_list(list, n2, &resident_name(r), hospital_name)?;
        }
        for (h, hosp) in hospitals.iter().enumerate() {
            check_list(&hosp.prefs, n1, &hospital_name(h), resident_name)?;
        }
        // normalize away any empty groups a caller constructed by hand
        let residents = residents
            .into_iter()
            .map(|l| PreferenceList::new(l.groups))
            .collect();
        let hospitals = hospitals
            .into_iter()
            .map(|h| Hospital {
                capacity: h.capacity,
                prefs: PreferenceList::new(h.prefs.groups),
            })
            .collect();
        Ok(Instance {
            residents,
            hospitals,
        })
    }

    fn one_sided_entries(&self) -> Vec<PrunedEntry> {
        let n2 = self.n_hospitals();
        let mut res_has = vec![false; self.n_residents() * n2];
        for (r, list) in self.residents.iter().enumerate() {
            for h in list.iter() {
                res_has[r * n2 + h] = true;
            }
        }
        let mut hos_has = vec![false; self.n_residents() * n2];
        for (h, hosp) in self.hospitals.iter().enumerate() {
            for r in hosp.prefs.iter() {
                hos_has[r * n2 + h] = true;
            }
        }
        let mut out = Vec::new();
        for r in 0..self.n_residents() {
            for h in 0..n2 {
                match (res_has[r * n2 + h], hos_has[r * n2 + h]) {
                    (true, false) => out.push(PrunedEntry::ResidentSide(r, h)),
                    (false, true) => out.push(PrunedEntry::HospitalSide(r, h)),
                    _ => {}
                }
            }
        }
        out
    }

    pub fn n_residents(&self) -> usize {
        self.residents.len()
    }

    pub fn n_hospitals(&self) -> usize {
        self.hospitals.len()
    }

    pub fn resident_prefs(&self, r: ResidentId) -> &PreferenceList {
        &self.residents[r]
    }

    pub fn hospital(&self, h: HospitalId) -> &Hospital {
        &self.hospitals[h]
    }

    pub fn hospitals(&self) -> &[Hospital] {
        &self.hospitals
    }

    pub fn capacity(&self, h: HospitalId) -> u32 {
        self.hospitals[h].capacity
    }

    pub fn total_capacity(&self) -> u64 {
        self.hospitals.iter().map(|h| u64::from(h.capacity)).sum()
    }

    /// Acceptable pairs, by resident and then in the resident's list order.
    pub fn pairs(&self) -> impl Iterator<Item = (ResidentId, HospitalId)> + '_ {
        self.residents
            .iter()
            .enumerate()
            .flat_map(|(r, l)| l.iter().map(move |h| (r, h)))
    }

    pub fn num_pairs(&self) -> usize {
        self.residents.iter().map(PreferenceList::len).sum()
    }

    pub fn is_acceptable(&self, r: ResidentId, h: HospitalId) -> bool {
        r < self.n_residents() && h < self.n_hospitals() && self.residents[r].contains(h)
    }

    pub fn has_resident_ties(&self) -> bool {
        self.residents.iter().any(|l| !l.is_strict())
    }

    pub fn has_hospital_ties(&self) -> bool {
        self.hospitals.iter().any(|h| !h.prefs.is_strict())
    }

    pub fn ranks(&self) -> RankTable {
        RankTable::new(self)
    }

    /// Returns the sub-instance containing only the pairs accepted by `keep`.
    pub fn restrict(&self, mut keep: impl FnMut(ResidentId, HospitalId) -> bool) -> Instance {
        let residents = self
            .residents
            .iter()
            .enumerate()
            .map(|(r, l)| l.retain(|h| keep(r, h)))
            .collect::<Vec<_>>();
        let n2 = self.n_hospitals();
        let mut kept = vec![false; self.n_residents() * n2];
        for (r, l) in residents.iter().enumerate() {
            for h in l.iter() {
                kept[r * n2 + h] = true;
            }
        }
        let hospitals = self
            .hospitals
            .iter()
            .enumerate()
            .map(|(h, hosp)| Hospital {
                capacity: hosp.capacity,
                prefs: hosp.prefs.retain(|r| kept[r * n2 + h]),
            })
            .collect();
        Instance {
            residents,
            hospitals,
        }
    }

    /// Replaces list contents wholesale; used by tie breaking.
    pub(crate) fn from_parts_unchecked(
        residents: Vec<PreferenceList>,
        hospitals: Vec<Hospital>,
    ) -> Instance {
        Instance {
            residents,
            hospitals,
        }
    }
}

fn check_list(
    list: &PreferenceList,
    bound: usize,
    owner: &str,
    name: fn(usize) -> String,
) -> Result<(), InstanceError> {
    let mut seen = vec![false; bound];
    for id in list.iter() {
        if id >= bound {
            return Err(InstanceError::UnknownId {
                owner: owner.to_string(),
                id,
            });
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(InstanceError::DuplicateEntry {
                owner: owner.to_string(),
                agent: name(id),
            });
        }
    }
    Ok(())
}

/// Dense table of `rank(a, b)`: one plus the number of agents `a` strictly
/// prefers to `b`, or [`INFINITY`] when the pair is unacceptable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankTable {
    n2: usize,
    by_resident: Vec<u32>,
    by_hospital: Vec<u32>,
}

impl RankTable {
    pub fn new(inst: &Instance) -> Self {
        let (n1, n2) = (inst.n_residents(), inst.n_hospitals());
        let mut by_resident = vec![INFINITY; n1 * n2];
        let mut by_hospital = vec![INFINITY; n1 * n2];
        for r in 0..n1 {
            let mut ahead = 0u32;
            for group in inst.resident_prefs(r).groups() {
                for &h in group {
                    by_resident[r * n2 + h] = ahead + 1;
                }
                ahead += group.len() as u32;
            }
        }
        for h in 0..n2 {
            let mut ahead = 0u32;
            for group in inst.hospital(h).prefs.groups() {
                for &r in group {
                    by_hospital[r * n2 + h] = ahead + 1;
                }
                ahead += group.len() as u32;
            }
        }
        RankTable {
            n2,
            by_resident,
            by_hospital,
        }
    }

    /// `rank(r, h)`: position of `h` on `r`'s list.
    #[inline]
    pub fn resident_rank(&self, r: ResidentId, h: HospitalId) -> u32 {
        self.by_resident[r * self.n2 + h]
    }

    /// `rank(h, r)`: position of `r` on `h`'s list.
    #[inline]
    pub fn hospital_rank(&self, h: HospitalId, r: ResidentId) -> u32 {
        self.by_hospital[r * self.n2 + h]
    }

    pub fn is_acceptable(&self, r: ResidentId, h: HospitalId) -> bool {
        self.resident_rank(r, h) != INFINITY
    }
}

/// Assignment of residents to hospitals; `None` is unmatched.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Matching {
    assignment: Vec<Option<HospitalId>>,
}

impl Matching {
    pub fn empty(n_residents: usize) -> Self {
        Matching {
            assignment: vec![None; n_residents],
        }
    }

    pub fn from_assignment(assignment: Vec<Option<HospitalId>>) -> Self {
        Matching { assignment }
    }

    /// Fails on a resident appearing twice or out of range.
    pub fn from_pairs(
        n_residents: usize,
        pairs: impl IntoIterator<Item = (ResidentId, HospitalId)>,
    ) -> Result<Self, Violation> {
        let mut m = Matching::empty(n_residents);
        for (r, h) in pairs {
            match m.assignment.get_mut(r) {
                None => return Err(Violation::UnknownResident(r)),
                Some(Some(_)) => return Err(Violation::DuplicateResident(r)),
                Some(slot) => *slot = Some(h),
            }
        }
        Ok(m)
    }

    pub fn n_residents(&self) -> usize {
        self.assignment.len()
    }

    pub fn hospital_of(&self, r: ResidentId) -> Option<HospitalId> {
        self.assignment[r]
    }

    pub fn assign(&mut self, r: ResidentId, h: HospitalId) {
        self.assignment[r] = Some(h);
    }

    pub fn unassign(&mut self, r: ResidentId) {
        self.assignment[r] = None;
    }

    pub fn assignment(&self) -> &[Option<HospitalId>] {
        &self.assignment
    }

    pub fn pairs(&self) -> impl Iterator<Item = (ResidentId, HospitalId)> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(r, h)| h.map(|h| (r, h)))
    }

    pub fn assignees(&self, h: HospitalId) -> impl Iterator<Item = ResidentId> + '_ {
        self.pairs().filter(move |&(_, x)| x == h).map(|(r, _)| r)
    }

    /// Assignee count per hospital.
    pub fn loads(&self, n_hospitals: usize) -> Vec<u32> {
        let mut loads = vec![0u32; n_hospitals];
        for (_, h) in self.pairs() {
            if let Some(l) = loads.get_mut(h) {
                *l += 1;
            }
        }
        loads
    }

    /// Number of matched residents.
    pub fn size(&self) -> usize {
        self.assignment.iter().filter(|h| h.is_some()).count()
    }
}

pub fn matching_size(m: &Matching) -> usize {
    m.size()
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, (r, h)) in self.pairs().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "({}, {})", resident_name(r), hospital_name(h))?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("unknown resident index {0}")]
    UnknownResident(ResidentId),
    #[error("{} is assigned to unknown hospital index {1}", resident_name(*.0))]
    UnknownHospital(ResidentId, HospitalId),
    #[error("{} is assigned more than once", resident_name(*.0))]
    DuplicateResident(ResidentId),
    #[error("pair ({}, {}) is not acceptable", resident_name(*.0), hospital_name(*.1))]
    Unacceptable(ResidentId, HospitalId),
    #[error("{} has {assigned} assignees but capacity {capacity}", hospital_name(*.hospital))]
    OverCapacity {
        hospital: HospitalId,
        assigned: u32,
        capacity: u32,
    },
}

/// Lists every breach of the matching invariants: acceptability of each
/// assigned pair and hospital capacities.
pub fn validate_matching(inst: &Instance, m: &Matching) -> Vec<Violation> {
    let mut out = Vec::new();
    if m.n_residents() != inst.n_residents() {
        for r in inst.n_residents()..m.n_residents() {
            if m.hospital_of(r).is_some() {
                out.push(Violation::UnknownResident(r));
            }
        }
    }
    for (r, h) in m.pairs() {
        if r >= inst.n_residents() {
            continue;
        }
        if h >= inst.n_hospitals() {
            out.push(Violation::UnknownHospital(r, h));
        } else if !inst.is_acceptable(r, h) {
            out.push(Violation::Unacceptable(r, h));
        }
    }
    for (h, &assigned) in m.loads(inst.n_hospitals()).iter().enumerate() {
        let capacity = inst.capacity(h);
        if assigned > capacity {
            out.push(Violation::OverCapacity {
                hospital: h,
                assigned,
                capacity,
            });
        }
    }
    out
}

/// Like [`validate_matching`], over a raw pair list that may repeat residents.
pub fn validate_pairs(inst: &Instance, pairs: &[(ResidentId, HospitalId)]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut m = Matching::empty(inst.n_residents());
    let mut extra_load = vec![0u32; inst.n_hospitals()];
    for &(r, h) in pairs {
        if r >= inst.n_residents() {
            out.push(Violation::UnknownResident(r));
            continue;
        }
        if m.hospital_of(r).is_some() {
            out.push(Violation::DuplicateResident(r));
            if h < inst.n_hospitals() {
                extra_load[h] += 1;
            }
            continue;
        }
        m.assign(r, h);
    }
    let base = validate_matching(inst, &m);
    for v in base {
        match v {
            Violation::OverCapacity { .. } => {}
            other => out.push(other),
        }
    }
    let loads = m.loads(inst.n_hospitals());
    for h in 0..inst.n_hospitals() {
        let assigned = loads[h] + extra_load[h];
        if assigned > inst.capacity(h) {
            out.push(Violation::OverCapacity {
                hospital: h,
                assigned,
                capacity: inst.capacity(h),
            });
        }
    }
    out
}

/// Weak blocking: `r` is unmatched or strictly prefers `h` to its partner, and
/// `h` is under-subscribed or strictly prefers `r` to one of its assignees.
pub fn is_blocking_pair(
    inst: &Instance,
    ranks: &RankTable,
    m: &Matching,
    r: ResidentId,
    h: HospitalId,
) -> Result<bool, InstanceError> {
    if r >= inst.n_residents() || h >= inst.n_hospitals() || !ranks.is_acceptable(r, h) {
        return Err(InstanceError::NotAcceptable(r, h));
    }
    let resident_wants = match m.hospital_of(r) {
        None => true,
        Some(cur) => ranks.resident_rank(r, h) < ranks.resident_rank(r, cur),
    };
    if !resident_wants {
        return Ok(false);
    }
    let mut load = 0u32;
    let mut prefers_r = false;
    let rank_r = ranks.hospital_rank(h, r);
    for other in m.assignees(h) {
        load += 1;
        if rank_r < ranks.hospital_rank(h, other) {
            prefers_r = true;
        }
    }
    Ok(load < inst.capacity(h) || prefers_r)
}

/// Every blocking pair, by scanning all acceptable pairs.
pub fn blocking_pairs(
    inst: &Instance,
    ranks: &RankTable,
    m: &Matching,
) -> Vec<(ResidentId, HospitalId)> {
    inst.pairs()
        .filter(|&(r, h)| is_blocking_pair(inst, ranks, m, r, h).unwrap_or(false))
        .collect()
}

/// Same result as [`blocking_pairs`], computed from each hospital's load and
/// worst assignee rank instead of re-scanning assignees per pair.
pub fn blocking_pairs_by_threshold(
    inst: &Instance,
    ranks: &RankTable,
    m: &Matching,
) -> Vec<(ResidentId, HospitalId)> {
    let n2 = inst.n_hospitals();
    let mut load = vec![0u32; n2];
    let mut worst = vec![0u32; n2];
    for (r, h) in m.pairs() {
        load[h] += 1;
        worst[h] = worst[h].max(ranks.hospital_rank(h, r));
    }
    // a resident ranked strictly better than `threshold[h]` can block h
    let threshold: Vec<u32> = (0..n2)
        .map(|h| {
            if load[h] < inst.capacity(h) {
                INFINITY
            } else {
                worst[h]
            }
        })
        .collect();
    let mut out = Vec::new();
    for (r, h) in inst.pairs() {
        let current = m
            .hospital_of(r)
            .map_or(INFINITY, |c| ranks.resident_rank(r, c));
        let wants = m.hospital_of(r).is_none() || ranks.resident_rank(r, h) < current;
        if wants && ranks.hospital_rank(h, r) < threshold[h] {
            out.push((r, h));
        }
    }
    out
}

pub fn is_stable(inst: &Instance, ranks: &RankTable, m: &Matching) -> bool {
    inst.pairs()
        .all(|(r, h)| !is_blocking_pair(inst, ranks, m, r, h).unwrap_or(false))
}
