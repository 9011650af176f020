//! Exact maximization of the stable matching program by depth-first
//! branch-and-bound.
//!
//! Each node propagates the three row families to a fixpoint (one hospital
//! per resident, capacities, stability) and bounds the best completion by a
//! maximum capacitated bipartite matching over the columns still allowed,
//! ignoring stability. The bounding matching is kept between nodes and only
//! repaired by augmenting paths.
//!
//! Branching is on the level of each hospital's worst assignee (or on the
//! hospital having room). Once that level is pinned down for every hospital,
//! stability reduces to column exclusions plus "must be matched" and "must
//! be full" requirements, and nodes where those requirements cannot all be
//! met are cut. When the bound meets the incumbent exactly, columns outside
//! every maximum matching are excluded. Plain column branching finishes off
//! whatever the level branching leaves open, and every leaf is checked
//! against the full program.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::{HospitalId, Matching, ResidentId};
use crate::model::{ConstraintKind, IpModel};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub time_limit: Duration,
    /// Stable matching used as the first incumbent.
    pub initial: Option<Matching>,
    /// Only solutions of at least this size are of interest.
    pub lower_bound: Option<usize>,
    /// Seeds the resident priority used to break branching ties.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            time_limit: Duration::from_secs(300),
            initial: None,
            lower_bound: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    FeasibleTimeout,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::FeasibleTimeout => "FeasibleTimeout",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub matching: Matching,
    pub solution: Vec<bool>,
    pub objective: usize,
    pub nodes: u64,
    pub wall_time: Duration,
    /// Upper bound on the optimum proven at exit.
    pub proof_bound: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("time limit must be positive")]
    InvalidTimeLimit,
    #[error("initial matching uses pair ({}, {}) which has no column", .0 + 1, .1 + 1)]
    InitialNotInModel(ResidentId, HospitalId),
    #[error("initial matching violates model row {0}")]
    InitialInfeasible(String),
    #[error("no solution reaches the requested lower bound {0}")]
    LowerBoundUnattainable(usize),
    #[error("internal consistency failure: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error("vector has {got} entries, model has {expected} columns")]
    Length { got: usize, expected: usize },
    #[error("column {0} has non-binary value {1}")]
    Fractional(usize, f64),
    #[error("vector violates row {0}")]
    Infeasible(String),
}

/// Decodes a feasible 0/1 vector into its matching.
pub fn extract_matching(model: &IpModel, values: &[f64]) -> Result<Matching, ExtractError> {
    if values.len() != model.num_columns() {
        return Err(ExtractError::Length {
            got: values.len(),
            expected: model.num_columns(),
        });
    }
    let mut x = Vec::with_capacity(values.len());
    for (c, &v) in values.iter().enumerate() {
        if v == 0.0 {
            x.push(false);
        } else if v == 1.0 {
            x.push(true);
        } else {
            return Err(ExtractError::Fractional(c, v));
        }
    }
    extract_matching_binary(model, &x)
}

pub fn extract_matching_binary(model: &IpModel, x: &[bool]) -> Result<Matching, ExtractError> {
    if x.len() != model.num_columns() {
        return Err(ExtractError::Length {
            got: x.len(),
            expected: model.num_columns(),
        });
    }
    if let Some(&k) = model.violated_rows(x).first() {
        return Err(ExtractError::Infeasible(model.constraints()[k].name()));
    }
    Ok(decode(model, x))
}

fn decode(model: &IpModel, x: &[bool]) -> Matching {
    let mut m = Matching::empty(model.n_residents());
    for v in model.variables() {
        if x[v.column] {
            m.assign(v.resident, v.hospital);
        }
    }
    m
}

/// Bound on the best completion of a partial fixing: columns fixed to one
/// count directly, the rest is a maximum capacitated matching over unfixed
/// columns of residents without a one, ignoring stability rows.
pub fn upper_bound(model: &IpModel, fixing: &[Option<bool>]) -> usize {
    assert_eq!(fixing.len(), model.num_columns(), "fixing length mismatch");
    let g = Graph::new(model);
    let mut residual: Vec<u32> = g.capacity.clone();
    let mut decided = vec![false; model.n_residents()];
    let mut ones = 0;
    for (c, f) in fixing.iter().enumerate() {
        if *f == Some(true) {
            ones += 1;
            decided[g.col_res[c]] = true;
            let h = g.col_hos[c];
            residual[h] = residual[h].saturating_sub(1);
        }
    }
    let mut bm = BoundMatching::new(model.n_residents(), model.n_hospitals());
    let open = |c: usize| fixing[c].is_none();
    bm.augment_all(&g, &residual, &|r| decided[r], &open);
    ones + bm.size
}

/// Level bound meaning "no limit"; as a worst-assignee level it stands for
/// an undersubscribed hospital.
const OPEN: u32 = u32::MAX;

/// Static adjacency derived from the model.
struct Graph {
    col_res: Vec<ResidentId>,
    col_hos: Vec<HospitalId>,
    /// Columns of each resident, best resident rank first.
    res_cols: Vec<Vec<usize>>,
    col_rank: Vec<u32>,
    /// Columns at the same hospital ranked at least as high, own included.
    col_hrank: Vec<u32>,
    hos_cols: Vec<Vec<usize>>,
    capacity: Vec<u32>,
}

impl Graph {
    fn new(model: &IpModel) -> Self {
        let n = model.num_columns();
        let mut col_res = vec![0; n];
        let mut col_hos = vec![0; n];
        let mut res_cols = vec![Vec::new(); model.n_residents()];
        let mut hos_cols = vec![Vec::new(); model.n_hospitals()];
        for v in model.variables() {
            col_res[v.column] = v.resident;
            col_hos[v.column] = v.hospital;
            res_cols[v.resident].push(v.column);
            hos_cols[v.hospital].push(v.column);
        }
        let mut capacity = vec![0u32; model.n_hospitals()];
        let mut col_rank = vec![u32::MAX; n];
        let mut col_hrank = vec![u32::MAX; n];
        for row in model.constraints() {
            match &row.kind {
                ConstraintKind::Capacity(h) => {
                    capacity[*h] = u32::try_from(row.rhs).unwrap_or(0);
                }
                ConstraintKind::Stability {
                    resident,
                    hospital,
                    resident_side,
                    hospital_side,
                    ..
                } => {
                    let c = model.column(*resident, *hospital).expect("row of a column");
                    col_rank[c] = resident_side.len() as u32;
                    col_hrank[c] = hospital_side.len() as u32;
                }
                ConstraintKind::Resident(_) => {}
            }
        }
        for cols in &mut res_cols {
            cols.sort_by_key(|&c| (col_rank[c], c));
        }
        Graph {
            col_res,
            col_hos,
            res_cols,
            col_rank,
            col_hrank,
            hos_cols,
            capacity,
        }
    }
}

/// Capacitated bipartite matching maintained by augmenting paths.
struct BoundMatching {
    res_col: Vec<Option<usize>>,
    at: Vec<Vec<ResidentId>>,
    seen: Vec<u32>,
    stamp: u32,
    size: usize,
}

impl BoundMatching {
    fn new(n1: usize, n2: usize) -> Self {
        BoundMatching {
            res_col: vec![None; n1],
            at: vec![Vec::new(); n2],
            seen: vec![0; n2],
            stamp: 0,
            size: 0,
        }
    }

    fn clear(&mut self) {
        self.res_col.fill(None);
        for list in &mut self.at {
            list.clear();
        }
        self.size = 0;
    }

    fn remove(&mut self, g: &Graph, r: ResidentId) {
        if let Some(c) = self.res_col[r].take() {
            let list = &mut self.at[g.col_hos[c]];
            let k = list.iter().position(|&x| x == r).expect("tracked");
            list.swap_remove(k);
            self.size -= 1;
        }
    }

    fn put(&mut self, g: &Graph, r: ResidentId, c: usize) {
        self.remove(g, r);
        self.res_col[r] = Some(c);
        self.at[g.col_hos[c]].push(r);
        self.size += 1;
    }

    /// Drops residents from `h` until it fits within `limit`.
    fn shrink(&mut self, g: &Graph, h: HospitalId, limit: u32) {
        while self.at[h].len() > limit as usize {
            let r = *self.at[h].last().expect("non-empty");
            self.remove(g, r);
        }
    }

    fn augment(
        &mut self,
        g: &Graph,
        residual: &[u32],
        open: &impl Fn(usize) -> bool,
        r: ResidentId,
    ) -> bool {
        for &c in &g.res_cols[r] {
            if !open(c) {
                continue;
            }
            let h = g.col_hos[c];
            if self.seen[h] == self.stamp {
                continue;
            }
            self.seen[h] = self.stamp;
            if (self.at[h].len() as u32) < residual[h] {
                self.put(g, r, c);
                return true;
            }
            for k in 0..self.at[h].len() {
                let other = self.at[h][k];
                if self.augment(g, residual, open, other) {
                    self.put(g, r, c);
                    return true;
                }
            }
        }
        false
    }

    /// Augments until maximum over residents not in `decided`.
    fn augment_all(
        &mut self,
        g: &Graph,
        residual: &[u32],
        decided: &impl Fn(ResidentId) -> bool,
        open: &impl Fn(usize) -> bool,
    ) {
        loop {
            self.stamp = self.stamp.wrapping_add(1);
            let mut progress = false;
            for r in 0..self.res_col.len() {
                if decided(r) || self.res_col[r].is_some() {
                    continue;
                }
                if self.augment(g, residual, open, r) {
                    progress = true;
                    self.stamp = self.stamp.wrapping_add(1);
                }
            }
            if !progress {
                break;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Val {
    Free,
    Zero,
    One,
}

struct Conflict;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flow {
    Continue,
    Stop,
    Done,
}

struct StabilityRow {
    resident: ResidentId,
    hospital: HospitalId,
    resident_side: Vec<usize>,
    hospital_side: Vec<usize>,
    capacity: u32,
}

struct Search<'a> {
    model: &'a IpModel,
    g: Graph,
    rows: Vec<StabilityRow>,
    /// Rows where the column is on the resident side / hospital side.
    s_rows: Vec<Vec<usize>>,
    t_rows: Vec<Vec<usize>>,
    s_open: Vec<u32>,
    s_one: Vec<u32>,
    t_open: Vec<u32>,
    t_one: Vec<u32>,

    value: Vec<Val>,
    res_one: Vec<Option<usize>>,
    hos_ones: Vec<u32>,
    residual: Vec<u32>,
    ones: usize,
    trail: Vec<usize>,
    pending: Vec<usize>,

    bm: BoundMatching,
    priority: Vec<u32>,
    /// Per hospital, the level of its worst assignee is known to lie above
    /// `lo` and at or below `cap`; `OPEN` for `cap` leaves room for the
    /// hospital being undersubscribed.
    lo: Vec<u32>,
    cap: Vec<u32>,
    level_trail: Vec<(HospitalId, u32, u32)>,
    must_match: Vec<bool>,
    must_fill: Vec<bool>,
    cover: BoundMatching,
    cover_cap: Vec<u32>,

    best: Option<Vec<bool>>,
    best_size: usize,
    threshold: i64,
    root_bound: usize,
    open_bounds: Vec<usize>,
    stop_bound: usize,
    nodes: u64,
    deadline: Instant,
    failure: Option<String>,
}

impl<'a> Search<'a> {
    fn new(model: &'a IpModel, seed: u64, deadline: Instant) -> Self {
        let g = Graph::new(model);
        let n = model.num_columns();
        let mut rows = Vec::new();
        let mut s_rows = vec![Vec::new(); n];
        let mut t_rows = vec![Vec::new(); n];
        for row in model.constraints() {
            if let ConstraintKind::Stability {
                resident,
                hospital,
                capacity,
                resident_side,
                hospital_side,
                ..
            } = &row.kind
            {
                let k = rows.len();
                for &c in resident_side {
                    s_rows[c].push(k);
                }
                for &c in hospital_side {
                    t_rows[c].push(k);
                }
                rows.push(StabilityRow {
                    resident: *resident,
                    hospital: *hospital,
                    resident_side: resident_side.clone(),
                    hospital_side: hospital_side.clone(),
                    capacity: *capacity,
                });
            }
        }
        let n_rows = rows.len();
        let s_open = rows.iter().map(|r| r.resident_side.len() as u32).collect();
        let t_open = rows.iter().map(|r| r.hospital_side.len() as u32).collect();
        let mut order: Vec<u32> = (0..model.n_residents() as u32).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut priority = vec![0u32; order.len()];
        for (p, &r) in order.iter().enumerate() {
            priority[r as usize] = p as u32;
        }
        let residual = g.capacity.clone();
        Search {
            model,
            rows,
            s_rows,
            t_rows,
            s_one: vec![0; n_rows],
            t_one: vec![0; n_rows],
            s_open,
            t_open,
            value: vec![Val::Free; n],
            res_one: vec![None; model.n_residents()],
            hos_ones: vec![0; model.n_hospitals()],
            residual,
            ones: 0,
            trail: Vec::with_capacity(n),
            pending: Vec::new(),
            bm: BoundMatching::new(model.n_residents(), model.n_hospitals()),
            priority,
            lo: vec![0; model.n_hospitals()],
            cap: vec![OPEN; model.n_hospitals()],
            level_trail: Vec::new(),
            must_match: vec![false; model.n_residents()],
            must_fill: vec![false; model.n_hospitals()],
            cover: BoundMatching::new(model.n_residents(), model.n_hospitals()),
            cover_cap: vec![0; model.n_hospitals()],
            best: None,
            best_size: 0,
            threshold: -1,
            root_bound: 0,
            open_bounds: Vec::new(),
            stop_bound: 0,
            nodes: 0,
            deadline,
            failure: None,
            g,
        }
    }

    fn fix(&mut self, c: usize, v: Val) -> Result<(), Conflict> {
        match self.value[c] {
            Val::Free => {}
            cur if cur == v => return Ok(()),
            _ => return Err(Conflict),
        }
        let (r, h) = (self.g.col_res[c], self.g.col_hos[c]);
        if v == Val::One && (self.res_one[r].is_some() || self.residual[h] == 0) {
            return Err(Conflict);
        }
        self.value[c] = v;
        self.trail.push(c);
        self.pending.push(c);
        match v {
            Val::One => {
                self.res_one[r] = Some(c);
                self.hos_ones[h] += 1;
                self.residual[h] -= 1;
                self.ones += 1;
                for &k in &self.s_rows[c] {
                    self.s_open[k] -= 1;
                    self.s_one[k] += 1;
                }
                for &k in &self.t_rows[c] {
                    self.t_open[k] -= 1;
                    self.t_one[k] += 1;
                }
                self.bm.remove(&self.g, r);
                self.bm.shrink(&self.g, h, self.residual[h]);
            }
            Val::Zero => {
                for &k in &self.s_rows[c] {
                    self.s_open[k] -= 1;
                }
                for &k in &self.t_rows[c] {
                    self.t_open[k] -= 1;
                }
                if self.bm.res_col[r] == Some(c) {
                    self.bm.remove(&self.g, r);
                }
            }
            Val::Free => unreachable!(),
        }
        Ok(())
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let c = self.trail.pop().expect("above mark");
            let (r, h) = (self.g.col_res[c], self.g.col_hos[c]);
            match self.value[c] {
                Val::One => {
                    self.res_one[r] = None;
                    self.hos_ones[h] -= 1;
                    self.residual[h] += 1;
                    self.ones -= 1;
                    for &k in &self.s_rows[c] {
                        self.s_open[k] += 1;
                        self.s_one[k] -= 1;
                    }
                    for &k in &self.t_rows[c] {
                        self.t_open[k] += 1;
                        self.t_one[k] -= 1;
                    }
                }
                Val::Zero => {
                    for &k in &self.s_rows[c] {
                        self.s_open[k] += 1;
                    }
                    for &k in &self.t_rows[c] {
                        self.t_open[k] += 1;
                    }
                }
                Val::Free => unreachable!(),
            }
            self.value[c] = Val::Free;
        }
        self.pending.clear();
    }

    fn check_row(&mut self, k: usize) -> Result<(), Conflict> {
        let cap = self.rows[k].capacity;
        if self.s_one[k] > 0 || self.t_one[k] >= cap {
            return Ok(());
        }
        let reachable = self.t_one[k] + self.t_open[k];
        if self.s_open[k] == 0 {
            if reachable < cap {
                return Err(Conflict);
            }
            if reachable == cap {
                for i in 0..self.rows[k].hospital_side.len() {
                    let c = self.rows[k].hospital_side[i];
                    if self.value[c] == Val::Free {
                        self.fix(c, Val::One)?;
                    }
                }
            }
        } else if reachable < cap {
            // the resident must take a column on its side of the row; the
            // side is a prefix of its rank-sorted columns
            let r = self.rows[k].resident;
            let keep = self.rows[k].resident_side.len();
            for i in keep..self.g.res_cols[r].len() {
                let c = self.g.res_cols[r][i];
                if self.value[c] == Val::Free {
                    self.fix(c, Val::Zero)?;
                }
            }
            if self.s_open[k] == 1 {
                let c = *self.rows[k]
                    .resident_side
                    .iter()
                    .find(|&&c| self.value[c] == Val::Free)
                    .expect("one open column");
                self.fix(c, Val::One)?;
            }
        }
        Ok(())
    }

    /// With no slack between bound and target, an improving solution is a
    /// maximum matching of the open columns: columns in no maximum matching
    /// are fixed to zero, columns in every maximum matching to one. Uses the
    /// strongly connected components of the residual flow network.
    fn filter_tight(&mut self) -> Result<bool, Conflict> {
        let n1 = self.model.n_residents();
        let n2 = self.model.n_hospitals();
        let (src, sink) = (n1 + n2, n1 + n2 + 1);
        let n = n1 + n2 + 2;
        let mut edges: Vec<(u32, u32)> = Vec::new();
        for r in 0..n1 {
            if self.res_one[r].is_some() {
                continue;
            }
            match self.bm.res_col[r] {
                None => edges.push((src as u32, r as u32)),
                Some(_) => edges.push((r as u32, src as u32)),
            }
            for &c in &self.g.res_cols[r] {
                if self.value[c] != Val::Free {
                    continue;
                }
                let h = (n1 + self.g.col_hos[c]) as u32;
                if self.bm.res_col[r] == Some(c) {
                    edges.push((h, r as u32));
                } else {
                    edges.push((r as u32, h));
                }
            }
        }
        for h in 0..n2 {
            let load = self.bm.at[h].len() as u32;
            if load < self.residual[h] {
                edges.push(((n1 + h) as u32, sink as u32));
            }
            if load > 0 {
                edges.push((sink as u32, (n1 + h) as u32));
            }
        }
        let comp = strongly_connected(n, &edges);

        let mut zeros = Vec::new();
        let mut ones = Vec::new();
        for r in 0..n1 {
            if self.res_one[r].is_some() {
                continue;
            }
            for &c in &self.g.res_cols[r] {
                if self.value[c] != Val::Free {
                    continue;
                }
                if comp[r] == comp[n1 + self.g.col_hos[c]] {
                    continue;
                }
                if self.bm.res_col[r] == Some(c) {
                    ones.push(c);
                } else {
                    zeros.push(c);
                }
            }
        }
        let changed = !zeros.is_empty() || !ones.is_empty();
        for c in zeros {
            self.fix(c, Val::Zero)?;
        }
        for c in ones {
            self.fix(c, Val::One)?;
        }
        Ok(changed)
    }

    fn propagate(&mut self) -> Result<(), Conflict> {
        while let Some(c) = self.pending.pop() {
            let (r, h) = (self.g.col_res[c], self.g.col_hos[c]);
            match self.value[c] {
                Val::One => {
                    for i in 0..self.g.res_cols[r].len() {
                        let o = self.g.res_cols[r][i];
                        if o != c && self.value[o] == Val::Free {
                            self.fix(o, Val::Zero)?;
                        }
                    }
                    if self.residual[h] == 0 {
                        for i in 0..self.g.hos_cols[h].len() {
                            let o = self.g.hos_cols[h][i];
                            if self.value[o] == Val::Free {
                                self.fix(o, Val::Zero)?;
                            }
                        }
                    }
                }
                Val::Zero => {
                    for i in 0..self.s_rows[c].len() {
                        let k = self.s_rows[c][i];
                        self.check_row(k)?;
                    }
                    for i in 0..self.t_rows[c].len() {
                        let k = self.t_rows[c][i];
                        self.check_row(k)?;
                    }
                }
                Val::Free => unreachable!(),
            }
        }
        Ok(())
    }

    fn root_propagate(&mut self) -> Result<(), Conflict> {
        for h in 0..self.model.n_hospitals() {
            if self.residual[h] == 0 {
                for i in 0..self.g.hos_cols[h].len() {
                    let c = self.g.hos_cols[h][i];
                    self.fix(c, Val::Zero)?;
                }
            }
        }
        self.propagate()?;
        for k in 0..self.rows.len() {
            self.check_row(k)?;
            self.propagate()?;
        }
        Ok(())
    }

    fn bound(&mut self) -> usize {
        let value = &self.value;
        let res_one = &self.res_one;
        self.bm.augment_all(
            &self.g,
            &self.residual,
            &|r| res_one[r].is_some(),
            &|c| value[c] == Val::Free,
        );
        self.ones + self.bm.size
    }

    /// Whether the residents that stability forces to be matched, and the
    /// hospitals it forces to be full, can be covered. A matching covering
    /// both sets exists exactly when each set can be covered on its own.
    fn coverable(&mut self) -> bool {
        self.must_match.fill(false);
        self.must_fill.fill(false);
        for k in 0..self.rows.len() {
            if self.s_one[k] > 0 || self.res_one[self.rows[k].resident].is_some() {
                continue;
            }
            if self.t_one[k] + self.t_open[k] < self.rows[k].capacity {
                self.must_match[self.rows[k].resident] = true;
            }
            if self.s_open[k] == 0 {
                self.must_fill[self.rows[k].hospital] = true;
            }
        }
        for h in 0..self.lo.len() {
            if self.cap[h] != OPEN {
                self.must_fill[h] = true;
            }
            if self.lo[h] == 0 {
                continue;
            }
            for &c in &self.g.hos_cols[h] {
                let r = self.g.col_res[c];
                if self.g.col_hrank[c] <= self.lo[h] && self.res_one[r].is_none() {
                    self.must_match[r] = true;
                }
            }
        }
        let value = &self.value;
        let res_one = &self.res_one;
        let open = |c: usize| value[c] == Val::Free;

        let n1 = self.must_match.len();
        let wanted = self.must_match.iter().filter(|&&m| m).count();
        self.cover.clear();
        let must = &self.must_match;
        self.cover
            .augment_all(&self.g, &self.residual, &|r| !must[r], &open);
        if self.cover.size < wanted {
            return false;
        }

        let mut need = 0;
        for h in 0..self.cover_cap.len() {
            self.cover_cap[h] = if self.must_fill[h] { self.residual[h] } else { 0 };
            need += self.cover_cap[h] as usize;
        }
        if need == 0 {
            return true;
        }
        self.cover.clear();
        self.cover.augment_all(
            &self.g,
            &self.cover_cap,
            &|r| r >= n1 || res_one[r].is_some(),
            &open,
        );
        self.cover.size >= need
    }

    /// Best open column of the highest-priority undecided resident whose best
    /// open column has the smallest rank.
    fn pick_branch(&self) -> Option<usize> {
        let mut best: Option<(u32, u32, usize)> = None;
        for r in 0..self.model.n_residents() {
            if self.res_one[r].is_some() {
                continue;
            }
            let Some(&c) = self.g.res_cols[r]
                .iter()
                .find(|&&c| self.value[c] == Val::Free)
            else {
                continue;
            };
            let key = (self.g.col_rank[c], self.priority[r], c);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
        best.map(|(_, _, c)| c)
    }

    /// Levels still possible for the worst assignee of `h`, best first;
    /// `OPEN` stands for the hospital being undersubscribed.
    fn candidate_levels(&self, h: HospitalId, out: &mut Vec<u32>) {
        out.clear();
        for &c in &self.g.hos_cols[h] {
            let l = self.g.col_hrank[c];
            if self.value[c] != Val::Zero && l > self.lo[h] && l <= self.cap[h] {
                out.push(l);
            }
        }
        if self.cap[h] == OPEN {
            out.push(OPEN);
        }
        out.sort_unstable();
        out.dedup();
    }

    fn set_levels(&mut self, h: HospitalId, lo: u32, cap: u32) {
        self.level_trail.push((h, self.lo[h], self.cap[h]));
        self.lo[h] = lo;
        self.cap[h] = cap;
    }

    fn undo_levels(&mut self, mark: usize) {
        while self.level_trail.len() > mark {
            let (h, lo, cap) = self.level_trail.pop().expect("above mark");
            self.lo[h] = lo;
            self.cap[h] = cap;
        }
    }

    /// Applies the consequences of hospitals whose worst-assignee level is
    /// down to a single candidate. Returns whether anything changed.
    fn settle(&mut self) -> Result<bool, Conflict> {
        let mut changed = false;
        let mut levels = Vec::new();
        for h in 0..self.lo.len() {
            if self.g.capacity[h] == 0 {
                // never blocks and never takes anyone
                continue;
            }
            self.candidate_levels(h, &mut levels);
            match levels[..] {
                [] => return Err(Conflict),
                [OPEN] if self.lo[h] != OPEN => {
                    self.set_levels(h, OPEN, OPEN);
                    self.beat_level(h, OPEN)?;
                    changed = true;
                }
                [l] if l != OPEN && self.lo[h] + 1 < l => {
                    self.set_levels(h, l - 1, self.cap[h]);
                    self.beat_level(h, l - 1)?;
                    changed = true;
                }
                _ => {}
            }
        }
        Ok(changed)
    }

    /// Level of the worst assignee of `h` in the incumbent, `OPEN` when it
    /// leaves `h` undersubscribed.
    fn incumbent_level(&self, h: HospitalId) -> u32 {
        let Some(x) = &self.best else { return OPEN };
        let mut load = 0;
        let mut worst = 0;
        for &c in &self.g.hos_cols[h] {
            if x[c] {
                load += 1;
                worst = worst.max(self.g.col_hrank[c]);
            }
        }
        if load < self.g.capacity[h] {
            OPEN
        } else {
            worst
        }
    }

    /// Hospital and level splitting the candidates for its worst assignee,
    /// plus whether the incumbent lies on the capped side. Picks the
    /// hospital with the most open columns among those still undetermined.
    fn pick_split(&self) -> Option<(HospitalId, u32, bool)> {
        let mut best: Option<(usize, HospitalId, u32)> = None;
        let mut levels = Vec::new();
        for h in 0..self.lo.len() {
            if self.g.capacity[h] == 0 {
                continue;
            }
            self.candidate_levels(h, &mut levels);
            if levels.len() < 2 {
                continue;
            }
            let open = self.g.hos_cols[h]
                .iter()
                .filter(|&&c| self.value[c] == Val::Free)
                .count();
            let g = levels[(levels.len() - 1) / 2];
            if best.is_none_or(|b| open > b.0) {
                best = Some((open, h, g));
            }
        }
        best.map(|(_, h, g)| (h, g, self.incumbent_level(h) <= g))
    }

    /// Nobody below `level` is assigned to `h`.
    fn cap_level(&mut self, h: HospitalId, level: u32) -> Result<(), Conflict> {
        for i in 0..self.g.hos_cols[h].len() {
            let c = self.g.hos_cols[h][i];
            if self.g.col_hrank[c] > level {
                self.fix(c, Val::Zero)?;
            }
        }
        Ok(())
    }

    /// The worst assignee of `h` ranks below `level`, or `h` has room, so
    /// every resident at or above `level` must hold a post it likes at least
    /// as much as `h`.
    fn beat_level(&mut self, h: HospitalId, level: u32) -> Result<(), Conflict> {
        for i in 0..self.g.hos_cols[h].len() {
            let c = self.g.hos_cols[h][i];
            if self.g.col_hrank[c] > level {
                continue;
            }
            let r = self.g.col_res[c];
            for j in 0..self.g.res_cols[r].len() {
                let d = self.g.res_cols[r][j];
                if self.g.col_rank[d] > self.g.col_rank[c] {
                    self.fix(d, Val::Zero)?;
                }
            }
        }
        Ok(())
    }

    fn record_leaf(&mut self, observer: &mut dyn FnMut(&[bool])) {
        let x: Vec<bool> = self.value.iter().map(|&v| v == Val::One).collect();
        if let Some(&k) = self.model.violated_rows(&x).first() {
            self.failure = Some(format!(
                "search leaf violates row {}",
                self.model.constraints()[k].name()
            ));
            return;
        }
        observer(&x);
        let size = self.model.objective(&x);
        if self.best.is_none() || size > self.best_size {
            self.best_size = size;
            self.best = Some(x);
            self.threshold = self.threshold.max(size as i64);
        }
    }

    fn dfs(&mut self, observer: &mut dyn FnMut(&[bool])) -> Flow {
        let mark = self.level_trail.len();
        let flow = self.node(observer);
        self.undo_levels(mark);
        flow
    }

    fn node(&mut self, observer: &mut dyn FnMut(&[bool])) -> Flow {
        self.nodes += 1;
        if self.nodes.is_multiple_of(32) && Instant::now() >= self.deadline {
            self.stop_bound = self.open_bounds.iter().copied().max().unwrap_or(0);
            return Flow::Stop;
        }
        let bound = loop {
            let bound = self.bound();
            if (bound as i64) <= self.threshold || !self.coverable() {
                return Flow::Continue;
            }
            if bound as i64 == self.threshold + 1 {
                match self.filter_tight() {
                    Err(Conflict) => return Flow::Continue,
                    Ok(true) => {
                        if self.propagate().is_err() {
                            return Flow::Continue;
                        }
                        continue;
                    }
                    Ok(false) => {}
                }
            }
            match self.settle() {
                Err(Conflict) => return Flow::Continue,
                Ok(true) => {
                    if self.propagate().is_err() {
                        return Flow::Continue;
                    }
                    continue;
                }
                Ok(false) => {}
            }
            break bound;
        };
        if let Some((h, level, capped_first)) = self.pick_split() {
            self.open_bounds.push(bound);
            for capped in [capped_first, !capped_first] {
                if (bound as i64) <= self.threshold {
                    break;
                }
                let mark = self.trail.len();
                let level_mark = self.level_trail.len();
                let ok = if capped {
                    self.set_levels(h, self.lo[h], level);
                    self.cap_level(h, level)
                } else {
                    self.set_levels(h, level, self.cap[h]);
                    self.beat_level(h, level)
                };
                let ok = ok.is_ok() && self.propagate().is_ok();
                let flow = if ok { self.dfs(observer) } else { Flow::Continue };
                self.undo(mark);
                self.undo_levels(level_mark);
                if flow != Flow::Continue {
                    self.open_bounds.pop();
                    return flow;
                }
            }
            self.open_bounds.pop();
            return Flow::Continue;
        }
        let Some(c) = self.pick_branch() else {
            self.record_leaf(observer);
            if self.failure.is_some() {
                return Flow::Stop;
            }
            return if self.best.is_some() && self.best_size >= self.root_bound {
                Flow::Done
            } else {
                Flow::Continue
            };
        };
        self.open_bounds.push(bound);
        for v in [Val::One, Val::Zero] {
            if (bound as i64) <= self.threshold {
                break;
            }
            let mark = self.trail.len();
            let ok = self.fix(c, v).is_ok() && self.propagate().is_ok();
            let flow = if ok { self.dfs(observer) } else { Flow::Continue };
            self.undo(mark);
            if flow != Flow::Continue {
                self.open_bounds.pop();
                return flow;
            }
        }
        self.open_bounds.pop();
        Flow::Continue
    }
}

/// Component id per node (Tarjan, iterative).
fn strongly_connected(n: usize, edges: &[(u32, u32)]) -> Vec<u32> {
    let mut start = vec![0u32; n + 1];
    for &(u, _) in edges {
        start[u as usize + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut adj = vec![0u32; edges.len()];
    for &(u, v) in edges {
        adj[fill[u as usize] as usize] = v;
        fill[u as usize] += 1;
    }

    const UNSEEN: u32 = u32::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0u32; n];
    let mut comp = vec![UNSEEN; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut call: Vec<(u32, u32)> = Vec::new();
    let mut next_index = 0u32;
    let mut next_comp = 0u32;
    for root in 0..n as u32 {
        if index[root as usize] != UNSEEN {
            continue;
        }
        call.push((root, start[root as usize]));
        index[root as usize] = next_index;
        low[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let vu = v as usize;
            if *pos < start[vu + 1] {
                let w = adj[*pos as usize];
                *pos += 1;
                let wu = w as usize;
                if index[wu] == UNSEEN {
                    index[wu] = next_index;
                    low[wu] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[wu] = true;
                    call.push((w, start[wu]));
                } else if on_stack[wu] {
                    low[vu] = low[vu].min(index[wu]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent as usize] = low[parent as usize].min(low[vu]);
            }
            if low[vu] == index[vu] {
                loop {
                    let w = stack.pop().expect("on stack");
                    on_stack[w as usize] = false;
                    comp[w as usize] = next_comp;
                    if w == v {
                        break;
                    }
                }
                next_comp += 1;
            }
        }
    }
    comp
}

pub fn solve(model: &IpModel, options: &SolveOptions) -> Result<SolveOutcome, SolveError> {
    solve_observed(model, options, &mut |_| {})
}

/// Like [`solve`]; `observer` sees every feasible vector the search accepts,
/// including the initial one.
pub fn solve_observed(
    model: &IpModel,
    options: &SolveOptions,
    observer: &mut dyn FnMut(&[bool]),
) -> Result<SolveOutcome, SolveError> {
    if options.time_limit.is_zero() {
        return Err(SolveError::InvalidTimeLimit);
    }
    let start = Instant::now();
    let mut search = Search::new(model, options.seed, start + options.time_limit);

    if let Some(m) = &options.initial {
        let mut x = vec![false; model.num_columns()];
        for (r, h) in m.pairs() {
            let c = model
                .column(r, h)
                .ok_or(SolveError::InitialNotInModel(r, h))?;
            x[c] = true;
        }
        if let Some(&k) = model.violated_rows(&x).first() {
            return Err(SolveError::InitialInfeasible(
                model.constraints()[k].name(),
            ));
        }
        observer(&x);
        search.best_size = model.objective(&x);
        search.threshold = search.best_size as i64;
        search.best = Some(x);
    }
    if let Some(lb) = options.lower_bound {
        search.threshold = search.threshold.max(lb as i64 - 1);
    }

    let status = if search.root_propagate().is_err() {
        return Err(SolveError::Internal(
            "root propagation found the model infeasible".into(),
        ));
    } else {
        search.root_bound = search.bound();
        if search.best.is_some() && search.best_size >= search.root_bound {
            SolveStatus::Optimal
        } else {
            match search.dfs(observer) {
                Flow::Continue | Flow::Done => SolveStatus::Optimal,
                Flow::Stop => SolveStatus::FeasibleTimeout,
            }
        }
    };
    if let Some(msg) = search.failure.take() {
        return Err(SolveError::Internal(msg));
    }

    let Some(x) = search.best.take() else {
        return match options.lower_bound {
            Some(lb) if status == SolveStatus::Optimal => {
                Err(SolveError::LowerBoundUnattainable(lb))
            }
            _ if status == SolveStatus::Optimal => Err(SolveError::Internal(
                "search finished without a feasible solution".into(),
            )),
            _ => Err(SolveError::Internal(
                "time limit reached before any feasible solution; supply an initial matching"
                    .into(),
            )),
        };
    };
    let objective = model.objective(&x);
    let proof_bound = match status {
        SolveStatus::Optimal => objective,
        SolveStatus::FeasibleTimeout => search.stop_bound.max(objective),
    };
    Ok(SolveOutcome {
        status,
        matching: decode(model, &x),
        solution: x,
        objective,
        nodes: search.nodes,
        wall_time: start.elapsed(),
        proof_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::{figure1, m1};
    use crate::instance::{is_stable, Hospital, Instance, PreferenceList};
    use crate::model::build_model;

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
    fn figure1_optimal_six() {
        let inst = figure1();
        let model = build_model(&inst, &inst.ranks());
        let out = solve(&model, &SolveOptions::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert_eq!(out.objective, 6);
        assert_eq!(out.proof_bound, 6);
        assert!(is_stable(&inst, &inst.ranks(), &out.matching));
    }

    #[test]
    fn single_pair_optimal_one() {
        let inst = single();
        let model = build_model(&inst, &inst.ranks());
        let out = solve(&model, &SolveOptions::default()).unwrap();
        assert_eq!((out.status, out.objective), (SolveStatus::Optimal, 1));
    }

    #[test]
    fn extract_examples() {
        let inst = figure1();
        let model = build_model(&inst, &inst.ranks());
        let x = model.indicator(&m1()).unwrap();
        let values: Vec<f64> = x.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let m = extract_matching(&model, &values).unwrap();
        assert_eq!(m, m1());
        assert_eq!(model.indicator(&m).unwrap(), x);

        let single = single();
        let sm = build_model(&single, &single.ranks());
        assert!(matches!(
            extract_matching(&sm, &[0.0]),
            Err(ExtractError::Infeasible(_))
        ));
        assert!(matches!(
            extract_matching(&sm, &[0.5]),
            Err(ExtractError::Fractional(0, _))
        ));
    }

    #[test]
    fn bound_examples() {
        let inst = figure1();
        let model = build_model(&inst, &inst.ranks());
        let n = model.num_columns();
        assert_eq!(upper_bound(&model, &vec![None; n]), 6);
        let x = model.indicator(&m1()).unwrap();
        let fixed: Vec<_> = x.iter().map(|&b| Some(b)).collect();
        assert_eq!(upper_bound(&model, &fixed), 6);
        let mut f = vec![None; n];
        f[model.column(0, 0).unwrap()] = Some(false);
        f[model.column(0, 1).unwrap()] = Some(false);
        assert!(upper_bound(&model, &f) <= 5);
    }

    #[test]
    fn initial_solution_is_checked() {
        let inst = figure1();
        let model = build_model(&inst, &inst.ranks());
        let opts = SolveOptions {
            initial: Some(Matching::empty(6)),
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve(&model, &opts),
            Err(SolveError::InitialInfeasible(_))
        ));
        let opts = SolveOptions {
            initial: Some(Matching::from_pairs(6, [(1, 2)]).unwrap()),
            ..SolveOptions::default()
        };
        assert_eq!(
            solve(&model, &opts).unwrap_err(),
            SolveError::InitialNotInModel(1, 2)
        );
        let opts = SolveOptions {
            time_limit: Duration::ZERO,
            ..SolveOptions::default()
        };
        assert_eq!(solve(&model, &opts).unwrap_err(), SolveError::InvalidTimeLimit);
    }

    #[test]
    fn warm_start_at_optimum_skips_search() {
        let inst = figure1();
        let model = build_model(&inst, &inst.ranks());
        let opts = SolveOptions {
            initial: Some(m1()),
            ..SolveOptions::default()
        };
        let out = solve(&model, &opts).unwrap();
        assert_eq!(out.objective, 6);
        assert_eq!(out.nodes, 0);
    }

    #[test]
    fn unattainable_lower_bound() {
        let inst = figure1();
        let model = build_model(&inst, &inst.ranks());
        let opts = SolveOptions {
            lower_bound: Some(7),
            ..SolveOptions::default()
        };
        assert_eq!(
            solve(&model, &opts).unwrap_err(),
            SolveError::LowerBoundUnattainable(7)
        );
    }
}
