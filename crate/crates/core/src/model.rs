//! The binary program for maximum weakly stable matchings.
//!
//! One 0/1 column `x(r,h)` per acceptable pair; maximize the number of ones
//! subject to
//!
//! * `sum_h x(r,h) <= 1` for every resident,
//! * `sum_r x(r,h) <= c_h` for every hospital,
//! * for every acceptable pair `(r,h)`:
//!   `c_h * (1 - sum_{q in S} x(r,q)) - sum_{p in T} x(p,h) <= 0`, where `S`
//!   holds the hospitals `r` ranks no worse than `h` and `T` the residents
//!   `h` ranks no worse than `r`.
//!
//! The last family is stored folded, with the constant moved to the right
//! hand side, so every row reads `terms <= rhs` with integer coefficients.

use std::fmt::Write as _;

use crate::instance::{HospitalId, Instance, Matching, RankTable, ResidentId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IpVariable {
    pub resident: ResidentId,
    pub hospital: HospitalId,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintKind {
    Resident(ResidentId),
    Capacity(HospitalId),
    /// Stability row of the pair `(resident, hospital)`; keeps the unfolded
    /// column sets alongside the folded coefficients.
    Stability {
        resident: ResidentId,
        hospital: HospitalId,
        capacity: u32,
        /// `x(r,q)` for hospitals `q` that `r` ranks no worse than `h`.
        resident_side: Vec<usize>,
        /// `x(p,h)` for residents `p` that `h` ranks no worse than `r`.
        hospital_side: Vec<usize>,
    },
}

/// `sum(coef * x[col]) <= rhs`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, i64)>,
    pub rhs: i64,
    pub kind: ConstraintKind,
}

impl LinearConstraint {
    pub fn lhs(&self, x: &[bool]) -> i64 {
        self.terms
            .iter()
            .filter(|(c, _)| x[*c])
            .map(|(_, a)| *a)
            .sum()
    }

    pub fn is_satisfied(&self, x: &[bool]) -> bool {
        self.lhs(x) <= self.rhs
    }

    pub fn name(&self) -> String {
        match &self.kind {
            ConstraintKind::Resident(r) => format!("res_{}", r + 1),
            ConstraintKind::Capacity(h) => format!("cap_{}", h + 1),
            ConstraintKind::Stability {
                resident, hospital, ..
            } => format!("stab_{}_{}", resident + 1, hospital + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpModel {
    n_residents: usize,
    n_hospitals: usize,
    variables: Vec<IpVariable>,
    column_of: Vec<Option<usize>>,
    constraints: Vec<LinearConstraint>,
}

impl IpModel {
    pub fn n_residents(&self) -> usize {
        self.n_residents
    }

    pub fn n_hospitals(&self) -> usize {
        self.n_hospitals
    }

    pub fn variables(&self) -> &[IpVariable] {
        &self.variables
    }

    pub fn num_columns(&self) -> usize {
        self.variables.len()
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn column(&self, r: ResidentId, h: HospitalId) -> Option<usize> {
        if r >= self.n_residents || h >= self.n_hospitals {
            return None;
        }
        self.column_of[r * self.n_hospitals + h]
    }

    /// The objective: number of columns set to one.
    pub fn objective(&self, x: &[bool]) -> usize {
        x.iter().filter(|&&v| v).count()
    }

    /// Indices of rows violated by `x`.
    pub fn violated_rows(&self, x: &[bool]) -> Vec<usize> {
        assert_eq!(x.len(), self.num_columns(), "vector length mismatch");
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_satisfied(x))
            .map(|(k, _)| k)
            .collect()
    }

    pub fn is_feasible(&self, x: &[bool]) -> bool {
        x.len() == self.num_columns() && self.constraints.iter().all(|c| c.is_satisfied(x))
    }

    /// Indicator vector of `m`, or `None` if it uses a pair with no column.
    pub fn indicator(&self, m: &Matching) -> Option<Vec<bool>> {
        let mut x = vec![false; self.num_columns()];
        for (r, h) in m.pairs() {
            x[self.column(r, h)?] = true;
        }
        Some(x)
    }
}

/// Builds the model over the acceptable pairs of `inst`.
pub fn build_model(inst: &Instance, ranks: &RankTable) -> IpModel {
    let (n1, n2) = (inst.n_residents(), inst.n_hospitals());
    let mut variables = Vec::with_capacity(inst.num_pairs());
    let mut column_of = vec![None; n1 * n2];
    for r in 0..n1 {
        let mut hs: Vec<HospitalId> = inst.resident_prefs(r).iter().collect();
        hs.sort_unstable();
        for h in hs {
            column_of[r * n2 + h] = Some(variables.len());
            variables.push(IpVariable {
                resident: r,
                hospital: h,
                column: variables.len(),
            });
        }
    }
    let col = |r: usize, h: usize| column_of[r * n2 + h].expect("acceptable pair");

    let mut constraints = Vec::with_capacity(n1 + n2 + variables.len());
    for r in 0..n1 {
        let mut terms: Vec<(usize, i64)> =
            inst.resident_prefs(r).iter().map(|h| (col(r, h), 1)).collect();
        terms.sort_unstable();
        constraints.push(LinearConstraint {
            terms,
            rhs: 1,
            kind: ConstraintKind::Resident(r),
        });
    }
    for h in 0..n2 {
        let mut terms: Vec<(usize, i64)> = inst
            .hospital(h)
            .prefs
            .iter()
            .map(|r| (col(r, h), 1))
            .collect();
        terms.sort_unstable();
        constraints.push(LinearConstraint {
            terms,
            rhs: i64::from(inst.capacity(h)),
            kind: ConstraintKind::Capacity(h),
        });
    }
    for v in &variables {
        let (r, h) = (v.resident, v.hospital);
        let capacity = inst.capacity(h);
        let own = ranks.resident_rank(r, h);
        let mut resident_side: Vec<usize> = inst
            .resident_prefs(r)
            .iter()
            .filter(|&q| ranks.resident_rank(r, q) <= own)
            .map(|q| col(r, q))
            .collect();
        resident_side.sort_unstable();
        let theirs = ranks.hospital_rank(h, r);
        let mut hospital_side: Vec<usize> = inst
            .hospital(h)
            .prefs
            .iter()
            .filter(|&p| ranks.hospital_rank(h, p) <= theirs)
            .map(|p| col(p, h))
            .collect();
        hospital_side.sort_unstable();
        // c(1 - sum S) - sum T <= 0   <=>   -c sum S - sum T <= -c
        let c = i64::from(capacity);
        let mut coef = std::collections::BTreeMap::<usize, i64>::new();
        for &q in &resident_side {
            *coef.entry(q).or_default() -= c;
        }
        for &p in &hospital_side {
            *coef.entry(p).or_default() -= 1;
        }
        constraints.push(LinearConstraint {
            terms: coef.into_iter().filter(|&(_, a)| a != 0).collect(),
            rhs: -c,
            kind: ConstraintKind::Stability {
                resident: r,
                hospital: h,
                capacity,
                resident_side,
                hospital_side,
            },
        });
    }

    IpModel {
        n_residents: n1,
        n_hospitals: n2,
        variables,
        column_of,
        constraints,
    }
}

const TERMS_PER_LINE: usize = 8;

fn var_name(v: &IpVariable) -> String {
    format!("x_{}_{}", v.resident + 1, v.hospital + 1)
}

fn write_terms(out: &mut String, model: &IpModel, terms: &[(usize, i64)]) {
    for (k, &(col, a)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let name = var_name(&model.variables[col]);
        let sign = if a < 0 { "-" } else { "+" };
        let mag = a.unsigned_abs();
        if k == 0 {
            if a < 0 {
                out.push_str(" -");
            }
        } else {
            let _ = write!(out, " {sign}");
        }
        if mag == 1 {
            let _ = write!(out, " {name}");
        } else {
            let _ = write!(out, " {mag} {name}");
        }
    }
}

/// Writes the model in CPLEX LP file format.
pub fn export_lp(model: &IpModel) -> String {
    let mut out = String::new();
    out.push_str("\\ maximum weakly stable matching, HR with ties\n");
    out.push_str("Maximize\n obj:");
    let obj: Vec<(usize, i64)> = (0..model.num_columns()).map(|c| (c, 1)).collect();
    write_terms(&mut out, model, &obj);
    out.push_str("\nSubject To\n");
    for row in &model.constraints {
        if row.terms.is_empty() {
            // nothing to constrain: 0 <= rhs holds for every row we build
            let _ = writeln!(out, "\\ {}: empty row", row.name());
            continue;
        }
        let _ = write!(out, " {}:", row.name());
        write_terms(&mut out, model, &row.terms);
        let _ = writeln!(out, " <= {}", row.rhs);
    }
    out.push_str("Binary\n");
    for v in &model.variables {
        let _ = writeln!(out, " {}", var_name(v));
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::{figure1, m1};
    use crate::instance::{Hospital, PreferenceList};

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

    fn count(model: &IpModel, f: impl Fn(&ConstraintKind) -> bool) -> usize {
        model.constraints().iter().filter(|c| f(&c.kind)).count()
    }

    #[test]
    fn figure1_shape() {
        let inst = figure1();
        let model = build_model(&inst, &inst.ranks());
        assert_eq!(model.num_columns(), 10);
        assert_eq!(model.constraints().len(), 19);
        assert_eq!(count(&model, |k| matches!(k, ConstraintKind::Resident(_))), 6);
        assert_eq!(count(&model, |k| matches!(k, ConstraintKind::Capacity(_))), 3);
        assert_eq!(
            count(&model, |k| matches!(k, ConstraintKind::Stability { .. })),
            10
        );
    }

    #[test]
    fn stability_sets_for_r4_h2() {
        let inst = figure1();
        let model = build_model(&inst, &inst.ranks());
        let row = model
            .constraints()
            .iter()
            .find(|c| c.name() == "stab_4_2")
            .unwrap();
        let ConstraintKind::Stability {
            resident_side,
            hospital_side,
            ..
        } = &row.kind
        else {
            unreachable!()
        };
        let names = |cols: &[usize]| -> Vec<(usize, usize)> {
            cols.iter()
                .map(|&c| (model.variables()[c].resident, model.variables()[c].hospital))
                .collect()
        };
        assert_eq!(names(resident_side), vec![(3, 1)]);
        let mut t = names(hospital_side);
        t.sort();
        assert_eq!(t, vec![(0, 1), (3, 1), (4, 1), (5, 1)]);
    }

    #[test]
    fn single_pair_forces_match() {
        let inst = single();
        let model = build_model(&inst, &inst.ranks());
        assert_eq!(model.num_columns(), 1);
        assert!(!model.is_feasible(&[false]));
        assert!(model.is_feasible(&[true]));
        let lp = export_lp(&model);
        assert!(lp.contains("\n stab_1_1: - 2 x_1_1 <= -1\n"), "{lp}");
        assert!(lp.contains("\n res_1: x_1_1 <= 1\n"));
        assert!(lp.contains("\n cap_1: x_1_1 <= 1\n"));
        assert!(lp.ends_with("Binary\n x_1_1\nEnd\n"));
    }

    #[test]
    fn figure1_lp_counts() {
        let inst = figure1();
        let lp = export_lp(&build_model(&inst, &inst.ranks()));
        let rows = lp.lines().filter(|l| l.contains(" <= ")).count();
        assert_eq!(rows, 19);
        let bin = lp.split("Binary\n").nth(1).unwrap();
        assert_eq!(bin.lines().filter(|l| l.starts_with(" x_")).count(), 10);
    }

    #[test]
    fn indicator_of_stable_matching_is_feasible() {
        let inst = figure1();
        let model = build_model(&inst, &inst.ranks());
        let x = model.indicator(&m1()).unwrap();
        assert!(model.is_feasible(&x));
        assert_eq!(model.objective(&x), 6);
        assert!(!model.violated_rows(&[false; 10]).is_empty());
    }
}
