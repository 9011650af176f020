//! Maximum-cardinality weakly stable matchings for the Hospitals/Residents
//! problem with Ties.
//!
//! The crate builds the 0-1 program whose feasible points are exactly the
//! weakly stable matchings of an instance, shrinks instances with ties on
//! the hospital side before modelling them, and solves the program with a
//! branch-and-bound search warm-started from a tie-broken deferred
//! acceptance run. A brute-force enumerator of all stable matchings serves
//! as ground truth on small instances.

pub mod generator;
pub mod heuristics;
pub mod instance;
pub mod io;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod preprocess;
pub mod solver;

pub use instance::{
    blocking_pairs, blocking_pairs_by_threshold, is_blocking_pair, is_stable, matching_size,
    validate_matching, Hospital, HospitalId, Instance, Matching, PreferenceList, RankTable,
    ResidentId, Violation,
};
pub use model::{build_model, export_lp, IpModel};
pub use solver::{solve, SolveOptions, SolveOutcome, SolveStatus};
