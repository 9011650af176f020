//! End-to-end solve: reduce, warm start, build, search, decode, and check
//! the answer against the original instance.

use std::collections::BTreeSet;
use std::time::Duration;

use thiserror::Error;

use crate::heuristics::warm_start;
use crate::instance::{
    blocking_pairs, validate_matching, HospitalId, Instance, ResidentId,
};
use crate::model::{build_model, IpModel};
use crate::preprocess::{reduce, PreprocessError};
use crate::solver::{solve_observed, SolveError, SolveOptions, SolveOutcome};

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub time_limit: Duration,
    pub reduce: bool,
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            time_limit: Duration::from_secs(300),
            reduce: true,
            warm_start: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub outcome: SolveOutcome,
    /// Instance the model was built from (the reduced one when reducing).
    pub working: Instance,
    pub model: IpModel,
    pub deleted: BTreeSet<(ResidentId, HospitalId)>,
    /// False when reduction was requested but skipped for resident ties.
    pub reduced: bool,
    pub warm_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("solver output failed verification against the {which} instance: {detail}")]
    Verification { which: &'static str, detail: String },
}

fn verify(inst: &Instance, result: &SolveOutcome, which: &'static str) -> Result<(), PipelineError> {
    let violations = validate_matching(inst, &result.matching);
    if let Some(v) = violations.first() {
        return Err(PipelineError::Verification {
            which,
            detail: v.to_string(),
        });
    }
    let blocking = blocking_pairs(inst, &inst.ranks(), &result.matching);
    if let Some(&(r, h)) = blocking.first() {
        return Err(PipelineError::Verification {
            which,
            detail: format!("blocking pair (r{}, h{})", r + 1, h + 1),
        });
    }
    Ok(())
}

/// Runs the whole pipeline, calling `observer` on every feasible vector the
/// search accepts.
pub fn solve_instance_observed(
    original: &Instance,
    options: &PipelineOptions,
    observer: &mut dyn FnMut(&IpModel, &[bool]),
) -> Result<PipelineResult, PipelineError> {
    let (working, deleted, reduced) = if options.reduce {
        match reduce(original) {
            Ok(red) => (red.instance, red.deleted, true),
            Err(PreprocessError::ResidentTies) => (original.clone(), BTreeSet::new(), false),
        }
    } else {
        (original.clone(), BTreeSet::new(), false)
    };
    let ranks = working.ranks();
    let model = build_model(&working, &ranks);
    let initial = options
        .warm_start
        .then(|| warm_start(&working, options.seed));
    let warm_size = initial.as_ref().map(|m| m.size());
    let solve_options = SolveOptions {
        time_limit: options.time_limit,
        lower_bound: warm_size,
        initial,
        seed: options.seed,
    };
    let outcome = solve_observed(&model, &solve_options, &mut |x| observer(&model, x))?;
    verify(original, &outcome, "original")?;
    if reduced {
        verify(&working, &outcome, "reduced")?;
    }
    Ok(PipelineResult {
        outcome,
        working,
        model,
        deleted,
        reduced,
        warm_size,
    })
}

pub fn solve_instance(
    original: &Instance,
    options: &PipelineOptions,
) -> Result<PipelineResult, PipelineError> {
    solve_instance_observed(original, options, &mut |_, _| {})
}
