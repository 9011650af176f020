//! Feasible 0/1 points of the model and weakly stable matchings are the
//! same thing.

mod common;

use common::{oracle_limit, sfas_instance, small_instance};
use hrt_core::oracle::enumerate_stable_matchings;
use hrt_core::pipeline::{solve_instance_observed, PipelineOptions};
use hrt_core::solver::{extract_matching, extract_matching_binary};
use hrt_core::{build_model, is_stable, validate_matching, Instance, Matching};

fn every_vector(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u64..1 << n).map(move |bits| (0..n).map(|c| bits >> c & 1 == 1).collect())
}

#[test]
fn feasible_exactly_when_stable_on_tiny_instances() {
    let mut checked = 0;
    for seed in 0..400 {
        let inst = small_instance(seed, 6, seed % 3 == 0);
        if inst.num_pairs() > 12 {
            continue;
        }
        checked += 1;
        let ranks = inst.ranks();
        let model = build_model(&inst, &ranks);
        let stable = enumerate_stable_matchings(&inst, &oracle_limit()).unwrap();
        let mut feasible = 0;
        for x in every_vector(model.num_columns()) {
            let m = extract_matching_binary(&model, &x);
            let ok = model.is_feasible(&x);
            match &m {
                Ok(m) => {
                    let is_matching = validate_matching(&inst, m).is_empty();
                    assert_eq!(
                        ok,
                        is_matching && is_stable(&inst, &ranks, m),
                        "seed {seed} x {x:?}"
                    );
                    if ok {
                        feasible += 1;
                        assert_eq!(model.objective(&x), m.size());
                        assert!(stable.contains(m));
                    }
                }
                // two hospitals for one resident breaks a resident row
                Err(_) => assert!(!ok, "seed {seed} x {x:?}"),
            }
        }
        assert_eq!(feasible, stable.len(), "seed {seed}");
    }
    assert!(checked >= 200, "only {checked} instances small enough");
}

#[test]
fn every_vector_seen_during_search_is_stable() {
    let mut seen = 0usize;
    let mut run = |inst: &Instance, seed: u64, warm_start: bool| {
        let ranks = inst.ranks();
        let opts = PipelineOptions {
            warm_start,
            seed,
            ..PipelineOptions::default()
        };
        solve_instance_observed(inst, &opts, &mut |model, x| {
            seen += 1;
            assert!(model.is_feasible(x));
            let m = extract_matching_binary(model, x).unwrap();
            assert_eq!(model.objective(x), m.size());
            assert!(validate_matching(inst, &m).is_empty(), "seed {seed}");
            assert!(is_stable(inst, &ranks, &m), "seed {seed}");
        })
        .unwrap();
    };
    for seed in 0..300 {
        run(&small_instance(seed, 10, seed % 4 == 0), seed, seed % 2 == 0);
    }
    for seed in 0..30 {
        run(&sfas_instance(60, 0.85, seed), seed, false);
    }
    assert!(seen >= 300);
}

#[test]
fn every_stable_matching_satisfies_every_row() {
    for seed in 0..300 {
        let inst = small_instance(seed, 9, seed % 3 == 0);
        let model = build_model(&inst, &inst.ranks());
        for m in enumerate_stable_matchings(&inst, &oracle_limit()).unwrap() {
            let x = model.indicator(&m).expect("pairs are columns");
            let bad = model.violated_rows(&x);
            assert!(bad.is_empty(), "seed {seed}: {m} breaks {bad:?}");
            let values: Vec<f64> = x.iter().map(|&b| f64::from(u8::from(b))).collect();
            assert_eq!(extract_matching(&model, &values).unwrap(), m);
        }
    }
}

#[test]
fn empty_matching_is_infeasible_whenever_a_post_is_wanted() {
    for seed in 0..300 {
        let inst = small_instance(seed, 10, seed % 2 == 0);
        let model = build_model(&inst, &inst.ranks());
        let zero = vec![false; model.num_columns()];
        // a zero-capacity hospital can never take part in a blocking pair
        let wanted = inst.pairs().any(|(_, h)| inst.capacity(h) > 0);
        assert_eq!(model.is_feasible(&zero), !wanted, "seed {seed}");
        let empty = Matching::empty(inst.n_residents());
        assert_eq!(model.indicator(&empty).unwrap(), zero);
    }
}
