//! Instance sources shared by the integration tests.

#![allow(dead_code)]

use hrt_core::generator::{generate, sfas_like, GeneratorConfig};
use hrt_core::oracle::OracleLimit;
use hrt_core::Instance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DENSITIES: [f64; 5] = [0.0, 0.25, 0.5, 0.85, 1.0];

/// Enough room for every instance produced by [`small_instance`].
pub fn oracle_limit() -> OracleLimit {
    OracleLimit {
        max_residents: 12,
        max_pairs: 64,
        node_budget: 200_000_000,
    }
}

/// A random instance with at most `max_residents` residents. Shapes vary:
/// under- and over-supplied posts, zero-capacity hospitals, short and full
/// lists, and ties on either side.
pub fn small_instance(seed: u64, max_residents: usize, resident_ties: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n1 = rng.gen_range(1..=max_residents);
    let n2 = rng.gen_range(1..=5);
    let list_len = rng.gen_range(1..=n2.min(4));
    let posts = rng.gen_range(0..=n1 as u32 + 2);
    let td_hospitals = DENSITIES[rng.gen_range(0..DENSITIES.len())];
    let td_residents = if resident_ties {
        DENSITIES[rng.gen_range(0..DENSITIES.len())]
    } else {
        0.0
    };
    generate(&GeneratorConfig {
        n_residents: n1,
        n_hospitals: n2,
        posts,
        list_len,
        td_residents,
        td_hospitals,
        seed,
    })
    .expect("valid configuration")
}

pub fn sfas_instance(n_residents: usize, td_hospitals: f64, seed: u64) -> Instance {
    generate(&sfas_like(n_residents, td_hospitals, seed).expect("valid preset"))
        .expect("valid configuration")
}
