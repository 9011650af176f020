//! Seeded random instance generation.
//!
//! Posts are dropped on hospitals one at a time, each resident picks a
//! uniformly random ordered list of distinct hospitals, and each hospital
//! ranks exactly the residents that picked it in a uniformly random order.
//! Ties are then formed by walking every list and letting each entry after
//! the first join the previous tie with probability equal to the tie density
//! of its side.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::{Hospital, Instance, PreferenceList};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub n_residents: usize,
    pub n_hospitals: usize,
    /// Total posts, spread over the hospitals.
    pub posts: u32,
    pub list_len: usize,
    pub td_residents: f64,
    pub td_hospitals: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("need at least one resident and one hospital")]
    Empty,
    #[error("list length {list_len} exceeds the {n_hospitals} hospitals")]
    ListTooLong { list_len: usize, n_hospitals: usize },
    #[error("tie density {0} outside [0, 1]")]
    Density(f64),
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.n_residents == 0 || self.n_hospitals == 0 {
            return Err(GeneratorError::Empty);
        }
        if self.list_len > self.n_hospitals {
            return Err(GeneratorError::ListTooLong {
                list_len: self.list_len,
                n_hospitals: self.n_hospitals,
            });
        }
        for td in [self.td_residents, self.td_hospitals] {
            if !(0.0..=1.0).contains(&td) {
                return Err(GeneratorError::Density(td));
            }
        }
        Ok(())
    }
}

/// Resident list length used by [`sfas_like`].
pub const SFAS_LIST_LEN: usize = 5;

/// `floor(0.07 * n1)` hospitals, but never fewer than the list length.
pub fn sfas_hospital_count(n_residents: usize) -> usize {
    (n_residents * 7 / 100).max(SFAS_LIST_LEN)
}

/// Preset: as many posts as residents, strict resident lists of length 5,
/// ties only on the hospital side.
pub fn sfas_like(
    n_residents: usize,
    td_hospitals: f64,
    seed: u64,
) -> Result<GeneratorConfig, GeneratorError> {
    let config = GeneratorConfig {
        n_residents,
        n_hospitals: sfas_hospital_count(n_residents),
        posts: u32::try_from(n_residents).unwrap_or(u32::MAX),
        list_len: SFAS_LIST_LEN,
        td_residents: 0.0,
        td_hospitals,
        seed,
    };
    config.validate()?;
    Ok(config)
}

fn with_ties(order: Vec<usize>, td: f64, rng: &mut ChaCha8Rng) -> PreferenceList {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (k, id) in order.into_iter().enumerate() {
        // draw for every adjacency so the stream does not depend on td
        let joins = rng.gen::<f64>() < td;
        match groups.last_mut() {
            Some(g) if k > 0 && joins => g.push(id),
            _ => groups.push(vec![id]),
        }
    }
    PreferenceList::new(groups)
}

pub fn generate(config: &GeneratorConfig) -> Result<Instance, GeneratorError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (n1, n2) = (config.n_residents, config.n_hospitals);

    let mut capacity = vec![0u32; n2];
    for _ in 0..config.posts {
        capacity[rng.gen_range(0..n2)] += 1;
    }

    let mut listed_by: Vec<Vec<usize>> = vec![Vec::new(); n2];
    let mut residents = Vec::with_capacity(n1);
    let mut pool: Vec<usize> = (0..n2).collect();
    for r in 0..n1 {
        pool.sort_unstable();
        let (chosen, _) = pool.partial_shuffle(&mut rng, config.list_len);
        let chosen = chosen.to_vec();
        for &h in &chosen {
            listed_by[h].push(r);
        }
        residents.push(with_ties(chosen, config.td_residents, &mut rng));
    }

    let hospitals = listed_by
        .into_iter()
        .zip(capacity)
        .map(|(mut rs, capacity)| {
            rs.shuffle(&mut rng);
            Hospital {
                capacity,
                prefs: with_ties(rs, config.td_hospitals, &mut rng),
            }
        })
        .collect();

    Ok(Instance::new(residents, hospitals).expect("lists are mutual by construction"))
}
