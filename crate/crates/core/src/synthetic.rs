//! Seeded random instances for the property suites.
//!
//! Two families alternate: dense Wishart-type forms, whose obstacle solutions
//! often pin interior entries at zero, and sparse diagonally dominant
//! M-matrices resembling stiffness matrices, whose solutions stay positive.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::{BoundaryStructure, EnergyForm, PositiveField};
use crate::error::Result;
use crate::linalg::SymCsr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Wishart,
    MMatrix,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub family: Family,
    pub form: EnergyForm,
    pub bs: BoundaryStructure,
}

/// Deterministic generator for `seed`; every draw goes through this.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance with `size` in `[2, max_size]`, at most `max_boundary`
/// boundary indices, and `n` in `{3, 4, 5}`.
pub fn instance(seed: u64, max_size: usize, max_boundary: usize) -> Result<Instance> {
    let mut r = rng(seed);
    let size = r.random_range(2..=max_size.max(2));
    let n = r.random_range(3..=5u32);
    let family = if seed.is_multiple_of(2) { Family::Wishart } else { Family::MMatrix };
    let matrix = match family {
        Family::Wishart => wishart(&mut r, size),
        Family::MMatrix => m_matrix(&mut r, size),
    }?;
    let nb = r.random_range(1..=max_boundary.min(size).max(1));
    let mut indices = sample(&mut r, size, nb).into_vec();
    indices.sort_unstable();
    let weights = (0..nb).map(|_| r.random_range(0.2..2.0)).collect();
    Ok(Instance {
        seed,
        family,
        form: EnergyForm::new(n, matrix)?,
        bs: BoundaryStructure::new(n, size, indices, weights)?,
    })
}

fn wishart(r: &mut ChaCha8Rng, size: usize) -> Result<SymCsr> {
    let k = size + 2;
    let g: Vec<Vec<f64>> = (0..size).map(|_| (0..k).map(|_| r.sample(StandardNormal)).collect()).collect();
    let shift = r.random_range(0.05..0.5);
    let rows: Vec<Vec<f64>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| {
                    let s: f64 = (0..k).map(|l| g[i][l] * g[j][l]).sum::<f64>() / k as f64;
                    if i == j {
                        s + shift
                    } else {
                        s
                    }
                })
                .collect()
        })
        .collect();
    SymCsr::from_dense(&rows)
}

fn m_matrix(r: &mut ChaCha8Rng, size: usize) -> Result<SymCsr> {
    let mut trip = Vec::new();
    let mut diag = vec![0.0; size];
    for i in 0..size {
        for j in i + 1..size {
            // Path edges keep the graph connected; extra edges are sparse.
            if j == i + 1 || r.random_bool(3.0 / size as f64) {
                let w: f64 = r.random_range(0.1..1.0);
                trip.push((i, j, -w));
                trip.push((j, i, -w));
                diag[i] += w;
                diag[j] += w;
            }
        }
    }
    for (i, d) in diag.iter().enumerate() {
        trip.push((i, i, d + r.random_range(0.01..0.3)));
    }
    SymCsr::from_triplets(size, &trip)
}

/// Admissible field: boundary entries in `[0.1, 2]`, interior entries in
/// `[0, 2]` with roughly a fifth of them exactly zero.
pub fn admissible_field(r: &mut ChaCha8Rng, bs: &BoundaryStructure) -> Vec<f64> {
    (0..bs.size())
        .map(|i| {
            if bs.is_boundary(i) {
                r.random_range(0.1..2.0)
            } else if r.random_bool(0.2) {
                0.0
            } else {
                r.random_range(0.0..2.0)
            }
        })
        .collect()
}

/// Conformal factor with entries in `[0.5, 2]`.
pub fn conformal_factor(r: &mut ChaCha8Rng, size: usize) -> PositiveField {
    PositiveField::new((0..size).map(|_| r.random_range(0.5..2.0)).collect()).expect("positive by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        for seed in 0..50 {
            let a = instance(seed, 40, 12).unwrap();
            let b = instance(seed, 40, 12).unwrap();
            assert_eq!(a.form.matrix(), b.form.matrix());
            assert_eq!(a.bs.indices(), b.bs.indices());
            assert!(a.bs.indices().len() <= 12);
            assert!(a.form.size() <= 40);
            let u = admissible_field(&mut rng(seed), &a.bs);
            a.bs.check_admissible(&u).unwrap();
        }
    }
}
