//! Deterministic fixtures shared by the benchmarks.

use crimenet::ingest::{generate_synthetic, SynthPlan};
use crimenet::MonthlyCube;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Laplacian of a random weighted graph on `n` nodes with edge density `p`.
pub fn random_laplacian(n: usize, p: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                let w: f64 = rng.random_range(0.1..1.0);
                l[(i, j)] = -w;
                l[(j, i)] = -w;
                l[(i, i)] += w;
                l[(j, j)] += w;
            }
        }
    }
    l
}

/// `n` samples in `[0, 1]^d` with a smooth target.
pub fn regression_problem(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(0.0..1.0));
    let y = (0..n)
        .map(|i| {
            let s: f64 = x.row(i).iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * v).sum();
            10.0 * s.sin() + rng.random_range(-0.5..0.5)
        })
        .collect();
    (x, y)
}

/// Synthetic city of the default shape with `communities` areas.
pub fn synthetic_cube(communities: usize, seed: u64) -> MonthlyCube {
    let plan = SynthPlan {
        communities,
        ..SynthPlan::default()
    };
    generate_synthetic(seed, &plan).expect("valid plan").0
}
