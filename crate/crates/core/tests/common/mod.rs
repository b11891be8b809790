#![allow(dead_code)]

use cellmcd::simulate::{contaminate, make_sigma, replication_rng, sample_gaussian, SigmaType};
use cellmcd::{Dataset, SymMatrix};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64, stream: usize) -> ChaCha8Rng {
    replication_rng(seed, stream)
}

pub fn a09(d: usize) -> SymMatrix {
    make_sigma(SigmaType::A09, d, &mut rng(0, 0)).unwrap()
}

pub fn gaussian(n: usize, sigma: &SymMatrix, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    sample_gaussian(n, sigma, rng).unwrap()
}

pub fn contaminated(n: usize, sigma: &SymMatrix, eps: f64, gamma: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let x = gaussian(n, sigma, rng);
    contaminate(&x, sigma, eps, gamma, rng).unwrap().0
}

/// MCAR mask removing about `frac` of the cells, never a whole row.
pub fn mcar_mask(n: usize, d: usize, frac: f64, rng: &mut ChaCha8Rng) -> DMatrix<bool> {
    let mut present = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() >= frac);
    for i in 0..n {
        if (0..d).all(|j| !present[(i, j)]) {
            present[(i, rng.random_range(0..d))] = true;
        }
    }
    present
}

pub fn dataset(x: &DMatrix<f64>, present: Option<&DMatrix<bool>>) -> Dataset {
    let names = (1..=x.ncols()).map(|j| format!("V{j}")).collect();
    Dataset::from_matrix_with_mask(x, present, names).unwrap()
}

/// Random SPD matrix with eigenvalues in roughly [0.1, 3].
pub fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    SymMatrix::symmetrize(&g * g.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1)
}

/// Largest absolute entry of `a − b` relative to the largest entry of `b`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}
