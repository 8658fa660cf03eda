#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use treeem::nalgebra::DMatrix;
use treeem::CovMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Wishart-style SPD matrix with random positive rescaling of the
/// coordinates.
pub fn random_spd(p: usize, seed: u64) -> CovMatrix {
    let mut rng = rng(seed);
    let g = normal_matrix(&mut rng, p, p + 3);
    let a = &g * g.transpose() / (p + 3) as f64;
    let scale = Uniform::new(0.5, 2.0).unwrap();
    let s: Vec<f64> = (0..p).map(|_| scale.sample(&mut rng)).collect();
    let m = DMatrix::from_fn(p, p, |i, j| a[(i, j)] * s[i] * s[j]);
    CovMatrix::new(m).unwrap()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}
