mod common;

use common::{normal_matrix, random_spd, rng};
use treeem::linear_model::{average_log_likelihood, observation_kl_uncentered};
use treeem::nalgebra::DMatrix;
use treeem::{
    empirical_gaussian, observation_cov, observation_kl, sample_observations, CovMatrix,
    LinearModel, ObservationSet,
};

fn random_model(p: usize, m: usize, noise: f64, seed: u64) -> LinearModel {
    let mut rng = rng(seed);
    let h = normal_matrix(&mut rng, m, p);
    LinearModel::new(h, CovMatrix::from_diagonal(&vec![noise; m]).unwrap()).unwrap()
}

/// `2m` samples `±√m · L e_k` whose centered covariance is exactly `L Lᵀ`
/// up to rounding and whose mean is zero.
fn samples_with_covariance(target: &CovMatrix) -> ObservationSet {
    let m = target.dim();
    let l = target.cholesky_factor();
    let mut rows = Vec::new();
    for k in 0..m {
        for sign in [1.0, -1.0] {
            let col = l.column(k) * (sign * (m as f64).sqrt());
            rows.extend(col.iter().copied());
        }
    }
    ObservationSet::from_samples(DMatrix::from_row_slice(2 * m, m, &rows)).unwrap()
}

#[test]
fn observation_kl_shrinks_with_sample_size() {
    let p = 5;
    let sigma = random_spd(p, 1);
    let model = random_model(p, 3, 0.2, 2);
    let kls: Vec<f64> = [100, 1_000, 10_000]
        .iter()
        .map(|&r| {
            let obs = sample_observations(&model, &sigma, r, 3).unwrap();
            observation_kl(&obs, &model, &sigma).unwrap()
        })
        .collect();
    assert!(kls[0] > kls[1] && kls[1] > kls[2], "{kls:?}");
    assert!(kls[2] < 1e-2);
}

#[test]
fn inflated_latent_covariance_scores_worse() {
    let sigma = random_spd(4, 5);
    let model = random_model(4, 2, 0.1, 6);
    let obs = sample_observations(&model, &sigma, 500, 7).unwrap();
    let base = observation_kl(&obs, &model, &sigma).unwrap();
    let inflated = observation_kl(&obs, &model, &sigma.scaled(100.0).unwrap()).unwrap();
    assert!(inflated > base);
}

#[test]
fn exact_match_gives_zero() {
    let sigma = random_spd(4, 8);
    let model = random_model(4, 3, 0.3, 9);
    let target = observation_cov(&model, &sigma).unwrap();
    let obs = samples_with_covariance(&target);
    assert!(common::max_abs_diff(obs.centered_cov(), target.as_matrix()) < 1e-12);
    assert!(observation_kl(&obs, &model, &sigma).unwrap() < 1e-12);
}

#[test]
fn kl_argmin_equals_likelihood_argmax_on_centered_data() {
    let p = 5;
    let truth = random_spd(p, 11);
    let model = random_model(p, 3, 0.2, 12);
    let raw = sample_observations(&model, &truth, 80, 13).unwrap();
    let mut centered = raw.samples().clone();
    let mean = raw.mean().transpose();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let obs = ObservationSet::from_samples(centered).unwrap();
    let candidates: Vec<CovMatrix> = (0..25).map(|s| random_spd(p, 500 + s)).collect();
    let kl_best = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (i, observation_kl(&obs, &model, c).unwrap()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    let ll_best = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (i, average_log_likelihood(&obs, &model, c).unwrap()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    assert_eq!(kl_best, ll_best);
    // Differences agree exactly up to sign: the empirical entropy cancels.
    let (a, b) = (&candidates[0], &candidates[1]);
    let dkl = observation_kl(&obs, &model, a).unwrap() - observation_kl(&obs, &model, b).unwrap();
    let dll = average_log_likelihood(&obs, &model, a).unwrap()
        - average_log_likelihood(&obs, &model, b).unwrap();
    assert!((dkl + dll).abs() < 1e-10);
    let dklu = observation_kl_uncentered(&obs, &model, a).unwrap()
        - observation_kl_uncentered(&obs, &model, b).unwrap();
    assert!((dklu - dkl).abs() < 1e-10);
}

#[test]
fn observation_cov_is_pd_for_near_singular_latent() {
    let mut m = DMatrix::from_element(4, 4, 1.0);
    for i in 0..4 {
        m[(i, i)] += 1e-9;
    }
    let near_singular = CovMatrix::new(m).unwrap();
    let model = random_model(4, 2, 1e-3, 3);
    let cov = observation_cov(&model, &near_singular).unwrap();
    assert!(common::min_eigenvalue(cov.as_matrix()) > 0.0);
}

#[test]
fn sample_covariance_converges() {
    let p = 4;
    let sigma = random_spd(p, 21);
    let model = random_model(p, 3, 0.5, 22);
    let target = observation_cov(&model, &sigma).unwrap();
    let scale = target.as_matrix().norm();
    let mut previous = f64::INFINITY;
    for r in [100usize, 1_000, 10_000, 100_000] {
        let obs = sample_observations(&model, &sigma, r, 23).unwrap();
        let err = (obs.centered_cov() - target.as_matrix()).norm();
        assert!(err < 3.0 / (r as f64).sqrt() * scale, "r = {r}: {err}");
        assert!(err < previous * 1.5);
        previous = err;
    }
}

#[test]
fn latent_draws_are_shared_across_observation_dimensions() {
    let p = 4;
    let sigma = random_spd(p, 31);
    let d = |m: usize| CovMatrix::from_diagonal(&vec![1e-12; m]).unwrap();
    let full = LinearModel::new(DMatrix::identity(p, p), d(p)).unwrap();
    let part = LinearModel::new(DMatrix::identity(2, p), d(2)).unwrap();
    let a = sample_observations(&full, &sigma, 10, 4).unwrap();
    let b = sample_observations(&part, &sigma, 10, 4).unwrap();
    assert!(common::max_abs_diff(&a.samples().columns(0, 2).into_owned(), b.samples()) < 1e-5);
}

#[test]
fn too_few_samples_is_an_error() {
    let sigma = random_spd(5, 41);
    let model = random_model(5, 4, 0.1, 42);
    let obs = sample_observations(&model, &sigma, 3, 43).unwrap();
    assert!(empirical_gaussian(&obs).is_err());
    assert!(observation_kl(&obs, &model, &sigma).is_err());
}
