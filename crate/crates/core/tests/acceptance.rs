//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{max_abs_diff, normal_matrix, random_spd, rng};
use rand::Rng;
use treeem::experiment::{paired_sign_test, results_csv, run_sweep, ExperimentConfig, SweepResult};
use treeem::nalgebra::DMatrix;
use treeem::{
    brute_force_optimal_tree, chow_liu, compute_omega, kl_cov, kl_tree_simplified,
    sample_observations, tree_covariance, CovMatrix, LinearModel, ObservationSet, SpanningTree,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn a1_chow_liu_optimality() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for seed in 0..100u64 {
        let p = 3 + (seed % 4) as usize;
        let sigma = random_spd(p, 10_000 + seed);
        let fast = chow_liu(&sigma).unwrap().kl;
        let exhaustive = brute_force_optimal_tree(&sigma).unwrap().kl;
        worst = worst.max((fast - exhaustive).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-9 && secs < 30.0,
        format!("100 instances, max |kl diff| = {worst:.3e}, {secs:.2} s"),
    )
}

fn a2_simplified_kl() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in 0..200u64 {
        let p = 3 + (seed % 6) as usize;
        let sigma = random_spd(p, 20_000 + seed);
        let tree_cov = chow_liu(&sigma).unwrap().cov;
        let full = kl_cov(&sigma, &tree_cov).unwrap();
        let simple = kl_tree_simplified(&sigma, &tree_cov).unwrap();
        worst = worst.max((full - simple).abs());
    }
    outcome(worst < 1e-9, format!("200 pairs, max |diff| = {worst:.3e}"))
}

fn omega_by_conditioning(
    sigma: &CovMatrix,
    model: &LinearModel,
    obs: &ObservationSet,
) -> DMatrix<f64> {
    let s = sigma.as_matrix();
    let h = model.h();
    let syy = h * s * h.transpose() + model.d().as_matrix();
    let k = s * h.transpose() * syy.try_inverse().unwrap();
    let cond_cov = s - &k * h * s;
    let mut acc = DMatrix::zeros(s.nrows(), s.ncols());
    for row in obs.samples().row_iter() {
        let mu = &k * row.transpose();
        acc += &cond_cov + &mu * mu.transpose();
    }
    acc / obs.len() as f64
}

fn a3_omega_identity() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in 0..50u64 {
        let mut g = rng(30_000 + seed);
        let p = g.random_range(2..=6);
        let m = g.random_range(1..=p);
        let r = g.random_range(m + 1..=100);
        let noise = g.random_range(0.01..1.0);
        let truth = chow_liu(&random_spd(p, 31_000 + seed)).unwrap().cov;
        let model = LinearModel::new(
            normal_matrix(&mut g, m, p),
            CovMatrix::from_diagonal(&vec![noise; m]).unwrap(),
        )
        .unwrap();
        let obs = sample_observations(&model, &truth, r, 32_000 + seed).unwrap();
        let current = chow_liu(&random_spd(p, 33_000 + seed)).unwrap().cov;
        let pooled = compute_omega(&current, &model, &obs).unwrap();
        worst = worst.max(max_abs_diff(
            pooled.as_matrix(),
            &omega_by_conditioning(&current, &model, &obs),
        ));
    }
    outcome(
        worst < 1e-8,
        format!("50 instances, max entry diff = {worst:.3e}"),
    )
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn a4_sweep(result: &SweepResult, secs: f64) -> Outcome {
    let mut pass = result.failures.is_empty();
    let mut parts = Vec::new();
    let mut previous = f64::INFINITY;
    for &m in &result.config.m_values {
        let em: Vec<f64> = result.records_for(m).map(|r| r.latent_kl_em).collect();
        let prior: Vec<f64> = result
            .records_for(m)
            .map(|r| r.latent_kl_prior_tree)
            .collect();
        let em_mean = mean(em.iter().copied());
        let prior_mean = mean(prior.iter().copied());
        let test = paired_sign_test(&em, &prior);
        pass &= em.len() == result.config.trials;
        pass &= em_mean < prior_mean && test.p_value < 0.05 && em_mean <= previous;
        previous = em_mean;
        parts.push(format!(
            "m={m}: em {em_mean:.4} prior {prior_mean:.4} wins {}/{} p={:.1e}",
            test.wins,
            em.len(),
            test.p_value
        ));
    }
    pass &= secs < 300.0;
    outcome(pass, format!("{}; {secs:.1} s", parts.join("; ")))
}

fn a5_monotonicity(result: &SweepResult) -> Outcome {
    let mut violations = 0usize;
    let mut steps = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for rec in &result.records {
        for pair in rec.obs_kl_path.windows(2) {
            steps += 1;
            let rise = pair[1] - pair[0];
            worst = worst.max(rise);
            if rise > 1e-6 {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0 && steps > 0,
        format!("{steps} steps, {violations} violations, largest change {worst:.3e}"),
    )
}

fn random_tree(p: usize, seed: u64) -> SpanningTree {
    let mut g = rng(seed);
    let seq: Vec<usize> = (0..p - 2).map(|_| g.random_range(0..p)).collect();
    SpanningTree::from_prufer(p, &seq).unwrap()
}

fn a6_tree_structure() -> Outcome {
    let mut worst_match = 0.0_f64;
    let mut worst_precision = 0.0_f64;
    for seed in 0..100u64 {
        let p = 3 + (seed % 8) as usize;
        let sigma = random_spd(p, 40_000 + seed);
        let tree = random_tree(p, 41_000 + seed);
        let cov = tree_covariance(&sigma, &tree).unwrap();
        for u in 0..p {
            worst_match = worst_match.max((cov.get(u, u) - sigma.get(u, u)).abs());
        }
        for &(u, v) in tree.edges() {
            worst_match = worst_match.max((cov.get(u, v) - sigma.get(u, v)).abs());
        }
        let precision = cov.inverse();
        for u in 0..p {
            for v in (u + 1)..p {
                if !tree.contains_edge(u, v) {
                    worst_precision = worst_precision.max(precision[(u, v)].abs());
                }
            }
        }
    }
    outcome(
        worst_match <= 1e-12 && worst_precision < 1e-9,
        format!("100 pairs, max marginal diff = {worst_match:.3e}, max non-edge precision = {worst_precision:.3e}"),
    )
}

fn a7_stopping(fine: &SweepResult, coarse: &SweepResult) -> Outcome {
    let iters = |r: &SweepResult| mean(r.records.iter().map(|x| x.iterations_used as f64));
    let kl = |r: &SweepResult| mean(r.records.iter().map(|x| x.latent_kl_em));
    let (it_fine, it_coarse) = (iters(fine), iters(coarse));
    let (kl_fine, kl_coarse) = (kl(fine), kl(coarse));
    let pass = it_coarse <= it_fine && kl_coarse >= kl_fine - 1e-9;
    let per_m: Vec<String> = fine
        .config
        .m_values
        .iter()
        .map(|&m| {
            let it = |r: &SweepResult| mean(r.records_for(m).map(|x| x.iterations_used as f64));
            let k = |r: &SweepResult| mean(r.records_for(m).map(|x| x.latent_kl_em));
            format!(
                "m={m}: iters {:.2}/{:.2} kl {:.4}/{:.4}",
                it(coarse),
                it(fine),
                k(coarse),
                k(fine)
            )
        })
        .collect();
    outcome(
        pass,
        format!(
            "eps 0.1 vs 0.01: iterations {it_coarse:.3} vs {it_fine:.3}, latent kl {kl_coarse:.4} vs {kl_fine:.4} [{}]",
            per_m.join("; ")
        ),
    )
}

fn a8_determinism(first: &SweepResult) -> Outcome {
    let again = run_sweep(&first.config).unwrap();
    let (a, b) = (results_csv(first), results_csv(&again));
    outcome(a == b, format!("{} bytes, identical = {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("A1", a1_chow_liu_optimality()));
    results.push(("A2", a2_simplified_kl()));
    results.push(("A3", a3_omega_identity()));

    let config = ExperimentConfig::default();
    let start = Instant::now();
    let sweep = run_sweep(&config).unwrap();
    let secs = start.elapsed().as_secs_f64();
    results.push(("A4", a4_sweep(&sweep, secs)));
    results.push(("A5", a5_monotonicity(&sweep)));
    results.push(("A6", a6_tree_structure()));
    let coarse = run_sweep(&ExperimentConfig {
        epsilon: 0.1,
        ..config.clone()
    })
    .unwrap();
    results.push(("A7", a7_stopping(&sweep, &coarse)));
    results.push(("A8", a8_determinism(&sweep)));

    let mut all = true;
    for (name, o) in &results {
        println!(
            "{name} {} {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        all &= o.pass;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
