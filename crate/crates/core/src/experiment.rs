//! Randomized sweeps comparing the EM tree estimate against the prior's
//! Chow-Liu tree and the oracle Chow-Liu tree of the true covariance.
//!
//! Seeds: every random draw comes from ChaCha8 seeded through
//! [`derive_seed`]. Trial `t` uses the same mixing and sampling seeds for
//! every `m`, so sweeps over `m` share latent draws and the leading rows
//! of `H`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::csv_io::{format_value, read_matrix};
use crate::em::{run_em, EmConfig, StopReason, DEFAULT_EPSILON, DEFAULT_L_MAX};
use crate::error::{Error, Result};
use crate::gaussian::{kl_cov, CovMatrix};
use crate::linear_model::{sample_observations, standard_normal_matrix, LinearModel};
use crate::tree::{chow_liu, tree_covariance_from_correlations, SpanningTree};

/// Redraws allowed when a random `H` is numerically rank deficient.
pub const MIXING_REDRAWS: usize = 10;

/// Edge correlation magnitudes of generated ground truths.
pub const EDGE_CORRELATION_RANGE: (f64, f64) = (0.5, 0.95);

pub const CSV_HEADER: &str = "m,trial,kl_em,kl_prior,kl_oracle,iterations,stop_reason";

const STREAM_GROUND_TRUTH: u64 = 0x6772_6f75_6e64;
const STREAM_PRIOR: u64 = 0x70_7269_6f72;
const STREAM_PERTURB: u64 = 0x7065_7274;
const STREAM_TRIAL: u64 = 0x74_7269_616c;
const STREAM_SAMPLES: u64 = 0x7361_6d70;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child seed for `stream` and `index` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    mix64(master ^ mix64(stream ^ mix64(index)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub p: usize,
    pub m_values: Vec<usize>,
    pub r: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub l_max: usize,
    /// Weight of the random component in the prior.
    pub alpha: f64,
    /// Weight of a random SPD perturbation added to the generated ground
    /// truth; 0 keeps it exactly tree-structured.
    pub perturbation: f64,
    /// Test hook: use `H = I` (requires `m = p`).
    pub identity_mixing: bool,
    pub sigma_path: Option<PathBuf>,
    pub sigma0_path: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            p: 10,
            m_values: vec![5, 6, 7, 8, 9],
            r: 100,
            snr_db: 20.0,
            trials: 100,
            seed: 1,
            epsilon: DEFAULT_EPSILON,
            l_max: DEFAULT_L_MAX,
            alpha: 0.5,
            perturbation: 0.0,
            identity_mixing: false,
            sigma_path: None,
            sigma0_path: None,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 14] = [
        "p",
        "m_values",
        "r",
        "snr_db",
        "trials",
        "seed",
        "epsilon",
        "l_max",
        "alpha",
        "perturbation",
        "identity_mixing",
        "sigma_path",
        "sigma0_path",
        "output",
    ];

    /// Parses `key = value` lines on top of the defaults. `#` starts a
    /// comment; unknown and repeated keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key}",
                    lineno + 1
                )));
            }
            config
                .set(key, value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
        }
        let path = |value: &str| (!value.is_empty()).then(|| PathBuf::from(value));
        match key {
            "p" => self.p = num(key, value)?,
            "m_values" => {
                self.m_values = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| num(key, s))
                    .collect::<Result<_>>()?
            }
            "r" => self.r = num(key, value)?,
            "snr_db" => self.snr_db = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "l_max" => self.l_max = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "perturbation" => self.perturbation = num(key, value)?,
            "identity_mixing" => self.identity_mixing = num(key, value)?,
            "sigma_path" => self.sigma_path = path(value),
            "sigma0_path" => self.sigma0_path = path(value),
            "output" => self.output = path(value),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.p < 2 {
            return fail(format!("p must be at least 2, got {}", self.p));
        }
        if let Some(&m) = self.m_values.iter().find(|&&m| m == 0 || m > self.p) {
            return fail(format!("m = {m} outside 1..={}", self.p));
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.r == 0 {
            return fail("r must be at least 1".into());
        }
        if !self.snr_db.is_finite() {
            return fail("snr_db must be finite".into());
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.l_max == 0 {
            return fail("l_max must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.perturbation >= 0.0) || !self.perturbation.is_finite() {
            return fail(format!(
                "perturbation must be non-negative, got {}",
                self.perturbation
            ));
        }
        if self.identity_mixing && self.m_values.iter().any(|&m| m != self.p) {
            return fail("identity_mixing requires every m to equal p".into());
        }
        Ok(())
    }

    /// Config rendered back as `key = value` lines, in [`Self::KEYS`] order.
    pub fn to_text(&self) -> String {
        let opt = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let values = [
            self.p.to_string(),
            self.m_values
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(","),
            self.r.to_string(),
            self.snr_db.to_string(),
            self.trials.to_string(),
            self.seed.to_string(),
            self.epsilon.to_string(),
            self.l_max.to_string(),
            self.alpha.to_string(),
            self.perturbation.to_string(),
            self.identity_mixing.to_string(),
            opt(&self.sigma_path),
            opt(&self.sigma0_path),
            opt(&self.output),
        ];
        let mut out = String::new();
        for (k, v) in Self::KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Random exactly tree-structured covariance: uniform labeled tree, unit
/// variances, edge correlations of magnitude in [`EDGE_CORRELATION_RANGE`]
/// with random sign.
pub fn generate_ground_truth(p: usize, seed: u64) -> Result<CovMatrix> {
    if p < 2 {
        return Err(Error::TooFewVertices { min: 2, got: p });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sequence: Vec<usize> = (0..p - 2).map(|_| rng.random_range(0..p)).collect();
    let tree = SpanningTree::from_prufer(p, &sequence)?;
    let (lo, hi) = EDGE_CORRELATION_RANGE;
    let rho: Vec<f64> = (0..p - 1)
        .map(|_| {
            let magnitude = rng.random_range(lo..=hi);
            if rng.random::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect();
    tree_covariance_from_correlations(&vec![1.0; p], &tree, &rho)
}

/// Random correlation matrix from a Wishart draw with `p + 1` degrees of
/// freedom.
fn random_correlation(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = standard_normal_matrix(rng, p, p + 1);
    let a = &g * g.transpose();
    let mut c = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            c[(i, j)] = if i == j {
                1.0
            } else {
                a[(i, j)] / (a[(i, i)] * a[(j, j)]).sqrt()
            };
        }
    }
    crate::gaussian::symmetrize(&c)
}

/// `Σ₀ = (1 − α) Σ + α P`, `P` a random SPD matrix with the diagonal of `Σ`.
pub fn generate_prior(sigma: &CovMatrix, alpha: f64, seed: u64) -> Result<CovMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let p = sigma.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corr = random_correlation(p, &mut rng);
    let mut out = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            out[(i, j)] = if i == j {
                sigma.get(i, i)
            } else {
                let random = corr[(i, j)] * (sigma.get(i, i) * sigma.get(j, j)).sqrt();
                (1.0 - alpha) * sigma.get(i, j) + alpha * random
            };
        }
    }
    CovMatrix::new(out)
}

/// Adds `weight` times a random correlation matrix scaled to `Σ`'s diagonal.
pub fn perturb(sigma: &CovMatrix, weight: f64, seed: u64) -> Result<CovMatrix> {
    let p = sigma.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corr = random_correlation(p, &mut rng);
    let sd: Vec<f64> = (0..p).map(|i| sigma.get(i, i).sqrt()).collect();
    let mut out = sigma.as_matrix().clone();
    for i in 0..p {
        for j in 0..p {
            out[(i, j)] += weight * corr[(i, j)] * sd[i] * sd[j];
        }
    }
    CovMatrix::new(out)
}

/// White-noise model `D = σ² I` with `tr(H Σ Hᵀ) / tr(D) = 10^(snr_db/10)`.
fn white_noise_model(h: DMatrix<f64>, snr_db: f64, sigma: &CovMatrix) -> Result<LinearModel> {
    let m = h.nrows();
    let signal = (&h * sigma.as_matrix() * h.transpose()).trace();
    let noise_var = signal / (m as f64 * 10f64.powf(snr_db / 10.0));
    let d = CovMatrix::from_diagonal(&vec![noise_var; m])?;
    LinearModel::new(h, d)
}

/// `H` with iid standard-normal entries (row-major draws) and white noise
/// at `snr_db`.
pub fn generate_mixing(
    p: usize,
    m: usize,
    snr_db: f64,
    sigma: &CovMatrix,
    seed: u64,
) -> Result<LinearModel> {
    if m == 0 || m > p {
        return Err(Error::Config(format!("m = {m} outside 1..={p}")));
    }
    if sigma.dim() != p {
        return Err(Error::DimensionMismatch {
            context: "ground truth vs latent dimension",
            expected: p,
            got: sigma.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_err = None;
    for _ in 0..MIXING_REDRAWS {
        let h = standard_normal_matrix(&mut rng, m, p);
        match white_noise_model(h, snr_db, sigma) {
            Ok(model) => return Ok(model),
            Err(e @ Error::RankDeficient { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one draw"))
}

/// Per-trial outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub m: usize,
    pub trial: usize,
    pub latent_kl_em: f64,
    pub latent_kl_prior_tree: f64,
    pub latent_kl_oracle_tree: f64,
    pub iterations_used: usize,
    pub stop_reason: StopReason,
    /// Iterate index with the smallest latent KL; calibrates `l_max`.
    pub best_iteration: usize,
    pub monotonicity_violations: usize,
    pub obs_kl_path: Vec<f64>,
    pub latent_kl_path: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialFailure {
    pub m: usize,
    pub trial: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStderr {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        MeanStderr { mean, stderr }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MSummary {
    pub m: usize,
    pub completed: usize,
    pub failed: usize,
    pub kl_em: MeanStderr,
    pub kl_prior: MeanStderr,
    pub kl_oracle: MeanStderr,
    pub iterations: MeanStderr,
    pub epsilon_stops: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub summaries: Vec<MSummary>,
}

impl SweepResult {
    pub fn records_for(&self, m: usize) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.m == m)
    }
}

/// Inputs shared by every trial of a sweep.
#[derive(Clone, Debug)]
pub struct SweepInputs {
    pub sigma: CovMatrix,
    pub sigma0: CovMatrix,
}

impl SweepInputs {
    /// Loads `Σ`/`Σ₀` from CSV when configured, otherwise generates them.
    pub fn resolve(config: &ExperimentConfig) -> Result<Self> {
        let sigma = match &config.sigma_path {
            Some(path) => CovMatrix::new(read_matrix(path)?)?,
            None => {
                let truth = generate_ground_truth(
                    config.p,
                    derive_seed(config.seed, STREAM_GROUND_TRUTH, 0),
                )?;
                if config.perturbation > 0.0 {
                    perturb(
                        &truth,
                        config.perturbation,
                        derive_seed(config.seed, STREAM_PERTURB, 0),
                    )?
                } else {
                    truth
                }
            }
        };
        if sigma.dim() != config.p {
            return Err(Error::Config(format!(
                "ground truth has dimension {}, config says p = {}",
                sigma.dim(),
                config.p
            )));
        }
        let sigma0 = match &config.sigma0_path {
            Some(path) => CovMatrix::new(read_matrix(path)?)?,
            None => generate_prior(
                &sigma,
                config.alpha,
                derive_seed(config.seed, STREAM_PRIOR, 0),
            )?,
        };
        if sigma0.dim() != config.p {
            return Err(Error::Config(format!(
                "prior has dimension {}, config says p = {}",
                sigma0.dim(),
                config.p
            )));
        }
        Ok(SweepInputs { sigma, sigma0 })
    }
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let inputs = SweepInputs::resolve(config)?;
    run_sweep_with(config, &inputs)
}

/// Runs the sweep on explicit inputs. Trials execute in parallel; results
/// are assembled in `(m, trial)` order.
pub fn run_sweep_with(config: &ExperimentConfig, inputs: &SweepInputs) -> Result<SweepResult> {
    config.validate()?;
    let em_config = EmConfig::new(inputs.sigma0.clone(), config.epsilon, config.l_max)?;
    let prior_tree = chow_liu(&inputs.sigma0)?;
    let kl_prior = kl_cov(&inputs.sigma, &prior_tree.cov)?;
    let kl_oracle = chow_liu(&inputs.sigma)?.kl;

    let jobs: Vec<(usize, usize)> = config
        .m_values
        .iter()
        .flat_map(|&m| (0..config.trials).map(move |t| (m, t)))
        .collect();
    let outcomes: Vec<std::result::Result<TrialRecord, TrialFailure>> = jobs
        .par_iter()
        .map(|&(m, trial)| {
            run_trial(config, inputs, &em_config, m, trial, kl_prior, kl_oracle).map_err(|e| {
                TrialFailure {
                    m,
                    trial,
                    message: e.to_string(),
                }
            })
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    if !jobs.is_empty() && records.is_empty() {
        return Err(Error::AllTrialsFailed(jobs.len()));
    }
    let summaries = config
        .m_values
        .iter()
        .map(|&m| summarize(m, &records, &failures))
        .collect();
    Ok(SweepResult {
        config: config.clone(),
        records,
        failures,
        summaries,
    })
}

fn run_trial(
    config: &ExperimentConfig,
    inputs: &SweepInputs,
    em_config: &EmConfig,
    m: usize,
    trial: usize,
    kl_prior: f64,
    kl_oracle: f64,
) -> Result<TrialRecord> {
    let trial_seed = derive_seed(config.seed, STREAM_TRIAL, trial as u64);
    let model = if config.identity_mixing {
        white_noise_model(DMatrix::identity(m, config.p), config.snr_db, &inputs.sigma)?
    } else {
        generate_mixing(config.p, m, config.snr_db, &inputs.sigma, trial_seed)?
    };
    let obs = sample_observations(
        &model,
        &inputs.sigma,
        config.r,
        derive_seed(trial_seed, STREAM_SAMPLES, 0),
    )?;
    let trace = run_em(em_config, &model, &obs, Some(&inputs.sigma))?;
    let last = trace.final_iterate();
    Ok(TrialRecord {
        m,
        trial,
        latent_kl_em: last.latent_kl.expect("ground truth supplied"),
        latent_kl_prior_tree: kl_prior,
        latent_kl_oracle_tree: kl_oracle,
        iterations_used: trace.len(),
        stop_reason: trace.stop_reason,
        best_iteration: trace.best_latent_index().expect("ground truth supplied"),
        monotonicity_violations: trace.monotonicity_violations,
        obs_kl_path: trace.iterations.iter().map(|it| it.obs_kl).collect(),
        latent_kl_path: trace
            .iterations
            .iter()
            .filter_map(|it| it.latent_kl)
            .collect(),
    })
}

fn summarize(m: usize, records: &[TrialRecord], failures: &[TrialFailure]) -> MSummary {
    let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.m == m).collect();
    let col =
        |f: fn(&TrialRecord) -> f64| MeanStderr::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
    MSummary {
        m,
        completed: rows.len(),
        failed: failures.iter().filter(|f| f.m == m).count(),
        kl_em: col(|r| r.latent_kl_em),
        kl_prior: col(|r| r.latent_kl_prior_tree),
        kl_oracle: col(|r| r.latent_kl_oracle_tree),
        iterations: col(|r| r.iterations_used as f64),
        epsilon_stops: rows
            .iter()
            .filter(|r| r.stop_reason == StopReason::EpsilonReached)
            .count(),
    }
}

/// One-sided paired sign test of `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(Binomial(wins + losses, ½) ≥ wins)`
    pub p_value: f64,
}

pub fn paired_sign_test(a: &[f64], b: &[f64]) -> SignTest {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Less) => wins += 1,
            Some(std::cmp::Ordering::Greater) => losses += 1,
            _ => ties += 1,
        }
    }
    let n = (wins + losses) as u64;
    let p_value = if wins == 0 {
        1.0
    } else {
        let binom = Binomial::new(0.5, n).expect("valid binomial");
        binom.sf(wins as u64 - 1)
    };
    SignTest {
        wins,
        losses,
        ties,
        p_value,
    }
}

/// The flat per-trial table.
pub fn results_csv(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &result.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.m,
            r.trial,
            format_value(r.latent_kl_em),
            format_value(r.latent_kl_prior_tree),
            format_value(r.latent_kl_oracle_tree),
            r.iterations_used,
            r.stop_reason
        );
    }
    out
}

/// One parsed row of [`results_csv`].
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub m: usize,
    pub trial: usize,
    pub kl_em: f64,
    pub kl_prior: f64,
    pub kl_oracle: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
}

pub fn parse_results_csv(text: &str) -> Result<Vec<CsvRow>> {
    let origin = Path::new("<results csv>");
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::Parse {
            path: origin.into(),
            line: 1,
            message: "missing or wrong header".into(),
        });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let err = |message: String| Error::Parse {
                path: origin.into(),
                line: i + 2,
                message,
            };
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 7 {
                return Err(err(format!("expected 7 fields, found {}", f.len())));
            }
            let int = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(format!("bad integer {s:?}")))
            };
            let real = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| err(format!("bad number {s:?}")))
            };
            Ok(CsvRow {
                m: int(f[0])?,
                trial: int(f[1])?,
                kl_em: real(f[2])?,
                kl_prior: real(f[3])?,
                kl_oracle: real(f[4])?,
                iterations: int(f[5])?,
                stop_reason: f[6].parse().map_err(|e: Error| err(e.to_string()))?,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    rng: &'static str,
    snr_definition: &'static str,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Data<'a> {
    csv: String,
    trials: &'a [TrialRecord],
    summary: &'a [MSummary],
    failures: &'a [TrialFailure],
}

#[derive(Serialize)]
struct Document<'a> {
    meta: Meta<'a>,
    data: Data<'a>,
}

/// The structured result document (JSON) with `meta` and `data` sections.
pub fn results_document(result: &SweepResult, csv_name: &str) -> String {
    let doc = Document {
        meta: Meta {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed: result.config.seed,
            rng: "ChaCha8 (rand_chacha), standard normals via rand_distr::StandardNormal",
            snr_definition: "10*log10(tr(H Sigma H^T) / tr(D)), D = sigma^2 I",
            config: &result.config,
        },
        data: Data {
            csv: csv_name.to_string(),
            trials: &result.records,
            summary: &result.summaries,
            failures: &result.failures,
        },
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("result document serializes");
    text.push('\n');
    text
}

/// Writes `<stem>.json` and `<stem>.csv`; returns both paths.
pub fn emit_results(result: &SweepResult, stem: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let stem = stem.as_ref();
    let json_path = stem.with_extension("json");
    let csv_path = stem.with_extension("csv");
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&csv_path, results_csv(result)).map_err(|e| Error::io(&csv_path, e))?;
    let csv_name = csv_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    fs::write(&json_path, results_document(result, &csv_name))
        .map_err(|e| Error::io(&json_path, e))?;
    Ok((json_path, csv_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::chow_liu;
    use approx::assert_abs_diff_eq;

    #[test]
    fn config_parsing() {
        let c =
            ExperimentConfig::parse("p = 6\nm_values = 2, 3\n# comment\nalpha = 0.25 # trailing\n")
                .unwrap();
        assert_eq!(c.p, 6);
        assert_eq!(c.m_values, vec![2, 3]);
        assert_eq!(c.alpha, 0.25);
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("p = 3\np = 4").is_err());
        assert!(ExperimentConfig::parse("p 3").is_err());
        assert!(ExperimentConfig::parse("p = -3").is_err());
        let round = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.m_values = vec![11];
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            alpha: 1.5,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig {
            identity_mixing: true,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        c.m_values = vec![10];
        assert!(c.validate().is_ok());
    }

    #[test]
    fn ground_truth_is_a_tree() {
        for seed in 0..5 {
            let s = generate_ground_truth(7, seed).unwrap();
            assert!(chow_liu(&s).unwrap().kl < 1e-9);
            assert_eq!(s, generate_ground_truth(7, seed).unwrap());
        }
        assert!(generate_ground_truth(1, 0).is_err());
    }

    #[test]
    fn ground_truth_precision_sparsity() {
        let s = generate_ground_truth(6, 7).unwrap();
        let prec = s.inverse();
        let nonzero = (0..6)
            .flat_map(|i| (0..6).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && prec[(i, j)].abs() > 1e-9)
            .count();
        assert_eq!(nonzero, 10);
    }

    #[test]
    fn prior_endpoints() {
        let s = generate_ground_truth(5, 3).unwrap();
        assert_eq!(generate_prior(&s, 0.0, 9).unwrap(), s);
        let full = generate_prior(&s, 1.0, 9).unwrap();
        for i in 0..5 {
            assert_eq!(full.get(i, i), s.get(i, i));
        }
        assert!(kl_cov(&s, &full).unwrap() > 0.0);
        let mid = generate_prior(&s, 0.3, 9).unwrap();
        assert!(kl_cov(&s, &mid).unwrap() > 0.0);
        assert!(generate_prior(&s, -0.1, 9).is_err());
    }

    #[test]
    fn mixing_snr_definition() {
        let s = generate_ground_truth(6, 1).unwrap();
        for (snr, ratio) in [(0.0, 1.0), (20.0, 100.0)] {
            let model = generate_mixing(6, 3, snr, &s, 4).unwrap();
            let signal = (model.h() * s.as_matrix() * model.h().transpose()).trace();
            assert_abs_diff_eq!(
                signal / model.d().as_matrix().trace(),
                ratio,
                epsilon = 1e-9 * ratio
            );
        }
        let a = generate_mixing(6, 3, 20.0, &s, 4).unwrap();
        let b = generate_mixing(6, 3, 20.0, &s, 4).unwrap();
        assert_eq!(a.h(), b.h());
        assert_eq!(a.d(), b.d());
        assert!(generate_mixing(6, 7, 20.0, &s, 4).is_err());
    }

    #[test]
    fn mixing_rows_are_nested_across_m() {
        let s = generate_ground_truth(6, 1).unwrap();
        let small = generate_mixing(6, 3, 20.0, &s, 11).unwrap();
        let large = generate_mixing(6, 5, 20.0, &s, 11).unwrap();
        assert_eq!(small.h(), &large.h().rows(0, 3).into_owned());
    }

    #[test]
    fn sign_test_values() {
        let t = paired_sign_test(&[0.0; 10], &[1.0; 10]);
        assert_eq!(t.wins, 10);
        assert_abs_diff_eq!(t.p_value, 0.5f64.powi(10), epsilon = 1e-15);
        let t = paired_sign_test(&[1.0, 0.0], &[1.0, 2.0]);
        assert_eq!((t.wins, t.losses, t.ties), (1, 0, 1));
        assert_abs_diff_eq!(t.p_value, 0.5, epsilon = 1e-15);
        assert_eq!(paired_sign_test(&[2.0], &[1.0]).p_value, 1.0);
    }

    #[test]
    fn seeds_differ_across_streams() {
        assert_ne!(
            derive_seed(1, STREAM_TRIAL, 0),
            derive_seed(1, STREAM_TRIAL, 1)
        );
        assert_ne!(
            derive_seed(1, STREAM_TRIAL, 0),
            derive_seed(2, STREAM_TRIAL, 0)
        );
        assert_ne!(
            derive_seed(1, STREAM_PRIOR, 0),
            derive_seed(1, STREAM_GROUND_TRUTH, 0)
        );
    }
}
