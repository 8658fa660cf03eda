//! EM iteration for a tree-structured latent covariance.
//!
//! The E-step is the exact Gaussian posterior of `X` given `Y` under the
//! current tree covariance. The M-step re-fits a Chow-Liu tree to the
//! posterior-averaged second moment
//!
//! ```text
//! Ω = C + C Hᵀ D⁻¹ M D⁻¹ H C,    C = (Σ̃⁻¹ + Hᵀ D⁻¹ H)⁻¹
//! ```
//!
//! where `M` is the uncentered observation second moment.

use log::warn;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{kl_cov, symmetrize, CovMatrix};
use crate::linear_model::{observation_kl, LinearModel, ObservationSet};
use crate::tree::{chow_liu, SpanningTree};

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_L_MAX: usize = 20;

/// Slack allowed on the per-iteration decrease of the observation KL.
pub const MONOTONE_SLACK: f64 = 1e-6;

/// Posterior `X | Y = y ~ N(gain · y, cov)`.
#[derive(Clone, Debug)]
pub struct PosteriorGaussian {
    /// `C Hᵀ D⁻¹`, p × m.
    pub gain: DMatrix<f64>,
    /// `C = (Σ̃⁻¹ + Hᵀ D⁻¹ H)⁻¹`
    pub cov: CovMatrix,
}

impl PosteriorGaussian {
    pub fn mean(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.gain.ncols() {
            return Err(Error::DimensionMismatch {
                context: "posterior mean observation",
                expected: self.gain.ncols(),
                got: y.len(),
            });
        }
        let yv = nalgebra::DVector::from_column_slice(y);
        Ok((&self.gain * yv).iter().copied().collect())
    }
}

pub fn posterior(sigma_tree: &CovMatrix, model: &LinearModel) -> Result<PosteriorGaussian> {
    if sigma_tree.dim() != model.p() {
        return Err(Error::DimensionMismatch {
            context: "tree covariance vs mixing columns",
            expected: model.p(),
            got: sigma_tree.dim(),
        });
    }
    let precision = sigma_tree.inverse() + model.information();
    let precision =
        CovMatrix::new(symmetrize(&precision)).map_err(|_| Error::NotPositiveDefinite {
            context: "posterior precision",
        })?;
    let cov = CovMatrix::new(precision.inverse()).map_err(|_| Error::NotPositiveDefinite {
        context: "posterior covariance",
    })?;
    let gain = cov.as_matrix() * model.d_inv_h().transpose();
    Ok(PosteriorGaussian { gain, cov })
}

/// Posterior-averaged latent second moment `(1/R) Σ E[X Xᵀ | Y = y]`.
pub fn compute_omega(
    sigma_tree: &CovMatrix,
    model: &LinearModel,
    obs: &ObservationSet,
) -> Result<CovMatrix> {
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    if obs.dim() != model.m() {
        return Err(Error::DimensionMismatch {
            context: "observation dimension vs mixing rows",
            expected: model.m(),
            got: obs.dim(),
        });
    }
    let post = posterior(sigma_tree, model)?;
    let spread = &post.gain * obs.second_moment() * post.gain.transpose();
    CovMatrix::new(symmetrize(&(post.cov.as_matrix() + spread)))
        .map_err(|_| Error::NotPositiveDefinite { context: "omega" })
}

/// One EM iteration: `chow_liu(Ω(Σ̃))`.
pub fn em_step(
    sigma_tree: &CovMatrix,
    model: &LinearModel,
    obs: &ObservationSet,
) -> Result<(CovMatrix, SpanningTree)> {
    let omega = compute_omega(sigma_tree, model, obs)?;
    let fit = chow_liu(&omega)?;
    Ok((fit.cov, fit.tree))
}

#[derive(Clone, Debug)]
pub struct EmConfig {
    sigma0: CovMatrix,
    epsilon: f64,
    l_max: usize,
}

impl EmConfig {
    pub fn new(sigma0: CovMatrix, epsilon: f64, l_max: usize) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if l_max == 0 {
            return Err(Error::Config("l_max must be at least 1".into()));
        }
        Ok(EmConfig {
            sigma0,
            epsilon,
            l_max,
        })
    }

    pub fn with_defaults(sigma0: CovMatrix) -> Self {
        EmConfig {
            sigma0,
            epsilon: DEFAULT_EPSILON,
            l_max: DEFAULT_L_MAX,
        }
    }

    pub fn sigma0(&self) -> &CovMatrix {
        &self.sigma0
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopReason {
    EpsilonReached,
    LmaxReached,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::EpsilonReached => "epsilon",
            StopReason::LmaxReached => "lmax",
        }
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StopReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" => Ok(StopReason::EpsilonReached),
            "lmax" => Ok(StopReason::LmaxReached),
            other => Err(Error::Config(format!("unknown stop reason {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmIteration {
    /// 1-based iterate index `l`.
    pub index: usize,
    pub sigma_tree: CovMatrix,
    pub tree: SpanningTree,
    /// Observation-space KL from the empirical Gaussian to the model.
    pub obs_kl: f64,
    /// KL from the ground-truth latent Gaussian to this iterate, if known.
    pub latent_kl: Option<f64>,
    /// KL from the previous iterate to this one; `None` for the first.
    pub step_kl: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct EmTrace {
    pub iterations: Vec<EmIteration>,
    pub stop_reason: StopReason,
    /// Iterations whose `obs_kl` rose by more than [`MONOTONE_SLACK`].
    pub monotonicity_violations: usize,
}

impl EmTrace {
    pub fn final_iterate(&self) -> &EmIteration {
        self.iterations.last().expect("trace is never empty")
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Index `l` of the iterate closest to the ground truth, when known.
    /// Harnesses use it to calibrate `l_max` on training scenarios.
    pub fn best_latent_index(&self) -> Option<usize> {
        self.iterations
            .iter()
            .filter_map(|it| it.latent_kl.map(|kl| (it.index, kl)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(index, _)| index)
    }
}

/// Runs EM from `Σ̃¹ = chow_liu(Σ₀)` until the KL between consecutive
/// iterates drops below `epsilon` or `l_max` iterates exist.
pub fn run_em(
    config: &EmConfig,
    model: &LinearModel,
    obs: &ObservationSet,
    ground_truth: Option<&CovMatrix>,
) -> Result<EmTrace> {
    let p = model.p();
    if config.sigma0.dim() != p {
        return Err(Error::DimensionMismatch {
            context: "initial covariance vs mixing columns",
            expected: p,
            got: config.sigma0.dim(),
        });
    }
    if let Some(truth) = ground_truth {
        if truth.dim() != p {
            return Err(Error::DimensionMismatch {
                context: "ground truth vs mixing columns",
                expected: p,
                got: truth.dim(),
            });
        }
    }
    let record = |index: usize, sigma_tree: CovMatrix, tree: SpanningTree, step_kl: Option<f64>| {
        let obs_kl = observation_kl(obs, model, &sigma_tree)?;
        let latent_kl = ground_truth
            .map(|truth| kl_cov(truth, &sigma_tree))
            .transpose()?;
        Ok::<_, Error>(EmIteration {
            index,
            sigma_tree,
            tree,
            obs_kl,
            latent_kl,
            step_kl,
        })
    };

    let first = chow_liu(&config.sigma0)?;
    let mut iterations = vec![record(1, first.cov, first.tree, None)?];
    let mut violations = 0;
    let stop_reason = loop {
        if iterations.len() >= config.l_max {
            break StopReason::LmaxReached;
        }
        let current = iterations.last().unwrap();
        let (next_cov, next_tree) = em_step(&current.sigma_tree, model, obs)?;
        let step_kl = kl_cov(&current.sigma_tree, &next_cov)?;
        let previous_obs_kl = current.obs_kl;
        let next = record(iterations.len() + 1, next_cov, next_tree, Some(step_kl))?;
        if next.obs_kl > previous_obs_kl + MONOTONE_SLACK {
            violations += 1;
            warn!(
                "observation KL increased at iteration {}: {} -> {}",
                next.index, previous_obs_kl, next.obs_kl
            );
        }
        iterations.push(next);
        if step_kl < config.epsilon {
            break StopReason::EpsilonReached;
        }
    };
    Ok(EmTrace {
        iterations,
        stop_reason,
        monotonicity_violations: violations,
    })
}
