//! The noisy linear mixing model `Y = H X + W`, sampling from it, and the
//! observation statistics the EM iteration consumes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gaussian::{kl_cov, symmetrize, CovMatrix, GaussianModel};

/// Relative singular-value threshold for the full-row-rank check on `H`.
pub const RANK_TOL: f64 = 1e-10;

/// Mixing matrix `H` (m × p) and noise covariance `D` (m × m).
#[derive(Clone, Debug)]
pub struct LinearModel {
    h: DMatrix<f64>,
    d: CovMatrix,
    /// `D⁻¹ H`
    d_inv_h: DMatrix<f64>,
    /// `Hᵀ D⁻¹ H`
    information: DMatrix<f64>,
}

impl LinearModel {
    /// Builds a model with `1 ≤ m ≤ p` and `H` of full row rank.
    pub fn new(h: DMatrix<f64>, d: CovMatrix) -> Result<Self> {
        let model = Self::new_unchecked_rank(h, d)?;
        let rank = numerical_rank(&model.h);
        if rank < model.m() {
            return Err(Error::RankDeficient {
                rank,
                rows: model.m(),
            });
        }
        Ok(model)
    }

    /// Like [`LinearModel::new`] but skips the rank check, so degenerate
    /// mixings such as `H = 0` can be represented.
    pub fn new_unchecked_rank(h: DMatrix<f64>, d: CovMatrix) -> Result<Self> {
        let (m, p) = h.shape();
        if m == 0 || p == 0 {
            return Err(Error::Config(format!("mixing matrix is {m}x{p}")));
        }
        if m > p {
            return Err(Error::Config(format!(
                "mixing matrix has more rows than columns ({m}x{p})"
            )));
        }
        if d.dim() != m {
            return Err(Error::DimensionMismatch {
                context: "noise covariance vs mixing rows",
                expected: m,
                got: d.dim(),
            });
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("mixing matrix"));
        }
        let d_inv_h = d.solve(&h);
        let information = symmetrize(&(h.transpose() * &d_inv_h));
        Ok(LinearModel {
            h,
            d,
            d_inv_h,
            information,
        })
    }

    #[inline]
    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    #[inline]
    pub fn d(&self) -> &CovMatrix {
        &self.d
    }

    /// Observation dimension.
    #[inline]
    pub fn m(&self) -> usize {
        self.h.nrows()
    }

    /// Latent dimension.
    #[inline]
    pub fn p(&self) -> usize {
        self.h.ncols()
    }

    pub fn d_inv_h(&self) -> &DMatrix<f64> {
        &self.d_inv_h
    }

    pub fn information(&self) -> &DMatrix<f64> {
        &self.information
    }

    fn check_latent(&self, sigma: &CovMatrix) -> Result<()> {
        if sigma.dim() != self.p() {
            return Err(Error::DimensionMismatch {
                context: "latent covariance vs mixing columns",
                expected: self.p(),
                got: sigma.dim(),
            });
        }
        Ok(())
    }
}

fn numerical_rank(h: &DMatrix<f64>) -> usize {
    let sv = h.clone().svd(false, false).singular_values;
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * largest).count()
}

/// `R` observation vectors (one per row) with their cached moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    samples: DMatrix<f64>,
    mean: DVector<f64>,
    second_moment: DMatrix<f64>,
    centered_cov: DMatrix<f64>,
}

impl ObservationSet {
    /// `samples` is R × m, one observation per row.
    pub fn from_samples(samples: DMatrix<f64>) -> Result<Self> {
        let (r, m) = samples.shape();
        if r == 0 {
            return Err(Error::EmptyObservations);
        }
        if m == 0 {
            return Err(Error::Config("observations have zero columns".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("observations"));
        }
        let rf = r as f64;
        let mean = samples.row_mean().transpose();
        let second_moment = symmetrize(&(samples.transpose() * &samples / rf));
        let mut centered = samples.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let centered_cov = symmetrize(&(centered.transpose() * &centered / rf));
        Ok(ObservationSet {
            samples,
            mean,
            second_moment,
            centered_cov,
        })
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `(1/R) Σ y yᵀ`
    pub fn second_moment(&self) -> &DMatrix<f64> {
        &self.second_moment
    }

    /// `(1/R) Σ (y − ȳ)(y − ȳ)ᵀ`
    pub fn centered_cov(&self) -> &DMatrix<f64> {
        &self.centered_cov
    }

    fn check_model(&self, model: &LinearModel) -> Result<()> {
        if self.dim() != model.m() {
            return Err(Error::DimensionMismatch {
                context: "observation dimension vs mixing rows",
                expected: model.m(),
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// Draws `r` samples `y = H x + w`, `x ~ N(0, Σ)`, `w ~ N(0, D)`.
///
/// The generator is ChaCha8 seeded with `seed`. All latent draws (r × p
/// standard normals, row-major) are taken before all noise draws (r × m),
/// so runs that share a seed and `p` see the same latent vectors whatever
/// `m` is.
pub fn sample_observations(
    model: &LinearModel,
    sigma_true: &CovMatrix,
    r: usize,
    seed: u64,
) -> Result<ObservationSet> {
    model.check_latent(sigma_true)?;
    if r == 0 {
        return Err(Error::EmptyObservations);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z_x = standard_normal_matrix(&mut rng, r, model.p());
    let z_w = standard_normal_matrix(&mut rng, r, model.m());
    let x = z_x * sigma_true.cholesky_factor().transpose();
    let w = z_w * model.d().cholesky_factor().transpose();
    let y = x * model.h().transpose() + w;
    ObservationSet::from_samples(y)
}

pub(crate) fn standard_normal_matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
) -> DMatrix<f64> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(StandardNormal.sample(rng));
    }
    DMatrix::from_row_slice(rows, cols, &data)
}

/// `H Σ Hᵀ + D`.
pub fn observation_cov(model: &LinearModel, sigma: &CovMatrix) -> Result<CovMatrix> {
    model.check_latent(sigma)?;
    let hs = model.h() * sigma.as_matrix();
    let cov = &hs * model.h().transpose() + model.d().as_matrix();
    CovMatrix::new(symmetrize(&cov))
}

/// The empirical Gaussian `N(0, S_Y)` from the centered sample covariance.
pub fn empirical_gaussian(obs: &ObservationSet) -> Result<GaussianModel> {
    match CovMatrix::new(obs.centered_cov.clone()) {
        Ok(cov) => Ok(GaussianModel::new(cov)),
        Err(Error::NotPositiveDefinite { .. }) => {
            let eig = SymmetricEigen::new(obs.centered_cov.clone());
            let largest = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
            let rank = eig
                .eigenvalues
                .iter()
                .filter(|&&e| largest > 0.0 && e > RANK_TOL * largest)
                .count();
            Err(Error::InsufficientSamples {
                dim: obs.dim(),
                rank,
                samples: obs.len(),
            })
        }
        Err(e) => Err(e),
    }
}

/// `D(N(0, S_Y) ‖ N(0, H Σ̃ Hᵀ + D))` with the centered sample covariance.
pub fn observation_kl(
    obs: &ObservationSet,
    model: &LinearModel,
    sigma_tree: &CovMatrix,
) -> Result<f64> {
    obs.check_model(model)?;
    let empirical = empirical_gaussian(obs)?;
    kl_cov(empirical.cov(), &observation_cov(model, sigma_tree)?)
}

/// `D(N(0, M) ‖ N(0, H Σ̃ Hᵀ + D))` with the uncentered second moment `M`.
///
/// Up to a constant this is the negated zero-mean average log-likelihood,
/// which is the objective each EM step cannot increase.
pub fn observation_kl_uncentered(
    obs: &ObservationSet,
    model: &LinearModel,
    sigma_tree: &CovMatrix,
) -> Result<f64> {
    obs.check_model(model)?;
    let moment =
        CovMatrix::new(obs.second_moment.clone()).map_err(|_| Error::InsufficientSamples {
            dim: obs.dim(),
            rank: numerical_rank(&obs.samples),
            samples: obs.len(),
        })?;
    kl_cov(&moment, &observation_cov(model, sigma_tree)?)
}

/// `(1/R) Σ_r ln f(y_r)` under the zero-mean model `N(0, H Σ̃ Hᵀ + D)`.
pub fn average_log_likelihood(
    obs: &ObservationSet,
    model: &LinearModel,
    sigma: &CovMatrix,
) -> Result<f64> {
    obs.check_model(model)?;
    let cov = observation_cov(model, sigma)?;
    let m = model.m() as f64;
    let quad = cov.solve(&obs.second_moment).trace();
    Ok(-0.5 * (m * (2.0 * std::f64::consts::PI).ln() + cov.log_det() + quad))
}
