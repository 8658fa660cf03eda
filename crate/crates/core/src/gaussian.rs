//! Zero-mean multivariate Gaussians and their closed-form information measures.
//!
//! All information quantities are in nats.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Maximum absolute asymmetry tolerated by [`CovMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// KL values in `[-KL_ROUNDOFF, 0)` are treated as roundoff and clamped to zero.
pub const KL_ROUNDOFF: f64 = 1e-12;

/// Correlations at or beyond this magnitude are rejected as degenerate.
pub const MAX_ABS_CORRELATION: f64 = 1.0 - 1e-12;

/// A symmetric positive definite covariance matrix.
///
/// The Cholesky factor is computed once at construction; a successful
/// factorization is the positive-definiteness check.
#[derive(Clone, Debug)]
pub struct CovMatrix {
    entries: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl PartialEq for CovMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl CovMatrix {
    /// Validates and wraps `entries`. The stored matrix is the exact
    /// symmetrization `(A + Aᵀ) / 2`, which is a no-op for symmetric input.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = entries.shape();
        if rows == 0 || rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("covariance matrix"));
        }
        let asymmetry = max_asymmetry(&entries);
        if asymmetry > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let entries = if asymmetry == 0.0 {
            entries
        } else {
            (&entries + entries.transpose()) * 0.5
        };
        let chol = Cholesky::new(entries.clone()).ok_or(Error::NotPositiveDefinite {
            context: "cholesky factorization failed",
        })?;
        Ok(CovMatrix { entries, chol })
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                context: "row-major covariance data",
                expected: dim * dim,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(
            &nalgebra::DVector::from_column_slice(diag),
        ))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    #[inline]
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.entries[(u, v)]
    }

    pub fn variance(&self, u: usize) -> f64 {
        self.entries[(u, u)]
    }

    /// Lower-triangular Cholesky factor `L` with `Σ = L Lᵀ`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `ln |Σ|` from the diagonal of the Cholesky factor.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..self.dim()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.chol.inverse();
        symmetrize(&inv)
    }

    /// Solves `Σ X = B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.entries * factor)
    }

    fn check_index(&self, u: usize) -> Result<()> {
        if u >= self.dim() {
            return Err(Error::VertexOutOfRange {
                vertex: u,
                dim: self.dim(),
            });
        }
        Ok(())
    }
}

/// A zero-mean Gaussian `N(0, Σ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianModel {
    cov: CovMatrix,
}

impl GaussianModel {
    pub fn new(cov: CovMatrix) -> Self {
        GaussianModel { cov }
    }

    pub fn cov(&self) -> &CovMatrix {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    /// Differential entropy `½ (p ln 2πe + ln|Σ|)`.
    pub fn entropy(&self) -> f64 {
        let p = self.dim() as f64;
        0.5 * (p * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + self.cov.log_det())
    }

    /// Log-density at `x`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let p = self.dim();
        if x.len() != p {
            return Err(Error::DimensionMismatch {
                context: "log_density point",
                expected: p,
                got: x.len(),
            });
        }
        let xv = DMatrix::from_column_slice(p, 1, x);
        let quad = (xv.transpose() * self.cov.solve(&xv))[(0, 0)];
        Ok(-0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + self.cov.log_det() + quad))
    }
}

impl From<CovMatrix> for GaussianModel {
    fn from(cov: CovMatrix) -> Self {
        GaussianModel::new(cov)
    }
}

/// `D(N(0, Σ₀) ‖ N(0, Σ₁))`.
pub fn kl_gaussian(p0: &GaussianModel, p1: &GaussianModel) -> Result<f64> {
    kl_cov(&p0.cov, &p1.cov)
}

/// `½ (tr(Σ₁⁻¹Σ₀) − p + ln|Σ₁| − ln|Σ₀|)`, evaluated through Cholesky
/// log-determinants.
pub fn kl_cov(sigma0: &CovMatrix, sigma1: &CovMatrix) -> Result<f64> {
    let p = sigma0.dim();
    if sigma1.dim() != p {
        return Err(Error::DimensionMismatch {
            context: "kl_gaussian",
            expected: p,
            got: sigma1.dim(),
        });
    }
    if sigma0.entries == sigma1.entries {
        return Ok(0.0);
    }
    let trace = sigma1.solve(&sigma0.entries).trace();
    let kl = 0.5 * (trace - p as f64 + sigma1.log_det() - sigma0.log_det());
    clamp_kl(kl)
}

pub(crate) fn clamp_kl(kl: f64) -> Result<f64> {
    if kl.is_nan() {
        return Err(Error::NonFinite("KL divergence"));
    }
    if kl >= 0.0 {
        Ok(kl)
    } else if kl >= -KL_ROUNDOFF {
        Ok(0.0)
    } else {
        Err(Error::NegativeKl(kl))
    }
}

/// `−½ ln |Σ Σ̃⁻¹|`, the KL divergence from `Σ` to a tree covariance `Σ̃`
/// that matches `Σ` on every vertex and tree edge. For any other `Σ̃` the
/// value is not a divergence and may be negative.
pub fn kl_tree_simplified(sigma: &CovMatrix, sigma_tree: &CovMatrix) -> Result<f64> {
    if sigma.dim() != sigma_tree.dim() {
        return Err(Error::DimensionMismatch {
            context: "kl_tree_simplified",
            expected: sigma.dim(),
            got: sigma_tree.dim(),
        });
    }
    Ok(0.5 * (sigma_tree.log_det() - sigma.log_det()))
}

/// `Σ_uv / √(Σ_uu Σ_vv)`.
pub fn correlation(sigma: &CovMatrix, u: usize, v: usize) -> Result<f64> {
    sigma.check_index(u)?;
    sigma.check_index(v)?;
    if u == v {
        return Err(Error::SameVertex(u));
    }
    for w in [u, v] {
        if sigma.get(w, w) <= 0.0 {
            return Err(Error::ZeroVariance(w));
        }
    }
    Ok(sigma.get(u, v) / (sigma.get(u, u) * sigma.get(v, v)).sqrt())
}

/// Gaussian mutual information between coordinates `u` and `v`:
/// `−½ ln(1 − ρ²)`.
pub fn pairwise_mutual_information(sigma: &CovMatrix, u: usize, v: usize) -> Result<f64> {
    let rho = correlation(sigma, u, v)?;
    mutual_information_from_correlation(rho).map_err(|_| Error::DegenerateCorrelation {
        u: u.min(v),
        v: u.max(v),
        rho,
    })
}

pub(crate) fn mutual_information_from_correlation(rho: f64) -> std::result::Result<f64, ()> {
    if !(rho.abs() < MAX_ABS_CORRELATION) {
        return Err(());
    }
    Ok(-0.5 * (-rho * rho).ln_1p())
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
