//! Tree-structured covariance learning for a latent Gaussian vector seen
//! only through a noisy, underdetermined linear mixing `Y = H X + W`.
//!
//! The building blocks are a Chow-Liu tree fit ([`tree::chow_liu`]), the
//! linear observation model ([`linear_model`]), and an EM iteration whose
//! M-step is a Chow-Liu fit to the posterior second moment ([`em::run_em`]).
//! [`experiment`] drives randomized sweeps over the observation dimension.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub use nalgebra;

pub mod csv_io;
pub mod em;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod linear_model;
pub mod tree;

pub use em::{
    compute_omega, em_step, posterior, run_em, EmConfig, EmIteration, EmTrace, PosteriorGaussian,
    StopReason,
};
pub use error::{Error, Result};
pub use gaussian::{
    correlation, kl_cov, kl_gaussian, kl_tree_simplified, pairwise_mutual_information, CovMatrix,
    GaussianModel,
};
pub use linear_model::{
    empirical_gaussian, observation_cov, observation_kl, sample_observations, LinearModel,
    ObservationSet,
};
pub use tree::{
    brute_force_optimal_tree, chow_liu, edge_set_equal, tree_covariance, SpanningTree,
    TreeApproxResult,
};
