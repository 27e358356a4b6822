//! Sparse model-based clustering of three-way data.
//!
//! Each unit is a `p × q` matrix modelled by a finite mixture of matrix-normal
//! distributions. Component means are shrunk by a group (row-wise) or
//! entry-wise lasso, and row and column precision matrices by graphical-lasso
//! penalties, inside a penalized EM algorithm. Models are compared by a
//! modified BIC that counts only parameters that were not shrunk to zero.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix it to `f64`.

pub mod data;
pub mod em;
pub mod error;
pub mod glasso;
pub mod matnorm;
pub mod mean_lasso;
pub mod mean_prox;
pub mod penalty;
mod scalar;
pub mod select;
pub mod sim;

pub use data::{load_three_way, preprocess, save_three_way, DataFormat, PreprocessOptions, ThreeWayData};
pub use em::{classify, fit, normalize_identifiability, FitOptions, FitResult, FitStatus, MixtureParams, Responsibilities};
pub use error::{Error, Result};
pub use glasso::{glasso_solve, GlassoFit, GlassoProblem};
pub use matnorm::{matnorm_logdensity, matnorm_sample, SpdMatrix};
pub use penalty::{MeanPenalty, PenaltyConfig};
pub use scalar::Scalar;
pub use select::{bic, count_nonzero, grid_search, GridOptions, GridSearchResult, GridSpec};

pub type ThreeWayData64 = ThreeWayData<f64>;
pub type ThreeWayData32 = ThreeWayData<f32>;
pub type SpdMatrix64 = SpdMatrix<f64>;
pub type SpdMatrix32 = SpdMatrix<f32>;
pub type MixtureParams64 = MixtureParams<f64>;
pub type MixtureParams32 = MixtureParams<f32>;
pub type PenaltyConfig64 = PenaltyConfig<f64>;
pub type PenaltyConfig32 = PenaltyConfig<f32>;
pub type FitResult64 = FitResult<f64>;
pub type FitResult32 = FitResult<f32>;
pub type GridSearchResult64 = GridSearchResult<f64>;
