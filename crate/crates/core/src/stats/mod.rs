//! Self-contained statistics kernel, generic over [`Scalar`](crate::Scalar)
//! and reentrant.

mod correlation;
mod kruskal;
mod ols;
mod special;

pub use correlation::{pearson, CorrelationResult};
pub use kruskal::{kruskal_wallis, KruskalWallis};
pub use ols::{fit_ols, DesignMatrix, RegressionFit, INTERCEPT};
pub use special::{
    chi_square_sf, f_sf, ln_beta, ln_gamma, reg_incomplete_beta, reg_upper_gamma,
    student_t_sf_two_sided,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("continued fraction failed to converge ({0})")]
    NoConvergence(&'static str),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {need} observations, got {got}")]
    TooFewObservations { need: usize, got: usize },
    #[error("constant input vector `{0}` (zero variance)")]
    ConstantInput(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("design has {rows} rows but {cols} columns; need rows > columns")]
    Underdetermined { rows: usize, cols: usize },
    #[error("design matrix is rank deficient; dependent column(s): {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
}

impl StatsError {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            StatsError::NoConvergence(_) | StatsError::RankDeficient(_)
        )
    }
}
