use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular or ill-conditioned (condition estimate {cond:.3e}) in {context}")]
    Singular { context: String, cond: f64 },

    #[error("dimension mismatch in {context}: {detail}")]
    Dimension { context: String, detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("real part of the reduced RIS admittance is not positive definite (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("scenario resampling budget of {attempts} attempts exhausted")]
    ResampleBudget { attempts: usize },

    #[error("quadrature did not reach relative tolerance {tol:.1e} (last change {change:.3e})")]
    QuadratureNonConvergence { tol: f64, change: f64 },

    #[error("matrix is not symmetric within tolerance (deviation {deviation:.3e})")]
    NotSymmetric { deviation: f64 },

    #[error("entry ({row}, {col}) lies outside the topology mask")]
    MaskViolation { row: usize, col: usize },

    #[error("SDP solver stopped after {iterations} iterations (gap {gap:.3e}, infeasibility {infeas:.3e})")]
    SdpMaxIterations { iterations: usize, gap: f64, infeas: f64 },

    #[error("SDP appears infeasible or unbounded: {0}")]
    SdpInfeasible(String),

    #[error("rank reduction of the SDP solution failed: {0}")]
    Purification(String),

    #[error("map condition violated: {0}")]
    SymmetryCondition(String),

    #[error("RIS state recovery residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    RecoveryResidual {
        residual: f64,
        tolerance: f64,
        /// Best-effort (minimal-norm) susceptance that produced the residual.
        b_i: nalgebra::DMatrix<f64>,
    },

    #[error("ADMM diverged at iteration {iteration} (augmented Lagrangian {value:.3e})")]
    AdmmDivergence { iteration: usize, value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
