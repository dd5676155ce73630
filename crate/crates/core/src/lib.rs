//! Physics-consistent beyond-diagonal RIS modelling and optimization.
//!
//! The crate is organised bottom-up:
//!
//! * [`netparams`] – multiport Z/Y/S parameters and synthetic scenarios.
//! * [`coupling`] – thin-dipole mutual impedance and near-field links.
//! * [`channels`] – exact, explicit and compact channel models plus the
//!   unilateral / matched / uncoupled approximations.
//! * [`topology`] – RIS architecture masks and the optimal band rule.
//! * [`symfit`] – masked symmetric least squares for susceptance fitting.
//! * [`sdpsolver`] – dense two-constraint complex SDP with rank-one extraction.
//! * [`optim`] – SISO closed form, single-stream MIMO via SDR, multiuser ADMM.
//! * [`harness`] – configuration, Monte-Carlo runner and CSV output.

pub mod channels;
pub mod coupling;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod netparams;
pub mod optim;
pub mod sdpsolver;
pub mod symfit;
pub mod topology;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense real matrix.
pub type RMat = nalgebra::DMatrix<f64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;
