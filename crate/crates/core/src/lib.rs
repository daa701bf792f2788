//! Sparse covariance-fitting recursive filter for tracking a time-varying set
//! of (position, intensity) parameters observed through a uniform linear array.
//!
//! The crate is organised bottom-up:
//!
//! - [`array`]: steering vectors, hyper-state covariances, likelihoods and
//!   synthetic snapshots.
//! - [`spice`]: the weighted SPICE program on a grid, solved by cyclic
//!   coordinate descent, and support extraction.
//! - [`filter`]: the recursive filter (update, MAP estimate, Laplace
//!   curvatures, projected prediction).
//! - [`baselines`]: RELAX with an information criterion, a grid PHD filter,
//!   sliding-window SPICE, MUSIC and a projection subspace tracker.
//! - [`scenario`], [`metrics`], [`montecarlo`]: ground truth generators,
//!   evaluation metrics and the Monte Carlo harness.
//!
//! Trial-level loops run on rayon when the `parallel` feature is enabled
//! (default); [`Execution::Sequential`] forces the single-threaded path.

pub mod array;
pub mod baselines;
mod error;
pub mod filter;
pub mod linalg;
pub mod metrics;
pub mod montecarlo;
mod par;
pub mod scenario;
pub mod spice;

pub use array::{HyperState, Snapshot, SourceElement, SteeringManifold};
pub use error::{Error, Result};
pub use par::Execution;
pub use spice::{Dictionary, Grid};

pub use num_complex::Complex64;

/// Dense complex matrix used for covariances and projections.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense complex vector used for snapshots and steering vectors.
pub type CVector = nalgebra::DVector<Complex64>;
