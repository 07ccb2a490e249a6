//! Direction-of-arrival estimation for large uniform linear arrays.
//!
//! When the array size `N` and the snapshot count `T` are of the same order,
//! the sample covariance matrix is a poor proxy of the population covariance
//! and classical subspace estimators pick up dimension-dependent biases. This
//! crate implements:
//!
//! - the classical ESPRIT and MUSIC estimators,
//! - their debiased counterparts G-ESPRIT and G-MUSIC, built on consistent
//!   estimates of the eigenvector shrinkage factors of a spiked sample
//!   covariance model,
//! - a deterministic theory layer (Marčenko–Pastur support and Stieltjes
//!   transform, spike forward/inverse maps, asymptotic ESPRIT limits,
//!   phase-transition thresholds, closed-form steering overlaps),
//! - a dense complex matrix kernel (Hermitian eigendecomposition, small
//!   general eigenvalues, principal-minor sums, cycle-product distances),
//! - a seeded, reproducible Monte Carlo harness with CSV/JSON/plot-data
//!   output, driven by the `doa-rmt` CLI.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod matkern;
pub mod rmttheory;
pub mod sigmodel;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
