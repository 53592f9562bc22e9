//! Large-scale two-sample mean testing with unequal variances and few replicates.
//!
//! The crate provides:
//!
//! - self-contained special functions and the exact sampling densities of the
//!   per-feature sufficient statistics ([`distributions`]);
//! - reduction of raw (optionally precision-weighted) observations to complete
//!   sufficient statistics ([`summary`]);
//! - nonparametric maximum likelihood estimation of discrete nuisance priors
//!   over variance ratios and variance pairs ([`npmle`]);
//! - per-feature p-values: the VREPB and DVEPB empirical partially Bayes tests,
//!   the pooled t-test at a fixed variance ratio, the equal-variance t-test,
//!   Welch's test, and the fiducial Behrens-Fisher test ([`pvalues`]);
//! - Benjamini-Hochberg false discovery rate control ([`mtp`]);
//! - a seeded, fully reproducible simulation harness ([`simulate`]).

pub mod distributions;
pub mod error;
pub mod mtp;
pub mod npmle;
pub mod pvalues;
pub mod simulate;
pub mod summary;

mod quad;

pub use distributions::Tolerance;
pub use error::{Error, Result};
pub use mtp::RejectionResult;
pub use npmle::{DiscretePrior1D, DiscretePrior2D, NpmleFit};
pub use pvalues::{MethodId, Replication, TestRow};
pub use summary::{DerivedStats, FeatureSummary};
