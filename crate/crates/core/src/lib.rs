//! Reversible signal camouflage and the Chisini-Jensen-Shannon kernel toolkit.
//!
//! The crate is organised the way data flows through an experiment:
//!
//! * [`ingest`] reads or synthesizes multi-sensor recordings and turns them
//!   into labeled, cleaned, split datasets.
//! * [`encode`] camouflages each fused vector as a tiny image or an audio clip
//!   and inverts it again from sidecar metadata.
//! * [`features`] extracts GIST-style texture and MFCC descriptors, plus PCA.
//! * [`divergence`] holds the Chisini means, CJSD / M-CJSD and the per-sample
//!   KDE distributions they are evaluated on.
//! * [`kernels`] builds the 21-kernel grid and Gram matrices.
//! * [`classify`] trains SVMs on precomputed Grams (SMO), a small MLP
//!   benchmark, and runs nested cross-validation.
//! * [`anomaly`] has the novelty detectors: one-class SVM, Isolation Forest
//!   and GMM with isotonic calibration.
//! * [`eval`] computes confusion matrices, metrics, curves and error bars.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the matrix formulas they implement.
#![allow(clippy::needless_range_loop)]

pub mod anomaly;
pub mod classify;
pub mod divergence;
pub mod encode;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod kernels;
pub mod smo;

mod error;

pub use error::{Error, Result};
