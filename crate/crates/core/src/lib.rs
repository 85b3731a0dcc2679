//! Per-bin decision thresholds for score-based binary classifiers.
//!
//! A base classifier's scores are modelled as class-conditional Gaussians
//! within each bin of an auxiliary feature space. Solving for one threshold
//! per bin at a common benefit-cost ratio `lambda`, and sweeping `lambda`,
//! traces an ROC curve that is never worse than that of a single fixed
//! threshold under the model.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binning;
pub mod dataio;
pub mod error;
pub mod featselect;
pub mod model;
pub mod oer;
pub mod pipeline;
pub mod roc;
pub mod synth;

pub use error::{OerError, Result};
