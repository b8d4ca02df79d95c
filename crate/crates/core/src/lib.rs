//! Online open-world classification.
//!
//! Three streaming learners share an incrementally learned low-rank
//! Mahalanobis metric:
//!
//! * [`ncm::NcmClassifier`]: online nearest class mean (closed set).
//! * [`nno::OnnoClassifier`]: nearest class mean with an RBF confidence and a
//!   self-tuned rejection threshold, so it can answer "unknown".
//! * [`nbc::NbcClassifier`]: a growing set of local balls with per-ball class
//!   histograms, local confidences and a Hoeffding-widened threshold.
//!
//! [`stream`] generates the evaluation scenarios and runs the
//! predict / score / update loop; [`eval`] holds the online accuracy
//! accounting; [`dataio`] covers feature files, whitening, synthetic data and
//! model snapshots.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod learner;
pub mod metric;
pub mod nbc;
pub mod ncm;
pub mod nno;
pub mod stream;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use learner::{AnyLearner, LearnerKind, OnlineLearner, Prediction};
pub use metric::{LowRankMetric, Matrix};

/// Class label as stored in feature files.
pub type ClassId = i64;

/// A prediction target: one of the known classes or the catch-all unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Class(ClassId),
    Unknown,
}

impl Label {
    pub fn class(self) -> Option<ClassId> {
        match self {
            Label::Class(c) => Some(c),
            Label::Unknown => None,
        }
    }

    pub fn is_unknown(self) -> bool {
        matches!(self, Label::Unknown)
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Class(c) => write!(f, "{c}"),
            Label::Unknown => f.write_str("unknown"),
        }
    }
}

/// Softmax of `-d/2` over distances, max-subtracted.
pub(crate) fn softmax_neg_half(distances: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = distances.iter().map(|d| -0.5 * d).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
