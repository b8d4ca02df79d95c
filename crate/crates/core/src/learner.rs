use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::LowRankMetric;
use crate::nbc::NbcClassifier;
use crate::ncm::NcmClassifier;
use crate::nno::OnnoClassifier;
use crate::{ClassId, Label};

/// One prediction made before the label is revealed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Confidence the learner attaches to `label` (or to the rejected class).
    pub confidence: f64,
    /// Rejection threshold in force, for learners that have one.
    pub threshold: Option<f64>,
}

/// A streaming learner driven by the open-world protocol.
pub trait OnlineLearner {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    /// Open-world prediction; closed-set learners never answer unknown.
    fn predict(&self, x: &[f64]) -> Result<Prediction>;

    /// Prediction without novelty rejection.
    fn predict_closed(&self, x: &[f64]) -> Result<ClassId>;

    fn learn(&mut self, x: &[f64], y: ClassId) -> Result<()>;

    /// Stops metric and threshold learning (fixed-metric ablations).
    fn freeze(&mut self);
}

impl OnlineLearner for NcmClassifier {
    fn name(&self) -> &'static str {
        "oncm"
    }

    fn dim(&self) -> usize {
        NcmClassifier::dim(self)
    }

    fn num_classes(&self) -> usize {
        NcmClassifier::num_classes(self)
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let post = self.class_posteriors(x)?;
        let y = NcmClassifier::predict(self, x)?;
        Ok(Prediction {
            label: Label::Class(y),
            confidence: post[&y],
            threshold: None,
        })
    }

    fn predict_closed(&self, x: &[f64]) -> Result<ClassId> {
        NcmClassifier::predict(self, x)
    }

    fn learn(&mut self, x: &[f64], y: ClassId) -> Result<()> {
        NcmClassifier::learn(self, x, y)
    }

    fn freeze(&mut self) {
        self.freeze_metric();
    }
}

impl OnlineLearner for OnnoClassifier {
    fn name(&self) -> &'static str {
        "onno"
    }

    fn dim(&self) -> usize {
        self.ncm().dim()
    }

    fn num_classes(&self) -> usize {
        self.ncm().num_classes()
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let p = self.predict_open(x)?;
        Ok(Prediction {
            label: p.label,
            confidence: p.confidence,
            threshold: Some(p.threshold),
        })
    }

    fn predict_closed(&self, x: &[f64]) -> Result<ClassId> {
        self.ncm().predict(x)
    }

    fn learn(&mut self, x: &[f64], y: ClassId) -> Result<()> {
        self.learn_open(x, y).map(|_| ())
    }

    fn freeze(&mut self) {
        OnnoClassifier::freeze(self);
    }
}

impl OnlineLearner for NbcClassifier {
    fn name(&self) -> &'static str {
        "onbc"
    }

    fn dim(&self) -> usize {
        NbcClassifier::dim(self)
    }

    fn num_classes(&self) -> usize {
        NbcClassifier::num_classes(self)
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let p = self.predict_open(x)?;
        Ok(Prediction {
            label: p.label,
            confidence: p.confidence,
            threshold: Some(p.threshold),
        })
    }

    fn predict_closed(&self, x: &[f64]) -> Result<ClassId> {
        self.local_predict(x)
    }

    fn learn(&mut self, x: &[f64], y: ClassId) -> Result<()> {
        self.learn_open(x, y).map(|_| ())
    }

    fn freeze(&mut self) {
        NbcClassifier::freeze(self);
    }
}

/// Learner selection as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Oncm,
    Onno,
    Onbc,
    /// oNCM whose metric is frozen after the warm-up segments.
    NcmFixed,
    /// oNNO whose metric and threshold are frozen after the warm-up segments.
    NnoFixed,
    /// oNBC whose metric and threshold are frozen after the warm-up segments.
    NbcFixed,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 6] = [
        LearnerKind::Oncm,
        LearnerKind::Onno,
        LearnerKind::Onbc,
        LearnerKind::NcmFixed,
        LearnerKind::NnoFixed,
        LearnerKind::NbcFixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Oncm => "oncm",
            LearnerKind::Onno => "onno",
            LearnerKind::Onbc => "onbc",
            LearnerKind::NcmFixed => "ncm-fixed",
            LearnerKind::NnoFixed => "nno-fixed",
            LearnerKind::NbcFixed => "nbc-fixed",
        }
    }

    pub fn is_fixed(self) -> bool {
        matches!(
            self,
            LearnerKind::NcmFixed | LearnerKind::NnoFixed | LearnerKind::NbcFixed
        )
    }

    /// Whether the learner can answer unknown.
    pub fn is_open_set(self) -> bool {
        !matches!(self, LearnerKind::Oncm | LearnerKind::NcmFixed)
    }

    pub fn build(self, d: usize, m: usize, gamma: f64) -> Result<AnyLearner> {
        let metric = LowRankMetric::truncated_identity(m, d)?;
        Ok(match self {
            LearnerKind::Oncm | LearnerKind::NcmFixed => {
                AnyLearner::Ncm(NcmClassifier::new(metric, gamma)?)
            }
            LearnerKind::Onno | LearnerKind::NnoFixed => {
                AnyLearner::Nno(OnnoClassifier::new(NcmClassifier::new(metric, gamma)?))
            }
            LearnerKind::Onbc | LearnerKind::NbcFixed => {
                AnyLearner::Nbc(NbcClassifier::new(metric, gamma)?)
            }
        })
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown learner '{s}' (expected one of oncm, onno, onbc, ncm-fixed, nno-fixed, nbc-fixed)"
                ))
            })
    }
}

/// Any of the three learners; this is also the snapshot payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "state", rename_all = "lowercase")]
pub enum AnyLearner {
    Ncm(NcmClassifier),
    Nno(OnnoClassifier),
    Nbc(NbcClassifier),
}

impl AnyLearner {
    fn inner(&self) -> &dyn OnlineLearner {
        match self {
            AnyLearner::Ncm(c) => c,
            AnyLearner::Nno(c) => c,
            AnyLearner::Nbc(c) => c,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn OnlineLearner {
        match self {
            AnyLearner::Ncm(c) => c,
            AnyLearner::Nno(c) => c,
            AnyLearner::Nbc(c) => c,
        }
    }

    pub fn metric(&self) -> &LowRankMetric {
        match self {
            AnyLearner::Ncm(c) => c.metric(),
            AnyLearner::Nno(c) => c.metric(),
            AnyLearner::Nbc(c) => c.metric(),
        }
    }
}

impl OnlineLearner for AnyLearner {
    fn name(&self) -> &'static str {
        self.inner().name()
    }

    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn num_classes(&self) -> usize {
        self.inner().num_classes()
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.inner().predict(x)
    }

    fn predict_closed(&self, x: &[f64]) -> Result<ClassId> {
        self.inner().predict_closed(x)
    }

    fn learn(&mut self, x: &[f64], y: ClassId) -> Result<()> {
        self.inner_mut().learn(x, y)
    }

    fn freeze(&mut self) {
        self.inner_mut().freeze()
    }
}
