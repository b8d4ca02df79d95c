//! Online nearest non-outlier classifier (oNNO): oNCM plus an RBF confidence
//! with a running bandwidth and a self-tuned rejection threshold.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::metric::LowRankMetric;
use crate::ncm::NcmClassifier;
use crate::{ClassId, Label};

/// Running bandwidth `theta`, rejection threshold `tau` and their counters.
///
/// `t` counts bandwidth updates (samples that arrived while at least one class
/// existed). `t_star` counts threshold updates since the last novel class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyState {
    pub theta: f64,
    pub tau: f64,
    pub t: u64,
    pub t_star: u64,
}

impl Default for NoveltyState {
    fn default() -> Self {
        NoveltyState {
            theta: 1.0,
            tau: 0.0,
            t: 0,
            t_star: 0,
        }
    }
}

impl NoveltyState {
    /// Folds one per-sample distance sum into the running bandwidth.
    pub fn update_bandwidth(&mut self, distance_sum: f64) {
        self.t += 1;
        let t = self.t as f64;
        let theta = (1.0 - 1.0 / t) * self.theta + distance_sum / t;
        // all-zero distance sums would drive theta to exactly 0
        self.theta = if theta > 0.0 { theta } else { f64::MIN_POSITIVE };
    }

    /// Resets on a novel class, otherwise folds `confidence` into the running
    /// mean since the last reset.
    pub fn update_threshold(&mut self, confidence: f64, is_novel_class: bool) {
        if is_novel_class {
            self.tau = 0.0;
            self.t_star = 0;
        } else {
            self.t_star += 1;
            let n = self.t_star as f64;
            self.tau = (1.0 - 1.0 / n) * self.tau + confidence / n;
        }
    }
}

/// Result of an open-set prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenPrediction {
    pub label: Label,
    /// Nearest class before rejection.
    pub nearest: ClassId,
    pub confidence: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnnoClassifier {
    ncm: NcmClassifier,
    novelty: NoveltyState,
    #[serde(default)]
    threshold_frozen: bool,
}

impl OnnoClassifier {
    pub fn new(ncm: NcmClassifier) -> Self {
        OnnoClassifier {
            ncm,
            novelty: NoveltyState::default(),
            threshold_frozen: false,
        }
    }

    pub fn with_dims(d: usize, m: usize, gamma: f64) -> Result<Self> {
        Ok(Self::new(NcmClassifier::with_dims(d, m, gamma)?))
    }

    pub fn ncm(&self) -> &NcmClassifier {
        &self.ncm
    }

    pub fn metric(&self) -> &LowRankMetric {
        self.ncm.metric()
    }

    pub fn novelty(&self) -> &NoveltyState {
        &self.novelty
    }

    pub fn novelty_mut(&mut self) -> &mut NoveltyState {
        &mut self.novelty
    }

    /// Freezes the metric and the rejection threshold. Class means and the
    /// bandwidth keep updating, so new classes can still be added.
    pub fn freeze(&mut self) {
        self.ncm.freeze_metric();
        self.threshold_frozen = true;
    }

    /// `exp(-d_W(x, mu_y) / (2 theta))`.
    pub fn rbf_confidence(&self, x: &[f64], y: ClassId) -> Result<f64> {
        check_dim(self.ncm.dim(), x.len())?;
        let class = self.ncm.class(y).ok_or(Error::UnknownClass(y))?;
        let d = self.metric().distance_unchecked(x, &class.mean);
        Ok(rbf(d, self.novelty.theta))
    }

    /// Fixed-threshold score `Z_tau (1 - d_W(x, mu_y) / tau)` of the original
    /// offline method; `x` is rejected for `y` when the score is `<= 0`.
    pub fn baseline_nno_score(&self, x: &[f64], y: ClassId, tau_fixed: f64) -> Result<f64> {
        check_dim(self.ncm.dim(), x.len())?;
        let class = self.ncm.class(y).ok_or(Error::UnknownClass(y))?;
        let d = self.metric().distance_unchecked(x, &class.mean);
        baseline_score(d, tau_fixed, self.metric().rank())
    }

    /// Adds `sum_y d_W(x, mu_y)` over the current means to the bandwidth.
    pub fn update_bandwidth(&mut self, x: &[f64]) -> Result<()> {
        let dists = self.ncm.distances(x)?;
        if dists.is_empty() {
            return Err(Error::EmptyModel);
        }
        self.novelty
            .update_bandwidth(dists.iter().map(|(_, d)| d).sum());
        Ok(())
    }

    pub fn update_threshold(&mut self, confidence_of_true_class: f64, is_novel_class: bool) {
        self.novelty
            .update_threshold(confidence_of_true_class, is_novel_class);
    }

    /// Nearest class, or unknown when its confidence is `<= tau`.
    pub fn predict_open(&self, x: &[f64]) -> Result<OpenPrediction> {
        let (nearest, d) = self.ncm.nearest(x)?;
        let confidence = rbf(d, self.novelty.theta);
        let threshold = self.novelty.tau;
        let label = if confidence <= threshold {
            Label::Unknown
        } else {
            Label::Class(nearest)
        };
        Ok(OpenPrediction {
            label,
            nearest,
            confidence,
            threshold,
        })
    }

    /// One online step. Returns the true-class confidence that was folded
    /// into `tau`, or `None` when the sample opened a new class (or the
    /// threshold is frozen).
    ///
    /// Order: novelty check, bandwidth from the pre-update means, threshold
    /// with the pre-update bandwidth, then the oNCM mean and metric update.
    pub fn learn_open(&mut self, x: &[f64], y: ClassId) -> Result<Option<f64>> {
        check_dim(self.ncm.dim(), x.len())?;
        check_finite(x)?;
        let novel = !self.ncm.contains(y);
        let theta_before = self.novelty.theta;
        if self.ncm.num_classes() > 0 {
            self.update_bandwidth(x)?;
        }
        let mut folded = None;
        if !self.threshold_frozen {
            if novel {
                self.update_threshold(0.0, true);
            } else {
                let d = self
                    .metric()
                    .distance_unchecked(x, &self.ncm.class(y).expect("known class").mean);
                let c = rbf(d, theta_before);
                self.update_threshold(c, false);
                folded = Some(c);
            }
        }
        self.ncm.learn(x, y)?;
        Ok(folded)
    }
}

pub(crate) fn rbf(distance: f64, bandwidth: f64) -> f64 {
    (-distance / (2.0 * bandwidth)).exp()
}

/// Normalizer `Gamma(m/2 + 1) / (pi^(m/2) tau^m)` of the fixed-threshold score.
pub fn baseline_normalizer(m: usize, tau_fixed: f64) -> Result<f64> {
    if !(tau_fixed > 0.0 && tau_fixed.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "fixed threshold must be positive, got {tau_fixed}"
        )));
    }
    let half = m as f64 / 2.0;
    Ok(gamma(half + 1.0) / (std::f64::consts::PI.powf(half) * tau_fixed.powi(m as i32)))
}

pub(crate) fn baseline_score(distance: f64, tau_fixed: f64, m: usize) -> Result<f64> {
    let z = baseline_normalizer(m, tau_fixed)?;
    Ok(z * (1.0 - distance / tau_fixed))
}
