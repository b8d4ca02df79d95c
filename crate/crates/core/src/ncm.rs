//! Online nearest class mean classifier (oNCM).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::metric::{check_shape, validate_gamma, LowRankMetric, Matrix};
use crate::{softmax_neg_half, ClassId};

/// Running mean of one class and the number of samples folded into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMeanModel {
    pub class_id: ClassId,
    pub mean: Vec<f64>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcmClassifier {
    metric: LowRankMetric,
    gamma: f64,
    classes: BTreeMap<ClassId, ClassMeanModel>,
    #[serde(default)]
    metric_frozen: bool,
}

impl NcmClassifier {
    pub fn new(metric: LowRankMetric, gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        Ok(NcmClassifier {
            metric,
            gamma,
            classes: BTreeMap::new(),
            metric_frozen: false,
        })
    }

    /// Truncated-identity metric with `m` rows over `d` features.
    pub fn with_dims(d: usize, m: usize, gamma: f64) -> Result<Self> {
        Self::new(LowRankMetric::truncated_identity(m, d)?, gamma)
    }

    pub fn metric(&self) -> &LowRankMetric {
        &self.metric
    }

    /// Replaces `W` with one of the same shape; class means are kept.
    pub fn set_metric(&mut self, metric: LowRankMetric) -> Result<()> {
        check_shape(&self.metric, &metric)?;
        self.metric = metric;
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassMeanModel> {
        self.classes.values()
    }

    pub fn class(&self, y: ClassId) -> Option<&ClassMeanModel> {
        self.classes.get(&y)
    }

    pub fn contains(&self, y: ClassId) -> bool {
        self.classes.contains_key(&y)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Stops metric updates; means keep learning.
    pub fn freeze_metric(&mut self) {
        self.metric_frozen = true;
    }

    pub fn is_metric_frozen(&self) -> bool {
        self.metric_frozen
    }

    /// Distance from `x` to every class mean, in class id order.
    pub fn distances(&self, x: &[f64]) -> Result<Vec<(ClassId, f64)>> {
        check_dim(self.dim(), x.len())?;
        Ok(self
            .classes
            .values()
            .map(|c| (c.class_id, self.metric.distance_unchecked(x, &c.mean)))
            .collect())
    }

    /// Softmax over `-d_W(x, mu_y) / 2`.
    pub fn class_posteriors(&self, x: &[f64]) -> Result<BTreeMap<ClassId, f64>> {
        let dists = self.nonempty_distances(x)?;
        let d: Vec<f64> = dists.iter().map(|(_, d)| *d).collect();
        Ok(dists
            .iter()
            .map(|(y, _)| *y)
            .zip(softmax_neg_half(&d))
            .collect())
    }

    /// `log p(y | x)`; `y` must be a known class.
    pub fn log_likelihood(&self, x: &[f64], y: ClassId) -> Result<f64> {
        let dists = self.nonempty_distances(x)?;
        let dy = dists
            .iter()
            .find(|(c, _)| *c == y)
            .map(|(_, d)| *d)
            .ok_or(Error::UnknownClass(y))?;
        let logits: Vec<f64> = dists.iter().map(|(_, d)| -0.5 * d).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(-0.5 * dy - lse)
    }

    /// Nearest class mean and its distance. Ties go to the smaller class id.
    pub fn nearest(&self, x: &[f64]) -> Result<(ClassId, f64)> {
        let dists = self.nonempty_distances(x)?;
        let mut best = dists[0];
        for &(y, d) in &dists[1..] {
            if d < best.1 {
                best = (y, d);
            }
        }
        Ok(best)
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassId> {
        self.nearest(x).map(|(y, _)| y)
    }

    /// Folds `x` into the running mean of `y`, creating the class on first
    /// sight. Returns `true` when the class is new.
    pub fn update_mean(&mut self, x: &[f64], y: ClassId) -> Result<bool> {
        check_dim(self.dim(), x.len())?;
        check_finite(x)?;
        match self.classes.get_mut(&y) {
            None => {
                self.classes.insert(
                    y,
                    ClassMeanModel {
                        class_id: y,
                        mean: x.to_vec(),
                        count: 1,
                    },
                );
                Ok(true)
            }
            Some(c) => {
                c.count += 1;
                let n = c.count as f64;
                for (m, v) in c.mean.iter_mut().zip(x) {
                    *m = (1.0 - 1.0 / n) * *m + v / n;
                }
                Ok(false)
            }
        }
    }

    /// Gradient of `log p(y | x)` with respect to `W`:
    /// `sum_y' (p(y'|x) - [y' = y]) W (mu_y' - x)(mu_y' - x)^T`.
    pub fn gradient(&self, x: &[f64], y: ClassId) -> Result<Matrix> {
        let post = self.class_posteriors(x)?;
        if !post.contains_key(&y) {
            return Err(Error::UnknownClass(y));
        }
        let terms = self.classes.values().map(|c| {
            let indicator = if c.class_id == y { 1.0 } else { 0.0 };
            (c.mean.as_slice(), post[&c.class_id] - indicator)
        });
        Ok(self.metric.scatter_gradient(x, terms))
    }

    /// One online step: mean update, then one leaky SGD step on `W` using the
    /// updated means.
    ///
    /// A rejected (non-finite) metric step is logged and leaves `W` unchanged;
    /// the mean update is kept.
    pub fn learn(&mut self, x: &[f64], y: ClassId) -> Result<()> {
        self.update_mean(x, y)?;
        self.metric_step(x, y);
        Ok(())
    }

    pub(crate) fn metric_step(&mut self, x: &[f64], y: ClassId) {
        if self.metric_frozen {
            return;
        }
        let step = self
            .gradient(x, y)
            .and_then(|g| self.metric.sgd_step(&g, self.gamma));
        if let Err(e) = step {
            log::warn!("metric update skipped for class {y}: {e}");
        }
    }

    fn nonempty_distances(&self, x: &[f64]) -> Result<Vec<(ClassId, f64)>> {
        let dists = self.distances(x)?;
        if dists.is_empty() {
            return Err(Error::EmptyModel);
        }
        Ok(dists)
    }
}
