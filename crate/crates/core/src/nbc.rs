//! Online nearest ball classifier (oNBC).
//!
//! The feature space is covered by a growing set of balls. Each ball keeps a
//! class histogram, a running center (moved only by correctly predicted
//! samples) and a radius that shrinks with the number of local mistakes.
//! Radii live in the same squared-distance units as `d_W`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::metric::{check_shape, validate_gamma, LowRankMetric, Matrix};
use crate::nno::NoveltyState;
use crate::{softmax_neg_half, ClassId, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    /// `None` until the first ball sees a sample at positive distance.
    pub radius_initial: Option<f64>,
    pub class_counts: BTreeMap<ClassId, u64>,
    pub total: u64,
    pub errors: u64,
}

impl Ball {
    fn new(center: Vec<f64>, y: ClassId, radius_initial: Option<f64>) -> Self {
        Ball {
            center,
            radius_initial,
            class_counts: BTreeMap::from([(y, 1)]),
            total: 1,
            errors: 0,
        }
    }

    /// Current radius: `eps0 * errors^(-1/(2 + d_hat))`, or `eps0` before the
    /// first mistake. Infinite while `eps0` is unset.
    pub fn radius(&self, d_hat: usize) -> f64 {
        let Some(eps0) = self.radius_initial else {
            return f64::INFINITY;
        };
        if self.errors == 0 {
            eps0
        } else {
            eps0 * (self.errors as f64).powf(-1.0 / (2.0 + d_hat as f64))
        }
    }

    /// Majority class; ties go to the smaller class id.
    pub fn majority(&self) -> ClassId {
        let mut best = (ClassId::MIN, 0u64);
        for (&y, &n) in &self.class_counts {
            if n > best.1 {
                best = (y, n);
            }
        }
        best.0
    }

    /// Local class probability `n_b(y) / n_b`.
    pub fn probability(&self, y: ClassId) -> f64 {
        self.class_counts.get(&y).copied().unwrap_or(0) as f64 / self.total as f64
    }
}

/// What [`NbcClassifier::train_step`] did with a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallUpdate {
    /// A new ball was created; holds its index.
    Created(usize),
    /// The sample was absorbed by the ball at this index.
    Absorbed { ball: usize, mistake: bool },
}

/// Per-step record of [`NbcClassifier::learn_open`], for replay checks.
#[derive(Debug, Clone, PartialEq)]
pub struct NbcStep {
    pub novel: bool,
    /// Nearest ball before the update, with its distance and radius.
    pub nearest: Option<(usize, f64, f64)>,
    pub inside: bool,
    /// Confidence folded into `tau`, if any.
    pub folded_confidence: Option<f64>,
    pub update: BallUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallPrediction {
    pub label: Label,
    pub local: ClassId,
    pub ball: usize,
    pub confidence: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbcClassifier {
    metric: LowRankMetric,
    gamma: f64,
    d_hat: usize,
    balls: Vec<Ball>,
    novelty: NoveltyState,
    classes: BTreeSet<ClassId>,
    #[serde(default)]
    metric_frozen: bool,
    #[serde(default)]
    threshold_frozen: bool,
}

impl NbcClassifier {
    /// `d_hat` is fixed to the metric rank.
    pub fn new(metric: LowRankMetric, gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        Ok(NbcClassifier {
            d_hat: metric.rank(),
            metric,
            gamma,
            balls: Vec::new(),
            novelty: NoveltyState::default(),
            classes: BTreeSet::new(),
            metric_frozen: false,
            threshold_frozen: false,
        })
    }

    pub fn with_dims(d: usize, m: usize, gamma: f64) -> Result<Self> {
        Self::new(LowRankMetric::truncated_identity(m, d)?, gamma)
    }

    pub fn metric(&self) -> &LowRankMetric {
        &self.metric
    }

    /// Replaces `W` with one of the same shape; balls are kept.
    pub fn set_metric(&mut self, metric: LowRankMetric) -> Result<()> {
        check_shape(&self.metric, &metric)?;
        self.metric = metric;
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn d_hat(&self) -> usize {
        self.d_hat
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn novelty(&self) -> &NoveltyState {
        &self.novelty
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn radius(&self, ball: usize) -> f64 {
        self.balls[ball].radius(self.d_hat)
    }

    pub fn freeze(&mut self) {
        self.metric_frozen = true;
        self.threshold_frozen = true;
    }

    /// Closest ball and its distance; ties go to the earliest ball.
    pub fn nearest_ball(&self, x: &[f64]) -> Result<(usize, f64)> {
        check_dim(self.dim(), x.len())?;
        let mut best: Option<(usize, f64)> = None;
        for (i, b) in self.balls.iter().enumerate() {
            let d = self.metric.distance_unchecked(x, &b.center);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.ok_or(Error::EmptyModel)
    }

    pub fn local_predict(&self, x: &[f64]) -> Result<ClassId> {
        let (b, _) = self.nearest_ball(x)?;
        Ok(self.balls[b].majority())
    }

    /// `p_b*(y) * exp(-d_W(x, c_b*) / (2 eps_b*))` for the nearest ball `b*`.
    pub fn local_confidence(&self, x: &[f64], y: ClassId) -> Result<f64> {
        let (b, d) = self.nearest_ball(x)?;
        Ok(self.confidence_in(b, d, y))
    }

    fn confidence_in(&self, ball: usize, distance: f64, y: ClassId) -> f64 {
        let b = &self.balls[ball];
        let radius = b.radius(self.d_hat);
        let kernel = if radius.is_infinite() {
            1.0
        } else if radius > 0.0 {
            (-distance / (2.0 * radius)).exp()
        } else if distance == 0.0 {
            1.0
        } else {
            0.0
        };
        b.probability(y) * kernel
    }

    /// `tau + sqrt(ln(1/delta) / (2 t*))` with `delta = 1 / (t* C)`.
    ///
    /// Infinite while no inside sample has been seen since the last novel
    /// class (`t* = 0`), which rejects every query.
    pub fn hoeffding_threshold(&self) -> f64 {
        hoeffding_threshold(
            self.novelty.tau,
            self.novelty.t_star,
            self.classes.len().max(1),
        )
    }

    pub fn predict_open(&self, x: &[f64]) -> Result<BallPrediction> {
        let (ball, d) = self.nearest_ball(x)?;
        let local = self.balls[ball].majority();
        let confidence = self.confidence_in(ball, d, local);
        let threshold = self.hoeffding_threshold();
        let label = if confidence < threshold {
            Label::Unknown
        } else {
            Label::Class(local)
        };
        Ok(BallPrediction {
            label,
            local,
            ball,
            confidence,
            threshold,
        })
    }

    /// Reset on a novel class; otherwise only samples inside their nearest
    /// ball update the running threshold.
    pub fn update_threshold_local(
        &mut self,
        confidence: f64,
        inside: bool,
        is_novel_class: bool,
    ) -> Option<f64> {
        if is_novel_class {
            self.novelty.update_threshold(0.0, true);
            None
        } else if inside {
            self.novelty.update_threshold(confidence, false);
            Some(confidence)
        } else {
            None
        }
    }

    /// Grows or adapts the ball set with one labeled sample.
    pub fn train_step(&mut self, x: &[f64], y: ClassId) -> Result<BallUpdate> {
        check_dim(self.dim(), x.len())?;
        check_finite(x)?;
        let Ok((b, d)) = self.nearest_ball(x) else {
            self.balls.push(Ball::new(x.to_vec(), y, None));
            return Ok(BallUpdate::Created(0));
        };
        let d_hat = self.d_hat;
        let ball = &mut self.balls[b];
        if ball.radius_initial.is_none() && d > 0.0 {
            ball.radius_initial = Some(d);
        }
        if d > ball.radius(d_hat) {
            self.balls.push(Ball::new(x.to_vec(), y, Some(d)));
            return Ok(BallUpdate::Created(self.balls.len() - 1));
        }
        let predicted = ball.majority();
        *ball.class_counts.entry(y).or_insert(0) += 1;
        ball.total += 1;
        let mistake = predicted != y;
        if mistake {
            ball.errors += 1;
        } else {
            let n = ball.total as f64;
            for (c, v) in ball.center.iter_mut().zip(x) {
                *c = (1.0 - 1.0 / n) * *c + v / n;
            }
        }
        Ok(BallUpdate::Absorbed { ball: b, mistake })
    }

    /// Ball-mixture posterior: each ball votes for its majority class with
    /// weight `exp(-d_W(x, c_b) / 2)`.
    pub fn nbc_posteriors(&self, x: &[f64]) -> Result<BTreeMap<ClassId, f64>> {
        let weights = self.ball_weights(x)?;
        let mut post = BTreeMap::new();
        for (b, w) in self.balls.iter().zip(weights) {
            *post.entry(b.majority()).or_insert(0.0) += w;
        }
        Ok(post)
    }

    /// `log p_NBC(y | x)`; `-inf` when no ball votes for `y`.
    pub fn log_likelihood(&self, x: &[f64], y: ClassId) -> Result<f64> {
        Ok(self
            .nbc_posteriors(x)?
            .get(&y)
            .map_or(f64::NEG_INFINITY, |p| p.ln()))
    }

    /// Gradient of `log p_NBC(y | x)` with respect to `W`, or `None` when no
    /// ball currently votes for `y`.
    pub fn gradient(&self, x: &[f64], y: ClassId) -> Result<Option<Matrix>> {
        let weights = self.ball_weights(x)?;
        let p_y: f64 = self
            .balls
            .iter()
            .zip(&weights)
            .filter(|(b, _)| b.majority() == y)
            .map(|(_, w)| w)
            .sum();
        if p_y <= 0.0 {
            return Ok(None);
        }
        let terms = self.balls.iter().zip(&weights).map(|(b, &w)| {
            let own = if b.majority() == y { w / p_y } else { 0.0 };
            (b.center.as_slice(), w - own)
        });
        Ok(Some(self.metric.scatter_gradient(x, terms)))
    }

    /// One online step; see [`NbcStep`] for what is reported.
    ///
    /// Order: novelty check, nearest ball under the current metric, local
    /// threshold update, ball-set update, then one leaky SGD step on `W`.
    pub fn learn_open(&mut self, x: &[f64], y: ClassId) -> Result<NbcStep> {
        check_dim(self.dim(), x.len())?;
        check_finite(x)?;
        let novel = !self.classes.contains(&y);
        let nearest = self
            .nearest_ball(x)
            .ok()
            .map(|(b, d)| (b, d, self.radius(b)));
        let inside = nearest.is_none_or(|(_, d, r)| d <= r);
        let folded_confidence = if self.threshold_frozen {
            None
        } else {
            let confidence = nearest.map_or(0.0, |(b, d, _)| self.confidence_in(b, d, y));
            self.update_threshold_local(confidence, inside, novel)
        };
        let update = self.train_step(x, y)?;
        self.classes.insert(y);
        if !self.metric_frozen {
            let step = self.gradient(x, y).and_then(|g| match g {
                Some(g) => self.metric.sgd_step(&g, self.gamma),
                None => Ok(()),
            });
            if let Err(e) = step {
                log::warn!("metric update skipped for class {y}: {e}");
            }
        }
        Ok(NbcStep {
            novel,
            nearest,
            inside,
            folded_confidence,
            update,
        })
    }

    /// Softmax weights of all balls, in ball order.
    fn ball_weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        if self.balls.is_empty() {
            return Err(Error::EmptyModel);
        }
        let d: Vec<f64> = self
            .balls
            .iter()
            .map(|b| self.metric.distance_unchecked(x, &b.center))
            .collect();
        Ok(softmax_neg_half(&d))
    }
}

/// `tau + sqrt(ln(t* C) / (2 t*))`; infinite for `t* = 0`.
pub fn hoeffding_threshold(tau: f64, t_star: u64, num_classes: usize) -> f64 {
    if t_star == 0 {
        return f64::INFINITY;
    }
    tau + hoeffding_slack(t_star, num_classes)
}

pub fn hoeffding_slack(t_star: u64, num_classes: usize) -> f64 {
    let t = t_star as f64;
    // delta = 1 / (t* C)  =>  ln(1/delta) = ln(t* C)
    let log_inv_delta = (t * num_classes as f64).ln();
    (log_inv_delta / (2.0 * t)).sqrt()
}
