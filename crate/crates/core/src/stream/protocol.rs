//! The predict / score / update loop and the batch-scenario evaluators.

use serde::{Deserialize, Serialize};

use crate::dataio::FeatureSet;
use crate::error::Error;
use crate::eval::{OnlineAccuracy, OpenWorldScore, SegmentReport, SegmentTracker};
use crate::learner::{OnlineLearner, Prediction};
use crate::stream::scenario::{BatchPlan, StreamEvent};
use crate::{ClassId, Label};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProtocolOptions {
    /// Report at least this many segments, including trailing empty ones.
    pub segments: usize,
    /// Freeze the learner when this segment starts.
    pub freeze_at_segment: Option<usize>,
    /// Keep a per-event record in the output.
    pub keep_log: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub segment: usize,
    pub y: ClassId,
    pub known: bool,
    pub label: Label,
    pub confidence: Option<f64>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProtocolOutput {
    pub reports: Vec<SegmentReport>,
    pub totals: OpenWorldScore,
    /// Events whose update failed and was skipped.
    pub skipped: usize,
    pub log: Vec<StepRecord>,
}

fn predict_or_unknown<L: OnlineLearner + ?Sized>(learner: &L, x: &[f64]) -> Prediction {
    match learner.predict(x) {
        Ok(p) => p,
        Err(e) => {
            if !matches!(e, Error::EmptyModel) {
                log::warn!("prediction failed, answering unknown: {e}");
            }
            Prediction {
                label: Label::Unknown,
                confidence: f64::NAN,
                threshold: None,
            }
        }
    }
}

/// Runs the stream in order: predict with the current model, score, then
/// update on trainable events.
pub fn run_protocol<L: OnlineLearner + ?Sized>(
    learner: &mut L,
    events: &[StreamEvent],
    opts: &ProtocolOptions,
) -> ProtocolOutput {
    let mut tracker = SegmentTracker::new();
    let mut out = ProtocolOutput::default();
    let mut current = 0;
    let mut frozen = false;
    let mut freeze_check = |learner: &mut L, segment: usize| {
        if !frozen && opts.freeze_at_segment.is_some_and(|f| segment >= f) {
            learner.freeze();
            frozen = true;
        }
    };
    if !events.is_empty() {
        freeze_check(learner, 0);
    }
    for e in events {
        while current < e.segment {
            out.reports.push(tracker.finish_segment(current));
            current += 1;
            freeze_check(learner, current);
        }
        let p = predict_or_unknown(learner, &e.x);
        let confidence = p.confidence.is_finite().then_some(p.confidence);
        tracker.record(p.label, e.y, e.known, confidence, p.threshold);
        if opts.keep_log {
            out.log.push(StepRecord {
                segment: e.segment,
                y: e.y,
                known: e.known,
                label: p.label,
                confidence,
                threshold: p.threshold,
            });
        }
        if e.trainable {
            if let Err(err) = learner.learn(&e.x, e.y) {
                log::warn!("update skipped at segment {}: {err}", e.segment);
                out.skipped += 1;
            }
        }
    }
    if !events.is_empty() {
        out.reports.push(tracker.finish_segment(current));
        current += 1;
    }
    while current < opts.segments && !events.is_empty() {
        out.reports.push(tracker.finish_segment(current));
        current += 1;
    }
    out.totals = *tracker.totals();
    out
}

/// Closed-set accuracy after a given number of known classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedEval {
    pub known_classes: usize,
    pub test_samples: usize,
    pub accuracy: f64,
}

fn train_batch<L: OnlineLearner + ?Sized>(learner: &mut L, data: &FeatureSet, rows: &[usize]) -> usize {
    let mut skipped = 0;
    for &i in rows {
        if let Err(e) = learner.learn(data.row(i), data.label(i)) {
            log::warn!("update skipped for row {i}: {e}");
            skipped += 1;
        }
    }
    skipped
}

/// Trains batch by batch and scores closed-set top-1 on the held-out rows of
/// all known classes at each evaluation point. `data` must already be
/// whitened if the plan asks for it. With `freeze_after`, the learner is
/// frozen once that many batches have been trained.
pub fn run_scenario1<L: OnlineLearner + ?Sized>(
    learner: &mut L,
    plan: &BatchPlan,
    data: &FeatureSet,
    freeze_after: Option<usize>,
) -> Vec<ClosedEval> {
    let mut out = Vec::new();
    for (b, batch) in plan.batches.iter().enumerate() {
        if freeze_after == Some(b) {
            learner.freeze();
        }
        train_batch(learner, data, &batch.train);
        for &(_, k) in plan.eval_after.iter().filter(|(i, _)| *i == b) {
            let rows = plan.test_rows(0..k);
            let mut acc = OnlineAccuracy::default();
            for &i in &rows {
                let hit = learner
                    .predict_closed(data.row(i))
                    .is_ok_and(|y| y == data.label(i));
                acc.record(hit);
            }
            out.push(ClosedEval {
                known_classes: k,
                test_samples: rows.len(),
                accuracy: acc.value,
            });
        }
    }
    out
}

/// One cell of the known × unknown accuracy grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub known_classes: usize,
    pub unknown_classes: usize,
    pub samples: usize,
    /// Top-1 over all test samples, UNKNOWN being the correct answer for
    /// unknown classes.
    pub accuracy: f64,
    pub closed_acc: f64,
    pub open_acc: f64,
}

/// Trains incrementally and, at each evaluation point, scores every
/// configured number of unknown test classes that the dataset can supply.
pub fn run_scenario2<L: OnlineLearner + ?Sized>(
    learner: &mut L,
    plan: &BatchPlan,
    data: &FeatureSet,
    unknown_counts: &[usize],
    freeze_after: Option<usize>,
) -> Vec<GridCell> {
    let mut out = Vec::new();
    for (b, batch) in plan.batches.iter().enumerate() {
        if freeze_after == Some(b) {
            learner.freeze();
        }
        train_batch(learner, data, &batch.train);
        for &(_, k) in plan.eval_after.iter().filter(|(i, _)| *i == b) {
            for &u in unknown_counts {
                if k + u > plan.class_order.len() {
                    continue;
                }
                let mut score = OpenWorldScore::default();
                let mut all = OnlineAccuracy::default();
                let mut n = 0;
                for (rows, known) in [(plan.test_rows(0..k), true), (plan.test_rows(k..k + u), false)] {
                    for i in rows {
                        let y = data.label(i);
                        let p = predict_or_unknown(learner, data.row(i)).label;
                        score.record(p, y, known);
                        all.record(if known { p == Label::Class(y) } else { p.is_unknown() });
                        n += 1;
                    }
                }
                out.push(GridCell {
                    known_classes: k,
                    unknown_classes: u,
                    samples: n,
                    accuracy: all.value,
                    closed_acc: score.closed.value,
                    open_acc: score.open.value,
                });
            }
        }
    }
    out
}

/// Prequential closed-set run over `rows` in order; returns per-step hits.
pub fn run_closed_stream<L: OnlineLearner + ?Sized>(
    learner: &mut L,
    data: &FeatureSet,
    rows: &[usize],
) -> Vec<bool> {
    rows.iter()
        .map(|&i| {
            let (x, y) = (data.row(i), data.label(i));
            let hit = learner.predict_closed(x).is_ok_and(|p| p == y);
            if let Err(e) = learner.learn(x, y) {
                log::warn!("update skipped for row {i}: {e}");
            }
            hit
        })
        .collect()
}
