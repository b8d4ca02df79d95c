//! Online accuracy accounting for open-world streams.
//!
//! Closed-set accuracy is scored on samples of known classes, open-set
//! accuracy on samples of unknown classes (a hit means the learner said
//! unknown), and the two are combined by their harmonic mean.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{ClassId, Label};

/// Running mean of hit indicators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OnlineAccuracy {
    pub value: f64,
    pub count: u64,
}

impl OnlineAccuracy {
    pub fn record(&mut self, hit: bool) {
        self.count += 1;
        let n = self.count as f64;
        self.value = (1.0 - 1.0 / n) * self.value + f64::from(u8::from(hit)) / n;
    }
}

/// `2ab / (a + b)`, with `hm(0, 0) = 0`.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OpenWorldScore {
    pub closed: OnlineAccuracy,
    pub open: OnlineAccuracy,
}

impl OpenWorldScore {
    pub fn record(&mut self, predicted: Label, truth: ClassId, known: bool) {
        if known {
            self.closed.record(predicted == Label::Class(truth));
        } else {
            self.open.record(predicted.is_unknown());
        }
    }

    pub fn harmonic(&self) -> f64 {
        harmonic_mean(self.closed.value, self.open.value)
    }
}

/// Scores `(predicted, truth, known)` triples; returns
/// `(closed accuracy, open accuracy, harmonic mean)`.
pub fn score_open_world(
    predictions: impl IntoIterator<Item = (Label, ClassId, bool)>,
) -> (f64, f64, f64) {
    let mut s = OpenWorldScore::default();
    for (p, y, known) in predictions {
        s.record(p, y, known);
    }
    (s.closed.value, s.open.value, s.harmonic())
}

/// Accuracy and confidence summary for one stream segment.
///
/// `closed_acc`, `open_acc` and `harmonic` are cumulative over the stream up
/// to the end of the segment; the `segment_*` fields only count the
/// segment's own samples. Confidence and threshold means are taken at
/// prediction time; non-finite thresholds are left out of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub segment_index: usize,
    pub samples: u64,
    pub known_samples: u64,
    pub unknown_samples: u64,
    pub closed_acc: f64,
    pub open_acc: f64,
    pub harmonic: f64,
    pub segment_closed_acc: f64,
    pub segment_open_acc: f64,
    pub segment_harmonic: f64,
    pub mean_closed_confidence: Option<f64>,
    pub mean_open_confidence: Option<f64>,
    pub mean_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Mean {
    sum: f64,
    n: u64,
}

impl Mean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Accumulates per-sample outcomes into cumulative and per-segment reports.
#[derive(Debug, Default)]
pub struct SegmentTracker {
    total: OpenWorldScore,
    segment: OpenWorldScore,
    samples: u64,
    closed_conf: Mean,
    open_conf: Mean,
    threshold: Mean,
}

impl SegmentTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(
        &mut self,
        predicted: Label,
        truth: ClassId,
        known: bool,
        confidence: Option<f64>,
        threshold: Option<f64>,
    ) {
        self.total.record(predicted, truth, known);
        self.segment.record(predicted, truth, known);
        self.samples += 1;
        if let Some(c) = confidence.filter(|c| c.is_finite()) {
            if known {
                self.closed_conf.add(c);
            } else {
                self.open_conf.add(c);
            }
        }
        if let Some(t) = threshold.filter(|t| t.is_finite()) {
            self.threshold.add(t);
        }
    }

    pub fn totals(&self) -> &OpenWorldScore {
        &self.total
    }

    /// Closes the current segment and starts a new one.
    pub fn finish_segment(&mut self, segment_index: usize) -> SegmentReport {
        let report = SegmentReport {
            segment_index,
            samples: self.samples,
            known_samples: self.segment.closed.count,
            unknown_samples: self.segment.open.count,
            closed_acc: self.total.closed.value,
            open_acc: self.total.open.value,
            harmonic: self.total.harmonic(),
            segment_closed_acc: self.segment.closed.value,
            segment_open_acc: self.segment.open.value,
            segment_harmonic: self.segment.harmonic(),
            mean_closed_confidence: self.closed_conf.get(),
            mean_open_confidence: self.open_conf.get(),
            mean_threshold: self.threshold.get(),
        };
        *self = SegmentTracker {
            total: self.total,
            ..Default::default()
        };
        report
    }
}

/// One JSON object per line, fields in declaration order.
pub fn write_jsonl<W: Write>(mut out: W, reports: &[SegmentReport]) -> std::io::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub const TABLE_HEADER: &str = "segment,closed,open,harmonic,cc,oc,thr";

/// Plot-ready CSV: `segment,closed,open,harmonic,cc,oc,thr`. Missing means
/// are written as `nan`.
pub fn write_table<W: Write>(mut out: W, reports: &[SegmentReport]) -> std::io::Result<()> {
    writeln!(out, "{TABLE_HEADER}")?;
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
    for r in reports {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{},{},{}",
            r.segment_index,
            r.closed_acc,
            r.open_acc,
            r.harmonic,
            opt(r.mean_closed_confidence),
            opt(r.mean_open_confidence),
            opt(r.mean_threshold),
        )?;
    }
    Ok(())
}
