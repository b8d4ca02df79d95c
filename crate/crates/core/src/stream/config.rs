//! Scenario configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! scenario = s3
//! seed = 7
//! eval_points = 50, 100, 200
//! volume_profile = flat
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::Preset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Class-incremental closed-set learning, scored on a held-out test set.
    S1,
    /// Open-world test sets mixing known and not-yet-added classes.
    S2,
    /// Segmented open-world stream with class introductions and retirements.
    S3,
    /// The segmented stream with user-chosen schedule parameters.
    Custom,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::S1 => "s1",
            ScenarioKind::S2 => "s2",
            ScenarioKind::S3 => "s3",
            ScenarioKind::Custom => "custom",
        }
    }

    pub fn is_stream(self) -> bool {
        matches!(self, ScenarioKind::S3 | ScenarioKind::Custom)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(ScenarioKind::S1),
            "s2" | "2" => Ok(ScenarioKind::S2),
            "s3" | "3" => Ok(ScenarioKind::S3),
            "custom" => Ok(ScenarioKind::Custom),
            _ => Err(Error::Config(format!(
                "unknown scenario '{s}' (expected s1, s2, s3 or custom)"
            ))),
        }
    }
}

/// Per-segment image volume of the stream scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeProfile {
    /// Every active class contributes the same quota in every segment.
    Flat,
    /// Triangular multiplier peaking half-way, normalized to mean 1.
    Peaked,
}

impl FromStr for VolumeProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "flat" => Ok(VolumeProfile::Flat),
            "peaked" => Ok(VolumeProfile::Peaked),
            _ => Err(Error::Config(format!(
                "unknown volume profile '{s}' (expected flat or peaked)"
            ))),
        }
    }
}

impl VolumeProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            VolumeProfile::Flat => "flat",
            VolumeProfile::Peaked => "peaked",
        }
    }

    /// Multiplier for each of `segments` segments; the multipliers average 1.
    pub fn multipliers(self, segments: usize) -> Vec<f64> {
        match self {
            VolumeProfile::Flat => vec![1.0; segments],
            VolumeProfile::Peaked => {
                let raw: Vec<f64> = (0..segments)
                    .map(|s| (s + 1).min(segments - s) as f64)
                    .collect();
                let mean = raw.iter().sum::<f64>() / segments.max(1) as f64;
                raw.into_iter().map(|r| r / mean).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub initial_classes: usize,
    pub batch_classes: usize,
    /// Known-class counts at which the batch scenarios are evaluated.
    pub eval_points: Vec<usize>,
    /// Number of unknown test classes per evaluation (scenario 2 grid).
    pub unknown_test_counts: Vec<usize>,
    /// Held-out share of every class for the batch scenarios.
    pub test_fraction: f64,
    pub segments: usize,
    /// Leading segments that introduce new classes.
    pub intro_segments: usize,
    pub known_per_segment: usize,
    pub unknown_per_segment: usize,
    pub images_per_class_per_segment: usize,
    pub class_lifetime_segments: usize,
    pub volume_profile: VolumeProfile,
    /// Also train on unknown-pool classes; each then counts as known from its
    /// second appearance on.
    pub train_unknown: bool,
    /// Segments after which fixed-metric variants stop learning.
    pub freeze_after_segments: usize,
    /// Standardize features with statistics of the initial classes.
    pub whiten: bool,
}

impl ScenarioConfig {
    /// Full-size defaults for each scenario.
    pub fn defaults(scenario: ScenarioKind) -> Self {
        let base = ScenarioConfig {
            scenario,
            seed: 0,
            initial_classes: 20,
            batch_classes: 10,
            eval_points: vec![50, 100, 200, 500, 1000],
            unknown_test_counts: vec![0],
            test_fraction: 0.2,
            segments: 40,
            intro_segments: 20,
            known_per_segment: 5,
            unknown_per_segment: 5,
            images_per_class_per_segment: 60,
            class_lifetime_segments: 20,
            volume_profile: VolumeProfile::Peaked,
            train_unknown: false,
            freeze_after_segments: 1,
            whiten: true,
        };
        match scenario {
            ScenarioKind::S1 | ScenarioKind::S3 | ScenarioKind::Custom => base,
            ScenarioKind::S2 => ScenarioConfig {
                initial_classes: 50,
                batch_classes: 50,
                eval_points: vec![50, 100, 200, 300, 400, 500],
                unknown_test_counts: vec![0, 50, 100, 200, 300, 400, 500],
                ..base
            },
        }
    }

    /// Defaults scaled down to fit a synthetic preset.
    pub fn for_preset(scenario: ScenarioKind, preset: Preset) -> Self {
        let base = Self::defaults(scenario);
        match (preset, scenario) {
            (Preset::Blobs200, ScenarioKind::S1) => ScenarioConfig {
                eval_points: vec![50, 100, 200],
                ..base
            },
            (Preset::Blobs200, ScenarioKind::S2) => ScenarioConfig {
                eval_points: vec![50, 100, 150],
                unknown_test_counts: vec![0, 25, 50],
                ..base
            },
            (Preset::Blobs200, _) => base,
            (Preset::Halo, ScenarioKind::S1) => ScenarioConfig {
                initial_classes: 2,
                batch_classes: 1,
                eval_points: vec![2, 3, 4],
                ..base
            },
            (Preset::Halo, ScenarioKind::S2) => ScenarioConfig {
                initial_classes: 2,
                batch_classes: 1,
                eval_points: vec![2],
                unknown_test_counts: vec![0, 1, 2],
                ..base
            },
            (Preset::Halo, _) => ScenarioConfig {
                segments: 8,
                intro_segments: 2,
                known_per_segment: 1,
                unknown_per_segment: 1,
                class_lifetime_segments: 7,
                ..base
            },
            (Preset::Separable3, ScenarioKind::S1) => ScenarioConfig {
                initial_classes: 1,
                batch_classes: 1,
                eval_points: vec![2, 3],
                ..base
            },
            (Preset::Separable3, ScenarioKind::S2) => ScenarioConfig {
                initial_classes: 1,
                batch_classes: 1,
                eval_points: vec![1, 2],
                unknown_test_counts: vec![0, 1],
                ..base
            },
            (Preset::Separable3, _) => ScenarioConfig {
                segments: 6,
                intro_segments: 1,
                known_per_segment: 2,
                unknown_per_segment: 1,
                class_lifetime_segments: 6,
                ..base
            },
            (Preset::Xor4, ScenarioKind::S1) => ScenarioConfig {
                initial_classes: 1,
                batch_classes: 1,
                eval_points: vec![2],
                ..base
            },
            (Preset::Xor4, ScenarioKind::S2) => ScenarioConfig {
                initial_classes: 1,
                batch_classes: 1,
                eval_points: vec![1],
                unknown_test_counts: vec![0, 1],
                ..base
            },
            (Preset::Xor4, _) => ScenarioConfig {
                segments: 4,
                intro_segments: 1,
                known_per_segment: 1,
                unknown_per_segment: 1,
                class_lifetime_segments: 4,
                ..base
            },
        }
    }

    /// Classes needed by the schedule, before looking at any dataset.
    pub fn required_classes(&self) -> usize {
        match self.scenario {
            ScenarioKind::S1 => self.eval_points.iter().copied().max().unwrap_or(0),
            ScenarioKind::S2 => {
                let known = self.eval_points.iter().copied().max().unwrap_or(0);
                known.max(self.initial_classes)
                    + self.unknown_test_counts.iter().copied().max().unwrap_or(0)
            }
            ScenarioKind::S3 | ScenarioKind::Custom => {
                self.intro_segments * (self.known_per_segment + self.unknown_per_segment)
            }
        }
    }

    /// Every internal inconsistency, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.scenario.is_stream() {
            if self.segments == 0 {
                p.push("segments must be positive".into());
            }
            if self.intro_segments == 0 || self.intro_segments > self.segments {
                p.push(format!(
                    "intro_segments = {} must lie in 1..={}",
                    self.intro_segments, self.segments
                ));
            }
            if self.known_per_segment == 0 {
                p.push("known_per_segment must be positive".into());
            }
            if self.images_per_class_per_segment == 0 {
                p.push("images_per_class_per_segment must be positive".into());
            }
            if self.class_lifetime_segments == 0 {
                p.push("class_lifetime_segments must be positive".into());
            }
        } else {
            if self.initial_classes == 0 {
                p.push("initial_classes must be positive".into());
            }
            if self.batch_classes == 0 {
                p.push("batch_classes must be positive".into());
            }
            if self.eval_points.is_empty() {
                p.push("eval_points must not be empty".into());
            }
            if self.eval_points.windows(2).any(|w| w[0] >= w[1]) {
                p.push(format!(
                    "eval_points {:?} must be strictly ascending",
                    self.eval_points
                ));
            }
            for &e in &self.eval_points {
                if e < self.initial_classes
                    || (self.batch_classes > 0 && !(e - self.initial_classes).is_multiple_of(self.batch_classes))
                {
                    p.push(format!(
                        "eval point {e} is not reachable from {} initial classes in batches of {}",
                        self.initial_classes, self.batch_classes
                    ));
                }
            }
            if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
                p.push(format!(
                    "test_fraction = {} must lie strictly between 0 and 1",
                    self.test_fraction
                ));
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }

    /// Applies one `key = value` setting; `Ok(false)` for keys this type does
    /// not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            v.parse()
                .map_err(|e| Error::Config(format!("{key}: cannot parse '{v}': {e}")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<usize>> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| num(key, s))
                .collect()
        }
        match key {
            "scenario" => self.scenario = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "initial_classes" => self.initial_classes = num(key, value)?,
            "batch_classes" => self.batch_classes = num(key, value)?,
            "eval_points" => self.eval_points = list(key, value)?,
            "unknown_test_counts" => self.unknown_test_counts = list(key, value)?,
            "test_fraction" => self.test_fraction = num(key, value)?,
            "segments" => self.segments = num(key, value)?,
            "intro_segments" => self.intro_segments = num(key, value)?,
            "known_per_segment" => self.known_per_segment = num(key, value)?,
            "unknown_per_segment" => self.unknown_per_segment = num(key, value)?,
            "images_per_class_per_segment" => {
                self.images_per_class_per_segment = num(key, value)?
            }
            "class_lifetime_segments" => self.class_lifetime_segments = num(key, value)?,
            "volume_profile" => self.volume_profile = value.parse()?,
            "train_unknown" => self.train_unknown = num(key, value)?,
            "freeze_after_segments" => self.freeze_after_segments = num(key, value)?,
            "whiten" => self.whiten = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// The config as `key = value` lines, in a fixed order.
    pub fn to_kv(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        [
            format!("scenario = {}", self.scenario),
            format!("seed = {}", self.seed),
            format!("initial_classes = {}", self.initial_classes),
            format!("batch_classes = {}", self.batch_classes),
            format!("eval_points = {}", join(&self.eval_points)),
            format!("unknown_test_counts = {}", join(&self.unknown_test_counts)),
            format!("test_fraction = {}", self.test_fraction),
            format!("segments = {}", self.segments),
            format!("intro_segments = {}", self.intro_segments),
            format!("known_per_segment = {}", self.known_per_segment),
            format!("unknown_per_segment = {}", self.unknown_per_segment),
            format!(
                "images_per_class_per_segment = {}",
                self.images_per_class_per_segment
            ),
            format!("class_lifetime_segments = {}", self.class_lifetime_segments),
            format!("volume_profile = {}", self.volume_profile.as_str()),
            format!("train_unknown = {}", self.train_unknown),
            format!("freeze_after_segments = {}", self.freeze_after_segments),
            format!("whiten = {}", self.whiten),
        ]
        .join("\n")
            + "\n"
    }
}

/// Parses `key = value` lines; later keys override earlier ones.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn read_kv_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kv(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_three_scenarios() {
        let s1 = ScenarioConfig::defaults(ScenarioKind::S1);
        assert_eq!((s1.initial_classes, s1.batch_classes), (20, 10));
        assert!(s1.eval_points.contains(&100) && s1.eval_points.contains(&1000));
        let s2 = ScenarioConfig::defaults(ScenarioKind::S2);
        assert_eq!((s2.initial_classes, s2.batch_classes), (50, 50));
        let s3 = ScenarioConfig::defaults(ScenarioKind::S3);
        assert_eq!(
            (
                s3.segments,
                s3.intro_segments,
                s3.known_per_segment,
                s3.unknown_per_segment,
                s3.images_per_class_per_segment,
                s3.class_lifetime_segments
            ),
            (40, 20, 5, 5, 60, 20)
        );
        assert_eq!(s3.required_classes(), 200);
        for k in [ScenarioKind::S1, ScenarioKind::S2, ScenarioKind::S3] {
            assert!(ScenarioConfig::defaults(k).problems().is_empty(), "{k}");
            for p in Preset::ALL {
                assert!(ScenarioConfig::for_preset(k, p).problems().is_empty(), "{k} {p}");
            }
        }
    }

    #[test]
    fn kv_round_trip_and_overrides() {
        let mut c = ScenarioConfig::defaults(ScenarioKind::S3);
        let kv = parse_kv("# x\nseed = 9\n\nvolume_profile=flat\neval_points = 30, 40\n").unwrap();
        for (k, v) in &kv {
            assert!(c.set(k, v).unwrap());
        }
        assert_eq!(c.seed, 9);
        assert_eq!(c.volume_profile, VolumeProfile::Flat);
        assert_eq!(c.eval_points, vec![30, 40]);

        let mut back = ScenarioConfig::defaults(ScenarioKind::S1);
        for (k, v) in parse_kv(&c.to_kv()).unwrap() {
            assert!(back.set(&k, &v).unwrap());
        }
        assert_eq!(back, c);

        assert!(!c.set("learner", "onbc").unwrap());
        assert!(c.set("seed", "x").is_err());
        assert!(parse_kv("just words").is_err());
    }

    #[test]
    fn contradictory_eval_points_are_named() {
        let mut c = ScenarioConfig::defaults(ScenarioKind::S1);
        c.eval_points = vec![100, 55, 50];
        let p = c.problems().join("\n");
        assert!(p.contains("strictly ascending"), "{p}");
        assert!(p.contains("eval point 55 is not reachable"), "{p}");
    }

    #[test]
    fn peaked_profile_has_unit_mean_and_central_peak() {
        let m = VolumeProfile::Peaked.multipliers(40);
        assert!((m.iter().sum::<f64>() / 40.0 - 1.0).abs() < 1e-12);
        let peak = m.iter().copied().fold(0.0, f64::max);
        assert_eq!(m[19], peak);
        assert_eq!(m[20], peak);
        assert!(m[0] < m[10] && m[39] < m[30]);
        assert_eq!(VolumeProfile::Flat.multipliers(3), vec![1.0; 3]);
    }
}
