//! Scenario generators: class schedules, train/test splits and event streams.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{FeatureSet, WhitenStats};
use crate::error::{Error, Result};
use crate::stream::config::ScenarioConfig;
use crate::ClassId;

/// One labeled sample of the open-world stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub x: Vec<f64>,
    pub y: ClassId,
    /// Whether `y` had been taught to the learner before this event.
    pub known: bool,
    /// Whether the label is revealed for training after prediction.
    pub trainable: bool,
    pub segment: usize,
}

/// A group of classes added at once, with shuffled training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBatch {
    pub classes: Vec<ClassId>,
    pub train: Vec<usize>,
}

/// Class-incremental schedule shared by the two batch scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    /// Classes in the order they join the known set.
    pub class_order: Vec<ClassId>,
    pub batches: Vec<ClassBatch>,
    /// Held-out rows per class.
    pub test: BTreeMap<ClassId, Vec<usize>>,
    /// `(batch index, known class count)` after which to evaluate.
    pub eval_after: Vec<(usize, usize)>,
    /// Statistics of the initial batch's training rows, if whitening.
    pub whiten: Option<WhitenStats>,
}

impl BatchPlan {
    /// Test rows of the classes at positions `range` of the class order.
    pub fn test_rows(&self, range: std::ops::Range<usize>) -> Vec<usize> {
        self.class_order[range]
            .iter()
            .flat_map(|y| self.test[y].iter().copied())
            .collect()
    }
}

fn sufficiency(config: &ScenarioConfig, dataset: &FeatureSet) -> Result<()> {
    let mut problems = config.problems();
    let needed = config.required_classes();
    if dataset.num_classes() < needed {
        problems.push(format!(
            "scenario {} needs ≥ {needed} classes, dataset has {}",
            config.scenario,
            dataset.num_classes()
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems.join("; ")))
    }
}

type RowsByClass = BTreeMap<ClassId, Vec<usize>>;

fn split_classes(
    config: &ScenarioConfig,
    dataset: &FeatureSet,
    classes: &[ClassId],
    rng: &mut ChaCha8Rng,
) -> Result<(RowsByClass, RowsByClass)> {
    let mut train = BTreeMap::new();
    let mut test = BTreeMap::new();
    let mut short = Vec::new();
    for &y in classes {
        let mut rows = dataset.indices_of(y).to_vec();
        rows.shuffle(rng);
        let n_test = (rows.len() as f64 * config.test_fraction).round() as usize;
        if n_test == 0 || n_test == rows.len() {
            short.push(format!("class {y} ({} samples)", rows.len()));
            continue;
        }
        let held = rows.split_off(rows.len() - n_test);
        train.insert(y, rows);
        test.insert(y, held);
    }
    if !short.is_empty() {
        return Err(Error::Config(format!(
            "test_fraction {} leaves an empty train or test split for {}",
            config.test_fraction,
            short.join(", ")
        )));
    }
    Ok((train, test))
}

fn batch_plan(config: &ScenarioConfig, dataset: &FeatureSet, known_total: usize) -> Result<BatchPlan> {
    sufficiency(config, dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let class_order = dataset.classes();
    let (train, test) = split_classes(config, dataset, &class_order, &mut rng)?;

    let mut batches = Vec::new();
    let mut start = 0;
    while start < known_total.min(class_order.len()) {
        let size = if batches.is_empty() {
            config.initial_classes
        } else {
            config.batch_classes
        };
        let end = (start + size).min(known_total);
        let classes = class_order[start..end].to_vec();
        let mut rows: Vec<usize> = classes.iter().flat_map(|y| train[y].iter().copied()).collect();
        rows.shuffle(&mut rng);
        batches.push(ClassBatch { classes, train: rows });
        start = end;
    }

    let mut eval_after = Vec::new();
    let mut seen = 0;
    for (i, b) in batches.iter().enumerate() {
        seen += b.classes.len();
        if config.eval_points.contains(&seen) {
            eval_after.push((i, seen));
        }
    }

    let whiten = if config.whiten {
        Some(WhitenStats::from_rows(dataset, &batches[0].train)?)
    } else {
        None
    };
    Ok(BatchPlan {
        class_order,
        batches,
        test,
        eval_after,
        whiten,
    })
}

/// Class-incremental closed-set schedule: an initial batch, then fixed-size
/// batches up to the largest evaluation point.
pub fn generate_scenario1(config: &ScenarioConfig, dataset: &FeatureSet) -> Result<BatchPlan> {
    let known_total = config.eval_points.iter().copied().max().unwrap_or(0);
    batch_plan(config, dataset, known_total)
}

/// Same class-incremental schedule; the unknown test classes are drawn from
/// the classes that follow the known ones in the class order.
pub fn generate_scenario2(config: &ScenarioConfig, dataset: &FeatureSet) -> Result<BatchPlan> {
    let known_total = config
        .eval_points
        .iter()
        .copied()
        .max()
        .unwrap_or(0)
        .max(config.initial_classes);
    batch_plan(config, dataset, known_total)
}

/// Class-level schedule of the segmented stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSchedule {
    pub known_classes: Vec<ClassId>,
    pub unknown_classes: Vec<ClassId>,
    /// Segment in which each class is introduced.
    pub introduced: BTreeMap<ClassId, usize>,
    /// Per-class sample count in each segment.
    pub quota: Vec<usize>,
    pub lifetime: usize,
    pub segments: usize,
}

impl StreamSchedule {
    pub fn new(config: &ScenarioConfig, dataset: &FeatureSet) -> Result<Self> {
        sufficiency(config, dataset)?;
        let classes = dataset.classes();
        let (kps, ups) = (config.known_per_segment, config.unknown_per_segment);
        let n_known = config.intro_segments * kps;
        let known_classes = classes[..n_known].to_vec();
        let unknown_classes = classes[n_known..n_known + config.intro_segments * ups].to_vec();
        let mut introduced = BTreeMap::new();
        for s in 0..config.intro_segments {
            for &y in known_classes[s * kps..(s + 1) * kps]
                .iter()
                .chain(&unknown_classes[s * ups..(s + 1) * ups])
            {
                introduced.insert(y, s);
            }
        }
        let base = config.images_per_class_per_segment as f64;
        let quota = config
            .volume_profile
            .multipliers(config.segments)
            .into_iter()
            .map(|m| (base * m).round() as usize)
            .collect();
        let schedule = StreamSchedule {
            known_classes,
            unknown_classes,
            introduced,
            quota,
            lifetime: config.class_lifetime_segments,
            segments: config.segments,
        };

        let mut short = Vec::new();
        for &y in schedule.introduced.keys() {
            let need = schedule.demand(y);
            let have = dataset.indices_of(y).len();
            if need > have {
                short.push(format!("class {y} needs {need}, has {have}"));
            }
        }
        if !short.is_empty() {
            return Err(Error::Config(format!(
                "insufficient images per class: {}",
                short.join("; ")
            )));
        }
        Ok(schedule)
    }

    pub fn is_active(&self, y: ClassId, segment: usize) -> bool {
        self.introduced
            .get(&y)
            .is_some_and(|&s| segment >= s && segment < s + self.lifetime)
    }

    pub fn active(&self, segment: usize) -> Vec<ClassId> {
        self.introduced
            .keys()
            .copied()
            .filter(|&y| self.is_active(y, segment))
            .collect()
    }

    /// Total samples class `y` contributes over its lifetime.
    pub fn demand(&self, y: ClassId) -> usize {
        (0..self.segments)
            .filter(|&s| self.is_active(y, s))
            .map(|s| self.quota[s])
            .sum()
    }
}

/// Segmented open-world stream. Known-pool classes are always trainable;
/// unknown-pool classes only with `train_unknown`. An event counts as known
/// once its class has been taught in an earlier event.
pub fn generate_scenario3(config: &ScenarioConfig, dataset: &FeatureSet) -> Result<Vec<StreamEvent>> {
    let schedule = StreamSchedule::new(config, dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut pools: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for &y in schedule.introduced.keys() {
        let mut rows = dataset.indices_of(y).to_vec();
        rows.shuffle(&mut rng);
        pools.insert(y, rows);
    }
    let stats = if config.whiten {
        let rows: Vec<usize> = schedule
            .introduced
            .iter()
            .filter(|&(y, &s)| s == 0 && schedule.known_classes.contains(y))
            .flat_map(|(y, _)| dataset.indices_of(*y).iter().copied())
            .collect();
        Some(WhitenStats::from_rows(dataset, &rows)?)
    } else {
        None
    };
    let known_pool: BTreeSet<ClassId> = schedule.known_classes.iter().copied().collect();

    let mut taught = BTreeSet::new();
    let mut cursor: BTreeMap<ClassId, usize> = BTreeMap::new();
    let mut events = Vec::new();
    for segment in 0..schedule.segments {
        let mut rows = Vec::new();
        for y in schedule.active(segment) {
            let c = cursor.entry(y).or_insert(0);
            let q = schedule.quota[segment];
            rows.extend(pools[&y][*c..*c + q].iter().copied());
            *c += q;
        }
        rows.shuffle(&mut rng);
        for i in rows {
            let y = dataset.label(i);
            let x = match &stats {
                Some(s) => s.apply(dataset.row(i))?,
                None => dataset.row(i).to_vec(),
            };
            let trainable = config.train_unknown || known_pool.contains(&y);
            events.push(StreamEvent {
                x,
                y,
                known: taught.contains(&y),
                trainable,
                segment,
            });
            if trainable {
                taught.insert(y);
            }
        }
    }
    Ok(events)
}
