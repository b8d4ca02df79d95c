//! Seeded synthetic feature sets.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataio::FeatureSet;
use crate::error::{Error, Result};
use crate::ClassId;

/// Axis-aligned Gaussian blob.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub mean: Vec<f64>,
    /// Per-dimension variance; zero gives a point mass.
    pub variance: Vec<f64>,
    pub class_id: ClassId,
    pub count: usize,
}

/// Noisy circular arc in the first two dimensions; the remaining dimensions
/// get isotropic Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct RingSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub radial_std: f64,
    /// Arc covered, in radians `[start, end)`.
    pub arc: (f64, f64),
    pub off_plane_std: f64,
    pub class_id: ClassId,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    Blob(BlobSpec),
    Ring(RingSpec),
}

impl Component {
    fn dim(&self) -> usize {
        match self {
            Component::Blob(b) => b.mean.len(),
            Component::Ring(r) => r.center.len(),
        }
    }

    fn count(&self) -> usize {
        match self {
            Component::Blob(b) => b.count,
            Component::Ring(r) => r.count,
        }
    }

    fn class_id(&self) -> ClassId {
        match self {
            Component::Blob(b) => b.class_id,
            Component::Ring(r) => r.class_id,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.count() == 0 {
            return Err(Error::InvalidInput(format!(
                "component for class {} has zero samples",
                self.class_id()
            )));
        }
        match self {
            Component::Blob(b) => {
                if b.variance.len() != b.mean.len() {
                    return Err(Error::InvalidInput(format!(
                        "class {}: variance has {} entries, mean has {}",
                        b.class_id,
                        b.variance.len(),
                        b.mean.len()
                    )));
                }
                if b.variance.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidInput(format!(
                        "class {}: variances must be finite and non-negative",
                        b.class_id
                    )));
                }
            }
            Component::Ring(r) => {
                if r.center.len() < 2 {
                    return Err(Error::InvalidInput("rings need at least two dimensions".into()));
                }
                if !(r.radius >= 0.0 && r.radial_std >= 0.0 && r.off_plane_std >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "class {}: ring radius and noise must be non-negative",
                        r.class_id
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        match self {
            Component::Blob(b) => {
                for (m, v) in b.mean.iter().zip(&b.variance) {
                    let z: f64 = rng.sample(StandardNormal);
                    out.push(m + v.sqrt() * z);
                }
            }
            Component::Ring(r) => {
                let angle = r.arc.0 + (r.arc.1 - r.arc.0) * rng.random::<f64>();
                let z: f64 = rng.sample(StandardNormal);
                let rho = r.radius + r.radial_std * z;
                out.push(r.center[0] + rho * angle.cos());
                out.push(r.center[1] + rho * angle.sin());
                for c in &r.center[2..] {
                    let z: f64 = rng.sample(StandardNormal);
                    out.push(c + r.off_plane_std * z);
                }
            }
        }
    }
}

/// Samples every blob in order; classes are contiguous in the result.
pub fn synth_gaussians(specs: &[BlobSpec], seed: u64) -> Result<FeatureSet> {
    let components: Vec<Component> = specs.iter().cloned().map(Component::Blob).collect();
    synth_components(&components, seed)
}

pub fn synth_components(components: &[Component], seed: u64) -> Result<FeatureSet> {
    let d = components
        .first()
        .ok_or_else(|| Error::InvalidInput("no components to sample".into()))?
        .dim();
    for c in components {
        c.validate()?;
        if c.dim() != d {
            return Err(Error::InvalidInput(format!(
                "class {} has dimension {}, expected {d}",
                c.class_id(),
                c.dim()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = components.iter().map(Component::count).sum();
    let mut features = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    for c in components {
        for _ in 0..c.count() {
            c.sample(&mut rng, &mut features);
            labels.push(c.class_id());
        }
    }
    FeatureSet::new(d, features, labels)
}

/// Built-in synthetic datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Three well-separated blobs in 10 dimensions, 500 samples each.
    Separable3,
    /// Four 2-D blobs on the corners of a square; opposite corners share a
    /// class, so class means coincide.
    Xor4,
    /// Two known 2-D blobs (classes 0, 1) inside a ring split into two
    /// half-arc classes (2, 3) that play the unknown classes.
    Halo,
    /// 200 random blobs in 16 dimensions, large enough for the full-size
    /// scenario defaults.
    Blobs200,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Separable3, Preset::Xor4, Preset::Halo, Preset::Blobs200];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Separable3 => "separable3",
            Preset::Xor4 => "xor4",
            Preset::Halo => "halo",
            Preset::Blobs200 => "blobs200",
        }
    }

    pub fn components(self) -> Vec<Component> {
        match self {
            Preset::Separable3 => (0..3)
                .map(|k| {
                    let mut mean = vec![0.0; 10];
                    mean[k] = 4.0;
                    Component::Blob(BlobSpec {
                        mean,
                        variance: vec![1.0; 10],
                        class_id: k as ClassId,
                        count: 500,
                    })
                })
                .collect(),
            Preset::Xor4 => [(2.0, 2.0, 0), (-2.0, -2.0, 0), (2.0, -2.0, 1), (-2.0, 2.0, 1)]
                .into_iter()
                .map(|(a, b, y)| {
                    Component::Blob(BlobSpec {
                        mean: vec![a, b],
                        variance: vec![0.25, 0.25],
                        class_id: y,
                        count: 500,
                    })
                })
                .collect(),
            Preset::Halo => {
                let blob = |x: f64, y: ClassId| {
                    Component::Blob(BlobSpec {
                        mean: vec![x, 0.0],
                        variance: vec![0.25, 0.25],
                        class_id: y,
                        count: 1200,
                    })
                };
                let arc = |start: f64, y: ClassId| {
                    Component::Ring(RingSpec {
                        center: vec![0.0, 0.0],
                        radius: 7.0,
                        radial_std: 0.5,
                        arc: (start, start + PI),
                        off_plane_std: 0.0,
                        class_id: y,
                        count: 1200,
                    })
                };
                vec![blob(-2.0, 0), blob(2.0, 1), arc(0.0, 2), arc(PI, 3)]
            }
            Preset::Blobs200 => {
                // centers are fixed; only the samples depend on the seed
                let mut centers = ChaCha8Rng::seed_from_u64(0x0b10_b200);
                (0..200)
                    .map(|k| {
                        Component::Blob(BlobSpec {
                            mean: (0..16).map(|_| centers.random_range(-6.0..6.0)).collect(),
                            variance: vec![1.0; 16],
                            class_id: k,
                            count: 1800,
                        })
                    })
                    .collect()
            }
        }
    }

    pub fn generate(self, seed: u64) -> Result<FeatureSet> {
        synth_components(&self.components(), seed)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown synthetic preset '{s}' (expected separable3, xor4, halo or blobs200)"
                ))
            })
    }
}
