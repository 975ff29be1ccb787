//! Toy labelled datasets and disjoint teacher partitions.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Row-major labelled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(dim: usize, classes: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch { expected: dim * labels.len(), actual: features.len() });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        if labels.iter().any(|&y| y >= classes) {
            return Err(Error::Config(format!("label out of range for {classes} classes")));
        }
        Ok(Self { dim, classes, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Built-in synthetic tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Two isotropic Gaussian clusters in the plane, one per class.
    TwoClusters,
    /// `side × side` images with one bright blob whose position encodes the
    /// class (ten classes).
    DigitBlobs { side: usize },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::TwoClusters
    }
}

const CLUSTER_CENTER: f64 = 1.5;
const CLUSTER_SD: f64 = 0.7;
const DIGIT_CLASSES: usize = 10;

impl DatasetSpec {
    pub fn dim(&self) -> usize {
        match *self {
            DatasetSpec::TwoClusters => 2,
            DatasetSpec::DigitBlobs { side } => side * side,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            DatasetSpec::TwoClusters => 2,
            DatasetSpec::DigitBlobs { .. } => DIGIT_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DatasetSpec::DigitBlobs { side } if side < 4 => {
                Err(Error::Config(format!("digit side must be >= 4, got {side}")))
            }
            _ => Ok(()),
        }
    }

    /// `n` class-balanced samples (labels cycle through the classes).
    pub fn generate(&self, n: usize, rng: &mut Stream) -> Result<Dataset> {
        self.validate()?;
        let classes = self.classes();
        let dim = self.dim();
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let mut features = Vec::with_capacity(n * dim);
        match *self {
            DatasetSpec::TwoClusters => {
                let noise = Normal::new(0.0, CLUSTER_SD).expect("finite sd");
                for &y in &labels {
                    let c = if y == 0 { -CLUSTER_CENTER } else { CLUSTER_CENTER };
                    features.push(c + noise.sample(rng));
                    features.push(c + noise.sample(rng));
                }
            }
            DatasetSpec::DigitBlobs { side } => {
                let s = side as f64;
                let width = s / 6.0;
                for &y in &labels {
                    let angle = std::f64::consts::TAU * y as f64 / DIGIT_CLASSES as f64;
                    let jitter: (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
                    let cx = (s - 1.0) / 2.0 + s / 3.0 * angle.cos() + 0.15 * width * jitter.0;
                    let cy = (s - 1.0) / 2.0 + s / 3.0 * angle.sin() + 0.15 * width * jitter.1;
                    for r in 0..side {
                        for c in 0..side {
                            let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                            let z: f64 = StandardNormal.sample(rng);
                            let v = (-d2 / (2.0 * width * width)).exp() + 0.05 * z;
                            features.push(v.clamp(0.0, 1.0));
                        }
                    }
                }
            }
        }
        Dataset::new(dim, classes, features, labels)
    }

    /// Draw from the public prior used to initialize synthetic records.
    pub fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            DatasetSpec::TwoClusters => {
                let prior = Normal::new(0.0, CLUSTER_CENTER).expect("finite sd");
                (0..2).map(|_| prior.sample(rng)).collect()
            }
            DatasetSpec::DigitBlobs { .. } => (0..self.dim()).map(|_| rng.random::<f64>()).collect(),
        }
    }
}

/// Read access to one teacher's block of the private data.
///
/// Every lookup goes through [`PartitionHandle::fetch`], which refuses and
/// counts any index outside the block.
#[derive(Debug)]
pub struct PartitionHandle {
    id: usize,
    members: Vec<usize>,
    foreign: AtomicU64,
}

impl PartitionHandle {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Global indices owned by this partition, sorted.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn owns(&self, global: usize) -> bool {
        self.members.binary_search(&global).is_ok()
    }

    /// The record at a global index, when owned.
    pub fn fetch<'a>(&self, data: &'a Dataset, global: usize) -> Option<(&'a [f64], usize)> {
        if !self.owns(global) {
            self.foreign.fetch_add(1, Ordering::Relaxed);
            return None;
        }
        Some((data.record(global), data.label(global)))
    }

    /// Up to `m` distinct owned indices, sampled without replacement.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<usize> {
        rand::seq::index::sample(rng, self.members.len(), m.min(self.members.len()))
            .into_iter()
            .map(|i| self.members[i])
            .collect()
    }

    /// Number of refused lookups so far.
    pub fn foreign_accesses(&self) -> u64 {
        self.foreign.load(Ordering::Relaxed)
    }
}

/// Seeded permutation of `0..n` cut into `teachers` equal contiguous blocks.
pub fn partition_dataset(n: usize, teachers: usize, rng: &mut Stream) -> Result<Vec<PartitionHandle>> {
    if teachers == 0 || n % teachers != 0 {
        return Err(Error::Config(format!(
            "{teachers} teachers do not evenly divide {n} records"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let size = n / teachers;
    Ok(perm
        .chunks(size)
        .enumerate()
        .map(|(id, block)| {
            let mut members = block.to_vec();
            members.sort_unstable();
            PartitionHandle { id, members, foreign: AtomicU64::new(0) }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn twelve_into_three() {
        let parts = partition_dataset(12, 3, &mut stream(5)).unwrap();
        assert_eq!(parts.len(), 3);
        let mut all: Vec<usize> = parts.iter().flat_map(|p| p.members().to_vec()).collect();
        assert!(parts.iter().all(|p| p.len() == 4));
        all.sort_unstable();
        assert_eq!(all, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn singletons_and_errors() {
        let parts = partition_dataset(5, 5, &mut stream(1)).unwrap();
        assert!(parts.iter().all(|p| p.len() == 1));
        assert!(partition_dataset(10, 3, &mut stream(1)).is_err());
        assert!(partition_dataset(10, 0, &mut stream(1)).is_err());
    }

    #[test]
    fn seeded_permutation() {
        let members = |seed| -> Vec<Vec<usize>> {
            partition_dataset(40, 4, &mut stream(seed)).unwrap().iter().map(|p| p.members().to_vec()).collect()
        };
        assert_eq!(members(9), members(9));
        assert_ne!(members(9), members(10));
    }

    #[test]
    fn foreign_fetch_is_counted() {
        let data = DatasetSpec::TwoClusters.generate(8, &mut stream(0)).unwrap();
        let parts = partition_dataset(8, 2, &mut stream(0)).unwrap();
        let own = parts[0].members()[0];
        let other = parts[1].members()[0];
        assert!(parts[0].fetch(&data, own).is_some());
        assert!(parts[0].fetch(&data, other).is_none());
        assert_eq!(parts[0].foreign_accesses(), 1);
        for i in parts[1].sample(10, &mut stream(2)) {
            assert!(parts[1].owns(i));
        }
    }

    #[test]
    fn generators_have_expected_shape() {
        let d = DatasetSpec::DigitBlobs { side: 8 }.generate(30, &mut stream(4)).unwrap();
        assert_eq!((d.dim(), d.classes(), d.len()), (64, 10, 30));
        assert!(d.record(3).iter().all(|v| (0.0..=1.0).contains(v)));
        let c = DatasetSpec::TwoClusters.generate(400, &mut stream(4)).unwrap();
        let mean0: f64 = (0..400).filter(|&i| c.label(i) == 0).map(|i| c.record(i)[0]).sum::<f64>() / 200.0;
        assert!((mean0 + CLUSTER_CENTER).abs() < 0.2);
    }
}
