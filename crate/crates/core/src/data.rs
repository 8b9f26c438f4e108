//! Synthetic datasets, device partitioning and minibatch sampling.
//!
//! Everything here is a pure function of its arguments and a seed. Random
//! streams come from [`Rng`], a ChaCha8 generator keyed by `(seed, stream)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::{Error, ParamVector, Result};

/// Stream ids used to derive independent generators from one experiment seed.
pub mod streams {
    pub const DATA: u64 = 0;
    pub const SPLIT: u64 = 1;
    pub const PARTITION: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SIMULATOR: u64 = 4;
    /// Worker `i` draws from stream `WORKER_BASE + i`.
    pub const WORKER_BASE: u64 = 1 << 32;
}

/// Seeded ChaCha8 generator (`rand_chacha`), portable across platforms.
#[derive(Debug, Clone)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::for_stream(seed, 0)
    }

    pub fn for_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self(inner)
    }

    pub fn for_worker(seed: u64, worker: usize) -> Self {
        Self::for_stream(seed, streams::WORKER_BASE + worker as u64)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        self.0.random_range(0..n as u64) as usize
    }

    /// Uniform integer in `lo..=hi`.
    pub fn uniform_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        self.0.random_range(lo..=hi)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    pub fn exponential(&mut self, mean: f64) -> f64 {
        Exp::new(1.0 / mean).expect("positive mean").sample(&mut self.0)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.0);
    }

    /// `k` distinct indices from `0..n`, in sampling order.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.0, n, k).into_vec()
    }
}

/// One record: a feature vector and a target (a class index for classification).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: f64,
}

impl Sample {
    pub fn new(features: Vec<f64>, target: f64) -> Self {
        Self { features, target }
    }

    pub fn label(&self) -> usize {
        self.target as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Classification { classes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
    task: TaskKind,
    planted: Option<ParamVector>,
}

impl Dataset {
    /// Validates that every sample has `dim` features and, for
    /// classification, an integral label below the class count.
    pub fn new(samples: Vec<Sample>, dim: usize, task: TaskKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("feature dimension must be positive".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::InvalidConfig(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.features.len()
                )));
            }
            if let TaskKind::Classification { classes } = task {
                let ok = s.target >= 0.0 && libm::trunc(s.target) == s.target && (s.target as usize) < classes;
                if !ok {
                    return Err(Error::InvalidConfig(format!(
                        "sample {i} has label {} outside 0..{classes}",
                        s.target
                    )));
                }
            }
        }
        Ok(Self {
            samples,
            dim,
            task,
            planted: None,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    /// The generating parameter of a synthetic regression set.
    pub fn planted(&self) -> Option<&ParamVector> {
        self.planted.as_ref()
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            dim: self.dim,
            task: self.task,
            planted: self.planted.clone(),
        }
    }
}

/// Linear regression data: standard normal features and
/// `b = <a, x*> + noise_std * N(0, 1)` for a seeded planted `x*`.
pub fn gen_regression(n_samples: usize, dim: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if dim == 0 || n_samples < dim {
        return Err(Error::InvalidConfig(format!(
            "regression needs samples >= dim >= 1, got samples={n_samples} dim={dim}"
        )));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidConfig(format!("noise std must be >= 0, got {noise_std}")));
    }
    let mut rng = Rng::for_stream(seed, streams::DATA);
    let planted: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let samples = (0..n_samples)
        .map(|_| {
            let features: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let clean: f64 = features.iter().zip(&planted).map(|(a, x)| a * x).sum();
            let target = clean + noise_std * rng.normal();
            Sample::new(features, target)
        })
        .collect();
    let mut ds = Dataset::new(samples, dim, TaskKind::Regression)?;
    ds.planted = Some(ParamVector::new(planted)?);
    Ok(ds)
}

/// `classes` Gaussian blobs with identity covariance. Labels are assigned
/// round-robin, so class counts differ by at most one.
///
/// When `classes <= dim` the class means are `sep / sqrt(2) * e_k`, which
/// puts every pair of means exactly `sep` apart. Otherwise the means are
/// random unit directions with the same radius.
pub fn gen_classification(
    n_samples: usize,
    dim: usize,
    classes: usize,
    sep: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || dim == 0 || n_samples == 0 {
        return Err(Error::InvalidConfig(format!(
            "classification needs classes >= 2, dim >= 1, samples >= 1; got classes={classes} dim={dim} samples={n_samples}"
        )));
    }
    if !(sep > 0.0) {
        return Err(Error::InvalidConfig(format!("class separation must be > 0, got {sep}")));
    }
    let mut rng = Rng::for_stream(seed, streams::DATA);
    let radius = sep / core::f64::consts::SQRT_2;
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|k| {
            if classes <= dim {
                let mut m = vec![0.0; dim];
                m[k] = radius;
                m
            } else {
                let dir: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
                let norm = libm::sqrt(dir.iter().map(|v| v * v).sum::<f64>()).max(1e-12);
                dir.into_iter().map(|v| radius * v / norm).collect()
            }
        })
        .collect();
    let samples = (0..n_samples)
        .map(|i| {
            let label = i % classes;
            let features = means[label].iter().map(|m| m + rng.normal()).collect();
            Sample::new(features, label as f64)
        })
        .collect();
    Dataset::new(samples, dim, TaskKind::Classification { classes })
}

/// Seeded split into `(train, test)`, with `round(len * test_fraction)` test samples.
pub fn split_train_test(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidConfig(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    Rng::for_stream(seed, streams::SPLIT).shuffle(&mut order);
    let n_test = libm::round(ds.len() as f64 * test_fraction) as usize;
    if n_test >= ds.len() {
        return Err(Error::InvalidConfig("test split leaves no training samples".into()));
    }
    let (test, train) = order.split_at_mut(n_test);
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(train), ds.subset(test)))
}

/// One device's local data.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub device: usize,
    samples: Vec<Sample>,
    /// Positions of `samples` in the source dataset.
    indices: Vec<usize>,
}

impl Shard {
    pub fn new(device: usize, samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyShard);
        }
        let indices = (0..samples.len()).collect();
        Ok(Self {
            device,
            samples,
            indices,
        })
    }

    fn from_indices(device: usize, ds: &Dataset, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "partition leaves device {device} without samples"
            )));
        }
        let samples = indices.iter().map(|&i| ds.samples[i].clone()).collect();
        Ok(Self {
            device,
            samples,
            indices,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Seeded uniform split: shuffle, then deal round-robin. Shard sizes differ by at most one.
pub fn partition_iid(ds: &Dataset, n: usize, seed: u64) -> Result<Vec<Shard>> {
    check_device_count(ds, n)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    Rng::for_stream(seed, streams::PARTITION).shuffle(&mut order);
    let mut buckets = vec![Vec::new(); n];
    for (pos, idx) in order.into_iter().enumerate() {
        buckets[pos % n].push(idx);
    }
    build_shards(ds, buckets)
}

/// Label-skewed split.
///
/// The dataset is cut into `n * per_device` blocks which are shuffled and
/// dealt `per_device` to each device. For classification every block holds a
/// single label whenever there are at least as many blocks as labels, so each
/// device sees at most `per_device` distinct labels; `per_device >= classes`
/// degenerates to [`partition_iid`]. For regression the blocks are contiguous
/// ranges of the target-sorted samples.
pub fn partition_non_iid(ds: &Dataset, n: usize, per_device: usize, seed: u64) -> Result<Vec<Shard>> {
    check_device_count(ds, n)?;
    if per_device == 0 {
        return Err(Error::InvalidConfig("classes per device must be >= 1".into()));
    }
    if n == 1 {
        return build_shards(ds, vec![(0..ds.len()).collect()]);
    }
    let mut rng = Rng::for_stream(seed, streams::PARTITION);
    let n_blocks = n * per_device;
    let mut blocks = match ds.task {
        TaskKind::Classification { classes } => {
            if per_device >= classes {
                return partition_iid(ds, n, seed);
            }
            label_blocks(ds, n_blocks, &mut rng)
        }
        TaskKind::Regression => {
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.sort_by(|&a, &b| ds.samples[a].target.total_cmp(&ds.samples[b].target).then(a.cmp(&b)));
            contiguous_chunks(&order, n_blocks)
        }
    };
    rng.shuffle(&mut blocks);
    let buckets = blocks
        .chunks(per_device)
        .map(|chunk| chunk.iter().flatten().copied().collect())
        .collect();
    build_shards(ds, buckets)
}

fn check_device_count(ds: &Dataset, n: usize) -> Result<()> {
    if n == 0 || n > ds.len() {
        return Err(Error::InvalidConfig(format!(
            "device count must lie in 1..={}, got {n}",
            ds.len()
        )));
    }
    Ok(())
}

fn build_shards(ds: &Dataset, buckets: Vec<Vec<usize>>) -> Result<Vec<Shard>> {
    buckets
        .into_iter()
        .enumerate()
        .map(|(device, idx)| Shard::from_indices(device, ds, idx))
        .collect()
}

/// Near-equal contiguous chunks; the first `len % k` chunks get one extra item.
fn contiguous_chunks(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let base = items.len() / k;
    let extra = items.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Splits each label's (shuffled) samples into label-homogeneous blocks,
/// apportioning blocks to labels by the D'Hondt rule on label counts. Falls
/// back to contiguous cuts of the label-sorted order when there are fewer
/// blocks than labels.
fn label_blocks(ds: &Dataset, n_blocks: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let classes = match ds.task {
        TaskKind::Classification { classes } => classes,
        TaskKind::Regression => unreachable!(),
    };
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, s) in ds.samples.iter().enumerate() {
        by_label[s.label()].push(i);
    }
    by_label.retain(|v| !v.is_empty());
    for group in &mut by_label {
        rng.shuffle(group);
    }
    if n_blocks < by_label.len() {
        let sorted: Vec<usize> = by_label.concat();
        return contiguous_chunks(&sorted, n_blocks);
    }
    let mut alloc = vec![1usize; by_label.len()];
    for _ in by_label.len()..n_blocks {
        let mut best = 0;
        for k in 1..by_label.len() {
            // count_k / alloc_k > count_best / alloc_best, compared exactly
            if by_label[k].len() * alloc[best] > by_label[best].len() * alloc[k] {
                best = k;
            }
        }
        alloc[best] += 1;
    }
    by_label
        .iter()
        .zip(&alloc)
        .flat_map(|(group, &k)| contiguous_chunks(group, k))
        .collect()
}

/// A minibatch borrowed from a shard or dataset.
#[derive(Debug, Clone)]
pub struct MiniBatch<'a> {
    samples: Vec<&'a Sample>,
}

impl<'a> MiniBatch<'a> {
    /// Every sample, in order.
    pub fn from_samples(samples: &'a [Sample]) -> Self {
        Self {
            samples: samples.iter().collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a Sample> + '_ {
        self.samples.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `m` samples drawn uniformly with replacement.
pub fn sample_minibatch<'a>(shard: &'a Shard, m: usize, rng: &mut Rng) -> Result<MiniBatch<'a>> {
    sample_from(shard.samples(), m, rng)
}

pub fn sample_from<'a>(samples: &'a [Sample], m: usize, rng: &mut Rng) -> Result<MiniBatch<'a>> {
    if samples.is_empty() {
        return Err(Error::EmptyShard);
    }
    if m == 0 {
        return Err(Error::InvalidConfig("minibatch size must be >= 1".into()));
    }
    let picked = (0..m).map(|_| &samples[rng.index(samples.len())]).collect();
    Ok(MiniBatch { samples: picked })
}

/// How each local step picks its data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    /// The whole shard, deterministically; consumes no randomness.
    Full,
    /// `m` samples with replacement.
    Sampled(usize),
}

impl BatchSize {
    pub fn draw<'a>(&self, samples: &'a [Sample], rng: &mut Rng) -> Result<MiniBatch<'a>> {
        match *self {
            BatchSize::Full if samples.is_empty() => Err(Error::EmptyShard),
            BatchSize::Full => Ok(MiniBatch::from_samples(samples)),
            BatchSize::Sampled(m) => sample_from(samples, m, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label_set(shard: &Shard) -> Vec<usize> {
        let mut labels: Vec<usize> = shard.samples().iter().map(Sample::label).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    fn assert_partition(ds: &Dataset, shards: &[Shard]) {
        let mut seen = vec![false; ds.len()];
        for shard in shards {
            assert!(!shard.is_empty());
            for (&i, s) in shard.indices().iter().zip(shard.samples()) {
                assert!(!seen[i], "index {i} in two shards");
                seen[i] = true;
                assert_eq!(&ds.samples()[i], s);
            }
        }
        assert!(seen.iter().all(|&v| v));
    }

    #[test]
    fn noiseless_regression_is_interpolated_by_planted() {
        let ds = gen_regression(50, 4, 0.0, 7).unwrap();
        let x = ds.planted().unwrap();
        for s in ds.samples() {
            let pred: f64 = s.features.iter().zip(x).map(|(a, b)| a * b).sum();
            assert_eq!(pred, s.target);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gen_regression(30, 3, 0.1, 5).unwrap(), gen_regression(30, 3, 0.1, 5).unwrap());
        assert_ne!(gen_regression(30, 3, 0.1, 5).unwrap(), gen_regression(30, 3, 0.1, 6).unwrap());
        assert_eq!(
            gen_classification(40, 3, 4, 2.0, 5).unwrap(),
            gen_classification(40, 3, 4, 2.0, 5).unwrap()
        );
    }

    #[test]
    fn generator_argument_errors() {
        assert!(gen_regression(3, 4, 0.1, 0).is_err());
        assert!(gen_regression(10, 0, 0.1, 0).is_err());
        assert!(gen_regression(10, 2, -1.0, 0).is_err());
        assert!(gen_classification(10, 2, 1, 1.0, 0).is_err());
        assert!(gen_classification(10, 2, 2, 0.0, 0).is_err());
    }

    #[test]
    fn class_counts_are_balanced() {
        let ds = gen_classification(120, 5, 6, 3.0, 1).unwrap();
        let mut counts = [0usize; 6];
        ds.samples().iter().for_each(|s| counts[s.label()] += 1);
        assert!(counts.iter().all(|&c| c == 20));
        let ds = gen_classification(123, 5, 6, 3.0, 1).unwrap();
        let mut counts = [0usize; 6];
        ds.samples().iter().for_each(|s| counts[s.label()] += 1);
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }

    #[test]
    fn axis_means_are_sep_apart() {
        // Average of many samples per class approaches its mean.
        let ds = gen_classification(20_000, 3, 2, 4.0, 2).unwrap();
        let mut sums = [[0.0f64; 3]; 2];
        for s in ds.samples() {
            for j in 0..3 {
                sums[s.label()][j] += s.features[j] / 10_000.0;
            }
        }
        let dist: f64 = (0..3).map(|j| (sums[0][j] - sums[1][j]).powi(2)).sum::<f64>().sqrt();
        assert!((dist - 4.0).abs() < 0.05, "dist {dist}");
    }

    #[test]
    fn single_device_gets_everything() {
        let ds = gen_classification(40, 2, 4, 2.0, 3).unwrap();
        let shards = partition_non_iid(&ds, 1, 1, 3).unwrap();
        assert_eq!(shards.len(), 1);
        assert_eq!(shards[0].samples(), ds.samples());
    }

    #[test]
    fn label_skew_limits_labels_per_device() {
        let ds = gen_classification(160, 4, 8, 2.0, 9).unwrap();
        let shards = partition_non_iid(&ds, 4, 2, 9).unwrap();
        assert_partition(&ds, &shards);
        for shard in &shards {
            assert!(label_set(shard).len() <= 2);
        }
        // four devices with two labels each: some pair is disjoint
        let sets: Vec<_> = shards.iter().map(label_set).collect();
        let disjoint = (0..4).any(|i| (i + 1..4).any(|j| sets[i].iter().all(|l| !sets[j].contains(l))));
        assert!(disjoint);
    }

    #[test]
    fn full_class_coverage_degenerates_to_uniform_split() {
        let ds = gen_classification(103, 3, 4, 2.0, 4).unwrap();
        let shards = partition_non_iid(&ds, 5, 4, 4).unwrap();
        assert_partition(&ds, &shards);
        let sizes: Vec<usize> = shards.iter().map(Shard::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(shards, partition_iid(&ds, 5, 4).unwrap());
    }

    #[test]
    fn regression_skew_sorts_targets() {
        let ds = gen_regression(100, 2, 0.1, 2).unwrap();
        let shards = partition_non_iid(&ds, 5, 1, 2).unwrap();
        assert_partition(&ds, &shards);
        // each shard is a contiguous target range, so the ranges do not interleave
        let mut ranges: Vec<(f64, f64)> = shards
            .iter()
            .map(|s| {
                let t = s.samples().iter().map(|x| x.target);
                (t.clone().fold(f64::INFINITY, f64::min), t.fold(f64::NEG_INFINITY, f64::max))
            })
            .collect();
        ranges.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in ranges.windows(2) {
            assert!(w[0].1 < w[1].0);
        }
    }

    #[test]
    fn too_many_devices_is_an_error() {
        let ds = gen_regression(10, 2, 0.1, 2).unwrap();
        assert!(partition_non_iid(&ds, 11, 1, 0).is_err());
        assert!(partition_iid(&ds, 0, 0).is_err());
    }

    #[test]
    fn partition_is_deterministic() {
        let ds = gen_classification(200, 4, 10, 2.0, 1).unwrap();
        assert_eq!(partition_non_iid(&ds, 10, 2, 8).unwrap(), partition_non_iid(&ds, 10, 2, 8).unwrap());
    }

    #[test]
    fn split_is_disjoint_and_sized() {
        let ds = gen_regression(100, 2, 0.1, 2).unwrap();
        let (train, test) = split_train_test(&ds, 0.2, 5).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        for s in test.samples() {
            assert!(!train.samples().contains(s));
        }
        assert!(split_train_test(&ds, 1.0, 5).is_err());
    }

    #[test]
    fn minibatch_basics() {
        let shard = Shard::new(0, vec![Sample::new(vec![1.0], 2.0)]).unwrap();
        let batch = sample_minibatch(&shard, 1, &mut Rng::new(0)).unwrap();
        assert_eq!(batch.iter().next().unwrap(), &shard.samples()[0]);
        assert!(sample_minibatch(&shard, 0, &mut Rng::new(0)).is_err());
        assert!(Shard::new(0, vec![]).is_err());
        assert_eq!(sample_from(&[], 3, &mut Rng::new(0)).unwrap_err(), Error::EmptyShard);
    }

    #[test]
    fn minibatch_is_reproducible() {
        let samples: Vec<Sample> = (0..10).map(|i| Sample::new(vec![i as f64], 0.0)).collect();
        let shard = Shard::new(0, samples).unwrap();
        let a: Vec<f64> = sample_minibatch(&shard, 20, &mut Rng::new(11)).unwrap().iter().map(|s| s.features[0]).collect();
        let b: Vec<f64> = sample_minibatch(&shard, 20, &mut Rng::new(11)).unwrap().iter().map(|s| s.features[0]).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn minibatch_frequencies_are_uniform() {
        let samples: Vec<Sample> = (0..10).map(|i| Sample::new(vec![i as f64], 0.0)).collect();
        let shard = Shard::new(0, samples).unwrap();
        let draws = 100_000;
        let batch = sample_minibatch(&shard, draws, &mut Rng::new(3)).unwrap();
        let mut counts = [0usize; 10];
        batch.iter().for_each(|s| counts[s.features[0] as usize] += 1);
        // binomial(1e5, 0.1): sigma = 94.9
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() <= 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn streams_are_independent() {
        let mut a = Rng::for_stream(1, 0);
        let mut b = Rng::for_stream(1, 1);
        let xa: Vec<f64> = (0..4).map(|_| a.unit()).collect();
        let xb: Vec<f64> = (0..4).map(|_| b.unit()).collect();
        assert_ne!(xa, xb);
    }
}
