//! Experiment configuration and the environment (data, shards, objective,
//! initial model) every runner builds from it.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{
    gen_classification, gen_regression, partition_iid, partition_non_iid, split_train_test, streams,
    BatchSize, Dataset, Rng, Shard,
};
use crate::numerics::{LogisticObjective, MlpObjective, Objective, QuadraticObjective};
use crate::server::{ServerConfig, StalenessStrategy};
use crate::worker::WorkerConfig;
use crate::{Error, ParamVector, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveSpec {
    /// Least squares on synthetic regression data.
    Quadratic,
    /// Binary logistic regression (label parity) on Gaussian blobs.
    Logistic { l2: f64 },
    /// One-hidden-layer tanh network on Gaussian blobs.
    Mlp { hidden: usize },
}

impl ObjectiveSpec {
    pub fn is_classification(&self) -> bool {
        !matches!(self, ObjectiveSpec::Quadratic)
    }
}

/// Synthetic data shape. `noise_std` applies to regression, `classes` and
/// `separation` to classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataSpec {
    pub samples: usize,
    pub dim: usize,
    pub noise_std: f64,
    pub classes: usize,
    pub separation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionSpec {
    Iid,
    /// Label-sorted blocks, `per_device` per device.
    LabelSkew { per_device: usize },
}

/// Device choice per epoch in sampled-staleness mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceOrder {
    Uniform,
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayDist {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
}

impl DelayDist {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            DelayDist::Constant(v) => v,
            DelayDist::Uniform { lo, hi } => lo + (hi - lo) * rng.unit(),
            DelayDist::Exponential { mean } => rng.exponential(mean),
        }
    }

    fn problems(&self) -> Option<String> {
        let ok = match *self {
            DelayDist::Constant(v) => v >= 0.0 && v.is_finite(),
            DelayDist::Uniform { lo, hi } => lo >= 0.0 && hi >= lo && hi.is_finite(),
            DelayDist::Exponential { mean } => mean > 0.0 && mean.is_finite(),
        };
        (!ok).then(|| format!("invalid delay distribution {self:?}"))
    }
}

/// Per-worker task duration: `scale * (compute + network)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyProfile {
    pub compute: DelayDist,
    pub network: DelayDist,
    pub scale: f64,
}

impl LatencyProfile {
    pub fn constant(delay: f64) -> Self {
        Self {
            compute: DelayDist::Constant(delay),
            network: DelayDist::Constant(0.0),
            scale: 1.0,
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        self.scale * (self.compute.sample(rng) + self.network.sample(rng))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StalenessMode {
    /// Staleness drawn uniformly from `0..=min(K, t - 1)` each epoch.
    Sampled { order: DeviceOrder },
    /// Staleness emerges from simulated task durations, one profile per worker.
    Latency { profiles: Vec<LatencyProfile> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FedAvgConfig {
    /// Devices per round.
    pub k: usize,
    /// Local steps per device per round.
    pub local_iters: u64,
}

impl FedAvgConfig {
    /// Checked only by the FedAvg runner, since other algorithms ignore it.
    pub fn problems(&self, devices: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.k == 0 || self.k > devices {
            out.push(format!("fedavg k must lie in 1..={devices}, got {}", self.k));
        }
        if self.local_iters == 0 {
            out.push("fedavg local iterations must be >= 1".into());
        }
        out
    }
}

/// Every knob of one run. `server.total_epochs` is the length of the run for
/// all algorithms: epochs for FedAsync, rounds for FedAvg, steps for SGD.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub devices: usize,
    pub server: ServerConfig,
    pub worker: WorkerConfig,
    pub fedavg: FedAvgConfig,
    pub objective: ObjectiveSpec,
    pub data: DataSpec,
    pub partition: PartitionSpec,
    pub mode: StalenessMode,
    pub seed: u64,
    pub eval_every: u64,
    pub test_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            devices: 10,
            server: ServerConfig {
                alpha: 0.6,
                strategy: StalenessStrategy::Constant,
                max_staleness: 4,
                total_epochs: 2000,
            },
            worker: WorkerConfig {
                gamma: 0.1,
                rho: 0.005,
                h_min: 5,
                h_max: 15,
                batch: BatchSize::Sampled(20),
            },
            fedavg: FedAvgConfig { k: 10, local_iters: 10 },
            objective: ObjectiveSpec::Quadratic,
            data: DataSpec {
                samples: 1000,
                dim: 10,
                noise_std: 0.1,
                classes: 4,
                separation: 4.0,
            },
            partition: PartitionSpec::LabelSkew { per_device: 2 },
            mode: StalenessMode::Sampled { order: DeviceOrder::Uniform },
            seed: 1,
            eval_every: 10,
            test_fraction: 0.2,
        }
    }
}

impl ExperimentConfig {
    /// Every validation problem found, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.server.problems();
        out.extend(self.worker.problems());
        if self.devices == 0 {
            out.push("devices must be >= 1".into());
        }
        if self.data.dim == 0 || self.data.samples == 0 {
            out.push("data needs samples >= 1 and dim >= 1".into());
        }
        if self.objective.is_classification() {
            if self.data.classes < 2 {
                out.push(format!("classification needs classes >= 2, got {}", self.data.classes));
            }
            if !(self.data.separation > 0.0) {
                out.push(format!("class separation must be > 0, got {}", self.data.separation));
            }
            if let PartitionSpec::LabelSkew { per_device } = self.partition {
                if per_device == 0 || per_device > self.data.classes {
                    out.push(format!(
                        "classes per device must lie in 1..={}, got {per_device}",
                        self.data.classes
                    ));
                }
            }
        } else if !(self.data.noise_std >= 0.0) {
            out.push(format!("noise std must be >= 0, got {}", self.data.noise_std));
        }
        if let ObjectiveSpec::Mlp { hidden: 0 } = self.objective {
            out.push("mlp hidden width must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            out.push(format!("test fraction must lie in [0, 1), got {}", self.test_fraction));
        }
        if let StalenessMode::Latency { profiles } = &self.mode {
            if profiles.len() != self.devices {
                out.push(format!(
                    "latency mode needs one profile per device: {} profiles for {} devices",
                    profiles.len(),
                    self.devices
                ));
            }
            for p in profiles {
                out.extend(p.compute.problems());
                out.extend(p.network.problems());
                if !(p.scale > 0.0 && p.scale.is_finite()) {
                    out.push(format!("latency scale must be > 0, got {}", p.scale));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

/// Data, device shards, objective and starting model for one run.
pub struct Environment {
    pub objective: Box<dyn Objective>,
    pub train: Dataset,
    pub test: Dataset,
    pub shards: Vec<Shard>,
    pub x0: ParamVector,
}

impl Environment {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.data;
        let full = if cfg.objective.is_classification() {
            gen_classification(d.samples, d.dim, d.classes, d.separation, cfg.seed)?
        } else {
            gen_regression(d.samples, d.dim, d.noise_std, cfg.seed)?
        };
        let (train, test) = split_train_test(&full, cfg.test_fraction, cfg.seed)?;
        let shards = match cfg.partition {
            PartitionSpec::Iid => partition_iid(&train, cfg.devices, cfg.seed)?,
            PartitionSpec::LabelSkew { per_device } => {
                partition_non_iid(&train, cfg.devices, per_device, cfg.seed)?
            }
        };
        let (objective, x0): (Box<dyn Objective>, ParamVector) = match cfg.objective {
            ObjectiveSpec::Quadratic => (Box::new(QuadraticObjective::new(d.dim)), ParamVector::zeros(d.dim)),
            ObjectiveSpec::Logistic { l2 } => {
                (Box::new(LogisticObjective::new(d.dim, l2)), ParamVector::zeros(d.dim))
            }
            ObjectiveSpec::Mlp { hidden } => {
                let obj = MlpObjective::new(d.dim, hidden, d.classes);
                let mut rng = Rng::for_stream(cfg.seed, streams::INIT);
                let x0 = (0..obj.dim()).map(|_| 0.1 * rng.normal()).collect();
                (Box::new(obj), ParamVector::new(x0)?)
            }
        };
        Ok(Self {
            objective,
            train,
            test,
            shards,
            x0,
        })
    }

    pub fn evaluator(&self) -> crate::metrics::Evaluator<'_> {
        crate::metrics::Evaluator::new(self.objective.as_ref(), self.train.samples(), self.test.samples())
    }
}
