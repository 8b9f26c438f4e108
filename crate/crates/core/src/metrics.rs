//! Per-evaluation metrics rows and per-update trace entries shared by every
//! algorithm, keyed by the number of gradients applied to the global model.

use alloc::vec::Vec;

use crate::data::{MiniBatch, Sample};
use crate::numerics::Objective;
use crate::server::Applied;
use crate::{Error, ParamVector};

/// One row of the metrics stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: u64,
    pub gradients: u64,
    /// Full-batch training loss.
    pub loss: f64,
    /// Squared norm of the full-batch training gradient.
    pub grad_norm_sq: f64,
    /// Held-out accuracy, for classifiers.
    pub accuracy: Option<f64>,
    /// Weight used by the most recent update.
    pub alpha_t: Option<f64>,
    /// Staleness of the most recent update.
    pub staleness: Option<u64>,
    /// Simulated clock, latency mode only.
    pub sim_time: Option<f64>,
}

/// One applied update, as seen by the updater.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    /// Epoch after the update.
    pub epoch: u64,
    pub worker: usize,
    pub tau: u64,
    pub staleness: u64,
    pub alpha_t: f64,
    pub local_iters: u64,
    pub sim_time: Option<f64>,
}

/// Everything a run produced. A run that failed part-way keeps what it
/// recorded before the failure.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub updates: Vec<UpdateRecord>,
    pub rejected: u64,
    pub final_model: ParamVector,
    pub failure: Option<Error>,
}

impl RunOutput {
    pub fn final_record(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }
}

/// Full-batch metrics over the training set plus test accuracy.
pub struct Evaluator<'a> {
    objective: &'a dyn Objective,
    train: MiniBatch<'a>,
    test: Option<MiniBatch<'a>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(objective: &'a dyn Objective, train: &'a [Sample], test: &'a [Sample]) -> Self {
        Self {
            objective,
            train: MiniBatch::from_samples(train),
            test: (!test.is_empty()).then(|| MiniBatch::from_samples(test)),
        }
    }

    pub fn loss(&self, x: &ParamVector) -> f64 {
        self.objective.loss(x, &self.train)
    }

    pub fn record(
        &self,
        epoch: u64,
        gradients: u64,
        x: &ParamVector,
        last: Option<&Applied>,
        sim_time: Option<f64>,
    ) -> MetricsRecord {
        MetricsRecord {
            epoch,
            gradients,
            loss: self.objective.loss(x, &self.train),
            grad_norm_sq: self.objective.grad(x, &self.train).norm_sq(),
            accuracy: self.test.as_ref().and_then(|t| self.objective.accuracy(x, t)),
            alpha_t: last.map(|a| a.alpha_t),
            staleness: last.map(|a| a.staleness),
            sim_time,
        }
    }
}

/// Whether epoch `t` is an evaluation point: every `every` epochs and always the last.
pub fn eval_due(t: u64, every: u64, total: u64) -> bool {
    t == total || (every > 0 && t.is_multiple_of(every))
}

/// Gradients applied when the loss first drops to `fraction` of the first
/// record's loss.
pub fn gradients_to_target(records: &[MetricsRecord], fraction: f64) -> Option<u64> {
    let initial = records.first()?.loss;
    let target = fraction * initial;
    records.iter().find(|r| r.loss <= target).map(|r| r.gradients)
}
