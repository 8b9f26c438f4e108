//! Server side: the updater (staleness-weighted mixing into the global model)
//! and the scheduler (which tasks to start so staleness stays bounded).

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::numerics::mix;
use crate::worker::LocalUpdate;
use crate::{Error, ParamVector, Result};

/// The weighting function `s(staleness)` applied to the base mixing weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StalenessStrategy {
    /// `s = 1`.
    Constant,
    /// `s = (staleness + 1)^-a`.
    Polynomial { a: f64 },
    /// `s = 1` up to `b`, then `1 / (a * (staleness - b) + 1)`.
    Hinge { a: f64, b: u64 },
}

impl StalenessStrategy {
    pub fn decay(&self, staleness: u64) -> f64 {
        match *self {
            StalenessStrategy::Constant => 1.0,
            StalenessStrategy::Polynomial { a } => libm::pow(staleness as f64 + 1.0, -a),
            StalenessStrategy::Hinge { a, b } => {
                if staleness <= b {
                    1.0
                } else {
                    1.0 / (a * (staleness - b) as f64 + 1.0)
                }
            }
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match *self {
            StalenessStrategy::Constant => {}
            StalenessStrategy::Polynomial { a } | StalenessStrategy::Hinge { a, .. } => {
                if !(a > 0.0 && a.is_finite()) {
                    out.push(format!("staleness decay parameter a must be > 0, got {a}"));
                }
            }
        }
        out
    }
}

/// `alpha * s(staleness)`.
///
/// Staleness is unsigned here; a timestamp from the future is rejected
/// earlier, in [`ServerState::apply_update`].
pub fn staleness_weight(strategy: &StalenessStrategy, alpha: f64, staleness: u64) -> f64 {
    alpha * strategy.decay(staleness)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    /// Base mixing weight, in `(0, 1)`. Exactly 1 is accepted and makes each
    /// update replace the global model.
    pub alpha: f64,
    pub strategy: StalenessStrategy,
    /// Largest staleness `K` an applied update may have.
    pub max_staleness: u64,
    /// Number of global epochs `T`.
    pub total_epochs: u64,
}

impl ServerConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            out.push(format!("alpha must lie in (0, 1) (or be exactly 1 to replace), got {}", self.alpha));
        }
        if self.total_epochs < 1 {
            out.push("total epochs must be >= 1".into());
        }
        out.extend(self.strategy.problems());
        out
    }
}

/// Outcome of one accepted update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Applied {
    /// Epoch after the update.
    pub epoch: u64,
    pub staleness: u64,
    pub alpha_t: f64,
}

/// The global model together with its epoch counter and a bounded history.
#[derive(Debug, Clone)]
pub struct ServerState {
    model: ParamVector,
    epoch: u64,
    gradients_applied: u64,
    rejected: u64,
    /// Models for epochs `epoch + 1 - history.len() ..= epoch`, oldest first.
    history: VecDeque<ParamVector>,
    depth: usize,
}

impl ServerState {
    /// History keeps the last `max_staleness + 1` models.
    pub fn new(x0: ParamVector, max_staleness: u64) -> Self {
        let depth = max_staleness as usize + 1;
        let mut history = VecDeque::with_capacity(depth);
        history.push_back(x0.clone());
        Self {
            model: x0,
            epoch: 0,
            gradients_applied: 0,
            rejected: 0,
            history,
            depth,
        }
    }

    pub fn model(&self) -> &ParamVector {
        &self.model
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn gradients_applied(&self) -> u64 {
        self.gradients_applied
    }

    /// Updates refused for exceeding the staleness bound.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// `(epoch, model)` as one consistent pair.
    pub fn snapshot(&self) -> (u64, ParamVector) {
        (self.epoch, self.model.clone())
    }

    /// The global model as it was at `epoch`, if still retained.
    pub fn model_at(&self, epoch: u64) -> Option<&ParamVector> {
        let back = self.epoch.checked_sub(epoch)? as usize;
        let len = self.history.len();
        (back < len).then(|| &self.history[len - 1 - back])
    }

    /// Mixes `upd` into the global model with the staleness-adapted weight
    /// and advances the epoch. Staleness is measured against the epoch before
    /// the increment.
    pub fn apply_update(&mut self, upd: &LocalUpdate, cfg: &ServerConfig) -> Result<Applied> {
        self.model.check_dim(&upd.params)?;
        if upd.tau > self.epoch {
            return Err(Error::FutureTimestamp {
                tau: upd.tau,
                epoch: self.epoch,
            });
        }
        let staleness = self.epoch - upd.tau;
        if staleness > cfg.max_staleness {
            self.rejected += 1;
            return Err(Error::StaleUpdate {
                staleness,
                max: cfg.max_staleness,
            });
        }
        let alpha_t = staleness_weight(&cfg.strategy, cfg.alpha, staleness);
        self.model = mix(&self.model, &upd.params, alpha_t)?;
        self.epoch += 1;
        self.gradients_applied += upd.gradients_computed;
        if self.history.len() == self.depth {
            self.history.pop_front();
        }
        self.history.push_back(self.model.clone());
        Ok(Applied {
            epoch: self.epoch,
            staleness,
            alpha_t,
        })
    }
}

/// A decision to start a task on `worker` from the model of `epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trigger {
    pub worker: usize,
    pub epoch: u64,
}

/// Whether a task started now could push the staleness of any in-flight
/// task (or itself) past `max_staleness`.
///
/// Every update applied before a task lands adds one to its staleness, and
/// applications only come from tasks already in flight. So a task started at
/// `tau` can end up at most `(epoch - tau) + (in_flight - 1)` stale, and
/// starting one more adds one. This also caps concurrency at `K + 1`.
pub fn can_trigger(epoch: u64, in_flight_taus: &[u64], max_staleness: u64) -> bool {
    match in_flight_taus.iter().min() {
        None => true,
        Some(&oldest) => (epoch - oldest) + in_flight_taus.len() as u64 <= max_staleness,
    }
}

/// Chooses idle workers to start, lowest id first on the first tick and
/// round-robin afterwards.
#[derive(Debug, Clone)]
pub struct Scheduler {
    workers: usize,
    max_staleness: u64,
    cursor: usize,
}

impl Scheduler {
    pub fn new(workers: usize, max_staleness: u64) -> Self {
        Self {
            workers,
            max_staleness,
            cursor: 0,
        }
    }

    /// `in_flight_taus` holds the start epoch of every running task; `idle`
    /// is indexed by worker id.
    pub fn tick(&mut self, epoch: u64, in_flight_taus: &[u64], idle: &[bool]) -> Vec<Trigger> {
        debug_assert_eq!(idle.len(), self.workers);
        let mut taus: Vec<u64> = in_flight_taus.to_vec();
        let mut out = Vec::new();
        for offset in 0..self.workers {
            let worker = (self.cursor + offset) % self.workers;
            if !idle[worker] {
                continue;
            }
            if !can_trigger(epoch, &taus, self.max_staleness) {
                break;
            }
            taus.push(epoch);
            out.push(Trigger { worker, epoch });
        }
        if let Some(last) = out.last() {
            self.cursor = (last.worker + 1) % self.workers;
        }
        out
    }
}
