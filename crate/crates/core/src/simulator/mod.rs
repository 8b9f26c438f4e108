//! Deterministic FedAsync drivers.
//!
//! [`run_fedasync_sampled`] draws each update's staleness directly and
//! trains from the matching historical model. [`run_fedasync_latency`] runs
//! a discrete-event simulation where staleness emerges from task durations
//! under the bounded-delay scheduler.

mod latency;
mod sampled;

pub use latency::run_fedasync_latency;
pub use sampled::run_fedasync_sampled;

use alloc::vec::Vec;

use crate::data::Rng;
use crate::experiment::ExperimentConfig;

pub(crate) fn worker_rngs(cfg: &ExperimentConfig) -> Vec<Rng> {
    (0..cfg.devices).map(|i| Rng::for_worker(cfg.seed, i)).collect()
}
