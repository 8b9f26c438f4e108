use alloc::vec::Vec;

use crate::data::{streams, Rng};
use crate::experiment::{DeviceOrder, Environment, ExperimentConfig, StalenessMode};
use crate::metrics::{eval_due, RunOutput, UpdateRecord};
use crate::server::{Applied, ServerState};
use crate::worker::local_train;
use crate::{Error, Result};

/// FedAsync with staleness sampled uniformly from `0..=min(K, t - 1)`.
///
/// Epoch `t` trains the chosen device from the global model of epoch
/// `t - 1 - s` and applies the result while the server sits at epoch `t - 1`,
/// so the measured staleness is exactly `s`.
pub fn run_fedasync_sampled(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let order = match cfg.mode {
        StalenessMode::Sampled { order } => order,
        StalenessMode::Latency { .. } => {
            return Err(Error::InvalidConfig("sampled runner needs sampled staleness mode".into()))
        }
    };
    let env = Environment::build(cfg)?;
    let eval = env.evaluator();
    let obj = env.objective.as_ref();
    let k = cfg.server.max_staleness;
    let total = cfg.server.total_epochs;

    let mut state = ServerState::new(env.x0.clone(), k);
    let mut sim_rng = Rng::for_stream(cfg.seed, streams::SIMULATOR);
    let mut rngs = super::worker_rngs(cfg);
    let mut records = alloc::vec![eval.record(0, 0, state.model(), None, None)];
    let mut updates = Vec::new();
    let mut failure = None;

    for t in 1..=total {
        let s = sim_rng.uniform_inclusive(0, k.min(t - 1));
        let device = match order {
            DeviceOrder::Uniform => sim_rng.index(cfg.devices),
            DeviceOrder::RoundRobin => ((t - 1) % cfg.devices as u64) as usize,
        };
        let mut step = || -> Result<(Applied, u64)> {
            let tau = state.epoch() - s;
            let base = state.model_at(tau).ok_or(Error::HistoryUnderflow(tau))?;
            let upd = local_train(base, tau, device, &env.shards[device], obj, &cfg.worker, &mut rngs[device])?;
            Ok((state.apply_update(&upd, &cfg.server)?, upd.local_iters))
        };
        match step() {
            Ok((applied, local_iters)) => {
                updates.push(UpdateRecord {
                    epoch: applied.epoch,
                    worker: device,
                    tau: applied.epoch - 1 - applied.staleness,
                    staleness: applied.staleness,
                    alpha_t: applied.alpha_t,
                    local_iters,
                    sim_time: None,
                });
                if eval_due(t, cfg.eval_every, total) {
                    records.push(eval.record(t, state.gradients_applied(), state.model(), Some(&applied), None));
                }
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    Ok(RunOutput {
        records,
        updates,
        rejected: state.rejected(),
        final_model: state.model().clone(),
        failure,
    })
}
