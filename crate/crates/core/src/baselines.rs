//! Synchronous FedAvg and single-thread SGD, reporting the same metrics as
//! FedAsync so every run shares the gradients-applied axis.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{streams, Rng};
use crate::experiment::{Environment, ExperimentConfig};
use crate::metrics::{eval_due, RunOutput, UpdateRecord};
use crate::simulator::worker_rngs;
use crate::worker::{local_train, WorkerConfig};
use crate::{Error, ParamVector, Result};

/// Coordinate-wise mean of `models`, accumulated in order as a running mean
/// and clamped to the per-coordinate envelope, so `k` identical models
/// average to that model exactly.
pub fn average_models(models: &[ParamVector]) -> Result<ParamVector> {
    let first = models.first().ok_or(Error::EmptyVector)?;
    let mut mean = first.as_slice().to_vec();
    let mut lo = mean.clone();
    let mut hi = mean.clone();
    for (i, m) in models.iter().enumerate().skip(1) {
        first.check_dim(m)?;
        let count = (i + 1) as f64;
        for (j, &v) in m.iter().enumerate() {
            mean[j] += (v - mean[j]) / count;
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    for j in 0..mean.len() {
        mean[j] = mean[j].clamp(lo[j], hi[j]);
    }
    Ok(ParamVector::from_raw(mean))
}

/// FedAvg: each round `k` distinct devices run `fedavg.local_iters` plain
/// SGD steps from the same global model, and the new global model is their
/// unweighted mean, folded in device-id order.
pub fn run_fedavg(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let problems = cfg.fedavg.problems(cfg.devices);
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems.join("; ")));
    }
    let env = Environment::build(cfg)?;
    let eval = env.evaluator();
    let obj = env.objective.as_ref();
    let k = cfg.fedavg.k;
    let local = WorkerConfig {
        rho: 0.0,
        h_min: cfg.fedavg.local_iters,
        h_max: cfg.fedavg.local_iters,
        ..cfg.worker.clone()
    };
    let total = cfg.server.total_epochs;

    let mut x = env.x0.clone();
    let mut gradients = 0;
    let mut sim_rng = Rng::for_stream(cfg.seed, streams::SIMULATOR);
    let mut rngs = worker_rngs(cfg);
    let mut records = vec![eval.record(0, 0, &x, None, None)];
    let mut updates = Vec::new();
    let mut failure = None;

    'rounds: for round in 1..=total {
        let mut chosen = sim_rng.sample_distinct(cfg.devices, k);
        chosen.sort_unstable();
        let mut models = Vec::with_capacity(k);
        for &device in &chosen {
            match local_train(&x, round - 1, device, &env.shards[device], obj, &local, &mut rngs[device]) {
                Ok(upd) => {
                    gradients += upd.gradients_computed;
                    updates.push(UpdateRecord {
                        epoch: round,
                        worker: device,
                        tau: round - 1,
                        staleness: 0,
                        alpha_t: 1.0 / k as f64,
                        local_iters: upd.local_iters,
                        sim_time: None,
                    });
                    models.push(upd.params);
                }
                Err(e) => {
                    failure = Some(e);
                    break 'rounds;
                }
            }
        }
        x = average_models(&models)?;
        if eval_due(round, cfg.eval_every, total) {
            records.push(eval.record(round, gradients, &x, None, None));
        }
    }

    Ok(RunOutput {
        records,
        updates,
        rejected: 0,
        final_model: x,
        failure,
    })
}

/// Plain SGD over the union of all shards, one gradient per step.
pub fn run_serial_sgd(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let env = Environment::build(cfg)?;
    let eval = env.evaluator();
    let obj = env.objective.as_ref();
    let total = cfg.server.total_epochs;
    let gamma = cfg.worker.gamma;

    let mut x = env.x0.clone();
    let mut rng = Rng::for_stream(cfg.seed, streams::SIMULATOR);
    let mut records = vec![eval.record(0, 0, &x, None, None)];
    let mut failure = None;

    for step in 1..=total {
        let batch = cfg.worker.batch.draw(env.train.samples(), &mut rng)?;
        let g = obj.grad(&x, &batch);
        for (xj, gj) in x.as_mut_slice().iter_mut().zip(&g) {
            *xj -= gamma * gj;
        }
        if x.first_non_finite().is_some() {
            failure = Some(Error::Diverged { iteration: step });
            break;
        }
        if eval_due(step, cfg.eval_every, total) {
            records.push(eval.record(step, step, &x, None, None));
        }
    }

    Ok(RunOutput {
        records,
        updates: Vec::new(),
        rejected: 0,
        final_model: x,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_models_average_exactly() {
        let m = ParamVector::new(vec![0.1, -0.7, 3.3]).unwrap();
        assert_eq!(average_models(&vec![m.clone(); 10]).unwrap(), m);
    }

    #[test]
    fn average_of_two() {
        let a = ParamVector::new(vec![1.0, 2.0]).unwrap();
        let b = ParamVector::new(vec![3.0, 6.0]).unwrap();
        assert_eq!(average_models(&[a, b]).unwrap().as_slice(), &[2.0, 4.0]);
        assert!(average_models(&[]).is_err());
    }

    proptest! {
        #[test]
        fn average_within_envelope(models in (1usize..8).prop_flat_map(|d| {
            proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, d), 1..12)
        })) {
            let pvs: Vec<ParamVector> = models.iter().map(|m| ParamVector::new(m.clone()).unwrap()).collect();
            let avg = average_models(&pvs).unwrap();
            for j in 0..avg.dim() {
                let lo = models.iter().map(|m| m[j]).fold(f64::INFINITY, f64::min);
                let hi = models.iter().map(|m| m[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(avg[j] >= lo && avg[j] <= hi);
                let exact = models.iter().map(|m| m[j]).sum::<f64>() / models.len() as f64;
                prop_assert!((avg[j] - exact).abs() <= 1e-9 * (1.0 + exact.abs()));
            }
        }
    }
}
