//! Local training on a device: `H` SGD steps on the proximal surrogate
//! anchored at the pulled global model.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{BatchSize, Rng, Shard};
use crate::numerics::{check_objective_dim, reg_grad, Objective};
use crate::{Error, ParamVector, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerConfig {
    /// Learning rate.
    pub gamma: f64,
    /// Weight of the proximal term pulling local iterates toward the anchor.
    pub rho: f64,
    pub h_min: u64,
    pub h_max: u64,
    pub batch: BatchSize,
}

impl WorkerConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            out.push(format!("gamma must be >= 0 and finite, got {}", self.gamma));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            out.push(format!("rho must be >= 0 and finite, got {}", self.rho));
        }
        if self.h_min < 1 || self.h_min > self.h_max {
            out.push(format!(
                "local iterations need 1 <= h_min <= h_max, got h_min={} h_max={}",
                self.h_min, self.h_max
            ));
        }
        if self.batch == BatchSize::Sampled(0) {
            out.push("batch size must be >= 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().first() {
            None => Ok(()),
            Some(p) => Err(Error::InvalidConfig(p.clone())),
        }
    }

    /// `h_max / h_min`.
    pub fn imbalance_ratio(&self) -> f64 {
        self.h_max as f64 / self.h_min as f64
    }
}

/// What a worker pushes back after one task.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub params: ParamVector,
    /// Epoch of the global model the task started from.
    pub tau: u64,
    pub worker_id: usize,
    pub local_iters: u64,
    pub gradients_computed: u64,
}

/// Local iteration count, uniform on `h_min..=h_max`.
pub fn choose_local_iters(cfg: &WorkerConfig, rng: &mut Rng) -> u64 {
    rng.uniform_inclusive(cfg.h_min, cfg.h_max)
}

/// Runs one training task from the global model `x_t` at epoch `t`.
///
/// The anchor of the proximal term stays at `x_t` for the whole run. A
/// non-finite iterate aborts with [`Error::Diverged`] carrying the 1-based
/// step index.
pub fn local_train(
    x_t: &ParamVector,
    t: u64,
    worker_id: usize,
    shard: &Shard,
    obj: &dyn Objective,
    cfg: &WorkerConfig,
    rng: &mut Rng,
) -> Result<LocalUpdate> {
    check_objective_dim(obj, x_t)?;
    if shard.is_empty() {
        return Err(Error::EmptyShard);
    }
    let h = choose_local_iters(cfg, rng);
    let mut x = x_t.clone();
    for step in 1..=h {
        let batch = cfg.batch.draw(shard.samples(), rng)?;
        let g = reg_grad(obj, x_t, cfg.rho, &x, &batch)?;
        for (xj, gj) in x.as_mut_slice().iter_mut().zip(&g) {
            *xj -= cfg.gamma * gj;
        }
        if x.first_non_finite().is_some() {
            return Err(Error::Diverged { iteration: step });
        }
    }
    Ok(LocalUpdate {
        params: x,
        tau: t,
        worker_id,
        local_iters: h,
        gradients_computed: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_regression, partition_iid, MiniBatch, Sample};
    use crate::numerics::QuadraticObjective;
    use alloc::vec;

    fn cfg(gamma: f64, rho: f64, h_min: u64, h_max: u64, batch: BatchSize) -> WorkerConfig {
        WorkerConfig {
            gamma,
            rho,
            h_min,
            h_max,
            batch,
        }
    }

    fn shard() -> Shard {
        let ds = gen_regression(40, 2, 0.1, 4).unwrap();
        partition_iid(&ds, 1, 0).unwrap().remove(0)
    }

    #[test]
    fn fixed_range_gives_fixed_h() {
        let c = cfg(0.1, 0.0, 10, 10, BatchSize::Sampled(1));
        let mut rng = Rng::new(0);
        assert!((0..100).all(|_| choose_local_iters(&c, &mut rng) == 10));
    }

    #[test]
    fn chosen_h_stays_in_range_with_expected_mean() {
        let c = cfg(0.1, 0.0, 5, 20, BatchSize::Sampled(1));
        let mut rng = Rng::new(1);
        let draws = 100_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            let h = choose_local_iters(&c, &mut rng);
            assert!((5..=20).contains(&h));
            sum += h as f64;
        }
        // discrete uniform on 5..=20: variance (16^2 - 1) / 12
        let sigma = (255.0f64 / 12.0 / draws as f64).sqrt();
        assert!((sum / draws as f64 - 12.5).abs() <= 3.0 * sigma);
    }

    #[test]
    fn zero_learning_rate_keeps_model() {
        let s = shard();
        let obj = QuadraticObjective::new(2);
        let x = ParamVector::new(vec![0.3, -0.4]).unwrap();
        let c = cfg(0.0, 0.5, 2, 6, BatchSize::Sampled(3));
        let upd = local_train(&x, 7, 1, &s, &obj, &c, &mut Rng::new(2)).unwrap();
        assert_eq!(upd.params, x);
        assert_eq!(upd.tau, 7);
        assert!((2..=6).contains(&upd.local_iters));
        assert_eq!(upd.gradients_computed, upd.local_iters);
    }

    #[test]
    fn single_full_batch_step_is_plain_gradient_descent() {
        let s = shard();
        let obj = QuadraticObjective::new(2);
        let x = ParamVector::new(vec![0.3, -0.4]).unwrap();
        let c = cfg(0.1, 0.0, 1, 1, BatchSize::Full);
        let upd = local_train(&x, 0, 0, &s, &obj, &c, &mut Rng::new(2)).unwrap();
        let g = obj.grad(&x, &MiniBatch::from_samples(s.samples()));
        let expected: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - 0.1 * b).collect();
        assert_eq!(upd.params.as_slice(), expected.as_slice());
    }

    #[test]
    fn scripted_replay_matches() {
        // Replays the recursion with its own arithmetic and an identical RNG stream.
        let s = shard();
        let obj = QuadraticObjective::new(2);
        let x0 = [0.2, -0.1];
        let (gamma, rho) = (0.1, 0.01);
        let c = cfg(gamma, rho, 5, 5, BatchSize::Sampled(4));
        let upd = local_train(&ParamVector::new(x0.to_vec()).unwrap(), 3, 0, &s, &obj, &c, &mut Rng::new(9)).unwrap();

        let mut rng = Rng::new(9);
        assert_eq!(rng.uniform_inclusive(5, 5), 5);
        let mut x = x0;
        for _ in 0..5 {
            let picks: Vec<&Sample> = (0..4).map(|_| &s.samples()[rng.index(s.len())]).collect();
            let mut g = [0.0; 2];
            for p in &picks {
                let r = p.features[0] * x[0] + p.features[1] * x[1] - p.target;
                g[0] += r * p.features[0] / 4.0;
                g[1] += r * p.features[1] / 4.0;
            }
            for j in 0..2 {
                x[j] -= gamma * (g[j] + rho * (x[j] - x0[j]));
            }
        }
        for j in 0..2 {
            assert!((upd.params[j] - x[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn larger_rho_stays_closer_to_anchor() {
        let s = shard();
        let obj = QuadraticObjective::new(2);
        let x = ParamVector::new(vec![2.0, -2.0]).unwrap();
        let mut last = f64::INFINITY;
        for rho in [0.0, 0.1, 1.0, 10.0] {
            let c = cfg(0.05, rho, 8, 8, BatchSize::Sampled(5));
            let upd = local_train(&x, 0, 0, &s, &obj, &c, &mut Rng::new(5)).unwrap();
            let dist: f64 = upd.params.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!(dist <= last, "rho {rho}: {dist} > {last}");
            last = dist;
        }
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let samples = vec![Sample::new(vec![100.0], 1.0)];
        let s = Shard::new(0, samples).unwrap();
        let obj = QuadraticObjective::new(1);
        let c = cfg(10.0, 0.0, 500, 500, BatchSize::Full);
        let err = local_train(&ParamVector::new(vec![1.0]).unwrap(), 0, 0, &s, &obj, &c, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, Error::Diverged { iteration } if iteration > 1 && iteration < 500));
    }

    #[test]
    fn deterministic_given_seed() {
        let s = shard();
        let obj = QuadraticObjective::new(2);
        let x = ParamVector::zeros(2);
        let c = cfg(0.1, 0.01, 3, 9, BatchSize::Sampled(4));
        let a = local_train(&x, 1, 0, &s, &obj, &c, &mut Rng::new(4)).unwrap();
        let b = local_train(&x, 1, 0, &s, &obj, &c, &mut Rng::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.1, 0.0, 0, 1, BatchSize::Full).validate().is_err());
        assert!(cfg(0.1, 0.0, 3, 2, BatchSize::Full).validate().is_err());
        assert!(cfg(0.1, -1.0, 1, 2, BatchSize::Full).validate().is_err());
        assert!(cfg(0.1, 0.0, 1, 1, BatchSize::Sampled(0)).validate().is_err());
        assert!(cfg(0.1, 0.0, 2, 8, BatchSize::Full).validate().is_ok());
        assert_eq!(cfg(0.1, 0.0, 2, 8, BatchSize::Full).imbalance_ratio(), 4.0);
    }
}
