use alloc::vec;

use super::ParamVector;
use crate::data::MiniBatch;

/// A differentiable per-sample loss, averaged over a minibatch.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    /// Mean loss over `batch`.
    fn loss(&self, x: &ParamVector, batch: &MiniBatch<'_>) -> f64;

    /// Mean gradient over `batch`; output dimension is `self.dim()`.
    fn grad(&self, x: &ParamVector, batch: &MiniBatch<'_>) -> ParamVector;

    /// Fraction of correctly classified samples, for classifiers.
    fn accuracy(&self, _x: &ParamVector, _batch: &MiniBatch<'_>) -> Option<f64> {
        None
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least squares: `f(x; (a, b)) = 0.5 * (<a, x> - b)^2`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    dim: usize,
}

impl QuadraticObjective {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, x: &ParamVector, batch: &MiniBatch<'_>) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|s| {
                let r = dot(&s.features, x.as_slice()) - s.target;
                0.5 * r * r
            })
            .sum();
        total / batch.len() as f64
    }

    fn grad(&self, x: &ParamVector, batch: &MiniBatch<'_>) -> ParamVector {
        let mut g = vec![0.0; self.dim];
        for s in batch.iter() {
            let r = dot(&s.features, x.as_slice()) - s.target;
            for (gj, aj) in g.iter_mut().zip(&s.features) {
                *gj += r * aj;
            }
        }
        let m = batch.len() as f64;
        g.iter_mut().for_each(|v| *v /= m);
        ParamVector::from_raw(g)
    }
}

/// Binary logistic loss `log(1 + exp(-y <a, x>)) + l2/2 * |x|^2`.
///
/// Class labels map to `y = +1` when odd and `y = -1` when even, so a
/// two-class dataset uses label 1 as the positive class and multi-class
/// datasets collapse to a parity split.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    dim: usize,
    l2: f64,
}

impl LogisticObjective {
    pub fn new(dim: usize, l2: f64) -> Self {
        Self { dim, l2 }
    }

    pub fn sign_of_label(label: f64) -> f64 {
        if (label as i64) % 2 == 1 {
            1.0
        } else {
            -1.0
        }
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, x: &ParamVector, batch: &MiniBatch<'_>) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|s| {
                let y = Self::sign_of_label(s.target);
                softplus(-y * dot(&s.features, x.as_slice()))
            })
            .sum();
        total / batch.len() as f64 + 0.5 * self.l2 * x.norm_sq()
    }

    fn grad(&self, x: &ParamVector, batch: &MiniBatch<'_>) -> ParamVector {
        let mut g = vec![0.0; self.dim];
        for s in batch.iter() {
            let y = Self::sign_of_label(s.target);
            // d/dm softplus(-m) = -sigmoid(-m)
            let coef = -y * sigmoid(-y * dot(&s.features, x.as_slice()));
            for (gj, aj) in g.iter_mut().zip(&s.features) {
                *gj += coef * aj;
            }
        }
        let m = batch.len() as f64;
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj = *gj / m + self.l2 * xj;
        }
        ParamVector::from_raw(g)
    }

    fn accuracy(&self, x: &ParamVector, batch: &MiniBatch<'_>) -> Option<f64> {
        let correct = batch
            .iter()
            .filter(|s| {
                let score = dot(&s.features, x.as_slice());
                (score > 0.0) == (Self::sign_of_label(s.target) > 0.0)
            })
            .count();
        Some(correct as f64 / batch.len() as f64)
    }
}
