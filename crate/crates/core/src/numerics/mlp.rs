use alloc::vec;
use alloc::vec::Vec;

use super::{Objective, ParamVector};
use crate::data::MiniBatch;

/// One tanh hidden layer followed by a softmax cross-entropy output.
///
/// Parameters are flattened as `W1` (hidden x inputs, row-major), `b1`
/// (hidden), `W2` (classes x hidden, row-major), `b2` (classes). Targets are
/// class indices stored as `f64`.
#[derive(Debug, Clone)]
pub struct MlpObjective {
    inputs: usize,
    hidden: usize,
    classes: usize,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

impl MlpObjective {
    pub fn new(inputs: usize, hidden: usize, classes: usize) -> Self {
        assert!(inputs > 0 && hidden > 0 && classes >= 2);
        Self {
            inputs,
            hidden,
            classes,
        }
    }

    pub fn param_count(inputs: usize, hidden: usize, classes: usize) -> usize {
        inputs * hidden + hidden + hidden * classes + classes
    }

    fn layout(&self) -> Layout {
        let w1 = 0;
        let b1 = w1 + self.inputs * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden * self.classes;
        Layout { w1, b1, w2, b2 }
    }

    /// Hidden activations and output logits for one input.
    fn forward(&self, p: &[f64], input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.layout();
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &p[l.w1 + j * self.inputs..l.w1 + (j + 1) * self.inputs];
                let z: f64 = row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + p[l.b1 + j];
                libm::tanh(z)
            })
            .collect();
        let logits = (0..self.classes)
            .map(|k| {
                let row = &p[l.w2 + k * self.hidden..l.w2 + (k + 1) * self.hidden];
                row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + p[l.b2 + k]
            })
            .collect();
        (hidden, logits)
    }

    /// Softmax class probabilities for one input.
    pub fn class_probabilities(&self, x: &ParamVector, input: &[f64]) -> Vec<f64> {
        let (_, logits) = self.forward(x.as_slice(), input);
        softmax(&logits)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(logits.iter().map(|z| libm::exp(z - max)).sum::<f64>())
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl Objective for MlpObjective {
    fn dim(&self) -> usize {
        Self::param_count(self.inputs, self.hidden, self.classes)
    }

    fn loss(&self, x: &ParamVector, batch: &MiniBatch<'_>) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|s| {
                let (_, logits) = self.forward(x.as_slice(), &s.features);
                log_sum_exp(&logits) - logits[s.label()]
            })
            .sum();
        total / batch.len() as f64
    }

    fn grad(&self, x: &ParamVector, batch: &MiniBatch<'_>) -> ParamVector {
        let p = x.as_slice();
        let l = self.layout();
        let mut g = vec![0.0; self.dim()];
        let mut d_hidden = vec![0.0; self.hidden];
        for s in batch.iter() {
            let (hidden, logits) = self.forward(p, &s.features);
            let mut d_logits = softmax(&logits);
            d_logits[s.label()] -= 1.0;

            d_hidden.iter_mut().for_each(|v| *v = 0.0);
            for (k, dz) in d_logits.iter().enumerate() {
                let row = l.w2 + k * self.hidden;
                for j in 0..self.hidden {
                    g[row + j] += dz * hidden[j];
                    d_hidden[j] += dz * p[row + j];
                }
                g[l.b2 + k] += dz;
            }
            for j in 0..self.hidden {
                let dz = d_hidden[j] * (1.0 - hidden[j] * hidden[j]);
                let row = l.w1 + j * self.inputs;
                for (i, a) in s.features.iter().enumerate() {
                    g[row + i] += dz * a;
                }
                g[l.b1 + j] += dz;
            }
        }
        let m = batch.len() as f64;
        g.iter_mut().for_each(|v| *v /= m);
        ParamVector::from_raw(g)
    }

    fn accuracy(&self, x: &ParamVector, batch: &MiniBatch<'_>) -> Option<f64> {
        let correct = batch
            .iter()
            .filter(|s| {
                let (_, logits) = self.forward(x.as_slice(), &s.features);
                argmax(&logits) == s.label()
            })
            .count();
        Some(correct as f64 / batch.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;

    #[test]
    fn flattened_dimension() {
        let obj = MlpObjective::new(3, 4, 5);
        assert_eq!(obj.dim(), 3 * 4 + 4 + 4 * 5 + 5);
    }

    #[test]
    fn zero_params_give_uniform_prediction() {
        let obj = MlpObjective::new(2, 3, 4);
        let x = ParamVector::zeros(obj.dim());
        let probs = obj.class_probabilities(&x, &[0.5, -1.0]);
        assert!(probs.iter().all(|p| (p - 0.25).abs() < 1e-15));
        let samples = [Sample::new(vec![0.5, -1.0], 2.0)];
        let loss = obj.loss(&x, &MiniBatch::from_samples(&samples));
        assert!((loss - libm::log(4.0)).abs() < 1e-15);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && p[2] >= 0.0);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn output_bias_gradient_is_probability_minus_target() {
        let obj = MlpObjective::new(1, 1, 3);
        let x = ParamVector::zeros(obj.dim());
        let samples = [Sample::new(vec![1.0], 0.0)];
        let g = obj.grad(&x, &MiniBatch::from_samples(&samples));
        let b2 = &g.as_slice()[obj.dim() - 3..];
        let third = 1.0 / 3.0;
        assert!((b2[0] - (third - 1.0)).abs() < 1e-15);
        assert!((b2[1] - third).abs() < 1e-15 && (b2[2] - third).abs() < 1e-15);
    }
}
