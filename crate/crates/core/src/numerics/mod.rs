//! Flat parameter vectors, the convex-combination update, the proximal
//! surrogate gradient, and the objectives workers train on.

mod mlp;
mod objective;

use alloc::vec::Vec;
use core::ops::Index;

pub use mlp::MlpObjective;
pub use objective::{LogisticObjective, Objective, QuadraticObjective};

use crate::data::MiniBatch;
use crate::{Error, Result};

/// A model as a flat vector of finite `f64` values.
///
/// The dimension is fixed at construction; every binary operation checks
/// that both operands agree.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Wraps `values`, rejecting empty and non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "ParamVector dimension must be positive");
        Self(alloc::vec![0.0; dim])
    }

    /// Wraps values produced by arithmetic on already-valid vectors.
    /// Callers that can overflow (training loops) check [`Self::first_non_finite`].
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> core::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|v| !v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn check_dim(&self, other: &ParamVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl<'a> IntoIterator for &'a ParamVector {
    type Item = &'a f64;
    type IntoIter = core::slice::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Convex combination `(1 - alpha) * prev + alpha * new`.
///
/// Evaluated as `prev + alpha * (new - prev)` and clamped to the
/// per-coordinate envelope of the two inputs, so `mix(x, x, a) == x` and
/// `alpha == 1` returns `new` exactly.
pub fn mix(prev: &ParamVector, new: &ParamVector, alpha: f64) -> Result<ParamVector> {
    prev.check_dim(new)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if alpha == 1.0 {
        return Ok(new.clone());
    }
    let out = prev
        .iter()
        .zip(new)
        .map(|(&a, &b)| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            (a + alpha * (b - a)).clamp(lo, hi)
        })
        .collect();
    Ok(ParamVector::from_raw(out))
}

/// Gradient of the proximal surrogate `f(x; z) + rho/2 * |x - anchor|^2`.
pub fn reg_grad(
    obj: &dyn Objective,
    anchor: &ParamVector,
    rho: f64,
    x: &ParamVector,
    batch: &MiniBatch<'_>,
) -> Result<ParamVector> {
    check_objective_dim(obj, x)?;
    x.check_dim(anchor)?;
    let mut g = obj.grad(x, batch);
    if rho != 0.0 {
        for ((gj, &xj), &aj) in g.as_mut_slice().iter_mut().zip(x).zip(anchor) {
            *gj += rho * (xj - aj);
        }
    }
    Ok(g)
}

/// Central finite-difference gradient of `obj.loss`, one coordinate at a time.
///
/// This only touches `loss`, which keeps it independent of every analytic
/// gradient it is used to check.
pub fn finite_diff_grad(
    obj: &dyn Objective,
    x: &ParamVector,
    batch: &MiniBatch<'_>,
    eps: f64,
) -> Result<ParamVector> {
    check_objective_dim(obj, x)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.dim());
    for j in 0..x.dim() {
        let orig = probe.0[j];
        probe.0[j] = orig + eps;
        let up = obj.loss(&probe, batch);
        probe.0[j] = orig - eps;
        let down = obj.loss(&probe, batch);
        probe.0[j] = orig;
        out.push((up - down) / (2.0 * eps));
    }
    Ok(ParamVector::from_raw(out))
}

pub const DEFAULT_FD_EPS: f64 = 1e-6;

pub(crate) fn check_objective_dim(obj: &dyn Objective, x: &ParamVector) -> Result<()> {
    if obj.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            actual: x.dim(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use alloc::vec;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn mix_endpoints_and_midpoint() {
        let a = pv(&[1.0, 2.0]);
        let b = pv(&[3.0, 4.0]);
        assert_eq!(mix(&a, &b, 0.0).unwrap(), a);
        assert_eq!(mix(&a, &b, 1.0).unwrap(), b);
        assert_eq!(mix(&a, &b, 0.5).unwrap(), pv(&[2.0, 3.0]));
    }

    #[test]
    fn mix_rejects_bad_input() {
        let a = pv(&[1.0, 2.0]);
        assert!(matches!(mix(&a, &pv(&[1.0]), 0.5), Err(Error::DimensionMismatch { .. })));
        assert_eq!(mix(&a, &a, 1.5), Err(Error::AlphaOutOfRange(1.5)));
        assert!(mix(&a, &a, -0.1).is_err());
        assert!(mix(&a, &a, f64::NAN).is_err());
    }

    #[test]
    fn new_rejects_non_finite_and_empty() {
        assert_eq!(ParamVector::new(vec![1.0, f64::NAN]), Err(Error::NonFinite(1)));
        assert_eq!(ParamVector::new(vec![f64::INFINITY]), Err(Error::NonFinite(0)));
        assert_eq!(ParamVector::new(vec![]), Err(Error::EmptyVector));
    }

    #[test]
    fn reg_grad_hand_example() {
        // d=1, (a=1, b=1), x=2, anchor=0.5, rho=2: (2-1) + 2*(2-0.5) = 4
        let obj = QuadraticObjective::new(1);
        let samples = [Sample::new(vec![1.0], 1.0)];
        let batch = MiniBatch::from_samples(&samples);
        let g = reg_grad(&obj, &pv(&[0.5]), 2.0, &pv(&[2.0]), &batch).unwrap();
        assert_eq!(g, pv(&[4.0]));
    }

    #[test]
    fn reg_grad_vanishes_at_anchor_or_zero_rho() {
        let obj = QuadraticObjective::new(2);
        let samples = [Sample::new(vec![1.0, -2.0], 0.3), Sample::new(vec![0.5, 1.0], -1.0)];
        let batch = MiniBatch::from_samples(&samples);
        let x = pv(&[0.7, -0.2]);
        let plain = obj.grad(&x, &batch);
        assert_eq!(reg_grad(&obj, &pv(&[5.0, 5.0]), 0.0, &x, &batch).unwrap(), plain);
        assert_eq!(reg_grad(&obj, &x, 3.0, &x, &batch).unwrap(), plain);
        assert!(reg_grad(&obj, &pv(&[0.0]), 1.0, &x, &batch).is_err());
    }

    #[test]
    fn finite_diff_of_constant_objective_is_zero() {
        let obj = QuadraticObjective::new(3);
        let samples = [Sample::new(vec![1.0, 2.0, 3.0], 0.0)];
        let batch = MiniBatch::from_samples(&samples);
        let g = finite_diff_grad(&obj, &ParamVector::zeros(3), &batch, DEFAULT_FD_EPS).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(finite_diff_grad(&obj, &ParamVector::zeros(3), &batch, 0.0).is_err());
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..16).prop_flat_map(|d| {
            (
                proptest::collection::vec(-1e6f64..1e6, d),
                proptest::collection::vec(-1e6f64..1e6, d),
            )
        })
    }

    proptest! {
        #[test]
        fn mix_stays_in_envelope((a, b) in vec_pair(), alpha in 0.0f64..=1.0) {
            let (pa, pb) = (pv(&a), pv(&b));
            let m = mix(&pa, &pb, alpha).unwrap();
            for j in 0..a.len() {
                prop_assert!(m[j] >= a[j].min(b[j]) && m[j] <= a[j].max(b[j]));
            }
            prop_assert_eq!(mix(&pa, &pa, alpha).unwrap(), pa);
        }

        #[test]
        fn reg_grad_offset_is_exactly_the_proximal_term(
            (x, anchor) in vec_pair(),
            rho in 0.0f64..10.0,
        ) {
            let d = x.len();
            let obj = QuadraticObjective::new(d);
            let samples = [Sample::new(vec![0.25; d], 1.0)];
            let batch = MiniBatch::from_samples(&samples);
            let (px, pa) = (pv(&x), pv(&anchor));
            let plain = obj.grad(&px, &batch);
            let reg = reg_grad(&obj, &pa, rho, &px, &batch).unwrap();
            for j in 0..d {
                let offset = reg[j] - plain[j];
                let expected = rho * (x[j] - anchor[j]);
                prop_assert!((offset - expected).abs() <= 1e-15 * (1.0 + plain[j].abs() + expected.abs()));
            }
        }
    }
}
