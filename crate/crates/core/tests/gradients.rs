use fedasync_core::data::{gen_classification, gen_regression, MiniBatch, Rng};
use fedasync_core::numerics::{
    finite_diff_grad, LogisticObjective, MlpObjective, Objective, QuadraticObjective, DEFAULT_FD_EPS,
};
use fedasync_core::ParamVector;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

fn random_point(dim: usize, scale: f64, rng: &mut Rng) -> ParamVector {
    ParamVector::new((0..dim).map(|_| scale * rng.normal()).collect()).unwrap()
}

fn worst_error(obj: &dyn Objective, samples: &[fedasync_core::data::Sample], scale: f64) -> f64 {
    let batch = MiniBatch::from_samples(samples);
    let mut rng = Rng::new(99);
    (0..20)
        .map(|_| {
            let x = random_point(obj.dim(), scale, &mut rng);
            let g = obj.grad(&x, &batch);
            let fd = finite_diff_grad(obj, &x, &batch, DEFAULT_FD_EPS).unwrap();
            rel_err(g.as_slice(), fd.as_slice())
        })
        .fold(0.0, f64::max)
}

#[test]
fn quadratic_matches_finite_differences() {
    let ds = gen_regression(50, 8, 0.3, 1).unwrap();
    let err = worst_error(&QuadraticObjective::new(8), ds.samples(), 1.0);
    assert!(err < 1e-5, "relative error {err}");
}

#[test]
fn logistic_matches_finite_differences() {
    let ds = gen_classification(60, 6, 4, 2.0, 2).unwrap();
    let err = worst_error(&LogisticObjective::new(6, 0.01), ds.samples(), 1.0);
    assert!(err < 1e-5, "relative error {err}");
}

#[test]
fn mlp_matches_finite_differences() {
    let ds = gen_classification(40, 5, 3, 2.0, 3).unwrap();
    let obj = MlpObjective::new(5, 7, 3);
    let err = worst_error(&obj, ds.samples(), 0.5);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn quadratic_gradient_is_exact_for_hand_example() {
    // f = 0.5 * mean((a.x - y)^2); a = (1, 2), y = 1, x = (1, 1) -> residual 2, grad (2, 4).
    let samples = [fedasync_core::data::Sample::new(vec![1.0, 2.0], 1.0)];
    let obj = QuadraticObjective::new(2);
    let x = ParamVector::new(vec![1.0, 1.0]).unwrap();
    let g = obj.grad(&x, &MiniBatch::from_samples(&samples));
    assert_eq!(g.as_slice(), &[2.0, 4.0]);
    assert_eq!(obj.loss(&x, &MiniBatch::from_samples(&samples)), 2.0);
}
