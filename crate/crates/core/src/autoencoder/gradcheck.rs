use crate::error::{Error, Result};

/// A scalar loss over a flat parameter vector with an analytic gradient.
pub trait Differentiable: Clone {
    fn param_count(&self) -> usize;
    fn param(&self, index: usize) -> f64;
    fn set_param(&mut self, index: usize, value: f64);
    fn input_len(&self) -> usize;
    fn loss(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Piecewise-linear models report which linear piece `x` falls in.
    /// Finite differences straddling two pieces are not comparable.
    fn kink_signature(&self, _x: &[f64]) -> Vec<bool> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters whose perturbation crossed a ReLU kink.
    pub skipped: usize,
}

/// Gradients below this magnitude are compared on an absolute scale.
const RELATIVE_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient with central differences
/// `(f(w+eps) - f(w-eps)) / (2 eps)` on every parameter.
pub fn grad_check<M: Differentiable>(model: &M, x: &[f64], eps: f64) -> Result<GradCheckReport> {
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::InvalidEpsilon(eps));
    }
    if x.len() != model.input_len() {
        return Err(Error::ShapeMismatch {
            expected: model.input_len(),
            actual: x.len(),
        });
    }
    let analytic = model.gradient(x);
    let signature = model.kink_signature(x);
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let w = model.param(i);
        probe.set_param(i, w + eps);
        let plus = probe.loss(x);
        let crossed_plus = probe.kink_signature(x) != signature;
        probe.set_param(i, w - eps);
        let minus = probe.loss(x);
        let crossed_minus = probe.kink_signature(x) != signature;
        probe.set_param(i, w);
        if crossed_plus || crossed_minus {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{AEModel, Architecture};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `loss = (w * x0 - x1)^2`, one parameter.
    #[derive(Clone)]
    struct Scalar {
        w: f64,
    }

    impl Differentiable for Scalar {
        fn param_count(&self) -> usize {
            1
        }
        fn param(&self, _: usize) -> f64 {
            self.w
        }
        fn set_param(&mut self, _: usize, value: f64) {
            self.w = value;
        }
        fn input_len(&self) -> usize {
            2
        }
        fn loss(&self, x: &[f64]) -> f64 {
            (self.w * x[0] - x[1]).powi(2)
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![2.0 * (self.w * x[0] - x[1]) * x[0]]
        }
    }

    #[test]
    fn one_weight_linear_model_is_exact() {
        let m = Scalar { w: 0.7 };
        let report = grad_check(&m, &[1.3, 0.2], 1e-5).unwrap();
        assert_eq!(report.checked, 1);
        assert!(report.max_relative_error <= 1e-7, "{report:?}");
    }

    #[test]
    fn rejects_bad_eps() {
        let m = Scalar { w: 0.7 };
        assert!(matches!(
            grad_check(&m, &[1.0, 1.0], 0.0),
            Err(Error::InvalidEpsilon(_))
        ));
        assert!(matches!(
            grad_check(&m, &[1.0, 1.0], 0.1),
            Err(Error::InvalidEpsilon(_))
        ));
        assert!(matches!(grad_check(&m, &[1.0], 1e-5), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn autoencoder_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = AEModel::init(Architecture::for_head_len(6), 21).unwrap();
        let x: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
        let report = grad_check(&model, &x, 1e-5).unwrap();
        assert!(report.max_relative_error <= 1e-4, "{report:?}");
        assert!(report.checked > report.skipped);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        #[derive(Clone)]
        struct Broken(Scalar);
        impl Differentiable for Broken {
            fn param_count(&self) -> usize {
                1
            }
            fn param(&self, i: usize) -> f64 {
                self.0.param(i)
            }
            fn set_param(&mut self, i: usize, v: f64) {
                self.0.set_param(i, v)
            }
            fn input_len(&self) -> usize {
                2
            }
            fn loss(&self, x: &[f64]) -> f64 {
                self.0.loss(x)
            }
            fn gradient(&self, x: &[f64]) -> Vec<f64> {
                vec![self.0.gradient(x)[0] * 1.01]
            }
        }
        let report = grad_check(&Broken(Scalar { w: 0.7 }), &[1.3, 0.2], 1e-5).unwrap();
        assert!(report.max_relative_error > 5e-3);
    }
}
