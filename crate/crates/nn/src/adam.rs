use crate::mat::Scalar;
use crate::NnError;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub const DEFAULT_LR: f64 = 2e-4;

    pub fn new(num_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![T::zero(); num_params], v: vec![T::zero(); num_params] }
    }

    /// One update of `params` along `-grads`. A non-finite gradient leaves
    /// parameters and moments untouched.
    pub fn update(&mut self, params: &mut [T], grads: &[T]) -> Result<(), NnError> {
        if params.len() != self.m.len() {
            return Err(NnError::Dimension { expected: self.m.len(), got: params.len() });
        }
        if grads.len() != self.m.len() {
            return Err(NnError::Dimension { expected: self.m.len(), got: grads.len() });
        }
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(NnError::NonFiniteGradient);
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(self.beta1);
        let b2 = T::lit(self.beta2);
        let one = T::one();
        // Bias corrections folded into the step size and epsilon.
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let step_size = T::lit(self.lr / c1);
        let inv_sqrt_c2 = T::lit(1.0 / c2.sqrt());
        let eps = T::lit(self.eps);
        for i in 0..params.len() {
            let g = grads[i];
            let m = b1 * self.m[i] + (one - b1) * g;
            let v = b2 * self.v[i] + (one - b2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            params[i] = params[i] - step_size * m / (v.sqrt() * inv_sqrt_c2 + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam = Adam::<f64>::new(3, 1e-2);
        let mut p = vec![1.0, -2.0, 3.0];
        for _ in 0..10 {
            adam.update(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        let mut adam = Adam::<f64>::new(3, 1e-3);
        let mut p = vec![0.0; 3];
        adam.update(&mut p, &[5.0, -0.01, 300.0]).unwrap();
        assert_relative_eq!(p[0], -1e-3, max_relative = 1e-6);
        assert_relative_eq!(p[1], 1e-3, max_relative = 1e-5);
        assert_relative_eq!(p[2], -1e-3, max_relative = 1e-6);
    }

    #[test]
    fn minimizes_a_parabola() {
        let mut adam = Adam::<f64>::new(1, 1e-2);
        let mut x = vec![1.0];
        let mut reached = None;
        for k in 1..=2000 {
            let g = [2.0 * x[0]];
            adam.update(&mut x, &g).unwrap();
            if x[0].abs() < 1e-3 && reached.is_none() {
                reached = Some(k);
            }
        }
        assert!(reached.is_some(), "final x {}", x[0]);
    }

    #[test]
    fn non_finite_gradient_skips_update() {
        let mut adam = Adam::<f32>::new(2, 1e-2);
        let mut p = vec![1.0f32, 2.0];
        assert_eq!(adam.update(&mut p, &[f32::NAN, 0.0]), Err(NnError::NonFiniteGradient));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(adam.step, 0);
        assert!(matches!(adam.update(&mut p, &[0.0]), Err(NnError::Dimension { .. })));
    }
}
