//! Adam in standard form: first/second moment accumulators with bias
//! correction.

use crate::net::NetworkParams;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    /// Segmentation-loop rate. The 2000-step schedule converges the desk
    /// phantom long before it ends; at the 1e-3 default the remaining steps
    /// random-walk the converged net until it can fall into a degenerate
    /// all-background state, so the segmentation loop runs at 3e-4.
    pub fn segmentation() -> Self {
        AdamConfig { learning_rate: 3e-4, ..AdamConfig::default() }
    }
}

/// Optimizer state, one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &NetworkParams<T>, config: AdamConfig) -> Self {
        let m = params.entries().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect::<Vec<_>>();
        AdamState { config, step: 0, m: m.clone(), v: m }
    }

    /// One update: `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`,
    /// bias-corrected, then `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut NetworkParams<T>, grads: &[Tensor<T>]) {
        assert_eq!(grads.len(), self.m.len(), "gradient count");
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64_lossy(self.config.beta1);
        let b2 = T::from_f64_lossy(self.config.beta2);
        let lr = T::from_f64_lossy(self.config.learning_rate);
        let eps = T::from_f64_lossy(self.config.epsilon);
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        for ((param, grad), (m, v)) in params
            .tensors_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(param.shape(), grad.shape(), "gradient shape");
            for ((p, &g), (mi, vi)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Free-function form of one Adam update over a parameter bundle.
pub fn adam_step<T: Scalar>(params: &mut NetworkParams<T>, grads: &[Tensor<T>], state: &mut AdamState<T>) {
    state.step(params, grads);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetworkParams;

    fn single_param(value: f64) -> NetworkParams<f64> {
        NetworkParams::from_entries(vec![("theta.w".into(), Tensor::scalar(value))])
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut params = single_param(1.5);
        let mut state = AdamState::new(&params, AdamConfig::default());
        for _ in 0..50 {
            adam_step(&mut params, &[Tensor::scalar(0.0)], &mut state);
        }
        assert_eq!(params.entries()[0].1.item(), 1.5);
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        // With constant gradient g the first bias-corrected update is
        // lr * g/|g| up to the epsilon term.
        for &g in &[3.0, -0.25, 1e-4] {
            let mut params = single_param(0.0);
            let mut state = AdamState::new(&params, AdamConfig::default());
            adam_step(&mut params, &[Tensor::scalar(g)], &mut state);
            let update = params.entries()[0].1.item();
            let expect = -1e-3 * (g as f64).signum();
            assert!((update - expect).abs() < 1e-6, "g = {g}, update = {update}");
        }
    }

    #[test]
    fn first_step_invariant_to_positive_gradient_scaling() {
        let mut a = single_param(0.0);
        let mut sa = AdamState::new(&a, AdamConfig::default());
        adam_step(&mut a, &[Tensor::scalar(0.5)], &mut sa);
        let mut b = single_param(0.0);
        let mut sb = AdamState::new(&b, AdamConfig::default());
        adam_step(&mut b, &[Tensor::scalar(500.0)], &mut sb);
        let (ua, ub) = (a.entries()[0].1.item(), b.entries()[0].1.item());
        assert!((ua - ub).abs() < 1e-9, "{ua} vs {ub}");
    }

    #[test]
    fn minimizes_quadratic() {
        // f(theta) = theta^2, gradient 2*theta, from theta = 1 at lr 1e-2.
        let mut params = single_param(1.0);
        let mut state = AdamState::new(
            &params,
            AdamConfig { learning_rate: 1e-2, ..AdamConfig::default() },
        );
        for _ in 0..500 {
            let g = 2.0 * params.entries()[0].1.item();
            adam_step(&mut params, &[Tensor::scalar(g)], &mut state);
        }
        assert!(params.entries()[0].1.item().abs() < 1e-2);
    }

    #[test]
    fn step_counter_increments() {
        let mut params = single_param(0.0);
        let mut state = AdamState::new(&params, AdamConfig::default());
        assert_eq!(state.step, 0);
        adam_step(&mut params, &[Tensor::scalar(1.0)], &mut state);
        adam_step(&mut params, &[Tensor::scalar(1.0)], &mut state);
        assert_eq!(state.step, 2);
    }
}
