use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam moments and hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub lr: f64,
    pub l2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(n_params: usize) -> Self {
        Self {
            lr: 1e-3,
            l2: super::DEFAULT_L2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Bias-corrected Adam update. Nothing is modified when any gradient
    /// entry is non-finite.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDivergence);
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_on_scalar_quadratic() {
        // f(x) = (x - 0.3)^2 from x = 0
        let mut opt = OptimizerState::new(1);
        opt.lr = 1e-2;
        let mut x = [0.0];
        for _ in 0..500 {
            let g = [2.0 * (x[0] - 0.3)];
            opt.apply(&mut x, &g).unwrap();
        }
        assert!((x[0] - 0.3).abs() < 1e-3, "x = {}", x[0]);
        assert_eq!(opt.step, 500);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = OptimizerState::new(2);
        let mut p = [1.0, -1.0];
        opt.apply(&mut p, &[5.0, -0.01]).unwrap();
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 1e-3)).abs() < 1e-6);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut opt = OptimizerState::new(3);
        let mut p = [0.5, 1.0, 2.0];
        opt.apply(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [0.5, 1.0, 2.0]);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut opt = OptimizerState::new(2);
        let mut p = [0.0, 0.0];
        assert!(matches!(opt.apply(&mut p, &[1.0, f64::NAN]), Err(Error::TrainingDivergence)));
        assert_eq!(opt.step, 0);
        assert_eq!(p, [0.0, 0.0]);
    }
}
