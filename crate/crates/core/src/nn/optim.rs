//! RMSprop with a momentum buffer on the preconditioned gradient.
//!
//! ```text
//! square_avg ← smoothing·square_avg + (1 − smoothing)·g²
//! momentum   ← momentum_coef·momentum + g / √(square_avg + eps)
//! θ          ← θ − lr·momentum
//! ```

use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{GclError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmspropConfig {
    pub lr: f64,
    pub momentum: f64,
    pub smoothing: f64,
    pub eps: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            momentum: 0.6,
            smoothing: 0.99,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmspropState {
    pub config: RmspropConfig,
    pub square_avg: Vec<Vec<f64>>,
    pub momentum_buf: Vec<Vec<f64>>,
}

impl RmspropState {
    /// Zeroed accumulators for tensors of the given lengths.
    pub fn new(config: RmspropConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            square_avg: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            momentum_buf: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_network(config: RmspropConfig, net: &Network) -> Self {
        let shapes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
        Self::new(config, &shapes)
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite
    /// or any shape disagrees.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.square_avg.len() || grads.len() != params.len() {
            return Err(GclError::shape(
                "rmsprop tensor count",
                self.square_avg.len(),
                format!("{} params, {} grads", params.len(), grads.len()),
            ));
        }
        for (i, ((p, g), acc)) in params.iter().zip(grads).zip(&self.square_avg).enumerate() {
            if p.len() != g.len() || p.len() != acc.len() {
                return Err(GclError::shape(
                    format!("rmsprop tensor {i}"),
                    acc.len(),
                    format!("param {}, grad {}", p.len(), g.len()),
                ));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(GclError::NonFinite(format!("gradient tensor {i}")));
            }
        }

        let RmspropConfig {
            lr,
            momentum,
            smoothing,
            eps,
        } = self.config;
        for (((p, g), acc), buf) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.square_avg)
            .zip(&mut self.momentum_buf)
        {
            for (((theta, &g), s), m) in p.iter_mut().zip(g.iter()).zip(acc).zip(buf) {
                *s = smoothing * *s + (1.0 - smoothing) * g * g;
                *m = momentum * *m + g / (*s + eps).sqrt();
                *theta -= lr * *m;
            }
        }
        Ok(())
    }

    pub fn step_network(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        let g = grads.slices();
        let mut p = net.param_slices_mut();
        self.step(&mut p, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_state(lr: f64, momentum: f64) -> RmspropState {
        RmspropState::new(
            RmspropConfig {
                lr,
                momentum,
                ..RmspropConfig::default()
            },
            &[1],
        )
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut state = RmspropState::new(RmspropConfig::default(), &[3, 2]);
        let mut a = [1.0, 2.0, 3.0];
        let mut b = [-1.0, 0.5];
        state
            .step(&mut [&mut a[..], &mut b[..]], &[&[0.0; 3], &[0.0; 2]])
            .unwrap();
        assert_eq!(a, [1.0, 2.0, 3.0]);
        assert_eq!(b, [-1.0, 0.5]);
    }

    #[test]
    fn quadratic_loss_decreases_monotonically() {
        let mut state = scalar_state(0.01, 0.6);
        let mut theta = [0.0];
        let loss = |t: f64| (t - 5.0) * (t - 5.0);
        let mut prev = loss(theta[0]);
        for _ in 0..100 {
            let g = 2.0 * (theta[0] - 5.0);
            state.step(&mut [&mut theta[..]], &[&[g]]).unwrap();
            let cur = loss(theta[0]);
            assert!(cur < prev, "{cur} !< {prev}");
            prev = cur;
        }
    }

    #[test]
    fn momentum_grows_second_update() {
        // Step 1: s = 0.01, m = 1/√0.01 ≈ 10.   Step 2: s = 0.0199, m = 6 + 1/√0.0199 ≈ 13.09.
        let mut state = scalar_state(0.1, 0.6);
        let mut theta = [0.0];
        state.step(&mut [&mut theta[..]], &[&[1.0]]).unwrap();
        let first = theta[0].abs();
        let before = theta[0];
        state.step(&mut [&mut theta[..]], &[&[1.0]]).unwrap();
        let second = (theta[0] - before).abs();
        assert!(second > first);
        let expect_first = 0.1 / (0.01f64 + 1e-8).sqrt();
        assert!((first - expect_first).abs() < 1e-12);
        let expect_second = 0.1 * (0.6 / (0.01f64 + 1e-8).sqrt() + 1.0 / (0.0199f64 + 1e-8).sqrt());
        assert!((second - expect_second).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_mutation() {
        let mut state = scalar_state(0.1, 0.6);
        let mut theta = [1.0];
        assert!(matches!(
            state.step(&mut [&mut theta[..]], &[&[f64::NAN]]),
            Err(GclError::NonFinite(_))
        ));
        assert_eq!(theta, [1.0]);
        assert_eq!(state.square_avg, vec![vec![0.0]]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut state = RmspropState::new(RmspropConfig::default(), &[2]);
        let mut theta = [0.0; 3];
        assert!(state.step(&mut [&mut theta[..]], &[&[0.0; 3]]).is_err());
    }
}
