//! Adam with bias correction.

use super::Tensor;
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: one pair of moment accumulators per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    /// Moment buffers mirror the given parameter shapes.
    pub fn new(cfg: AdamConfig, params: &[&Tensor]) -> Self {
        Adam {
            cfg,
            m: params
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect(),
            v: params
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// Restores optimizer state from checkpointed moments.
    pub fn restore(cfg: AdamConfig, m: Vec<Tensor>, v: Vec<Tensor>, t: u64) -> Self {
        Adam { cfg, m, v, t }
    }

    /// One update over all parameters. `grads` must match `params` pairwise.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract {
                op: "adam_step",
                msg: format!(
                    "expected {} tensors, got {} params / {} grads",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::dimension("adam_step", p.shape(), g.shape()));
            }
        }
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let gd = g.data();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * gd[i];
                vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * gd[i] * gd[i];
                let mhat = md[i] / bc1;
                let vhat = vd[i] / bc2;
                pd[i] -= c.alpha * mhat / (vhat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_hand_evaluation() {
        // theta = 0, g = 1: mhat = vhat = 1, so delta = -alpha / (1 + eps).
        let mut theta = Tensor::scalar(0.0);
        let grad = Tensor::scalar(1.0);
        let mut opt = Adam::new(AdamConfig::default(), &[&theta]);
        opt.step(&mut [&mut theta], &[&grad]).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((theta.data()[0] - expected).abs() < 1e-15);
        assert!((theta.data()[0] + 1e-3).abs() < 1e-9);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut theta = Tensor::vector(vec![0.5, -2.0, 7.0]);
        let before = theta.clone();
        let grad = Tensor::zeros(vec![3]);
        let mut opt = Adam::new(AdamConfig::default(), &[&theta]);
        for _ in 0..10 {
            opt.step(&mut [&mut theta], &[&grad]).unwrap();
        }
        assert_eq!(theta, before);
    }

    #[test]
    fn identical_states_give_identical_results() {
        let run = || {
            let mut theta = Tensor::vector(vec![1.0, -1.0]);
            let grad = Tensor::vector(vec![0.3, 0.7]);
            let mut opt = Adam::new(AdamConfig::default(), &[&theta]);
            for _ in 0..5 {
                opt.step(&mut [&mut theta], &[&grad]).unwrap();
            }
            theta.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut theta = Tensor::vector(vec![1.0, 2.0]);
        let grad = Tensor::vector(vec![1.0]);
        let mut opt = Adam::new(AdamConfig::default(), &[&theta]);
        assert!(opt.step(&mut [&mut theta], &[&grad]).is_err());
    }

    #[test]
    fn step_counter_increments_by_one() {
        let mut theta = Tensor::scalar(0.0);
        let grad = Tensor::scalar(0.1);
        let mut opt = Adam::new(AdamConfig::default(), &[&theta]);
        for expect in 1..=4 {
            opt.step(&mut [&mut theta], &[&grad]).unwrap();
            assert_eq!(opt.step_count(), expect);
        }
    }
}
