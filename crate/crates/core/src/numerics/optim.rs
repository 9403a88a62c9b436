use alloc::vec::Vec;
use libm::sqrt;

use super::{ParameterSet, Tensor};
use crate::error::{Error, Result};

/// RMSProp hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self { learning_rate: 1e-3, decay: 0.9, epsilon: 1e-8 }
    }
}

/// Squared-gradient accumulators mirroring a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: RmsProp,
    accumulators: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(config: RmsProp, params: &ParameterSet) -> Self {
        Self { config, accumulators: params.tensors().map(|t| Tensor::zeros(t.shape())).collect() }
    }

    /// Rebuilds a state from stored accumulators (checkpoint loading).
    pub fn from_parts(config: RmsProp, accumulators: Vec<Tensor>) -> Result<Self> {
        if accumulators.iter().any(|a| a.data().iter().any(|&v| !(v >= 0.0))) {
            return Err(Error::Invalid("optimizer accumulators must be nonnegative".into()));
        }
        Ok(Self { config, accumulators })
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.accumulators
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// One RMSProp update:
    /// `acc ← ρ·acc + (1-ρ)·g²`, `param ← param - lr·g/√(acc+ε)`.
    ///
    /// Non-finite gradients reject the whole step and leave everything untouched.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet) -> Result<()> {
        if !params.same_layout(grads) || self.accumulators.len() != params.len() {
            return Err(Error::Invalid("gradient/optimizer layout does not match parameters".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        let RmsProp { learning_rate, decay, epsilon } = self.config;
        for ((acc, (_, p)), (_, g)) in self.accumulators.iter_mut().zip(params.iter_mut()).zip(grads.iter()) {
            for ((a, w), &gv) in acc.data_mut().iter_mut().zip(p.data_mut()).zip(g.data()) {
                *a = decay * *a + (1.0 - decay) * gv * gv;
                *w -= learning_rate * gv / sqrt(*a + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::scalar(v)).unwrap();
        p
    }

    #[test]
    fn first_step_matches_hand_value() {
        let mut params = single(0.0);
        let mut opt = OptimizerState::new(RmsProp { learning_rate: 0.01, decay: 0.9, epsilon: 1e-8 }, &params);
        opt.step(&mut params, &single(1.0)).unwrap();
        // 0.01 / sqrt(0.1)
        assert!((params.get("w").unwrap().data()[0] + 0.0316227766).abs() < 1e-7);
    }

    #[test]
    fn two_steps_follow_the_recurrence() {
        let mut params = single(1.0);
        let cfg = RmsProp { learning_rate: 0.01, decay: 0.9, epsilon: 1e-8 };
        let mut opt = OptimizerState::new(cfg, &params);
        opt.step(&mut params, &single(1.0)).unwrap();
        opt.step(&mut params, &single(1.0)).unwrap();
        // acc1 = 0.1, acc2 = 0.19
        let expected = 1.0 - 0.01 / (0.1f64 + 1e-8).sqrt() - 0.01 / (0.19f64 + 1e-8).sqrt();
        assert_eq!(params.get("w").unwrap().data()[0], expected);
        assert!((opt.accumulators()[0].data()[0] - 0.19).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut params = single(0.25);
        let mut opt = OptimizerState::new(RmsProp::default(), &params);
        for _ in 0..5 {
            opt.step(&mut params, &single(0.0)).unwrap();
        }
        assert_eq!(params.get("w").unwrap().data()[0], 0.25);
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut params = single(0.25);
        let mut opt = OptimizerState::new(RmsProp::default(), &params);
        assert!(opt.step(&mut params, &single(f64::NAN)).is_err());
        assert_eq!(params.get("w").unwrap().data()[0], 0.25);
        assert_eq!(opt.accumulators()[0].data()[0], 0.0);
    }
}
