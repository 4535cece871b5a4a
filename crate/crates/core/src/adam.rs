//! Bias-corrected Adam.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::ParamStore;
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
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_beta = |b: f64| b > 0.0 && b < 1.0;
        if !(ok_beta(self.beta1) && ok_beta(self.beta2)) || self.epsilon <= 0.0 || self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument(alloc::format!("bad Adam hyperparameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value.rows(), p.value.cols())).collect();
        Ok(Self { config, step: 0, first_moment: zeros(), second_moment: zeros() })
    }

    /// Applies one update using each parameter's accumulated `grad`, then
    /// clears the gradients. Parameters without a gradient are left alone.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        for (i, p) in store.params_mut().iter_mut().enumerate() {
            let Some(g) = p.grad.take() else { continue };
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (((x, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    fn single(x: f64) -> (ParamStore, crate::params::ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(x));
        (store, id)
    }

    fn grad_step(store: &mut ParamStore, adam: &mut AdamState, f: impl Fn(&mut Tape, crate::autodiff::Var) -> crate::autodiff::Var) {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let loss = f(&mut tape, b.vars()[0]);
        let g = tape.backward(loss).unwrap();
        store.accumulate_grads(&b, &g);
        adam.step(store);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut store, id) = single(1.5);
        let mut adam = AdamState::new(AdamConfig::default(), &store).unwrap();
        store.params_mut()[0].grad = Some(Tensor::scalar(0.0));
        adam.step(&mut store);
        assert_eq!(store.value(id).item(), 1.5);
        assert!(store.grad(id).is_none());
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // f(x) = x: m_hat = v_hat = 1, so the step is lr / (1 + eps).
        let (mut store, id) = single(0.0);
        let cfg = AdamConfig { learning_rate: 0.1, ..AdamConfig::default() };
        let mut adam = AdamState::new(cfg, &store).unwrap();
        grad_step(&mut store, &mut adam, |t, x| t.sum(x).unwrap());
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((store.value(id).item() - expected).abs() < 1e-15);
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let (mut store, id) = single(0.0);
        let cfg = AdamConfig { learning_rate: 0.05, ..AdamConfig::default() };
        let mut adam = AdamState::new(cfg, &store).unwrap();
        for _ in 0..2000 {
            grad_step(&mut store, &mut adam, |t, x| {
                let d = t.add_scalar(x, -3.0).unwrap();
                let sq = t.mul(d, d).unwrap();
                t.sum(sq).unwrap()
            });
        }
        assert!((store.value(id).item() - 3.0).abs() < 1e-2);
    }

    #[test]
    fn rejects_invalid_betas() {
        let store = ParamStore::new();
        let cfg = AdamConfig { beta1: 1.0, ..AdamConfig::default() };
        assert!(AdamState::new(cfg, &store).is_err());
    }
}
