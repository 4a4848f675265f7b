use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::param::Parameter;
use crate::scalar::Float;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.0,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept in parameter order.
pub struct Adam<T: Float> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Float> Adam<T> {
    pub fn new(params: &[Rc<Parameter<T>>], config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: params.iter().map(|p| Tensor::zeros(&p.shape())).collect(),
            second: params.iter().map(|p| Tensor::zeros(&p.shape())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Apply one update from the accumulated gradients. Parameters without a
    /// gradient are left untouched.
    pub fn step(&mut self, params: &[Rc<Parameter<T>>]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(TensorError::Usage(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::from_f64c(c.beta1), T::from_f64c(c.beta2));
        let bc1 = T::from_f64c(1.0 - c.beta1.powi(t));
        let bc2 = T::from_f64c(1.0 - c.beta2.powi(t));
        let lr = T::from_f64c(c.lr);
        let eps = T::from_f64c(c.eps);
        for ((p, m), v) in params.iter().zip(&mut self.first).zip(&mut self.second) {
            let Some(g) = p.var().grad() else { continue };
            if g.shape() != m.shape() {
                return Err(TensorError::shape("adam", m.shape(), g.shape()));
            }
            p.var().update_value(|w| {
                for (((w, m), v), &g) in w
                    .data_mut()
                    .iter_mut()
                    .zip(m.data_mut())
                    .zip(v.data_mut())
                    .zip(g.data())
                {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *w -= lr * mhat / (vhat.sqrt() + eps);
                }
            });
        }
        Ok(())
    }

    /// `(first, second)` moments for checkpointing.
    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.first, &self.second)
    }

    pub fn restore(&mut self, step: u64, first: Vec<Tensor<T>>, second: Vec<Tensor<T>>) -> Result<()> {
        if first.len() != self.first.len() || second.len() != self.second.len() {
            return Err(TensorError::Checkpoint("optimizer moment count mismatch".into()));
        }
        for (new, old) in first.iter().zip(&self.first).chain(second.iter().zip(&self.second)) {
            if new.shape() != old.shape() {
                return Err(TensorError::shape("adam restore", old.shape(), new.shape()));
            }
        }
        self.step = step;
        self.first = first;
        self.second = second;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::ParamStore;

    fn setup(init: f64) -> (ParamStore<f64>, Vec<Rc<Parameter<f64>>>) {
        let store = ParamStore::new();
        store.root().param("w", Tensor::full(&[3], init)).unwrap();
        let params = store.params();
        (store, params)
    }

    fn set_grad(p: &Parameter<f64>, g: f64) {
        p.var().zero_grad();
        let y = p.var().scale(g).sum();
        y.backward().unwrap();
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (_s, params) = setup(1.5);
        let mut opt = Adam::new(&params, AdamConfig::default());
        for _ in 0..5 {
            set_grad(&params[0], 0.0);
            opt.step(&params).unwrap();
        }
        assert!(params[0].var().value().data().iter().all(|&w| w == 1.5));
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let (_s, params) = setup(1.5);
        let mut opt = Adam::new(&params, AdamConfig { lr: 0.0, ..AdamConfig::default() });
        set_grad(&params[0], 3.0);
        opt.step(&params).unwrap();
        assert!(params[0].var().value().data().iter().all(|&w| w == 1.5));
    }

    #[test]
    fn constant_gradient_moves_by_lr_against_sign() {
        // beta1 = 0: the first moment is the raw gradient, and with bias
        // correction the second moment of a constant gradient is g^2 exactly,
        // so every step is lr * g / (|g| + eps).
        let (_s, params) = setup(0.0);
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let mut opt = Adam::new(&params, cfg);
        let g = -0.3;
        let mut expected = 0.0;
        for _ in 0..10 {
            set_grad(&params[0], g);
            opt.step(&params).unwrap();
            expected -= cfg.lr * g / (g.abs() + cfg.eps);
        }
        let w = params[0].var().value().data()[0];
        assert!((w - expected).abs() < 1e-12);
        assert!((w - 0.1).abs() < 1e-6);
        assert_eq!(opt.step_count(), 10);
    }
}
