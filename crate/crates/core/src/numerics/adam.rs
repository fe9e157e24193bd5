use std::collections::BTreeMap;

use super::params::ParamStore;
use crate::error::{Error, Result};

/// Adam moments and hyperparameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState { step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    /// One bias-corrected Adam update over the named parameters.
    ///
    /// Every named parameter must carry a gradient; parameters outside
    /// `names` keep their moments untouched.
    pub fn step(&mut self, store: &mut ParamStore, names: &[String]) -> Result<()> {
        for name in names {
            let t = store.get(name).ok_or_else(|| Error::MissingGradient(name.clone()))?;
            if t.grad().is_none() {
                return Err(Error::MissingGradient(name.clone()));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for name in names {
            let t = store.get_mut(name).expect("checked above");
            let g = t.take_grad().expect("checked above");
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for (i, w) in t.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    pub fn moments(&self, name: &str) -> Option<(&[f64], &[f64])> {
        Some((self.m.get(name)?.as_slice(), self.v.get(name)?.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn store_with(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let mut t = Tensor::scalar(value);
        t.set_grad(vec![grad]);
        s.insert("p", t);
        s
    }

    #[test]
    fn zero_gradient_is_a_fixpoint() {
        let mut s = store_with(1.25, 0.0);
        let mut adam = AdamState::new(5e-4);
        adam.step(&mut s, &["p".into()]).unwrap();
        assert_eq!(s.get("p").unwrap().item(), 1.25);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = 1, v̂ = 1 after bias correction, so Δ = -lr / (1 + eps).
        let mut s = store_with(0.0, 1.0);
        let mut adam = AdamState::new(5e-4);
        adam.step(&mut s, &["p".into()]).unwrap();
        let expected = -5e-4 / (1.0 + 1e-8);
        assert!((s.get("p").unwrap().item() - expected).abs() < 1e-15);
        for _ in 0..3 {
            s.get_mut("p").unwrap().set_grad(vec![1.0]);
            adam.step(&mut s, &["p".into()]).unwrap();
        }
        // Constant gradient keeps m̂ = v̂ = 1: each step moves by lr.
        assert!((s.get("p").unwrap().item() + 4.0 * 5e-4).abs() < 1e-10);
    }

    #[test]
    fn zero_lr_freezes() {
        let mut s = store_with(3.0, 7.0);
        let mut adam = AdamState::new(0.0);
        adam.step(&mut s, &["p".into()]).unwrap();
        assert_eq!(s.get("p").unwrap().item(), 3.0);
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut s = ParamStore::new();
        s.insert("gat.w", Tensor::scalar(1.0));
        let err = AdamState::new(1e-3).step(&mut s, &["gat.w".into()]).unwrap_err();
        assert!(err.to_string().contains("gat.w"));
    }
}
