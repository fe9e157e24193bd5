use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use super::tape::{Gradients, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Named trainable tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.params.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Glorot-uniform matrix `[fan_in × fan_out]`.
    pub fn init_glorot<R: Rng>(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..=a)).collect();
        self.insert(name, Tensor::matrix(fan_in, fan_out, data));
    }

    pub fn init_zeros(&mut self, name: &str, shape: Vec<usize>) {
        self.insert(name, Tensor::zeros(shape));
    }

    pub fn clear_grads(&mut self) {
        self.params.values_mut().for_each(Tensor::clear_grad);
    }

    /// Copies gradients of every parameter recorded on `tape` into the
    /// store. Parameters that were recorded but did not influence the loss
    /// receive a zero gradient. Returns the names that received a gradient.
    pub fn absorb(&mut self, tape: &Tape, grads: &Gradients) -> Vec<String> {
        let mut touched = Vec::with_capacity(tape.params().len());
        for (name, var) in tape.params() {
            let Some(t) = self.params.get_mut(name) else { continue };
            let g = grads.get(*var).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec);
            t.set_grad(g);
            touched.push(name.clone());
        }
        touched
    }

    /// Serializes as `{name: {"shape": [...], "data": [...]}}` with every
    /// value written to 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        let n = self.params.len();
        for (i, (name, t)) in self.params.iter().enumerate() {
            let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let data: Vec<String> = t.data().iter().map(|&x| format_f64(x)).collect();
            let key = serde_json::to_string(name).expect("string keys serialize");
            let _ = write!(
                out,
                "  {key}: {{\"shape\": [{}], \"data\": [{}]}}",
                shape.join(", "),
                data.join(", ")
            );
            out.push_str(if i + 1 < n { ",\n" } else { "\n" });
        }
        out.push('}');
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Entry {
            shape: Vec<usize>,
            data: Vec<f64>,
        }
        let raw: BTreeMap<String, Entry> = serde_json::from_str(text)?;
        let mut store = ParamStore::new();
        for (name, e) in raw {
            let n: usize = e.shape.iter().product();
            if n != e.data.len() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: shape {:?} needs {n} values, found {}",
                    e.shape,
                    e.data.len()
                )));
            }
            store.insert(name, Tensor::new(e.shape, e.data));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks that `other` has exactly the same names and shapes.
    pub fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        for (name, t) in &self.params {
            match other.get(name) {
                None => return Err(Error::Checkpoint(format!("missing parameter {name}"))),
                Some(o) if o.shape() != t.shape() => {
                    return Err(Error::Checkpoint(format!(
                        "parameter {name}: model expects shape {:?}, checkpoint has {:?}",
                        t.shape(),
                        o.shape()
                    )))
                }
                _ => {}
            }
        }
        if let Some(extra) = other.names().find(|n| !self.contains(n)) {
            return Err(Error::Checkpoint(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }
}

/// 17 significant digits, which round-trips every finite `f64`.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    format!("{x:.16e}")
}
