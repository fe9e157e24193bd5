//! Central finite-difference gradient checks.
//!
//! The numerical side only ever evaluates the forward pass; it never reads
//! tape gradients, so it stays independent of `Tape::backward`.

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Worst per-input relative error between analytic and numerical gradients.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Index of the input with the worst error.
    pub worst_input: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Denominator floor for [`relative_error`]. Gradients that vanish exactly
/// (a softmax shift, cancelling signs) leave only central-difference
/// roundoff on the numerical side. That is about `ε·|L|/h`, so a few 1e-10
/// for losses near 10 at `h = 1e-5`.
pub const SCALE_FLOOR: f64 = 1e-5;

/// `‖a − n‖ / max(‖a‖ + ‖n‖, SCALE_FLOOR)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
        + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / scale.max(SCALE_FLOOR)
}

/// Numerical gradient of `f` at `inputs[which]` with step `h`.
pub fn numeric_gradient<F>(f: &F, inputs: &[Tensor], which: usize, h: f64) -> Vec<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |inputs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).item()
    };
    let mut work = inputs.to_vec();
    let n = inputs[which].len();
    let mut grad = Vec::with_capacity(n);
    for k in 0..n {
        let x0 = inputs[which].data()[k];
        work[which].data_mut()[k] = x0 + h;
        let up = eval(&work);
        work[which].data_mut()[k] = x0 - h;
        let down = eval(&work);
        work[which].data_mut()[k] = x0;
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Compares tape gradients of a scalar-valued `f` against central
/// differences for every input tensor.
pub fn check<F>(f: F, inputs: &[Tensor], h: f64) -> GradCheck
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out);
    let mut worst = GradCheck { max_rel_error: 0.0, worst_input: 0 };
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).map_or_else(|| vec![0.0; inputs[i].len()], <[f64]>::to_vec);
        let numeric = numeric_gradient(&f, inputs, i, h);
        let err = relative_error(&analytic, &numeric);
        if err > worst.max_rel_error || err.is_nan() {
            worst = GradCheck { max_rel_error: err, worst_input: i };
        }
    }
    worst
}

/// Finite-difference check of every parameter in `store` for a scalar
/// loss built by `f`. Returns the worst parameter name and its error.
pub fn check_params<F>(f: F, store: &super::ParamStore, h: f64) -> (String, f64)
where
    F: Fn(&mut Tape, &super::ParamStore) -> Var,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store);
    let grads = tape.backward(out);
    let analytic: std::collections::HashMap<&str, Var> =
        tape.params().iter().map(|(n, v)| (n.as_str(), *v)).collect();
    let mut work = store.clone();
    let eval = |s: &super::ParamStore| {
        let mut t = Tape::new();
        let o = f(&mut t, s);
        t.value(o).item()
    };
    let mut worst = (String::new(), 0.0);
    for (name, t) in store.iter() {
        let a = analytic
            .get(name.as_str())
            .and_then(|v| grads.get(*v))
            .map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec);
        let mut numeric = Vec::with_capacity(t.len());
        for k in 0..t.len() {
            let x0 = t.data()[k];
            work.get_mut(name).unwrap().data_mut()[k] = x0 + h;
            let up = eval(&work);
            work.get_mut(name).unwrap().data_mut()[k] = x0 - h;
            let down = eval(&work);
            work.get_mut(name).unwrap().data_mut()[k] = x0;
            numeric.push((up - down) / (2.0 * h));
        }
        let err = relative_error(&a, &numeric);
        if err > worst.1 || err.is_nan() {
            worst = (name.clone(), err);
        }
    }
    worst
}
