//! Define-by-run reverse-mode differentiation.
//!
//! Every forward call appends one node to the tape. `backward` walks the
//! nodes in exact reverse construction order, so the tape is its own
//! topological sort.

use std::collections::HashMap;
use std::rc::Rc;

use super::kernels;
use super::params::ParamStore;
use super::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Constant sparse matrix in CSR layout (used for normalized adjacency).
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub offsets: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(vec![self.rows, self.cols]);
        for r in 0..self.rows {
            for e in self.offsets[r]..self.offsets[r + 1] {
                out.data_mut()[r * self.cols + self.indices[e]] += self.values[e];
            }
        }
        out
    }
}

/// Directed edges grouped by source node (CSR). `targets[e]` is the
/// neighbor attended to by edge `e`; edges of node `i` occupy
/// `offsets[i]..offsets[i + 1]`.
#[derive(Clone, Debug)]
pub struct EdgeIndex {
    pub nodes: usize,
    pub offsets: Vec<usize>,
    pub targets: Vec<usize>,
}

impl EdgeIndex {
    pub fn num_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn sources(&self) -> Vec<usize> {
        let mut src = Vec::with_capacity(self.targets.len());
        for i in 0..self.nodes {
            src.extend(std::iter::repeat_n(i, self.offsets[i + 1] - self.offsets[i]));
        }
        src
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    GatherRows(Var, Rc<Vec<usize>>),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    Abs(Var),
    Sqrt(Var),
    Log(Var),
    ScaleRows(Var, Var),
    SpMM(Rc<SparseMatrix>, Var),
    SegmentSoftmax(Var, Rc<EdgeIndex>),
    EdgeAggregate(Var, Var, Rc<EdgeIndex>),
    ColNormalize(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::AddConst(..) => "add_const",
            Op::Relu(..) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::LogSoftmaxRows(..) => "log_softmax_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::RowSum(..) => "row_sum",
            Op::Abs(..) => "abs",
            Op::Sqrt(..) => "sqrt",
            Op::Log(..) => "log",
            Op::ScaleRows(..) => "scale_rows",
            Op::SpMM(..) => "spmm",
            Op::SegmentSoftmax(..) => "segment_softmax",
            Op::EdgeAggregate(..) => "edge_aggregate",
            Op::ColNormalize(..) => "col_normalize",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// Columns with an L2 norm below this are left as zeros by `col_normalize`.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
    param_lookup: HashMap<String, Var>,
}

fn shape_err(op: &str, shapes: &[&[usize]]) -> ! {
    let parts: Vec<String> = shapes.iter().map(|s| format!("{s:?}")).collect();
    panic!("{op}: incompatible shapes {}", parts.join(" and "));
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Trainable leaf not tied to a parameter store.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Non-trainable leaf; never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Records (once per tape) a trainable leaf holding the named parameter.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        if let Some(&v) = self.param_lookup.get(name) {
            return v;
        }
        let t = store
            .get(name)
            .unwrap_or_else(|| panic!("param: unknown parameter {name}"))
            .clone();
        let mut t = t;
        t.clear_grad();
        let v = self.push(t, Op::Leaf, true);
        self.params.push((name.to_string(), v));
        self.param_lookup.insert(name.to_string(), v);
        v
    }

    /// Parameters recorded on this tape, in first-use order.
    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    fn push(&mut self, value: Tensor, op: Op, leaf_trainable: bool) -> Var {
        let needs_grad = match &op {
            Op::Leaf => leaf_trainable,
            _ => self.inputs(&op).iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn inputs(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::ScaleRows(a, b)
            | Op::EdgeAggregate(a, b, _) => vec![*a, *b],
            Op::ConcatCols(vs) | Op::ConcatRows(vs) => vs.clone(),
            Op::Scale(a, _)
            | Op::AddConst(a)
            | Op::Relu(a)
            | Op::LeakyRelu(a, _)
            | Op::Sigmoid(a)
            | Op::SoftmaxRows(a)
            | Op::LogSoftmaxRows(a)
            | Op::SliceCols(a, ..)
            | Op::SliceRows(a, ..)
            | Op::GatherRows(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::RowSum(a)
            | Op::Abs(a)
            | Op::Sqrt(a)
            | Op::Log(a)
            | Op::SpMM(_, a)
            | Op::SegmentSoftmax(a, _)
            | Op::ColNormalize(a) => vec![*a],
        }
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = &self.nodes[a.0].value;
        let data = t.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(t.shape().to_vec(), data);
        self.push(out, op, false)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            shape_err(op.name(), &[ta.shape(), tb.shape()]);
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data);
        self.push(out, op, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let ((m, k), (k2, n)) = (self.dims(a), self.dims(b));
        if k != k2 {
            shape_err("matmul", &[self.value(a).shape(), self.value(b).shape()]);
        }
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::matrix(m, n, data), Op::MatMul(a, b), false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a row vector `bias` (`[n]` or `[1×n]`) to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (m, n) = self.dims(a);
        let tb = self.value(bias);
        if tb.len() != n {
            shape_err("add_row", &[self.value(a).shape(), tb.shape()]);
        }
        let ta = self.value(a);
        let mut data = ta.data().to_vec();
        for r in 0..m {
            for (x, &b) in data[r * n..(r + 1) * n].iter_mut().zip(tb.data()) {
                *x += b;
            }
        }
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::AddRow(a, bias), false)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::AddConst(a), |x| x + c)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.map(a, Op::LeakyRelu(a, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, Op::Abs(a), f64::abs)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, Op::Log(a), f64::ln)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let t = self.value(a);
        let mut data = t.data().to_vec();
        for r in 0..m {
            softmax_in_place(&mut data[r * n..(r + 1) * n]);
        }
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::SoftmaxRows(a), false)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let t = self.value(a);
        let mut data = t.data().to_vec();
        for r in 0..m {
            let row = &mut data[r * n..(r + 1) * n];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::LogSoftmaxRows(a), false)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let m = self.dims(parts[0]).0;
        let widths: Vec<usize> = parts.iter().map(|&p| self.dims(p).1).collect();
        for &p in parts {
            if self.dims(p).0 != m {
                let shapes: Vec<&[usize]> = parts.iter().map(|&q| self.value(q).shape()).collect();
                shape_err("concat_cols", &shapes);
            }
        }
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        self.push(Tensor::matrix(m, n, data), Op::ConcatCols(parts.to_vec()), false)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: no inputs");
        let n = self.dims(parts[0]).1;
        let mut m = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (pm, pn) = self.dims(p);
            if pn != n {
                let shapes: Vec<&[usize]> = parts.iter().map(|&q| self.value(q).shape()).collect();
                shape_err("concat_rows", &shapes);
            }
            m += pm;
            data.extend_from_slice(self.value(p).data());
        }
        self.push(Tensor::matrix(m, n, data), Op::ConcatRows(parts.to_vec()), false)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (m, n) = self.dims(a);
        if start > end || end > n {
            shape_err("slice_cols", &[self.value(a).shape(), &[start, end]]);
        }
        let w = end - start;
        let t = self.value(a);
        let mut data = Vec::with_capacity(m * w);
        for r in 0..m {
            data.extend_from_slice(&t.data()[r * n + start..r * n + end]);
        }
        self.push(Tensor::matrix(m, w, data), Op::SliceCols(a, start, end), false)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (m, n) = self.dims(a);
        if start > end || end > m {
            shape_err("slice_rows", &[self.value(a).shape(), &[start, end]]);
        }
        let data = self.value(a).data()[start * n..end * n].to_vec();
        self.push(Tensor::matrix(end - start, n, data), Op::SliceRows(a, start, end), false)
    }

    /// Selects rows by index (repeats allowed); gradient scatters back.
    pub fn gather_rows(&mut self, a: Var, idx: Rc<Vec<usize>>) -> Var {
        let (m, n) = self.dims(a);
        let t = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx.iter() {
            if i >= m {
                shape_err("gather_rows", &[t.shape(), &[i]]);
            }
            data.extend_from_slice(&t.data()[i * n..(i + 1) * n]);
        }
        self.push(Tensor::matrix(idx.len(), n, data), Op::GatherRows(a, idx), false)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), false)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        assert!(!t.is_empty(), "mean: empty tensor");
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), false)
    }

    /// `[m×n] → [m×1]`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let t = self.value(a);
        let data = (0..m).map(|r| t.data()[r * n..(r + 1) * n].iter().sum()).collect();
        self.push(Tensor::matrix(m, 1, data), Op::RowSum(a), false)
    }

    /// Multiplies row `r` of `a` by `s[r]`; `s` is `[m×1]` or `[m]`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Var {
        let (m, n) = self.dims(a);
        let ts = self.value(s);
        if ts.len() != m {
            shape_err("scale_rows", &[self.value(a).shape(), ts.shape()]);
        }
        let ta = self.value(a);
        let mut data = ta.data().to_vec();
        for r in 0..m {
            let c = ts.data()[r];
            data[r * n..(r + 1) * n].iter_mut().for_each(|x| *x *= c);
        }
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::ScaleRows(a, s), false)
    }

    /// Constant sparse matrix times dense `x`.
    pub fn spmm(&mut self, s: Rc<SparseMatrix>, x: Var) -> Var {
        let (m, n) = self.dims(x);
        if s.cols != m {
            shape_err("spmm", &[&[s.rows, s.cols], self.value(x).shape()]);
        }
        let tx = self.value(x);
        let mut data = vec![0.0; s.rows * n];
        for r in 0..s.rows {
            let out = &mut data[r * n..(r + 1) * n];
            for e in s.offsets[r]..s.offsets[r + 1] {
                let v = s.values[e];
                let src = &tx.data()[s.indices[e] * n..(s.indices[e] + 1) * n];
                for (o, &x) in out.iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        self.push(Tensor::matrix(s.rows, n, data), Op::SpMM(s, x), false)
    }

    /// Softmax of per-edge logits `[E×1]` within each source node's edges.
    pub fn segment_softmax(&mut self, logits: Var, edges: Rc<EdgeIndex>) -> Var {
        let t = self.value(logits);
        if t.len() != edges.num_edges() {
            shape_err("segment_softmax", &[t.shape(), &[edges.num_edges()]]);
        }
        let mut data = t.data().to_vec();
        for i in 0..edges.nodes {
            let (lo, hi) = (edges.offsets[i], edges.offsets[i + 1]);
            if lo < hi {
                softmax_in_place(&mut data[lo..hi]);
            }
        }
        self.push(Tensor::matrix(edges.num_edges(), 1, data), Op::SegmentSoftmax(logits, edges), false)
    }

    /// `out[i] = Σ_{e ∈ edges(i)} alpha[e] · x[target(e)]`.
    pub fn edge_aggregate(&mut self, alpha: Var, x: Var, edges: Rc<EdgeIndex>) -> Var {
        let (m, n) = self.dims(x);
        let ta = self.value(alpha);
        if ta.len() != edges.num_edges() || m < edges.nodes {
            shape_err("edge_aggregate", &[ta.shape(), self.value(x).shape()]);
        }
        let tx = self.value(x);
        let mut data = vec![0.0; edges.nodes * n];
        for i in 0..edges.nodes {
            let out = &mut data[i * n..(i + 1) * n];
            for e in edges.offsets[i]..edges.offsets[i + 1] {
                let a = ta.data()[e];
                let j = edges.targets[e];
                for (o, &v) in out.iter_mut().zip(&tx.data()[j * n..(j + 1) * n]) {
                    *o += a * v;
                }
            }
        }
        self.push(Tensor::matrix(edges.nodes, n, data), Op::EdgeAggregate(alpha, x, edges), false)
    }

    /// Divides each column by its L2 norm; near-zero columns become zero.
    pub fn col_normalize(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let t = self.value(a);
        let norms = col_norms(t.data(), m, n);
        let mut data = t.data().to_vec();
        for r in 0..m {
            for c in 0..n {
                let x = &mut data[r * n + c];
                *x = if norms[c] < NORM_FLOOR { 0.0 } else { *x / norms[c] };
            }
        }
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, data), Op::ColNormalize(a), false)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert!(!self.nodes.is_empty(), "backward: empty tape");
        let lt = self.value(loss);
        assert!(lt.is_scalar(), "backward: loss has shape {:?}, expected a scalar", lt.shape());
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if wants(*a) {
                    let ga = kernels::matmul_a_bt(g, val(*b).data(), m, n, k);
                    accumulate(grads, *a, &ga);
                }
                if wants(*b) {
                    let gb = kernels::matmul_at_b(val(*a).data(), g, m, k, n);
                    accumulate(grads, *b, &gb);
                }
            }
            Op::Add(a, b) => {
                accumulate_if(grads, *a, wants(*a), g);
                accumulate_if(grads, *b, wants(*b), g);
            }
            Op::Sub(a, b) => {
                accumulate_if(grads, *a, wants(*a), g);
                if wants(*b) {
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    accumulate(grads, *b, &neg);
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let ga: Vec<f64> = g.iter().zip(val(*b).data()).map(|(g, y)| g * y).collect();
                    accumulate(grads, *a, &ga);
                }
                if wants(*b) {
                    let gb: Vec<f64> = g.iter().zip(val(*a).data()).map(|(g, x)| g * x).collect();
                    accumulate(grads, *b, &gb);
                }
            }
            Op::AddRow(a, bias) => {
                accumulate_if(grads, *a, wants(*a), g);
                if wants(*bias) {
                    let (m, n) = (out.rows(), out.cols());
                    let mut gb = vec![0.0; n];
                    for r in 0..m {
                        for (acc, &x) in gb.iter_mut().zip(&g[r * n..(r + 1) * n]) {
                            *acc += x;
                        }
                    }
                    accumulate(grads, *bias, &gb);
                }
            }
            Op::Scale(a, c) => {
                let ga: Vec<f64> = g.iter().map(|x| x * c).collect();
                accumulate(grads, *a, &ga);
            }
            Op::AddConst(a) => accumulate(grads, *a, g),
            Op::Relu(a) => {
                let ga = zip_grad(g, val(*a).data(), |g, x| if x > 0.0 { g } else { 0.0 });
                accumulate(grads, *a, &ga);
            }
            Op::LeakyRelu(a, s) => {
                let ga = zip_grad(g, val(*a).data(), |g, x| if x > 0.0 { g } else { s * g });
                accumulate(grads, *a, &ga);
            }
            Op::Sigmoid(a) => {
                let ga = zip_grad(g, out.data(), |g, y| g * y * (1.0 - y));
                accumulate(grads, *a, &ga);
            }
            Op::Abs(a) => {
                let ga = zip_grad(g, val(*a).data(), |g, x| g * sign(x));
                accumulate(grads, *a, &ga);
            }
            Op::Sqrt(a) => {
                let ga = zip_grad(g, out.data(), |g, y| g * 0.5 / y);
                accumulate(grads, *a, &ga);
            }
            Op::Log(a) => {
                let ga = zip_grad(g, val(*a).data(), |g, x| g / x);
                accumulate(grads, *a, &ga);
            }
            Op::SoftmaxRows(a) => {
                let (m, n) = (out.rows(), out.cols());
                let mut ga = vec![0.0; m * n];
                for r in 0..m {
                    let y = &out.data()[r * n..(r + 1) * n];
                    let gr = &g[r * n..(r + 1) * n];
                    let dot: f64 = y.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for c in 0..n {
                        ga[r * n + c] = y[c] * (gr[c] - dot);
                    }
                }
                accumulate(grads, *a, &ga);
            }
            Op::LogSoftmaxRows(a) => {
                let (m, n) = (out.rows(), out.cols());
                let mut ga = vec![0.0; m * n];
                for r in 0..m {
                    let y = &out.data()[r * n..(r + 1) * n];
                    let gr = &g[r * n..(r + 1) * n];
                    let gs: f64 = gr.iter().sum();
                    for c in 0..n {
                        ga[r * n + c] = gr[c] - y[c].exp() * gs;
                    }
                }
                accumulate(grads, *a, &ga);
            }
            Op::ConcatCols(parts) => {
                let (m, n) = (out.rows(), out.cols());
                let mut off = 0;
                for &p in parts {
                    let w = self.dims(p).1;
                    if wants(p) {
                        let mut gp = Vec::with_capacity(m * w);
                        for r in 0..m {
                            gp.extend_from_slice(&g[r * n + off..r * n + off + w]);
                        }
                        accumulate(grads, p, &gp);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let n = out.cols();
                let mut off = 0;
                for &p in parts {
                    let pm = self.dims(p).0;
                    if wants(p) {
                        accumulate(grads, p, &g[off * n..(off + pm) * n]);
                    }
                    off += pm;
                }
            }
            Op::SliceCols(a, start, end) => {
                let (m, n) = self.dims(*a);
                let w = end - start;
                let mut ga = vec![0.0; m * n];
                for r in 0..m {
                    ga[r * n + start..r * n + end].copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                accumulate(grads, *a, &ga);
            }
            Op::SliceRows(a, start, end) => {
                let (m, n) = self.dims(*a);
                let mut ga = vec![0.0; m * n];
                ga[start * n..end * n].copy_from_slice(g);
                accumulate(grads, *a, &ga);
            }
            Op::GatherRows(a, idx) => {
                let (m, n) = self.dims(*a);
                let mut ga = vec![0.0; m * n];
                for (k, &i) in idx.iter().enumerate() {
                    for (acc, &x) in ga[i * n..(i + 1) * n].iter_mut().zip(&g[k * n..(k + 1) * n]) {
                        *acc += x;
                    }
                }
                accumulate(grads, *a, &ga);
            }
            Op::Sum(a) => {
                let ga = vec![g[0]; val(*a).len()];
                accumulate(grads, *a, &ga);
            }
            Op::Mean(a) => {
                let len = val(*a).len();
                let ga = vec![g[0] / len as f64; len];
                accumulate(grads, *a, &ga);
            }
            Op::RowSum(a) => {
                let (m, n) = self.dims(*a);
                let mut ga = vec![0.0; m * n];
                for r in 0..m {
                    ga[r * n..(r + 1) * n].iter_mut().for_each(|x| *x = g[r]);
                }
                accumulate(grads, *a, &ga);
            }
            Op::ScaleRows(a, s) => {
                let (m, n) = self.dims(*a);
                let (ta, ts) = (val(*a), val(*s));
                if wants(*a) {
                    let mut ga = g.to_vec();
                    for r in 0..m {
                        let c = ts.data()[r];
                        ga[r * n..(r + 1) * n].iter_mut().for_each(|x| *x *= c);
                    }
                    accumulate(grads, *a, &ga);
                }
                if wants(*s) {
                    let gs: Vec<f64> = (0..m)
                        .map(|r| {
                            ta.data()[r * n..(r + 1) * n]
                                .iter()
                                .zip(&g[r * n..(r + 1) * n])
                                .map(|(x, g)| x * g)
                                .sum()
                        })
                        .collect();
                    accumulate(grads, *s, &gs);
                }
            }
            Op::SpMM(s, x) => {
                let (m, n) = self.dims(*x);
                let mut gx = vec![0.0; m * n];
                for r in 0..s.rows {
                    let gr = &g[r * n..(r + 1) * n];
                    for e in s.offsets[r]..s.offsets[r + 1] {
                        let v = s.values[e];
                        let j = s.indices[e];
                        for (acc, &gv) in gx[j * n..(j + 1) * n].iter_mut().zip(gr) {
                            *acc += v * gv;
                        }
                    }
                }
                accumulate(grads, *x, &gx);
            }
            Op::SegmentSoftmax(a, edges) => {
                let y = out.data();
                let mut ga = vec![0.0; y.len()];
                for i in 0..edges.nodes {
                    let (lo, hi) = (edges.offsets[i], edges.offsets[i + 1]);
                    let dot: f64 = (lo..hi).map(|e| y[e] * g[e]).sum();
                    for e in lo..hi {
                        ga[e] = y[e] * (g[e] - dot);
                    }
                }
                accumulate(grads, *a, &ga);
            }
            Op::EdgeAggregate(alpha, x, edges) => {
                let (m, n) = self.dims(*x);
                let (talpha, tx) = (val(*alpha), val(*x));
                let mut galpha = vec![0.0; edges.num_edges()];
                let mut gx = vec![0.0; m * n];
                for i in 0..edges.nodes {
                    let gi = &g[i * n..(i + 1) * n];
                    for e in edges.offsets[i]..edges.offsets[i + 1] {
                        let j = edges.targets[e];
                        let xj = &tx.data()[j * n..(j + 1) * n];
                        galpha[e] = gi.iter().zip(xj).map(|(a, b)| a * b).sum();
                        let a = talpha.data()[e];
                        for (acc, &gv) in gx[j * n..(j + 1) * n].iter_mut().zip(gi) {
                            *acc += a * gv;
                        }
                    }
                }
                accumulate_if(grads, *alpha, wants(*alpha), &galpha);
                accumulate_if(grads, *x, wants(*x), &gx);
            }
            Op::ColNormalize(a) => {
                let (m, n) = self.dims(*a);
                let norms = col_norms(val(*a).data(), m, n);
                let y = out.data();
                let mut ga = vec![0.0; m * n];
                for c in 0..n {
                    if norms[c] < NORM_FLOOR {
                        continue;
                    }
                    let dot: f64 = (0..m).map(|r| y[r * n + c] * g[r * n + c]).sum();
                    for r in 0..m {
                        ga[r * n + c] = (g[r * n + c] - y[r * n + c] * dot) / norms[c];
                    }
                }
                accumulate(grads, *a, &ga);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn accumulate_if(grads: &mut [Option<Vec<f64>>], v: Var, cond: bool, g: &[f64]) {
    if cond {
        accumulate(grads, v, g);
    }
}

fn zip_grad(g: &[f64], x: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    g.iter().zip(x).map(|(&g, &x)| f(g, x)).collect()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in row.iter_mut() {
        *x = (*x - mx).exp();
        s += *x;
    }
    row.iter_mut().for_each(|x| *x /= s);
}

fn col_norms(data: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut sq = vec![0.0; n];
    for r in 0..m {
        for (acc, &x) in sq.iter_mut().zip(&data[r * n..(r + 1) * n]) {
            *acc += x * x;
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}
