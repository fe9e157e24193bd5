//! Dense matrix kernels.
//!
//! Each output row is produced by exactly one task and every element is
//! accumulated in a fixed order, so the parallel and sequential variants
//! return bit-identical results.

/// Below this many multiply-adds the parallel path is not worth the fork.
const PAR_THRESHOLD: usize = 1 << 15;

/// `out[m×n] = a[m×k] · b[k×n]`, sequential.
pub fn matmul_seq(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for (i, row) in out.chunks_mut(n.max(1)).enumerate().take(m) {
        matmul_row(a, b, k, n, i, row);
    }
    out
}

/// `out[m×n] = a[m×k] · b[k×n]`, rows split across the rayon pool.
#[cfg(feature = "parallel")]
pub fn matmul_par(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    use rayon::prelude::*;
    let mut out = vec![0.0; m * n];
    if n == 0 {
        return out;
    }
    out.par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| matmul_row(a, b, k, n, i, row));
    out
}

#[inline]
fn matmul_row(a: &[f64], b: &[f64], k: usize, n: usize, i: usize, row: &mut [f64]) {
    let arow = &a[i * k..(i + 1) * k];
    for (p, &av) in arow.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        let brow = &b[p * n..(p + 1) * n];
        for (o, &bv) in row.iter_mut().zip(brow) {
            *o += av * bv;
        }
    }
}

/// Dispatches to the parallel kernel for large products when the
/// `parallel` feature is enabled.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        if m * k * n >= PAR_THRESHOLD && m > 1 {
            return matmul_par(a, b, m, k, n);
        }
    }
    let _ = PAR_THRESHOLD;
    matmul_seq(a, b, m, k, n)
}

/// `out[k×n] = aᵀ · g` where `a` is `[m×k]` and `g` is `[m×n]`.
pub fn matmul_at_b(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let at = transpose(a, m, k);
    matmul(&at, g, k, m, n)
}

/// `out[m×k] = g · bᵀ` where `g` is `[m×n]` and `b` is `[k×n]`.
pub fn matmul_a_bt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let bt = transpose(b, k, n);
    matmul(g, &bt, m, n, k)
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}
