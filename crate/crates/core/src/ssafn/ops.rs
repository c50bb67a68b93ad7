//! Dense kernels shared by the attention layers.

/// `C = A · B` for row-major `A (m × k)` and `B (k × n)`, with `B` given by
/// explicit strides so that transposed operands need no copy.
pub(crate) fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    b_row_stride: usize,
    b_col_stride: usize,
) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 {
        return c;
    }
    debug_assert!(a.len() >= m * k);
    if k > 0 {
        debug_assert!(b.len() > (k - 1) * b_row_stride + (n - 1) * b_col_stride);
    }
    // SAFETY: the slices cover the strided extents checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            b_row_stride as isize,
            b_col_stride as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// `x W + bias` for `x (rows × in)`, `W (in × out)`.
pub(crate) fn linear(x: &[f64], rows: usize, w: &[f64], bias: &[f64], in_dim: usize) -> Vec<f64> {
    let out_dim = bias.len();
    let mut y = gemm_strided(rows, in_dim, out_dim, x, w, out_dim, 1);
    for row in y.chunks_exact_mut(out_dim) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    y
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `x · relu6(x + 3) / 6`.
pub(crate) fn hard_swish(x: f64) -> f64 {
    x * (x + 3.0).clamp(0.0, 6.0) / 6.0
}

/// Numerically stable in-place softmax of one row.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
