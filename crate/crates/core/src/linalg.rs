//! Small dense helpers shared by the numeric modules.
//!
//! Data containers keep row-major `Vec<f64>` buffers; anything needing a
//! decomposition converts to `nalgebra` at the boundary.

use nalgebra::DMatrix;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero vectors yield 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

pub fn to_matrix(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Row-major copy of a matrix.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Multiplies every row `x` of a row-major `rows × d` buffer by `m` as `m·x`.
pub fn transform_rows(data: &[f64], d: usize, m: &DMatrix<f64>) -> Vec<f64> {
    debug_assert_eq!(m.ncols(), d);
    let out_d = m.nrows();
    let mut out = vec![0.0; data.len() / d.max(1) * out_d];
    for (row, dst) in data.chunks_exact(d).zip(out.chunks_exact_mut(out_d)) {
        for (i, slot) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, x) in row.iter().enumerate() {
                acc += m[(i, j)] * x;
            }
            *slot = acc;
        }
    }
    out
}

/// Largest absolute entry, the norm used for matrix tolerance checks.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Formats a float so that parsing it back yields the same bits.
pub fn fmt_exact(x: f64) -> String {
    format!("{x:?}")
}
