//! Dense symmetric positive-definite solves.

use super::Matrix;
use crate::error::{Error, Result};

/// Lower Cholesky factor `L` with `a = L L^T`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::dim("cholesky", a.shape(), (n, n)));
    }
    let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
    let tol = scale * 1e-13 * n.max(1) as f64;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let row_j = &l[j * n..j * n + j];
        let d = a.get(j, j) - dot(row_j, row_j);
        if !(d > tol) {
            return Err(Error::Numeric(format!(
                "matrix is singular or not positive definite (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let (upper, lower) = l.split_at_mut(i * n);
            let row_i = &mut lower[..n];
            row_i[j] = (a.get(i, j) - dot(&row_i[..j], &upper[j * n..j * n + j])) / d;
        }
    }
    Matrix::new(n, n, l)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if b.rows() != n {
        return Err(Error::dim("solve_spd", a.shape(), b.shape()));
    }
    let l = cholesky(a)?;
    let mut x = b.clone();
    for c in 0..b.cols() {
        // forward: L y = b
        for i in 0..n {
            let mut s = x.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = x.get(i, c);
            for k in i + 1..n {
                s -= l.get(k, i) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    Ok(x)
}
