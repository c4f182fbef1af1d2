#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Condition estimates above this are treated as singular.
const MAX_CONDITION: f64 = 1e12;

/// Least-squares solution of `A x ≈ b` by Householder QR. `a` is row-major
/// `rows × cols` with `rows ≥ cols`.
pub(crate) fn lstsq(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Result<Vec<f64>> {
    debug_assert!(rows >= cols && a.len() == rows * cols && b.len() == rows);
    let mut r = a.to_vec();
    let mut y = b.to_vec();
    for k in 0..cols {
        let norm = (k..rows).map(|i| r[i * cols + k].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        let alpha = if r[k * cols + k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..rows).map(|i| r[i * cols + k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for c in k..cols {
            let dot: f64 = (k..rows).map(|i| v[i - k] * r[i * cols + c]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..rows {
                r[i * cols + c] -= f * v[i - k];
            }
        }
        let dot: f64 = (k..rows).map(|i| v[i - k] * y[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in k..rows {
            y[i] -= f * v[i - k];
        }
    }
    let diag: Vec<f64> = (0..cols).map(|k| r[k * cols + k].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    let mut x = alloc::vec![0.0; cols];
    for k in (0..cols).rev() {
        let s: f64 = (k + 1..cols).map(|c| r[k * cols + c] * x[c]).sum();
        x[k] = (y[k] - s) / r[k * cols + k];
    }
    Ok(x)
}
