//! Orthonormal DCT-II along one axis, and its inverse.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::array::{Float, Tensor};
use crate::tensor::tape::Var;

/// Orthonormal DCT-II matrix, `m[k][n] = s_k cos(π (n + ½) k / N)`.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m[k * n + i] = s * (PI * (i as f64 + 0.5) * k as f64 / n as f64).cos();
        }
    }
    m
}

/// Applies `m` (or its transpose) along `axis`.
fn apply_along(t: &Tensor, axis: usize, m: &[f64], transpose: bool) -> Tensor {
    let s = t.shape();
    let n = s[axis];
    let outer: usize = s[..axis].iter().product();
    let inner: usize = s[axis + 1..].iter().product();
    let src = t.data();
    let mut out = vec![0.0; src.len()];
    let mut acc = vec![0.0f64; inner];
    for o in 0..outer {
        let base = o * n * inner;
        for k in 0..n {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for i in 0..n {
                let c = if transpose { m[i * n + k] } else { m[k * n + i] };
                let row = &src[base + i * inner..base + (i + 1) * inner];
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += c * v as f64;
                }
            }
            for (d, &a) in out[base + k * inner..base + (k + 1) * inner].iter_mut().zip(&acc) {
                *d = a as Float;
            }
        }
    }
    Tensor::from_parts(s.to_vec(), out)
}

fn check_axis(x: &Var, axis: usize) -> Result<usize> {
    let s = x.shape();
    s.get(axis)
        .copied()
        .ok_or_else(|| Error::dim(format!("dct: axis {axis} out of range for {s:?}")))
}

fn transform(x: &Var, axis: usize, inverse: bool) -> Result<Var> {
    let n = check_axis(x, axis)?;
    let m = dct_matrix(n);
    let out = apply_along(&x.value(), axis, &m, inverse);
    Ok(x.tape().record(
        if inverse { "idct" } else { "dct" },
        out,
        &[x],
        Box::new(move |g, _, _| vec![Some(apply_along(g, axis, &m, !inverse))]),
    ))
}

/// Orthonormal DCT-II along `axis`.
pub fn dct1d(x: &Var, axis: usize) -> Result<Var> {
    transform(x, axis, false)
}

/// Inverse of [`dct1d`] (orthonormal DCT-III).
pub fn idct1d(x: &Var, axis: usize) -> Result<Var> {
    transform(x, axis, true)
}
