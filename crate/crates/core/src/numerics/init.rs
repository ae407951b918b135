use alloc::format;
use alloc::vec::Vec;

use super::{Matrix, Rng};
use crate::{Error, Result};

/// Glorot/Xavier uniform: i.i.d. on `±sqrt(6 / (fan_in + fan_out))`, shape `fan_in x fan_out`.
pub fn glorot_uniform(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Result<Matrix> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Config(format!(
            "glorot_uniform needs positive fans, got {fan_in}x{fan_out}"
        )));
    }
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    Ok(Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform(-limit, limit)))
}

/// (Semi-)orthogonal matrix from the QR decomposition of a Gaussian draw.
///
/// The diagonal of R is forced positive so the result is Haar distributed.
/// Tall shapes have orthonormal columns, wide shapes orthonormal rows; both
/// are the leading block of an orthogonal `max(rows, cols)` square matrix.
pub fn orthogonal(rng: &mut Rng, rows: usize, cols: usize) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config(format!(
            "orthogonal needs positive dimensions, got {rows}x{cols}"
        )));
    }
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let gaussian = Matrix::from_fn(tall, short, |_, _| rng.standard_normal());
    let (q, _) = qr_decompose(&gaussian)?;
    Ok(if rows >= cols { q } else { q.transpose() })
}

/// Thin Householder QR of an `m x n` matrix with `m >= n`.
///
/// Returns `Q` (`m x n`, orthonormal columns) and upper-triangular `R`
/// (`n x n`) with a non-negative diagonal.
pub fn qr_decompose(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::shape("qr_decompose", (m, n), (n, n)));
    }
    let mut r = a.clone();
    let mut reflectors: Vec<Option<(Vec<f64>, f64)>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v: Vec<f64> = (k..m).map(|i| r.get(i, k)).collect();
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            reflectors.push(None);
            continue;
        }
        for j in k..n {
            let s: f64 = v.iter().enumerate().map(|(i, vi)| vi * r.get(k + i, j)).sum();
            let scale = 2.0 * s / vnorm2;
            for (i, vi) in v.iter().enumerate() {
                let updated = r.get(k + i, j) - scale * vi;
                r.set(k + i, j, updated);
            }
        }
        reflectors.push(Some((v, vnorm2)));
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I_m.
    let mut q = Matrix::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for (k, reflector) in reflectors.iter().enumerate().rev() {
        let Some((v, vnorm2)) = reflector else { continue };
        for j in 0..n {
            let s: f64 = v.iter().enumerate().map(|(i, vi)| vi * q.get(k + i, j)).sum();
            if s == 0.0 {
                continue;
            }
            let scale = 2.0 * s / vnorm2;
            for (i, vi) in v.iter().enumerate() {
                let updated = q.get(k + i, j) - scale * vi;
                q.set(k + i, j, updated);
            }
        }
    }

    let mut r_square = Matrix::from_fn(n, n, |i, j| if j >= i { r.get(i, j) } else { 0.0 });
    for i in 0..n {
        if r_square.get(i, i) < 0.0 {
            for j in 0..n {
                let flipped = -r_square.get(i, j);
                r_square.set(i, j, flipped);
            }
            for row in 0..m {
                let flipped = -q.get(row, i);
                q.set(row, i, flipped);
            }
        }
    }
    Ok((q, r_square))
}
