#![allow(dead_code)]

pub mod reference;

use nlstm_core::cells::{CellParams, CellState};
use nlstm_core::model::Model;
use nlstm_core::numerics::Rng;

pub fn randomize_cell(rng: &mut Rng, p: &mut CellParams, scale: f64) {
    p.for_each_tensor_mut(&mut |t| t.iter_mut().for_each(|v| *v = rng.uniform(-scale, scale)));
}

pub fn randomize_model(rng: &mut Rng, m: &mut Model, scale: f64) {
    m.for_each_tensor_mut(&mut |t| t.iter_mut().for_each(|v| *v = rng.uniform(-scale, scale)));
}

pub fn random_state(rng: &mut Rng, params: &CellParams) -> CellState {
    fn fill(rng: &mut Rng, s: &mut CellState) {
        s.h.iter_mut().for_each(|v| *v = rng.uniform(-0.9, 0.9));
        s.c.iter_mut().for_each(|v| *v = rng.uniform(-0.9, 0.9));
        if let Some(inner) = s.inner.as_mut() {
            fill(rng, inner);
        }
    }
    let mut s = CellState::zeros(params);
    fill(rng, &mut s);
    s
}

pub fn random_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-scale, scale)).collect()
}

/// Passes when the absolute error is below `1e-8` or the relative error is
/// below `rel_tol`.
pub fn grads_agree(analytic: f64, numeric: f64, rel_tol: f64) -> bool {
    let abs = (analytic - numeric).abs();
    abs < 1e-8 || abs / analytic.abs().max(numeric.abs()) < rel_tol
}

/// Applies `f` to the `k`-th scalar of a flattened parameter visit.
pub fn with_param<T>(
    visit: impl FnOnce(&mut dyn FnMut(&mut [f64])),
    k: usize,
    f: impl FnOnce(&mut f64) -> T,
) -> T {
    let mut offset = 0;
    let mut f = Some(f);
    let mut out = None;
    visit(&mut |slice: &mut [f64]| {
        if out.is_none() && k >= offset && k < offset + slice.len() {
            out = Some((f.take().unwrap())(&mut slice[k - offset]));
        }
        offset += slice.len();
    });
    out.expect("parameter index out of range")
}

pub fn flatten_cell(p: &CellParams) -> Vec<f64> {
    let mut out = Vec::new();
    p.for_each_tensor(&mut |_, _, _, d| out.extend_from_slice(d));
    out
}

pub fn flatten_model(m: &Model) -> Vec<f64> {
    let mut out = Vec::new();
    m.for_each_tensor(&mut |_, _, _, d| out.extend_from_slice(d));
    out
}
