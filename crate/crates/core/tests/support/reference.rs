#![allow(clippy::needless_range_loop)]

//! Scalar, loop-by-loop transcriptions of the LSTM and Nested LSTM step.
//! Deliberately independent of the library's vectorized code path.

use nlstm_core::cells::{CellParams, GateBlock};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate weights copied element by element. Gate order: i, f, g, o.
#[derive(Clone)]
pub struct RefGates {
    pub input: usize,
    pub cell: usize,
    pub w_x: [Vec<Vec<f64>>; 4],
    pub w_h: [Vec<Vec<f64>>; 4],
    pub b: [Vec<f64>; 4],
}

impl RefGates {
    pub fn from_params(p: &CellParams) -> Self {
        let copy = |g: &GateBlock| {
            let w_x: Vec<Vec<f64>> = (0..g.w_x.rows())
                .map(|r| (0..g.w_x.cols()).map(|c| g.w_x.get(r, c)).collect())
                .collect();
            let w_h: Vec<Vec<f64>> = (0..g.w_h.rows())
                .map(|r| (0..g.w_h.cols()).map(|c| g.w_h.get(r, c)).collect())
                .collect();
            (w_x, w_h, g.b.to_vec())
        };
        let (xi, hi, bi) = copy(&p.input_gate);
        let (xf, hf, bf) = copy(&p.forget_gate);
        let (xg, hg, bg) = copy(&p.cell_gate);
        let (xo, ho, bo) = copy(&p.output_gate);
        RefGates {
            input: p.input_size(),
            cell: p.cell_size(),
            w_x: [xi, xf, xg, xo],
            w_h: [hi, hf, hg, ho],
            b: [bi, bf, bg, bo],
        }
    }

    fn pre(&self, gate: usize, x: &[f64], h: &[f64], j: usize) -> f64 {
        let mut s = self.b[gate][j];
        for k in 0..self.input {
            s += x[k] * self.w_x[gate][k][j];
        }
        for k in 0..self.cell {
            s += h[k] * self.w_h[gate][k][j];
        }
        s
    }
}

pub struct RefStep {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Classic LSTM: sigmoid gates, tanh candidate and hidden activation.
pub fn lstm_forward(p: &RefGates, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> RefStep {
    let n = p.cell;
    let mut s = RefStep {
        i: vec![0.0; n],
        f: vec![0.0; n],
        g: vec![0.0; n],
        o: vec![0.0; n],
        c: vec![0.0; n],
        h: vec![0.0; n],
    };
    for j in 0..n {
        s.i[j] = sigmoid(p.pre(0, x, h_prev, j));
        s.f[j] = sigmoid(p.pre(1, x, h_prev, j));
        s.g[j] = p.pre(2, x, h_prev, j).tanh();
        s.o[j] = sigmoid(p.pre(3, x, h_prev, j));
        s.c[j] = s.f[j] * c_prev[j] + s.i[j] * s.g[j];
        s.h[j] = s.o[j] * s.c[j].tanh();
    }
    s
}

pub struct RefGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
    pub dw_x: [Vec<Vec<f64>>; 4],
    pub dw_h: [Vec<Vec<f64>>; 4],
    pub db: [Vec<f64>; 4],
}

impl RefGrads {
    /// Same order as `CellParams::for_each_tensor`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in 0..4 {
            self.dw_x[g].iter().for_each(|r| out.extend_from_slice(r));
            self.dw_h[g].iter().for_each(|r| out.extend_from_slice(r));
            out.extend_from_slice(&self.db[g]);
        }
        out
    }
}

/// Hand-derived LSTM backward for upstream `dh` (on h_t) and `dc_next` (on c_t).
pub fn lstm_backward(
    p: &RefGates,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    s: &RefStep,
    dh: &[f64],
    dc_next: &[f64],
) -> RefGrads {
    let (m, n) = (p.input, p.cell);
    let mut da = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut dc_prev = vec![0.0; n];
    for j in 0..n {
        let tc = s.c[j].tanh();
        let dc = dc_next[j] + dh[j] * s.o[j] * (1.0 - tc * tc);
        da[3][j] = dh[j] * tc * s.o[j] * (1.0 - s.o[j]);
        da[0][j] = dc * s.g[j] * s.i[j] * (1.0 - s.i[j]);
        da[1][j] = dc * c_prev[j] * s.f[j] * (1.0 - s.f[j]);
        da[2][j] = dc * s.i[j] * (1.0 - s.g[j] * s.g[j]);
        dc_prev[j] = dc * s.f[j];
    }
    let mut dx = vec![0.0; m];
    let mut dh_prev = vec![0.0; n];
    let mut dw_x: [Vec<Vec<f64>>; 4] = std::array::from_fn(|_| vec![vec![0.0; n]; m]);
    let mut dw_h: [Vec<Vec<f64>>; 4] = std::array::from_fn(|_| vec![vec![0.0; n]; n]);
    for g in 0..4 {
        for k in 0..m {
            for j in 0..n {
                dw_x[g][k][j] = x[k] * da[g][j];
                dx[k] += p.w_x[g][k][j] * da[g][j];
            }
        }
        for k in 0..n {
            for j in 0..n {
                dw_h[g][k][j] = h_prev[k] * da[g][j];
                dh_prev[k] += p.w_h[g][k][j] * da[g][j];
            }
        }
    }
    RefGrads {
        dx,
        dh_prev,
        dc_prev,
        dw_x,
        dw_h,
        db: da,
    }
}

/// Depth-2 Nested LSTM step with the default activations (identity outer
/// candidate, tanh inner candidate and hidden). Returns `(h, c, c_inner)`.
pub fn nested_forward(
    outer: &RefGates,
    inner: &RefGates,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    c_inner_prev: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = outer.cell;
    let mut o = vec![0.0; n];
    let mut h_tilde_prev = vec![0.0; n];
    let mut x_tilde = vec![0.0; n];
    for j in 0..n {
        let i = sigmoid(outer.pre(0, x, h_prev, j));
        let f = sigmoid(outer.pre(1, x, h_prev, j));
        let g = outer.pre(2, x, h_prev, j);
        o[j] = sigmoid(outer.pre(3, x, h_prev, j));
        h_tilde_prev[j] = f * c_prev[j];
        x_tilde[j] = i * g;
    }
    let mut c_inner = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut h = vec![0.0; n];
    for j in 0..n {
        let it = sigmoid(inner.pre(0, &x_tilde, &h_tilde_prev, j));
        let ft = sigmoid(inner.pre(1, &x_tilde, &h_tilde_prev, j));
        let gt = inner.pre(2, &x_tilde, &h_tilde_prev, j).tanh();
        let ot = sigmoid(inner.pre(3, &x_tilde, &h_tilde_prev, j));
        c_inner[j] = ft * c_inner_prev[j] + it * gt;
        c[j] = ot * c_inner[j].tanh();
        h[j] = o[j] * c[j].tanh();
    }
    (h, c, c_inner)
}
