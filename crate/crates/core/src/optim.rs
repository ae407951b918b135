//! Gradient clipping and the Adam / RMSProp update rules.

use alloc::vec::Vec;

use crate::model::Model;

/// Anything that exposes its parameters as an ordered list of flat slices.
pub trait ParameterSet {
    fn for_each_slice(&self, f: &mut dyn FnMut(&[f64]));
    fn for_each_slice_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn slice_lens(&self) -> Vec<usize> {
        let mut lens = Vec::new();
        self.for_each_slice(&mut |s| lens.push(s.len()));
        lens
    }
}

impl ParameterSet for Model {
    fn for_each_slice(&self, f: &mut dyn FnMut(&[f64])) {
        self.for_each_tensor(&mut |_, _, _, data| f(data));
    }

    fn for_each_slice_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.for_each_tensor_mut(f);
    }
}

impl ParameterSet for Vec<Vec<f64>> {
    fn for_each_slice(&self, f: &mut dyn FnMut(&[f64])) {
        self.iter().for_each(|s| f(s));
    }

    fn for_each_slice_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.iter_mut().for_each(|s| f(s));
    }
}

fn flatten<P: ParameterSet + ?Sized>(p: &P) -> Vec<f64> {
    let mut out = Vec::new();
    p.for_each_slice(&mut |s| out.extend_from_slice(s));
    out
}

pub fn global_norm<P: ParameterSet + ?Sized>(grads: &P) -> f64 {
    let mut sum = 0.0;
    grads.for_each_slice(&mut |s| sum += s.iter().map(|g| g * g).sum::<f64>());
    libm::sqrt(sum)
}

/// Rescales all gradients by `threshold / norm` when the global L2 norm
/// exceeds `threshold`. Returns the norm before clipping.
pub fn clip_by_global_norm<P: ParameterSet + ?Sized>(grads: &mut P, threshold: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > threshold {
        let scale = threshold / norm;
        grads.for_each_slice_mut(&mut |s| s.iter_mut().for_each(|g| *g *= scale));
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new<P: ParameterSet + ?Sized>(params: &P) -> Self {
        let n = params.slice_lens().iter().sum();
        AdamState {
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub fn adam_step<P: ParameterSet + ?Sized>(params: &mut P, grads: &P, state: &mut AdamState, lr: f64) {
    state.t += 1;
    let g = flatten(grads);
    debug_assert_eq!(g.len(), state.m.len());
    let t = state.t as i32;
    let correction1 = 1.0 - libm::pow(state.beta1, t as f64);
    let correction2 = 1.0 - libm::pow(state.beta2, t as f64);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let (m, v) = (&mut state.m, &mut state.v);
    let mut k = 0;
    params.for_each_slice_mut(&mut |theta| {
        for p in theta.iter_mut() {
            let gk = g[k];
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let m_hat = m[k] / correction1;
            let v_hat = v[k] / correction2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            k += 1;
        }
    });
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub mean_square: Vec<f64>,
    pub decay: f64,
    pub eps: f64,
}

impl RmsPropState {
    pub fn new<P: ParameterSet + ?Sized>(params: &P) -> Self {
        RmsPropState {
            mean_square: alloc::vec![0.0; params.slice_lens().iter().sum()],
            decay: 0.9,
            eps: 1e-8,
        }
    }
}

pub fn rmsprop_step<P: ParameterSet + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut RmsPropState,
    lr: f64,
) {
    let g = flatten(grads);
    debug_assert_eq!(g.len(), state.mean_square.len());
    let (decay, eps) = (state.decay, state.eps);
    let s = &mut state.mean_square;
    let mut k = 0;
    params.for_each_slice_mut(&mut |theta| {
        for p in theta.iter_mut() {
            let gk = g[k];
            s[k] = decay * s[k] + (1.0 - decay) * gk * gk;
            *p -= lr * gk / (libm::sqrt(s[k]) + eps);
            k += 1;
        }
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    RmsProp,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::RmsProp => "rmsprop",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "adam" => Some(OptimizerKind::Adam),
            "rmsprop" => Some(OptimizerKind::RmsProp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Adam(AdamState),
    RmsProp(RmsPropState),
}

impl Optimizer {
    pub fn new<P: ParameterSet + ?Sized>(kind: OptimizerKind, params: &P) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(params)),
            OptimizerKind::RmsProp => Optimizer::RmsProp(RmsPropState::new(params)),
        }
    }

    pub fn step<P: ParameterSet + ?Sized>(&mut self, params: &mut P, grads: &P, lr: f64) {
        match self {
            Optimizer::Adam(state) => adam_step(params, grads, state, lr),
            Optimizer::RmsProp(state) => rmsprop_step(params, grads, state, lr),
        }
    }
}
