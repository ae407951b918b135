//! Single-step LSTM and Nested LSTM cells.
//!
//! A cell computes its four gates from `x W_x + h_prev W_h + b`, forms the
//! forgotten memory `f * c_prev` and the written memory `i * g`, and hands
//! both to its [`MemoryFunction`]. `Addition` sums them (the classic LSTM
//! update). `Nested` feeds them to an inner cell as its input and previous
//! hidden state and takes the inner hidden output as the new outer memory.
//! The inner cell keeps only its own memory between steps; its previous
//! hidden state is rebuilt each step from the outer forget gate.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;

use crate::numerics::{glorot_uniform, orthogonal, Activation, Matrix, Rng, Vector};
use crate::{Error, Result};

/// Weights and bias of one gate: `x W_x + h W_h + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateBlock {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Vector,
}

impl GateBlock {
    pub fn zeros(input_size: usize, cell_size: usize) -> Self {
        GateBlock {
            w_x: Matrix::zeros(input_size, cell_size),
            w_h: Matrix::zeros(cell_size, cell_size),
            b: Vector::zeros(cell_size),
        }
    }

    fn preactivation(&self, x: CellInput<'_>, h_prev: &[f64]) -> Vector {
        let mut out = self.b.clone();
        match x {
            CellInput::Dense(x) => self.w_x.vecmat_acc(x, &mut out),
            CellInput::OneHot { index, .. } => out.add_assign(self.w_x.row(index)),
        }
        self.w_h.vecmat_acc(h_prev, &mut out);
        out
    }
}

/// Activation for every slot of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellActivations {
    pub input: Activation,
    pub forget: Activation,
    /// Applied to the candidate `x W_xc + h W_hc + b_c`.
    pub candidate: Activation,
    pub output: Activation,
    /// Applied to the memory before the output gate.
    pub hidden: Activation,
}

impl CellActivations {
    pub const LSTM: CellActivations = CellActivations {
        input: Activation::Sigmoid,
        forget: Activation::Sigmoid,
        candidate: Activation::Tanh,
        output: Activation::Sigmoid,
        hidden: Activation::Tanh,
    };

    /// Outer cell of a Nested LSTM: identity candidate, everything else as LSTM.
    pub const NESTED_OUTER: CellActivations = CellActivations {
        candidate: Activation::Identity,
        ..CellActivations::LSTM
    };
}

impl Default for CellActivations {
    fn default() -> Self {
        CellActivations::LSTM
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MemoryFunction {
    Addition,
    /// Inner cell with `input_size == cell_size` of the enclosing cell.
    Nested(Box<CellParams>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    input_size: usize,
    cell_size: usize,
    pub input_gate: GateBlock,
    pub forget_gate: GateBlock,
    pub cell_gate: GateBlock,
    pub output_gate: GateBlock,
    pub activations: CellActivations,
    pub memory: MemoryFunction,
}

impl CellParams {
    /// Zero-initialized cell with `depth` memory levels (1 = plain LSTM).
    ///
    /// A nested outer cell gets [`CellActivations::NESTED_OUTER`]; every
    /// inner level and every plain cell gets [`CellActivations::LSTM`].
    pub fn zeros(input_size: usize, cell_size: usize, depth: usize) -> Result<Self> {
        check_sizes(input_size, cell_size, depth)?;
        Ok(Self::zeros_unchecked(input_size, cell_size, depth, true))
    }

    fn zeros_unchecked(input_size: usize, cell_size: usize, depth: usize, outermost: bool) -> Self {
        let memory = if depth > 1 {
            MemoryFunction::Nested(Box::new(Self::zeros_unchecked(
                cell_size,
                cell_size,
                depth - 1,
                false,
            )))
        } else {
            MemoryFunction::Addition
        };
        let activations = if outermost && depth > 1 {
            CellActivations::NESTED_OUTER
        } else {
            CellActivations::LSTM
        };
        CellParams {
            input_size,
            cell_size,
            input_gate: GateBlock::zeros(input_size, cell_size),
            forget_gate: GateBlock::zeros(input_size, cell_size),
            cell_gate: GateBlock::zeros(input_size, cell_size),
            output_gate: GateBlock::zeros(input_size, cell_size),
            activations,
            memory,
        }
    }

    /// Randomly initialized cell. Input weights are Glorot uniform when
    /// `glorot_input` is set and orthogonal otherwise; recurrent and inner
    /// weights are orthogonal; biases are zero.
    pub fn initialized(
        rng: &mut Rng,
        input_size: usize,
        cell_size: usize,
        depth: usize,
        glorot_input: bool,
    ) -> Result<Self> {
        let mut params = Self::zeros(input_size, cell_size, depth)?;
        params.initialize(rng, glorot_input)?;
        Ok(params)
    }

    fn initialize(&mut self, rng: &mut Rng, glorot_input: bool) -> Result<()> {
        let (input_size, cell_size) = (self.input_size, self.cell_size);
        for gate in self.gates_mut() {
            gate.w_x = if glorot_input {
                glorot_uniform(rng, input_size, cell_size)?
            } else {
                orthogonal(rng, input_size, cell_size)?
            };
            gate.w_h = orthogonal(rng, cell_size, cell_size)?;
        }
        if let MemoryFunction::Nested(inner) = &mut self.memory {
            inner.initialize(rng, false)?;
        }
        Ok(())
    }

    /// Same structure and activations with every weight zeroed.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.for_each_tensor_mut(&mut |t| t.iter_mut().for_each(|v| *v = 0.0));
        out
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn cell_size(&self) -> usize {
        self.cell_size
    }

    /// Number of memory levels, 1 for a plain LSTM cell.
    pub fn depth(&self) -> usize {
        match &self.memory {
            MemoryFunction::Addition => 1,
            MemoryFunction::Nested(inner) => 1 + inner.depth(),
        }
    }

    pub fn inner(&self) -> Option<&CellParams> {
        match &self.memory {
            MemoryFunction::Addition => None,
            MemoryFunction::Nested(inner) => Some(inner),
        }
    }

    pub fn inner_mut(&mut self) -> Option<&mut CellParams> {
        match &mut self.memory {
            MemoryFunction::Addition => None,
            MemoryFunction::Nested(inner) => Some(inner),
        }
    }

    pub fn gates(&self) -> [&GateBlock; 4] {
        [&self.input_gate, &self.forget_gate, &self.cell_gate, &self.output_gate]
    }

    pub fn gates_mut(&mut self) -> [&mut GateBlock; 4] {
        [
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.cell_gate,
            &mut self.output_gate,
        ]
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(&mut |_, _, _, data| n += data.len());
        n
    }

    /// Visits `(name, rows, cols, data)` for every tensor in a fixed order.
    /// Inner cells are prefixed with `inner.`.
    pub fn for_each_tensor(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
        self.visit_named("", f);
    }

    fn visit_named(&self, prefix: &str, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
        for (gate_name, gate) in GATE_NAMES.iter().zip(self.gates()) {
            let (r, c) = gate.w_x.shape();
            f(&format!("{prefix}{gate_name}.w_x"), r, c, gate.w_x.as_slice());
            let (r, c) = gate.w_h.shape();
            f(&format!("{prefix}{gate_name}.w_h"), r, c, gate.w_h.as_slice());
            f(&format!("{prefix}{gate_name}.b"), 1, gate.b.len(), &gate.b);
        }
        if let MemoryFunction::Nested(inner) = &self.memory {
            inner.visit_named(&format!("{prefix}inner."), f);
        }
    }

    /// Mutable twin of [`for_each_tensor`](Self::for_each_tensor), same order.
    pub fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for gate in self.gates_mut() {
            f(gate.w_x.as_mut_slice());
            f(gate.w_h.as_mut_slice());
            f(&mut gate.b);
        }
        if let MemoryFunction::Nested(inner) = &mut self.memory {
            inner.for_each_tensor_mut(f);
        }
    }
}

const GATE_NAMES: [&str; 4] = ["input_gate", "forget_gate", "cell_gate", "output_gate"];

fn check_sizes(input_size: usize, cell_size: usize, depth: usize) -> Result<()> {
    if input_size == 0 || cell_size == 0 || depth == 0 {
        return Err(Error::Config(format!(
            "cell needs positive sizes, got input {input_size}, cell {cell_size}, depth {depth}"
        )));
    }
    Ok(())
}

/// Parameter count of one cell: the outer gate-set plus `depth - 1` inner
/// gate-sets whose input and hidden sizes both equal `cell_size`.
pub fn cell_param_count(input_size: usize, cell_size: usize, depth: usize) -> usize {
    let outer = 4 * (input_size + cell_size + 1) * cell_size;
    let inner = 4 * (2 * cell_size + 1) * cell_size;
    outer + depth.saturating_sub(1) * inner
}

/// Recurrent state of one cell. `inner` mirrors the memory nesting.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vector,
    pub c: Vector,
    pub inner: Option<Box<CellState>>,
}

impl CellState {
    pub fn zeros(params: &CellParams) -> Self {
        CellState {
            h: Vector::zeros(params.cell_size),
            c: Vector::zeros(params.cell_size),
            inner: params.inner().map(|p| Box::new(CellState::zeros(p))),
        }
    }

    fn check(&self, params: &CellParams) -> Result<()> {
        let n = params.cell_size;
        if self.h.len() != n || self.c.len() != n {
            return Err(Error::shape(
                "CellState",
                (self.h.len(), self.c.len()),
                (n, n),
            ));
        }
        match (&self.inner, params.inner()) {
            (None, None) => Ok(()),
            (Some(state), Some(inner)) => state.check(inner),
            _ => Err(Error::Consistency(String::from(
                "state nesting does not match the memory function",
            ))),
        }
    }
}

/// Gradient with respect to a [`CellState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrad {
    pub h: Vector,
    pub c: Vector,
    pub inner: Option<Box<StateGrad>>,
}

impl StateGrad {
    pub fn zeros(params: &CellParams) -> Self {
        StateGrad {
            h: Vector::zeros(params.cell_size),
            c: Vector::zeros(params.cell_size),
            inner: params.inner().map(|p| Box::new(StateGrad::zeros(p))),
        }
    }
}

/// Input to a cell: a dense vector or a one-hot index into `len` classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellInput<'a> {
    Dense(&'a [f64]),
    OneHot { index: usize, len: usize },
}

impl CellInput<'_> {
    pub fn len(&self) -> usize {
        match self {
            CellInput::Dense(x) => x.len(),
            CellInput::OneHot { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_owned(self) -> CachedInput {
        match self {
            CellInput::Dense(x) => CachedInput::Dense(Vector::from(x)),
            CellInput::OneHot { index, len } => CachedInput::OneHot { index, len },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CachedInput {
    Dense(Vector),
    OneHot { index: usize, len: usize },
}

impl CachedInput {
    pub fn len(&self) -> usize {
        match self {
            CachedInput::Dense(x) => x.len(),
            CachedInput::OneHot { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything one forward step produced that the backward step needs.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub x: CachedInput,
    pub h_prev: Vector,
    pub c_prev: Vector,
    pub i: Vector,
    pub f: Vector,
    /// Candidate after its activation.
    pub g: Vector,
    pub o: Vector,
    /// `f * c_prev`, the memory function's previous hidden state.
    pub h_tilde_prev: Vector,
    /// `i * g`, the memory function's input.
    pub x_tilde: Vector,
    pub c: Vector,
    /// Hidden activation of `c`.
    pub hidden_act: Vector,
    pub h: Vector,
    pub inner: Option<Box<StepCache>>,
}

/// Advances one cell by one step on a dense input. Returns the new hidden
/// output, the full new state and the cache for [`cell_backward`].
pub fn cell_forward(
    params: &CellParams,
    x: &[f64],
    state: &CellState,
) -> Result<(Vector, CellState, StepCache)> {
    cell_forward_input(params, CellInput::Dense(x), state)
}

pub fn cell_forward_input(
    params: &CellParams,
    x: CellInput<'_>,
    state: &CellState,
) -> Result<(Vector, CellState, StepCache)> {
    state.check(params)?;
    let (new_state, cache) = step(params, x, &state.h, &state.c, state.inner.as_deref())?;
    Ok((new_state.h.clone(), new_state, cache))
}

fn step(
    params: &CellParams,
    x: CellInput<'_>,
    h_prev: &[f64],
    c_prev: &[f64],
    inner_state: Option<&CellState>,
) -> Result<(CellState, StepCache)> {
    if x.len() != params.input_size {
        return Err(Error::shape(
            "cell_forward",
            (1, x.len()),
            (params.input_size, params.cell_size),
        ));
    }
    if let CellInput::OneHot { index, len } = x {
        if index >= len {
            return Err(Error::Index { index, len });
        }
    }
    let acts = params.activations;
    let gate = |block: &GateBlock, act: Activation| -> Vector {
        let mut a = block.preactivation(x, h_prev);
        a.iter_mut().for_each(|v| *v = act.apply(*v));
        a
    };
    let i = gate(&params.input_gate, acts.input);
    let f = gate(&params.forget_gate, acts.forget);
    let g = gate(&params.cell_gate, acts.candidate);
    let o = gate(&params.output_gate, acts.output);

    let h_tilde_prev = f.hadamard(c_prev);
    let x_tilde = i.hadamard(&g);

    let (c, inner_new, inner_cache) = match (&params.memory, inner_state) {
        (MemoryFunction::Addition, None) => {
            let c: Vector = h_tilde_prev.iter().zip(x_tilde.iter()).map(|(a, b)| a + b).collect();
            (c, None, None)
        }
        (MemoryFunction::Nested(inner), Some(state)) => {
            let (new_inner, cache) = step(
                inner,
                CellInput::Dense(&x_tilde),
                &h_tilde_prev,
                &state.c,
                state.inner.as_deref(),
            )?;
            (new_inner.h.clone(), Some(Box::new(new_inner)), Some(Box::new(cache)))
        }
        _ => {
            return Err(Error::Consistency(String::from(
                "state nesting does not match the memory function",
            )))
        }
    };

    let hidden_act: Vector = c.iter().map(|&v| acts.hidden.apply(v)).collect();
    let h = o.hadamard(&hidden_act);
    let state = CellState {
        h: h.clone(),
        c: c.clone(),
        inner: inner_new,
    };
    let cache = StepCache {
        x: x.to_owned(),
        h_prev: Vector::from(h_prev),
        c_prev: Vector::from(c_prev),
        i,
        f,
        g,
        o,
        h_tilde_prev,
        x_tilde,
        c,
        hidden_act,
        h,
        inner: inner_cache,
    };
    Ok((state, cache))
}

/// Reverse step: given the loss gradient `dh` on this step's hidden output
/// and `dstate_next` flowing back from the following step, returns the input
/// gradient, the gradient on the previous state and the parameter gradients.
pub fn cell_backward(
    params: &CellParams,
    cache: &StepCache,
    dh: &[f64],
    dstate_next: &StateGrad,
) -> Result<(Vector, StateGrad, CellParams)> {
    let mut grads = params.zeros_like();
    let (dx, dstate_prev) = cell_backward_accumulate(params, cache, dh, dstate_next, &mut grads)?;
    Ok((dx, dstate_prev, grads))
}

/// Like [`cell_backward`] but adds parameter gradients into `grads`.
///
/// For one-hot inputs the returned input gradient is empty.
pub fn cell_backward_accumulate(
    params: &CellParams,
    cache: &StepCache,
    dh: &[f64],
    dstate_next: &StateGrad,
    grads: &mut CellParams,
) -> Result<(Vector, StateGrad)> {
    let n = params.cell_size;
    if dh.len() != n || dstate_next.h.len() != n {
        return Err(Error::shape("cell_backward", (1, dh.len()), (1, n)));
    }
    let mut dh_total = Vector::from(dh);
    dh_total.add_assign(&dstate_next.h);
    let back = step_backward(
        params,
        cache,
        &dh_total,
        &dstate_next.c,
        dstate_next.inner.as_deref(),
        grads,
    )?;
    Ok((
        back.dx,
        StateGrad {
            h: back.dh_prev,
            c: back.dc_prev,
            inner: back.dinner_prev.map(Box::new),
        },
    ))
}

struct StepGrad {
    dx: Vector,
    dh_prev: Vector,
    dc_prev: Vector,
    dinner_prev: Option<StateGrad>,
}

fn step_backward(
    params: &CellParams,
    cache: &StepCache,
    dh: &[f64],
    dc_next: &[f64],
    dinner_next: Option<&StateGrad>,
    grads: &mut CellParams,
) -> Result<StepGrad> {
    let n = params.cell_size;
    if cache.x.len() != params.input_size || cache.c.len() != n || cache.h_prev.len() != n {
        return Err(Error::Consistency(format!(
            "cache built for input {} / cell {} used with params {} / {}",
            cache.x.len(),
            cache.c.len(),
            params.input_size,
            n
        )));
    }
    if dc_next.len() != n {
        return Err(Error::shape("cell_backward", (1, dc_next.len()), (1, n)));
    }
    let acts = params.activations;

    // h = o * act_h(c)
    let mut d_o = Vector::zeros(n);
    let mut dc = Vector::from(dc_next);
    for k in 0..n {
        d_o[k] = dh[k] * cache.hidden_act[k];
        dc[k] += dh[k] * cache.o[k] * acts.hidden.derivative_from_output(cache.hidden_act[k]);
    }

    let (d_h_tilde_prev, d_x_tilde, dinner_prev) =
        match (&params.memory, &cache.inner, grads.inner_mut()) {
            (MemoryFunction::Addition, None, None) => (dc.clone(), dc, None),
            (MemoryFunction::Nested(inner), Some(inner_cache), Some(inner_grads)) => {
                let zeros;
                let (dc_inner_next, deeper) = match dinner_next {
                    Some(g) => (&g.c[..], g.inner.as_deref()),
                    None => {
                        zeros = Vector::zeros(n);
                        (&zeros[..], None)
                    }
                };
                let back =
                    step_backward(inner, inner_cache, &dc, dc_inner_next, deeper, inner_grads)?;
                let dinner = StateGrad {
                    h: Vector::zeros(n),
                    c: back.dc_prev,
                    inner: back.dinner_prev.map(Box::new),
                };
                (back.dh_prev, back.dx, Some(dinner))
            }
            _ => {
                return Err(Error::Consistency(String::from(
                    "cache nesting does not match the memory function",
                )))
            }
        };

    // h_tilde_prev = f * c_prev, x_tilde = i * g
    let mut da_i = Vector::zeros(n);
    let mut da_f = Vector::zeros(n);
    let mut da_g = Vector::zeros(n);
    let mut da_o = Vector::zeros(n);
    let mut dc_prev = Vector::zeros(n);
    for k in 0..n {
        let df = d_h_tilde_prev[k] * cache.c_prev[k];
        dc_prev[k] = d_h_tilde_prev[k] * cache.f[k];
        let di = d_x_tilde[k] * cache.g[k];
        let dg = d_x_tilde[k] * cache.i[k];
        da_i[k] = di * acts.input.derivative_from_output(cache.i[k]);
        da_f[k] = df * acts.forget.derivative_from_output(cache.f[k]);
        da_g[k] = dg * acts.candidate.derivative_from_output(cache.g[k]);
        da_o[k] = d_o[k] * acts.output.derivative_from_output(cache.o[k]);
    }

    let mut dx = match &cache.x {
        CachedInput::Dense(x) => Vector::zeros(x.len()),
        CachedInput::OneHot { .. } => Vector::default(),
    };
    let mut dh_prev = Vector::zeros(n);
    let pre_grads = [&da_i, &da_f, &da_g, &da_o];
    for ((gate, grad), da) in params.gates().into_iter().zip(grads.gates_mut()).zip(pre_grads) {
        match &cache.x {
            CachedInput::Dense(x) => {
                grad.w_x.add_outer(x, da);
                gate.w_x.vecmat_t_acc(da, &mut dx);
            }
            CachedInput::OneHot { index, .. } => {
                for (w, d) in grad.w_x.row_mut(*index).iter_mut().zip(da.iter()) {
                    *w += d;
                }
            }
        }
        grad.w_h.add_outer(&cache.h_prev, da);
        grad.b.add_assign(da);
        gate.w_h.vecmat_t_acc(da, &mut dh_prev);
    }

    Ok(StepGrad {
        dx,
        dh_prev,
        dc_prev,
        dinner_prev,
    })
}
