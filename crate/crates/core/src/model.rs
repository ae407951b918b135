//! Whole networks: a stack of cells, a linear read-out, sequence forward
//! passes and truncated BPTT over one batch.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::cells::{
    cell_backward_accumulate, cell_forward_input, cell_param_count, CellInput, CellParams,
    CellState, StateGrad, StepCache,
};
use crate::numerics::{orthogonal, softmax_xent, Matrix, Rng, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// Single-layer LSTM.
    Lstm,
    /// Two or more LSTM layers, each feeding the next.
    Stacked,
    /// Nested LSTM cells (optionally several layers of them).
    Nested,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Lstm => "lstm",
            Architecture::Stacked => "stacked",
            Architecture::Nested => "nlstm",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "lstm" => Some(Architecture::Lstm),
            "stacked" => Some(Architecture::Stacked),
            "nlstm" => Some(Architecture::Nested),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Architecture::Lstm => 0,
            Architecture::Stacked => 1,
            Architecture::Nested => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Architecture::Lstm),
            1 => Some(Architecture::Stacked),
            2 => Some(Architecture::Nested),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub layers: usize,
    /// Total memory levels per cell; only meaningful for `Nested`.
    pub nesting_depth: usize,
    pub cell_size: usize,
    pub input_size: usize,
    pub output_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn lstm(cell_size: usize, input_size: usize, output_size: usize) -> Self {
        ModelConfig {
            architecture: Architecture::Lstm,
            layers: 1,
            nesting_depth: 1,
            cell_size,
            input_size,
            output_size,
            seed: 0,
        }
    }

    pub fn stacked(layers: usize, cell_size: usize, input_size: usize, output_size: usize) -> Self {
        ModelConfig {
            architecture: Architecture::Stacked,
            layers,
            ..Self::lstm(cell_size, input_size, output_size)
        }
    }

    pub fn nested(depth: usize, cell_size: usize, input_size: usize, output_size: usize) -> Self {
        ModelConfig {
            architecture: Architecture::Nested,
            nesting_depth: depth,
            ..Self::lstm(cell_size, input_size, output_size)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.cell_size == 0 || self.input_size == 0 || self.output_size == 0 {
            return fail(format!(
                "cell_size, input_size and output_size must be positive (got {}, {}, {})",
                self.cell_size, self.input_size, self.output_size
            ));
        }
        match self.architecture {
            Architecture::Lstm if self.layers != 1 => {
                fail(format!("lstm requires layers = 1, got {}", self.layers))
            }
            Architecture::Stacked if self.layers < 2 => {
                fail(format!("stacked requires layers >= 2, got {}", self.layers))
            }
            Architecture::Nested if self.nesting_depth < 2 => fail(format!(
                "nlstm requires nesting_depth >= 2, got {}",
                self.nesting_depth
            )),
            _ if self.layers == 0 => fail(String::from("layers must be positive")),
            _ => Ok(()),
        }
    }

    /// Memory levels per cell: 1 for LSTM layers, `nesting_depth` for nested ones.
    pub fn memory_depth(&self) -> usize {
        match self.architecture {
            Architecture::Nested => self.nesting_depth,
            _ => 1,
        }
    }

    fn layer_input_size(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_size
        } else {
            self.cell_size
        }
    }

    /// Closed-form parameter count, cells plus the biased read-out.
    pub fn param_count(&self) -> usize {
        let cells: usize = (0..self.layers)
            .map(|l| cell_param_count(self.layer_input_size(l), self.cell_size, self.memory_depth()))
            .sum();
        cells + self.cell_size * self.output_size + self.output_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    pub layers: Vec<CellParams>,
    /// `cell_size x output_size`.
    pub projection: Matrix,
    pub projection_bias: Vector,
}

/// Per-lane recurrent state, one entry per layer.
pub type LaneState = Vec<CellState>;

impl Model {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.layers)
            .map(|l| CellParams::zeros(config.layer_input_size(l), config.cell_size, config.memory_depth()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            config,
            layers,
            projection: Matrix::zeros(config.cell_size, config.output_size),
            projection_bias: Vector::zeros(config.output_size),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.for_each_tensor_mut(&mut |t| t.iter_mut().for_each(|v| *v = 0.0));
        out
    }

    pub fn zero_state(&self) -> LaneState {
        self.layers.iter().map(CellState::zeros).collect()
    }

    /// Visits every tensor as `(name, rows, cols, data)` in checkpoint order.
    pub fn for_each_tensor(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
        for (l, layer) in self.layers.iter().enumerate() {
            let prefix = format!("layer{l}.");
            layer.for_each_tensor(&mut |name, r, c, data| f(&format!("{prefix}{name}"), r, c, data));
        }
        let (r, c) = self.projection.shape();
        f("projection.w", r, c, self.projection.as_slice());
        f("projection.b", 1, self.projection_bias.len(), &self.projection_bias);
    }

    pub fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for layer in &mut self.layers {
            layer.for_each_tensor_mut(f);
        }
        f(self.projection.as_mut_slice());
        f(&mut self.projection_bias);
    }

    pub fn is_finite(&self) -> bool {
        let mut finite = true;
        self.for_each_tensor(&mut |_, _, _, data| finite &= data.iter().all(|v| v.is_finite()));
        finite
    }
}

/// Builds a model: first-layer input weights Glorot uniform, every other
/// weight matrix (semi-)orthogonal, all biases zero.
pub fn build_model(config: ModelConfig, rng: &mut Rng) -> Result<Model> {
    let mut model = Model::zeros(config)?;
    for (l, layer) in model.layers.iter_mut().enumerate() {
        *layer = CellParams::initialized(
            rng,
            config.layer_input_size(l),
            config.cell_size,
            config.memory_depth(),
            l == 0,
        )?;
    }
    model.projection = orthogonal(rng, config.cell_size, config.output_size)?;
    Ok(model)
}

/// Exact number of weight and bias entries.
pub fn count_parameters(model: &Model) -> usize {
    let mut n = 0;
    model.for_each_tensor(&mut |_, _, _, data| n += data.len());
    n
}

/// Time-major inputs: entry `t * batch_size + lane`.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceInputs {
    Tokens(Vec<usize>),
    /// `values[(t * batch_size + lane) * dim ..][..dim]`.
    Dense { dim: usize, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SequenceTargets {
    /// Next-token target per step, time-major like the inputs.
    PerStep(Vec<usize>),
    /// One class per lane, scored on the final step.
    Final(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    seq_len: usize,
    batch_size: usize,
    pub inputs: SequenceInputs,
    pub targets: SequenceTargets,
}

impl SequenceBatch {
    pub fn new(
        seq_len: usize,
        batch_size: usize,
        inputs: SequenceInputs,
        targets: SequenceTargets,
    ) -> Result<Self> {
        let steps = seq_len * batch_size;
        let inputs_ok = match &inputs {
            SequenceInputs::Tokens(t) => t.len() == steps,
            SequenceInputs::Dense { dim, values } => *dim > 0 && values.len() == steps * dim,
        };
        let targets_ok = match &targets {
            SequenceTargets::PerStep(t) => t.len() == steps,
            SequenceTargets::Final(t) => t.len() == batch_size,
        };
        if seq_len == 0 || batch_size == 0 || !inputs_ok || !targets_ok {
            return Err(Error::Data(format!(
                "batch of {seq_len} steps x {batch_size} lanes has inconsistent input/target lengths"
            )));
        }
        Ok(SequenceBatch {
            seq_len,
            batch_size,
            inputs,
            targets,
        })
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn input(&self, t: usize, lane: usize, input_size: usize) -> CellInput<'_> {
        let k = t * self.batch_size + lane;
        match &self.inputs {
            SequenceInputs::Tokens(tokens) => CellInput::OneHot {
                index: tokens[k],
                len: input_size,
            },
            SequenceInputs::Dense { dim, values } => CellInput::Dense(&values[k * dim..(k + 1) * dim]),
        }
    }

    fn check(&self, config: &ModelConfig) -> Result<()> {
        match &self.inputs {
            SequenceInputs::Tokens(tokens) => {
                if let Some(&bad) = tokens.iter().find(|&&t| t >= config.input_size) {
                    return Err(Error::Index {
                        index: bad,
                        len: config.input_size,
                    });
                }
            }
            SequenceInputs::Dense { dim, .. } => {
                if *dim != config.input_size {
                    return Err(Error::shape(
                        "forward_sequence",
                        (1, *dim),
                        (config.input_size, config.cell_size),
                    ));
                }
            }
        }
        let targets = match &self.targets {
            SequenceTargets::PerStep(t) | SequenceTargets::Final(t) => t,
        };
        if let Some(&bad) = targets.iter().find(|&&t| t >= config.output_size) {
            return Err(Error::Index {
                index: bad,
                len: config.output_size,
            });
        }
        Ok(())
    }
}

/// Result of [`forward_sequence`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    seq_len: usize,
    batch_size: usize,
    /// Row `t * batch_size + lane`.
    pub logits: Matrix,
    pub final_states: Vec<LaneState>,
    /// `caches[t][lane][layer]`.
    pub caches: Vec<Vec<Vec<StepCache>>>,
}

impl ForwardPass {
    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn logits_at(&self, t: usize, lane: usize) -> &[f64] {
        self.logits.row(t * self.batch_size + lane)
    }
}

/// Runs every lane through every layer for every step. With `state0 = None`
/// all lanes start from zero state.
pub fn forward_sequence(
    model: &Model,
    batch: &SequenceBatch,
    state0: Option<&[LaneState]>,
) -> Result<ForwardPass> {
    let config = model.config;
    batch.check(&config)?;
    let (seq_len, lanes) = (batch.seq_len, batch.batch_size);
    let mut states: Vec<LaneState> = match state0 {
        Some(s) if s.len() == lanes => s.to_vec(),
        Some(s) => {
            return Err(Error::shape("forward_sequence", (s.len(), 1), (lanes, 1)));
        }
        None => vec![model.zero_state(); lanes],
    };
    let mut logits = Matrix::zeros(seq_len * lanes, config.output_size);
    let mut caches = Vec::with_capacity(seq_len);
    for t in 0..seq_len {
        let mut step_caches = Vec::with_capacity(lanes);
        for (lane, state) in states.iter_mut().enumerate() {
            if state.len() != model.layers.len() {
                return Err(Error::Consistency(format!(
                    "lane state has {} layers, model has {}",
                    state.len(),
                    model.layers.len()
                )));
            }
            let mut layer_caches = Vec::with_capacity(model.layers.len());
            let mut below: Vector = Vector::default();
            for (l, params) in model.layers.iter().enumerate() {
                let input = if l == 0 {
                    batch.input(t, lane, config.input_size)
                } else {
                    CellInput::Dense(&below)
                };
                let (h, next, cache) = cell_forward_input(params, input, &state[l])?;
                state[l] = next;
                layer_caches.push(cache);
                below = h;
            }
            let row = logits.row_mut(t * lanes + lane);
            row.copy_from_slice(&model.projection_bias);
            model.projection.vecmat_acc(&below, row);
            step_caches.push(layer_caches);
        }
        caches.push(step_caches);
    }
    Ok(ForwardPass {
        seq_len,
        batch_size: lanes,
        logits,
        final_states: states,
        caches,
    })
}

/// Mean NLL over every scored position and its gradient on the logits.
///
/// `PerStep` targets score all `seq_len * batch` positions; `Final` targets
/// score only the last step of each lane.
pub fn sequence_loss(pass: &ForwardPass, targets: &SequenceTargets) -> Result<(f64, Matrix)> {
    let (seq_len, lanes) = (pass.seq_len, pass.batch_size);
    let mut dlogits = Matrix::zeros(pass.logits.rows(), pass.logits.cols());
    let scored: Vec<(usize, usize)> = match targets {
        SequenceTargets::PerStep(t) if t.len() == seq_len * lanes => {
            t.iter().enumerate().map(|(k, &target)| (k, target)).collect()
        }
        SequenceTargets::Final(t) if t.len() == lanes => t
            .iter()
            .enumerate()
            .map(|(lane, &target)| ((seq_len - 1) * lanes + lane, target))
            .collect(),
        _ => {
            return Err(Error::Consistency(String::from(
                "targets do not match the forward pass shape",
            )))
        }
    };
    let scale = 1.0 / scored.len() as f64;
    let mut total = 0.0;
    for (row, target) in scored {
        let (loss, grad) = softmax_xent(pass.logits.row(row), target)?;
        total += loss;
        for (d, g) in dlogits.row_mut(row).iter_mut().zip(grad.iter()) {
            *d = g * scale;
        }
    }
    Ok((total * scale, dlogits))
}

/// Truncated BPTT over one forward pass. `dlogits` is the loss gradient on
/// every logit row; the returned model holds the parameter gradients.
pub fn backward_sequence(model: &Model, pass: &ForwardPass, dlogits: &Matrix) -> Result<Model> {
    if dlogits.shape() != pass.logits.shape() {
        return Err(Error::shape("backward_sequence", dlogits.shape(), pass.logits.shape()));
    }
    if pass.caches.len() != pass.seq_len
        || pass.caches.iter().any(|step| {
            step.len() != pass.batch_size || step.iter().any(|lane| lane.len() != model.layers.len())
        })
    {
        return Err(Error::Consistency(String::from(
            "forward caches do not match the model's layer count",
        )));
    }
    let lanes = pass.batch_size;
    let top = model.layers.len() - 1;
    let mut grads = model.zeros_like();
    let mut carry: Vec<Vec<StateGrad>> = (0..lanes)
        .map(|_| model.layers.iter().map(StateGrad::zeros).collect())
        .collect();
    for t in (0..pass.seq_len).rev() {
        for (lane, lane_carry) in carry.iter_mut().enumerate() {
            let caches = &pass.caches[t][lane];
            let dlogit = dlogits.row(t * lanes + lane);
            let h_top = &caches[top].h;
            grads.projection.add_outer(h_top, dlogit);
            grads.projection_bias.add_assign(dlogit);
            let mut dh = Vector::zeros(model.config.cell_size);
            model.projection.vecmat_t_acc(dlogit, &mut dh);
            for l in (0..=top).rev() {
                let (dx, dstate) = cell_backward_accumulate(
                    &model.layers[l],
                    &caches[l],
                    &dh,
                    &lane_carry[l],
                    &mut grads.layers[l],
                )?;
                lane_carry[l] = dstate;
                dh = dx;
            }
        }
    }
    Ok(grads)
}

/// Mean NLL of a batch and its parameter gradients, from zero initial state.
pub fn loss_and_gradients(model: &Model, batch: &SequenceBatch) -> Result<(f64, Model)> {
    let pass = forward_sequence(model, batch, None)?;
    let (loss, dlogits) = sequence_loss(&pass, &batch.targets)?;
    let grads = backward_sequence(model, &pass, &dlogits)?;
    Ok((loss, grads))
}

/// Mean NLL of the final step's logits and the argmax prediction per lane.
pub fn classify_last_step(model: &Model, batch: &SequenceBatch) -> Result<(f64, Vec<usize>)> {
    let pass = forward_sequence(model, batch, None)?;
    let labels = match &batch.targets {
        SequenceTargets::Final(labels) => labels,
        SequenceTargets::PerStep(_) => {
            return Err(Error::Data(String::from(
                "classification needs one label per lane",
            )))
        }
    };
    let last = pass.seq_len - 1;
    let mut total = 0.0;
    let mut predictions = Vec::with_capacity(labels.len());
    for (lane, &label) in labels.iter().enumerate() {
        let logits = pass.logits_at(last, lane);
        total += softmax_xent(logits, label)?.0;
        predictions.push(argmax(logits));
    }
    Ok((total / labels.len() as f64, predictions))
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ModelConfig::lstm(4, 3, 3).validate().is_ok());
        let mut bad = ModelConfig::lstm(4, 3, 3);
        bad.layers = 2;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        assert!(ModelConfig::stacked(1, 4, 3, 3).validate().is_err());
        assert!(ModelConfig::nested(1, 4, 3, 3).validate().is_err());
        assert!(ModelConfig::nested(2, 0, 3, 3).validate().is_err());
    }

    #[test]
    fn paper_table_counts() {
        assert_eq!(ModelConfig::lstm(1000, 50, 50).param_count(), 4_254_050);
        assert_eq!(ModelConfig::stacked(2, 75, 49, 10).param_count(), 83_560);
        assert_eq!(ModelConfig::nested(2, 600, 50, 50).param_count(), 4_474_850);
        assert_eq!(ModelConfig::nested(2, 1200, 27, 27).param_count(), 17_451_627);
        assert_eq!(ModelConfig::lstm(2000, 27, 27).param_count(), 16_278_027);
        assert_eq!(ModelConfig::stacked(3, 950, 27, 27).param_count(), 18_189_677);
        assert_eq!(ModelConfig::lstm(100, 49, 10).param_count(), 61_010);
    }

    #[test]
    fn closed_form_matches_enumeration() {
        for config in [
            ModelConfig::lstm(7, 5, 3),
            ModelConfig::stacked(3, 6, 4, 2),
            ModelConfig::nested(3, 5, 9, 9),
        ] {
            let model = Model::zeros(config).unwrap();
            assert_eq!(count_parameters(&model), config.param_count());
        }
    }

    #[test]
    fn build_is_deterministic() {
        let config = ModelConfig::nested(2, 6, 5, 5).with_seed(3);
        let a = build_model(config, &mut Rng::new(3)).unwrap();
        let b = build_model(config, &mut Rng::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.layers[0].input_gate.b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_shape_validation() {
        let err = SequenceBatch::new(
            3,
            2,
            SequenceInputs::Tokens(vec![0; 5]),
            SequenceTargets::PerStep(vec![0; 6]),
        );
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn out_of_range_token_is_rejected() {
        let model = Model::zeros(ModelConfig::lstm(3, 4, 4)).unwrap();
        let batch = SequenceBatch::new(
            1,
            1,
            SequenceInputs::Tokens(vec![4]),
            SequenceTargets::PerStep(vec![0]),
        )
        .unwrap();
        assert!(matches!(
            forward_sequence(&model, &batch, None),
            Err(Error::Index { index: 4, len: 4 })
        ));
    }
}
