mod support;

use nlstm_core::cells::{cell_forward, CellState};
use nlstm_core::model::{
    backward_sequence, build_model, classify_last_step, forward_sequence, loss_and_gradients,
    sequence_loss, Model, ModelConfig, SequenceBatch, SequenceInputs, SequenceTargets,
};
use nlstm_core::numerics::{softmax_xent, Matrix, Rng, Vector};
use support::*;

fn token_batch(rng: &mut Rng, seq_len: usize, lanes: usize, vocab: usize) -> SequenceBatch {
    let n = seq_len * lanes;
    let pick = |rng: &mut Rng| (rng.next_u64() % vocab as u64) as usize;
    let inputs = (0..n).map(|_| pick(rng)).collect();
    let targets = (0..n).map(|_| pick(rng)).collect();
    SequenceBatch::new(seq_len, lanes, SequenceInputs::Tokens(inputs), SequenceTargets::PerStep(targets)).unwrap()
}

fn dense_batch(rng: &mut Rng, seq_len: usize, lanes: usize, dim: usize, classes: usize) -> SequenceBatch {
    let values = random_vec(rng, seq_len * lanes * dim, 1.0);
    let labels = (0..lanes).map(|_| (rng.next_u64() % classes as u64) as usize).collect();
    SequenceBatch::new(seq_len, lanes, SequenceInputs::Dense { dim, values }, SequenceTargets::Final(labels)).unwrap()
}

fn random_model(config: ModelConfig, seed: u64) -> Model {
    let mut rng = Rng::new(seed);
    let mut m = Model::zeros(config).unwrap();
    randomize_model(&mut rng, &mut m, 0.5);
    m
}

#[test]
fn zero_model_is_uniform() {
    let model = Model::zeros(ModelConfig::nested(2, 5, 7, 7)).unwrap();
    let batch = token_batch(&mut Rng::new(1), 4, 3, 7);
    let pass = forward_sequence(&model, &batch, None).unwrap();
    for row in 0..pass.logits.rows() {
        let (nll, _) = softmax_xent(pass.logits.row(row), 0).unwrap();
        assert!((nll - 7f64.ln()).abs() < 1e-14);
    }
}

/// Re-executes a forward pass with `cell_forward` directly on one-hot vectors.
fn manual_logits(model: &Model, batch: &SequenceBatch) -> Vec<Vec<f64>> {
    let config = *model.config();
    let tokens = match &batch.inputs {
        SequenceInputs::Tokens(t) => t.clone(),
        _ => unreachable!(),
    };
    let lanes = batch.batch_size();
    let mut out = vec![Vec::new(); batch.seq_len() * lanes];
    for lane in 0..lanes {
        let mut states: Vec<CellState> = model.layers.iter().map(CellState::zeros).collect();
        for t in 0..batch.seq_len() {
            let mut x = Vector::one_hot(tokens[t * lanes + lane], config.input_size).unwrap();
            for (l, params) in model.layers.iter().enumerate() {
                let (h, next, _) = cell_forward(params, &x, &states[l]).unwrap();
                states[l] = next;
                x = h;
            }
            let mut logits = model.projection_bias.to_vec();
            for (j, logit) in logits.iter_mut().enumerate() {
                for k in 0..config.cell_size {
                    *logit += x[k] * model.projection.get(k, j);
                }
            }
            out[t * lanes + lane] = logits;
        }
    }
    out
}

#[test]
fn forward_matches_stepwise_cell_execution() {
    let mut config = ModelConfig::nested(2, 5, 6, 6);
    config.layers = 2;
    let model = random_model(config, 7);
    let batch = token_batch(&mut Rng::new(8), 4, 2, 6);
    let pass = forward_sequence(&model, &batch, None).unwrap();
    for (row, expected) in manual_logits(&model, &batch).iter().enumerate() {
        for (a, b) in pass.logits.row(row).iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn single_step_single_lane() {
    let model = random_model(ModelConfig::lstm(4, 5, 5), 3);
    let batch = token_batch(&mut Rng::new(4), 1, 1, 5);
    let pass = forward_sequence(&model, &batch, None).unwrap();
    let expected = &manual_logits(&model, &batch)[0];
    assert!(Vector::from(pass.logits.row(0)).max_abs_diff(expected) < 1e-14);
}

#[test]
fn one_hot_inputs_equal_dense_one_hot_vectors() {
    let model = random_model(ModelConfig::stacked(2, 4, 6, 6), 5);
    let batch = token_batch(&mut Rng::new(6), 3, 2, 6);
    let SequenceInputs::Tokens(tokens) = &batch.inputs else { unreachable!() };
    let mut values = Vec::new();
    for &t in tokens {
        values.extend_from_slice(&Vector::one_hot(t, 6).unwrap());
    }
    let dense = SequenceBatch::new(3, 2, SequenceInputs::Dense { dim: 6, values }, batch.targets.clone()).unwrap();
    let a = forward_sequence(&model, &batch, None).unwrap();
    let b = forward_sequence(&model, &dense, None).unwrap();
    assert!(a.logits.max_abs_diff(&b.logits) <= 1e-15);
}

#[test]
fn forward_is_pure() {
    let model = random_model(ModelConfig::nested(3, 4, 5, 5), 9);
    let batch = token_batch(&mut Rng::new(10), 5, 2, 5);
    let a = forward_sequence(&model, &batch, None).unwrap();
    let b = forward_sequence(&model, &batch, None).unwrap();
    assert_eq!(a.logits, b.logits);
    assert_eq!(a.final_states, b.final_states);
}

#[test]
fn backward_is_linear_in_dlogits() {
    let model = random_model(ModelConfig::nested(2, 4, 5, 5), 11);
    let batch = token_batch(&mut Rng::new(12), 3, 2, 5);
    let pass = forward_sequence(&model, &batch, None).unwrap();
    let zero = Matrix::zeros(pass.logits.rows(), pass.logits.cols());
    assert_eq!(backward_sequence(&model, &pass, &zero).unwrap(), model.zeros_like());

    let (_, dlogits) = sequence_loss(&pass, &batch.targets).unwrap();
    let mut doubled = dlogits.clone();
    doubled.as_mut_slice().iter_mut().for_each(|v| *v *= 2.0);
    let g1 = flatten_model(&backward_sequence(&model, &pass, &dlogits).unwrap());
    let g2 = flatten_model(&backward_sequence(&model, &pass, &doubled).unwrap());
    for (a, b) in g1.iter().zip(&g2) {
        assert_eq!(2.0 * a, *b);
    }
}

#[test]
fn backward_rejects_mismatched_caches() {
    let model = random_model(ModelConfig::stacked(2, 3, 4, 4), 1);
    let other = random_model(ModelConfig::lstm(3, 4, 4), 1);
    let batch = token_batch(&mut Rng::new(2), 2, 1, 4);
    let pass = forward_sequence(&other, &batch, None).unwrap();
    let (_, dlogits) = sequence_loss(&pass, &batch.targets).unwrap();
    assert!(backward_sequence(&model, &pass, &dlogits).is_err());
}

pub fn check_sequence_gradients(model: &Model, batch: &SequenceBatch) {
    let (_, grads) = loss_and_gradients(model, batch).unwrap();
    let analytic = flatten_model(&grads);
    let loss = |m: &Model| {
        let pass = forward_sequence(m, batch, None).unwrap();
        sequence_loss(&pass, &batch.targets).unwrap().0
    };
    let eps = 1e-5;
    for (k, &g) in analytic.iter().enumerate() {
        let mut plus = model.clone();
        with_param(|f| plus.for_each_tensor_mut(f), k, |v| *v += eps);
        let mut minus = model.clone();
        with_param(|f| minus.for_each_tensor_mut(f), k, |v| *v -= eps);
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
        assert!(grads_agree(g, fd, 1e-5), "{:?} param {k}: {g} vs {fd}", model.config().architecture);
    }
}

#[test]
fn bptt_matches_finite_differences_for_all_architectures() {
    let configs = [
        ModelConfig::lstm(6, 5, 5),
        ModelConfig::stacked(2, 6, 5, 5),
        ModelConfig::nested(2, 6, 5, 5),
    ];
    for (seed, config) in configs.into_iter().enumerate() {
        let model = random_model(config, 100 + seed as u64);
        let batch = token_batch(&mut Rng::new(200 + seed as u64), 3, 2, 5);
        check_sequence_gradients(&model, &batch);
    }
}

#[test]
fn classification_gradients_match_finite_differences() {
    let model = random_model(ModelConfig::nested(2, 4, 7, 3), 31);
    let batch = dense_batch(&mut Rng::new(32), 4, 2, 7, 3);
    check_sequence_gradients(&model, &batch);
}

#[test]
fn classify_zero_model_is_uniform() {
    let model = Model::zeros(ModelConfig::lstm(5, 49, 10)).unwrap();
    let batch = dense_batch(&mut Rng::new(1), 20, 3, 49, 10);
    let (loss, _) = classify_last_step(&model, &batch).unwrap();
    assert!((loss - 10f64.ln()).abs() < 1e-14);
}

#[test]
fn classify_matches_manual_last_step() {
    let model = build_model(ModelConfig::stacked(2, 5, 8, 4), &mut Rng::new(3)).unwrap();
    let batch = dense_batch(&mut Rng::new(4), 6, 3, 8, 4);
    let (loss, preds) = classify_last_step(&model, &batch).unwrap();
    let pass = forward_sequence(&model, &batch, None).unwrap();
    let SequenceTargets::Final(labels) = &batch.targets else { unreachable!() };
    let mut manual = 0.0;
    for (lane, &label) in labels.iter().enumerate() {
        let logits = pass.logits_at(5, lane);
        manual += softmax_xent(logits, label).unwrap().0;
        let best = (0..4).max_by(|&a, &b| logits[a].partial_cmp(&logits[b]).unwrap()).unwrap();
        assert_eq!(preds[lane], best);
    }
    assert!((loss - manual / 3.0).abs() < 1e-14);
}

#[test]
fn argmax_is_shift_invariant() {
    let mut model = build_model(ModelConfig::lstm(5, 8, 4), &mut Rng::new(5)).unwrap();
    let batch = dense_batch(&mut Rng::new(6), 3, 4, 8, 4);
    let (_, before) = classify_last_step(&model, &batch).unwrap();
    model.projection_bias.iter_mut().for_each(|b| *b += 17.5);
    let (_, after) = classify_last_step(&model, &batch).unwrap();
    assert_eq!(before, after);
}
