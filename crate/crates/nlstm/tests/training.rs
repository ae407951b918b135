use nlstm::training::{run_training, TrainConfig, Trainer};
use nlstm::AppError;
use nlstm_core::analysis::{find_metric, MetricName};
use nlstm_core::data::batch_nonoverlapping;
use nlstm_core::model::{build_model, Model, ModelConfig};
use nlstm_core::numerics::Rng;
use nlstm_core::optim::OptimizerKind;

fn corpus() -> Vec<usize> {
    (0..400).map(|i| [0, 1, 2, 1, 3][i % 5]).collect()
}

fn setup() -> (Model, TrainConfig) {
    let model = build_model(ModelConfig::nested(2, 8, 4, 4), &mut Rng::new(3)).unwrap();
    let config = TrainConfig { batch_size: 2, seq_len: 20, epochs: 4, ..TrainConfig::default() };
    (model, config)
}

fn bits(m: &Model) -> Vec<u64> {
    let mut out = Vec::new();
    m.for_each_tensor(&mut |_, _, _, v| out.extend(v.iter().map(|x| x.to_bits())));
    out
}

#[test]
fn zero_epochs_returns_initial_model() {
    let (model, mut config) = setup();
    config.epochs = 0;
    let train = batch_nonoverlapping(&corpus(), 2, 20).unwrap();
    let outcome = run_training(model.clone(), &train, &train, &config, &mut |_| {}).unwrap();
    assert!(outcome.history.is_empty());
    assert_eq!(outcome.best_epoch, 0);
    assert_eq!(bits(&outcome.best_model), bits(&model));
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    for kind in [OptimizerKind::Adam, OptimizerKind::RmsProp] {
        let (model, mut config) = setup();
        config.learning_rate = 0.0;
        config.optimizer = kind;
        let train = batch_nonoverlapping(&corpus(), 2, 20).unwrap();
        let outcome = run_training(model.clone(), &train, &train, &config, &mut |_| {}).unwrap();
        assert_eq!(bits(&outcome.final_model), bits(&model));
        assert_eq!(outcome.history.len(), 4);
    }
}

#[test]
fn best_epoch_has_minimum_validation_nll() {
    let (model, mut config) = setup();
    config.learning_rate = 0.05;
    config.epochs = 6;
    let tokens = corpus();
    let train = batch_nonoverlapping(&tokens[..300], 2, 20).unwrap();
    let valid = batch_nonoverlapping(&tokens[300..], 2, 20).unwrap();
    let mut seen = 0;
    let outcome = run_training(model, &train, &valid, &config, &mut |_| seen += 1).unwrap();
    assert_eq!(seen, 6);
    let nll: Vec<f64> = outcome
        .history
        .iter()
        .map(|s| find_metric(&s.valid, MetricName::Nll).unwrap())
        .collect();
    let min = nll.iter().cloned().fold(f64::INFINITY, f64::min);
    let first_min = nll.iter().position(|&v| v == min).unwrap() + 1;
    assert_eq!(outcome.best_epoch, first_min);
    let rescored = nlstm_core::analysis::evaluate(&outcome.best_model, &valid, nlstm_core::analysis::Split::Valid, 0).unwrap();
    assert_eq!(find_metric(&rescored, MetricName::Nll).unwrap(), min);
    assert!(nll[nll.len() - 1] < nll[0], "training should reduce validation loss: {nll:?}");
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let (model, config) = setup();
        let train = batch_nonoverlapping(&corpus(), 2, 20).unwrap();
        let outcome = run_training(model, &train, &train, &config, &mut |_| {}).unwrap();
        let records: Vec<_> = outcome.history.iter().map(|s| (s.train.clone(), s.valid.clone())).collect();
        (records, bits(&outcome.best_model))
    };
    assert_eq!(run(), run());
}

#[test]
fn huge_learning_rate_reports_divergence() {
    let (model, mut config) = setup();
    config.learning_rate = 1e300;
    let train = batch_nonoverlapping(&corpus(), 2, 20).unwrap();
    match run_training(model, &train, &train, &config, &mut |_| {}) {
        Err(AppError::Divergence { epoch, batch }) => assert!(epoch >= 1 && batch >= 1),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.best_epoch)),
    }
}

#[test]
fn trainer_step_reduces_loss_on_repeated_batch() {
    let (model, config) = setup();
    let batch = &batch_nonoverlapping(&corpus(), 2, 20).unwrap()[0];
    let mut trainer = Trainer::new(model, TrainConfig { learning_rate: 0.01, ..config });
    let first = trainer.step(batch).unwrap();
    let mut last = first;
    for _ in 0..30 {
        last = trainer.step(batch).unwrap();
    }
    assert!(last.loss < first.loss);
    assert!(first.grad_norm > 0.0);
}

#[test]
fn invalid_hyperparameters_are_config_errors() {
    let (model, config) = setup();
    for bad in [
        TrainConfig { learning_rate: -1.0, ..config },
        TrainConfig { clip_threshold: 0.0, ..config },
        TrainConfig { batch_size: 0, ..config },
    ] {
        assert!(matches!(run_training(model.clone(), &[], &[], &bad, &mut |_| {}), Err(AppError::Config(_))));
    }
}
