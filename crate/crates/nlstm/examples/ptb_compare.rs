//! Scaled-down PTB comparison: nested LSTM against a two-layer stack with
//! the same budget, 500KB of training text, cell 128, 3 epochs.
//!
//! Usage: `cargo run --release --example ptb_compare -- <dir with ptb.char.{train,valid}.txt>`

use std::path::PathBuf;

use nlstm::training::{run_training, TrainConfig};
use nlstm_core::analysis::{find_metric, MetricName};
use nlstm_core::data::{batch_nonoverlapping, build_vocab};
use nlstm_core::model::{build_model, ModelConfig};
use nlstm_core::numerics::Rng;

const TRAIN_BYTES: usize = 500_000;
const CELL: usize = 128;
const EPOCHS: usize = 3;
const SEED: u64 = 1;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).ok_or("usage: ptb_compare <ptb dir>")?);
    let train_text = std::fs::read_to_string(dir.join("ptb.char.train.txt"))?;
    let valid_text = std::fs::read_to_string(dir.join("ptb.char.valid.txt"))?;
    let vocab = build_vocab(&train_text)?;
    let mut cut = TRAIN_BYTES.min(train_text.len());
    while !train_text.is_char_boundary(cut) {
        cut -= 1;
    }
    let train_ids = vocab.encode(&train_text[..cut])?;
    let valid_ids = vocab.encode(&valid_text)?;
    let config = TrainConfig { epochs: EPOCHS, ..TrainConfig::default() };
    let train = batch_nonoverlapping(&train_ids, config.batch_size, config.seq_len)?;
    let valid = batch_nonoverlapping(&valid_ids, config.batch_size, config.seq_len)?;
    let v = vocab.len();
    println!("vocabulary {v}, {} train batches, {} valid batches", train.len(), valid.len());

    let models = [
        ("nlstm depth 2", ModelConfig::nested(2, CELL, v, v).with_seed(SEED)),
        ("stacked 2", ModelConfig::stacked(2, CELL, v, v).with_seed(SEED)),
    ];
    let mut curves = Vec::new();
    for (name, model_config) in models {
        let model = build_model(model_config, &mut Rng::new(SEED))?;
        let mut log = |s: &nlstm::training::EpochSummary| {
            eprintln!("{name} epoch {} ({:.0}s)", s.epoch, s.wall_time.as_secs_f64());
        };
        let outcome = run_training(model, &train, &valid, &config, &mut log)?;
        let bpcs: Vec<f64> = outcome
            .history
            .iter()
            .map(|s| find_metric(&s.valid, MetricName::Bpc).unwrap_or(f64::NAN))
            .collect();
        curves.push((name, model_config.param_count(), bpcs));
    }

    println!("{:<8}{:>16}{:>16}", "epoch", curves[0].0, curves[1].0);
    for epoch in 0..EPOCHS {
        println!("{:<8}{:>16.4}{:>16.4}", epoch + 1, curves[0].2[epoch], curves[1].2[epoch]);
    }
    println!("{:<8}{:>16}{:>16}", "params", curves[0].1, curves[1].1);
    Ok(())
}
