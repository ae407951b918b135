//! Loading task data from disk and turning it into batches.

use std::path::{Path, PathBuf};

use nlstm_core::analysis::Split;
use nlstm_core::data::{
    batch_nonoverlapping, glimpse_batches, make_glimpses, parse_idx_images, parse_idx_labels, window_count,
    CharVocab, CorpusSplits, GlimpseSequence,
};
use nlstm_core::model::SequenceBatch;

use crate::config::{RunConfig, Task};
use crate::error::{AppError, Result};

fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| {
        AppError::Data(format!("{}: invalid UTF-8 at byte {}", path.display(), e.utf8_error().valid_up_to()))
    })
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| AppError::Config(format!("{key} is not set")))
}

/// Cuts one corpus into 90% train, 5% valid and 5% test by character count.
pub fn split_corpus(text: &str) -> (&str, &str, &str) {
    let chars = text.chars().count();
    let byte_at = |n: usize| text.char_indices().nth(n).map_or(text.len(), |(i, _)| i);
    let a = byte_at(chars / 20 * 18);
    let b = byte_at(chars / 20 * 19);
    (&text[..a], &text[a..b], &text[b..])
}

/// Reads and encodes the train/valid/test text of a language-model task.
pub fn load_text(config: &RunConfig) -> Result<CorpusSplits> {
    let splits = match config.task {
        Task::Text8 => {
            let text = read_text(require(&config.corpus_path, "corpus_path")?)?;
            let (train, valid, test) = split_corpus(&text);
            CorpusSplits::from_texts(train, valid, test)
        }
        Task::PtbChar | Task::CustomText => {
            let train = read_text(require(&config.train_path, "train_path")?)?;
            let valid = read_text(require(&config.valid_path, "valid_path")?)?;
            let test = match &config.test_path {
                Some(p) => read_text(p)?,
                None => String::new(),
            };
            CorpusSplits::from_texts(&train, &valid, &test)
        }
        Task::MnistGlimpses => {
            return Err(AppError::Config("mnist_glimpses is not a text task".into()));
        }
    };
    splits.map_err(|e| match e {
        nlstm_core::Error::Data(msg) => AppError::Data(msg),
        other => AppError::Core(other),
    })
}

#[derive(Debug, Clone)]
pub struct GlimpseSplits {
    pub train: Vec<GlimpseSequence>,
    pub valid: Vec<GlimpseSequence>,
    pub test: Vec<GlimpseSequence>,
}

fn load_idx_pair(images: &Path, labels: &Path) -> Result<Vec<GlimpseSequence>> {
    let image_bytes = std::fs::read(images).map_err(|e| AppError::io(images, e))?;
    let label_bytes = std::fs::read(labels).map_err(|e| AppError::io(labels, e))?;
    let parsed = parse_idx_images(&image_bytes)
        .map_err(|e| AppError::Data(format!("{}: {e}", images.display())))?;
    let labels_parsed = parse_idx_labels(&label_bytes)
        .map_err(|e| AppError::Data(format!("{}: {e}", labels.display())))?;
    if parsed.count != labels_parsed.len() {
        return Err(AppError::Data(format!(
            "{} has {} images but {} has {} labels",
            images.display(),
            parsed.count,
            labels.display(),
            labels_parsed.len()
        )));
    }
    if (parsed.rows, parsed.cols) != (28, 28) {
        return Err(AppError::Data(format!(
            "{}: images are {}x{}, expected 28x28",
            images.display(),
            parsed.rows,
            parsed.cols
        )));
    }
    (0..parsed.count)
        .map(|k| make_glimpses(&parsed.normalized(k), labels_parsed[k]).map_err(AppError::from))
        .collect()
}

/// Loads MNIST IDX files; the last `valid_count` training images form the
/// validation split.
pub fn load_glimpses(config: &RunConfig) -> Result<GlimpseSplits> {
    let mut train = load_idx_pair(
        require(&config.train_images, "train_images")?,
        require(&config.train_labels, "train_labels")?,
    )?;
    if config.valid_count >= train.len() {
        return Err(AppError::Config(format!(
            "valid_count {} leaves no training images out of {}",
            config.valid_count,
            train.len()
        )));
    }
    let valid = train.split_off(train.len() - config.valid_count);
    let test = match (&config.test_images, &config.test_labels) {
        (Some(images), Some(labels)) => load_idx_pair(images, labels)?,
        (None, None) => Vec::new(),
        _ => return Err(AppError::Config("test_images and test_labels must be set together".into())),
    };
    Ok(GlimpseSplits { train, valid, test })
}

/// Batched data for one run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub input_size: usize,
    pub output_size: usize,
    /// Present for text tasks.
    pub vocab: Option<CharVocab>,
    pub train: Vec<SequenceBatch>,
    pub valid: Vec<SequenceBatch>,
    pub test: Vec<SequenceBatch>,
    /// Token streams, kept for tracing.
    pub tokens: Option<CorpusSplits>,
}

impl Prepared {
    pub fn split(&self, split: Split) -> &[SequenceBatch] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}

/// Evaluation batches use the training sequence length; the batch size is
/// reduced when a split is too short to fill one training-sized batch.
fn eval_batches(tokens: &[usize], batch_size: usize, seq_len: usize) -> Result<Vec<SequenceBatch>> {
    let windows = window_count(tokens.len(), seq_len);
    if windows == 0 {
        return Ok(Vec::new());
    }
    Ok(batch_nonoverlapping(tokens, batch_size.min(windows), seq_len)?)
}

fn check_size(key: &str, configured: Option<usize>, actual: usize, what: &str) -> Result<usize> {
    match configured {
        Some(v) if v != actual => Err(AppError::Data(format!(
            "{key} = {v} but the data has {actual} {what}"
        ))),
        _ => Ok(actual),
    }
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let train_cfg = &config.train;
    match config.task {
        Task::MnistGlimpses => {
            let data = load_glimpses(config)?;
            let input_size = check_size("input_size", config.input_size, 49, "pixels per glimpse")?;
            let output_size = check_size("output_size", config.output_size, 10, "classes")?;
            Ok(Prepared {
                input_size,
                output_size,
                vocab: None,
                train: glimpse_batches(&data.train, train_cfg.batch_size)?,
                valid: glimpse_batches(&data.valid, train_cfg.batch_size)?,
                test: glimpse_batches(&data.test, train_cfg.batch_size)?,
                tokens: None,
            })
        }
        _ => {
            let splits = load_text(config)?;
            let v = splits.vocab.len();
            let input_size = check_size("input_size", config.input_size, v, "distinct characters")?;
            let output_size = check_size("output_size", config.output_size, v, "distinct characters")?;
            let train = batch_nonoverlapping(&splits.train, train_cfg.batch_size, train_cfg.seq_len)?;
            if train.is_empty() {
                return Err(AppError::Data(format!(
                    "training split has {} characters, too few for one batch of {} x {}",
                    splits.train.len(),
                    train_cfg.batch_size,
                    train_cfg.seq_len
                )));
            }
            Ok(Prepared {
                input_size,
                output_size,
                valid: eval_batches(&splits.valid, train_cfg.batch_size, train_cfg.seq_len)?,
                test: eval_batches(&splits.test, train_cfg.batch_size, train_cfg.seq_len)?,
                train,
                vocab: Some(splits.vocab.clone()),
                tokens: Some(splits),
            })
        }
    }
}
