//! Flat `key = value` run configuration files.
//!
//! Lines are `key = value`; blank lines and `#` comments are ignored.
//! Relative paths are resolved against the directory of the file they were
//! read from. [`RunConfig::to_text`] writes every key, so a frozen copy is
//! a complete record of the run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nlstm_core::model::{Architecture, ModelConfig};
use nlstm_core::optim::OptimizerKind;

use crate::error::{AppError, Result};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    PtbChar,
    Text8,
    MnistGlimpses,
    CustomText,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::PtbChar => "ptb_char",
            Task::Text8 => "text8",
            Task::MnistGlimpses => "mnist_glimpses",
            Task::CustomText => "custom_text",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "ptb_char" => Some(Task::PtbChar),
            "text8" => Some(Task::Text8),
            "mnist_glimpses" => Some(Task::MnistGlimpses),
            "custom_text" => Some(Task::CustomText),
            _ => None,
        }
    }

    pub fn is_classification(self) -> bool {
        self == Task::MnistGlimpses
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub architecture: Architecture,
    pub layers: usize,
    pub nesting_depth: usize,
    pub cell_size: usize,
    /// `None` means "take it from the data" (vocabulary size).
    pub input_size: Option<usize>,
    pub output_size: Option<usize>,
    pub seed: u64,
    pub train: TrainConfig,
    pub train_path: Option<PathBuf>,
    pub valid_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// Single-file corpus cut into train/valid/test (text8).
    pub corpus_path: Option<PathBuf>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Trailing training images held out for validation.
    pub valid_count: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::CustomText,
            architecture: Architecture::Nested,
            layers: 1,
            nesting_depth: 2,
            cell_size: 64,
            input_size: None,
            output_size: None,
            seed: 0,
            train: TrainConfig::default(),
            train_path: None,
            valid_path: None,
            test_path: None,
            corpus_path: None,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            valid_count: 5000,
            out_dir: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| AppError::Config(format!("{key}: cannot parse {value:?} as a number")))
}

fn parse_size(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn resolve(base: Option<&Path>, value: &str) -> PathBuf {
    let path = PathBuf::from(value);
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path,
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut config = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                AppError::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            config.set_with_base(key.trim(), value.trim(), base)?;
        }
        Ok(config)
    }

    /// Applies a `key=value` override; relative paths stay relative to the
    /// working directory.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| AppError::Usage(format!("--set expects key=value, got {assignment:?}")))?;
        self.set_with_base(key.trim(), value.trim(), None)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_with_base(key, value, None)
    }

    fn set_with_base(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let path = || Some(resolve(base, value));
        match key {
            "task" => {
                self.task = Task::from_name(value)
                    .ok_or_else(|| AppError::Config(format!("unknown task {value:?}")))?
            }
            "architecture" => {
                self.architecture = Architecture::from_name(value)
                    .ok_or_else(|| AppError::Config(format!("unknown architecture {value:?}")))?
            }
            "layers" => self.layers = parse_num(key, value)?,
            "nesting_depth" => self.nesting_depth = parse_num(key, value)?,
            "cell_size" => self.cell_size = parse_num(key, value)?,
            "input_size" => self.input_size = parse_size(key, value)?,
            "output_size" => self.output_size = parse_size(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "optimizer" => {
                self.train.optimizer = OptimizerKind::from_name(value)
                    .ok_or_else(|| AppError::Config(format!("unknown optimizer {value:?}")))?
            }
            "learning_rate" => self.train.learning_rate = parse_num(key, value)?,
            "batch_size" => self.train.batch_size = parse_num(key, value)?,
            "seq_len" => self.train.seq_len = parse_num(key, value)?,
            "clip_threshold" => self.train.clip_threshold = parse_num(key, value)?,
            "epochs" => self.train.epochs = parse_num(key, value)?,
            "train_path" => self.train_path = path(),
            "valid_path" => self.valid_path = path(),
            "test_path" => self.test_path = path(),
            "corpus_path" => self.corpus_path = path(),
            "train_images" => self.train_images = path(),
            "train_labels" => self.train_labels = path(),
            "test_images" => self.test_images = path(),
            "test_labels" => self.test_labels = path(),
            "valid_count" => self.valid_count = parse_num(key, value)?,
            "out_dir" => self.out_dir = path(),
            _ => return Err(AppError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let size = |s: Option<usize>| s.map_or_else(|| "auto".to_string(), |v| v.to_string());
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("task", self.task.name().into());
        kv("architecture", self.architecture.name().into());
        kv("layers", self.layers.to_string());
        kv("nesting_depth", self.nesting_depth.to_string());
        kv("cell_size", self.cell_size.to_string());
        kv("input_size", size(self.input_size));
        kv("output_size", size(self.output_size));
        kv("seed", self.seed.to_string());
        kv("optimizer", self.train.optimizer.name().into());
        kv("learning_rate", self.train.learning_rate.to_string());
        kv("batch_size", self.train.batch_size.to_string());
        kv("seq_len", self.train.seq_len.to_string());
        kv("clip_threshold", self.train.clip_threshold.to_string());
        kv("epochs", self.train.epochs.to_string());
        kv("valid_count", self.valid_count.to_string());
        let paths = [
            ("train_path", &self.train_path),
            ("valid_path", &self.valid_path),
            ("test_path", &self.test_path),
            ("corpus_path", &self.corpus_path),
            ("train_images", &self.train_images),
            ("train_labels", &self.train_labels),
            ("test_images", &self.test_images),
            ("test_labels", &self.test_labels),
            ("out_dir", &self.out_dir),
        ];
        for (k, p) in paths {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        out
    }

    /// Makes every configured path absolute, so a frozen copy can be read
    /// from any directory.
    pub fn absolutize_paths(&mut self) -> Result<()> {
        for slot in [
            &mut self.train_path,
            &mut self.valid_path,
            &mut self.test_path,
            &mut self.corpus_path,
            &mut self.train_images,
            &mut self.train_labels,
            &mut self.test_images,
            &mut self.test_labels,
            &mut self.out_dir,
        ] {
            if let Some(p) = slot.as_mut() {
                *p = std::path::absolute(&*p).map_err(|e| AppError::io(p.clone(), e))?;
            }
        }
        Ok(())
    }

    /// Model configuration with data-dependent sizes filled in.
    pub fn model_config(&self, input_size: usize, output_size: usize) -> ModelConfig {
        ModelConfig {
            architecture: self.architecture,
            layers: self.layers,
            nesting_depth: if self.architecture == Architecture::Nested {
                self.nesting_depth
            } else {
                1
            },
            cell_size: self.cell_size,
            input_size,
            output_size,
            seed: self.seed,
        }
    }

    /// Input/output sizes implied by the task when none are configured.
    pub fn default_sizes(&self) -> Option<(usize, usize)> {
        match self.task {
            Task::PtbChar => Some((50, 50)),
            Task::Text8 => Some((27, 27)),
            Task::MnistGlimpses => Some((49, 10)),
            Task::CustomText => None,
        }
    }

    /// Sizes from the config, falling back to the task defaults.
    pub fn static_sizes(&self) -> Option<(usize, usize)> {
        let defaults = self.default_sizes();
        let input = self.input_size.or(defaults.map(|d| d.0))?;
        let output = self.output_size.or(defaults.map(|d| d.1))?;
        Some((input, output))
    }

    /// Checks hyperparameters and, with `check_paths`, that every data file
    /// the task needs is configured and exists.
    pub fn validate(&self, check_paths: bool) -> Result<()> {
        let probe = self.model_config(
            self.input_size.unwrap_or(1),
            self.output_size.unwrap_or(1),
        );
        probe.validate().map_err(|e| AppError::Config(e.to_string()))?;
        self.train.validate()?;
        if !check_paths {
            return Ok(());
        }
        let required: Vec<(&str, &Option<PathBuf>)> = match self.task {
            Task::PtbChar | Task::CustomText => vec![
                ("train_path", &self.train_path),
                ("valid_path", &self.valid_path),
            ],
            Task::Text8 => vec![("corpus_path", &self.corpus_path)],
            Task::MnistGlimpses => vec![
                ("train_images", &self.train_images),
                ("train_labels", &self.train_labels),
            ],
        };
        let optional = [
            ("test_path", &self.test_path),
            ("test_images", &self.test_images),
            ("test_labels", &self.test_labels),
        ];
        for (key, path) in required {
            match path {
                None => return Err(AppError::Config(format!("{key} is required for task {}", self.task.name()))),
                Some(p) if !p.exists() => {
                    return Err(AppError::Config(format!("{key}: {} does not exist", p.display())))
                }
                _ => {}
            }
        }
        for (key, path) in optional {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(AppError::Config(format!("{key}: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}
