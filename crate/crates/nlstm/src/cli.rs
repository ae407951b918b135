//! Command-line interface: `prep`, `train`, `eval`, `trace` and `params`.

use std::ffi::OsString;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nlstm_core::analysis::{trace_activations, Split};
use nlstm_core::model::{build_model, Model};
use nlstm_core::numerics::Rng;

use crate::config::{RunConfig, Task};
use crate::datasets::{prepare, Prepared};
use crate::error::{AppError, ExitCode, Result};
use crate::export::{escape_char, format_record, history_text, write_trace_csv};
use crate::params::params_table;
use crate::training::run_training;
use crate::{checkpoint, datasets};

#[derive(Debug, Parser)]
#[command(name = "nlstm", version, about = "Nested LSTM language models and classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Override the seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the data, report vocabulary and batch counts.
    Prep {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model; writes history.tsv, best.ckpt and config.conf.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// train, valid or test.
        #[arg(long, default_value = "valid")]
        split: String,
    },
    /// Export cell activations along a character sequence as CSV.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Unit range, `A..B` (exclusive) or `A..=B`.
        #[arg(long, default_value = "0..7")]
        units: String,
        /// Split the sequence is cut from when --text is absent.
        #[arg(long, default_value = "test")]
        split: String,
        /// Number of characters.
        #[arg(long, default_value_t = 100)]
        length: usize,
        /// Start position within the split.
        #[arg(long, default_value_t = 0)]
        offset: usize,
        /// Trace this text instead of a split.
        #[arg(long)]
        text: Option<String>,
    },
    /// Print parameter counts for the configured model and its baselines.
    Params {
        #[command(flatten)]
        common: Common,
    },
}

/// Parses `A..B` or `A..=B`.
pub fn parse_units(spec: &str) -> Result<Range<usize>> {
    let bad = || AppError::Usage(format!("--units expects A..B, got {spec:?}"));
    let (a, b) = spec.split_once("..").ok_or_else(bad)?;
    let start: usize = a.trim().parse().map_err(|_| bad())?;
    let end = match b.strip_prefix('=') {
        Some(b) => b.trim().parse::<usize>().map_err(|_| bad())? + 1,
        None => b.trim().parse().map_err(|_| bad())?,
    };
    if start >= end {
        return Err(bad());
    }
    Ok(start..end)
}

fn parse_split(name: &str) -> Result<Split> {
    Split::from_name(name).ok_or_else(|| AppError::Usage(format!("unknown split {name:?}")))
}

pub fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::from_file(path).map_err(|e| match e {
            AppError::Io { path, source } => AppError::Config(format!("{}: {source}", path.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    for assignment in &common.set {
        config.apply_override(assignment)?;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = Some(out.clone());
    }
    Ok(config)
}

fn out_dir(config: &RunConfig) -> Result<&Path> {
    let dir = config
        .out_dir
        .as_deref()
        .ok_or_else(|| AppError::Config("no output directory: pass --out or set out_dir".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| AppError::io(path, e))
}

fn load_compatible(config: &RunConfig, data: &Prepared, path: &Path) -> Result<Model> {
    let model = checkpoint::load(path)?;
    let expected = config.model_config(data.input_size, data.output_size);
    let stored = *model.config();
    let mismatches: Vec<String> = [
        ("architecture", stored.architecture.name().to_string(), expected.architecture.name().to_string()),
        ("layers", stored.layers.to_string(), expected.layers.to_string()),
        ("nesting_depth", stored.nesting_depth.to_string(), expected.nesting_depth.to_string()),
        ("cell_size", stored.cell_size.to_string(), expected.cell_size.to_string()),
        ("input_size", stored.input_size.to_string(), expected.input_size.to_string()),
        ("output_size", stored.output_size.to_string(), expected.output_size.to_string()),
    ]
    .into_iter()
    .filter(|(_, s, e)| s != e)
    .map(|(k, s, e)| format!("{k}: checkpoint {s}, configuration {e}"))
    .collect();
    if !mismatches.is_empty() {
        return Err(AppError::Incompatible(mismatches.join("; ")));
    }
    Ok(model)
}

fn cmd_prep(common: &Common, out: &mut dyn Write) -> Result<()> {
    let config = load_config(common)?;
    config.validate(true)?;
    let data = prepare(&config)?;
    let mut summary = format!(
        "task {}\ninput_size {}\noutput_size {}\n",
        config.task.name(),
        data.input_size,
        data.output_size
    );
    if let Some(tokens) = &data.tokens {
        summary += &format!(
            "train_chars {}\nvalid_chars {}\ntest_chars {}\n",
            tokens.train.len(),
            tokens.valid.len(),
            tokens.test.len()
        );
    }
    summary += &format!(
        "train_batches {}\nvalid_batches {}\ntest_batches {}\n",
        data.train.len(),
        data.valid.len(),
        data.test.len()
    );
    write_all(out, &summary)?;
    if config.out_dir.is_some() {
        let dir = out_dir(&config)?;
        write_file(&dir.join("prep.txt"), &summary)?;
        if let Some(vocab) = &data.vocab {
            let listing: String = vocab
                .chars()
                .iter()
                .enumerate()
                .map(|(id, &c)| format!("{id}\t{}\n", escape_char(c)))
                .collect();
            write_file(&dir.join("vocab.tsv"), listing)?;
        }
    }
    Ok(())
}

fn cmd_train(common: &Common, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut config = load_config(common)?;
    config.validate(true)?;
    let dir = out_dir(&config)?.to_path_buf();
    let data = prepare(&config)?;
    config.input_size = Some(data.input_size);
    config.output_size = Some(data.output_size);
    config.absolutize_paths()?;
    let model_config = config.model_config(data.input_size, data.output_size);
    let model = build_model(model_config, &mut Rng::new(config.seed))?;
    write_file(&dir.join("config.conf"), config.to_text())?;

    let mut log = |summary: &crate::training::EpochSummary| {
        let metrics: Vec<String> = summary
            .train
            .iter()
            .chain(&summary.valid)
            .map(|r| format!("{}_{}={:.4}", r.split.as_str(), r.name.as_str(), r.value))
            .collect();
        let _ = writeln!(
            err,
            "epoch {} {} ({:.1}s)",
            summary.epoch,
            metrics.join(" "),
            summary.wall_time.as_secs_f64()
        );
    };
    let outcome = run_training(model, &data.train, &data.valid, &config.train, &mut log)?;
    write_file(&dir.join("history.tsv"), history_text(&outcome.history))?;
    checkpoint::save(&outcome.best_model, &dir.join("best.ckpt"))?;
    write_all(
        out,
        &format!(
            "best_epoch {}\nwrote {}\n",
            outcome.best_epoch,
            dir.display()
        ),
    )
}

fn cmd_eval(common: &Common, checkpoint_path: &Path, split: &str, out: &mut dyn Write) -> Result<()> {
    let split = parse_split(split)?;
    let config = load_config(common)?;
    config.validate(true)?;
    let data = prepare(&config)?;
    let model = load_compatible(&config, &data, checkpoint_path)?;
    let batches = data.split(split);
    if batches.is_empty() {
        return Err(AppError::Data(format!("the {} split is empty", split.as_str())));
    }
    let records = nlstm_core::analysis::evaluate(&model, batches, split, 0)?;
    let text: String = records.iter().map(|r| format_record(r) + "\n").collect();
    write_all(out, &text)
}

#[allow(clippy::too_many_arguments)]
fn cmd_trace(
    common: &Common,
    checkpoint_path: &Path,
    units: &str,
    split: &str,
    length: usize,
    offset: usize,
    text: Option<&str>,
    out: &mut dyn Write,
) -> Result<()> {
    let units = parse_units(units)?;
    let split = parse_split(split)?;
    let config = load_config(common)?;
    if config.task == Task::MnistGlimpses {
        return Err(AppError::Config("trace needs a character-level task".into()));
    }
    config.validate(true)?;
    let data = prepare(&config)?;
    let model = load_compatible(&config, &data, checkpoint_path)?;
    let vocab = data.vocab.as_ref().expect("text tasks carry a vocabulary");
    let tokens = match text {
        Some(text) => vocab.encode(text).map_err(|e| AppError::Data(format!("--text: {e}")))?,
        None => {
            let corpus = data.tokens.as_ref().expect("text tasks carry tokens");
            let stream = match split {
                Split::Train => &corpus.train,
                Split::Valid => &corpus.valid,
                Split::Test => &corpus.test,
            };
            if offset + length > stream.len() {
                return Err(AppError::Data(format!(
                    "the {} split has {} characters, cannot take {length} from offset {offset}",
                    split.as_str(),
                    stream.len()
                )));
            }
            stream[offset..offset + length].to_vec()
        }
    };
    if units.end > model.config().cell_size {
        return Err(AppError::Usage(format!(
            "--units {}..{} exceeds the cell size {}",
            units.start,
            units.end,
            model.config().cell_size
        )));
    }
    let trace = trace_activations(&model, &tokens, vocab, units)?;
    let mut report = String::new();
    for (level, change) in trace.mean_abs_step_change() {
        report += &format!("mean_abs_step_change\t{}\t{change}\n", level.label(trace.layers));
    }
    match &config.out_dir {
        Some(_) => {
            let path = out_dir(&config)?.join("trace.csv");
            let file = std::fs::File::create(&path).map_err(|e| AppError::io(&path, e))?;
            write_trace_csv(&trace, std::io::BufWriter::new(file))?;
            report += &format!("rows {}\nwrote {}\n", trace.rows.len(), path.display());
            write_all(out, &report)
        }
        None => {
            write_trace_csv(&trace, &mut *out)?;
            eprint!("{report}");
            Ok(())
        }
    }
}

fn cmd_params(common: &Common, out: &mut dyn Write) -> Result<()> {
    let config = load_config(common)?;
    config.validate(false)?;
    let (input, output) = match config.static_sizes() {
        Some(sizes) => sizes,
        None => {
            if config.train_path.is_none() {
                return Err(AppError::Config(
                    "input_size/output_size are auto; set them or provide train_path".into(),
                ));
            }
            let vocab = datasets::load_text(&config)?.vocab.len();
            (config.input_size.unwrap_or(vocab), config.output_size.unwrap_or(vocab))
        }
    };
    write_all(out, &params_table(&config, input, output))
}

fn write_all(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| AppError::io("<stdout>", e))
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Prep { common } => cmd_prep(common, out),
        Command::Train { common } => cmd_train(common, out, err),
        Command::Eval { common, checkpoint, split } => cmd_eval(common, checkpoint, split, out),
        Command::Trace { common, checkpoint, units, split, length, offset, text } => {
            cmd_trace(common, checkpoint, units, split, *length, *offset, text.as_deref(), out)
        }
        Command::Params { common } => cmd_params(common, out),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
/// Help and version requests succeed; other argument errors are usage
/// errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Config } else { ExitCode::Success };
            let rendered = e.render().to_string();
            let _ = if code == ExitCode::Success {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => ExitCode::Success,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
