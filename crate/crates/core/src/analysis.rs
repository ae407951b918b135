//! Metrics and cell-activation traces.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::cells::StepCache;
use crate::data::CharVocab;
use crate::model::{
    argmax, forward_sequence, sequence_loss, Architecture, Model, SequenceBatch, SequenceInputs,
    SequenceTargets,
};
use crate::{Error, Result};

/// Bits per character from a mean natural-log NLL.
pub fn bpc(mean_nll: f64) -> f64 {
    mean_nll / core::f64::consts::LN_2
}

/// `exp(mean_nll)`; overflows to `+inf`.
pub fn perplexity(mean_nll: f64) -> f64 {
    libm::exp(mean_nll)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricName {
    Nll,
    Bpc,
    Perplexity,
    Accuracy,
}

impl MetricName {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Nll => "nll",
            MetricName::Bpc => "bpc",
            MetricName::Perplexity => "perplexity",
            MetricName::Accuracy => "accuracy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub name: MetricName,
    pub value: f64,
    pub split: Split,
    pub epoch: usize,
}

/// Derived records for a mean NLL. Language-model splits get bpc and
/// perplexity; classification splits get accuracy when it is supplied.
pub fn metric_records(mean_nll: f64, accuracy: Option<f64>, split: Split, epoch: usize) -> Vec<MetricRecord> {
    let record = |name, value| MetricRecord { name, value, split, epoch };
    let mut out = alloc::vec![record(MetricName::Nll, mean_nll)];
    match accuracy {
        Some(acc) => out.push(record(MetricName::Accuracy, acc)),
        None => {
            out.push(record(MetricName::Bpc, bpc(mean_nll)));
            out.push(record(MetricName::Perplexity, perplexity(mean_nll)));
        }
    }
    out
}

/// Accumulated NLL over a split, weighted by scored positions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SplitTotals {
    pub nll_sum: f64,
    pub scored: usize,
    pub correct: usize,
    pub classification: bool,
}

impl SplitTotals {
    pub fn mean_nll(&self) -> f64 {
        if self.scored == 0 {
            0.0
        } else {
            self.nll_sum / self.scored as f64
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.classification && self.scored > 0).then(|| self.correct as f64 / self.scored as f64)
    }
}

/// Scores one batch without computing gradients.
pub fn score_batch(model: &Model, batch: &SequenceBatch) -> Result<SplitTotals> {
    let pass = forward_sequence(model, batch, None)?;
    let (mean, _) = sequence_loss(&pass, &batch.targets)?;
    Ok(match &batch.targets {
        SequenceTargets::PerStep(t) => SplitTotals {
            nll_sum: mean * t.len() as f64,
            scored: t.len(),
            correct: 0,
            classification: false,
        },
        SequenceTargets::Final(labels) => {
            let last = pass.seq_len() - 1;
            let correct = labels
                .iter()
                .enumerate()
                .filter(|(lane, &label)| argmax(pass.logits_at(last, *lane)) == label)
                .count();
            SplitTotals {
                nll_sum: mean * labels.len() as f64,
                scored: labels.len(),
                correct,
                classification: true,
            }
        }
    })
}

/// Mean per-position NLL over all batches of a split plus derived metrics.
pub fn evaluate(model: &Model, batches: &[SequenceBatch], split: Split, epoch: usize) -> Result<Vec<MetricRecord>> {
    let mut totals = SplitTotals::default();
    for batch in batches {
        let t = score_batch(model, batch)?;
        totals.nll_sum += t.nll_sum;
        totals.scored += t.scored;
        totals.correct += t.correct;
        totals.classification |= t.classification;
    }
    Ok(metric_records(totals.mean_nll(), totals.accuracy(), split, epoch))
}

pub fn find_metric(records: &[MetricRecord], name: MetricName) -> Option<f64> {
    records.iter().find(|r| r.name == name).map(|r| r.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceLevel {
    /// Memory `c` of a nested cell in `layer`, recorded directly.
    Outer { layer: usize },
    /// `tanh` of the memory at nesting level `depth` (1 = first inner cell).
    Inner { layer: usize, depth: usize },
    /// `tanh(c)` of a plain LSTM layer.
    Layer { layer: usize },
}

impl TraceLevel {
    pub fn label(&self, layers: usize) -> String {
        let prefix = |layer: usize| {
            if layers > 1 {
                format!("layer-{}.", layer + 1)
            } else {
                String::new()
            }
        };
        match *self {
            TraceLevel::Outer { layer } => format!("{}outer", prefix(layer)),
            TraceLevel::Inner { layer, depth } => format!("{}inner-{depth}", prefix(layer)),
            TraceLevel::Layer { layer } => format!("layer-{}", layer + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub input: char,
    pub level: TraceLevel,
    pub unit: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub layers: usize,
    pub levels: Vec<TraceLevel>,
    pub rows: Vec<TraceRow>,
}

impl ActivationTrace {
    /// Mean `|v_t - v_{t-1}|` per level, over all traced units.
    pub fn mean_abs_step_change(&self) -> Vec<(TraceLevel, f64)> {
        self.levels
            .iter()
            .map(|&level| {
                let mut series: alloc::collections::BTreeMap<usize, Vec<(usize, f64)>> =
                    alloc::collections::BTreeMap::new();
                for row in self.rows.iter().filter(|r| r.level == level) {
                    series.entry(row.unit).or_default().push((row.t, row.value));
                }
                let (mut sum, mut n) = (0.0, 0usize);
                for values in series.values_mut() {
                    values.sort_by_key(|(t, _)| *t);
                    for w in values.windows(2) {
                        sum += libm::fabs(w[1].1 - w[0].1);
                        n += 1;
                    }
                }
                (level, if n == 0 { 0.0 } else { sum / n as f64 })
            })
            .collect()
    }
}

fn levels_of(model: &Model) -> Vec<TraceLevel> {
    let config = model.config();
    let mut levels = Vec::new();
    for layer in 0..config.layers {
        match config.architecture {
            Architecture::Nested => {
                levels.push(TraceLevel::Outer { layer });
                for depth in 1..config.nesting_depth {
                    levels.push(TraceLevel::Inner { layer, depth });
                }
            }
            _ => levels.push(TraceLevel::Layer { layer }),
        }
    }
    levels
}

fn level_values(cache: &StepCache, level: TraceLevel) -> (&[f64], bool) {
    match level {
        TraceLevel::Outer { .. } => (&cache.c, false),
        TraceLevel::Layer { .. } => (&cache.c, true),
        TraceLevel::Inner { depth, .. } => {
            let mut c = cache;
            for _ in 0..depth {
                c = c.inner.as_deref().expect("trace level deeper than the cell");
            }
            (&c.c, true)
        }
    }
}

/// Feeds `tokens` one step at a time from zero state and records, for each
/// step and each unit in `units`, the outer memory of nested cells directly
/// and `tanh` of every inner memory (or of each plain LSTM layer's memory).
pub fn trace_activations(
    model: &Model,
    tokens: &[usize],
    vocab: &CharVocab,
    units: Range<usize>,
) -> Result<ActivationTrace> {
    let config = *model.config();
    if units.start >= units.end || units.end > config.cell_size {
        return Err(Error::Index {
            index: units.end.saturating_sub(1).max(units.start),
            len: config.cell_size,
        });
    }
    if tokens.is_empty() {
        return Err(Error::Data(String::from("trace needs at least one input token")));
    }
    let batch = SequenceBatch::new(
        tokens.len(),
        1,
        SequenceInputs::Tokens(tokens.to_vec()),
        SequenceTargets::PerStep(alloc::vec![0; tokens.len()]),
    )?;
    let pass = forward_sequence(model, &batch, None)?;
    let levels = levels_of(model);
    let mut rows = Vec::with_capacity(tokens.len() * units.len() * levels.len());
    for (t, &token) in tokens.iter().enumerate() {
        let input = vocab.char_of(token).ok_or(Error::Index {
            index: token,
            len: vocab.len(),
        })?;
        for &level in &levels {
            let layer = match level {
                TraceLevel::Outer { layer } | TraceLevel::Inner { layer, .. } | TraceLevel::Layer { layer } => layer,
            };
            let (values, squash) = level_values(&pass.caches[t][0][layer], level);
            for unit in units.clone() {
                let v = values[unit];
                rows.push(TraceRow {
                    t,
                    input,
                    level,
                    unit,
                    value: if squash { libm::tanh(v) } else { v },
                });
            }
        }
    }
    Ok(ActivationTrace {
        layers: config.layers,
        levels,
        rows,
    })
}
