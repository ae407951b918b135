//! Text formats for training history and activation traces.

use std::io::Write;

use nlstm_core::analysis::{ActivationTrace, MetricRecord};

use crate::error::{AppError, Result};
use crate::training::EpochSummary;

/// `epoch<TAB>split<TAB>metric<TAB>value`
pub fn format_record(record: &MetricRecord) -> String {
    format!(
        "{}\t{}\t{}\t{}",
        record.epoch,
        record.split.as_str(),
        record.name.as_str(),
        record.value
    )
}

/// History lines for a run. Wall time is left out so that reruns produce
/// identical files.
pub fn history_text(history: &[EpochSummary]) -> String {
    let mut out = String::new();
    for summary in history {
        for record in summary.train.iter().chain(&summary.valid) {
            out.push_str(&format_record(record));
            out.push('\n');
        }
    }
    out
}

/// Escapes newlines, tabs, carriage returns and backslashes so every
/// character occupies one visible CSV field.
pub fn escape_char(c: char) -> String {
    match c {
        '\n' => "\\n".into(),
        '\t' => "\\t".into(),
        '\r' => "\\r".into(),
        '\\' => "\\\\".into(),
        c if c.is_control() => format!("\\u{{{:x}}}", c as u32),
        c => c.to_string(),
    }
}

pub const TRACE_HEADER: [&str; 5] = ["t", "input", "level", "unit", "value"];

pub fn write_trace_csv<W: Write>(trace: &ActivationTrace, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| AppError::Data(format!("writing trace: {e}"));
    writer.write_record(TRACE_HEADER).map_err(csv_err)?;
    for row in &trace.rows {
        writer
            .write_record([
                row.t.to_string(),
                escape_char(row.input),
                row.level.label(trace.layers),
                row.unit.to_string(),
                row.value.to_string(),
            ])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| AppError::Data(format!("writing trace: {e}")))?;
    Ok(())
}
