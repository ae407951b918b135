//! Parameter accounting and the baseline shapes compared against each
//! nested model.

use nlstm_core::model::{Architecture, ModelConfig};

use crate::config::{RunConfig, Task};

/// Groups digits in threes: `4474850` becomes `4,474,850`.
pub fn with_separators(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Two decimals of millions or one decimal of thousands, e.g. `4.47M`,
/// `61.0k`.
pub fn short_count(n: usize) -> String {
    if n >= 1_000_000 {
        format!("{:.2}M", n as f64 / 1e6)
    } else if n >= 1_000 {
        format!("{:.1}k", n as f64 / 1e3)
    } else {
        n.to_string()
    }
}

pub fn format_count(n: usize) -> String {
    format!("{} ({})", with_separators(n), short_count(n))
}

/// Short human label such as `nlstm depth 2 x 600`.
pub fn describe(config: &ModelConfig) -> String {
    match config.architecture {
        Architecture::Lstm => format!("lstm 1 x {}", config.cell_size),
        Architecture::Stacked => format!("stacked {} x {}", config.layers, config.cell_size),
        Architecture::Nested => {
            let layers = if config.layers > 1 { format!(" ({} layers)", config.layers) } else { String::new() };
            format!("nlstm depth {} x {}{layers}", config.nesting_depth, config.cell_size)
        }
    }
}

/// Largest single-layer or stacked cell size whose count stays within
/// `budget`.
fn fit_cell(budget: usize, make: impl Fn(usize) -> ModelConfig) -> usize {
    let mut k = 1;
    while make(k + 1).param_count() <= budget {
        k += 1;
    }
    k
}

/// Baseline shapes for a task. Paper tasks use the published shapes; other
/// tasks get an equal-width LSTM, a budget-matched LSTM and stacked models
/// at matched budgets.
pub fn baselines(task: Task, input: usize, output: usize, nested: &ModelConfig) -> Vec<ModelConfig> {
    let fixed: Option<[(usize, usize); 5]> = match task {
        Task::PtbChar => Some([(1, 1000), (1, 1050), (2, 600), (3, 450), (0, 600)]),
        Task::MnistGlimpses => Some([(1, 100), (1, 130), (2, 75), (3, 60), (0, 75)]),
        Task::Text8 => Some([(1, 2000), (1, 2100), (2, 1200), (3, 950), (0, 1200)]),
        Task::CustomText => None,
    };
    let build = |layers: usize, cell: usize| match layers {
        0 => ModelConfig::nested(2, cell, input, output),
        1 => ModelConfig::lstm(cell, input, output),
        n => ModelConfig::stacked(n, cell, input, output),
    };
    match fixed {
        Some(shapes) => shapes.iter().map(|&(l, k)| build(l, k)).collect(),
        None => {
            let budget = nested.param_count();
            let k = nested.cell_size;
            vec![
                build(1, k),
                build(1, fit_cell(budget, |c| build(1, c))),
                build(2, k),
                build(3, fit_cell(budget, |c| build(3, c))),
            ]
        }
    }
}

/// The table printed by `params`: the configured model followed by the
/// baselines.
pub fn params_table(config: &RunConfig, input: usize, output: usize) -> String {
    let model = config.model_config(input, output);
    let mut lines = vec![format!(
        "configured  {:<28} {}",
        describe(&model),
        format_count(model.param_count())
    )];
    let mut nested = model;
    if nested.architecture != Architecture::Nested {
        nested = ModelConfig::nested(2, model.cell_size, input, output);
    }
    for b in baselines(config.task, input, output, &nested) {
        lines.push(format!("baseline    {:<28} {}", describe(&b), format_count(b.param_count())));
    }
    let mut out = lines.join("\n");
    out.push('\n');
    out
}
