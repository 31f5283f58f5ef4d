//! Experiment grids: configuration, execution and reporting.

mod report;
mod run;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{BackendDescriptor, DEFAULT_MAX_NEW_TOKENS};
use crate::corruption::{CorruptionKind, CorruptionSpec};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::prompt::{Configuration, DEFAULT_SHOTS};

pub use report::{pct, render_markdown, report, CellStat, MacroStat, PlotSeries, Report, MISSING};
pub use run::{read_results, rescore, run, write_results, RunOptions, RunSummary, RESULTS_FILE};

fn default_shots() -> usize {
    DEFAULT_SHOTS
}
fn default_instances() -> usize {
    100
}
fn default_corruptions() -> Vec<CorruptionSpec> {
    vec![CorruptionSpec::none()]
}
fn default_workers() -> usize {
    1
}
fn default_max_new_tokens() -> usize {
    DEFAULT_MAX_NEW_TOKENS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub backends: Vec<BackendDescriptor>,
    pub tasks: Vec<PathBuf>,
    /// Configuration names, see [`resolve_configuration`].
    pub configurations: Vec<String>,
    /// Crossed with every configuration. Defaults to `[none]`.
    #[serde(default = "default_corruptions")]
    pub corruptions: Vec<CorruptionSpec>,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default = "default_instances")]
    pub n_instances: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub wordlist: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: usize,
}

impl ExperimentConfig {
    /// Read a JSON config; relative paths are taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.tasks.iter_mut().for_each(fix);
        fix(&mut self.wordlist);
        if let Some(c) = self.corpus.as_mut() {
            fix(c);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.backends.is_empty() {
            return Err(Error::validation("backends", "at least one backend is required"));
        }
        if self.tasks.is_empty() {
            return Err(Error::validation("tasks", "at least one task is required"));
        }
        if self.configurations.is_empty() {
            return Err(Error::validation("configurations", "at least one configuration is required"));
        }
        if self.corruptions.is_empty() {
            return Err(Error::validation("corruptions", "use [{\"kind\":\"none\"}] for no corruption"));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::validation("max_new_tokens", "must be at least 1"));
        }
        for b in &self.backends {
            b.validate()?;
        }
        let mut ids: Vec<&str> = self.backends.iter().map(|b| b.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("backends", "backend ids must be unique"));
        }
        for name in &self.configurations {
            resolve_configuration(name)?;
        }
        let needs_corpus = self
            .configurations
            .iter()
            .filter_map(|n| resolve_configuration(n).ok())
            .any(|c| c.corruption.as_ref().is_some_and(|k| *k == CorruptionKind::OodInputs))
            || self.corruptions.iter().any(CorruptionSpec::needs_corpus);
        if needs_corpus && self.corpus.is_none() {
            return Err(Error::validation("corpus", "OOD-input corruption needs a sentence corpus"));
        }
        Ok(())
    }
}

/// A configuration name resolved into a prompt layout and an optional
/// built-in corruption.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfiguration {
    pub layout: Configuration,
    pub corruption: Option<CorruptionKind>,
}

/// Accepts
/// * a layout name (`baseline`, `plus_demos`, `inline_in_2_demos`, ...),
/// * a corruption descriptor (`rw_both_instr`, `rw_labels`, `ood_inputs`,
///   `wrong_label`, `rw_inline_in_1_demos`, ...), applied to `baseline`,
/// * `<layout>+<corruption>`, e.g. `plus_task_instr_demos+rw_task_instr`.
pub fn resolve_configuration(name: &str) -> Result<ResolvedConfiguration> {
    if let Some((layout, corruption)) = name.split_once('+') {
        let corruption: CorruptionSpec = corruption.parse()?;
        return Ok(ResolvedConfiguration {
            layout: layout.parse()?,
            corruption: Some(corruption.kind),
        });
    }
    if let Ok(layout) = name.parse::<Configuration>() {
        return Ok(ResolvedConfiguration {
            layout,
            corruption: None,
        });
    }
    let corruption: CorruptionSpec = name
        .parse()
        .map_err(|_| Error::Config(format!("unknown configuration `{name}`")))?;
    Ok(ResolvedConfiguration {
        layout: Configuration::Baseline,
        corruption: Some(corruption.kind),
    })
}

/// Canonical row order for reports; unknown names sort after these.
pub fn row_rank(row: &str) -> usize {
    const FIXED: [&str; 16] = [
        "test_instance",
        "plus_task_instr",
        "plus_inline_instr",
        "plus_both_instr",
        "plus_demos",
        "plus_task_instr_demos",
        "plus_inline_instr_demos",
        "baseline",
        "baseline_minus_inputs",
        "baseline_minus_labels",
        "rw_task_instr",
        "rw_inline_instr",
        "rw_both_instr",
        "rw_labels",
        "wrong_label",
        "ood_inputs",
    ];
    if let Some(i) = FIXED.iter().position(|r| *r == row) {
        return i;
    }
    for k in (0..=Configuration::MAX_INLINE_DEMOS).rev() {
        let base = FIXED.len() + (Configuration::MAX_INLINE_DEMOS - k);
        if row == format!("inline_in_{k}_demos") {
            return base;
        }
        if row == format!("rw_inline_in_{k}_demos") {
            return base + Configuration::MAX_INLINE_DEMOS + 1;
        }
    }
    usize::MAX
}

/// Human-readable row label in the style of the ablation tables.
pub fn display_name(row: &str) -> String {
    let fixed = match row {
        "test_instance" => Some("Test instance"),
        "plus_task_instr" => Some("+ task instr."),
        "plus_inline_instr" => Some("+ inline instr."),
        "plus_both_instr" => Some("+ both instr."),
        "plus_demos" => Some("+ demos."),
        "plus_task_instr_demos" => Some("+ task instr. + demos."),
        "plus_inline_instr_demos" => Some("+ inline instr. + demos."),
        "baseline" => Some("Baseline"),
        "baseline_minus_inputs" => Some("Baseline - inputs"),
        "baseline_minus_labels" => Some("Baseline - labels"),
        "rw_task_instr" => Some("Rw task instr."),
        "rw_inline_instr" => Some("Rw inline instr."),
        "rw_both_instr" => Some("Rw both instr."),
        "rw_labels" => Some("Rw labels"),
        "wrong_label" => Some("Wrong labels"),
        "ood_inputs" => Some("OOD inputs"),
        _ => None,
    };
    if let Some(f) = fixed {
        return f.to_owned();
    }
    let k_of = |prefix: &str| {
        row.strip_prefix(prefix)
            .and_then(|r| r.strip_suffix("_demos"))
            .and_then(|k| k.parse::<usize>().ok())
    };
    if let Some(k) = k_of("rw_inline_in_") {
        return format!("Rw inline instr. in {k} demos.");
    }
    if let Some(k) = k_of("inline_in_") {
        return format!("Inline instr. in {k} demos.");
    }
    row.to_owned()
}

/// One row of the result tables: a configuration crossed with a corruption.
pub fn row_label(configuration: &str, corruption: &str) -> String {
    if corruption == "none" {
        configuration.to_owned()
    } else {
        format!("{configuration}+{corruption}")
    }
}

/// One evaluated (backend, task, configuration, corruption, instance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub backend: String,
    pub task: String,
    pub configuration: String,
    pub corruption: String,
    pub instance: usize,
    pub prompt_hash: String,
    pub raw_response: Option<String>,
    pub processed_response: Option<String>,
    pub metric: Metric,
    pub score: Option<f64>,
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn key(&self) -> (&str, &str, &str, &str, usize) {
        (
            &self.backend,
            &self.task,
            &self.configuration,
            &self.corruption,
            self.instance,
        )
    }

    pub fn cell(&self) -> (&str, &str, &str, &str) {
        (&self.backend, &self.task, &self.configuration, &self.corruption)
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    /// Exactly one of score and error is set.
    pub fn is_well_formed(&self) -> bool {
        self.score.is_some() != self.error.is_some()
    }
}
