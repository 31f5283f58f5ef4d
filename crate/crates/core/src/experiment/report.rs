use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{display_name, row_label, row_rank, ResultRecord};
use crate::error::{Error, Result};
use crate::metrics::{jackknife_mean, macro_average};

/// Marker for cells with no usable score.
pub const MISSING: &str = "–";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    /// In [0, 1].
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub n: usize,
    pub errored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroStat {
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub datasets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub backend: String,
    /// (row, macro mean × 100) in row order.
    pub points: Vec<(String, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub backends: Vec<String>,
    pub tasks: Vec<String>,
    pub rows: Vec<String>,
    /// backend -> row -> task -> stat
    pub per_dataset: BTreeMap<String, BTreeMap<String, BTreeMap<String, CellStat>>>,
    /// backend -> row -> stat
    pub macro_average: BTreeMap<String, BTreeMap<String, MacroStat>>,
    pub series: Vec<PlotSeries>,
    pub footnotes: Vec<String>,
}

fn cell_stat(scores: &[f64], errored: usize) -> CellStat {
    let n = scores.len();
    let (mean, stderr) = match n {
        0 => (None, None),
        1 => (Some(scores[0]), None),
        _ => {
            let agg = jackknife_mean(scores).expect("n >= 2");
            (Some(agg.mean), Some(agg.jackknife_stderr))
        }
    };
    CellStat {
        mean,
        stderr,
        n: n + errored,
        errored,
    }
}

/// Aggregate result records into per-dataset and macro-averaged tables.
pub fn report(records: &[ResultRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no result records".into()));
    }
    let mut grouped: BTreeMap<(String, String, String), (Vec<f64>, usize)> = BTreeMap::new();
    let mut backends = BTreeSet::new();
    let mut tasks = BTreeSet::new();
    let mut rows = BTreeSet::new();
    for r in records {
        if !r.is_well_formed() {
            return Err(Error::Format(format!(
                "record {:?} must carry exactly one of score and error",
                r.key()
            )));
        }
        let row = row_label(&r.configuration, &r.corruption);
        backends.insert(r.backend.clone());
        tasks.insert(r.task.clone());
        rows.insert(row.clone());
        let e = grouped.entry((r.backend.clone(), row, r.task.clone())).or_default();
        match r.score {
            Some(s) => e.0.push(s),
            None => e.1 += 1,
        }
    }
    let mut rows: Vec<String> = rows.into_iter().collect();
    rows.sort_by(|a, b| row_rank(a).cmp(&row_rank(b)).then_with(|| a.cmp(b)));
    let backends: Vec<String> = backends.into_iter().collect();
    let tasks: Vec<String> = tasks.into_iter().collect();

    let mut footnotes = Vec::new();
    let mut per_dataset = BTreeMap::new();
    let mut macro_avg = BTreeMap::new();
    let mut series = Vec::new();
    for b in &backends {
        let mut by_row = BTreeMap::new();
        let mut macro_rows = BTreeMap::new();
        let mut points = Vec::new();
        for row in &rows {
            let mut by_task = BTreeMap::new();
            let mut means = Vec::new();
            let mut ses = Vec::new();
            let mut complete = true;
            for t in &tasks {
                let Some((scores, errored)) = grouped.get(&(b.clone(), row.clone(), t.clone())) else {
                    continue;
                };
                let stat = cell_stat(scores, *errored);
                if stat.errored > 0 {
                    let note = if stat.mean.is_none() {
                        format!("{b} / {t} / {row}: all {} instances errored", stat.n)
                    } else {
                        format!(
                            "{b} / {t} / {row}: {} of {} instances errored; mean over the rest",
                            stat.errored, stat.n
                        )
                    };
                    footnotes.push(note);
                }
                match stat.mean {
                    Some(m) => {
                        means.push(m);
                        ses.push(stat.stderr);
                    }
                    None => complete = false,
                }
                by_task.insert(t.clone(), stat);
            }
            let mean = if complete { macro_average(&means).ok() } else { None };
            let stderr = if mean.is_some() && ses.iter().all(Option::is_some) {
                let k = ses.len() as f64;
                Some(ses.iter().map(|s| s.unwrap().powi(2)).sum::<f64>().sqrt() / k)
            } else {
                None
            };
            points.push((row.clone(), mean.map(|m| m * 100.0)));
            macro_rows.insert(
                row.clone(),
                MacroStat {
                    mean,
                    stderr,
                    datasets: by_task.len(),
                },
            );
            by_row.insert(row.clone(), by_task);
        }
        per_dataset.insert(b.clone(), by_row);
        macro_avg.insert(b.clone(), macro_rows);
        series.push(PlotSeries {
            backend: b.clone(),
            points,
        });
    }

    Ok(Report {
        backends,
        tasks,
        rows,
        per_dataset,
        macro_average: macro_avg,
        series,
        footnotes,
    })
}

/// Score in [0, 1] as a percentage with one decimal.
pub fn pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.1}", v * 100.0),
        None => MISSING.to_owned(),
    }
}

/// Markdown rendering: one per-dataset table per backend, then the
/// macro-average table with jackknife standard errors.
pub fn render_markdown(rep: &Report) -> String {
    let mut out = String::new();
    let note_index = |b: &str, t: &str, row: &str| {
        let prefix = format!("{b} / {t} / {row}:");
        rep.footnotes.iter().position(|f| f.starts_with(&prefix)).map(|i| i + 1)
    };

    for b in &rep.backends {
        let _ = writeln!(out, "## Per-dataset scores: {b}\n");
        let _ = write!(out, "| Configuration |");
        for t in &rep.tasks {
            let _ = write!(out, " {t} |");
        }
        let _ = write!(out, "\n|---|");
        for _ in &rep.tasks {
            let _ = write!(out, "---:|");
        }
        out.push('\n');
        for row in &rep.rows {
            let _ = write!(out, "| {} |", display_name(row));
            for t in &rep.tasks {
                let cell = rep.per_dataset[b][row].get(t);
                let mut text = match cell {
                    Some(c) => pct(c.mean),
                    None => String::new(),
                };
                if let Some(i) = note_index(b, t, row) {
                    let _ = write!(text, " [{i}]");
                }
                let _ = write!(out, " {text} |");
            }
            out.push('\n');
        }
        out.push('\n');
    }

    let _ = writeln!(out, "## Macro average over datasets\n");
    let _ = write!(out, "| Configuration |");
    for b in &rep.backends {
        let _ = write!(out, " {b} | ± |");
    }
    let _ = write!(out, "\n|---|");
    for _ in &rep.backends {
        let _ = write!(out, "---:|---:|");
    }
    out.push('\n');
    for row in &rep.rows {
        let _ = write!(out, "| {} |", display_name(row));
        for b in &rep.backends {
            let m = &rep.macro_average[b][row];
            let _ = write!(out, " {} | {} |", pct(m.mean), pct(m.stderr));
        }
        out.push('\n');
    }

    if !rep.footnotes.is_empty() {
        out.push('\n');
        for (i, f) in rep.footnotes.iter().enumerate() {
            let _ = writeln!(out, "[{}] {f}", i + 1);
        }
    }
    out
}
