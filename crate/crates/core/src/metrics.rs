//! Response post-processing, scoring and aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::TaskType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ExactMatch,
    RougeL,
}

impl Metric {
    pub fn for_task(task_type: TaskType) -> Self {
        match task_type {
            TaskType::Classification => Metric::ExactMatch,
            TaskType::Generation => Metric::RougeL,
        }
    }

    /// Score a post-processed prediction against the references.
    pub fn score(self, pred: &str, references: &[String]) -> Score {
        match self {
            Metric::ExactMatch => exact_match(pred, references),
            Metric::RougeL => rouge_l_multi(pred, references),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub metric: Metric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub mean: f64,
    pub jackknife_stderr: f64,
    pub n: usize,
}

/// Cut the response at the first ASCII full stop and trim.
pub fn postprocess(response: &str) -> &str {
    let head = match response.find('.') {
        Some(i) => &response[..i],
        None => response,
    };
    head.trim()
}

fn normalize(text: &str) -> String {
    postprocess(text)
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(pred: &str, references: &[String]) -> Score {
    let p = normalize(pred);
    let hit = references.iter().any(|r| normalize(r) == p);
    Score {
        value: if hit { 1.0 } else { 0.0 },
        metric: Metric::ExactMatch,
    }
}

fn rouge_tokens(text: &str) -> Vec<String> {
    text.to_lowercase().split_whitespace().map(str::to_owned).collect()
}

/// Longest common subsequence length, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Rouge-L F1 over tokens.
pub fn rouge_l_tokens<T: PartialEq>(pred: &[T], reference: &[T]) -> f64 {
    let l = lcs_length(pred, reference) as f64;
    let p = if pred.is_empty() { 0.0 } else { l / pred.len() as f64 };
    let r = if reference.is_empty() { 0.0 } else { l / reference.len() as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Rouge-L F1 on casefolded whitespace tokens.
pub fn rouge_l(pred: &str, reference: &str) -> Score {
    Score {
        value: rouge_l_tokens(&rouge_tokens(pred), &rouge_tokens(reference)),
        metric: Metric::RougeL,
    }
}

/// Best Rouge-L over several references.
pub fn rouge_l_multi(pred: &str, references: &[String]) -> Score {
    let p = rouge_tokens(pred);
    let value = references
        .iter()
        .map(|r| rouge_l_tokens(&p, &rouge_tokens(r)))
        .fold(0.0, f64::max);
    Score {
        value,
        metric: Metric::RougeL,
    }
}

/// Jackknife estimate of the mean and its standard error.
pub fn jackknife_mean(values: &[f64]) -> Result<AggregateResult> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "jackknife needs at least 2 values, got {n}"
        )));
    }
    let nf = n as f64;
    let total: f64 = values.iter().sum();
    let loo: Vec<f64> = values.iter().map(|v| (total - v) / (nf - 1.0)).collect();
    let mean = loo.iter().sum::<f64>() / nf;
    let variance = (nf - 1.0) / nf * loo.iter().map(|t| (t - mean).powi(2)).sum::<f64>();
    Ok(AggregateResult {
        mean,
        jackknife_stderr: variance.sqrt(),
        n,
    })
}

/// Unweighted mean of per-dataset means.
pub fn macro_average(per_dataset_means: &[f64]) -> Result<f64> {
    if per_dataset_means.is_empty() {
        return Err(Error::InsufficientData("macro average of no datasets".into()));
    }
    Ok(per_dataset_means.iter().sum::<f64>() / per_dataset_means.len() as f64)
}
