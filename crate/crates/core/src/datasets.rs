//! Task files and test-instance sampling.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::{TaskSpec, TaskType, TestInstance};
use crate::rng;

/// On-disk task document: a [`TaskSpec`] plus optional provenance notes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFile {
    #[serde(flatten)]
    pub task: TaskSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub license: Option<String>,
}

/// Parse and validate a task document.
pub fn parse_task(json: &str) -> Result<TaskFile> {
    let file: TaskFile = serde_json::from_str(json).map_err(|e| {
        Error::validation(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    file.task.validate()?;
    Ok(file)
}

pub fn load_task_file(path: impl AsRef<Path>) -> Result<TaskFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_task(&text).map_err(|e| match e {
        Error::Validation { path: field, message } => Error::Validation {
            path: format!("{}: {field}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn load_task(path: impl AsRef<Path>) -> Result<TaskSpec> {
    Ok(load_task_file(path)?.task)
}

pub fn save_task(file: &TaskFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(file)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Draw `n` test instances, deterministically for a given seed.
///
/// In balanced mode each label of the label space gets `n / k` instances
/// and the first `n % k` labels (in label-space order) one more. Instances
/// are grouped by their first reference.
pub fn sample_instances(task: &TaskSpec, n: usize, seed: u64, balanced: bool) -> Result<Vec<TestInstance>> {
    let mut rng = rng::substream(seed, &["sample_instances", &task.id]);
    if n == 0 {
        return Ok(Vec::new());
    }
    if !balanced {
        if n > task.instances.len() {
            return Err(Error::Infeasible(format!(
                "task `{}`: {n} instances requested, {} available",
                task.id,
                task.instances.len()
            )));
        }
        let mut picked = index::sample(&mut rng, task.instances.len(), n).into_vec();
        picked.sort_unstable();
        let mut out: Vec<TestInstance> = picked.into_iter().map(|i| task.instances[i].clone()).collect();
        out.shuffle(&mut rng);
        return Ok(out);
    }

    if task.task_type != TaskType::Classification {
        return Err(Error::Config(format!(
            "task `{}`: balanced sampling needs a classification task",
            task.id
        )));
    }
    let k = task.label_space.len();
    let groups: Vec<Vec<usize>> = task
        .label_space
        .iter()
        .map(|label| {
            task.instances
                .iter()
                .enumerate()
                .filter(|(_, inst)| inst.references.first() == Some(label))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let quota = |li: usize| n / k + usize::from(li < n % k);

    let shortfalls: Vec<String> = task
        .label_space
        .iter()
        .enumerate()
        .filter(|&(li, _)| groups[li].len() < quota(li))
        .map(|(li, label)| format!("{label}: need {}, have {}", quota(li), groups[li].len()))
        .collect();
    if !shortfalls.is_empty() {
        return Err(Error::Infeasible(format!(
            "task `{}`: not enough instances for a balanced sample of {n} ({})",
            task.id,
            shortfalls.join("; ")
        )));
    }

    let mut picked = Vec::with_capacity(n);
    for (li, group) in groups.iter().enumerate() {
        let mut chosen: Vec<usize> = index::sample(&mut rng, group.len(), quota(li))
            .into_iter()
            .map(|g| group[g])
            .collect();
        chosen.sort_unstable();
        picked.extend(chosen);
    }
    picked.shuffle(&mut rng);
    Ok(picked.into_iter().map(|i| task.instances[i].clone()).collect())
}
