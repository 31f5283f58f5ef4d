use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;

use super::{resolve_configuration, ExperimentConfig, ResolvedConfiguration, ResultRecord};
use crate::backend::{connect, BackendTokenizer, CompletionBackend, CompletionRequest};
use crate::corruption::{self, CorruptionSpec, SentenceCorpus, WordSource};
use crate::datasets::load_task;
use crate::error::{Error, Result};
use crate::metrics::{postprocess, Metric};
use crate::prompt::{assemble, TaskSpec, TaskType, TestInstance};
use crate::rng::{derive_seed, prompt_hash};
use crate::tokenizer::{Tokenizer, WhitespaceTokenizer};

pub const RESULTS_FILE: &str = "results.jsonl";
const PARTIAL_FILE: &str = "results.partial.jsonl";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Overrides `workers` from the config when set.
    pub workers: Option<usize>,
    /// Reuse successful records already in the output directory.
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub results_path: PathBuf,
    pub records: usize,
    pub errored: usize,
    pub reused: usize,
    /// Cells (backend/task/configuration/corruption) where every instance failed.
    pub failed_cells: Vec<String>,
    /// Cells left out because the corruption does not apply to the task.
    pub skipped_cells: Vec<String>,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        self.failed_cells.is_empty()
    }
}

struct PreparedTask {
    spec: Arc<TaskSpec>,
    instances: Vec<TestInstance>,
    metric: Metric,
}

struct Cell {
    configuration: String,
    resolved: ResolvedConfiguration,
    crossed: CorruptionSpec,
}

struct Job {
    backend: usize,
    task: usize,
    cell: usize,
    instance: usize,
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    backends: Vec<Arc<dyn CompletionBackend>>,
    tokenizers: Vec<Box<dyn Tokenizer>>,
    tasks: Vec<PreparedTask>,
    cells: Vec<Cell>,
    words: WordSource,
    corpus: Option<SentenceCorpus>,
}

/// Sampled test instances for one task, as used by `run`.
fn prepare_task(config: &ExperimentConfig, path: &Path) -> Result<PreparedTask> {
    let spec = load_task(path)?;
    if config.shots > spec.demonstrations.len() {
        return Err(Error::Config(format!(
            "task `{}` has {} demonstrations, {} shots requested",
            spec.id,
            spec.demonstrations.len(),
            config.shots
        )));
    }
    let seed = derive_seed(config.master_seed, &["instances", &spec.id]);
    let balanced = spec.task_type == TaskType::Classification;
    let instances = crate::datasets::sample_instances(&spec, config.n_instances, seed, balanced)?;
    Ok(PreparedTask {
        metric: Metric::for_task(spec.task_type),
        spec: Arc::new(spec),
        instances,
    })
}

fn corruption_seed(master: u64, spec_seed: u64) -> u64 {
    derive_seed(master, &["corruption", &spec_seed.to_string()])
}

impl Context<'_> {
    fn key(&self, job: &Job) -> (String, String, String, String, usize) {
        let cell = &self.cells[job.cell];
        (
            self.backends[job.backend].id().to_owned(),
            self.tasks[job.task].spec.id.clone(),
            cell.configuration.clone(),
            cell.crossed.descriptor(),
            job.instance,
        )
    }

    fn execute(&self, job: &Job) -> ResultRecord {
        let (backend_id, task_id, configuration, corruption, instance) = self.key(job);
        let task = &self.tasks[job.task];
        let mut record = ResultRecord {
            backend: backend_id,
            task: task_id,
            configuration,
            corruption,
            instance,
            prompt_hash: String::new(),
            raw_response: None,
            processed_response: None,
            metric: task.metric,
            score: None,
            error: None,
        };
        if let Err(e) = self.evaluate(job, &mut record) {
            record.error = Some(e.to_string());
            record.score = None;
        }
        record
    }

    fn evaluate(&self, job: &Job, record: &mut ResultRecord) -> Result<()> {
        let task = &self.tasks[job.task];
        let cell = &self.cells[job.cell];
        let instance = task.instances[job.instance].clone();
        let tokenizer = self.tokenizers[job.backend].as_ref();
        let master = self.config.master_seed;

        let mut spec = cell
            .resolved
            .layout
            .prompt_spec(task.spec.clone(), instance.clone(), self.config.shots)?;
        if let Some(kind) = &cell.resolved.corruption {
            let preset = CorruptionSpec::new(kind.clone(), corruption_seed(master, 0));
            spec = corruption::apply(&spec, &preset, &self.words, self.corpus.as_ref(), tokenizer)?;
        }
        if !cell.crossed.is_none() {
            let crossed = CorruptionSpec::new(cell.crossed.kind.clone(), corruption_seed(master, cell.crossed.seed));
            spec = corruption::apply(&spec, &crossed, &self.words, self.corpus.as_ref(), tokenizer)?;
        }
        let prompt = assemble(&spec)?;
        record.prompt_hash = prompt_hash(&prompt.text);

        let mut request = CompletionRequest::greedy(prompt.text);
        request.max_new_tokens = self.config.max_new_tokens;
        let response = self.backends[job.backend].complete(&request)?;
        let processed = postprocess(&response.text).to_owned();
        record.score = Some(task.metric.score(&processed, &instance.references).value);
        record.raw_response = Some(response.text);
        record.processed_response = Some(processed);
        Ok(())
    }
}

fn applies(cell: &Cell, task_type: TaskType) -> bool {
    let preset_ok = cell
        .resolved
        .corruption
        .as_ref()
        .is_none_or(|k| CorruptionSpec::new(k.clone(), 0).applies_to(task_type));
    preset_ok && cell.crossed.applies_to(task_type)
}

/// Read a line-delimited results file.
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ResultRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Write records sorted by key, one JSON object per line.
pub fn write_results(path: impl AsRef<Path>, records: &mut [ResultRecord]) -> Result<()> {
    let path = path.as_ref();
    records.sort_by(|a, b| a.key().cmp(&b.key()));
    let tmp = path.with_extension("jsonl.tmp");
    {
        let f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(f);
        for r in records.iter() {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn build_context(config: &ExperimentConfig) -> Result<Context<'_>> {
    config.validate()?;
    let backends = config
        .backends
        .iter()
        .map(connect)
        .collect::<Result<Vec<_>>>()?;
    let tokenizers: Vec<Box<dyn Tokenizer>> = backends
        .iter()
        .map(|b| -> Box<dyn Tokenizer> {
            if b.capabilities().tokenize {
                Box::new(BackendTokenizer(b.clone()))
            } else {
                Box::new(WhitespaceTokenizer)
            }
        })
        .collect();
    let tasks = config
        .tasks
        .iter()
        .map(|p| prepare_task(config, p))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = BTreeSet::new();
    for t in &tasks {
        if !seen.insert(t.spec.id.clone()) {
            return Err(Error::Config(format!("task id `{}` appears twice", t.spec.id)));
        }
    }
    let mut cells = Vec::new();
    for name in &config.configurations {
        let resolved = resolve_configuration(name)?;
        for crossed in &config.corruptions {
            cells.push(Cell {
                configuration: name.clone(),
                resolved: resolved.clone(),
                crossed: crossed.clone(),
            });
        }
    }
    let words = WordSource::load(&config.wordlist)?;
    let corpus = config.corpus.as_ref().map(SentenceCorpus::load).transpose()?;
    Ok(Context {
        config,
        backends,
        tokenizers,
        tasks,
        cells,
        words,
        corpus,
    })
}

/// Evaluate the full grid and write `<output_dir>/results.jsonl`.
///
/// Records stream into a partial file as they complete; the final file is
/// sorted by (backend, task, configuration, corruption, instance), so its
/// bytes do not depend on worker count or scheduling.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let ctx = build_context(config)?;
    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let final_path = out_dir.join(RESULTS_FILE);
    let partial_path = out_dir.join(PARTIAL_FILE);

    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for b in 0..ctx.backends.len() {
        for (t, task) in ctx.tasks.iter().enumerate() {
            for (c, cell) in ctx.cells.iter().enumerate() {
                if !applies(cell, task.spec.task_type) {
                    skipped.push(format!(
                        "{}/{}/{}/{}",
                        ctx.backends[b].id(),
                        task.spec.id,
                        cell.configuration,
                        cell.crossed.descriptor()
                    ));
                    continue;
                }
                for i in 0..task.instances.len() {
                    jobs.push(Job {
                        backend: b,
                        task: t,
                        cell: c,
                        instance: i,
                    });
                }
            }
        }
    }
    skipped.dedup();
    for s in &skipped {
        log::info!("skipping {s}: corruption does not apply to this task type");
    }

    let mut kept: BTreeMap<(String, String, String, String, usize), ResultRecord> = BTreeMap::new();
    if opts.resume {
        let wanted: BTreeSet<_> = jobs.iter().map(|j| ctx.key(j)).collect();
        for path in [&final_path, &partial_path] {
            if path.exists() {
                for r in read_results(path)? {
                    let key = (
                        r.backend.clone(),
                        r.task.clone(),
                        r.configuration.clone(),
                        r.corruption.clone(),
                        r.instance,
                    );
                    if !r.is_error() && wanted.contains(&key) {
                        kept.insert(key, r);
                    }
                }
            }
        }
        jobs.retain(|j| !kept.contains_key(&ctx.key(j)));
    }
    let reused = kept.len();

    let partial = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&partial_path)
        .map_err(|e| Error::io(&partial_path, e))?;
    let mut partial = BufWriter::new(partial);
    for r in kept.values() {
        serde_json::to_writer(&mut partial, r)?;
        partial.write_all(b"\n").map_err(|e| Error::io(&partial_path, e))?;
    }

    let workers = opts.workers.unwrap_or(config.workers).max(1);
    let next = AtomicUsize::new(0);
    let mut fresh = Vec::with_capacity(jobs.len());
    thread::scope(|s| -> Result<()> {
        let (tx, rx) = mpsc::channel::<ResultRecord>();
        for _ in 0..workers.min(jobs.len().max(1)) {
            let tx = tx.clone();
            let (ctx, jobs, next) = (&ctx, &jobs, &next);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                if tx.send(ctx.execute(job)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // single writer
        for record in rx {
            serde_json::to_writer(&mut partial, &record)?;
            partial.write_all(b"\n").map_err(|e| Error::io(&partial_path, e))?;
            partial.flush().map_err(|e| Error::io(&partial_path, e))?;
            fresh.push(record);
        }
        Ok(())
    })?;
    drop(partial);

    let mut records: Vec<ResultRecord> = kept.into_values().chain(fresh).collect();
    write_results(&final_path, &mut records)?;
    fs::remove_file(&partial_path).map_err(|e| Error::io(&partial_path, e))?;

    let mut per_cell: BTreeMap<(&str, &str, &str, &str), (usize, usize)> = BTreeMap::new();
    for r in &records {
        let e = per_cell.entry(r.cell()).or_default();
        e.0 += 1;
        e.1 += usize::from(r.is_error());
    }
    let failed_cells = per_cell
        .iter()
        .filter(|(_, (n, err))| n == err)
        .map(|((b, t, c, k), _)| format!("{b}/{t}/{c}/{k}"))
        .collect();

    Ok(RunSummary {
        results_path: final_path,
        records: records.len(),
        errored: records.iter().filter(|r| r.is_error()).count(),
        reused,
        failed_cells,
        skipped_cells: skipped,
    })
}

/// Recompute processed responses and scores from the raw responses. The
/// config is needed to recover each instance's references.
pub fn rescore(config: &ExperimentConfig, records: &[ResultRecord]) -> Result<Vec<ResultRecord>> {
    let mut tasks = BTreeMap::new();
    for p in &config.tasks {
        let t = prepare_task(config, p)?;
        tasks.insert(t.spec.id.clone(), t);
    }
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            let Some(raw) = r.raw_response.as_deref() else {
                return Ok(r);
            };
            let task = tasks
                .get(&r.task)
                .ok_or_else(|| Error::Config(format!("results mention unknown task `{}`", r.task)))?;
            let instance = task.instances.get(r.instance).ok_or_else(|| {
                Error::Config(format!("task `{}` has no sampled instance {}", r.task, r.instance))
            })?;
            let processed = postprocess(raw).to_owned();
            r.metric = task.metric;
            r.score = Some(task.metric.score(&processed, &instance.references).value);
            r.processed_response = Some(processed);
            r.error = None;
            Ok(r)
        })
        .collect()
}
