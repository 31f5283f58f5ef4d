use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use icl_ablate::attribution::{self, AttentionDump, AttributedSample, AttributionOptions, SpanFile, TokenSpanMap};
use icl_ablate::corruption::{self, CorruptionSpec, SentenceCorpus, WordSource};
use icl_ablate::datasets::load_task;
use icl_ablate::experiment::{self, resolve_configuration, ExperimentConfig, RunOptions};
use icl_ablate::prompt::{assemble, AssembledPrompt, PromptSpec, TestInstance, DEFAULT_SHOTS};
use icl_ablate::tokenizer::WhitespaceTokenizer;

#[derive(Parser)]
#[command(name = "icl-ablate", version, about = "Prompt-component ablation and attention attribution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print an assembled prompt
    Assemble(PromptArgs),
    /// Print a corrupted prompt
    Corrupt {
        #[command(flatten)]
        prompt: PromptArgs,
        /// Corruption descriptor (e.g. `rw_both_instr`, `wrong_label`) or JSON object
        #[arg(long)]
        corruption: String,
        /// One word per line
        #[arg(long)]
        wordlist: PathBuf,
        /// One sentence per line; needed for `ood_inputs`
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate an experiment grid
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Keep successful records from a previous run
        #[arg(long)]
        resume: bool,
        /// Override the output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-score raw responses in a results file
    Score {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the re-scored file (default: overwrite)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-component attention attribution from dump files
    Attribute {
        /// Dump files; each needs a sidecar `<dump>.spans.json` unless --spans is given
        #[arg(long = "dump", required = true)]
        dumps: Vec<PathBuf>,
        /// Sidecar span files, in the same order as --dump
        #[arg(long = "spans")]
        spans: Vec<PathBuf>,
        /// Keep the query token in the aggregation
        #[arg(long)]
        include_query: bool,
        /// Average only samples whose sidecar says `"correct": true`
        #[arg(long)]
        correct_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render tables from a results file
    Report {
        #[arg(long)]
        results: PathBuf,
        /// Directory for report.md and report.json
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PromptArgs {
    #[arg(long)]
    task: PathBuf,
    /// Configuration name, e.g. `baseline` or `inline_in_2_demos`
    #[arg(long, default_value = "baseline")]
    configuration: String,
    /// Index into the task's instances
    #[arg(long, default_value_t = 0)]
    instance: usize,
    /// Use this text as the test instance instead
    #[arg(long)]
    input: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SHOTS)]
    shots: usize,
    /// Print the span map as JSON after the prompt
    #[arg(long)]
    spans: bool,
}

impl PromptArgs {
    fn build(&self) -> Result<(PromptSpec, Option<CorruptionSpec>)> {
        let task = Arc::new(load_task(&self.task)?);
        let instance = match &self.input {
            Some(text) => TestInstance::new(text.clone(), vec![String::new()]),
            None => task
                .instances
                .get(self.instance)
                .cloned()
                .with_context(|| format!("task `{}` has no instance {}", task.id, self.instance))?,
        };
        let resolved = resolve_configuration(&self.configuration)?;
        let spec = resolved.layout.prompt_spec(task, instance, self.shots)?;
        Ok((spec, resolved.corruption.map(|k| CorruptionSpec::new(k, 0))))
    }
}

fn print_prompt(prompt: &AssembledPrompt, spans: bool) -> Result<()> {
    println!("{}", prompt.text);
    if spans {
        println!("{}", serde_json::to_string_pretty(&prompt.spans)?);
    }
    Ok(())
}

fn parse_corruption(s: &str) -> Result<CorruptionSpec> {
    if s.trim_start().starts_with('{') {
        Ok(serde_json::from_str(s)?)
    } else {
        Ok(s.parse()?)
    }
}

fn sidecar_for(dump: &Path) -> PathBuf {
    let mut name = dump.as_os_str().to_owned();
    name.push(".spans.json");
    PathBuf::from(name)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run_cli(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Assemble(args) => {
            let (spec, preset) = args.build()?;
            if preset.is_some() {
                bail!("`{}` includes a corruption; use the corrupt subcommand", args.configuration);
            }
            print_prompt(&assemble(&spec)?, args.spans)?;
        }
        Command::Corrupt {
            prompt,
            corruption,
            wordlist,
            corpus,
            seed,
        } => {
            let (mut spec, preset) = prompt.build()?;
            let words = WordSource::load(&wordlist)?;
            let corpus = corpus.map(SentenceCorpus::load).transpose()?;
            let mut extra = parse_corruption(&corruption)?;
            extra.seed = seed;
            for mut c in preset.into_iter().chain(Some(extra)) {
                c.seed = seed;
                spec = corruption::apply(&spec, &c, &words, corpus.as_ref(), &WhitespaceTokenizer)?;
            }
            print_prompt(&assemble(&spec)?, prompt.spans)?;
        }
        Command::Run {
            config,
            seed,
            workers,
            resume,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let summary = experiment::run(&cfg, &RunOptions { workers, resume })?;
            eprintln!(
                "{} records ({} errored, {} reused) -> {}",
                summary.records,
                summary.errored,
                summary.reused,
                summary.results_path.display()
            );
            for c in &summary.skipped_cells {
                eprintln!("skipped (not applicable): {c}");
            }
            if !summary.success() {
                for c in &summary.failed_cells {
                    eprintln!("every instance failed: {c}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Score {
            config,
            results,
            seed,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let records = experiment::read_results(&results)?;
            let mut rescored = experiment::rescore(&cfg, &records)?;
            experiment::write_results(out.as_deref().unwrap_or(&results), &mut rescored)?;
        }
        Command::Attribute {
            dumps,
            spans,
            include_query,
            correct_only,
            out,
        } => {
            if !spans.is_empty() && spans.len() != dumps.len() {
                bail!("give one --spans per --dump, or none");
            }
            let opts = AttributionOptions {
                exclude_query: !include_query,
            };
            let mut samples = Vec::new();
            for (i, dump_path) in dumps.iter().enumerate() {
                let span_path = spans.get(i).cloned().unwrap_or_else(|| sidecar_for(dump_path));
                let mut dump = AttentionDump::load(dump_path)?;
                let sidecar = SpanFile::load(&span_path)?;
                if sidecar.prompt_id != dump.header.prompt_id {
                    bail!(
                        "{}: prompt_id {:?} does not match dump {:?}",
                        span_path.display(),
                        sidecar.prompt_id,
                        dump.header.prompt_id
                    );
                }
                dump.token_texts = sidecar.token_texts.clone();
                let result = attribution::attribute(&dump, &TokenSpanMap::from_sidecar(&sidecar), opts)
                    .with_context(|| format!("attributing {}", dump_path.display()))?;
                samples.push(AttributedSample {
                    result,
                    correct: sidecar.correct.unwrap_or(false),
                });
            }
            let avg = attribution::average_filtered(&samples, correct_only)?;
            write_or_print(out.as_deref(), &serde_json::to_string_pretty(&avg)?)?;
        }
        Command::Report { results, out } => {
            let records = experiment::read_results(&results)?;
            let rep = experiment::report(&records)?;
            let md = experiment::render_markdown(&rep);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("report.md"), &md)?;
                std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&rep)?)?;
            }
            print!("{md}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run_cli(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
