//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use icl_ablate::attribution::{attribute, per_token_norms, token_contribution, AttentionDump, AttributionOptions, TokenSpan, TokenSpanMap};
use icl_ablate::corruption::{self, apply, CorruptionKind, CorruptionSpec, InstructionTarget, SentenceCorpus, WordSource};
use icl_ablate::experiment::{self, read_results, render_markdown, report, ResultRecord, RunOptions};
use icl_ablate::metrics::{jackknife_mean, lcs_length, rouge_l_tokens, Metric};
use icl_ablate::prompt::{assemble, ComponentKind, Configuration, Demonstration, TaskSpec, TaskType, TestInstance};
use icl_ablate::tokenizer::{Tokenizer, WhitespaceTokenizer};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn golden_prompts() -> Outcome {
    let started = Instant::now();
    for id in GOLDEN_TASKS {
        check_golden(id)?;
    }
    let elapsed = started.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("10/10 byte-exact, partition holds, {elapsed:.2?}"))
}

fn macro_average_fixture() -> Outcome {
    let row = [53.0, 60.0, 34.0, 23.0, 51.0, 58.0, 50.0, 47.0, 17.0, 14.0];
    let mut records = Vec::new();
    for (d, pct) in row.iter().enumerate() {
        let hits = *pct as usize;
        for i in 0..100 {
            records.push(ResultRecord {
                backend: "gpt2-xl".into(),
                task: format!("task{d:02}"),
                configuration: "baseline".into(),
                corruption: "none".into(),
                instance: i,
                prompt_hash: String::new(),
                raw_response: Some(String::new()),
                processed_response: Some(String::new()),
                metric: if d < 8 { Metric::ExactMatch } else { Metric::RougeL },
                score: Some(if i < hits { 1.0 } else { 0.0 }),
                error: None,
            });
        }
    }
    let rep = report(&records).map_err(|e| e.to_string())?;
    let got = experiment::pct(rep.macro_average["gpt2-xl"]["baseline"].mean);
    ensure(got == "40.7", || format!("macro average rendered {got}"))?;
    let md = render_markdown(&rep);
    ensure(md.contains("| Baseline | 40.7 |"), || "markdown table lacks 40.7".into())?;
    Ok("macro average 40.7".into())
}

fn rouge_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let mut worst = 0f64;
    for _ in 0..1000 {
        let vocab = rng.gen_range(2..6);
        let a = random_tokens(&mut rng, 12, vocab);
        let b = random_tokens(&mut rng, 12, vocab);
        ensure(lcs_length(&a, &b) == brute_lcs(&a, &b), || format!("lcs mismatch on {a:?} / {b:?}"))?;
        let delta = (rouge_l_tokens(&a, &b) - brute_rouge_l(&a, &b)).abs();
        worst = worst.max(delta);
        ensure(delta <= 1e-9, || format!("rouge mismatch {delta} on {a:?} / {b:?}"))?;
    }
    let elapsed = started.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!("1000 pairs, max |Δ| = {worst:e}, {elapsed:.2?}"))
}

fn jackknife_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut worst_mean, mut worst_var) = (0f64, 0f64);
    for _ in 0..1000 {
        let n = rng.gen_range(2..=50);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let s2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        let agg = jackknife_mean(&xs).map_err(|e| e.to_string())?;
        let dm = (agg.mean - mean).abs();
        let dv = (agg.jackknife_stderr.powi(2) - s2 / nf).abs();
        worst_mean = worst_mean.max(dm);
        worst_var = worst_var.max(dv);
        ensure(dm <= 1e-12 && dv <= 1e-12, || format!("n={n}: Δmean {dm:e}, Δvar {dv:e}"))?;
    }
    Ok(format!("1000 samples, max Δmean {worst_mean:e}, max Δvar {worst_var:e}"))
}

fn random_task(rng: &mut ChaCha8Rng, vocab: &[&str]) -> TaskSpec {
    let phrase = |rng: &mut ChaCha8Rng, max: usize| {
        let n = rng.gen_range(1..=max);
        (0..n).map(|_| *vocab.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    let k = rng.gen_range(2..=6);
    let label_space: Vec<String> = (0..k).map(|i| format!("Label{i}")).collect();
    let demonstrations = (0..rng.gen_range(4..=6))
        .map(|_| Demonstration {
            input: phrase(rng, 20),
            label: label_space[rng.gen_range(0..k)].clone(),
        })
        .collect();
    TaskSpec {
        id: format!("t{}", rng.gen::<u32>()),
        task_type: TaskType::Classification,
        task_instruction: phrase(rng, 40),
        inline_instruction: phrase(rng, 12),
        label_space,
        demonstrations,
        instances: vec![],
    }
}

fn corruption_properties() -> Outcome {
    const CASES: usize = 10_000;
    let vocab = ["the", "cat", "sat", "on", "a", "mat", "Is", "it", "true?", "label", "sentence.", "x"];
    let words = WordSource::new(["apple", "river", "stone", "cloud", "lamp", "orbit", "mint", "tiger"]).unwrap();
    let corpus = SentenceCorpus::new(["A cat sat.", "Rain fell all day.", "The bell rang twice."]).unwrap();
    let tok = WhitespaceTokenizer;
    let count = |s: &str| tok.count(s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let configs = Configuration::all();
    let mut checks = 0usize;
    for case in 0..CASES {
        let task = Arc::new(random_task(&mut rng, &vocab));
        let layout = *configs.choose(&mut rng).unwrap();
        let instance = TestInstance::new(format!("query {case}"), vec!["Label0".into()]);
        let spec = layout.prompt_spec(task.clone(), instance, 4).map_err(|e| e.to_string())?;
        let seed: u64 = rng.gen();
        let fail = |what: &str| format!("case {case} ({layout}, seed {seed}): {what}");

        // random words keep token counts
        let rate = if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.01..=1.0) };
        let targets = *[InstructionTarget::Task, InstructionTarget::Inline, InstructionTarget::Both]
            .choose(&mut rng)
            .unwrap();
        let rw = apply(&spec, &CorruptionSpec::new(CorruptionKind::RandomWordsInstructions { targets, rate }, seed), &words, None, &tok)
            .map_err(|e| fail(&e.to_string()))?;
        ensure(count(rw.task_instruction()) == count(&task.task_instruction), || fail("task instruction token count"))?;
        ensure(count(rw.inline_instruction()) == count(&task.inline_instruction), || fail("inline instruction token count"))?;
        let rwl = apply(&spec, &CorruptionSpec::new(CorruptionKind::RandomWordsLabel, seed), &words, None, &tok)
            .map_err(|e| fail(&e.to_string()))?;
        for (i, &d) in spec.selected_indices().iter().enumerate() {
            let demo = &task.demonstrations[d];
            ensure(count(&rwl.demo_label(i, demo)) == count(&demo.label), || fail("label token count"))?;
        }

        // wrong label stays in the label space and differs
        let wl = apply(&spec, &CorruptionSpec::new(CorruptionKind::WrongLabel, seed), &words, None, &tok)
            .map_err(|e| fail(&e.to_string()))?;
        for (i, &d) in spec.selected_indices().iter().enumerate() {
            let demo = &task.demonstrations[d];
            let got = wl.demo_label(i, demo);
            ensure(task.label_space.contains(&got) && got != demo.label, || fail("wrong label"))?;
        }

        // repeated text keeps the inline instruction after the test instance
        let k = rng.gen_range(0..=spec.shots);
        let rt = apply(
            &spec,
            &CorruptionSpec::new(CorruptionKind::RepeatedText { inline_count: k, random_words: rng.gen() }, seed),
            &words,
            None,
            &tok,
        )
        .map_err(|e| fail(&e.to_string()))?;
        let p = assemble(&rt).map_err(|e| fail(&e.to_string()))?;
        let last = p.spans.last().unwrap();
        ensure(
            last.kind == ComponentKind::InlineInstruction && last.demo_index.is_none() && p.span_text(last) == rt.inline_instruction(),
            || fail("test-instance inline instruction missing"),
        )?;

        // purity and seed determinism
        let kind = match rng.gen_range(0..4) {
            0 => CorruptionKind::RandomWordsInstructions { targets, rate },
            1 => CorruptionKind::WrongLabel,
            2 => CorruptionKind::RandomWordsLabel,
            _ => CorruptionKind::OodInputs,
        };
        let before = spec.clone();
        let c = CorruptionSpec::new(kind, seed);
        let a = apply(&spec, &c, &words, Some(&corpus), &tok).map_err(|e| fail(&e.to_string()))?;
        let b = apply(&spec, &c, &words, Some(&corpus), &tok).map_err(|e| fail(&e.to_string()))?;
        ensure(spec == before, || fail("apply mutated its input"))?;
        ensure(a == b, || fail("same seed, different output"))?;
        assemble(&a)
            .and_then(|p| p.check_partition())
            .map_err(|e| fail(&e.to_string()))?;

        let mut r = icl_ablate::rng::substream(seed, &["direct"]);
        let text = corruption::random_words_text(&task.task_instruction, &tok, &words, rate, &mut r).map_err(|e| fail(&e.to_string()))?;
        ensure(count(&text) == count(&task.task_instruction), || fail("random_words_text token count"))?;
        checks += 1;
    }
    Ok(format!("{checks} randomized cases, 0 failures"))
}

fn attribution_oracle() -> Outcome {
    const L: usize = 3;
    const H: usize = 2;
    const T: usize = 16;
    const D: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let s = |kind, start, end| TokenSpan { kind, demo: None, start, end };
    let map = TokenSpanMap::new(vec![
        s(ComponentKind::TaskInstruction, 0, 4),
        s(ComponentKind::Separator, 4, 5),
        s(ComponentKind::DemonstrationInput, 5, 9),
        s(ComponentKind::Label, 9, 10),
        s(ComponentKind::TestInstance, 10, 13),
        s(ComponentKind::InlineInstruction, 13, 16),
    ]);
    let (mut worst_norm, mut worst_pct) = (0f64, 0f64);
    for _ in 0..200 {
        let (alpha, fvec) = random_full_dump(&mut rng, L, H, T, D);
        let naive = naive_norms(&alpha, &fvec, L, H, T, D);
        let dump = AttentionDump::full("p", L, H, T, D, alpha.clone(), fvec.clone()).map_err(|e| e.to_string())?;
        let got = per_token_norms(&dump).map_err(|e| e.to_string())?;
        for (g, n) in got.iter().zip(&naive) {
            worst_norm = worst_norm.max((g - n).abs());
        }
        ensure(worst_norm <= 1e-6, || format!("norm mismatch {worst_norm:e}"))?;

        let base = attribute(&dump, &map, AttributionOptions::default()).map_err(|e| e.to_string())?;
        ensure((base.percent_sum() - 100.0).abs() <= 1e-6, || format!("percent sum {}", base.percent_sum()))?;
        // powers of two scale f32 values exactly
        let c: f32 = *[0.125f32, 0.25, 0.5, 2.0, 4.0, 8.0].choose(&mut rng).unwrap();
        let scaled = AttentionDump::full("p", L, H, T, D, alpha, fvec.iter().map(|v| v * c).collect())
            .map_err(|e| e.to_string())?;
        let sc = attribute(&scaled, &map, AttributionOptions::default()).map_err(|e| e.to_string())?;
        for (a, b) in base.components.iter().zip(&sc.components) {
            let rel = (b.raw - a.raw * c as f64).abs() / a.raw.max(1e-12);
            ensure(rel <= 1e-6, || format!("raw not homogeneous: {rel:e}"))?;
            worst_pct = worst_pct.max((a.percent - b.percent).abs());
        }
        ensure(worst_pct <= 1e-9, || format!("percentages moved by {worst_pct:e}"))?;
        ensure((sc.percent_sum() - 100.0).abs() <= 1e-6, || "scaled percent sum".into())?;
    }
    let two = AttentionDump::full("p", 1, 2, 2, 2, vec![0.5; 4], vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
    let v = token_contribution(&two, 0, 0).map_err(|e| e.to_string())?;
    ensure((v - 0.5f64.sqrt()).abs() <= 1e-12, || format!("two-head case gave {v}"))?;
    Ok(format!("max norm Δ {worst_norm:e}, max percent Δ {worst_pct:e}, two-head {v:.4}"))
}

fn end_to_end_determinism() -> Outcome {
    let started = Instant::now();
    let names = sixteen_configurations();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let one = experiment::run(&toy_config(a.path(), &refs, 8), &RunOptions { workers: Some(1), resume: false })
        .map_err(|e| e.to_string())?;
    let eight = experiment::run(&toy_config(b.path(), &refs, 8), &RunOptions { workers: Some(8), resume: false })
        .map_err(|e| e.to_string())?;
    ensure(one.success() && eight.success(), || "run reported failed cells".into())?;
    let (fa, fb) = (std::fs::read(&one.results_path).unwrap(), std::fs::read(&eight.results_path).unwrap());
    ensure(fa == fb, || "results differ between 1 and 8 workers".into())?;
    let rep = report(&read_results(&one.results_path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(rep.rows.len() == 16 && rep.tasks.len() == 2, || format!("report has {} rows", rep.rows.len()))?;
    let md = render_markdown(&rep);
    ensure(md.contains("## Macro average over datasets") && md.contains("| + task instr. + demos. |"), || {
        "report is not table-shaped".into()
    })?;
    let elapsed = started.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!("{} records, bit-identical, {elapsed:.2?}", one.records))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("golden prompts", golden_prompts),
        ("macro-average fixture", macro_average_fixture),
        ("rouge-l oracle", rouge_oracle),
        ("jackknife identities", jackknife_identities),
        ("corruption properties", corruption_properties),
        ("attribution oracle", attribution_oracle),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
