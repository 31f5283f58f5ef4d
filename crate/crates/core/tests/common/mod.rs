#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use icl_ablate::backend::{BackendDescriptor, StubConfig, StubFallback};
use icl_ablate::corruption::CorruptionSpec;
use icl_ablate::datasets::load_task;
use icl_ablate::experiment::ExperimentConfig;
use icl_ablate::prompt::{assemble, AssembledPrompt, Configuration, TaskSpec, TestInstance};
use rand::Rng;

pub const GOLDEN_TASKS: [&str; 10] = [
    "medical_question_pair",
    "twitter_emotion",
    "cola",
    "com2sense",
    "rte",
    "financial_phrasebank",
    "mathdataset",
    "agnews",
    "copa",
    "triviaqa",
];

pub const TEST_SLOT: &str = "[Test instance.]";

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn golden_task(id: &str) -> Arc<TaskSpec> {
    Arc::new(load_task(fixture(&format!("tasks/{id}.json"))).unwrap())
}

pub fn golden_text(id: &str) -> String {
    std::fs::read_to_string(fixture(&format!("golden/{id}.txt"))).unwrap()
}

pub fn render_baseline(task: Arc<TaskSpec>) -> AssembledPrompt {
    let instance = TestInstance::new(TEST_SLOT, vec![]);
    let spec = Configuration::Baseline.prompt_spec(task, instance, 4).unwrap();
    assemble(&spec).unwrap()
}

/// Byte-exact comparison against the golden file plus the partition check.
pub fn check_golden(id: &str) -> Result<(), String> {
    let prompt = render_baseline(golden_task(id));
    let want = golden_text(id);
    if prompt.text != want {
        let at = prompt
            .text
            .bytes()
            .zip(want.bytes())
            .position(|(a, b)| a != b)
            .unwrap_or(prompt.text.len().min(want.len()));
        return Err(format!("{id}: first difference at byte {at}"));
    }
    prompt.check_partition().map_err(|e| format!("{id}: {e}"))
}

/// LCS by enumerating every subsequence of the shorter sequence.
pub fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let is_subseq = |sub: &[u8]| {
        let mut it = long.iter();
        sub.iter().all(|x| it.any(|y| y == x))
    };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let bits = mask.count_ones() as usize;
        if bits <= best {
            continue;
        }
        let sub: Vec<u8> = (0..short.len()).filter(|i| mask >> i & 1 == 1).map(|i| short[i]).collect();
        if is_subseq(&sub) {
            best = bits;
        }
    }
    best
}

pub fn brute_rouge_l(pred: &[u8], reference: &[u8]) -> f64 {
    let l = brute_lcs(pred, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / pred.len() as f64;
    let r = l / reference.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn random_tokens<R: Rng>(rng: &mut R, max_len: usize, vocab: u8) -> Vec<u8> {
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| rng.gen_range(0..vocab)).collect()
}

/// Random softmax-like rows and feature vectors for an `[L][H][T]` / `[L][H][T][d]` dump.
pub fn random_full_dump<R: Rng>(rng: &mut R, l: usize, h: usize, t: usize, d: usize) -> (Vec<f32>, Vec<f32>) {
    let mut alpha = Vec::with_capacity(l * h * t);
    for _ in 0..l * h {
        let raw: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..1.0f64).powi(3) + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        alpha.extend(raw.iter().map(|x| (x / s) as f32));
    }
    let fvec = (0..l * h * t * d).map(|_| rng.gen_range(-2.0..2.0f32)).collect();
    (alpha, fvec)
}

/// Layer-averaged ‖Σ_h α·f‖ computed straight from the flat buffers.
pub fn naive_norms(alpha: &[f32], fvec: &[f32], l: usize, h: usize, t: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; t];
    for (j, o) in out.iter_mut().enumerate() {
        for layer in 0..l {
            let mut v = vec![0.0f64; d];
            for head in 0..h {
                let a = alpha[(layer * h + head) * t + j] as f64;
                for (k, x) in v.iter_mut().enumerate() {
                    *x += a * fvec[((layer * h + head) * t + j) * d + k] as f64;
                }
            }
            *o += v.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        *o /= l as f64;
    }
    out
}

pub fn toy_config(out: &Path, configurations: &[&str], n: usize) -> ExperimentConfig {
    let stub = StubConfig {
        responses: Default::default(),
        fallback: StubFallback::HashPick {
            choices: vec![
                " Positive. It is".into(),
                " Negative.".into(),
                " 2".into(),
                " 12\nnext".into(),
                " The answer is 11".into(),
            ],
        },
    };
    ExperimentConfig {
        backends: vec![BackendDescriptor::stub("stub-a", stub.clone()), BackendDescriptor::stub("stub-b", stub)],
        tasks: vec![fixture("toy/sentiment.json"), fixture("toy/arith.json")],
        configurations: configurations.iter().map(|s| s.to_string()).collect(),
        corruptions: vec![CorruptionSpec::none()],
        shots: 4,
        n_instances: n,
        master_seed: 7,
        wordlist: fixture("toy/wordlist.txt"),
        corpus: Some(fixture("toy/corpus.txt")),
        output_dir: out.to_path_buf(),
        workers: 1,
        max_new_tokens: 10,
    }
}

/// The fifteen layout names plus one random-word preset.
pub fn sixteen_configurations() -> Vec<String> {
    let mut names: Vec<String> = Configuration::all().iter().map(|c| c.to_string()).collect();
    names.push("rw_both_instr".into());
    names
}
