//! Seeded semantic and repeated-text corruptions.
//!
//! Every corruption is a pure function `PromptSpec -> PromptSpec` that only
//! writes overrides or flags; component order is never touched. Randomness
//! comes from a stream derived from `(seed, task id, instance text, kind)`,
//! so the result for one instance does not depend on which other instances
//! were corrupted before it.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::{inline_mask, PromptSpec, TaskType};
use crate::rng;
use crate::tokenizer::Tokenizer;

/// Draws per replaced slot before giving up on finding a single-token word.
const WORD_FIT_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionTarget {
    Task,
    Inline,
    Both,
}

fn full_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionKind {
    None,
    RandomWordsInstructions {
        targets: InstructionTarget,
        #[serde(default = "full_rate")]
        rate: f64,
    },
    WrongLabel,
    RandomWordsLabel,
    OodInputs,
    /// Keep the inline instruction in the first `inline_count` demonstrations
    /// only; optionally replace the inline instruction with random words.
    RepeatedText {
        inline_count: usize,
        #[serde(default)]
        random_words: bool,
    },
}

impl CorruptionKind {
    fn stream_tag(&self) -> &'static str {
        match self {
            CorruptionKind::None => "none",
            CorruptionKind::RandomWordsInstructions { .. } => "random_words_instructions",
            CorruptionKind::WrongLabel => "wrong_label",
            CorruptionKind::RandomWordsLabel => "random_words_label",
            CorruptionKind::OodInputs => "ood_inputs",
            CorruptionKind::RepeatedText { .. } => "repeated_text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    #[serde(flatten)]
    pub kind: CorruptionKind,
    #[serde(default)]
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, seed: u64) -> Self {
        CorruptionSpec { kind, seed }
    }

    pub fn none() -> Self {
        CorruptionSpec::new(CorruptionKind::None, 0)
    }

    pub fn is_none(&self) -> bool {
        self.kind == CorruptionKind::None
    }

    pub fn needs_corpus(&self) -> bool {
        self.kind == CorruptionKind::OodInputs
    }

    pub fn applies_to(&self, task_type: TaskType) -> bool {
        !(self.kind == CorruptionKind::WrongLabel && task_type == TaskType::Generation)
    }

    /// Short stable name, used as the corruption key in result records.
    pub fn descriptor(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for CorruptionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CorruptionKind::None => f.write_str("none"),
            CorruptionKind::RandomWordsInstructions { targets, rate } => {
                let t = match targets {
                    InstructionTarget::Task => "task",
                    InstructionTarget::Inline => "inline",
                    InstructionTarget::Both => "both",
                };
                write!(f, "rw_{t}_instr")?;
                if *rate != 1.0 {
                    write!(f, "@{rate}")?;
                }
                Ok(())
            }
            CorruptionKind::WrongLabel => f.write_str("wrong_label"),
            CorruptionKind::RandomWordsLabel => f.write_str("rw_labels"),
            CorruptionKind::OodInputs => f.write_str("ood_inputs"),
            CorruptionKind::RepeatedText {
                inline_count,
                random_words: false,
            } => write!(f, "inline_in_{inline_count}_demos"),
            CorruptionKind::RepeatedText {
                inline_count,
                random_words: true,
            } => write!(f, "rw_inline_in_{inline_count}_demos"),
        }
    }
}

/// Parses the descriptor form produced by `Display` (seed 0).
impl FromStr for CorruptionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Config(format!("unknown corruption `{s}`"));
        let kind = match s {
            "none" => CorruptionKind::None,
            "wrong_label" => CorruptionKind::WrongLabel,
            "rw_labels" => CorruptionKind::RandomWordsLabel,
            "ood_inputs" => CorruptionKind::OodInputs,
            _ => {
                if let Some(rest) = s.strip_prefix("rw_inline_in_").and_then(|r| r.strip_suffix("_demos")) {
                    CorruptionKind::RepeatedText {
                        inline_count: rest.parse().map_err(|_| unknown())?,
                        random_words: true,
                    }
                } else if let Some(rest) = s.strip_prefix("inline_in_").and_then(|r| r.strip_suffix("_demos")) {
                    CorruptionKind::RepeatedText {
                        inline_count: rest.parse().map_err(|_| unknown())?,
                        random_words: false,
                    }
                } else if let Some(rest) = s.strip_prefix("rw_") {
                    let (target, rate) = match rest.split_once('@') {
                        Some((t, r)) => (t, r.parse::<f64>().map_err(|_| unknown())?),
                        None => (rest, 1.0),
                    };
                    let targets = match target {
                        "task_instr" => InstructionTarget::Task,
                        "inline_instr" => InstructionTarget::Inline,
                        "both_instr" => InstructionTarget::Both,
                        _ => return Err(unknown()),
                    };
                    CorruptionKind::RandomWordsInstructions { targets, rate }
                } else {
                    return Err(unknown());
                }
            }
        };
        Ok(CorruptionSpec::new(kind, 0))
    }
}

/// Replacement vocabulary for random-word corruptions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSource {
    words: Vec<String>,
}

impl WordSource {
    /// Words are lowercased; blank lines are skipped. A word may not contain
    /// whitespace.
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = Vec::new();
        for (i, w) in words.into_iter().enumerate() {
            let w = w.as_ref().trim();
            if w.is_empty() {
                continue;
            }
            if w.chars().any(char::is_whitespace) {
                return Err(Error::validation(format!("words[{i}]"), format!("{w:?} contains whitespace")));
            }
            out.push(w.to_lowercase());
        }
        if out.is_empty() {
            return Err(Error::validation("words", "word list is empty"));
        }
        Ok(WordSource { words: out })
    }

    /// One word per line, UTF-8.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines())
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        self.words.choose(rng).expect("non-empty by construction")
    }
}

/// Out-of-distribution sentences that replace demonstration inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceCorpus {
    sentences: Vec<String>,
}

impl SentenceCorpus {
    pub fn new<I, S>(sentences: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sentences: Vec<String> = sentences
            .into_iter()
            .map(|s| s.as_ref().trim().to_owned())
            .filter(|s| !s.is_empty())
            .collect();
        if sentences.is_empty() {
            return Err(Error::validation("corpus", "sentence corpus is empty"));
        }
        Ok(SentenceCorpus { sentences })
    }

    /// One sentence per line, UTF-8.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines())
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }
}

/// Replace `ceil(rate * n)` of the `n` tokens of `text` with words drawn
/// uniformly from `words`, keeping the token count unchanged.
pub fn random_words_text<R: Rng + ?Sized>(
    text: &str,
    tokenizer: &dyn Tokenizer,
    words: &WordSource,
    rate: f64,
    rng: &mut R,
) -> Result<String> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::validation("rate", format!("{rate} is outside (0, 1]")));
    }
    let mut tokens = tokenizer.tokenize(text)?;
    let n = tokens.len();
    if n == 0 {
        return Err(Error::validation("text", "tokenizer produced no tokens"));
    }
    let k = ((rate * n as f64).ceil() as usize).clamp(1, n);
    let mut positions = index::sample(rng, n, k).into_vec();
    positions.sort_unstable();
    for pos in positions {
        tokens[pos] = draw_single_token_word(tokenizer, words, rng)?;
    }
    let out = tokenizer.detokenize(&tokens);
    let got = tokenizer.count(&out)?;
    if got != n {
        return Err(Error::Infeasible(format!(
            "random-word text has {got} tokens, expected {n}"
        )));
    }
    Ok(out)
}

fn draw_single_token_word<R: Rng + ?Sized>(
    tokenizer: &dyn Tokenizer,
    words: &WordSource,
    rng: &mut R,
) -> Result<String> {
    for _ in 0..WORD_FIT_ATTEMPTS {
        let w = words.draw(rng);
        if tokenizer.count(w)? == 1 {
            return Ok(w.to_owned());
        }
    }
    Err(Error::Infeasible(format!(
        "no single-token word found in {WORD_FIT_ATTEMPTS} draws"
    )))
}

/// Give a demonstration a label from `label_space` other than its own,
/// uniformly over the alternatives.
pub fn wrong_label<R: Rng + ?Sized>(label: &str, label_space: &[String], rng: &mut R) -> Result<String> {
    if label_space.len() < 2 {
        return Err(Error::Infeasible(format!(
            "wrong-label corruption needs at least two labels, label space has {}",
            label_space.len()
        )));
    }
    if !label_space.iter().any(|l| l == label) {
        return Err(Error::validation("label", format!("{label:?} is not in the label space")));
    }
    let alternatives: Vec<&String> = label_space.iter().filter(|l| *l != label).collect();
    Ok(alternatives.choose(rng).expect("at least one alternative").to_string())
}

/// Replace every demonstration label with random words of the same token
/// count. The instance references are left alone.
pub fn random_words_labels<R: Rng + ?Sized>(
    spec: &PromptSpec,
    words: &WordSource,
    tokenizer: &dyn Tokenizer,
    rng: &mut R,
) -> Result<PromptSpec> {
    let mut out = spec.clone();
    let selected = spec.selected_indices();
    if selected.is_empty() {
        return Ok(out);
    }
    let overrides = out.demo_overrides_mut();
    for (i, &d) in selected.iter().enumerate() {
        let label = spec.demo_label(i, &spec.task.demonstrations[d]);
        overrides[i].label = Some(random_words_text(&label, tokenizer, words, 1.0, rng)?);
    }
    Ok(out)
}

/// Replace every demonstration input with an independent draw (with
/// replacement) from the corpus.
pub fn ood_inputs<R: Rng + ?Sized>(spec: &PromptSpec, corpus: &SentenceCorpus, rng: &mut R) -> Result<PromptSpec> {
    let mut out = spec.clone();
    if spec.shots == 0 {
        return Ok(out);
    }
    for o in out.demo_overrides_mut() {
        o.input = Some(corpus.sentences.choose(rng).expect("non-empty corpus").clone());
    }
    Ok(out)
}

fn wrong_labels<R: Rng + ?Sized>(spec: &PromptSpec, rng: &mut R) -> Result<PromptSpec> {
    if spec.task.task_type != TaskType::Classification {
        return Err(Error::Unsupported(format!(
            "wrong-label corruption on generation task `{}`",
            spec.task.id
        )));
    }
    if spec.task.label_space.len() < 2 {
        return Err(Error::Infeasible(format!(
            "task `{}` has a single label; no wrong label exists",
            spec.task.id
        )));
    }
    let mut out = spec.clone();
    let selected = spec.selected_indices();
    if selected.is_empty() {
        return Ok(out);
    }
    let overrides = out.demo_overrides_mut();
    for (i, &d) in selected.iter().enumerate() {
        let label = spec.demo_label(i, &spec.task.demonstrations[d]);
        overrides[i].label = Some(wrong_label(&label, &spec.task.label_space, rng)?);
    }
    Ok(out)
}

/// Apply one corruption. The input spec is never modified.
pub fn apply(
    spec: &PromptSpec,
    corruption: &CorruptionSpec,
    words: &WordSource,
    corpus: Option<&SentenceCorpus>,
    tokenizer: &dyn Tokenizer,
) -> Result<PromptSpec> {
    let mut rng = rng::substream(
        corruption.seed,
        &[&spec.task.id, &spec.instance.input, corruption.kind.stream_tag()],
    );
    match &corruption.kind {
        CorruptionKind::None => Ok(spec.clone()),
        CorruptionKind::RandomWordsInstructions { targets, rate } => {
            let mut out = spec.clone();
            if matches!(targets, InstructionTarget::Task | InstructionTarget::Both) {
                out.instruction_overrides.task =
                    Some(random_words_text(spec.task_instruction(), tokenizer, words, *rate, &mut rng)?);
            }
            if matches!(targets, InstructionTarget::Inline | InstructionTarget::Both) {
                out.instruction_overrides.inline =
                    Some(random_words_text(spec.inline_instruction(), tokenizer, words, *rate, &mut rng)?);
            }
            Ok(out)
        }
        CorruptionKind::WrongLabel => wrong_labels(spec, &mut rng),
        CorruptionKind::RandomWordsLabel => random_words_labels(spec, words, tokenizer, &mut rng),
        CorruptionKind::OodInputs => {
            let corpus = corpus.ok_or_else(|| Error::Config("OOD-input corruption needs a sentence corpus".into()))?;
            ood_inputs(spec, corpus, &mut rng)
        }
        CorruptionKind::RepeatedText {
            inline_count,
            random_words,
        } => {
            if *inline_count > spec.shots {
                return Err(Error::Config(format!(
                    "inline instruction in {inline_count} demonstrations requested with {} shots",
                    spec.shots
                )));
            }
            let mut out = spec.clone();
            out.inline_mask = inline_mask(spec.shots, *inline_count);
            out.include_test_inline = true;
            if *random_words {
                out.instruction_overrides.inline =
                    Some(random_words_text(spec.inline_instruction(), tokenizer, words, 1.0, &mut rng)?);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::prompt::{assemble, named_configuration, Demonstration, TaskSpec, TestInstance};
    use crate::tokenizer::WhitespaceTokenizer;

    fn words() -> WordSource {
        WordSource::new(["apple", "river", "stone", "cloud", "lamp", "orbit", "mint"]).unwrap()
    }

    fn task(task_type: TaskType, labels: &[&str]) -> Arc<TaskSpec> {
        let label_space: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        Arc::new(TaskSpec {
            id: "t".into(),
            task_type,
            task_instruction: "Decide whether the first sentence entails the second one.".into(),
            inline_instruction: "Does Sentence 1 entail Sentence 2?".into(),
            demonstrations: (0..4)
                .map(|i| Demonstration {
                    input: format!("Sentence {i}."),
                    label: label_space.get(i % label_space.len().max(1)).cloned().unwrap_or("ans".into()),
                })
                .collect(),
            label_space,
            instances: vec![],
        })
    }

    fn baseline(task: Arc<TaskSpec>) -> PromptSpec {
        named_configuration("baseline", task, TestInstance::new("Sentence x.", vec!["Yes".into()])).unwrap()
    }

    #[test]
    fn repeated_text_two_demos() {
        let spec = baseline(task(TaskType::Classification, &["Yes", "No"]));
        let c = CorruptionSpec::new(
            CorruptionKind::RepeatedText {
                inline_count: 2,
                random_words: false,
            },
            1,
        );
        let out = apply(&spec, &c, &words(), None, &WhitespaceTokenizer).unwrap();
        assert_eq!(out.inline_mask, vec![true, true, false, false]);
        assert!(out.include_test_inline);
    }

    #[test]
    fn none_is_identity() {
        let spec = baseline(task(TaskType::Classification, &["Yes", "No"]));
        let out = apply(&spec, &CorruptionSpec::none(), &words(), None, &WhitespaceTokenizer).unwrap();
        assert_eq!(out, spec);
    }

    #[test]
    fn wrong_label_binary_is_forced() {
        let mut rng = rng::substream(0, &["x"]);
        let space = vec!["Yes".to_string(), "No".to_string()];
        assert_eq!(wrong_label("Yes", &space, &mut rng).unwrap(), "No");
        assert!(matches!(
            wrong_label("Yes", &space[..1], &mut rng),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn wrong_label_on_generation_unsupported() {
        let spec = baseline(task(TaskType::Generation, &[]));
        let c = CorruptionSpec::new(CorruptionKind::WrongLabel, 0);
        assert!(matches!(
            apply(&spec, &c, &words(), None, &WhitespaceTokenizer),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn wrong_label_single_label_infeasible() {
        let spec = baseline(task(TaskType::Classification, &["Yes"]));
        let c = CorruptionSpec::new(CorruptionKind::WrongLabel, 0);
        assert!(matches!(
            apply(&spec, &c, &words(), None, &WhitespaceTokenizer),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn random_words_full_rate() {
        let text = "one two three four five six seven eight nine ten eleven twelve";
        let mut rng = rng::substream(5, &["rw"]);
        let out = random_words_text(text, &WhitespaceTokenizer, &words(), 1.0, &mut rng).unwrap();
        let toks: Vec<&str> = out.split_whitespace().collect();
        assert_eq!(toks.len(), 12);
        assert!(toks.iter().all(|t| words().words().iter().any(|w| w == t)));
        assert!(!text.split_whitespace().any(|t| toks.contains(&t)));
    }

    #[test]
    fn random_words_rate_bounds() {
        let mut rng = rng::substream(5, &["rw"]);
        for rate in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(random_words_text("a b", &WhitespaceTokenizer, &words(), rate, &mut rng).is_err());
        }
        assert!(random_words_text("   ", &WhitespaceTokenizer, &words(), 1.0, &mut rng).is_err());
    }

    #[test]
    fn random_words_partial_rate_keeps_rest() {
        let text = "a b c d e f g h i j";
        let mut rng = rng::substream(9, &["rw"]);
        let out = random_words_text(text, &WhitespaceTokenizer, &words(), 0.3, &mut rng).unwrap();
        let kept = out
            .split_whitespace()
            .zip(text.split_whitespace())
            .filter(|(a, b)| a == b)
            .count();
        assert_eq!(kept, 7);
    }

    #[test]
    fn random_words_same_seed_same_output() {
        let a = random_words_text("x y z", &WhitespaceTokenizer, &words(), 1.0, &mut rng::substream(3, &[])).unwrap();
        let b = random_words_text("x y z", &WhitespaceTokenizer, &words(), 1.0, &mut rng::substream(3, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rw_labels_leave_references() {
        let spec = baseline(task(TaskType::Classification, &["Positive", "Negative"]));
        let c = CorruptionSpec::new(CorruptionKind::RandomWordsLabel, 11);
        let out = apply(&spec, &c, &words(), None, &WhitespaceTokenizer).unwrap();
        assert_eq!(out.instance.references, spec.instance.references);
        for o in &out.demo_overrides {
            let l = o.label.as_ref().unwrap();
            assert_eq!(l.split_whitespace().count(), 1);
        }
    }

    #[test]
    fn rw_labels_draw_independently_per_demo() {
        let big = WordSource::new((0..1000).map(|i| format!("w{i}"))).unwrap();
        let spec = baseline(task(TaskType::Classification, &["Positive", "Negative"]));
        let c = CorruptionSpec::new(CorruptionKind::RandomWordsLabel, 11);
        let out = apply(&spec, &c, &big, None, &WhitespaceTokenizer).unwrap();
        let labels: Vec<_> = out.demo_overrides.iter().map(|o| o.label.clone().unwrap()).collect();
        // demos 0 and 2 share "Positive" but draw separately
        assert_ne!(labels[0], labels[2]);
    }

    #[test]
    fn ood_inputs_replace_inputs_only() {
        let spec = baseline(task(TaskType::Classification, &["Yes", "No"]));
        let corpus = SentenceCorpus::new(["The cat sat.", "It rained all day.", "Prices rose."]).unwrap();
        let c = CorruptionSpec::new(CorruptionKind::OodInputs, 4);
        let out = apply(&spec, &c, &words(), Some(&corpus), &WhitespaceTokenizer).unwrap();
        assert_eq!(out.demo_overrides.len(), 4);
        for o in &out.demo_overrides {
            assert!(corpus.sentences().contains(o.input.as_ref().unwrap()));
            assert!(o.label.is_none());
        }
        let again = apply(&spec, &c, &words(), Some(&corpus), &WhitespaceTokenizer).unwrap();
        assert_eq!(out, again);
        let p = assemble(&out).unwrap();
        assert!(p.text.contains("Yes.") && p.text.contains("No."));
    }

    #[test]
    fn ood_single_sentence_corpus() {
        let spec = baseline(task(TaskType::Classification, &["Yes", "No"]));
        let corpus = SentenceCorpus::new(["Only one."]).unwrap();
        let out = ood_inputs(&spec, &corpus, &mut rng::substream(0, &[])).unwrap();
        assert!(out.demo_overrides.iter().all(|o| o.input.as_deref() == Some("Only one.")));
        assert!(SentenceCorpus::new(["", "  "]).is_err());
    }

    #[test]
    fn ood_without_corpus_is_config_error() {
        let spec = baseline(task(TaskType::Classification, &["Yes", "No"]));
        let c = CorruptionSpec::new(CorruptionKind::OodInputs, 0);
        assert!(matches!(
            apply(&spec, &c, &words(), None, &WhitespaceTokenizer),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn descriptors_round_trip() {
        for s in [
            "none",
            "rw_task_instr",
            "rw_inline_instr",
            "rw_both_instr",
            "rw_both_instr@0.5",
            "wrong_label",
            "rw_labels",
            "ood_inputs",
            "inline_in_3_demos",
            "rw_inline_in_0_demos",
        ] {
            let c: CorruptionSpec = s.parse().unwrap();
            assert_eq!(c.descriptor(), s);
        }
        assert!("rw_nothing".parse::<CorruptionSpec>().is_err());
    }

    #[test]
    fn json_form() {
        let c: CorruptionSpec =
            serde_json::from_str(r#"{"kind":"random_words_instructions","targets":"both","seed":3}"#).unwrap();
        assert_eq!(
            c.kind,
            CorruptionKind::RandomWordsInstructions {
                targets: InstructionTarget::Both,
                rate: 1.0
            }
        );
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn wordlist_validation() {
        assert!(WordSource::new(["", " "]).is_err());
        assert!(WordSource::new(["two words"]).is_err());
        assert_eq!(WordSource::new(["Apple", "", "pear"]).unwrap().words(), ["apple", "pear"]);
    }

    /// Splits on spaces and on hyphens, so "a-b" is two tokens.
    struct HyphenTokenizer;
    impl Tokenizer for HyphenTokenizer {
        fn tokenize(&self, text: &str) -> Result<Vec<String>> {
            Ok(text
                .split(|c: char| c.is_whitespace() || c == '-')
                .filter(|t| !t.is_empty())
                .map(str::to_owned)
                .collect())
        }
    }

    #[test]
    fn multi_token_words_are_skipped() {
        let w = WordSource::new(["well-known", "plain", "x-ray"]).unwrap();
        let mut rng = rng::substream(1, &[]);
        let out = random_words_text("a b c d", &HyphenTokenizer, &w, 1.0, &mut rng).unwrap();
        assert_eq!(out, "plain plain plain plain");
        let only_multi = WordSource::new(["well-known"]).unwrap();
        assert!(matches!(
            random_words_text("a", &HyphenTokenizer, &only_multi, 1.0, &mut rng),
            Err(Error::Infeasible(_))
        ));
    }
}
