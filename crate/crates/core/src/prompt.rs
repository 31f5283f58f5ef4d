//! Prompt components and deterministic prompt assembly.
//!
//! A prompt is built from a task instruction, a run of demonstrations
//! (input, inline instruction, label) and the test instance followed by its
//! inline instruction. [`assemble`] lays these out with a fixed rule and
//! records, for every emitted piece, which component it came from. Offsets
//! are counted in Unicode scalar values.
//!
//! Layout:
//!
//! ```text
//! <task instruction>\n\n
//! <input> <inline instruction> <label>.\n\n      (once per demonstration)
//! <test input> <inline instruction>
//! ```
//!
//! Pieces switched off by the [`PromptSpec`] are dropped together with the
//! space that would have joined them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Separator emitted after the task instruction and after each demonstration.
pub const BLOCK_SEPARATOR: &str = "\n\n";
/// Number of demonstrations used by the named configurations.
pub const DEFAULT_SHOTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    TaskInstruction,
    DemonstrationInput,
    InlineInstruction,
    Label,
    Separator,
    TestInstance,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 6] = [
        ComponentKind::TaskInstruction,
        ComponentKind::DemonstrationInput,
        ComponentKind::InlineInstruction,
        ComponentKind::Label,
        ComponentKind::Separator,
        ComponentKind::TestInstance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::TaskInstruction => "task_instruction",
            ComponentKind::DemonstrationInput => "demonstration_input",
            ComponentKind::InlineInstruction => "inline_instruction",
            ComponentKind::Label => "label",
            ComponentKind::Separator => "separator",
            ComponentKind::TestInstance => "test_instance",
        }
    }

    /// Kinds that may carry a demonstration index.
    pub fn is_demo_part(self) -> bool {
        matches!(
            self,
            ComponentKind::DemonstrationInput | ComponentKind::InlineInstruction | ComponentKind::Label
        )
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Classification,
    Generation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub input: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestInstance {
    pub input: String,
    /// Acceptable answers. A single label for classification tasks.
    pub references: Vec<String>,
}

impl TestInstance {
    pub fn new(input: impl Into<String>, references: Vec<String>) -> Self {
        TestInstance {
            input: input.into(),
            references,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    #[serde(rename = "type")]
    pub task_type: TaskType,
    pub task_instruction: String,
    pub inline_instruction: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_space: Vec<String>,
    pub demonstrations: Vec<Demonstration>,
    #[serde(default)]
    pub instances: Vec<TestInstance>,
}

impl TaskSpec {
    /// Check the structural invariants. Errors carry a JSON-style field path.
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::validation("id", "must be non-empty"));
        }
        match self.task_type {
            TaskType::Classification if self.label_space.is_empty() => {
                return Err(Error::validation(
                    "label_space",
                    "required and non-empty for classification tasks",
                ));
            }
            _ => {}
        }
        for (i, label) in self.label_space.iter().enumerate() {
            if label.trim().is_empty() {
                return Err(Error::validation(format!("label_space[{i}]"), "empty label"));
            }
            if self.label_space[..i].contains(label) {
                return Err(Error::validation(
                    format!("label_space[{i}]"),
                    format!("duplicate label {label:?}"),
                ));
            }
        }
        for (i, demo) in self.demonstrations.iter().enumerate() {
            if demo.input.trim().is_empty() {
                return Err(Error::validation(format!("demonstrations[{i}].input"), "empty"));
            }
            if demo.label.trim().is_empty() {
                return Err(Error::validation(format!("demonstrations[{i}].label"), "empty"));
            }
            if self.task_type == TaskType::Classification && !self.label_space.contains(&demo.label) {
                return Err(Error::validation(
                    format!("demonstrations[{i}].label"),
                    format!("{:?} is not in label_space", demo.label),
                ));
            }
        }
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.input.trim().is_empty() {
                return Err(Error::validation(format!("instances[{i}].input"), "empty"));
            }
            if inst.references.is_empty() {
                return Err(Error::validation(
                    format!("instances[{i}].references"),
                    "at least one reference is required",
                ));
            }
            if self.task_type == TaskType::Classification {
                for (r, reference) in inst.references.iter().enumerate() {
                    if !self.label_space.contains(reference) {
                        return Err(Error::validation(
                            format!("instances[{i}].references[{r}]"),
                            format!("{reference:?} is not in label_space"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Replacement text for one selected demonstration. `None` keeps the original.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Replacement instruction texts. The inline override applies to every
/// occurrence, including the one after the test instance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub task: Arc<TaskSpec>,
    pub shots: usize,
    pub include_task_instruction: bool,
    /// One flag per selected demonstration.
    pub inline_mask: Vec<bool>,
    pub include_demo_inputs: bool,
    pub include_demo_labels: bool,
    pub include_test_inline: bool,
    /// Empty, or exactly one entry per selected demonstration.
    pub demo_overrides: Vec<DemoOverride>,
    pub instruction_overrides: InstructionOverrides,
    /// Shuffle the demonstration pool with this seed before taking `shots`.
    /// Off by default: demonstrations are used in task-file order.
    pub demo_shuffle_seed: Option<u64>,
    pub instance: TestInstance,
}

impl PromptSpec {
    /// The full prompt: task instruction, `shots` demonstrations with inline
    /// instructions, and the test instance with its inline instruction.
    pub fn baseline(task: Arc<TaskSpec>, shots: usize, instance: TestInstance) -> Self {
        PromptSpec {
            task,
            shots,
            include_task_instruction: true,
            inline_mask: vec![true; shots],
            include_demo_inputs: true,
            include_demo_labels: true,
            include_test_inline: true,
            demo_overrides: Vec::new(),
            instruction_overrides: InstructionOverrides::default(),
            demo_shuffle_seed: None,
            instance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots > self.task.demonstrations.len() {
            return Err(Error::Config(format!(
                "{} shots requested but task `{}` has only {} demonstrations",
                self.shots,
                self.task.id,
                self.task.demonstrations.len()
            )));
        }
        if self.inline_mask.len() != self.shots {
            return Err(Error::Config(format!(
                "inline_mask has {} entries for {} shots",
                self.inline_mask.len(),
                self.shots
            )));
        }
        if !self.demo_overrides.is_empty() && self.demo_overrides.len() != self.shots {
            return Err(Error::Config(format!(
                "demo_overrides has {} entries for {} shots",
                self.demo_overrides.len(),
                self.shots
            )));
        }
        if self.instance.input.trim().is_empty() {
            return Err(Error::validation("instance.input", "empty test instance"));
        }
        Ok(())
    }

    /// Indices into `task.demonstrations` of the demonstrations this prompt uses.
    pub fn selected_indices(&self) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..self.task.demonstrations.len()).collect();
        if let Some(seed) = self.demo_shuffle_seed {
            let mut rng = rng::substream(seed, &["demo_order", &self.task.id]);
            pool.shuffle(&mut rng);
        }
        pool.truncate(self.shots);
        pool
    }

    /// Effective input text of selected demonstration `i`.
    pub fn demo_input(&self, i: usize, original: &Demonstration) -> String {
        self.demo_overrides
            .get(i)
            .and_then(|o| o.input.clone())
            .unwrap_or_else(|| original.input.clone())
    }

    pub fn demo_label(&self, i: usize, original: &Demonstration) -> String {
        self.demo_overrides
            .get(i)
            .and_then(|o| o.label.clone())
            .unwrap_or_else(|| original.label.clone())
    }

    pub fn task_instruction(&self) -> &str {
        self.instruction_overrides
            .task
            .as_deref()
            .unwrap_or(&self.task.task_instruction)
    }

    pub fn inline_instruction(&self) -> &str {
        self.instruction_overrides
            .inline
            .as_deref()
            .unwrap_or(&self.task.inline_instruction)
    }

    /// Make sure `demo_overrides` has one slot per shot, so callers can edit in place.
    pub fn demo_overrides_mut(&mut self) -> &mut [DemoOverride] {
        if self.demo_overrides.len() != self.shots {
            self.demo_overrides = vec![DemoOverride::default(); self.shots];
        }
        &mut self.demo_overrides
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub kind: ComponentKind,
    #[serde(rename = "demo")]
    pub demo_index: Option<usize>,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub text: String,
    pub spans: Vec<Span>,
}

impl AssembledPrompt {
    /// Length in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Text covered by a span.
    pub fn span_text(&self, span: &Span) -> &str {
        let start = char_to_byte(&self.text, span.start);
        let end = char_to_byte(&self.text, span.end);
        &self.text[start..end]
    }

    /// Check the partition property: spans are sorted, contiguous and
    /// concatenate to the full text.
    pub fn check_partition(&self) -> Result<()> {
        let mut cursor = 0;
        let mut rebuilt = String::with_capacity(self.text.len());
        for (i, span) in self.spans.iter().enumerate() {
            if span.start != cursor || span.end < span.start {
                return Err(Error::validation(
                    format!("spans[{i}]"),
                    format!("expected to start at {cursor}, got {}..{}", span.start, span.end),
                ));
            }
            if span.demo_index.is_some() && !span.kind.is_demo_part() {
                return Err(Error::validation(
                    format!("spans[{i}]"),
                    format!("{} span carries a demonstration index", span.kind),
                ));
            }
            rebuilt.push_str(self.span_text(span));
            cursor = span.end;
        }
        if cursor != self.char_len() || rebuilt != self.text {
            return Err(Error::validation("spans", "spans do not cover the prompt text"));
        }
        Ok(())
    }
}

fn char_to_byte(text: &str, chars: usize) -> usize {
    text.char_indices()
        .nth(chars)
        .map(|(b, _)| b)
        .unwrap_or(text.len())
}

#[derive(Default)]
struct Builder {
    text: String,
    spans: Vec<Span>,
    cursor: usize,
}

impl Builder {
    fn push(&mut self, kind: ComponentKind, demo: Option<usize>, piece: &str) {
        let len = piece.chars().count();
        if len == 0 {
            return;
        }
        self.text.push_str(piece);
        self.spans.push(Span {
            kind,
            demo_index: demo,
            start: self.cursor,
            end: self.cursor + len,
        });
        self.cursor += len;
    }

    fn sep(&mut self, piece: &str) {
        self.push(ComponentKind::Separator, None, piece);
    }
}

/// Lay out a prompt and record its component spans.
pub fn assemble(spec: &PromptSpec) -> Result<AssembledPrompt> {
    spec.validate()?;
    let mut b = Builder::default();

    if spec.include_task_instruction {
        b.push(ComponentKind::TaskInstruction, None, spec.task_instruction());
        b.sep(BLOCK_SEPARATOR);
    }

    for (i, &demo_idx) in spec.selected_indices().iter().enumerate() {
        let original = &spec.task.demonstrations[demo_idx];
        let mut emitted = false;
        if spec.include_demo_inputs {
            b.push(ComponentKind::DemonstrationInput, Some(i), &spec.demo_input(i, original));
            emitted = true;
        }
        if spec.inline_mask[i] {
            if emitted {
                b.sep(" ");
            }
            b.push(ComponentKind::InlineInstruction, Some(i), spec.inline_instruction());
            emitted = true;
        }
        if spec.include_demo_labels {
            if emitted {
                b.sep(" ");
            }
            b.push(ComponentKind::Label, Some(i), &spec.demo_label(i, original));
            b.sep(".");
            emitted = true;
        }
        if emitted {
            b.sep(BLOCK_SEPARATOR);
        }
    }

    b.push(ComponentKind::TestInstance, None, &spec.instance.input);
    if spec.include_test_inline {
        b.sep(" ");
        b.push(ComponentKind::InlineInstruction, None, spec.inline_instruction());
    }

    Ok(AssembledPrompt {
        text: b.text,
        spans: b.spans,
    })
}

/// The prompt configurations of the ablation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Configuration {
    TestInstance,
    PlusTaskInstr,
    PlusInlineInstr,
    PlusBothInstr,
    PlusDemos,
    PlusTaskInstrDemos,
    PlusInlineInstrDemos,
    Baseline,
    BaselineMinusInputs,
    BaselineMinusLabels,
    /// Inline instruction kept in the first `k` demonstrations (and after the test instance).
    InlineInKDemos(usize),
}

impl Configuration {
    pub const MAX_INLINE_DEMOS: usize = 4;

    pub fn all() -> Vec<Configuration> {
        let mut v = vec![
            Configuration::TestInstance,
            Configuration::PlusTaskInstr,
            Configuration::PlusInlineInstr,
            Configuration::PlusBothInstr,
            Configuration::PlusDemos,
            Configuration::PlusTaskInstrDemos,
            Configuration::PlusInlineInstrDemos,
            Configuration::Baseline,
            Configuration::BaselineMinusInputs,
            Configuration::BaselineMinusLabels,
        ];
        v.extend((0..=Self::MAX_INLINE_DEMOS).rev().map(Configuration::InlineInKDemos));
        v
    }

    /// Build the [`PromptSpec`] for this configuration with `shots` demonstrations
    /// in the demonstration-bearing rows.
    pub fn prompt_spec(self, task: Arc<TaskSpec>, instance: TestInstance, shots: usize) -> Result<PromptSpec> {
        let mut spec = PromptSpec::baseline(task, shots, instance);
        let zero_shot = |spec: &mut PromptSpec| {
            spec.shots = 0;
            spec.inline_mask.clear();
        };
        match self {
            Configuration::TestInstance => {
                zero_shot(&mut spec);
                spec.include_task_instruction = false;
                spec.include_test_inline = false;
            }
            Configuration::PlusTaskInstr => {
                zero_shot(&mut spec);
                spec.include_test_inline = false;
            }
            Configuration::PlusInlineInstr => {
                zero_shot(&mut spec);
                spec.include_task_instruction = false;
            }
            Configuration::PlusBothInstr => zero_shot(&mut spec),
            Configuration::PlusDemos => {
                spec.include_task_instruction = false;
                spec.inline_mask = vec![false; shots];
                spec.include_test_inline = false;
            }
            Configuration::PlusTaskInstrDemos => {
                spec.inline_mask = vec![false; shots];
                spec.include_test_inline = false;
            }
            Configuration::PlusInlineInstrDemos => spec.include_task_instruction = false,
            Configuration::Baseline => {}
            Configuration::BaselineMinusInputs => spec.include_demo_inputs = false,
            Configuration::BaselineMinusLabels => spec.include_demo_labels = false,
            Configuration::InlineInKDemos(k) => {
                if k > Self::MAX_INLINE_DEMOS {
                    return Err(Error::Config(format!(
                        "inline_in_{k}_demos: k must be at most {}",
                        Self::MAX_INLINE_DEMOS
                    )));
                }
                spec.inline_mask = inline_mask(shots, k);
            }
        }
        Ok(spec)
    }
}

/// Inline instruction kept in the first `k` of `shots` demonstrations; later
/// demonstrations lose theirs first.
pub fn inline_mask(shots: usize, k: usize) -> Vec<bool> {
    (0..shots).map(|i| i < k).collect()
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Configuration::TestInstance => f.write_str("test_instance"),
            Configuration::PlusTaskInstr => f.write_str("plus_task_instr"),
            Configuration::PlusInlineInstr => f.write_str("plus_inline_instr"),
            Configuration::PlusBothInstr => f.write_str("plus_both_instr"),
            Configuration::PlusDemos => f.write_str("plus_demos"),
            Configuration::PlusTaskInstrDemos => f.write_str("plus_task_instr_demos"),
            Configuration::PlusInlineInstrDemos => f.write_str("plus_inline_instr_demos"),
            Configuration::Baseline => f.write_str("baseline"),
            Configuration::BaselineMinusInputs => f.write_str("baseline_minus_inputs"),
            Configuration::BaselineMinusLabels => f.write_str("baseline_minus_labels"),
            Configuration::InlineInKDemos(k) => write!(f, "inline_in_{k}_demos"),
        }
    }
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let c = match s {
            "test_instance" => Configuration::TestInstance,
            "plus_task_instr" => Configuration::PlusTaskInstr,
            "plus_inline_instr" => Configuration::PlusInlineInstr,
            "plus_both_instr" => Configuration::PlusBothInstr,
            "plus_demos" => Configuration::PlusDemos,
            "plus_task_instr_demos" => Configuration::PlusTaskInstrDemos,
            "plus_inline_instr_demos" => Configuration::PlusInlineInstrDemos,
            "baseline" => Configuration::Baseline,
            "baseline_minus_inputs" => Configuration::BaselineMinusInputs,
            "baseline_minus_labels" => Configuration::BaselineMinusLabels,
            other => {
                let k = other
                    .strip_prefix("inline_in_")
                    .and_then(|rest| rest.strip_suffix("_demos"))
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k <= Self::MAX_INLINE_DEMOS)
                    .ok_or_else(|| Error::Config(format!("unknown configuration `{other}`")))?;
                Configuration::InlineInKDemos(k)
            }
        };
        Ok(c)
    }
}

/// Resolve a configuration name into a 4-shot [`PromptSpec`].
pub fn named_configuration(name: &str, task: Arc<TaskSpec>, instance: TestInstance) -> Result<PromptSpec> {
    name.parse::<Configuration>()?
        .prompt_spec(task, instance, DEFAULT_SHOTS)
}
