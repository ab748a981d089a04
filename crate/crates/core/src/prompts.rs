//! Prompt construction for the three classification strategies.
//!
//! Every prompt shares the same skeleton: a role instruction, the seven
//! class definitions, the ordered decision-priority rules, the query diff
//! between [`DIFF_OPEN`]/[`DIFF_CLOSE`] marker lines, and the byte-exact
//! [`ANSWER_FORMAT_INSTRUCTION`] as the final line. Few-shot prompts insert
//! worked examples before the query diff; chain-of-thought prompts insert a
//! reasoning instruction before the answer instruction.
//!
//! Rendering is pure: the same sample, spec, and bank always produce the
//! same bytes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ccparse::CommitClass;
use crate::miner::{Dataset, LabeledSample};

/// Prompting strategy. Ordering follows presentation order in reports:
/// zero-shot, few-shot, chain-of-thought.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    ZeroShot,
    FewShot,
    ChainOfThought,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::ZeroShot,
        StrategyKind::FewShot,
        StrategyKind::ChainOfThought,
    ];

    /// Identifier used in config files, logs, and CSV rows.
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::ZeroShot => "zero_shot",
            StrategyKind::FewShot => "few_shot",
            StrategyKind::ChainOfThought => "chain_of_thought",
        }
    }

    /// Human-facing name used in rendered tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            StrategyKind::ZeroShot => "Zero-shot",
            StrategyKind::FewShot => "Few-shot",
            StrategyKind::ChainOfThought => "Chain-of-thought",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How to render prompts for one strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// Worked examples per class in few-shot prompts.
    #[serde(default = "default_examples_per_class")]
    pub examples_per_class: usize,
    /// Character budget for each embedded diff.
    #[serde(default = "default_max_diff_chars")]
    pub max_diff_chars: usize,
    /// Whether to include the stripped commit message alongside the diff.
    #[serde(default)]
    pub include_message: bool,
}

fn default_examples_per_class() -> usize {
    1
}

fn default_max_diff_chars() -> usize {
    4000
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        StrategySpec {
            kind,
            examples_per_class: default_examples_per_class(),
            max_diff_chars: default_max_diff_chars(),
            include_message: false,
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.examples_per_class == 0 {
            return Err(PromptError::NoExamplesRequested);
        }
        if self.max_diff_chars < MIN_DIFF_BUDGET {
            return Err(PromptError::DiffBudgetTooSmall(self.max_diff_chars));
        }
        Ok(())
    }
}

/// One worked example available to few-shot prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankExample {
    pub commit_id: String,
    pub label: CommitClass,
    pub diff: String,
}

/// Worked examples grouped by class, in selection order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExampleBank {
    examples: BTreeMap<CommitClass, Vec<BankExample>>,
}

impl ExampleBank {
    pub fn new(examples: Vec<BankExample>) -> Self {
        let mut grouped: BTreeMap<CommitClass, Vec<BankExample>> = BTreeMap::new();
        for example in examples {
            grouped.entry(example.label).or_default().push(example);
        }
        ExampleBank { examples: grouped }
    }

    pub fn for_class(&self, class: CommitClass) -> &[BankExample] {
        self.examples.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains_commit(&self, commit_id: &str) -> bool {
        self.examples
            .values()
            .flatten()
            .any(|e| e.commit_id == commit_id)
    }

    pub fn len(&self) -> usize {
        self.examples.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A prompt ready to send to a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub strategy: StrategyKind,
    pub sample_id: usize,
    pub text: String,
    /// Whether the query diff was cut to fit the character budget.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("strategy spec is for {actual}, expected {expected}")]
    WrongStrategy {
        expected: StrategyKind,
        actual: StrategyKind,
    },
    #[error("few-shot rendering requires an example bank")]
    MissingExampleBank,
    #[error("example bank has fewer than {1} examples for class `{0}`")]
    MissingClassExamples(CommitClass, usize),
    #[error("example bank contains the query commit `{0}`")]
    ExampleLeakage(String),
    #[error("class `{0}` has too few eligible diffs to fill the example bank")]
    InsufficientData(CommitClass),
    #[error("examples_per_class must be at least 1")]
    NoExamplesRequested,
    #[error("max_diff_chars {0} is below the minimum of 200")]
    DiffBudgetTooSmall(usize),
}

/// Final line of every prompt. Byte-exact so downstream label extraction and
/// offline replay caches stay stable.
pub const ANSWER_FORMAT_INSTRUCTION: &str = "Respond with your final answer on its own last line in exactly this form: label: <one of feat|fix|docs|style|refactor|test|chore>";

/// Marker line appended in place of truncated diff content.
pub const TRUNCATION_MARKER: &str = "[... diff truncated ...]";

/// Opening and closing marker lines around every embedded diff. Neither can
/// occur as a full line inside well-formed unified diff output, where every
/// content line carries a `+`/`-`/space prefix.
pub const DIFF_OPEN: &str = "<<<diff";
pub const DIFF_CLOSE: &str = ">>>end";

/// Heading above the optional stripped commit message.
pub const MESSAGE_HEADING: &str = "Commit message (type prefix removed):";

/// Smallest allowed `max_diff_chars`; below this even small diffs would
/// truncate to nothing but headers.
pub const MIN_DIFF_BUDGET: usize = 200;

/// Example diffs shorter than this many lines carry too little signal to
/// demonstrate a class.
pub const MIN_EXAMPLE_DIFF_LINES: usize = 5;

const ROLE_LINE: &str = "Act as a software engineer. Your task is to classify a code change into exactly one conventional commit type.";

const REASONING_INSTRUCTION: &str = "First write a brief step-by-step reasoning that identifies the relevant cues in the code change, interprets them, and explains which commit type is appropriate and why. Then give the final answer.";

/// One-line definition of each class, as shown in the prompt overview.
pub fn class_definition(class: CommitClass) -> &'static str {
    match class {
        CommitClass::Feat => "Introduces a new feature.",
        CommitClass::Fix => "Resolves a bug or issue.",
        CommitClass::Docs => "Changes related strictly to documentation.",
        CommitClass::Style => {
            "Code style changes that do not affect functionality (e.g., formatting)."
        }
        CommitClass::Refactor => "Code changes that neither fix a bug nor add a feature.",
        CommitClass::Test => "Additions or modifications to testing suites.",
        CommitClass::Chore => "Routine maintenance tasks or build-related changes.",
    }
}

/// Ordered decision-priority rules; prompts number them 1..=8 and the
/// rule-based backend applies them first match wins.
pub const DECISION_RULES: [&str; 8] = [
    "Explicit commit type keywords in the change itself take priority over inferred semantic meaning.",
    "If the change touches only test files, classify it as test.",
    "If the change touches only documentation files, classify it as docs.",
    "If the change only reformats code or whitespace without changing behavior, classify it as style.",
    "If the change touches only build, CI, or dependency metadata files, classify it as chore.",
    "If the change corrects faulty behavior, classify it as fix.",
    "If the change adds a new externally visible capability, classify it as feat.",
    "Otherwise, classify it as refactor.",
];

fn is_diff_header(line: &str) -> bool {
    line.starts_with("diff --git") || line.starts_with("--- ") || line.starts_with("+++ ")
}

/// Cuts a diff down to roughly `max_chars` characters.
///
/// A diff that already fits is returned unchanged with `false`. Otherwise
/// file header lines (`diff --git`, `---`, `+++`) are always kept, hunk
/// lines are kept in their original order until the remaining budget runs
/// out (cutting only at line boundaries), and a [`TRUNCATION_MARKER`] line
/// is appended; the flag is `true`. When the headers alone exceed the
/// budget, the result is just headers plus marker and may overshoot
/// `max_chars`.
pub fn truncate_diff(diff: &str, max_chars: usize) -> (String, bool) {
    if diff.len() <= max_chars {
        return (diff.to_string(), false);
    }

    let header_bytes: usize = diff
        .lines()
        .filter(|l| is_diff_header(l))
        .map(|l| l.len() + 1)
        .sum();
    let mut budget = max_chars.saturating_sub(header_bytes);
    let mut kept: Vec<&str> = Vec::new();
    let mut taking_hunks = true;
    for line in diff.lines() {
        if is_diff_header(line) {
            kept.push(line);
            continue;
        }
        if !taking_hunks {
            continue;
        }
        let cost = line.len() + 1;
        if cost <= budget {
            budget -= cost;
            kept.push(line);
        } else {
            taking_hunks = false;
        }
    }
    kept.push(TRUNCATION_MARKER);
    (kept.join("\n"), true)
}

fn diff_block(diff: &str) -> String {
    format!("{DIFF_OPEN}\n{}\n{DIFF_CLOSE}", diff.trim_end_matches('\n'))
}

fn class_overview() -> String {
    let mut section = String::from("The seven commit types are:");
    for class in CommitClass::ALL {
        section.push_str(&format!(
            "\n- {}: {}",
            class.as_str(),
            class_definition(class)
        ));
    }
    section
}

fn rules_section() -> String {
    let mut section = String::from("Decision priority rules, applied first match wins:");
    for (i, rule) in DECISION_RULES.iter().enumerate() {
        section.push_str(&format!("\n{}. {rule}", i + 1));
    }
    section
}

fn render_with(
    sample: &LabeledSample,
    spec: &StrategySpec,
    bank: Option<&ExampleBank>,
) -> Result<RenderedPrompt, PromptError> {
    spec.validate()?;

    let mut sections = vec![ROLE_LINE.to_string(), class_overview(), rules_section()];

    if spec.kind == StrategyKind::FewShot {
        let bank = bank.ok_or(PromptError::MissingExampleBank)?;
        if bank.contains_commit(&sample.commit_id) {
            return Err(PromptError::ExampleLeakage(sample.commit_id.clone()));
        }
        sections.push("Worked examples:".to_string());
        let mut number = 1;
        for class in CommitClass::ALL {
            let available = bank.for_class(class);
            if available.len() < spec.examples_per_class {
                return Err(PromptError::MissingClassExamples(
                    class,
                    spec.examples_per_class,
                ));
            }
            for example in &available[..spec.examples_per_class] {
                let (diff, _) = truncate_diff(&example.diff, spec.max_diff_chars);
                sections.push(format!(
                    "Example {number} (diff):\n{}\nlabel: {}",
                    diff_block(&diff),
                    example.label
                ));
                number += 1;
            }
        }
    }

    let (query_diff, truncated) = truncate_diff(&sample.diff, spec.max_diff_chars);
    sections.push(format!(
        "Code change to classify:\n{}",
        diff_block(&query_diff)
    ));

    if spec.include_message {
        if let Some(message) = &sample.stripped_message {
            sections.push(format!("{MESSAGE_HEADING}\n{}", message.trim_end()));
        }
    }

    if spec.kind == StrategyKind::ChainOfThought {
        sections.push(REASONING_INSTRUCTION.to_string());
    }

    sections.push(ANSWER_FORMAT_INSTRUCTION.to_string());

    Ok(RenderedPrompt {
        strategy: spec.kind,
        sample_id: sample.sample_id,
        text: sections.join("\n\n"),
        truncated,
    })
}

fn expect_kind(spec: &StrategySpec, expected: StrategyKind) -> Result<(), PromptError> {
    if spec.kind != expected {
        return Err(PromptError::WrongStrategy {
            expected,
            actual: spec.kind,
        });
    }
    Ok(())
}

/// Renders a zero-shot prompt: instructions, rules, and the query diff.
pub fn render_zero_shot(
    sample: &LabeledSample,
    spec: &StrategySpec,
) -> Result<RenderedPrompt, PromptError> {
    expect_kind(spec, StrategyKind::ZeroShot)?;
    render_with(sample, spec, None)
}

/// Renders a few-shot prompt: zero-shot content plus
/// `examples_per_class` worked examples per class, in canonical class
/// order, each closed by its `label: <type>` line.
pub fn render_few_shot(
    sample: &LabeledSample,
    spec: &StrategySpec,
    bank: &ExampleBank,
) -> Result<RenderedPrompt, PromptError> {
    expect_kind(spec, StrategyKind::FewShot)?;
    render_with(sample, spec, Some(bank))
}

/// Renders a chain-of-thought prompt: zero-shot content plus a step-by-step
/// reasoning instruction before the answer instruction.
pub fn render_chain_of_thought(
    sample: &LabeledSample,
    spec: &StrategySpec,
) -> Result<RenderedPrompt, PromptError> {
    expect_kind(spec, StrategyKind::ChainOfThought)?;
    render_with(sample, spec, None)
}

/// Strategy-dispatching render; few-shot requires `bank`.
pub fn render(
    sample: &LabeledSample,
    spec: &StrategySpec,
    bank: Option<&ExampleBank>,
) -> Result<RenderedPrompt, PromptError> {
    match spec.kind {
        StrategyKind::ZeroShot => render_zero_shot(sample, spec),
        StrategyKind::FewShot => {
            render_few_shot(sample, spec, bank.ok_or(PromptError::MissingExampleBank)?)
        }
        StrategyKind::ChainOfThought => render_chain_of_thought(sample, spec),
    }
}

/// Picks `per_class` worked examples per class out of a dataset and returns
/// the bank together with the remaining evaluation split (bank commits
/// removed, original sample ids kept).
///
/// Selection prefers the shortest diffs (by bytes, ties by commit id) with
/// at least [`MIN_EXAMPLE_DIFF_LINES`] lines, so examples stay cheap in the
/// prompt while still showing real structure. The policy is fully
/// deterministic; `seed` is accepted so callers can keep one reproducibility
/// knob for future randomized policies, but it does not influence selection.
pub fn select_example_bank(
    dataset: &Dataset,
    per_class: usize,
    seed: u64,
) -> Result<(ExampleBank, Dataset), PromptError> {
    let _ = seed;
    if per_class == 0 {
        return Err(PromptError::NoExamplesRequested);
    }

    let mut chosen: Vec<BankExample> = Vec::new();
    for class in CommitClass::ALL {
        let mut candidates: Vec<&LabeledSample> = dataset
            .samples
            .iter()
            .filter(|s| s.label == class && s.diff.lines().count() >= MIN_EXAMPLE_DIFF_LINES)
            .collect();
        candidates.sort_by(|a, b| {
            a.diff
                .len()
                .cmp(&b.diff.len())
                .then_with(|| a.commit_id.cmp(&b.commit_id))
        });
        if candidates.len() < per_class {
            return Err(PromptError::InsufficientData(class));
        }
        chosen.extend(candidates[..per_class].iter().map(|s| BankExample {
            commit_id: s.commit_id.clone(),
            label: s.label,
            diff: s.diff.clone(),
        }));
    }

    let bank = ExampleBank::new(chosen);
    let eval_samples: Vec<LabeledSample> = dataset
        .samples
        .iter()
        .filter(|s| !bank.contains_commit(&s.commit_id))
        .cloned()
        .collect();
    let eval_split = Dataset::new(eval_samples, dataset.seed, dataset.source_repo.clone());
    Ok((bank, eval_split))
}

/// Extracts the query diff from a rendered prompt: the content of the last
/// marker-delimited block (worked examples come earlier, the query is always
/// last). Used by the rule-based backend.
pub(crate) fn extract_query_diff(text: &str) -> Option<String> {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        match (&mut current, line) {
            (None, l) if l == DIFF_OPEN => current = Some(Vec::new()),
            (Some(block), l) if l == DIFF_CLOSE => {
                blocks.push(std::mem::take(block));
                current = None;
            }
            (Some(block), l) => block.push(l),
            (None, _) => {}
        }
    }
    blocks.pop().map(|b| b.join("\n"))
}

/// Extracts the stripped commit message from a rendered prompt, if present:
/// the lines between [`MESSAGE_HEADING`] (after the query diff block) and
/// the next fixed instruction section.
pub(crate) fn extract_query_message(text: &str) -> Option<String> {
    let lines: Vec<&str> = text.lines().collect();
    let last_close = lines.iter().rposition(|l| *l == DIFF_CLOSE)?;
    let heading = lines[last_close..]
        .iter()
        .position(|l| *l == MESSAGE_HEADING)?
        + last_close;
    let mut collected: Vec<&str> = Vec::new();
    for line in &lines[heading + 1..] {
        if *line == REASONING_INSTRUCTION || *line == ANSWER_FORMAT_INSTRUCTION {
            break;
        }
        collected.push(line);
    }
    while collected.last().is_some_and(|l| l.trim().is_empty()) {
        collected.pop();
    }
    if collected.is_empty() {
        None
    } else {
        Some(collected.join("\n"))
    }
}
