//! Python bindings for the commit-classification benchmark harness.
//!
//! The module keeps the core crate's vocabulary — conventional-commit
//! parsing, label extraction, rule-based classification, prompt rendering,
//! and evaluation metrics — but structured values cross the boundary as
//! plain dicts, tuples, and strings so no Python-side classes are needed.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyTuple};

use ccbench::backends;
use ccbench::ccparse::{self, CommitClass, ConventionalHeader, ConventionalMessage, Footer};
use ccbench::eval::{self, PredictedLabel, PredictionRecord};
use ccbench::miner::LabeledSample;
use ccbench::prompts::{self, BankExample, ExampleBank, StrategyKind, StrategySpec};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn class_from_str(label: &str) -> PyResult<CommitClass> {
    CommitClass::parse(label).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown commit class `{label}`; expected one of feat, fix, docs, style, refactor, test, chore"
        ))
    })
}

fn strategy_from_str(name: &str) -> PyResult<StrategyKind> {
    StrategyKind::ALL
        .into_iter()
        .find(|k| k.as_str() == name)
        .ok_or_else(|| {
            PyValueError::new_err(format!(
                "unknown strategy `{name}`; expected one of zero_shot, few_shot, chain_of_thought"
            ))
        })
}

fn header_dict<'py>(py: Python<'py>, header: &ConventionalHeader) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("type", header.class.as_str())?;
    d.set_item("scope", header.scope.as_deref())?;
    d.set_item("breaking", header.breaking)?;
    d.set_item("description", &header.description)?;
    Ok(d)
}

fn header_from_dict(d: &Bound<'_, PyDict>) -> PyResult<ConventionalHeader> {
    let class: String = match d.get_item("type")? {
        Some(v) => v.extract()?,
        None => return Err(PyValueError::new_err("message dict needs a `type` key")),
    };
    let description: String = match d.get_item("description")? {
        Some(v) => v.extract()?,
        None => {
            return Err(PyValueError::new_err(
                "message dict needs a `description` key",
            ))
        }
    };
    let scope: Option<String> = match d.get_item("scope")? {
        Some(v) => v.extract()?,
        None => None,
    };
    let breaking: bool = match d.get_item("breaking")? {
        Some(v) if !v.is_none() => v.extract()?,
        _ => false,
    };
    Ok(ConventionalHeader {
        class: class_from_str(&class)?,
        scope,
        breaking,
        description,
    })
}

/// Parses a conventional-commit header line.
///
/// Returns a dict with keys `type`, `scope` (or None), `breaking`, and
/// `description`. Raises ValueError for anything that is not a well-formed
/// header with one of the seven known types.
#[pyfunction]
fn parse_header<'py>(py: Python<'py>, line: &str) -> PyResult<Bound<'py, PyDict>> {
    let header = ccparse::parse_header(line).map_err(value_error)?;
    header_dict(py, &header)
}

/// Parses a full conventional-commit message.
///
/// Returns the `parse_header` dict plus `body` (or None) and `footers`,
/// a list of `(token, value)` tuples.
#[pyfunction]
fn parse_message<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
    let message = ccparse::parse_message(text).map_err(value_error)?;
    let d = header_dict(py, &message.header)?;
    d.set_item("body", message.body.as_deref())?;
    let footers: Vec<(String, String)> = message
        .footers
        .iter()
        .map(|f| (f.token.clone(), f.value.clone()))
        .collect();
    d.set_item("footers", footers)?;
    Ok(d)
}

/// Renders a header dict (as produced by `parse_header`) back to its
/// canonical single-line form.
#[pyfunction]
fn render_header(header: &Bound<'_, PyDict>) -> PyResult<String> {
    Ok(ccparse::render_header(&header_from_dict(header)?))
}

/// Renders a message dict (as produced by `parse_message`) back to its
/// canonical text; `body` and `footers` may be omitted.
#[pyfunction]
fn render_message(message: &Bound<'_, PyDict>) -> PyResult<String> {
    let header = header_from_dict(message)?;
    let body: Option<String> = match message.get_item("body")? {
        Some(v) => v.extract()?,
        None => None,
    };
    let footers: Vec<(String, String)> = match message.get_item("footers")? {
        Some(v) if !v.is_none() => v.extract()?,
        _ => Vec::new(),
    };
    let message = ConventionalMessage {
        header,
        body,
        footers: footers
            .into_iter()
            .map(|(token, value)| Footer { token, value })
            .collect(),
    };
    Ok(ccparse::render_message(&message))
}

/// Removes the leading `type(scope)!: ` prefix from a commit message,
/// leaving description, body, and footers intact.
#[pyfunction]
fn strip_label(message: &str) -> PyResult<String> {
    ccparse::strip_label(message).map_err(value_error)
}

/// Pulls the predicted class out of raw model output.
///
/// Uses the last `label: <class>` line; returns None when no class can be
/// recovered.
#[pyfunction]
fn extract_label(raw: &str) -> Option<&'static str> {
    match eval::extract_label(raw) {
        PredictedLabel::Class(class) => Some(class.as_str()),
        PredictedLabel::Unparseable => None,
    }
}

/// Classifies a unified diff (and optional commit message) with the
/// deterministic priority rules; always returns one of the seven classes.
#[pyfunction]
#[pyo3(signature = (diff, message=None))]
fn classify_change(diff: &str, message: Option<&str>) -> &'static str {
    backends::classify_change(diff, message).as_str()
}

/// Hex SHA-256 of a prompt text; the key replay caches are indexed by.
#[pyfunction]
fn content_hash(text: &str) -> String {
    backends::content_hash(text)
}

/// Cuts a diff to roughly `max_chars` characters, keeping file header
/// lines. Returns `(text, truncated)`.
#[pyfunction]
fn truncate_diff(diff: &str, max_chars: usize) -> (String, bool) {
    prompts::truncate_diff(diff, max_chars)
}

/// Rounds a metric half-up to `places` decimals, the same way reports do.
#[pyfunction]
#[pyo3(signature = (value, places=3))]
fn round_metric(value: f64, places: u32) -> f64 {
    eval::round_metric(value, places)
}

/// Scores predictions against ground-truth classes.
///
/// `truths` holds class names; `predictions` holds class names or None for
/// unparseable model output. Returns a dict with `accuracy`,
/// `weighted_precision`, `weighted_recall`, `weighted_f1`, and `per_class`
/// (class name -> dict of `precision`, `recall`, `f1`, `support`).
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    truths: Vec<String>,
    predictions: Vec<Option<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    if truths.len() != predictions.len() {
        return Err(PyValueError::new_err(format!(
            "got {} truths but {} predictions",
            truths.len(),
            predictions.len()
        )));
    }
    if truths.is_empty() {
        return Err(PyValueError::new_err("cannot evaluate zero predictions"));
    }
    let records = truths
        .iter()
        .zip(&predictions)
        .enumerate()
        .map(|(i, (truth, predicted))| {
            Ok(PredictionRecord {
                sample_id: i,
                backend: String::new(),
                strategy: StrategyKind::ZeroShot,
                truth: class_from_str(truth)?,
                predicted: match predicted {
                    Some(label) => PredictedLabel::Class(class_from_str(label)?),
                    None => PredictedLabel::Unparseable,
                },
                raw_text: String::new(),
                latency_ms: 0,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let report = eval::compute_metrics(&eval::build_confusion(&records)).map_err(value_error)?;

    let d = PyDict::new(py);
    d.set_item("accuracy", report.accuracy)?;
    d.set_item("weighted_precision", report.weighted_precision)?;
    d.set_item("weighted_recall", report.weighted_recall)?;
    d.set_item("weighted_f1", report.weighted_f1)?;
    let per_class = PyDict::new(py);
    for (class, m) in &report.per_class {
        let entry = PyDict::new(py);
        entry.set_item("precision", m.precision)?;
        entry.set_item("recall", m.recall)?;
        entry.set_item("f1", m.f1)?;
        entry.set_item("support", m.support)?;
        per_class.set_item(class.as_str(), entry)?;
    }
    d.set_item("per_class", per_class)?;
    Ok(d)
}

/// Renders a classification prompt for a unified diff.
///
/// `strategy` is `zero_shot`, `few_shot`, or `chain_of_thought`. Few-shot
/// prompts need `examples`, a list of `(class, diff)` tuples covering every
/// class at least `examples_per_class` times. Pass `message` (with any type
/// prefix already stripped) to include the commit message in the prompt.
#[pyfunction]
#[pyo3(signature = (diff, strategy="zero_shot", message=None, examples=None, examples_per_class=1, max_diff_chars=6000))]
fn render_prompt(
    diff: &str,
    strategy: &str,
    message: Option<String>,
    examples: Option<Vec<(String, String)>>,
    examples_per_class: usize,
    max_diff_chars: usize,
) -> PyResult<String> {
    let kind = strategy_from_str(strategy)?;
    let mut spec = StrategySpec::new(kind);
    spec.examples_per_class = examples_per_class;
    spec.max_diff_chars = max_diff_chars;
    spec.include_message = message.is_some();

    if kind != StrategyKind::FewShot && examples.is_some() {
        return Err(PyValueError::new_err(format!(
            "`examples` only applies to few_shot prompts, not {kind}"
        )));
    }
    let bank = match examples {
        Some(pairs) => {
            // Synthetic ids keep the bank disjoint from the query sample.
            let examples = pairs
                .into_iter()
                .enumerate()
                .map(|(i, (label, diff))| {
                    Ok(BankExample {
                        commit_id: format!("{:040x}", i + 1),
                        label: class_from_str(&label)?,
                        diff,
                    })
                })
                .collect::<PyResult<Vec<_>>>()?;
            Some(ExampleBank::new(examples))
        }
        None => None,
    };

    let sample = LabeledSample {
        sample_id: 0,
        commit_id: "f".repeat(40),
        // The query's own label never appears in a prompt, so any class
        // works as a placeholder here.
        label: CommitClass::Feat,
        diff: diff.to_string(),
        stripped_message: message,
    };
    let rendered = prompts::render(&sample, &spec, bank.as_ref()).map_err(value_error)?;
    Ok(rendered.text)
}

/// Classifies git commit diffs into conventional-commit types and scores
/// the results; thin bindings over the Rust harness.
#[pymodule]
fn ccbench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add(
        "COMMIT_CLASSES",
        PyTuple::new(py, CommitClass::ALL.iter().map(|c| c.as_str()))?,
    )?;
    m.add(
        "STRATEGIES",
        PyTuple::new(py, StrategyKind::ALL.iter().map(|k| k.as_str()))?,
    )?;
    m.add(
        "ANSWER_FORMAT_INSTRUCTION",
        prompts::ANSWER_FORMAT_INSTRUCTION,
    )?;
    m.add("DECISION_RULES", PyTuple::new(py, prompts::DECISION_RULES)?)?;
    m.add_function(wrap_pyfunction!(parse_header, m)?)?;
    m.add_function(wrap_pyfunction!(parse_message, m)?)?;
    m.add_function(wrap_pyfunction!(render_header, m)?)?;
    m.add_function(wrap_pyfunction!(render_message, m)?)?;
    m.add_function(wrap_pyfunction!(strip_label, m)?)?;
    m.add_function(wrap_pyfunction!(extract_label, m)?)?;
    m.add_function(wrap_pyfunction!(classify_change, m)?)?;
    m.add_function(wrap_pyfunction!(content_hash, m)?)?;
    m.add_function(wrap_pyfunction!(truncate_diff, m)?)?;
    m.add_function(wrap_pyfunction!(round_metric, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    Ok(())
}
