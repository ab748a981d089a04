//! Experiment orchestration.
//!
//! An experiment is described by a TOML config: one dataset, a set of
//! backends, and a set of prompting strategies. Running it evaluates every
//! `(backend, strategy)` pair over the evaluation split (the dataset minus
//! the worked-example bank) and writes four artifacts into the output
//! directory:
//!
//! * `run.jsonl` — the run log: a header, every prediction, and a metrics
//!   (or abort) entry per pair. Entries are fully ordered, so repeated runs
//!   of the same config over the same dataset are byte-identical.
//! * `report.json` / `report.md` / `report.csv` — per-run metrics plus
//!   per-strategy and per-model averages.
//!
//! An interrupted run can be resumed: existing predictions are reused (keyed
//! by backend, strategy, and sample), only the missing ones are executed,
//! and the log is rewritten in full so the result is indistinguishable from
//! an uninterrupted run.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{
    build_backend, content_hash, BackendError, BackendKind, BackendSpec, ReplayCache,
};
use crate::eval::{
    aggregate_by_model, aggregate_by_strategy, build_confusion, compute_metrics, extract_label,
    round_metric, EvalError, MetricsReport, MetricsSummary, PredictionRecord, RunSummary,
};
use crate::miner::{read_dataset, LabeledSample, MinerError};
use crate::prompts::{render, select_example_bank, PromptError, StrategyKind, StrategySpec};

/// Schema tag on the first line of every run log.
pub const RUNLOG_SCHEMA: &str = "ccbench-runlog/1";
/// Schema tag inside `report.json`.
pub const REPORT_SCHEMA: &str = "ccbench-report/1";

pub const RUN_LOG_FILE: &str = "run.jsonl";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_MARKDOWN_FILE: &str = "report.md";
pub const REPORT_CSV_FILE: &str = "report.csv";

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("run log `{path}` is corrupt at line {line}: {reason}")]
    LogCorrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(
        "refusing to resume: the run log was written for a dataset with hash {logged}, \
         but the configured dataset hashes to {current}"
    )]
    ResumeMismatch { logged: String, current: String },
    #[error(transparent)]
    Dataset(#[from] MinerError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(message: impl Into<String>) -> RunnerError {
    RunnerError::Config(message.into())
}

/// Sizing of the worked-example bank carved out of the dataset before
/// evaluation. The bank feeds few-shot prompts; its samples are excluded
/// from the evaluation split for every strategy, so all strategies are
/// scored on the same samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleBankConfig {
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_per_class() -> usize {
    1
}

impl Default for ExampleBankConfig {
    fn default() -> Self {
        ExampleBankConfig {
            per_class: default_per_class(),
            seed: 0,
        }
    }
}

/// One experiment: a dataset, backends, strategies, and execution knobs.
///
/// Relative `dataset`, `output_dir`, and `cache` paths in a config file are
/// resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    /// Worker threads per (backend, strategy) pair.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// A pair is aborted once this many backend calls fail in a row.
    #[serde(default = "default_max_consecutive_failures")]
    pub max_consecutive_failures: usize,
    /// Completion cache: HTTP completions are recorded here, and replay
    /// backends serve from it.
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub example_bank: ExampleBankConfig,
    #[serde(rename = "backend")]
    pub backends: Vec<BackendSpec>,
    #[serde(rename = "strategy")]
    pub strategies: Vec<StrategySpec>,
}

fn default_parallelism() -> usize {
    1
}

fn default_max_consecutive_failures() -> usize {
    10
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunnerError> {
        toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))
    }

    /// Parses a config file, resolves its relative paths, and validates it.
    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.rebase_paths(base);
        }
        config.validate()?;
        Ok(config)
    }

    fn rebase_paths(&mut self, base: &Path) {
        let rebase = |path: &mut PathBuf| {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        };
        rebase(&mut self.dataset);
        rebase(&mut self.output_dir);
        if let Some(cache) = &mut self.cache {
            rebase(cache);
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        if self.backends.is_empty() {
            return Err(invalid("at least one [[backend]] is required"));
        }
        if self.strategies.is_empty() {
            return Err(invalid("at least one [[strategy]] is required"));
        }
        if self.parallelism == 0 {
            return Err(invalid("parallelism must be at least 1"));
        }
        if self.max_consecutive_failures == 0 {
            return Err(invalid("max_consecutive_failures must be at least 1"));
        }
        if self.example_bank.per_class == 0 {
            return Err(invalid("example_bank.per_class must be at least 1"));
        }

        let mut ids = BTreeSet::new();
        for backend in &self.backends {
            backend
                .validate()
                .map_err(|e| RunnerError::Config(e.to_string()))?;
            if !ids.insert(backend.id.as_str()) {
                return Err(invalid(format!("duplicate backend id `{}`", backend.id)));
            }
            if backend.kind == BackendKind::Replay && self.cache.is_none() {
                return Err(invalid(format!(
                    "backend `{}` replays from a cache, but no `cache` path is configured",
                    backend.id
                )));
            }
        }

        let mut kinds = BTreeSet::new();
        for strategy in &self.strategies {
            strategy
                .validate()
                .map_err(|e| RunnerError::Config(e.to_string()))?;
            if !kinds.insert(strategy.kind) {
                return Err(invalid(format!(
                    "duplicate strategy `{}`",
                    strategy.kind.as_str()
                )));
            }
            if strategy.kind == StrategyKind::FewShot
                && strategy.examples_per_class > self.example_bank.per_class
            {
                return Err(invalid(format!(
                    "strategy `few_shot` asks for {} example(s) per class but \
                     example_bank.per_class is {}",
                    strategy.examples_per_class, self.example_bank.per_class
                )));
            }
        }
        Ok(())
    }
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    /// First line of every log; ties the log to the exact dataset bytes.
    Header {
        schema: String,
        dataset_sha256: String,
    },
    Prediction(PredictionRecord),
    /// Terminal entry of a completed (backend, strategy) pair.
    Metrics {
        backend: String,
        strategy: StrategyKind,
        report: MetricsReport,
    },
    /// Terminal entry of a pair that could not be completed.
    Abort {
        backend: String,
        strategy: StrategyKind,
        error: String,
    },
}

/// Structured view of a run log.
#[derive(Debug, Default)]
pub struct ParsedLog {
    pub dataset_sha256: Option<String>,
    pub predictions: Vec<PredictionRecord>,
    pub runs: Vec<RunReport>,
    pub aborts: Vec<AbortedPair>,
}

/// Reads a run log back. With `tolerate_truncation`, a final line that does
/// not parse is discarded (an interrupted writer can only damage the last
/// line); anywhere else a malformed line is an error.
pub fn parse_run_log(path: &Path, tolerate_truncation: bool) -> Result<ParsedLog, RunnerError> {
    let corrupt = |line: usize, reason: String| RunnerError::LogCorrupt {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let text = std::fs::read_to_string(path)?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .collect();

    let mut parsed = ParsedLog::default();
    for (position, (index, line)) in lines.iter().enumerate() {
        let entry: LogEntry = match serde_json::from_str(line) {
            Ok(entry) => entry,
            Err(e) => {
                if tolerate_truncation && position == lines.len() - 1 {
                    log::warn!(
                        "discarding truncated trailing line {} of {}",
                        index + 1,
                        path.display()
                    );
                    break;
                }
                return Err(corrupt(index + 1, e.to_string()));
            }
        };

        if position == 0 {
            let LogEntry::Header {
                schema,
                dataset_sha256,
            } = entry
            else {
                return Err(corrupt(index + 1, "first entry must be the header".into()));
            };
            if schema != RUNLOG_SCHEMA {
                return Err(corrupt(index + 1, format!("unsupported schema `{schema}`")));
            }
            parsed.dataset_sha256 = Some(dataset_sha256);
            continue;
        }
        match entry {
            LogEntry::Header { .. } => {
                return Err(corrupt(index + 1, "duplicate header".into()));
            }
            LogEntry::Prediction(record) => parsed.predictions.push(record),
            LogEntry::Metrics {
                backend,
                strategy,
                report,
            } => parsed.runs.push(RunReport {
                model: backend,
                strategy,
                report,
            }),
            LogEntry::Abort {
                backend,
                strategy,
                error,
            } => parsed.aborts.push(AbortedPair {
                backend,
                strategy,
                error,
            }),
        }
    }
    Ok(parsed)
}

/// Full metrics of one completed (backend, strategy) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub model: String,
    pub strategy: StrategyKind,
    pub report: MetricsReport,
}

impl RunReport {
    fn summary(&self) -> RunSummary {
        RunSummary {
            model: self.model.clone(),
            strategy: self.strategy,
            metrics: MetricsSummary::from(&self.report),
        }
    }
}

/// A (backend, strategy) pair that did not produce metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbortedPair {
    pub backend: String,
    pub strategy: StrategyKind,
    pub error: String,
}

/// What a finished `run_experiment` produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub log_path: PathBuf,
    pub runs: Vec<RunReport>,
    pub aborted: Vec<AbortedPair>,
    /// Prediction records written to the log.
    pub predictions: usize,
    /// How many of those were reused from a previous interrupted run.
    pub reused: usize,
}

enum PairOutcome {
    Completed(MetricsReport),
    Aborted(String),
}

struct PairResult {
    backend: String,
    strategy: StrategyKind,
    records: Vec<PredictionRecord>,
    outcome: PairOutcome,
}

struct AbortState {
    consecutive: usize,
    error: Option<String>,
}

/// Runs every (backend, strategy) pair of an experiment and writes the run
/// log and reports.
///
/// Pairs run in a fixed order (backends by id, strategies in declaration
/// order of their kind) and samples are processed in sample-id order, so the
/// artifacts of a successful run are byte-identical regardless of
/// `parallelism`. With `resume`, predictions already present in the output
/// log are kept instead of re-executed; the log must stem from a dataset
/// with identical bytes.
pub fn run_experiment(config: &ExperimentConfig, resume: bool) -> Result<RunOutcome, RunnerError> {
    config.validate()?;

    let dataset_bytes = std::fs::read(&config.dataset)?;
    let dataset_sha256 = hex::encode(Sha256::digest(&dataset_bytes));
    drop(dataset_bytes);
    let dataset = read_dataset(&config.dataset)?;
    if dataset.is_empty() {
        return Err(invalid("dataset has no samples"));
    }
    let (bank, eval_split) = select_example_bank(
        &dataset,
        config.example_bank.per_class,
        config.example_bank.seed,
    )?;
    if eval_split.is_empty() {
        return Err(invalid(
            "every sample was consumed by the example bank; nothing left to evaluate",
        ));
    }

    std::fs::create_dir_all(&config.output_dir)?;
    let cache = match &config.cache {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            Some(Arc::new(ReplayCache::open(path)?))
        }
        None => None,
    };

    let log_path = config.output_dir.join(RUN_LOG_FILE);
    let reusable: HashMap<(String, StrategyKind, usize), PredictionRecord> =
        if resume && log_path.exists() {
            let parsed = parse_run_log(&log_path, true)?;
            if let Some(logged) = parsed.dataset_sha256 {
                if logged != dataset_sha256 {
                    return Err(RunnerError::ResumeMismatch {
                        logged,
                        current: dataset_sha256,
                    });
                }
            }
            parsed
                .predictions
                .into_iter()
                .map(|r| ((r.backend.clone(), r.strategy, r.sample_id), r))
                .collect()
        } else {
            HashMap::new()
        };

    let mut backends: Vec<&BackendSpec> = config.backends.iter().collect();
    backends.sort_by(|a, b| a.id.cmp(&b.id));
    let mut strategies: Vec<&StrategySpec> = config.strategies.iter().collect();
    strategies.sort_by_key(|s| s.kind);
    let mut samples: Vec<&LabeledSample> = eval_split.samples.iter().collect();
    samples.sort_by_key(|s| s.sample_id);

    let mut pair_results: Vec<PairResult> = Vec::new();
    let mut reused_total = 0usize;

    for backend_spec in &backends {
        let backend = build_backend(backend_spec, cache.clone())?;
        let record_to_cache = backend_spec.kind == BackendKind::HttpChat && cache.is_some();

        for strategy in &strategies {
            let mut records: Vec<Option<PredictionRecord>> = vec![None; samples.len()];
            let mut pending = Vec::new();
            for (slot, sample) in samples.iter().enumerate() {
                let key = (backend.id().to_string(), strategy.kind, sample.sample_id);
                if let Some(record) = reusable.get(&key) {
                    records[slot] = Some(record.clone());
                    reused_total += 1;
                } else {
                    pending.push((slot, render(sample, strategy, Some(&bank))?));
                }
            }

            let abort_state = Mutex::new(AbortState {
                consecutive: 0,
                error: None,
            });
            let next = AtomicUsize::new(0);
            let results: Vec<Mutex<Option<PredictionRecord>>> =
                (0..pending.len()).map(|_| Mutex::new(None)).collect();
            let workers = config.parallelism.min(pending.len());

            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        if abort_state
                            .lock()
                            .expect("abort state poisoned")
                            .error
                            .is_some()
                        {
                            break;
                        }
                        let index = next.fetch_add(1, Ordering::SeqCst);
                        if index >= pending.len() {
                            break;
                        }
                        let (slot, prompt) = &pending[index];
                        let sample = samples[*slot];
                        match backend.complete(prompt) {
                            Ok(completion) => {
                                abort_state
                                    .lock()
                                    .expect("abort state poisoned")
                                    .consecutive = 0;
                                if record_to_cache {
                                    let cache = cache.as_deref().expect("cache configured");
                                    if let Err(e) = cache.record(
                                        backend.id(),
                                        &content_hash(&prompt.text),
                                        &completion.text,
                                        completion.latency_ms,
                                    ) {
                                        log::warn!("failed to record completion in cache: {e}");
                                    }
                                }
                                let record = PredictionRecord {
                                    sample_id: sample.sample_id,
                                    backend: backend.id().to_string(),
                                    strategy: strategy.kind,
                                    truth: sample.label,
                                    predicted: extract_label(&completion.text),
                                    raw_text: completion.text,
                                    latency_ms: completion.latency_ms,
                                };
                                *results[index].lock().expect("result slot poisoned") =
                                    Some(record);
                            }
                            Err(e) => {
                                log::warn!(
                                    "backend `{}` failed on sample {}: {e}",
                                    backend.id(),
                                    sample.sample_id
                                );
                                let mut state = abort_state.lock().expect("abort state poisoned");
                                state.consecutive += 1;
                                if state.consecutive >= config.max_consecutive_failures
                                    && state.error.is_none()
                                {
                                    state.error = Some(e.to_string());
                                }
                            }
                        }
                    });
                }
            });

            for (index, (slot, _)) in pending.iter().enumerate() {
                if let Some(record) = results[index].lock().expect("result slot poisoned").take() {
                    records[*slot] = Some(record);
                }
            }
            let produced: Vec<PredictionRecord> = records.into_iter().flatten().collect();
            let missing = samples.len() - produced.len();
            let abort_error = abort_state
                .into_inner()
                .expect("abort state poisoned")
                .error;

            let outcome = if let Some(error) = abort_error {
                PairOutcome::Aborted(format!(
                    "aborted after {} consecutive backend failures: {error}",
                    config.max_consecutive_failures
                ))
            } else if missing > 0 {
                PairOutcome::Aborted(format!(
                    "{missing} of {} samples failed; resume the run to retry them",
                    samples.len()
                ))
            } else {
                PairOutcome::Completed(compute_metrics(&build_confusion(&produced))?)
            };
            pair_results.push(PairResult {
                backend: backend.id().to_string(),
                strategy: strategy.kind,
                records: produced,
                outcome,
            });
        }
    }

    // The log is rewritten from scratch in deterministic order: header,
    // then per pair all predictions followed by the pair's terminal entry.
    let mut log_text = String::new();
    let push_entry = |text: &mut String, entry: &LogEntry| {
        text.push_str(&serde_json::to_string(entry).expect("log entry serializes"));
        text.push('\n');
    };
    push_entry(
        &mut log_text,
        &LogEntry::Header {
            schema: RUNLOG_SCHEMA.to_string(),
            dataset_sha256,
        },
    );
    let mut predictions_total = 0usize;
    for pair in &pair_results {
        predictions_total += pair.records.len();
        for record in &pair.records {
            push_entry(&mut log_text, &LogEntry::Prediction(record.clone()));
        }
        let terminal = match &pair.outcome {
            PairOutcome::Completed(report) => LogEntry::Metrics {
                backend: pair.backend.clone(),
                strategy: pair.strategy,
                report: report.clone(),
            },
            PairOutcome::Aborted(error) => LogEntry::Abort {
                backend: pair.backend.clone(),
                strategy: pair.strategy,
                error: error.clone(),
            },
        };
        push_entry(&mut log_text, &terminal);
    }
    let tmp_path = config.output_dir.join(format!("{RUN_LOG_FILE}.tmp"));
    std::fs::write(&tmp_path, &log_text)?;
    std::fs::rename(&tmp_path, &log_path)?;

    let runs: Vec<RunReport> = pair_results
        .iter()
        .filter_map(|pair| match &pair.outcome {
            PairOutcome::Completed(report) => Some(RunReport {
                model: pair.backend.clone(),
                strategy: pair.strategy,
                report: report.clone(),
            }),
            PairOutcome::Aborted(_) => None,
        })
        .collect();
    let aborted: Vec<AbortedPair> = pair_results
        .iter()
        .filter_map(|pair| match &pair.outcome {
            PairOutcome::Aborted(error) => Some(AbortedPair {
                backend: pair.backend.clone(),
                strategy: pair.strategy,
                error: error.clone(),
            }),
            PairOutcome::Completed(_) => None,
        })
        .collect();

    write_reports(&config.output_dir, &runs)?;

    Ok(RunOutcome {
        log_path,
        runs,
        aborted,
        predictions: predictions_total,
        reused: reused_total,
    })
}

/// Reads the completed runs out of a finished run log.
pub fn report_from_log(path: &Path) -> Result<Vec<RunReport>, RunnerError> {
    Ok(parse_run_log(path, false)?.runs)
}

/// Writes `report.json`, `report.md`, and `report.csv` for a set of runs.
pub fn write_reports(output_dir: &Path, runs: &[RunReport]) -> Result<(), RunnerError> {
    std::fs::create_dir_all(output_dir)?;
    std::fs::write(output_dir.join(REPORT_JSON_FILE), render_report_json(runs))?;
    std::fs::write(
        output_dir.join(REPORT_MARKDOWN_FILE),
        render_report_markdown(runs),
    )?;
    std::fs::write(output_dir.join(REPORT_CSV_FILE), render_report_csv(runs))?;
    Ok(())
}

fn summary_json(summary: &MetricsSummary, places: u32) -> serde_json::Value {
    serde_json::json!({
        "accuracy": round_metric(summary.accuracy, places),
        "precision": round_metric(summary.precision, places),
        "recall": round_metric(summary.recall, places),
        "f1": round_metric(summary.f1, places),
    })
}

/// JSON report: per-run summaries rounded to 4 decimals alongside the full
/// unrounded reports, plus per-strategy and per-model averages rounded to 3.
pub fn render_report_json(runs: &[RunReport]) -> String {
    let summaries: Vec<RunSummary> = runs.iter().map(RunReport::summary).collect();
    let runs_json: Vec<serde_json::Value> = runs
        .iter()
        .map(|run| {
            serde_json::json!({
                "model": run.model,
                "strategy": run.strategy.as_str(),
                "metrics": summary_json(&MetricsSummary::from(&run.report), 4),
                "report": serde_json::to_value(&run.report).expect("report serializes"),
            })
        })
        .collect();
    let by_strategy: serde_json::Map<String, serde_json::Value> = aggregate_by_strategy(&summaries)
        .iter()
        .map(|(kind, summary)| (kind.as_str().to_string(), summary_json(summary, 3)))
        .collect();
    let by_model: serde_json::Map<String, serde_json::Value> = aggregate_by_model(&summaries)
        .iter()
        .map(|(model, summary)| (model.clone(), summary_json(summary, 3)))
        .collect();

    let value = serde_json::json!({
        "schema": REPORT_SCHEMA,
        "runs": runs_json,
        "by_strategy": by_strategy,
        "by_model": by_model,
    });
    let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
    text.push('\n');
    text
}

/// Markdown report: one 4-decimal row per run, then 3-decimal averages by
/// strategy and by model.
pub fn render_report_markdown(runs: &[RunReport]) -> String {
    let summaries: Vec<RunSummary> = runs.iter().map(RunReport::summary).collect();
    let row4 = |m: &MetricsSummary| {
        format!(
            "{:.4} | {:.4} | {:.4} | {:.4} |",
            round_metric(m.accuracy, 4),
            round_metric(m.precision, 4),
            round_metric(m.recall, 4),
            round_metric(m.f1, 4)
        )
    };
    let row3 = |m: &MetricsSummary| {
        format!(
            "{:.3} | {:.3} | {:.3} | {:.3} |",
            round_metric(m.accuracy, 3),
            round_metric(m.precision, 3),
            round_metric(m.recall, 3),
            round_metric(m.f1, 3)
        )
    };

    let mut out = String::from("# Commit classification benchmark\n\n## Per-run results\n\n");
    out.push_str("| Model | Strategy | Accuracy | Precision | Recall | F1 |\n");
    out.push_str("|---|---|---:|---:|---:|---:|\n");
    for run in runs {
        out.push_str(&format!(
            "| {} | {} | {}\n",
            run.model,
            run.strategy.display_name(),
            row4(&MetricsSummary::from(&run.report))
        ));
    }

    out.push_str("\n## Average by strategy\n\n");
    out.push_str("| Strategy | Accuracy | Precision | Recall | F1 |\n");
    out.push_str("|---|---:|---:|---:|---:|\n");
    for (kind, summary) in aggregate_by_strategy(&summaries) {
        out.push_str(&format!("| {} | {}\n", kind.display_name(), row3(&summary)));
    }

    out.push_str("\n## Average by model\n\n");
    out.push_str("| Model | Accuracy | Precision | Recall | F1 |\n");
    out.push_str("|---|---:|---:|---:|---:|\n");
    for (model, summary) in aggregate_by_model(&summaries) {
        out.push_str(&format!("| {model} | {}\n", row3(&summary)));
    }
    out
}

/// CSV report: the per-run rows only, rounded to 4 decimals.
pub fn render_report_csv(runs: &[RunReport]) -> String {
    let mut out = String::from("model,strategy,accuracy,precision,recall,f1\n");
    for run in runs {
        let m = MetricsSummary::from(&run.report);
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{:.4}\n",
            run.model,
            run.strategy.as_str(),
            round_metric(m.accuracy, 4),
            round_metric(m.precision, 4),
            round_metric(m.recall, 4),
            round_metric(m.f1, 4)
        ));
    }
    out
}
