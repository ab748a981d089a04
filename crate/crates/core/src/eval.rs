//! Scoring: label extraction from raw completions, confusion tallies, and
//! accuracy / precision / recall / F1 with support-weighted averages.
//!
//! Completions that yield no recognizable label are kept as
//! [`PredictedLabel::Unparseable`] rather than dropped: they count against
//! recall (and therefore accuracy) for their true class, but never against
//! any class's precision.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ccparse::CommitClass;
use crate::prompts::StrategyKind;

/// What the evaluator extracted from a raw completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PredictedLabel {
    Class(CommitClass),
    /// No class label could be recovered from the completion text.
    Unparseable,
}

impl PredictedLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictedLabel::Class(c) => c.as_str(),
            PredictedLabel::Unparseable => "unparseable",
        }
    }

    pub fn from_label(label: &str) -> Option<PredictedLabel> {
        if label == "unparseable" {
            return Some(PredictedLabel::Unparseable);
        }
        CommitClass::parse(label).map(PredictedLabel::Class)
    }
}

impl fmt::Display for PredictedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for PredictedLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PredictedLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        PredictedLabel::from_label(&s)
            .ok_or_else(|| D::Error::custom(format!("unknown predicted label `{s}`")))
    }
}

/// One scored (sample, backend, strategy) cell of an experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: usize,
    pub backend: String,
    pub strategy: StrategyKind,
    pub truth: CommitClass,
    pub predicted: PredictedLabel,
    pub raw_text: String,
    pub latency_ms: u64,
}

static LABEL_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)label\s*:\s*([A-Za-z][A-Za-z0-9_-]*)").unwrap());
static BARE_CLASS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(feat|fix|docs|style|refactor|test|chore)\b").unwrap());

/// Recovers the predicted class from a raw completion.
///
/// The answer format asks for a final `label: <type>` line, so the scan runs
/// bottom-up: the last `label:` occurrence on the lowest line that has one
/// is authoritative. If that candidate is not one of the seven classes (or
/// no `label:` line exists), the fallback is the last bare class keyword
/// anywhere in the text. Anything else is [`PredictedLabel::Unparseable`].
pub fn extract_label(raw: &str) -> PredictedLabel {
    for line in raw.lines().rev() {
        let Some(caps) = LABEL_LINE.captures_iter(line).last() else {
            continue;
        };
        let candidate = caps.get(1).expect("capture group").as_str();
        if let Some(class) = CommitClass::parse(candidate) {
            return PredictedLabel::Class(class);
        }
        // A `label:` line exists but names no known class; fall through to
        // the keyword scan rather than trusting earlier `label:` lines.
        break;
    }

    BARE_CLASS
        .captures_iter(raw)
        .last()
        .and_then(|caps| CommitClass::parse(caps.get(1).expect("capture group").as_str()))
        .map(PredictedLabel::Class)
        .unwrap_or(PredictedLabel::Unparseable)
}

/// 7x7 confusion matrix plus a per-true-class tally of unparseable
/// completions. Rows are the true class, columns the predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; 7]; 7],
    unparseable: [u64; 7],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, truth: CommitClass, predicted: PredictedLabel) {
        match predicted {
            PredictedLabel::Class(p) => self.counts[truth.index()][p.index()] += 1,
            PredictedLabel::Unparseable => self.unparseable[truth.index()] += 1,
        }
    }

    pub fn count(&self, truth: CommitClass, predicted: CommitClass) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn unparseable(&self, truth: CommitClass) -> u64 {
        self.unparseable[truth.index()]
    }

    /// Total records tallied, unparseable completions included.
    pub fn total(&self) -> u64 {
        let parsed: u64 = self.counts.iter().flatten().sum();
        parsed + self.unparseable.iter().sum::<u64>()
    }

    /// Number of true-class records, unparseable completions included.
    pub fn support(&self, class: CommitClass) -> u64 {
        self.counts[class.index()].iter().sum::<u64>() + self.unparseable[class.index()]
    }

    pub fn true_positives(&self, class: CommitClass) -> u64 {
        self.counts[class.index()][class.index()]
    }

    pub fn false_positives(&self, class: CommitClass) -> u64 {
        CommitClass::ALL
            .iter()
            .filter(|t| **t != class)
            .map(|t| self.counts[t.index()][class.index()])
            .sum()
    }

    /// Misses for `class`: records of that true class predicted as some
    /// other class or left unparseable.
    pub fn false_negatives(&self, class: CommitClass) -> u64 {
        self.support(class) - self.true_positives(class)
    }

    pub fn true_negatives(&self, class: CommitClass) -> u64 {
        self.total()
            - self.true_positives(class)
            - self.false_positives(class)
            - self.false_negatives(class)
    }

    /// Sum of the diagonal: records predicted exactly right.
    pub fn correct(&self) -> u64 {
        CommitClass::ALL
            .iter()
            .map(|c| self.true_positives(*c))
            .sum()
    }
}

/// Tallies a confusion matrix over a batch of prediction records.
pub fn build_confusion(records: &[PredictionRecord]) -> ConfusionMatrix {
    let mut matrix = ConfusionMatrix::new();
    for record in records {
        matrix.record(record.truth, record.predicted);
    }
    matrix
}

/// Per-class precision / recall / F1 with the class's support (true-class
/// record count, unparseable included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Full metrics for one (backend, strategy) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: BTreeMap<CommitClass, ClassMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("cannot compute metrics over an empty prediction set")]
    EmptyInput,
}

fn ratio(numerator: u64, denominator: u64) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// Computes accuracy, per-class metrics, and support-weighted averages from
/// a confusion matrix. Empty-denominator conventions: a precision or recall
/// with no positives is 0, and F1 is 0 when precision and recall are both 0.
pub fn compute_metrics(matrix: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = matrix.total();
    if total == 0 {
        return Err(EvalError::EmptyInput);
    }

    let mut per_class = BTreeMap::new();
    let mut weighted_precision = 0.0;
    let mut weighted_recall = 0.0;
    let mut weighted_f1 = 0.0;
    for class in CommitClass::ALL {
        let tp = matrix.true_positives(class);
        let fp = matrix.false_positives(class);
        let fne = matrix.false_negatives(class);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fne);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let support = matrix.support(class);
        weighted_precision += support as f64 * precision;
        weighted_recall += support as f64 * recall;
        weighted_f1 += support as f64 * f1;
        per_class.insert(
            class,
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            },
        );
    }

    Ok(MetricsReport {
        accuracy: ratio(matrix.correct(), total),
        per_class,
        weighted_precision: weighted_precision / total as f64,
        weighted_recall: weighted_recall / total as f64,
        weighted_f1: weighted_f1 / total as f64,
    })
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>10} {:>10} {:>10} {:>8}",
            "class", "precision", "recall", "f1", "support"
        )?;
        for class in CommitClass::ALL {
            let m = &self.per_class[&class];
            writeln!(
                f,
                "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>8}",
                class.as_str(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            )?;
        }
        let total: u64 = CommitClass::ALL
            .iter()
            .map(|c| self.per_class[c].support)
            .sum();
        writeln!(
            f,
            "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>8}",
            "weighted", self.weighted_precision, self.weighted_recall, self.weighted_f1, total
        )?;
        write!(f, "{:<10} {:>10.4}", "accuracy", self.accuracy)
    }
}

/// The four headline numbers of a run, used for aggregation and report rows.
/// Precision, recall, and F1 are the support-weighted averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&MetricsReport> for MetricsSummary {
    fn from(report: &MetricsReport) -> Self {
        MetricsSummary {
            accuracy: report.accuracy,
            precision: report.weighted_precision,
            recall: report.weighted_recall,
            f1: report.weighted_f1,
        }
    }
}

/// One (model, strategy) row of an experiment, as fed to the aggregators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub strategy: StrategyKind,
    pub metrics: MetricsSummary,
}

fn mean_summaries(rows: &[&MetricsSummary]) -> MetricsSummary {
    let n = rows.len() as f64;
    MetricsSummary {
        accuracy: rows.iter().map(|m| m.accuracy).sum::<f64>() / n,
        precision: rows.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: rows.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: rows.iter().map(|m| m.f1).sum::<f64>() / n,
    }
}

/// Unweighted per-strategy means across models.
pub fn aggregate_by_strategy(rows: &[RunSummary]) -> BTreeMap<StrategyKind, MetricsSummary> {
    let mut groups: BTreeMap<StrategyKind, Vec<&MetricsSummary>> = BTreeMap::new();
    for row in rows {
        groups.entry(row.strategy).or_default().push(&row.metrics);
    }
    groups
        .into_iter()
        .map(|(k, v)| (k, mean_summaries(&v)))
        .collect()
}

/// Unweighted per-model means across strategies.
pub fn aggregate_by_model(rows: &[RunSummary]) -> BTreeMap<String, MetricsSummary> {
    let mut groups: BTreeMap<String, Vec<&MetricsSummary>> = BTreeMap::new();
    for row in rows {
        groups
            .entry(row.model.clone())
            .or_default()
            .push(&row.metrics);
    }
    groups
        .into_iter()
        .map(|(k, v)| (k, mean_summaries(&v)))
        .collect()
}

/// Rounds a metric to `places` decimals, halves away from zero, for report
/// output. Full precision is kept internally; only rendering rounds.
///
/// The tiny bias term keeps exact decimal midpoints (which binary floats
/// represent as just-under values, e.g. 0.5305) rounding up the way the
/// decimal value would.
pub fn round_metric(value: f64, places: u32) -> f64 {
    let scale = 10f64.powi(places as i32);
    (value * scale + 0.5 + 1e-9).floor() / scale
}
