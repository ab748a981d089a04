//! Mines labeled samples from a git repository.
//!
//! Commits are listed in reverse chronological first-parent order and kept
//! when their subject line parses as a conventional commit with one of the
//! seven benchmark classes. A class-balanced subset is then sampled with a
//! seeded generator, each sample's diff is extracted against its first
//! parent (`-U3`, root commits against the empty tree), and the result is
//! written as a JSONL dataset.
//!
//! All git access shells out to the `git` binary so diffs are byte-identical
//! to what `git diff-tree` produces.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::LazyLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ccparse::{self, CommitClass};

/// Schema tag on the first line of every dataset file.
pub const DATASET_SCHEMA: &str = "ccbench-dataset/1";

/// One commit as listed from the repository. `diff` starts empty and is
/// filled by [`extract_diff`] only for sampled commits, since extracting
/// patches for every commit in a large history would dominate mining time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    /// Full 40-hex commit id.
    pub id: String,
    /// Full commit message, without the trailing newline git appends.
    pub message: String,
    /// Number of parents; 0 for root commits, 2+ for merges.
    pub parent_count: usize,
    /// Author timestamp, seconds since the epoch.
    pub author_timestamp: i64,
    /// Unified diff against the first parent; empty until extracted.
    pub diff: String,
}

/// One labeled dataset entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSample {
    /// Dense index within the dataset, stable across writes and reads.
    pub sample_id: usize,
    pub commit_id: String,
    pub label: CommitClass,
    pub diff: String,
    /// Commit message with every leading type label removed; `None` unless
    /// mining was asked to include messages, or when stripping could not
    /// remove all label traces from the first line.
    pub stripped_message: Option<String>,
}

/// A mined, class-balanced dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub seed: u64,
    pub source_repo: String,
    /// Sample count per class; always carries all seven classes.
    pub per_class_counts: BTreeMap<CommitClass, usize>,
}

impl Dataset {
    /// Builds a dataset, deriving `per_class_counts` from the samples.
    pub fn new(samples: Vec<LabeledSample>, seed: u64, source_repo: String) -> Self {
        let mut per_class_counts: BTreeMap<CommitClass, usize> =
            CommitClass::ALL.iter().map(|c| (*c, 0)).collect();
        for sample in &samples {
            *per_class_counts
                .get_mut(&sample.label)
                .expect("all classes present") += 1;
        }
        Dataset {
            samples,
            seed,
            source_repo,
            per_class_counts,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("`{0}` is not a git repository")]
    NotARepository(PathBuf),
    #[error("repository has no commits")]
    EmptyRepository,
    #[error("commit `{0}` not found")]
    CommitNotFound(String),
    #[error("commit `{0}` is a merge; diffs are only taken against a single parent")]
    MergeCommitSkipped(String),
    #[error("repository has no commits with conventional labels")]
    InsufficientData,
    #[error("target size {0} is smaller than the number of classes (7)")]
    TargetTooSmall(usize),
    #[error("git {args} failed: {stderr}")]
    GitCommand { args: String, stderr: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("dataset schema violation at line {line}: {reason}")]
    SchemaViolation { line: usize, reason: String },
}

fn run_git(repo: &Path, args: &[&str]) -> Result<Vec<u8>, MinerError> {
    let output = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(args)
        .output()?;
    if !output.status.success() {
        return Err(MinerError::GitCommand {
            args: args.join(" "),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    Ok(output.stdout)
}

fn ensure_repo(repo: &Path) -> Result<(), MinerError> {
    run_git(repo, &["rev-parse", "--git-dir"])
        .map(|_| ())
        .map_err(|_| MinerError::NotARepository(repo.to_path_buf()))
}

/// Lists commits reachable from `HEAD` in reverse chronological order,
/// following only first parents. Merge commits are included (flagged by
/// `parent_count`); callers decide whether to skip them.
pub fn list_commits(repo: &Path, limit: Option<usize>) -> Result<Vec<CommitRecord>, MinerError> {
    ensure_repo(repo)?;
    run_git(repo, &["rev-parse", "--verify", "HEAD"]).map_err(|_| MinerError::EmptyRepository)?;

    let max_count;
    let mut args = vec![
        "log",
        "--first-parent",
        "-z",
        "--format=%H%x1f%P%x1f%at%x1f%B",
    ];
    if let Some(limit) = limit {
        max_count = format!("--max-count={limit}");
        args.push(&max_count);
    }
    let stdout = run_git(repo, &args)?;
    let text = String::from_utf8_lossy(&stdout);

    let mut commits = Vec::new();
    for entry in text.split('\0').filter(|e| !e.is_empty()) {
        let mut fields = entry.splitn(4, '\u{1f}');
        let (Some(id), Some(parents), Some(timestamp), Some(message)) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(MinerError::GitCommand {
                args: "log".to_string(),
                stderr: format!("unexpected log entry: {entry:?}"),
            });
        };
        commits.push(CommitRecord {
            id: id.to_string(),
            message: message.trim_end_matches('\n').to_string(),
            parent_count: parents.split_whitespace().count(),
            author_timestamp: timestamp.parse().unwrap_or(0),
            diff: String::new(),
        });
    }
    Ok(commits)
}

/// Extracts the unified diff (3 context lines) of a commit against its first
/// parent; root commits diff against the empty tree. Merge commits are
/// refused with [`MinerError::MergeCommitSkipped`].
pub fn extract_diff(repo: &Path, commit_id: &str) -> Result<String, MinerError> {
    ensure_repo(repo)?;
    let parents = match run_git(repo, &["rev-list", "--parents", "--max-count=1", commit_id]) {
        Ok(out) => String::from_utf8_lossy(&out).split_whitespace().count() - 1,
        Err(MinerError::GitCommand { stderr, .. })
            if stderr.contains("unknown revision")
                || stderr.contains("bad revision")
                || stderr.contains("bad object") =>
        {
            return Err(MinerError::CommitNotFound(commit_id.to_string()));
        }
        Err(other) => return Err(other),
    };
    if parents > 1 {
        return Err(MinerError::MergeCommitSkipped(commit_id.to_string()));
    }

    let stdout = run_git(
        repo,
        &[
            "diff-tree",
            "--no-commit-id",
            "--patch",
            "-r",
            "--root",
            "--unified=3",
            commit_id,
        ],
    )?;
    Ok(String::from_utf8_lossy(&stdout).into_owned())
}

/// The commit's class when its subject line is a conventional header with an
/// in-vocabulary type; `None` for everything else (including `perf:`-style
/// valid-but-unknown types and merge subjects).
pub fn label_commit(record: &CommitRecord) -> Option<CommitClass> {
    let first = record.message.lines().next()?;
    ccparse::parse_header(first).ok().map(|h| h.class)
}

/// Per-class sample quotas: an even `target / 7` split, with the remainder
/// going one each to the classes with the largest supply (ties broken by
/// class name, alphabetically).
fn class_quotas(
    target: usize,
    supplies: &BTreeMap<CommitClass, usize>,
) -> BTreeMap<CommitClass, usize> {
    let base = target / CommitClass::ALL.len();
    let remainder = target % CommitClass::ALL.len();

    let mut order: Vec<CommitClass> = CommitClass::ALL.to_vec();
    order.sort_by(|a, b| {
        supplies[b]
            .cmp(&supplies[a])
            .then_with(|| a.as_str().cmp(b.as_str()))
    });

    let mut quotas: BTreeMap<CommitClass, usize> =
        CommitClass::ALL.iter().map(|c| (*c, base)).collect();
    for class in order.into_iter().take(remainder) {
        *quotas.get_mut(&class).expect("all classes present") += 1;
    }
    quotas
}

/// Picks `k` distinct indices out of `0..n` with a partial Fisher-Yates
/// shuffle, consuming the generator deterministically.
fn sample_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(k);
    indices
}

static LABEL_PREFIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(feat|fix|docs|style|refactor|test|chore)\s*[(:!]").unwrap()
});

/// Strips every leading type label from a message. Returns `None` when the
/// first line still looks like a class label afterwards (so datasets never
/// leak their own ground truth) or when nothing but whitespace remains.
fn sanitize_message(message: &str) -> Option<String> {
    let mut current = message.to_string();
    while let Ok(next) = ccparse::strip_label(&current) {
        current = next;
    }
    let first = current.lines().next().unwrap_or("");
    if LABEL_PREFIX.is_match(first) {
        return None;
    }
    if current.trim().is_empty() {
        return None;
    }
    Some(current)
}

/// Mines a class-balanced dataset of `target_size` labeled diffs.
///
/// Merge commits are excluded, quotas follow [`class_quotas`], and per-class
/// sampling uses a ChaCha8 generator seeded with `seed` (classes drawn in
/// canonical order, so the same seed always yields the same dataset).
/// Classes with too few labeled commits contribute what they have, with a
/// warning. Samples are ordered by (label, commit id) and assigned dense
/// `sample_id`s; commits whose diff turns out empty are dropped.
pub fn build_dataset(
    repo: &Path,
    target_size: usize,
    seed: u64,
    include_message: bool,
) -> Result<Dataset, MinerError> {
    if target_size < CommitClass::ALL.len() {
        return Err(MinerError::TargetTooSmall(target_size));
    }

    let commits = list_commits(repo, None)?;
    let mut pools: BTreeMap<CommitClass, Vec<&CommitRecord>> =
        CommitClass::ALL.iter().map(|c| (*c, Vec::new())).collect();
    for commit in &commits {
        if commit.parent_count > 1 {
            continue;
        }
        if let Some(label) = label_commit(commit) {
            pools
                .get_mut(&label)
                .expect("all classes present")
                .push(commit);
        }
    }
    if pools.values().all(|pool| pool.is_empty()) {
        return Err(MinerError::InsufficientData);
    }

    let supplies: BTreeMap<CommitClass, usize> =
        pools.iter().map(|(c, pool)| (*c, pool.len())).collect();
    let quotas = class_quotas(target_size, &supplies);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<(CommitClass, &CommitRecord)> = Vec::new();
    for class in CommitClass::ALL {
        let pool = &pools[&class];
        let quota = quotas[&class];
        if pool.len() <= quota {
            if pool.len() < quota {
                log::warn!(
                    "class {class}: only {} labeled commits available, wanted {quota}",
                    pool.len()
                );
            }
            picked.extend(pool.iter().map(|c| (class, *c)));
        } else {
            for index in sample_indices(&mut rng, pool.len(), quota) {
                picked.push((class, pool[index]));
            }
        }
    }
    picked.sort_by(|(ca, a), (cb, b)| ca.cmp(cb).then_with(|| a.id.cmp(&b.id)));

    let mut samples = Vec::new();
    for (label, commit) in picked {
        let diff = extract_diff(repo, &commit.id)?;
        if diff.is_empty() {
            log::warn!("commit {} has an empty diff; skipping", commit.id);
            continue;
        }
        let stripped_message = if include_message {
            sanitize_message(&commit.message)
        } else {
            None
        };
        samples.push(LabeledSample {
            sample_id: samples.len(),
            commit_id: commit.id.clone(),
            label,
            diff,
            stripped_message,
        });
    }

    Ok(Dataset::new(samples, seed, repo.display().to_string()))
}

#[derive(Serialize, Deserialize)]
struct DatasetHeaderLine {
    schema: String,
    seed: u64,
    source: String,
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    sample_id: usize,
    commit_id: String,
    label: CommitClass,
    diff: String,
    message: Option<String>,
}

/// Serializes a dataset as JSONL: one header line, then one line per sample.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<(), MinerError> {
    let mut out = serde_json::to_string(&DatasetHeaderLine {
        schema: DATASET_SCHEMA.to_string(),
        seed: dataset.seed,
        source: dataset.source_repo.clone(),
    })
    .expect("header serializes");
    out.push('\n');
    for sample in &dataset.samples {
        let line = serde_json::to_string(&SampleLine {
            sample_id: sample.sample_id,
            commit_id: sample.commit_id.clone(),
            label: sample.label,
            diff: sample.diff.clone(),
            message: sample.stripped_message.clone(),
        })
        .expect("sample serializes");
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn is_commit_id(s: &str) -> bool {
    s.len() == 40
        && s.chars()
            .all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase())
}

/// Reads a JSONL dataset back. An empty file yields an empty dataset;
/// malformed lines, unknown labels, bad commit ids, and duplicate sample ids
/// are [`MinerError::SchemaViolation`]s naming the offending line.
pub fn read_dataset(path: &Path) -> Result<Dataset, MinerError> {
    let text = std::fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Ok(Dataset::new(Vec::new(), 0, String::new()));
    }

    let mut lines = text.lines().enumerate();
    let (_, header_text) = lines.next().expect("non-empty file has a first line");
    let header: DatasetHeaderLine =
        serde_json::from_str(header_text).map_err(|e| MinerError::SchemaViolation {
            line: 1,
            reason: format!("bad header: {e}"),
        })?;
    if header.schema != DATASET_SCHEMA {
        return Err(MinerError::SchemaViolation {
            line: 1,
            reason: format!("unknown schema `{}`", header.schema),
        });
    }

    let mut samples = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for (index, line) in lines {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SampleLine =
            serde_json::from_str(line).map_err(|e| MinerError::SchemaViolation {
                line: line_no,
                reason: e.to_string(),
            })?;
        if !is_commit_id(&parsed.commit_id) {
            return Err(MinerError::SchemaViolation {
                line: line_no,
                reason: format!("`{}` is not a full lowercase commit id", parsed.commit_id),
            });
        }
        if !seen_ids.insert(parsed.sample_id) {
            return Err(MinerError::SchemaViolation {
                line: line_no,
                reason: format!("duplicate sample_id {}", parsed.sample_id),
            });
        }
        samples.push(LabeledSample {
            sample_id: parsed.sample_id,
            commit_id: parsed.commit_id,
            label: parsed.label,
            diff: parsed.diff,
            stripped_message: parsed.message,
        });
    }

    Ok(Dataset::new(samples, header.seed, header.source))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use tempfile::TempDir;

    /// Runs git in `dir` with hermetic identity/signing settings.
    fn git(dir: &Path, args: &[&str]) -> String {
        let output = Command::new("git")
            .arg("-C")
            .arg(dir)
            .args([
                "-c",
                "user.name=dev",
                "-c",
                "user.email=dev@example.com",
                "-c",
                "commit.gpgsign=false",
            ])
            .args(args)
            .env("GIT_AUTHOR_DATE", "2024-01-01T00:00:00+00:00")
            .env("GIT_COMMITTER_DATE", "2024-01-01T00:00:00+00:00")
            .output()
            .expect("git runs");
        assert!(
            output.status.success(),
            "git {args:?} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        String::from_utf8_lossy(&output.stdout).trim().to_string()
    }

    fn init_repo(dir: &Path) {
        git(dir, &["init", "-q", "-b", "main"]);
    }

    fn commit_file(dir: &Path, file: &str, content: &str, message: &str) -> String {
        let path = dir.join(file);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).unwrap();
        }
        fs::write(&path, content).unwrap();
        git(dir, &["add", "."]);
        git(dir, &["commit", "-q", "-m", message]);
        git(dir, &["rev-parse", "HEAD"])
    }

    #[test]
    fn lists_commits_first_parent_newest_first() {
        let tmp = TempDir::new().unwrap();
        init_repo(tmp.path());
        let c1 = commit_file(tmp.path(), "a.txt", "one\n", "feat: first");
        let c2 = commit_file(tmp.path(), "a.txt", "two\n", "fix: second");
        let c3 = commit_file(tmp.path(), "a.txt", "three\n", "docs: third");

        let commits = list_commits(tmp.path(), None).unwrap();
        let ids: Vec<&str> = commits.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, vec![c3.as_str(), c2.as_str(), c1.as_str()]);
        assert_eq!(commits[2].parent_count, 0);
        assert_eq!(commits[0].parent_count, 1);
        assert_eq!(commits[0].message, "docs: third");

        let limited = list_commits(tmp.path(), Some(2)).unwrap();
        assert_eq!(limited.len(), 2);
        assert_eq!(limited[0].id, c3);
    }

    #[test]
    fn missing_and_empty_repositories_are_distinct_errors() {
        let tmp = TempDir::new().unwrap();
        assert!(matches!(
            list_commits(tmp.path(), None).unwrap_err(),
            MinerError::NotARepository(_)
        ));

        init_repo(tmp.path());
        assert!(matches!(
            list_commits(tmp.path(), None).unwrap_err(),
            MinerError::EmptyRepository
        ));
    }

    #[test]
    fn extracts_diff_for_root_and_child_commits() {
        let tmp = TempDir::new().unwrap();
        init_repo(tmp.path());
        let root = commit_file(tmp.path(), "src/lib.rs", "fn a() {}\n", "feat: root");
        let child = commit_file(
            tmp.path(),
            "src/lib.rs",
            "fn a() {}\nfn b() {}\n",
            "feat: more",
        );

        let root_diff = extract_diff(tmp.path(), &root).unwrap();
        assert!(root_diff.contains("diff --git a/src/lib.rs b/src/lib.rs"));
        assert!(root_diff.contains("+fn a() {}"));

        let child_diff = extract_diff(tmp.path(), &child).unwrap();
        assert!(child_diff.contains("+fn b() {}"));
        assert!(!child_diff.contains("+fn a() {}"));
    }

    #[test]
    fn merge_commits_are_refused() {
        let tmp = TempDir::new().unwrap();
        init_repo(tmp.path());
        commit_file(tmp.path(), "a.txt", "base\n", "feat: base");
        git(tmp.path(), &["checkout", "-q", "-b", "topic"]);
        commit_file(tmp.path(), "b.txt", "branch\n", "feat: branch work");
        git(tmp.path(), &["checkout", "-q", "main"]);
        commit_file(tmp.path(), "c.txt", "main\n", "fix: main work");
        git(
            tmp.path(),
            &["merge", "-q", "--no-ff", "-m", "merge topic", "topic"],
        );
        let merge = git(tmp.path(), &["rev-parse", "HEAD"]);

        assert!(matches!(
            extract_diff(tmp.path(), &merge).unwrap_err(),
            MinerError::MergeCommitSkipped(_)
        ));
        let commits = list_commits(tmp.path(), None).unwrap();
        assert_eq!(commits[0].parent_count, 2);
    }

    #[test]
    fn unknown_commit_ids_are_reported() {
        let tmp = TempDir::new().unwrap();
        init_repo(tmp.path());
        commit_file(tmp.path(), "a.txt", "x\n", "feat: x");
        let missing = "0123456789abcdef0123456789abcdef01234567";
        assert!(matches!(
            extract_diff(tmp.path(), missing).unwrap_err(),
            MinerError::CommitNotFound(_)
        ));
    }

    #[test]
    fn labels_only_in_vocabulary_headers() {
        let rec = |message: &str| CommitRecord {
            id: "0".repeat(40),
            message: message.to_string(),
            parent_count: 1,
            author_timestamp: 0,
            diff: String::new(),
        };
        assert_eq!(label_commit(&rec("feat: add")), Some(CommitClass::Feat));
        assert_eq!(
            label_commit(&rec("Fix(core)!: urgent\n\nbody")),
            Some(CommitClass::Fix)
        );
        assert_eq!(label_commit(&rec("perf: faster")), None);
        assert_eq!(label_commit(&rec("Update readme")), None);
        assert_eq!(label_commit(&rec("")), None);
    }

    #[test]
    fn quotas_split_evenly_with_remainder_to_largest_supply() {
        let supplies: BTreeMap<CommitClass, usize> = CommitClass::ALL
            .iter()
            .map(|c| (*c, if *c == CommitClass::Style { 100 } else { 10 }))
            .collect();
        let quotas = class_quotas(16, &supplies);
        assert_eq!(quotas[&CommitClass::Style], 3); // 16 = 7*2 + 2; largest supply first
        assert_eq!(quotas[&CommitClass::Chore], 3); // then alphabetical among ties
        assert_eq!(quotas[&CommitClass::Feat], 2);
        assert_eq!(quotas.values().sum::<usize>(), 16);

        let even: BTreeMap<CommitClass, usize> = CommitClass::ALL.iter().map(|c| (*c, 5)).collect();
        let quotas = class_quotas(3200, &even);
        assert_eq!(quotas.values().sum::<usize>(), 3200);
        assert_eq!(quotas[&CommitClass::Chore], 458); // 3200 = 7*457 + 1
        assert_eq!(quotas[&CommitClass::Feat], 457);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        assert_eq!(
            sample_indices(&mut a, 50, 10),
            sample_indices(&mut b, 50, 10)
        );
        let picked = sample_indices(&mut a, 5, 5);
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    }

    fn seeded_repo(per_class: usize) -> TempDir {
        let tmp = TempDir::new().unwrap();
        init_repo(tmp.path());
        let mut serial = 0;
        for class in CommitClass::ALL {
            for i in 0..per_class {
                serial += 1;
                let file = format!("src/{}_{i}.txt", class.as_str());
                let content = format!("line one {serial}\nline two {serial}\n");
                commit_file(
                    tmp.path(),
                    &file,
                    &content,
                    &format!("{}: change number {serial}", class.as_str()),
                );
            }
        }
        // Noise the miner must ignore.
        commit_file(tmp.path(), "noise.txt", "n\n", "random unlabeled commit");
        commit_file(tmp.path(), "noise.txt", "n2\n", "perf: out of vocabulary");
        tmp
    }

    #[test]
    fn builds_balanced_dataset() {
        let tmp = seeded_repo(3);
        let dataset = build_dataset(tmp.path(), 14, 7, false).unwrap();
        assert_eq!(dataset.len(), 14);
        for class in CommitClass::ALL {
            assert_eq!(dataset.per_class_counts[&class], 2, "{class}");
        }
        // Samples are ordered by (label, commit id) with dense ids.
        for (i, sample) in dataset.samples.iter().enumerate() {
            assert_eq!(sample.sample_id, i);
            assert!(!sample.diff.is_empty());
            assert_eq!(sample.stripped_message, None);
        }
        let labels: Vec<CommitClass> = dataset.samples.iter().map(|s| s.label).collect();
        let mut sorted = labels.clone();
        sorted.sort();
        assert_eq!(labels, sorted);
    }

    #[test]
    fn dataset_is_deterministic_for_a_seed() {
        let tmp = seeded_repo(3);
        let a = build_dataset(tmp.path(), 14, 7, true).unwrap();
        let b = build_dataset(tmp.path(), 14, 7, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_classes_contribute_what_they_have() {
        let tmp = seeded_repo(2);
        let dataset = build_dataset(tmp.path(), 28, 0, false).unwrap();
        assert_eq!(dataset.len(), 14); // 2 per class, wanted 4
        for class in CommitClass::ALL {
            assert_eq!(dataset.per_class_counts[&class], 2);
        }
    }

    #[test]
    fn stripped_messages_carry_no_labels() {
        let tmp = TempDir::new().unwrap();
        init_repo(tmp.path());
        commit_file(
            tmp.path(),
            "a.txt",
            "x\n",
            "fix: handle null\n\nlong body here",
        );
        commit_file(tmp.path(), "b.txt", "y\n", "feat(ui)!: dark mode");
        let dataset = build_dataset(tmp.path(), 7, 0, true).unwrap();
        assert_eq!(dataset.len(), 2);
        let by_label: BTreeMap<CommitClass, &LabeledSample> =
            dataset.samples.iter().map(|s| (s.label, s)).collect();
        assert_eq!(
            by_label[&CommitClass::Fix].stripped_message.as_deref(),
            Some("handle null\n\nlong body here")
        );
        assert_eq!(
            by_label[&CommitClass::Feat].stripped_message.as_deref(),
            Some("dark mode")
        );
    }

    #[test]
    fn sanitize_drops_messages_that_keep_leaking() {
        assert_eq!(sanitize_message("fix: fix: "), None);
        assert_eq!(
            sanitize_message("fix: feat: nested labels"),
            Some("nested labels".to_string())
        );
        assert_eq!(sanitize_message("feat: style!"), None);
        assert_eq!(
            sanitize_message("chore: bump deps\n\nroutine"),
            Some("bump deps\n\nroutine".to_string())
        );
    }

    #[test]
    fn rejects_tiny_targets() {
        let tmp = seeded_repo(1);
        assert!(matches!(
            build_dataset(tmp.path(), 6, 0, false).unwrap_err(),
            MinerError::TargetTooSmall(6)
        ));
    }

    #[test]
    fn unlabeled_history_is_insufficient() {
        let tmp = TempDir::new().unwrap();
        init_repo(tmp.path());
        commit_file(tmp.path(), "a.txt", "x\n", "no label here");
        assert!(matches!(
            build_dataset(tmp.path(), 7, 0, false).unwrap_err(),
            MinerError::InsufficientData
        ));
    }

    #[test]
    fn dataset_files_round_trip() {
        let tmp = seeded_repo(2);
        let dataset = build_dataset(tmp.path(), 7, 3, true).unwrap();
        let file = tmp.path().join("dataset.jsonl");
        write_dataset(&dataset, &file).unwrap();

        let text = fs::read_to_string(&file).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.contains("\"schema\":\"ccbench-dataset/1\""));
        assert!(first.contains("\"seed\":3"));

        let back = read_dataset(&file).unwrap();
        assert_eq!(back, dataset);
    }

    #[test]
    fn empty_dataset_file_reads_as_empty_dataset() {
        let tmp = TempDir::new().unwrap();
        let file = tmp.path().join("empty.jsonl");
        fs::write(&file, "").unwrap();
        let dataset = read_dataset(&file).unwrap();
        assert!(dataset.is_empty());
        assert_eq!(dataset.seed, 0);
    }

    #[test]
    fn schema_violations_name_the_line() {
        let tmp = TempDir::new().unwrap();
        let file = tmp.path().join("bad.jsonl");

        fs::write(
            &file,
            "{\"schema\":\"other/9\",\"seed\":0,\"source\":\"\"}\n",
        )
        .unwrap();
        assert!(matches!(
            read_dataset(&file).unwrap_err(),
            MinerError::SchemaViolation { line: 1, .. }
        ));

        let header = format!("{{\"schema\":\"{DATASET_SCHEMA}\",\"seed\":0,\"source\":\"\"}}");
        let id = "a".repeat(40);
        let good = format!(
            "{{\"sample_id\":0,\"commit_id\":\"{id}\",\"label\":\"feat\",\"diff\":\"d\",\"message\":null}}"
        );
        let unknown_label = good.replace("feat", "perf");
        fs::write(&file, format!("{header}\n{good}\n{unknown_label}\n")).unwrap();
        match read_dataset(&file).unwrap_err() {
            MinerError::SchemaViolation { line, reason } => {
                assert_eq!(line, 3);
                assert!(reason.contains("perf"), "{reason}");
            }
            other => panic!("unexpected error: {other:?}"),
        }

        let dup = good.clone();
        fs::write(&file, format!("{header}\n{good}\n{dup}\n")).unwrap();
        assert!(matches!(
            read_dataset(&file).unwrap_err(),
            MinerError::SchemaViolation { line: 3, .. }
        ));

        let bad_id = good.replace(&id, "not-hex");
        fs::write(&file, format!("{header}\n{bad_id}\n")).unwrap();
        assert!(matches!(
            read_dataset(&file).unwrap_err(),
            MinerError::SchemaViolation { line: 2, .. }
        ));
    }
}
