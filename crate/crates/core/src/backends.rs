//! Completion backends.
//!
//! Three kinds share the [`Backend`] trait:
//!
//! * [`HttpChatBackend`] posts prompts to an OpenAI-compatible
//!   `/chat/completions` endpoint, with bounded concurrency and exponential
//!   backoff on transport errors, 5xx, and 429.
//! * [`HeuristicBackend`] answers deterministically by applying the
//!   decision-priority rules to the diff embedded in the prompt. No network,
//!   zero latency, useful for offline runs and as a floor baseline.
//! * [`ReplayBackend`] serves completions out of a [`ReplayCache`] keyed by
//!   `(backend id, sha256(prompt text))`, so a recorded experiment replays
//!   bit-for-bit without touching the original endpoint.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ccparse::CommitClass;
use crate::prompts::{self, RenderedPrompt};

/// Environment variable holding the bearer token for HTTP backends. The key
/// is read from the environment only — never from config files — and is
/// never written to logs or caches.
pub const API_KEY_ENV: &str = "CCBENCH_API_KEY";

/// Backend flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Heuristic,
    Replay,
}

/// Declarative description of one backend, as it appears in experiment
/// configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    /// Unique name; reports use it as the model column.
    pub id: String,
    pub kind: BackendKind,
    /// Base URL of an OpenAI-compatible API; required for `http_chat`.
    #[serde(default)]
    pub endpoint_url: Option<String>,
    /// Model name sent in the request body; required for `http_chat`.
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_request_timeout_secs")]
    pub request_timeout_secs: u64,
    /// Retries after the first attempt, for transport errors, 5xx, and 429.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Upper bound on in-flight requests for this backend.
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
}

fn default_max_output_tokens() -> u32 {
    512
}

fn default_request_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

fn default_max_concurrent() -> usize {
    4
}

impl BackendSpec {
    /// A rule-based backend spec with the given id.
    pub fn heuristic(id: &str) -> Self {
        BackendSpec {
            id: id.to_string(),
            kind: BackendKind::Heuristic,
            endpoint_url: None,
            model_name: None,
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            request_timeout_secs: default_request_timeout_secs(),
            max_retries: default_max_retries(),
            max_concurrent: default_max_concurrent(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let invalid = |reason: &str| {
            Err(BackendError::InvalidSpec {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.id.is_empty() {
            return invalid("id must be non-empty");
        }
        if !self
            .id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '/'))
        {
            return invalid("id may only contain alphanumerics, '-', '_', '.', '/'");
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return invalid("temperature must be finite and non-negative");
        }
        if self.max_concurrent == 0 {
            return invalid("max_concurrent must be at least 1");
        }
        if self.max_output_tokens == 0 {
            return invalid("max_output_tokens must be at least 1");
        }
        if self.kind == BackendKind::HttpChat {
            if self.endpoint_url.as_deref().unwrap_or("").is_empty() {
                return invalid("http_chat requires endpoint_url");
            }
            if self.model_name.as_deref().unwrap_or("").is_empty() {
                return invalid("http_chat requires model_name");
            }
        }
        Ok(())
    }
}

/// A backend's answer to one prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    /// Raw completion text; may be empty (scored as unparseable downstream).
    pub text: String,
    pub latency_ms: u64,
    pub from_cache: bool,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend `{id}` unavailable after {attempts} attempt(s): {reason}")]
    BackendUnavailable {
        id: String,
        attempts: u32,
        reason: String,
    },
    #[error("backend `{id}` returned a malformed response: {reason}")]
    MalformedResponse { id: String, reason: String },
    #[error("no cached completion for backend `{backend}` with key {key}")]
    CacheMiss { backend: String, key: String },
    #[error("replay cache `{path}` is corrupt at line {line}: {reason}")]
    CacheCorrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid backend spec `{id}`: {reason}")]
    InvalidSpec { id: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that can turn a rendered prompt into a completion.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, BackendError>;
}

/// Lowercase hex SHA-256 of the text; the replay-cache key for a prompt.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

// --- concurrency limiter ----------------------------------------------------

/// Counting semaphore on std primitives; permits release on guard drop.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock().expect("semaphore poisoned");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore poisoned");
        }
        *permits -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.available.notify_one();
    }
}

// --- HTTP chat backend -------------------------------------------------------

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

const BACKOFF_BASE: Duration = Duration::from_millis(250);
const BACKOFF_CAP: Duration = Duration::from_secs(4);

/// OpenAI-compatible chat-completions client.
pub struct HttpChatBackend {
    spec: BackendSpec,
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    semaphore: Semaphore,
}

impl HttpChatBackend {
    /// Builds the client; reads the bearer token from [`API_KEY_ENV`] if set.
    pub fn new(spec: BackendSpec) -> Result<Self, BackendError> {
        spec.validate()?;
        if spec.kind != BackendKind::HttpChat {
            return Err(BackendError::InvalidSpec {
                id: spec.id.clone(),
                reason: "HttpChatBackend requires kind = http_chat".to_string(),
            });
        }
        let base = spec
            .endpoint_url
            .as_deref()
            .expect("validated")
            .trim_end_matches('/')
            .to_string();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(spec.request_timeout_secs))
            .build()
            .map_err(|e| BackendError::InvalidSpec {
                id: spec.id.clone(),
                reason: format!("failed to build HTTP client: {e}"),
            })?;
        Ok(HttpChatBackend {
            url: format!("{base}/chat/completions"),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            semaphore: Semaphore::new(spec.max_concurrent),
            spec,
            client,
        })
    }

    fn backoff(attempt: u32) -> Duration {
        BACKOFF_BASE
            .saturating_mul(1u32 << attempt.min(16))
            .min(BACKOFF_CAP)
    }
}

impl Backend for HttpChatBackend {
    fn id(&self) -> &str {
        &self.spec.id
    }

    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, BackendError> {
        let _permit = self.semaphore.acquire();
        let start = Instant::now();
        let body = ChatRequest {
            model: self.spec.model_name.as_deref().expect("validated"),
            messages: vec![ChatMessage {
                role: "user",
                content: &prompt.text,
            }],
            temperature: self.spec.temperature,
            max_tokens: self.spec.max_output_tokens,
        };

        let attempts = self.spec.max_retries + 1;
        let mut last_reason = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Self::backoff(attempt - 1));
            }
            let mut request = self.client.post(&self.url).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            let response = match request.send() {
                Ok(response) => response,
                Err(e) => {
                    last_reason = format!("transport error: {e}");
                    continue;
                }
            };

            let status = response.status();
            if status.is_success() {
                let parsed: ChatResponse =
                    response
                        .json()
                        .map_err(|e| BackendError::MalformedResponse {
                            id: self.spec.id.clone(),
                            reason: format!("bad JSON: {e}"),
                        })?;
                let Some(choice) = parsed.choices.into_iter().next() else {
                    return Err(BackendError::MalformedResponse {
                        id: self.spec.id.clone(),
                        reason: "response has no choices".to_string(),
                    });
                };
                return Ok(Completion {
                    text: choice.message.content.unwrap_or_default(),
                    latency_ms: start.elapsed().as_millis() as u64,
                    from_cache: false,
                });
            }
            if status.as_u16() == 429 || status.is_server_error() {
                last_reason = format!("HTTP {status}");
                continue;
            }
            // Other client errors (401, 404, ...) will not heal on retry.
            return Err(BackendError::BackendUnavailable {
                id: self.spec.id.clone(),
                attempts: attempt + 1,
                reason: format!("HTTP {status}"),
            });
        }

        Err(BackendError::BackendUnavailable {
            id: self.spec.id.clone(),
            attempts,
            reason: last_reason,
        })
    }
}

// --- rule-based backend -------------------------------------------------------

static CLASS_KEYWORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(feat|fix|docs|style|refactor|test|chore)\b").unwrap());

static FIX_HINT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"(?i)\b(fix|fixes|fixed|bug|bugs|error|errors|fail|fails|failed|failure|",
        r"crash|panic|leak|overflow|underflow|race|deadlock|regression|",
        r"incorrect|wrong|invalid|off-by-one)\b"
    ))
    .unwrap()
});

fn path_segments(path: &str) -> (Vec<String>, String) {
    let lower = path.to_ascii_lowercase();
    let mut parts: Vec<String> = lower.split('/').map(str::to_string).collect();
    let file = parts.pop().unwrap_or_default();
    (parts, file)
}

fn file_stem(file: &str) -> &str {
    file.rsplit_once('.').map(|(stem, _)| stem).unwrap_or(file)
}

fn extension(file: &str) -> &str {
    file.rsplit_once('.').map(|(_, ext)| ext).unwrap_or("")
}

fn is_test_path(path: &str) -> bool {
    let (dirs, file) = path_segments(path);
    const TEST_DIRS: [&str; 6] = ["test", "tests", "__tests__", "spec", "specs", "testing"];
    if dirs.iter().any(|d| TEST_DIRS.contains(&d.as_str())) {
        return true;
    }
    let stem = file_stem(&file);
    file.starts_with("test_")
        || file.starts_with("test-")
        || stem.ends_with("_test")
        || stem.ends_with("-test")
        || stem.ends_with(".test")
        || stem.ends_with(".spec")
        || file == "conftest.py"
}

fn is_docs_path(path: &str) -> bool {
    let (dirs, file) = path_segments(path);
    const DOC_DIRS: [&str; 4] = ["docs", "doc", "documentation", "man"];
    if dirs.iter().any(|d| DOC_DIRS.contains(&d.as_str())) {
        return true;
    }
    const DOC_EXTS: [&str; 5] = ["md", "markdown", "rst", "adoc", "txt"];
    if DOC_EXTS.contains(&extension(&file)) {
        return true;
    }
    const DOC_NAMES: [&str; 10] = [
        "readme",
        "changelog",
        "changes",
        "license",
        "contributing",
        "authors",
        "notice",
        "code_of_conduct",
        "copying",
        "todo",
    ];
    DOC_NAMES.contains(&file_stem(&file)) || DOC_NAMES.contains(&file.as_str())
}

fn is_build_path(path: &str) -> bool {
    let (dirs, file) = path_segments(path);
    const CI_DIRS: [&str; 5] = [".github", ".gitlab", ".circleci", "ci", ".ci"];
    if dirs.iter().any(|d| CI_DIRS.contains(&d.as_str())) {
        return true;
    }
    const BUILD_FILES: [&str; 26] = [
        "makefile",
        "dockerfile",
        "jenkinsfile",
        "cargo.toml",
        "cargo.lock",
        "go.mod",
        "go.sum",
        "package.json",
        "package-lock.json",
        "yarn.lock",
        "pnpm-lock.yaml",
        "requirements.txt",
        "requirements-dev.txt",
        "setup.py",
        "setup.cfg",
        "pyproject.toml",
        "pom.xml",
        "build.gradle",
        "build.gradle.kts",
        "settings.gradle",
        "cmakelists.txt",
        "meson.build",
        ".gitignore",
        ".dockerignore",
        ".gitattributes",
        ".editorconfig",
    ];
    if BUILD_FILES.contains(&file.as_str()) {
        return true;
    }
    const CI_FILES: [&str; 4] = [
        ".travis.yml",
        "appveyor.yml",
        "azure-pipelines.yml",
        ".gitlab-ci.yml",
    ];
    CI_FILES.contains(&file.as_str())
}

/// File paths named on the `diff --git a/X b/Y` lines, old and new sides,
/// de-duplicated in order of first appearance.
fn changed_paths(diff: &str) -> Vec<String> {
    let mut paths: Vec<String> = Vec::new();
    for line in diff.lines() {
        let Some(rest) = line.strip_prefix("diff --git a/") else {
            continue;
        };
        let Some((old, new)) = rest.split_once(" b/") else {
            continue;
        };
        for path in [old, new] {
            if !path.is_empty() && !paths.iter().any(|p| p == path) {
                paths.push(path.to_string());
            }
        }
    }
    paths
}

fn changed_lines(diff: &str) -> (Vec<&str>, Vec<&str>) {
    let mut added = Vec::new();
    let mut removed = Vec::new();
    for line in diff.lines() {
        if let Some(content) = line.strip_prefix('+') {
            if !line.starts_with("+++ ") {
                added.push(content);
            }
        } else if let Some(content) = line.strip_prefix('-') {
            if !line.starts_with("--- ") {
                removed.push(content);
            }
        }
    }
    (added, removed)
}

/// True when the added and removed lines carry the same non-whitespace
/// content in the same order, i.e. the change only reformats text
/// (re-indentation, line splits or joins, blank lines).
fn is_whitespace_only(added: &[&str], removed: &[&str]) -> bool {
    if added.is_empty() && removed.is_empty() {
        return false;
    }
    let squash = |lines: &[&str]| {
        lines
            .iter()
            .flat_map(|line| line.chars())
            .filter(|c| !c.is_whitespace())
            .collect::<String>()
    };
    squash(added) == squash(removed)
}

fn looks_like_fix(added: &[&str], removed: &[&str]) -> bool {
    if added.is_empty() || removed.is_empty() {
        return false;
    }
    added
        .iter()
        .chain(removed.iter())
        .any(|line| FIX_HINT.is_match(line))
}

fn adds_new_capability(diff: &str, added: &[&str], removed: &[&str]) -> bool {
    if diff.lines().any(|l| l.starts_with("new file mode")) {
        return true;
    }
    !added.is_empty() && removed.is_empty()
}

/// Applies the decision-priority rules to a diff (and optional commit
/// message), first match wins:
///
/// 1. an explicit class keyword in the message decides immediately;
/// 2. only test files touched: `test`;
/// 3. only documentation files: `docs`;
/// 4. added and removed lines identical modulo whitespace: `style`;
/// 5. only build / CI / dependency metadata files: `chore`;
/// 6. a modification whose changed lines mention failure vocabulary: `fix`;
/// 7. new files or pure additions: `feat`;
/// 8. otherwise `refactor`.
pub fn classify_change(diff: &str, message: Option<&str>) -> CommitClass {
    if let Some(message) = message {
        if let Some(caps) = CLASS_KEYWORD.captures(message) {
            if let Some(class) = CommitClass::parse(caps.get(1).expect("group").as_str()) {
                return class;
            }
        }
    }

    let paths = changed_paths(diff);
    let (added, removed) = changed_lines(diff);

    if !paths.is_empty() && paths.iter().all(|p| is_test_path(p)) {
        return CommitClass::Test;
    }
    if !paths.is_empty() && paths.iter().all(|p| is_docs_path(p)) {
        return CommitClass::Docs;
    }
    if is_whitespace_only(&added, &removed) {
        return CommitClass::Style;
    }
    if !paths.is_empty() && paths.iter().all(|p| is_build_path(p)) {
        return CommitClass::Chore;
    }
    if looks_like_fix(&added, &removed) {
        return CommitClass::Fix;
    }
    if adds_new_capability(diff, &added, &removed) {
        return CommitClass::Feat;
    }
    CommitClass::Refactor
}

/// Deterministic rule-based backend: classifies the query diff inside the
/// prompt with [`classify_change`] and answers `label: <type>`.
pub struct HeuristicBackend {
    id: String,
}

impl HeuristicBackend {
    pub fn new(id: impl Into<String>) -> Self {
        HeuristicBackend { id: id.into() }
    }
}

impl Backend for HeuristicBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, BackendError> {
        let text = match prompts::extract_query_diff(&prompt.text) {
            Some(diff) => {
                let message = prompts::extract_query_message(&prompt.text);
                format!("label: {}", classify_change(&diff, message.as_deref()))
            }
            // No diff block found: answer nothing, scored as unparseable.
            None => String::new(),
        };
        // Latency is pinned to zero so run logs are byte-identical across
        // machines and parallelism settings.
        Ok(Completion {
            text,
            latency_ms: 0,
            from_cache: false,
        })
    }
}

// --- replay cache and backend -------------------------------------------------

/// One cached completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub text: String,
    pub latency_ms: u64,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    backend: String,
    key: String,
    text: String,
    latency_ms: u64,
}

/// Append-only JSONL store of completions keyed by
/// `(backend id, content hash of the prompt)`.
pub struct ReplayCache {
    path: PathBuf,
    state: Mutex<CacheState>,
}

struct CacheState {
    entries: HashMap<(String, String), CacheEntry>,
    file: Option<File>,
}

impl ReplayCache {
    /// Opens (or lazily creates) a cache file and loads existing entries.
    pub fn open(path: &Path) -> Result<Self, BackendError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            for (index, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: CacheLine =
                    serde_json::from_str(line).map_err(|e| BackendError::CacheCorrupt {
                        path: path.to_path_buf(),
                        line: index + 1,
                        reason: e.to_string(),
                    })?;
                entries.insert(
                    (parsed.backend, parsed.key),
                    CacheEntry {
                        text: parsed.text,
                        latency_ms: parsed.latency_ms,
                    },
                );
            }
        }
        Ok(ReplayCache {
            path: path.to_path_buf(),
            state: Mutex::new(CacheState {
                entries,
                file: None,
            }),
        })
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("cache poisoned").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entry counts per backend id, sorted by id.
    pub fn backend_counts(&self) -> std::collections::BTreeMap<String, usize> {
        let state = self.state.lock().expect("cache poisoned");
        let mut counts = std::collections::BTreeMap::new();
        for (backend, _) in state.entries.keys() {
            *counts.entry(backend.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn get(&self, backend: &str, key: &str) -> Option<CacheEntry> {
        self.state
            .lock()
            .expect("cache poisoned")
            .entries
            .get(&(backend.to_string(), key.to_string()))
            .cloned()
    }

    /// Stores a completion; re-recording an existing `(backend, key)` is a
    /// no-op. Returns whether the entry was newly written.
    pub fn record(
        &self,
        backend: &str,
        key: &str,
        text: &str,
        latency_ms: u64,
    ) -> Result<bool, BackendError> {
        let mut state = self.state.lock().expect("cache poisoned");
        let map_key = (backend.to_string(), key.to_string());
        if state.entries.contains_key(&map_key) {
            return Ok(false);
        }

        let line = serde_json::to_string(&CacheLine {
            backend: backend.to_string(),
            key: key.to_string(),
            text: text.to_string(),
            latency_ms,
        })
        .expect("cache line serializes");
        if state.file.is_none() {
            state.file = Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&self.path)?,
            );
        }
        let file = state.file.as_mut().expect("just opened");
        writeln!(file, "{line}")?;
        file.flush()?;

        state.entries.insert(
            map_key,
            CacheEntry {
                text: text.to_string(),
                latency_ms,
            },
        );
        Ok(true)
    }
}

/// Serves completions recorded under this backend's id; misses are hard
/// errors so replayed experiments cannot silently fall through to anything
/// nondeterministic.
pub struct ReplayBackend {
    id: String,
    cache: Arc<ReplayCache>,
}

impl ReplayBackend {
    pub fn new(id: impl Into<String>, cache: Arc<ReplayCache>) -> Self {
        ReplayBackend {
            id: id.into(),
            cache,
        }
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, BackendError> {
        let key = content_hash(&prompt.text);
        match self.cache.get(&self.id, &key) {
            Some(entry) => Ok(Completion {
                text: entry.text,
                latency_ms: entry.latency_ms,
                from_cache: true,
            }),
            None => Err(BackendError::CacheMiss {
                backend: self.id.clone(),
                key,
            }),
        }
    }
}

/// Instantiates the backend described by a spec. Replay backends need the
/// cache they will serve from.
pub fn build_backend(
    spec: &BackendSpec,
    cache: Option<Arc<ReplayCache>>,
) -> Result<Box<dyn Backend>, BackendError> {
    spec.validate()?;
    match spec.kind {
        BackendKind::HttpChat => Ok(Box::new(HttpChatBackend::new(spec.clone())?)),
        BackendKind::Heuristic => Ok(Box::new(HeuristicBackend::new(spec.id.clone()))),
        BackendKind::Replay => {
            let cache = cache.ok_or_else(|| BackendError::InvalidSpec {
                id: spec.id.clone(),
                reason: "replay backend requires a cache file (set `cache` in the config)"
                    .to_string(),
            })?;
            Ok(Box::new(ReplayBackend::new(spec.id.clone(), cache)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miner::LabeledSample;
    use crate::prompts::{render_zero_shot, StrategyKind, StrategySpec};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::{TcpListener, TcpStream};
    use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
    use std::thread::JoinHandle;
    use tempfile::TempDir;

    #[test]
    fn content_hash_is_sha256_hex() {
        assert_eq!(
            content_hash(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        let h = content_hash("label: fix");
        assert_eq!(h.len(), 64);
        assert!(h
            .chars()
            .all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        assert_eq!(h, content_hash("label: fix"));
        assert_ne!(h, content_hash("label: fix "));
    }

    #[test]
    fn spec_defaults_fill_in_from_toml() {
        let spec: BackendSpec = toml::from_str("id = \"rules\"\nkind = \"heuristic\"\n").unwrap();
        assert_eq!(spec.kind, BackendKind::Heuristic);
        assert_eq!(spec.temperature, 0.0);
        assert_eq!(spec.max_output_tokens, 512);
        assert_eq!(spec.request_timeout_secs, 60);
        assert_eq!(spec.max_retries, 3);
        assert_eq!(spec.max_concurrent, 4);
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn spec_validation_rejects_bad_values() {
        let mut spec = BackendSpec::heuristic("ok-name");
        assert!(spec.validate().is_ok());

        spec.id = String::new();
        assert!(matches!(
            spec.validate().unwrap_err(),
            BackendError::InvalidSpec { .. }
        ));

        spec.id = "has space".to_string();
        assert!(spec.validate().is_err());

        let mut spec = BackendSpec::heuristic("h");
        spec.temperature = -1.0;
        assert!(spec.validate().is_err());

        let mut spec = BackendSpec::heuristic("h");
        spec.max_concurrent = 0;
        assert!(spec.validate().is_err());

        let mut http = BackendSpec::heuristic("h");
        http.kind = BackendKind::HttpChat;
        assert!(http.validate().is_err()); // no endpoint/model
        http.endpoint_url = Some("http://localhost:9".to_string());
        assert!(http.validate().is_err());
        http.model_name = Some("m".to_string());
        assert!(http.validate().is_ok());
    }

    fn diff_for(paths: &[&str], added: &[&str], removed: &[&str]) -> String {
        let mut diff = String::new();
        for p in paths {
            diff.push_str(&format!(
                "diff --git a/{p} b/{p}\n--- a/{p}\n+++ b/{p}\n@@ -1,1 +1,1 @@\n"
            ));
        }
        for r in removed {
            diff.push_str(&format!("-{r}\n"));
        }
        for a in added {
            diff.push_str(&format!("+{a}\n"));
        }
        diff
    }

    #[test]
    fn rule_docs_only_files() {
        let diff = diff_for(&["README.md"], &["new sentence"], &[]);
        assert_eq!(classify_change(&diff, None), CommitClass::Docs);
        let diff = diff_for(&["docs/guide.html"], &["x"], &["y"]);
        assert_eq!(classify_change(&diff, None), CommitClass::Docs);
    }

    #[test]
    fn rule_test_only_files() {
        let diff = diff_for(
            &["tests/parser.rs", "tests/lexer.rs"],
            &["assert!(true);"],
            &[],
        );
        assert_eq!(classify_change(&diff, None), CommitClass::Test);
        let diff = diff_for(&["src/foo_test.go"], &["x"], &[]);
        assert_eq!(classify_change(&diff, None), CommitClass::Test);
        // Tests outrank docs-looking extensions when mixed with test dirs.
        let diff = diff_for(&["tests/data.txt"], &["x"], &[]);
        assert_eq!(classify_change(&diff, None), CommitClass::Test);
    }

    #[test]
    fn rule_whitespace_only_is_style() {
        let diff = diff_for(
            &["src/main.rs"],
            &["fn main() {", "    run();", "}"],
            &["fn main() {run();}"],
        );
        assert_eq!(classify_change(&diff, None), CommitClass::Style);
        // Adding only blank lines is also style.
        let diff = diff_for(&["src/main.rs"], &["", ""], &[]);
        assert_eq!(classify_change(&diff, None), CommitClass::Style);
    }

    #[test]
    fn rule_build_metadata_is_chore() {
        let diff = diff_for(&["Cargo.toml", "Cargo.lock"], &["serde = \"1\""], &["old"]);
        assert_eq!(classify_change(&diff, None), CommitClass::Chore);
        let diff = diff_for(&[".github/workflows/ci.yml"], &["- run: make"], &[]);
        assert_eq!(classify_change(&diff, None), CommitClass::Chore);
    }

    #[test]
    fn rule_fix_keywords_in_modified_lines() {
        let diff = diff_for(
            &["src/parser.rs"],
            &["if index < len { // fix off-by-one"],
            &["if index <= len {"],
        );
        assert_eq!(classify_change(&diff, None), CommitClass::Fix);
    }

    #[test]
    fn rule_new_capability_is_feat() {
        let diff = "diff --git a/src/export.rs b/src/export.rs\nnew file mode 100644\n--- /dev/null\n+++ b/src/export.rs\n@@ -0,0 +1,2 @@\n+pub fn export() {}\n+pub fn import() {}\n";
        assert_eq!(classify_change(diff, None), CommitClass::Feat);
        // Pure additions to an existing source file.
        let diff = diff_for(&["src/lib.rs"], &["pub fn extra() {}"], &[]);
        assert_eq!(classify_change(&diff, None), CommitClass::Feat);
    }

    #[test]
    fn rule_fallback_is_refactor() {
        let diff = diff_for(
            &["src/lib.rs"],
            &["let result = compute_total(items);"],
            &["let result = total(items);"],
        );
        assert_eq!(classify_change(&diff, None), CommitClass::Refactor);
    }

    #[test]
    fn rule_message_keyword_outranks_files() {
        let diff = diff_for(&["README.md"], &["x"], &[]);
        assert_eq!(
            classify_change(&diff, Some("apply style cleanup")),
            CommitClass::Style
        );
        // "tests" does not hit the \btest\b keyword.
        assert_eq!(
            classify_change(&diff, Some("update tests description")),
            CommitClass::Docs
        );
        assert_eq!(
            classify_change(&diff, Some("no keyword")),
            CommitClass::Docs
        );
    }

    fn prompt_for(diff: &str) -> RenderedPrompt {
        let sample = LabeledSample {
            sample_id: 0,
            commit_id: "0".repeat(40),
            label: CommitClass::Feat,
            diff: diff.to_string(),
            stripped_message: None,
        };
        render_zero_shot(&sample, &StrategySpec::new(StrategyKind::ZeroShot)).unwrap()
    }

    #[test]
    fn heuristic_backend_answers_label_lines() {
        let backend = HeuristicBackend::new("rules");
        assert_eq!(backend.id(), "rules");
        let diff = diff_for(&["README.md"], &["hello"], &[]);
        let completion = backend.complete(&prompt_for(&diff)).unwrap();
        assert_eq!(completion.text, "label: docs");
        assert_eq!(completion.latency_ms, 0);
        assert!(!completion.from_cache);
    }

    #[test]
    fn heuristic_backend_is_deterministic() {
        let backend = HeuristicBackend::new("rules");
        let diff = diff_for(&["src/a.rs"], &["fn f() {}"], &["fn g() {}"]);
        let prompt = prompt_for(&diff);
        let a = backend.complete(&prompt).unwrap();
        let b = backend.complete(&prompt).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replay_cache_round_trips_and_is_idempotent() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("cache.jsonl");
        let cache = ReplayCache::open(&path).unwrap();
        assert!(cache.is_empty());

        assert!(cache
            .record("m1", &content_hash("p"), "label: fix", 12)
            .unwrap());
        assert!(!cache.record("m1", &content_hash("p"), "other", 99).unwrap());
        assert_eq!(cache.len(), 1);
        let entry = cache.get("m1", &content_hash("p")).unwrap();
        assert_eq!(entry.text, "label: fix");
        assert_eq!(entry.latency_ms, 12);
        assert_eq!(cache.get("m2", &content_hash("p")), None);

        // Reload from disk.
        drop(cache);
        let cache = ReplayCache::open(&path).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(
            cache.get("m1", &content_hash("p")).unwrap().text,
            "label: fix"
        );
    }

    #[test]
    fn replay_cache_rejects_corrupt_files() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("cache.jsonl");
        std::fs::write(&path, "{\"backend\":\"m\"\n").unwrap();
        match ReplayCache::open(&path).err() {
            Some(BackendError::CacheCorrupt { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected result: {other:?}"),
        }
    }

    #[test]
    fn replay_backend_serves_hits_and_fails_misses() {
        let tmp = TempDir::new().unwrap();
        let cache = Arc::new(ReplayCache::open(&tmp.path().join("c.jsonl")).unwrap());
        let diff = diff_for(&["src/x.rs"], &["y"], &[]);
        let prompt = prompt_for(&diff);
        cache
            .record("m1", &content_hash(&prompt.text), "label: feat", 31)
            .unwrap();

        let backend = ReplayBackend::new("m1", Arc::clone(&cache));
        let completion = backend.complete(&prompt).unwrap();
        assert_eq!(completion.text, "label: feat");
        assert_eq!(completion.latency_ms, 31);
        assert!(completion.from_cache);

        let other = ReplayBackend::new("m2", cache);
        assert!(matches!(
            other.complete(&prompt).unwrap_err(),
            BackendError::CacheMiss { .. }
        ));
    }

    #[test]
    fn build_backend_covers_all_kinds() {
        let tmp = TempDir::new().unwrap();
        assert_eq!(
            build_backend(&BackendSpec::heuristic("h"), None)
                .unwrap()
                .id(),
            "h"
        );

        let mut replay = BackendSpec::heuristic("r");
        replay.kind = BackendKind::Replay;
        assert!(matches!(
            build_backend(&replay, None).err(),
            Some(BackendError::InvalidSpec { .. })
        ));
        let cache = Arc::new(ReplayCache::open(&tmp.path().join("c.jsonl")).unwrap());
        assert_eq!(build_backend(&replay, Some(cache)).unwrap().id(), "r");

        let mut http = BackendSpec::heuristic("api");
        http.kind = BackendKind::HttpChat;
        http.endpoint_url = Some("http://127.0.0.1:1".to_string());
        http.model_name = Some("m".to_string());
        assert_eq!(build_backend(&http, None).unwrap().id(), "api");
    }

    // --- in-process HTTP stub ------------------------------------------------

    struct CapturedRequest {
        path: String,
        authorization: Option<String>,
        body: String,
    }

    type Responder = dyn Fn(usize, &CapturedRequest) -> (u16, String) + Send + Sync;

    struct StubServer {
        base_url: String,
        raw_addr: std::net::SocketAddr,
        stop: Arc<AtomicBool>,
        requests: Arc<Mutex<Vec<String>>>,
        auth_headers: Arc<Mutex<Vec<Option<String>>>>,
        handle: Option<JoinHandle<()>>,
    }

    impl StubServer {
        fn spawn(
            responder: impl Fn(usize, &CapturedRequest) -> (u16, String) + Send + Sync + 'static,
        ) -> Self {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let raw_addr = listener.local_addr().unwrap();
            let stop = Arc::new(AtomicBool::new(false));
            let requests: Arc<Mutex<Vec<String>>> = Arc::new(Mutex::new(Vec::new()));
            let auth_headers: Arc<Mutex<Vec<Option<String>>>> = Arc::new(Mutex::new(Vec::new()));
            let responder: Arc<Responder> = Arc::new(responder);

            let thread_stop = Arc::clone(&stop);
            let thread_requests = Arc::clone(&requests);
            let thread_auth = Arc::clone(&auth_headers);
            // Connections are served on their own threads so tests can
            // observe real request overlap.
            let handle = std::thread::spawn(move || {
                let mut index = 0;
                let mut workers = Vec::new();
                for stream in listener.incoming() {
                    if thread_stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let responder = Arc::clone(&responder);
                    let requests = Arc::clone(&thread_requests);
                    let auth = Arc::clone(&thread_auth);
                    let request_index = index;
                    index += 1;
                    workers.push(std::thread::spawn(move || {
                        let Some(captured) = read_request(stream.try_clone().unwrap()) else {
                            return;
                        };
                        requests.lock().unwrap().push(captured.body.clone());
                        auth.lock().unwrap().push(captured.authorization.clone());
                        let (status, body) = responder(request_index, &captured);
                        write_response(stream, status, &body);
                    }));
                }
                for worker in workers {
                    let _ = worker.join();
                }
            });

            StubServer {
                base_url: format!("http://{raw_addr}"),
                raw_addr,
                stop,
                requests,
                auth_headers,
                handle: Some(handle),
            }
        }

        fn hits(&self) -> usize {
            self.requests.lock().unwrap().len()
        }
    }

    impl Drop for StubServer {
        fn drop(&mut self) {
            self.stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect(self.raw_addr);
            if let Some(handle) = self.handle.take() {
                let _ = handle.join();
            }
        }
    }

    fn read_request(stream: TcpStream) -> Option<CapturedRequest> {
        let mut reader = BufReader::new(stream);
        let mut request_line = String::new();
        reader.read_line(&mut request_line).ok()?;
        let path = request_line.split_whitespace().nth(1)?.to_string();

        let mut content_length = 0;
        let mut authorization = None;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).ok()?;
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((name, value)) = line.split_once(':') {
                let value = value.trim();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => content_length = value.parse().unwrap_or(0),
                    "authorization" => authorization = Some(value.to_string()),
                    _ => {}
                }
            }
        }

        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body).ok()?;
        Some(CapturedRequest {
            path,
            authorization,
            body: String::from_utf8_lossy(&body).into_owned(),
        })
    }

    fn write_response(mut stream: TcpStream, status: u16, body: &str) {
        let response = format!(
            "HTTP/1.1 {status} STUB\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        let _ = stream.write_all(response.as_bytes());
        let _ = stream.flush();
    }

    fn chat_body(content: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}]
        })
        .to_string()
    }

    fn http_spec(base_url: &str) -> BackendSpec {
        BackendSpec {
            id: "stub-model".to_string(),
            kind: BackendKind::HttpChat,
            endpoint_url: Some(base_url.to_string()),
            model_name: Some("stub-1".to_string()),
            temperature: 0.0,
            max_output_tokens: 64,
            request_timeout_secs: 10,
            max_retries: 2,
            max_concurrent: 4,
        }
    }

    #[test]
    fn http_backend_posts_wire_format_and_reads_content() {
        let server = StubServer::spawn(|_, req| {
            assert_eq!(req.path, "/chat/completions");
            (200, chat_body("label: docs"))
        });
        let backend = HttpChatBackend::new(http_spec(&server.base_url)).unwrap();
        let prompt = prompt_for(&diff_for(&["README.md"], &["x"], &[]));
        let completion = backend.complete(&prompt).unwrap();
        assert_eq!(completion.text, "label: docs");
        assert!(!completion.from_cache);

        let body: serde_json::Value =
            serde_json::from_str(&server.requests.lock().unwrap()[0]).unwrap();
        assert_eq!(body["model"], "stub-1");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 64);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], prompt.text);
    }

    #[test]
    fn http_backend_retries_transient_failures() {
        let server = StubServer::spawn(|index, _| {
            if index == 0 {
                (500, "{\"error\":\"boom\"}".to_string())
            } else if index == 1 {
                (429, "{\"error\":\"slow down\"}".to_string())
            } else {
                (200, chat_body("label: fix"))
            }
        });
        let backend = HttpChatBackend::new(http_spec(&server.base_url)).unwrap();
        let completion = backend
            .complete(&prompt_for("diff --git a/f b/f\n+x\n"))
            .unwrap();
        assert_eq!(completion.text, "label: fix");
        assert_eq!(server.hits(), 3);
    }

    #[test]
    fn http_backend_gives_up_after_max_retries() {
        let server = StubServer::spawn(|_, _| (503, "{}".to_string()));
        let backend = HttpChatBackend::new(http_spec(&server.base_url)).unwrap();
        match backend.complete(&prompt_for("d")).unwrap_err() {
            BackendError::BackendUnavailable {
                attempts, reason, ..
            } => {
                assert_eq!(attempts, 3); // max_retries = 2
                assert!(reason.contains("503"), "{reason}");
            }
            other => panic!("unexpected error: {other:?}"),
        }
        assert_eq!(server.hits(), 3);
    }

    #[test]
    fn http_backend_does_not_retry_client_errors() {
        let server = StubServer::spawn(|_, _| (404, "{}".to_string()));
        let backend = HttpChatBackend::new(http_spec(&server.base_url)).unwrap();
        match backend.complete(&prompt_for("d")).unwrap_err() {
            BackendError::BackendUnavailable {
                attempts, reason, ..
            } => {
                assert_eq!(attempts, 1);
                assert!(reason.contains("404"));
            }
            other => panic!("unexpected error: {other:?}"),
        }
        assert_eq!(server.hits(), 1);
    }

    #[test]
    fn http_backend_flags_malformed_responses() {
        let server = StubServer::spawn(|index, _| {
            if index == 0 {
                (200, "not json at all".to_string())
            } else {
                (200, "{\"choices\":[]}".to_string())
            }
        });
        let backend = HttpChatBackend::new(http_spec(&server.base_url)).unwrap();
        assert!(matches!(
            backend.complete(&prompt_for("d")).unwrap_err(),
            BackendError::MalformedResponse { .. }
        ));
        assert!(matches!(
            backend.complete(&prompt_for("d")).unwrap_err(),
            BackendError::MalformedResponse { .. }
        ));
    }

    #[test]
    fn http_backend_treats_null_content_as_empty() {
        let server = StubServer::spawn(|_, _| {
            (
                200,
                "{\"choices\":[{\"message\":{\"role\":\"assistant\",\"content\":null}}]}"
                    .to_string(),
            )
        });
        let backend = HttpChatBackend::new(http_spec(&server.base_url)).unwrap();
        let completion = backend.complete(&prompt_for("d")).unwrap();
        assert_eq!(completion.text, "");
    }

    #[test]
    fn http_backend_sends_bearer_token_from_env() {
        let server = StubServer::spawn(|_, _| (200, chat_body("ok")));

        // Guard other tests: construction reads the env var, so set it only
        // around the two constructions this test compares.
        std::env::set_var(API_KEY_ENV, "secret-token");
        let with_key = HttpChatBackend::new(http_spec(&server.base_url)).unwrap();
        std::env::remove_var(API_KEY_ENV);
        let without_key = HttpChatBackend::new(http_spec(&server.base_url)).unwrap();

        with_key.complete(&prompt_for("d")).unwrap();
        without_key.complete(&prompt_for("d")).unwrap();

        let auth = server.auth_headers.lock().unwrap();
        assert_eq!(auth[0].as_deref(), Some("Bearer secret-token"));
        assert_eq!(auth[1], None);
    }

    #[test]
    fn http_backend_bounds_concurrency() {
        static CURRENT: AtomicUsize = AtomicUsize::new(0);
        static PEAK: AtomicUsize = AtomicUsize::new(0);

        let server = StubServer::spawn(|_, _| {
            let now = CURRENT.fetch_add(1, Ordering::SeqCst) + 1;
            PEAK.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(50));
            CURRENT.fetch_sub(1, Ordering::SeqCst);
            (200, chat_body("label: chore"))
        });

        let mut spec = http_spec(&server.base_url);
        spec.max_concurrent = 2;
        let backend = Arc::new(HttpChatBackend::new(spec).unwrap());

        let mut handles = Vec::new();
        for _ in 0..8 {
            let backend = Arc::clone(&backend);
            handles.push(std::thread::spawn(move || {
                backend.complete(&prompt_for("d")).unwrap()
            }));
        }
        for handle in handles {
            handle.join().unwrap();
        }
        assert_eq!(server.hits(), 8);
        assert!(
            PEAK.load(Ordering::SeqCst) <= 2,
            "peak {}",
            PEAK.load(Ordering::SeqCst)
        );
    }
}
