//! Shared fixtures for the integration tests: a deterministic git
//! repository with labeled history and a minimal in-process chat-completions
//! server.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, LazyLock, Mutex};
use std::thread::JoinHandle;

use ccbench::ccparse::CommitClass;
use tempfile::TempDir;

pub const COMMITS_PER_CLASS: usize = 12;

fn git(repo: &Path, args: &[&str], timestamp: usize) {
    let date = format!(
        "2024-01-01T{:02}:{:02}:00+00:00",
        timestamp / 60,
        timestamp % 60
    );
    let status = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args([
            "-c",
            "user.name=dev",
            "-c",
            "user.email=dev@example.com",
            "-c",
            "commit.gpgsign=false",
        ])
        .args(args)
        .env("GIT_AUTHOR_DATE", &date)
        .env("GIT_COMMITTER_DATE", &date)
        .output()
        .expect("git runs");
    assert!(
        status.status.success(),
        "git {args:?} failed: {}",
        String::from_utf8_lossy(&status.stderr)
    );
}

fn commit_file(repo: &Path, name: &str, body: &str, message: &str, timestamp: usize) {
    std::fs::write(repo.join(name), body).expect("write file");
    git(repo, &["add", "-A"], timestamp);
    git(repo, &["commit", "-q", "-m", message], timestamp);
}

/// Builds a repository with `COMMITS_PER_CLASS` conventionally-labeled
/// commits per class (all with multi-line diffs), plus noise the miner must
/// skip: an unlabeled commit, a commit with a type outside the vocabulary,
/// and a labeled merge commit.
pub fn build_fixture_repo(dir: &Path) {
    std::fs::create_dir_all(dir).expect("create repo dir");
    git(dir, &["init", "-q", "-b", "main"], 0);

    let mut timestamp = 0;
    for index in 0..COMMITS_PER_CLASS {
        for class in CommitClass::ALL {
            timestamp += 1;
            let name = format!("{class}_{index}.txt");
            let body: String = (0..6)
                .map(|line| format!("{class} {index} content line {line}\n"))
                .collect();
            // Mix in scopes and a breaking marker so labeling sees the
            // full header grammar.
            let message = match index % 3 {
                0 => format!("{class}: change number {index}"),
                1 => format!("{class}(core): change number {index}"),
                _ => format!("{class}(api)!: change number {index}"),
            };
            commit_file(dir, &name, &body, &message, timestamp);
        }
    }

    // Noise: no conventional header.
    timestamp += 1;
    commit_file(
        dir,
        "notes.txt",
        "assorted notes\nmore notes\n",
        "update assorted notes",
        timestamp,
    );
    // Noise: conventional shape, but not one of the seven types.
    timestamp += 1;
    commit_file(
        dir,
        "hotloop.txt",
        "loop body\nloop body\n",
        "perf: tune the hot loop",
        timestamp,
    );
    // Noise: a labeled merge commit (and a side commit only reachable
    // through it).
    timestamp += 1;
    git(dir, &["checkout", "-q", "-b", "side"], timestamp);
    commit_file(
        dir,
        "side.txt",
        "side work\nside work\n",
        "chore: side branch work",
        timestamp,
    );
    timestamp += 1;
    git(dir, &["checkout", "-q", "main"], timestamp);
    git(
        dir,
        &[
            "merge",
            "-q",
            "--no-ff",
            "side",
            "-m",
            "chore: merge side branch",
        ],
        timestamp,
    );
}

static FIXTURE_REPO: LazyLock<(TempDir, PathBuf)> = LazyLock::new(|| {
    let tmp = TempDir::new().expect("fixture tempdir");
    let repo = tmp.path().join("repo");
    build_fixture_repo(&repo);
    (tmp, repo)
});

/// A process-wide fixture repository, built once and shared read-only.
pub fn fixture_repo() -> &'static Path {
    &FIXTURE_REPO.1
}

// --- in-process chat-completions stub ---------------------------------------

/// Serves an OpenAI-compatible `/chat/completions` endpoint that answers the
/// i-th request with `answers[i]` (the last answer repeats if requests keep
/// coming). Requests are handled sequentially.
pub struct StubChat {
    pub base_url: String,
    addr: std::net::SocketAddr,
    stop: Arc<AtomicBool>,
    bodies: Arc<Mutex<Vec<String>>>,
    handle: Option<JoinHandle<()>>,
}

impl StubChat {
    pub fn spawn(answers: Vec<String>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let addr = listener.local_addr().expect("stub addr");
        let stop = Arc::new(AtomicBool::new(false));
        let bodies: Arc<Mutex<Vec<String>>> = Arc::new(Mutex::new(Vec::new()));

        let thread_stop = Arc::clone(&stop);
        let thread_bodies = Arc::clone(&bodies);
        let handle = std::thread::spawn(move || {
            let mut index = 0usize;
            for stream in listener.incoming() {
                if thread_stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let Some(body) = read_request_body(stream.try_clone().expect("clone stream"))
                else {
                    continue;
                };
                thread_bodies.lock().expect("bodies lock").push(body);
                let answer = answers
                    .get(index.min(answers.len().saturating_sub(1)))
                    .cloned()
                    .unwrap_or_default();
                index += 1;
                let payload = serde_json::json!({
                    "choices": [{"message": {"role": "assistant", "content": answer}}]
                })
                .to_string();
                write_response(stream, &payload);
            }
        });

        StubChat {
            base_url: format!("http://{addr}"),
            addr,
            stop,
            bodies,
            handle: Some(handle),
        }
    }

    pub fn requests(&self) -> usize {
        self.bodies.lock().expect("bodies lock").len()
    }
}

impl Drop for StubChat {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn read_request_body(stream: TcpStream) -> Option<String> {
    let mut reader = BufReader::new(stream);
    let mut request_line = String::new();
    reader.read_line(&mut request_line).ok()?;
    request_line.split_whitespace().nth(1)?;

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).ok()?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).ok()?;
    Some(String::from_utf8_lossy(&body).into_owned())
}

fn write_response(mut stream: TcpStream, body: &str) {
    let response = format!(
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}
