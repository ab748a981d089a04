//! Conventional-commit grammar: parsing, canonical rendering, and label
//! stripping for commit messages of the form
//! `<type>[(scope)][!]: <description>` followed by an optional body and
//! footers.
//!
//! The classification vocabulary is the fixed seven-class set
//! [`CommitClass::ALL`]. Messages whose header is shaped like a conventional
//! commit but uses a type outside that set (`perf:`, `build:`, ...) are
//! rejected with [`ParseError::UnknownType`] so callers can distinguish
//! "valid but out of vocabulary" from "not conventional at all".

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The seven commit types the benchmark classifies into.
///
/// Variant order is the canonical presentation order used everywhere:
/// prompt class overviews, confusion-matrix axes, and report rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommitClass {
    Feat,
    Fix,
    Docs,
    Style,
    Refactor,
    Test,
    Chore,
}

impl CommitClass {
    /// All classes in canonical order.
    pub const ALL: [CommitClass; 7] = [
        CommitClass::Feat,
        CommitClass::Fix,
        CommitClass::Docs,
        CommitClass::Style,
        CommitClass::Refactor,
        CommitClass::Test,
        CommitClass::Chore,
    ];

    /// The lowercase label used in commit headers and serialized output.
    pub fn as_str(&self) -> &'static str {
        match self {
            CommitClass::Feat => "feat",
            CommitClass::Fix => "fix",
            CommitClass::Docs => "docs",
            CommitClass::Style => "style",
            CommitClass::Refactor => "refactor",
            CommitClass::Test => "test",
            CommitClass::Chore => "chore",
        }
    }

    /// Case-insensitive lookup; `None` when the label is not one of the
    /// seven classes.
    pub fn parse(label: &str) -> Option<CommitClass> {
        CommitClass::ALL
            .iter()
            .copied()
            .find(|c| label.eq_ignore_ascii_case(c.as_str()))
    }

    /// Position of this class in [`CommitClass::ALL`].
    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for CommitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CommitClass {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CommitClass::parse(s).ok_or_else(|| ParseError::UnknownType(s.to_ascii_lowercase()))
    }
}

/// Why a message failed to parse as a conventional commit.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    /// The header does not match the `type[(scope)][!]: description` shape.
    #[error("message is not in conventional commit form")]
    NotConventional,
    /// The header is well shaped but its type is outside the seven-class
    /// vocabulary (for example `perf` or `build`).
    #[error("unknown commit type `{0}`")]
    UnknownType(String),
    /// The header ends in `: ` with nothing (or only whitespace) after it.
    #[error("commit description is empty")]
    EmptyDescription,
}

/// Parsed first line of a conventional commit message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConventionalHeader {
    pub class: CommitClass,
    pub scope: Option<String>,
    /// `true` when the header carries a `!` breaking-change marker.
    pub breaking: bool,
    pub description: String,
}

/// One `Token: value` (or `Token #value`) footer line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Footer {
    pub token: String,
    pub value: String,
}

/// A fully parsed conventional commit message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConventionalMessage {
    pub header: ConventionalHeader,
    /// Paragraphs between the header and the footers, joined by blank lines.
    pub body: Option<String>,
    pub footers: Vec<Footer>,
}

impl ConventionalMessage {
    /// `true` when the header has a `!` marker or a `BREAKING CHANGE` /
    /// `BREAKING-CHANGE` footer is present.
    pub fn is_breaking(&self) -> bool {
        self.header.breaking
            || self
                .footers
                .iter()
                .any(|f| f.token == "BREAKING CHANGE" || f.token == "BREAKING-CHANGE")
    }
}

fn is_type_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '-' || c == '_'
}

/// Parses a single header line of the form `type[(scope)][!]: description`.
///
/// Structural violations (bad type token, empty or malformed scope, missing
/// `: ` separator, stray whitespace) yield [`ParseError::NotConventional`].
/// A structurally valid header with an out-of-vocabulary type yields
/// [`ParseError::UnknownType`], and one whose description is empty or
/// whitespace-only yields [`ParseError::EmptyDescription`]. The type is
/// matched case-insensitively; the description keeps its case but loses
/// trailing whitespace.
pub fn parse_header(line: &str) -> Result<ConventionalHeader, ParseError> {
    if line.is_empty() || line.contains('\n') || line.starts_with(char::is_whitespace) {
        return Err(ParseError::NotConventional);
    }

    let type_end = line
        .char_indices()
        .find(|&(_, c)| !is_type_char(c))
        .map(|(i, _)| i)
        .unwrap_or(line.len());
    let type_token = &line[..type_end];
    if type_token.is_empty() || !type_token.starts_with(|c: char| c.is_ascii_alphabetic()) {
        return Err(ParseError::NotConventional);
    }

    let mut rest = &line[type_end..];
    let mut scope = None;
    if let Some(after_open) = rest.strip_prefix('(') {
        let close = after_open.find(')').ok_or(ParseError::NotConventional)?;
        let raw_scope = &after_open[..close];
        if raw_scope.is_empty() || raw_scope.contains(['(', ':', '\n']) {
            return Err(ParseError::NotConventional);
        }
        scope = Some(raw_scope.to_string());
        rest = &after_open[close + 1..];
    }

    let breaking = rest.starts_with('!');
    if breaking {
        rest = &rest[1..];
    }

    // Exactly one space after the colon: the separator is the literal `: `
    // and the description must not begin with further whitespace.
    let raw_description = rest.strip_prefix(": ").ok_or(ParseError::NotConventional)?;
    if raw_description.starts_with(|c: char| c.is_whitespace()) {
        return Err(ParseError::NotConventional);
    }

    let class = CommitClass::parse(type_token)
        .ok_or_else(|| ParseError::UnknownType(type_token.to_ascii_lowercase()))?;

    let description = raw_description.trim_end();
    if description.is_empty() {
        return Err(ParseError::EmptyDescription);
    }

    Ok(ConventionalHeader {
        class,
        scope,
        breaking,
        description: description.to_string(),
    })
}

/// Parses a footer line: `BREAKING CHANGE: value`, `Token: value`, or
/// `Token #value`. Values are trimmed and must be non-empty; a `#`-separated
/// value keeps its `#` so issue references survive canonicalization.
fn parse_footer_line(line: &str) -> Option<Footer> {
    if let Some(value) = line.strip_prefix("BREAKING CHANGE: ") {
        let value = value.trim();
        if value.is_empty() {
            return None;
        }
        return Some(Footer {
            token: "BREAKING CHANGE".to_string(),
            value: value.to_string(),
        });
    }

    let token_end = line
        .char_indices()
        .find(|&(_, c)| !(c.is_ascii_alphanumeric() || c == '-'))
        .map(|(i, _)| i)
        .unwrap_or(line.len());
    let token = &line[..token_end];
    if token.is_empty() || !token.starts_with(|c: char| c.is_ascii_alphabetic()) {
        return None;
    }

    let rest = &line[token_end..];
    let value = if let Some(v) = rest.strip_prefix(": ") {
        v.trim().to_string()
    } else {
        let v = rest.strip_prefix(" #")?.trim();
        if v.is_empty() {
            return None;
        }
        format!("#{v}")
    };
    if value.is_empty() {
        return None;
    }

    Some(Footer {
        token: token.to_string(),
        value,
    })
}

/// Parses a full commit message: header line, optional body paragraphs, and
/// an optional trailing footer block.
///
/// The footer block is the last paragraph, and only when *every* line in it
/// parses as a footer; otherwise that paragraph stays part of the body.
/// Header errors propagate unchanged.
pub fn parse_message(message: &str) -> Result<ConventionalMessage, ParseError> {
    let (first, rest) = match message.split_once('\n') {
        Some((first, rest)) => (first, Some(rest)),
        None => (message, None),
    };
    let header = parse_header(first)?;

    let mut body = None;
    let mut footers = Vec::new();
    if let Some(rest) = rest {
        let mut blocks: Vec<Vec<&str>> = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for line in rest.split('\n') {
            if line.trim().is_empty() {
                if !current.is_empty() {
                    blocks.push(std::mem::take(&mut current));
                }
            } else {
                current.push(line);
            }
        }
        if !current.is_empty() {
            blocks.push(current);
        }

        if let Some(last) = blocks.last() {
            let parsed: Vec<Option<Footer>> = last.iter().map(|l| parse_footer_line(l)).collect();
            if parsed.iter().all(|f| f.is_some()) {
                footers = parsed.into_iter().map(|f| f.unwrap()).collect();
                blocks.pop();
            }
        }

        if !blocks.is_empty() {
            let paragraphs: Vec<String> = blocks.iter().map(|b| b.join("\n")).collect();
            body = Some(paragraphs.join("\n\n"));
        }
    }

    Ok(ConventionalMessage {
        header,
        body,
        footers,
    })
}

/// Renders a header in canonical form: `type(scope)!: description`.
pub fn render_header(header: &ConventionalHeader) -> String {
    let mut out = String::new();
    out.push_str(header.class.as_str());
    if let Some(scope) = &header.scope {
        out.push('(');
        out.push_str(scope);
        out.push(')');
    }
    if header.breaking {
        out.push('!');
    }
    out.push_str(": ");
    out.push_str(&header.description);
    out
}

/// Renders a message in canonical form: header, blank line, body, blank
/// line, footers (one `Token: value` per line). No trailing newline.
pub fn render_message(message: &ConventionalMessage) -> String {
    let mut out = render_header(&message.header);
    if let Some(body) = &message.body {
        out.push_str("\n\n");
        out.push_str(body);
    }
    if !message.footers.is_empty() {
        out.push_str("\n\n");
        let lines: Vec<String> = message
            .footers
            .iter()
            .map(|f| format!("{}: {}", f.token, f.value))
            .collect();
        out.push_str(&lines.join("\n"));
    }
    out
}

/// Removes the type prefix from a labeled message: the first line is
/// replaced by its bare description, everything after it is untouched.
/// Fails with the header's parse error when the first line carries no label.
pub fn strip_label(message: &str) -> Result<String, ParseError> {
    match message.split_once('\n') {
        Some((first, rest)) => {
            let header = parse_header(first)?;
            Ok(format!("{}\n{}", header.description, rest))
        }
        None => Ok(parse_header(message)?.description),
    }
}
