//! `ccbench` benchmarks how well language-model backends classify git commits
//! into conventional commit types.
//!
//! The pipeline has four stages, each usable on its own:
//!
//! 1. [`miner`] walks a git repository, keeps commits whose messages carry a
//!    conventional-commit label, and samples a class-balanced labeled dataset
//!    of diffs.
//! 2. [`prompts`] renders each diff into a classification prompt under one of
//!    three strategies (zero-shot, few-shot, chain-of-thought).
//! 3. [`backends`] sends prompts to a completion backend: an OpenAI-compatible
//!    HTTP endpoint, a deterministic rule-based classifier, or a replay cache.
//! 4. [`eval`] extracts the predicted label from the raw completion, tallies a
//!    confusion matrix, and computes accuracy / precision / recall / F1.
//!
//! [`runner`] ties the stages together: it executes every configured
//! (backend, strategy) pair over a dataset, writes a deterministic JSONL run
//! log, and renders report tables. [`ccparse`] is the shared
//! conventional-commit grammar used by both the miner and the evaluator.

pub mod backends;
pub mod ccparse;
pub mod eval;
pub mod miner;
pub mod prompts;
pub mod runner;
