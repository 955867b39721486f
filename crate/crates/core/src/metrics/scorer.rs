//! Plug-in seam for metrics computed outside this crate (BERTscore and kin).
//!
//! Two transport shapes: a lookup file of precomputed scores keyed by a hash
//! of (hypothesis, reference), and a line-oriented subprocess speaking JSON.
//! The pipeline treats plug-in scores exactly like built-in chrF scores.

use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer '{name}' unavailable: {reason}")]
    ScorerUnavailable { name: String, reason: String },
    #[error("scorer '{name}' protocol error: {reason}")]
    ScorerProtocolError { name: String, reason: String },
}

pub trait ExternalScorer: Send {
    fn name(&self) -> &str;
    fn score(&mut self, hypothesis: &str, reference: &str) -> Result<f64, ScorerError>;
    /// Scorers that cannot take interleaved requests keep the default; the
    /// pipeline then serializes access to them.
    fn serializes_access(&self) -> bool {
        true
    }
}

/// Returns the scorer's value unchanged.
pub fn score_with_plugin(
    scorer: &mut dyn ExternalScorer,
    hypothesis: &str,
    reference: &str,
) -> Result<f64, ScorerError> {
    scorer.score(hypothesis, reference)
}

/// Key for lookup-file records: sha256 hex of `hypothesis NUL reference`.
pub fn pair_key(hypothesis: &str, reference: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(hypothesis.as_bytes());
    hasher.update([0u8]);
    hasher.update(reference.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Deserialize)]
struct LookupRecord {
    hash: String,
    score: f64,
}

/// Replays recorded scores from a jsonl file of `{"hash": ..., "score": ...}`
/// records. Unknown pairs are protocol errors: the file is expected to cover
/// the run.
#[derive(Debug)]
pub struct FileScorer {
    name: String,
    scores: HashMap<String, f64>,
}

impl FileScorer {
    pub fn from_path(name: impl Into<String>, path: &Path) -> Result<Self, ScorerError> {
        let name = name.into();
        let text = std::fs::read_to_string(path).map_err(|e| ScorerError::ScorerUnavailable {
            name: name.clone(),
            reason: format!("{}: {e}", path.display()),
        })?;
        let mut scores = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: LookupRecord =
                serde_json::from_str(line).map_err(|e| ScorerError::ScorerProtocolError {
                    name: name.clone(),
                    reason: format!("line {}: {e}", lineno + 1),
                })?;
            scores.insert(record.hash, record.score);
        }
        Ok(FileScorer { name, scores })
    }
}

impl ExternalScorer for FileScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&mut self, hypothesis: &str, reference: &str) -> Result<f64, ScorerError> {
        let key = pair_key(hypothesis, reference);
        self.scores
            .get(&key)
            .copied()
            .ok_or_else(|| ScorerError::ScorerProtocolError {
                name: self.name.clone(),
                reason: format!("no recorded score for pair {key}"),
            })
    }

    fn serializes_access(&self) -> bool {
        false
    }
}

/// Drives a child process: one `{"hyp": ..., "ref": ...}` request per stdin
/// line, one `{"score": ...}` reply per stdout line.
pub struct SubprocessScorer {
    name: String,
    command: Vec<String>,
    child: Option<(Child, ChildStdin, BufReader<ChildStdout>)>,
}

#[derive(Deserialize)]
struct ScoreReply {
    score: f64,
}

impl SubprocessScorer {
    pub fn new(name: impl Into<String>, command: Vec<String>) -> Self {
        SubprocessScorer {
            name: name.into(),
            command,
            child: None,
        }
    }

    fn spawn(&mut self) -> Result<(), ScorerError> {
        if self.child.is_some() {
            return Ok(());
        }
        let unavailable = |name: &str, reason: String| ScorerError::ScorerUnavailable {
            name: name.to_string(),
            reason,
        };
        if self.command.is_empty() {
            return Err(unavailable(&self.name, "empty command".into()));
        }
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| unavailable(&self.name, e.to_string()))?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| unavailable(&self.name, "no stdin".into()))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| unavailable(&self.name, "no stdout".into()))?;
        self.child = Some((child, stdin, BufReader::new(stdout)));
        Ok(())
    }
}

impl ExternalScorer for SubprocessScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&mut self, hypothesis: &str, reference: &str) -> Result<f64, ScorerError> {
        self.spawn()?;
        let name = self.name.clone();
        let (_, stdin, stdout) = self.child.as_mut().expect("spawned above");

        let request = serde_json::json!({ "hyp": hypothesis, "ref": reference });
        let send = writeln!(stdin, "{request}").and_then(|_| stdin.flush());
        if let Err(e) = send {
            self.child = None;
            return Err(ScorerError::ScorerUnavailable {
                name,
                reason: format!("write failed: {e}"),
            });
        }

        let mut line = String::new();
        match stdout.read_line(&mut line) {
            Ok(0) => {
                self.child = None;
                Err(ScorerError::ScorerUnavailable {
                    name,
                    reason: "process closed its output".into(),
                })
            }
            Ok(_) => {
                let reply: ScoreReply = serde_json::from_str(line.trim()).map_err(|e| {
                    ScorerError::ScorerProtocolError {
                        name: name.clone(),
                        reason: format!("bad reply {line:?}: {e}"),
                    }
                })?;
                Ok(reply.score)
            }
            Err(e) => {
                self.child = None;
                Err(ScorerError::ScorerUnavailable {
                    name,
                    reason: format!("read failed: {e}"),
                })
            }
        }
    }
}

impl Drop for SubprocessScorer {
    fn drop(&mut self) {
        if let Some((mut child, stdin, _)) = self.child.take() {
            drop(stdin);
            let _ = child.wait();
        }
    }
}
