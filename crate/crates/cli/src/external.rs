//! Models evaluated by a long-lived child process.
//!
//! Each evaluation writes one JSON line `{"id": n, "inputs": [...]}` to the
//! child's stdin and reads one line `{"id": n, "output": y}` from its stdout.
//! Requests are strictly sequential and ids count up from 0.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use lfmc_core::{Model, ModelError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes of child stderr kept for diagnostics.
const STDERR_TAIL: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Executable followed by its arguments.
    pub command: Vec<String>,
    /// Global input indices passed to the model, in order; all inputs when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_indices: Option<Vec<usize>>,
    /// Seconds to wait for each reply.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Relative cost of one evaluation.
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_tau() -> f64 {
    1.0
}

impl ExternalModelSpec {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            name: None,
            command,
            input_indices: None,
            timeout: default_timeout(),
            tau: default_tau(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), String> {
        if self.command.is_empty() || self.command[0].is_empty() {
            return Err("command must name an executable".into());
        }
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return Err(format!("timeout must be positive, got {}", self.timeout));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(format!("tau must be positive, got {}", self.tau));
        }
        if let Some(idx) = &self.input_indices {
            if idx.is_empty() || idx.iter().any(|&i| i >= dim) {
                return Err(format!("input_indices {idx:?} must be non-empty and below {dim}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("cannot start `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model `{model}` did not reply within {seconds} s")]
    Timeout { model: String, seconds: f64 },
    #[error("model `{model}` exited ({status}); stderr: {stderr}")]
    Exited { model: String, status: String, stderr: String },
    #[error("model `{model}` sent a malformed reply {line:?}: {reason}")]
    Malformed { model: String, line: String, reason: String },
    #[error("model `{model}` replied to request {got}, expected {expected}")]
    IdMismatch { model: String, expected: u64, got: u64 },
    #[error("model `{model}` pipe failed: {source}")]
    Pipe {
        model: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model `{model}` is no longer usable after an earlier failure")]
    Closed { model: String },
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    inputs: &'a [f64],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Reply {
    id: u64,
    output: f64,
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<String>>,
    next_id: u64,
    closed: bool,
}

/// A child process answering evaluation requests.
pub struct ExternalModel {
    name: String,
    timeout: Duration,
    session: Mutex<Session>,
}

impl std::fmt::Debug for ExternalModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalModel")
            .field("name", &self.name)
            .field("timeout", &self.timeout)
            .finish_non_exhaustive()
    }
}

impl ExternalModel {
    pub fn spawn(name: &str, spec: &ExternalModelSpec, timeout: Duration) -> Result<Self, ExternalError> {
        let mut child = Command::new(&spec.command[0])
            .args(&spec.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| ExternalError::Spawn {
                command: spec.command.join(" "),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");

        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 1024];
            while let Ok(n) = stderr_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut s = sink.lock().expect("stderr buffer");
                s.push_str(&String::from_utf8_lossy(&buf[..n]));
                if s.len() > STDERR_TAIL {
                    let mut cut = s.len() - STDERR_TAIL;
                    while !s.is_char_boundary(cut) {
                        cut += 1;
                    }
                    s.drain(..cut);
                }
            }
        });
        Ok(Self {
            name: name.to_string(),
            timeout,
            session: Mutex::new(Session {
                child,
                stdin,
                lines,
                stderr,
                next_id: 0,
                closed: false,
            }),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// One request/reply exchange.
    pub fn call(&self, x: &[f64]) -> Result<f64, ExternalError> {
        let mut s = self.session.lock().unwrap_or_else(|e| e.into_inner());
        if s.closed {
            return Err(ExternalError::Closed {
                model: self.name.clone(),
            });
        }
        let result = self.exchange(&mut s, x);
        if result.is_err() {
            s.closed = true;
            let _ = s.child.kill();
            let _ = s.child.wait();
        }
        result
    }

    fn exchange(&self, s: &mut Session, x: &[f64]) -> Result<f64, ExternalError> {
        let id = s.next_id;
        s.next_id += 1;
        let mut line = serde_json::to_string(&Request { id, inputs: x }).expect("request serializes");
        line.push('\n');
        if let Err(source) = s.stdin.write_all(line.as_bytes()).and_then(|_| s.stdin.flush()) {
            return Err(match wait_exit(&mut s.child, Duration::from_secs(1)) {
                Some(status) => self.exited(s, status),
                None => ExternalError::Pipe {
                    model: self.name.clone(),
                    source,
                },
            });
        }
        let reply = match s.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(source)) => {
                return Err(ExternalError::Pipe {
                    model: self.name.clone(),
                    source,
                })
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(ExternalError::Timeout {
                    model: self.name.clone(),
                    seconds: self.timeout.as_secs_f64(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = wait_exit(&mut s.child, Duration::from_secs(5));
                return Err(match status {
                    Some(status) => self.exited(s, status),
                    None => ExternalError::Exited {
                        model: self.name.clone(),
                        status: "closed stdout".into(),
                        stderr: stderr_snapshot(s),
                    },
                });
            }
        };
        let parsed: Reply = serde_json::from_str(reply.trim()).map_err(|e| ExternalError::Malformed {
            model: self.name.clone(),
            line: reply.clone(),
            reason: e.to_string(),
        })?;
        if parsed.id != id {
            return Err(ExternalError::IdMismatch {
                model: self.name.clone(),
                expected: id,
                got: parsed.id,
            });
        }
        Ok(parsed.output)
    }

    fn exited(&self, s: &Session, status: ExitStatus) -> ExternalError {
        // give the stderr reader a moment to drain
        thread::sleep(Duration::from_millis(20));
        ExternalError::Exited {
            model: self.name.clone(),
            status: status.to_string(),
            stderr: stderr_snapshot(s),
        }
    }
}

fn stderr_snapshot(s: &Session) -> String {
    s.stderr.lock().map(|b| b.trim().to_string()).unwrap_or_default()
}

fn wait_exit(child: &mut Child, limit: Duration) -> Option<ExitStatus> {
    let start = Instant::now();
    loop {
        match child.try_wait() {
            Ok(Some(status)) => return Some(status),
            Ok(None) if start.elapsed() < limit => thread::sleep(Duration::from_millis(5)),
            _ => return None,
        }
    }
}

impl Model for ExternalModel {
    fn evaluate(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.call(x).map_err(|e| ModelError::Failed(e.to_string()))
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        let s = self.session.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = s.child.kill();
        let _ = s.child.wait();
    }
}
