//! Client side of the subprocess bridge: newline-delimited JSON frames over
//! the child's stdin/stdout, one request in flight at a time.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::Value;

use super::{Capabilities, ClassifierBackend, Prediction};
use crate::error::{Error, Result};

pub const BRIDGE_TIMEOUT_ENV: &str = "GTAB_BRIDGE_TIMEOUT_SECS";
const DEFAULT_TIMEOUT_SECS: u64 = 300;

/// Timeout from `GTAB_BRIDGE_TIMEOUT_SECS`, 300 s when unset.
pub fn bridge_timeout_from_env() -> Result<Duration> {
    match std::env::var(BRIDGE_TIMEOUT_ENV) {
        Err(_) => Ok(Duration::from_secs(DEFAULT_TIMEOUT_SECS)),
        Ok(s) => s
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v > 0.0)
            .map(Duration::from_secs_f64)
            .ok_or_else(|| Error::Invalid(format!("{BRIDGE_TIMEOUT_ENV} must be a positive number, got {s:?}"))),
    }
}

#[derive(Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Request {
    Hello {
        id: u64,
    },
    FitPredict {
        id: u64,
        train_x: Vec<Vec<f64>>,
        train_y: Vec<i64>,
        test_x: Vec<Vec<f64>>,
        seed: u64,
    },
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// A classifier served by a child process speaking the bridge protocol.
pub struct BridgeBackend {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    next_id: u64,
    name: String,
    version: String,
    capabilities: Capabilities,
    broken: bool,
}

impl std::fmt::Debug for BridgeBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeBackend")
            .field("pid", &self.child.id())
            .field("name", &self.name)
            .field("version", &self.version)
            .field("capabilities", &self.capabilities)
            .finish()
    }
}

impl BridgeBackend {
    /// Spawns `argv` and performs the `hello` handshake. `timeout` bounds the
    /// handshake and every later request.
    pub fn spawn(argv: &[String], timeout: Duration) -> Result<BridgeBackend> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| Error::Invalid("empty bridge command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::transport(None, format!("cannot spawn {program:?}: {e}")))?;

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let stderr = child.stderr.take().expect("piped stderr");
        thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(|l| l.ok()) {
                log::info!("bridge stderr: {line}");
            }
        });

        let mut backend = BridgeBackend {
            stdin: child.stdin.take(),
            child,
            lines,
            timeout,
            next_id: 0,
            name: String::new(),
            version: String::new(),
            capabilities: Capabilities::UNLIMITED,
            broken: false,
        };
        let (id, frame) = backend.call(|id| Request::Hello { id })?;
        let text = |key: &str| -> Result<String> {
            frame
                .get(key)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| Error::transport(Some(id), format!("hello response lacks string field {key:?}")))
        };
        let count = |key: &str| -> Result<usize> {
            frame
                .get(key)
                .and_then(Value::as_u64)
                .map(|v| usize::try_from(v).unwrap_or(usize::MAX))
                .ok_or_else(|| Error::transport(Some(id), format!("hello response lacks integer field {key:?}")))
        };
        backend.name = text("name")?;
        backend.version = text("version")?;
        backend.capabilities = Capabilities {
            max_samples: count("max_samples")?,
            max_features: count("max_features")?,
            max_classes: count("max_classes")?,
        };
        log::info!(
            "bridge {} {} ready: {:?}",
            backend.name,
            backend.version,
            backend.capabilities
        );
        Ok(backend)
    }

    fn fail(&mut self, id: u64, msg: impl Into<String>) -> Error {
        self.broken = true;
        let mut msg = msg.into();
        // give a dying child a moment so the exit status can be reported
        let deadline = Instant::now() + Duration::from_millis(200);
        while Instant::now() < deadline {
            if let Ok(Some(status)) = self.child.try_wait() {
                msg = format!("{msg} (bridge exited with {status})");
                break;
            }
            thread::sleep(Duration::from_millis(10));
        }
        Error::transport(Some(id), msg)
    }

    /// Sends one request frame and waits for its response.
    fn call(&mut self, make: impl FnOnce(u64) -> Request) -> Result<(u64, Value)> {
        let id = self.next_id;
        self.next_id += 1;
        if self.broken {
            return Err(Error::transport(Some(id), "bridge is unusable after an earlier failure"));
        }
        let mut frame = serde_json::to_string(&make(id)).expect("request serializes");
        frame.push('\n');
        let sent = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(frame.as_bytes()).and_then(|_| stdin.flush()),
            None => Err(std::io::ErrorKind::BrokenPipe.into()),
        };
        if let Err(e) = sent {
            return Err(self.fail(id, format!("write failed: {e}")));
        }

        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(self.fail(id, format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                return Err(self.fail(id, format!("no response within {:?}", self.timeout)));
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(self.fail(id, "bridge closed its output before responding"));
            }
        };
        let value: Value = match serde_json::from_str(&line) {
            Ok(v @ Value::Object(_)) => v,
            _ => return Err(self.fail(id, format!("malformed frame: {}", truncate(&line)))),
        };
        match value.get("id").and_then(Value::as_u64) {
            Some(got) if got == id => {}
            got => return Err(self.fail(id, format!("response id {got:?} does not echo request id"))),
        }
        if let Some(err) = value.get("error") {
            let msg = err.as_str().map(str::to_string).unwrap_or_else(|| err.to_string());
            return Err(Error::Remote { request_id: id, msg });
        }
        Ok((id, value))
    }
}

fn truncate(s: &str) -> String {
    if s.len() <= 200 {
        return s.to_string();
    }
    let mut end = 200;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}…", &s[..end])
}

impl ClassifierBackend for BridgeBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn predict_proba(
        &mut self,
        train_x: &DMatrix<f64>,
        train_y: &[i64],
        query_x: &DMatrix<f64>,
        seed: u64,
    ) -> Result<Prediction> {
        let (id, frame) = self.call(|id| Request::FitPredict {
            id,
            train_x: rows(train_x),
            train_y: train_y.to_vec(),
            test_x: rows(query_x),
            seed,
        })?;
        let parsed = (|| {
            let classes: Vec<i64> = serde_json::from_value(frame.get("classes")?.clone()).ok()?;
            let proba: Vec<Vec<f64>> = serde_json::from_value(frame.get("proba")?.clone()).ok()?;
            Some((classes, proba))
        })();
        let Some((classes, proba)) = parsed else {
            return Err(self.fail(id, "fit_predict response lacks classes/proba"));
        };
        let c = classes.len();
        if proba.iter().any(|r| r.len() != c) {
            return Err(self.fail(id, "probability rows do not match the class list"));
        }
        let flat: Vec<f64> = proba.iter().flatten().copied().collect();
        Ok(Prediction {
            proba: DMatrix::from_row_slice(proba.len(), c, &flat),
            classes,
        })
    }
}

impl Drop for BridgeBackend {
    fn drop(&mut self) {
        // closing stdin asks the bridge to exit
        drop(self.stdin.take());
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
