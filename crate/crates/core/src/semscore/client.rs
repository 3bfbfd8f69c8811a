//! JSON Lines client for the external neural scorer.
//!
//! One request per line, `{"id": u64, "op": "nli"|"bert", "a": .., "b": ..}`;
//! one response per line, `{"id": u64, "score": f64}` or
//! `{"id": u64, "error": ".."}`. Responses may come back in any order, so a
//! reader thread routes them to waiting callers by id. The server announces
//! itself with `{"ready": true}` before the first request is sent.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{NeuralScorer, ScoreOp, ScorerError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

type Reply = Result<f64, ScorerError>;

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    op: ScoreOp,
    a: &'a str,
    b: &'a str,
}

#[derive(Deserialize)]
struct Response {
    #[serde(default)]
    id: Option<u64>,
    #[serde(default)]
    score: Option<f64>,
    #[serde(default)]
    error: Option<String>,
    #[serde(default)]
    ready: Option<bool>,
}

#[derive(Default)]
struct Pending {
    waiting: HashMap<u64, Sender<Reply>>,
    /// Set once the reader sees EOF or a read error.
    closed: Option<String>,
}

pub struct ScorerClient {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Arc<Mutex<Pending>>,
    next_id: AtomicU64,
    timeout: Duration,
    child: Option<Child>,
}

impl ScorerClient {
    /// Connects using a `stdio:<command line>` or `tcp:<host:port>` address.
    pub fn connect(address: &str, timeout: Duration) -> Result<Self, ScorerError> {
        if let Some(cmd) = address.strip_prefix("stdio:") {
            Self::spawn(cmd, timeout)
        } else if let Some(addr) = address.strip_prefix("tcp:") {
            Self::tcp(addr, timeout)
        } else {
            Err(ScorerError::Unavailable(format!(
                "scorer address `{address}` must start with `stdio:` or `tcp:`"
            )))
        }
    }

    /// Launches `command` through `sh -c` and talks to it over its stdin/stdout.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, ScorerError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScorerError::Unavailable(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut client = Self::from_streams(stdout, stdin, timeout)?;
        client.child = Some(child);
        Ok(client)
    }

    pub fn tcp(addr: &str, timeout: Duration) -> Result<Self, ScorerError> {
        let unavailable = |e: std::io::Error| ScorerError::Unavailable(format!("{addr}: {e}"));
        let sock = addr
            .to_socket_addrs()
            .map_err(unavailable)?
            .next()
            .ok_or_else(|| ScorerError::Unavailable(format!("{addr}: no address")))?;
        let stream = TcpStream::connect_timeout(&sock, timeout).map_err(unavailable)?;
        let _ = stream.set_nodelay(true);
        let reader = stream.try_clone().map_err(unavailable)?;
        Self::from_streams(reader, stream, timeout)
    }

    /// Wraps an already-connected byte stream pair and waits for the
    /// readiness line.
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Result<Self, ScorerError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let pending = Arc::new(Mutex::new(Pending::default()));
        let (ready_tx, ready_rx) = mpsc::channel();
        let shared = Arc::clone(&pending);
        thread::Builder::new()
            .name("scorer-reader".into())
            .spawn(move || read_loop(BufReader::new(reader), shared, ready_tx))
            .map_err(|e| ScorerError::Unavailable(e.to_string()))?;

        match ready_rx.recv_timeout(timeout) {
            Ok(()) => {}
            Err(RecvTimeoutError::Timeout) => {
                return Err(ScorerError::Unavailable("no readiness line from scorer".into()))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let why = pending.lock().unwrap().closed.clone().unwrap_or_default();
                return Err(ScorerError::Unavailable(format!("scorer exited before ready: {why}")));
            }
        }
        Ok(ScorerClient {
            writer: Mutex::new(Box::new(writer)),
            pending,
            next_id: AtomicU64::new(1),
            timeout,
            child: None,
        })
    }

    fn send(&self, op: ScoreOp, a: &str, b: &str) -> Result<(u64, Receiver<Reply>), ScorerError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        {
            let mut p = self.pending.lock().unwrap();
            if let Some(why) = &p.closed {
                return Err(ScorerError::Unavailable(why.clone()));
            }
            p.waiting.insert(id, tx);
        }
        let mut line = serde_json::to_string(&Request { id, op, a, b }).expect("request serializes");
        line.push('\n');
        let written = {
            let mut w = self.writer.lock().unwrap();
            w.write_all(line.as_bytes()).and_then(|_| w.flush())
        };
        if let Err(e) = written {
            self.pending.lock().unwrap().waiting.remove(&id);
            return Err(ScorerError::Unavailable(format!("write failed: {e}")));
        }
        Ok((id, rx))
    }

    fn wait(&self, id: u64, rx: Receiver<Reply>, deadline: Instant) -> Reply {
        let left = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().unwrap().waiting.remove(&id);
                Err(ScorerError::Timeout {
                    id,
                    secs: self.timeout.as_secs_f64(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                Err(ScorerError::Unavailable("scorer connection closed".into()))
            }
        }
    }
}

impl NeuralScorer for ScorerClient {
    fn score(&self, op: ScoreOp, a: &str, b: &str) -> Result<f64, ScorerError> {
        let (id, rx) = self.send(op, a, b)?;
        self.wait(id, rx, Instant::now() + self.timeout)
    }

    /// Writes every request before waiting on any of them.
    fn score_many(&self, requests: &[(ScoreOp, &str, &str)]) -> Vec<Result<f64, ScorerError>> {
        let sent: Vec<_> = requests.iter().map(|(op, a, b)| self.send(*op, a, b)).collect();
        let deadline = Instant::now() + self.timeout;
        sent.into_iter()
            .map(|s| s.and_then(|(id, rx)| self.wait(id, rx, deadline)))
            .collect()
    }
}

impl Drop for ScorerClient {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            // closing stdin lets a well-behaved server exit on EOF
            *self.writer.lock().unwrap() = Box::new(std::io::sink());
            let deadline = Instant::now() + Duration::from_millis(500);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn read_loop<R: BufRead>(reader: R, pending: Arc<Mutex<Pending>>, ready: Sender<()>) {
    let mut ready = Some(ready);
    let why = 'outer: {
        for line in reader.lines() {
            let line = match line {
                Ok(l) => l,
                Err(e) => break 'outer format!("read failed: {e}"),
            };
            if line.trim().is_empty() {
                continue;
            }
            let resp: Response = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("ignoring unparseable scorer line ({e}): {line}");
                    continue;
                }
            };
            if resp.ready == Some(true) {
                if let Some(tx) = ready.take() {
                    let _ = tx.send(());
                }
                continue;
            }
            let Some(id) = resp.id else {
                log::warn!("scorer reported: {}", resp.error.as_deref().unwrap_or(&line));
                continue;
            };
            let reply = match (resp.score, resp.error) {
                (Some(s), None) if s.is_finite() => Ok(s),
                (None, Some(message)) => Err(ScorerError::Remote { id, message }),
                _ => Err(ScorerError::Protocol(format!(
                    "response {id} needs exactly one finite `score` or `error`"
                ))),
            };
            match pending.lock().unwrap().waiting.remove(&id) {
                Some(tx) => {
                    let _ = tx.send(reply);
                }
                None => log::warn!("scorer answered unknown or expired request {id}"),
            }
        }
        "scorer closed the connection".to_string()
    };
    let mut p = pending.lock().unwrap();
    for (_, tx) in p.waiting.drain() {
        let _ = tx.send(Err(ScorerError::Unavailable(why.clone())));
    }
    p.closed = Some(why);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    /// In-process scorer: answers in reverse order of each pair of requests,
    /// never answers a request with `a == "hang"`, and rejects empty input.
    fn stub_server(send_ready: bool) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut out = stream.try_clone().unwrap();
            if send_ready {
                writeln!(out, r#"{{"ready": true}}"#).unwrap();
            }
            let mut held: Vec<String> = Vec::new();
            for line in BufReader::new(stream).lines() {
                let line = line.unwrap();
                let v: serde_json::Value = match serde_json::from_str(&line) {
                    Ok(v) => v,
                    Err(_) => {
                        writeln!(out, r#"{{"id": null, "error": "malformed"}}"#).unwrap();
                        continue;
                    }
                };
                let (id, op) = (v["id"].as_u64().unwrap(), v["op"].as_str().unwrap());
                let (a, b) = (v["a"].as_str().unwrap(), v["b"].as_str().unwrap());
                let reply = if a == "hang" {
                    continue;
                } else if a.is_empty() || b.is_empty() {
                    format!(r#"{{"id": {id}, "error": "empty input"}}"#)
                } else {
                    let s = match (op, a == b) {
                        ("nli", true) => 1.0,
                        ("nli", false) => 0.25,
                        _ => 0.5,
                    };
                    format!(r#"{{"id": {id}, "score": {s}}}"#)
                };
                held.push(reply);
                if held.len() == 2 {
                    writeln!(out, r#"{{"id": null, "error": "noise line"}}"#).unwrap();
                    for r in held.drain(..).rev() {
                        writeln!(out, "{r}").unwrap();
                    }
                }
            }
        });
        addr
    }

    #[test]
    fn pipelined_out_of_order_responses_are_matched_by_id() {
        let addr = stub_server(true);
        let c = ScorerClient::connect(&format!("tcp:{addr}"), Duration::from_secs(5)).unwrap();
        let got = c.score_many(&[
            (ScoreOp::Nli, "a", "a"),
            (ScoreOp::Nli, "a", "b"),
            (ScoreOp::Bert, "a", "b"),
            (ScoreOp::Nli, "", "b"),
        ]);
        assert_eq!(got[0], Ok(1.0));
        assert_eq!(got[1], Ok(0.25));
        assert_eq!(got[2], Ok(0.5));
        assert!(matches!(got[3], Err(ScorerError::Remote { .. })));
    }

    #[test]
    fn unanswered_request_times_out() {
        let addr = stub_server(true);
        let c = ScorerClient::connect(&format!("tcp:{addr}"), Duration::from_millis(200)).unwrap();
        assert!(matches!(c.score(ScoreOp::Nli, "hang", "x"), Err(ScorerError::Timeout { .. })));
    }

    #[test]
    fn connection_failures_are_unavailable() {
        let addr = stub_server(false);
        assert!(matches!(
            ScorerClient::connect(&format!("tcp:{addr}"), Duration::from_millis(200)),
            Err(ScorerError::Unavailable(_))
        ));
        // bind then drop to get a port nobody listens on
        let dead = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
        assert!(matches!(
            ScorerClient::connect(&format!("tcp:{dead}"), Duration::from_secs(1)),
            Err(ScorerError::Unavailable(_))
        ));
        assert!(matches!(
            ScorerClient::connect("udp:1.2.3.4:5", Duration::from_secs(1)),
            Err(ScorerError::Unavailable(_))
        ));
    }

    #[test]
    fn stdio_transport() {
        // a minimal line-oriented server in portable shell: echo score 0.75 for every id
        let script = r#"echo '{"ready": true}'; while IFS= read -r line; do id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/'); printf '{"id": %s, "score": 0.75}\n' "$id"; done"#;
        let c = ScorerClient::connect(&format!("stdio:{script}"), Duration::from_secs(5)).unwrap();
        assert_eq!(c.score(ScoreOp::Bert, "x", "y"), Ok(0.75));
        let many = c.score_many(&[(ScoreOp::Nli, "a", "b"), (ScoreOp::Nli, "b", "a")]);
        assert_eq!(many, vec![Ok(0.75), Ok(0.75)]);
    }

    #[test]
    fn server_exit_fails_pending_requests() {
        let c = ScorerClient::connect(r#"stdio:echo '{"ready": true}'; read -r line"#, Duration::from_secs(5))
            .unwrap();
        assert!(matches!(c.score(ScoreOp::Nli, "a", "b"), Err(ScorerError::Unavailable(_))));
        assert!(matches!(c.score(ScoreOp::Nli, "a", "b"), Err(ScorerError::Unavailable(_))));
    }
}
