//! The engine as a line-delimited JSON environment.
//!
//! Requests and replies are single-line JSON objects:
//!
//! ```text
//! {"type":"reset","problem":"c1.sl","time_limit_s":10}
//! {"type":"state","state":{"n":[1],"p":1,"q":0,"f1":true,"f2":false,"z":2},"reward":0.0,"done":false}
//! {"type":"step","action":{"n":[1,0,0,0],"p":1,"q":0}}
//! {"type":"state","state":{...},"reward":-0.041,"done":true,"outcome":"sat","witness":"(define-fun ...)"}
//! {"type":"close"}
//! {"type":"closed"}
//! ```
//!
//! Rewards are minus the seconds since the previous reply on the session.
//! Malformed requests get `{"type":"error","message":...}` and leave the
//! session as it was.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde_json::{json, Value};

use crate::engine::{Engine, EngineConfig, Step, Verdict};
use crate::policy::{raw_abstract, Action, PolicyAction};
use crate::suite::load_problem;

pub struct Session {
    problems_dir: Option<PathBuf>,
    base: EngineConfig,
    engine: Option<Engine>,
    done: bool,
    steps: usize,
    last_reply: Instant,
}

fn error(msg: impl std::fmt::Display) -> Value {
    json!({"type": "error", "message": msg.to_string()})
}

impl Session {
    pub fn new(problems_dir: Option<PathBuf>, base: EngineConfig) -> Self {
        Session {
            problems_dir,
            base,
            engine: None,
            done: false,
            steps: 0,
            last_reply: Instant::now(),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn resolve(&self, problem: &str) -> PathBuf {
        let p = Path::new(problem);
        match &self.problems_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_owned(),
        }
    }

    fn reward(&mut self) -> f64 {
        let now = Instant::now();
        let r = -(now - self.last_reply).as_secs_f64();
        self.last_reply = now;
        r
    }

    /// Runs the engine to its next stop and builds the reply.
    fn advance(&mut self) -> Value {
        let engine = self.engine.as_mut().expect("active engine");
        let step = match engine.advance() {
            Ok(s) => s,
            Err(e) => return error(e),
        };
        let mut reply = match step {
            Step::Decision(s) => json!({
                "type": "state",
                "state": raw_abstract(&s).to_json(),
                "done": false,
            }),
            Step::Done(o) => {
                self.done = true;
                let mut r = json!({
                    "type": "state",
                    "state": raw_abstract(&engine.observe()).to_json(),
                    "done": true,
                    "outcome": o.verdict.tag(),
                });
                if let Verdict::Solution(c) = &o.verdict {
                    let chc = engine.chc();
                    r["witness"] = json!(c.to_define_fun(&chc.pred_name, chc.vars()));
                }
                if let Some(d) = &o.diagnostic {
                    r["diagnostic"] = json!(d);
                }
                r
            }
        };
        reply["reward"] = json!(self.reward());
        reply
    }

    fn reset(&mut self, req: &Value) -> Value {
        let Some(problem) = req.get("problem").and_then(Value::as_str) else {
            return error("reset needs a `problem` string");
        };
        let mut cfg = self.base.clone();
        if let Some(t) = req.get("time_limit_s") {
            match t.as_f64().filter(|t| t.is_finite() && *t >= 0.0) {
                Some(t) => cfg.total_timeout = Duration::from_secs_f64(t),
                None => return error("`time_limit_s` must be a nonnegative number"),
            }
        }
        let path = self.resolve(problem);
        let chc = match load_problem(&path) {
            Ok(c) => c,
            Err(e) => return error(e),
        };
        self.last_reply = Instant::now();
        let engine = match Engine::new(chc, cfg) {
            Ok(e) => e,
            Err(e) => return error(format!("cannot start solver: {}", e)),
        };
        info!("reset {}", path.display());
        self.engine = Some(engine);
        self.done = false;
        self.steps = 0;
        self.advance()
    }

    fn step(&mut self, req: &Value) -> Value {
        if self.engine.is_none() {
            return error("no active episode; send reset first");
        }
        if self.done {
            return error("episode is done; send reset");
        }
        let action = match req.get("action").map(Action::from_json) {
            Some(Ok(a)) => a,
            Some(Err(e)) => return error(e),
            None => return error("step needs an `action`"),
        };
        if let Err(e) = self.engine.as_mut().unwrap().apply(PolicyAction::Raw(action)) {
            return error(e);
        }
        self.steps += 1;
        self.advance()
    }

    /// Handles one request line. `None` means the session is over.
    pub fn handle(&mut self, line: &str) -> Option<Value> {
        let req: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return Some(error(format!("malformed request: {}", e))),
        };
        let reply = match req.get("type").and_then(Value::as_str) {
            Some("reset") => self.reset(&req),
            Some("step") => self.step(&req),
            Some("close") => return None,
            Some(t) => error(format!("unknown request type `{}`", t)),
            None => error("request needs a `type`"),
        };
        Some(reply)
    }
}

/// Serves one session over a pair of streams until `close` or EOF.
pub fn serve_stream(
    input: impl BufRead,
    mut output: impl Write,
    problems_dir: Option<PathBuf>,
    base: EngineConfig,
) -> io::Result<()> {
    let mut session = Session::new(problems_dir, base);
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        debug!("request {}", line);
        match session.handle(&line) {
            Some(reply) => writeln!(output, "{}", reply)?,
            None => {
                writeln!(output, "{}", json!({"type": "closed"}))?;
                output.flush()?;
                break;
            }
        }
        output.flush()?;
    }
    Ok(())
}

pub fn serve_stdio(problems_dir: Option<PathBuf>, base: EngineConfig) -> io::Result<()> {
    let stdin = io::stdin();
    serve_stream(stdin.lock(), io::stdout().lock(), problems_dir, base)
}

fn serve_conn(stream: TcpStream, problems_dir: Option<PathBuf>, base: EngineConfig) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_stream(reader, stream, problems_dir, base)
}

/// Accepts connections forever, one thread and one engine per connection.
pub fn serve_tcp(listener: TcpListener, problems_dir: Option<PathBuf>, base: EngineConfig) -> io::Result<()> {
    info!("listening on {}", listener.local_addr()?);
    for conn in listener.incoming() {
        let conn = conn?;
        let dir = problems_dir.clone();
        let cfg = base.clone();
        std::thread::spawn(move || {
            let peer = conn.peer_addr().ok();
            if let Err(e) = serve_conn(conn, dir, cfg) {
                warn!("connection {:?}: {}", peer, e);
            }
        });
    }
    Ok(())
}
