//! SMT-LIB 2 solver process interface.
//!
//! One [`Solver`] owns one solver process. Each query runs inside a
//! `(push 1)`/`(pop 1)` scope with every clause asserted under a `:named`
//! label so that unsat cores come back as label sets. A reply that does not
//! arrive before the deadline gets the process killed and respawned.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use num_bigint::BigInt;
use thiserror::Error;

use crate::logic::{Formula, Var, VarAssignment};
use crate::sexp::{self, smt_symbol, Sexp, SexpKind};

/// Environment variable naming the solver binary.
pub const SOLVER_ENV: &str = "INVSYNTH_SOLVER";
/// Environment variable with extra whitespace-separated solver flags.
pub const SOLVER_ARGS_ENV: &str = "INVSYNTH_SOLVER_ARGS";

/// Extra time for follow-up replies (model, core) after the check-sat answer.
const WATCHDOG_GRACE: Duration = Duration::from_millis(500);

/// Share of the caller's timeout handed to the solver's own timeout. The
/// rest is headroom so the solver usually gives up before the watchdog.
const SOFT_TIMEOUT_SHARE: f64 = 0.8;

/// Conjunction of labeled clauses over parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledConstraint {
    clauses: Vec<(String, Formula)>,
    labels: HashSet<String>,
    /// Variables declared even if no clause mentions them.
    declared: Vec<Var>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("duplicate clause label `{0}`")]
pub struct DuplicateLabel(pub String);

impl LabeledConstraint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, label: impl Into<String>, clause: Formula) -> Result<(), DuplicateLabel> {
        let label = label.into();
        if !self.labels.insert(label.clone()) {
            return Err(DuplicateLabel(label));
        }
        self.clauses.push((label, clause));
        Ok(())
    }

    pub fn declare(&mut self, v: Var) {
        if !self.declared.contains(&v) {
            self.declared.push(v);
        }
    }

    pub fn clauses(&self) -> &[(String, Formula)] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Declared variables followed by any other free variables, in first-occurrence order.
    pub fn params(&self) -> Vec<Var> {
        let mut out = self.declared.clone();
        for (_, f) in &self.clauses {
            for v in f.free_vars() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Whether every clause holds under `sigma`. Unbound variables count as a failure.
    pub fn holds(&self, sigma: &VarAssignment) -> bool {
        self.clauses
            .iter()
            .all(|(_, f)| f.eval(sigma).unwrap_or(false))
    }

    pub fn without(&self, label: &str) -> LabeledConstraint {
        let mut c = LabeledConstraint {
            declared: self.declared.clone(),
            ..Default::default()
        };
        for (l, f) in &self.clauses {
            if l != label {
                c.push(l.clone(), f.clone()).unwrap();
            }
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UnknownReason {
    Timeout,
    SolverError(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SmtResult {
    Sat(VarAssignment),
    Unsat(BTreeSet<String>),
    Unknown(UnknownReason),
}

impl SmtResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SmtResult::Sat(_))
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub program: String,
    pub args: Vec<String>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            program: "z3".into(),
            args: vec!["-in".into(), "-smt2".into()],
        }
    }
}

impl SolverConfig {
    /// Reads [`SOLVER_ENV`] and [`SOLVER_ARGS_ENV`], falling back to `z3 -in -smt2`.
    pub fn from_env() -> Self {
        let mut cfg = SolverConfig::default();
        if let Ok(p) = std::env::var(SOLVER_ENV) {
            if !p.trim().is_empty() {
                cfg.program = p;
            }
        }
        if let Ok(a) = std::env::var(SOLVER_ARGS_ENV) {
            cfg.args = a.split_whitespace().map(str::to_string).collect();
        }
        cfg
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("failed to start solver `{program}`: {source}")]
    Spawn {
        program: String,
        source: std::io::Error,
    },
    #[error("solver i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver exited{}", stderr_suffix(.0))]
    Exited(String),
    #[error("solver did not answer in time")]
    Timeout,
    #[error("unexpected solver reply `{0}`")]
    Protocol(String),
}

fn stderr_suffix(s: &str) -> String {
    if s.trim().is_empty() {
        String::new()
    } else {
        format!(": {}", s.trim())
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    stderr: Arc<Mutex<String>>,
}

impl Process {
    fn spawn(cfg: &SolverConfig) -> Result<Process, SolverError> {
        let mut child = Command::new(&cfg.program)
            .args(&cfg.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| SolverError::Spawn {
                program: cfg.program.clone(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
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
                let mut s = sink.lock().unwrap();
                s.push_str(&String::from_utf8_lossy(&buf[..n]));
                if s.len() > 4096 {
                    let cut = s.len() - 4096;
                    let cut = (cut..s.len()).find(|&i| s.is_char_boundary(i)).unwrap_or(0);
                    s.drain(..cut);
                }
            }
        });
        Ok(Process {
            child,
            stdin,
            lines,
            stderr,
        })
    }

    fn stderr(&self) -> String {
        self.stderr.lock().unwrap().clone()
    }
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Handle to one solver process. Not for concurrent use.
pub struct Solver {
    cfg: SolverConfig,
    proc: Option<Process>,
    /// Number of times the process was restarted after a timeout or error.
    pub restarts: usize,
}

impl Solver {
    pub fn new(cfg: SolverConfig) -> Result<Solver, SolverError> {
        let mut s = Solver {
            cfg,
            proc: None,
            restarts: 0,
        };
        s.ensure_running()?;
        Ok(s)
    }

    pub fn from_env() -> Result<Solver, SolverError> {
        Solver::new(SolverConfig::from_env())
    }

    fn ensure_running(&mut self) -> Result<&mut Process, SolverError> {
        if self.proc.is_none() {
            let mut p = Process::spawn(&self.cfg)?;
            // a dead process surfaces on the next query, not here
            let _ = writeln!(
                p.stdin,
                "(set-option :print-success false)\n(set-option :produce-unsat-cores true)\n(set-option :produce-models true)"
            )
            .and_then(|_| p.stdin.flush());
            self.proc = Some(p);
        }
        Ok(self.proc.as_mut().unwrap())
    }

    fn restart(&mut self) {
        if let Some(mut p) = self.proc.take() {
            // a busy solver can take a while to die; reap it off the caller's clock
            let _ = p.child.kill();
            thread::spawn(move || drop(p));
        }
        self.restarts += 1;
    }

    fn send(&mut self, text: &str) -> Result<(), SolverError> {
        let p = self.ensure_running()?;
        p.stdin.write_all(text.as_bytes())?;
        p.stdin.flush()?;
        Ok(())
    }

    fn read_reply(&mut self, deadline: Instant) -> Result<Sexp, SolverError> {
        let p = self.proc.as_mut().expect("solver running");
        let mut buf = String::new();
        loop {
            let now = Instant::now();
            let wait = deadline.saturating_duration_since(now);
            match p.lines.recv_timeout(wait) {
                Ok(line) => {
                    buf.push_str(&line);
                    buf.push('\n');
                    if sexp::is_balanced(&buf) {
                        return sexp::parse_one(&buf).map_err(|_| SolverError::Protocol(buf.clone()));
                    }
                }
                Err(RecvTimeoutError::Timeout) => return Err(SolverError::Timeout),
                Err(RecvTimeoutError::Disconnected) => {
                    // give the stderr thread a moment to drain
                    thread::sleep(Duration::from_millis(20));
                    return Err(SolverError::Exited(p.stderr()));
                }
            }
        }
    }

    /// Decides the conjunction of `c`'s clauses.
    pub fn check_sat(&mut self, c: &LabeledConstraint, timeout: Duration) -> SmtResult {
        match self.try_check_sat(c, timeout) {
            Ok(r) => r,
            Err(e) => {
                let reason = match e {
                    SolverError::Timeout => UnknownReason::Timeout,
                    e => UnknownReason::SolverError(e.to_string()),
                };
                debug!("solver query failed ({:?}); restarting", reason);
                self.restart();
                SmtResult::Unknown(reason)
            }
        }
    }

    fn try_check_sat(
        &mut self,
        c: &LabeledConstraint,
        timeout: Duration,
    ) -> Result<SmtResult, SolverError> {
        let params = c.params();
        let mut script = String::from("(push 1)\n");
        let ms = (timeout.mul_f64(SOFT_TIMEOUT_SHARE)).as_millis().clamp(1, u32::MAX as u128);
        writeln!(script, "(set-option :timeout {})", ms).unwrap();
        for v in &params {
            writeln!(script, "(declare-const {} Int)", v).unwrap();
        }
        for (label, f) in c.clauses() {
            writeln!(script, "(assert (! {} :named {}))", f, smt_symbol(label)).unwrap();
        }
        script.push_str("(check-sat)\n");
        // large scripts take a noticeable time to write
        let deadline = Instant::now() + timeout;
        self.send(&script)?;
        let reply = self.read_reply(deadline)?;
        let result = match reply.atom() {
            Some("sat") => {
                self.send("(get-model)\n")?;
                let model = self.read_reply(deadline + WATCHDOG_GRACE)?;
                let sigma = parse_model(&model, &params)?;
                if !c.holds(&sigma) {
                    warn!("solver model fails re-evaluation");
                    debug_assert!(false, "solver model fails re-evaluation: {:?}", sigma);
                    SmtResult::Unknown(UnknownReason::SolverError(
                        "model does not satisfy the constraint".into(),
                    ))
                } else {
                    SmtResult::Sat(sigma)
                }
            }
            Some("unsat") => {
                self.send("(get-unsat-core)\n")?;
                let core = self.read_reply(deadline + WATCHDOG_GRACE)?;
                SmtResult::Unsat(parse_core(&core, c)?)
            }
            Some("unknown") => {
                self.send("(get-info :reason-unknown)\n")?;
                let why = self.read_reply(deadline + WATCHDOG_GRACE)?.to_string();
                if why.contains("timeout") || why.contains("canceled") {
                    SmtResult::Unknown(UnknownReason::Timeout)
                } else {
                    SmtResult::Unknown(UnknownReason::SolverError(why))
                }
            }
            _ => return Err(SolverError::Protocol(reply.to_string())),
        };
        self.send("(pop 1)\n")?;
        Ok(result)
    }

    /// Satisfiability of a single unlabeled formula over `vars`.
    pub fn check_formula(&mut self, vars: &[Var], f: &Formula, timeout: Duration) -> SmtResult {
        let mut c = LabeledConstraint::new();
        for v in vars {
            c.declare(v.clone());
        }
        c.push("query", f.clone()).unwrap();
        self.check_sat(&c, timeout)
    }
}

/// Reads `(define-fun v () Int value)` entries; variables the solver omitted
/// default to zero. Non-integer definitions (e.g. named labels) are skipped.
fn parse_model(model: &Sexp, params: &[Var]) -> Result<VarAssignment, SolverError> {
    let bad = || SolverError::Protocol(model.to_string());
    let items = model.list().ok_or_else(bad)?;
    let mut sigma = VarAssignment::new();
    for it in items {
        if it.is_atom("model") {
            continue;
        }
        match it.list() {
            Some([head, name, args, sort, value]) if head.is_atom("define-fun") => {
                if !sort.is_atom("Int") || args.list().map_or(true, |a| !a.is_empty()) {
                    continue;
                }
                let name = name.atom().ok_or_else(bad)?;
                sigma.insert(Var::new(name), parse_int(value).ok_or_else(bad)?);
            }
            _ => return Err(bad()),
        }
    }
    for p in params {
        if sigma.get(p).is_none() {
            sigma.insert(p.clone(), 0);
        }
    }
    Ok(sigma)
}

fn parse_int(s: &Sexp) -> Option<BigInt> {
    match &s.kind {
        SexpKind::Atom(a) => a.parse().ok(),
        SexpKind::List(items) => match items.as_slice() {
            [op, x] if op.is_atom("-") => parse_int(x).map(|v| -v),
            _ => None,
        },
        SexpKind::Str(_) => None,
    }
}

fn parse_core(core: &Sexp, c: &LabeledConstraint) -> Result<BTreeSet<String>, SolverError> {
    let items = core
        .list()
        .ok_or_else(|| SolverError::Protocol(core.to_string()))?;
    let mut out = BTreeSet::new();
    for it in items {
        let l = it.atom().ok_or_else(|| SolverError::Protocol(core.to_string()))?;
        if !c.labels.contains(l) {
            return Err(SolverError::Protocol(format!("unknown core label `{}`", l)));
        }
        out.insert(l.to_string());
    }
    Ok(out)
}

/// Inclusive integer range for one parameter of the brute-force search.
#[derive(Clone, Debug)]
pub struct ParamRange {
    pub var: Var,
    pub lo: i64,
    pub hi: i64,
}

impl ParamRange {
    pub fn new(var: Var, lo: i64, hi: i64) -> Self {
        ParamRange { var, lo, hi }
    }

    fn size(&self) -> u128 {
        if self.hi < self.lo {
            0
        } else {
            (self.hi as i128 - self.lo as i128 + 1) as u128
        }
    }
}

/// Upper limit on the number of assignments the brute-force search enumerates.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BruteForceError {
    #[error("search space has {size} assignments, above the limit of {limit}")]
    TooLarge { size: u128, limit: u128 },
    #[error("parameter `{0}` has no range")]
    Unbounded(Var),
}

/// Exhaustive search for the lexicographically first assignment (in `bounds`
/// order, smallest values first) satisfying every clause of `c`.
pub fn brute_force_search(
    c: &LabeledConstraint,
    bounds: &[ParamRange],
) -> Result<Option<VarAssignment>, BruteForceError> {
    for p in c.params() {
        if !bounds.iter().any(|b| b.var == p) {
            return Err(BruteForceError::Unbounded(p));
        }
    }
    let size = bounds
        .iter()
        .try_fold(1u128, |acc, b| acc.checked_mul(b.size()))
        .unwrap_or(u128::MAX);
    if size > BRUTE_FORCE_LIMIT {
        return Err(BruteForceError::TooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    if size == 0 {
        return Ok(None);
    }
    let mut current: Vec<i64> = bounds.iter().map(|b| b.lo).collect();
    loop {
        let sigma: VarAssignment = bounds
            .iter()
            .zip(&current)
            .map(|(b, &v)| (b.var.clone(), BigInt::from(v)))
            .collect();
        if c.holds(&sigma) {
            return Ok(Some(sigma));
        }
        // odometer increment, last position fastest
        let mut i = bounds.len();
        loop {
            if i == 0 {
                return Ok(None);
            }
            i -= 1;
            if current[i] < bounds[i].hi {
                current[i] += 1;
                break;
            }
            current[i] = bounds[i].lo;
        }
    }
}
