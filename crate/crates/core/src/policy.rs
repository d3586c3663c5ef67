//! Observation and action spaces for template updates, and the built-in
//! policies.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::engine::ConcreteState;
use crate::template::{Bound, ShapeError, TemplateShape};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("expert abstraction needs a uniform shape, got {0}")]
    NonUniform(TemplateShape),
    #[error("the all-zero action does not change the template")]
    ZeroAction,
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("remote policy: {0}")]
    Remote(String),
}

/// A count shown exactly up to `cap - 1`; `cap` stands for "cap or more".
fn capped(v: u64, cap: u64) -> u8 {
    v.min(cap) as u8
}

fn capped_str(v: u8, cap: u8) -> String {
    if v >= cap {
        format!("{}+", cap)
    } else {
        v.to_string()
    }
}

fn capped_json(v: u8, cap: u8) -> Value {
    if v >= cap {
        Value::String(format!("{}+", cap))
    } else {
        json!(v)
    }
}

fn capped_from_json(v: &Value, cap: u8) -> Option<u8> {
    match v {
        Value::Number(n) => n.as_u64().map(|n| capped(n, cap as u64)),
        Value::String(s) if *s == format!("{}+", cap) => Some(cap),
        _ => None,
    }
}

/// A bound as the agent sees it.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum RawBound {
    /// 0..=4, with 5 meaning "5 or more".
    Finite(u8),
    Inf,
}

const N_CAP: u8 = 4;
const B_CAP: u8 = 5;
const Z_CAP: u8 = 4;

impl RawBound {
    fn of(b: Bound) -> Self {
        match b {
            Bound::Finite(v) => RawBound::Finite(capped(v, B_CAP as u64)),
            Bound::Infinite => RawBound::Inf,
        }
    }

    fn to_json(self) -> Value {
        match self {
            RawBound::Finite(v) => capped_json(v, B_CAP),
            RawBound::Inf => json!("inf"),
        }
    }

    fn from_json(v: &Value) -> Option<Self> {
        if v.as_str() == Some("inf") {
            return Some(RawBound::Inf);
        }
        capped_from_json(v, B_CAP).map(RawBound::Finite)
    }
}

impl fmt::Display for RawBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawBound::Finite(v) => f.write_str(&capped_str(*v, B_CAP)),
            RawBound::Inf => f.write_str("inf"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct RawState {
    pub n: Vec<u8>,
    pub p: RawBound,
    pub q: RawBound,
    pub f1: bool,
    pub f2: bool,
    pub z: u8,
}

pub fn raw_abstract(s: &ConcreteState) -> RawState {
    RawState {
        n: s.shape
            .conjuncts()
            .iter()
            .take(4)
            .map(|&n| capped(n as u64, N_CAP as u64))
            .collect(),
        p: RawBound::of(s.shape.p),
        q: RawBound::of(s.shape.q),
        f1: s.f1,
        f2: s.f2,
        z: capped(s.z, Z_CAP as u64),
    }
}

impl RawState {
    /// The key used in tables, e.g. `n=2,1,4+,0;p=5+;q=4;f=00;z=0`.
    pub fn key(&self) -> String {
        let ns: Vec<String> = self.n.iter().map(|&v| capped_str(v, N_CAP)).collect();
        format!(
            "n={};p={};q={};f={}{};z={}",
            ns.join(","),
            self.p,
            self.q,
            self.f1 as u8,
            self.f2 as u8,
            capped_str(self.z, Z_CAP)
        )
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.n.iter().map(|&v| capped_json(v, N_CAP)).collect::<Vec<_>>(),
            "p": self.p.to_json(),
            "q": self.q.to_json(),
            "f1": self.f1,
            "f2": self.f2,
            "z": capped_json(self.z, Z_CAP),
        })
    }

    pub fn from_json(v: &Value) -> Option<Self> {
        let n = v
            .get("n")?
            .as_array()?
            .iter()
            .map(|e| capped_from_json(e, N_CAP))
            .collect::<Option<Vec<_>>>()?;
        Some(RawState {
            n,
            p: RawBound::from_json(v.get("p")?)?,
            q: RawBound::from_json(v.get("q")?)?,
            f1: v.get("f1")?.as_bool()?,
            f2: v.get("f2")?.as_bool()?,
            z: capped_from_json(v.get("z")?, Z_CAP)?,
        })
    }
}

/// Increment applied to `P` or `Q`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Inc {
    Zero,
    One,
    Inf,
}

impl Inc {
    pub const ALL: [Inc; 3] = [Inc::Zero, Inc::One, Inc::Inf];

    fn as_bound(self) -> Bound {
        match self {
            Inc::Zero => Bound::Finite(0),
            Inc::One => Bound::Finite(1),
            Inc::Inf => Bound::Infinite,
        }
    }

    pub fn parse(s: &str) -> Option<Inc> {
        match s {
            "0" => Some(Inc::Zero),
            "1" => Some(Inc::One),
            "inf" | "∞" => Some(Inc::Inf),
            _ => None,
        }
    }

    pub fn to_json(self) -> Value {
        match self {
            Inc::Zero => json!(0),
            Inc::One => json!(1),
            Inc::Inf => json!("inf"),
        }
    }

    pub fn from_json(v: &Value) -> Option<Inc> {
        match v {
            Value::Number(n) => match n.as_u64()? {
                0 => Some(Inc::Zero),
                1 => Some(Inc::One),
                _ => None,
            },
            Value::String(s) => Inc::parse(s),
            _ => None,
        }
    }
}

impl fmt::Display for Inc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Inc::Zero => "0",
            Inc::One => "1",
            Inc::Inf => "inf",
        })
    }
}

/// A raw template update `(n, p, q)` with `n` zero-padded to length 4.
/// The derived order is the canonical action order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Action {
    pub n: [u8; 4],
    pub p: Inc,
    pub q: Inc,
}

impl Action {
    pub fn new(n: &[u8], p: Inc, q: Inc) -> Result<Action, PolicyError> {
        let mut arr = [0u8; 4];
        if n.len() > 4 || n.iter().any(|&v| v > 1) {
            return Err(PolicyError::Remote(format!("invalid n {:?}", n)));
        }
        arr[..n.len()].copy_from_slice(n);
        let a = Action { n: arr, p, q };
        if a.is_zero() {
            return Err(PolicyError::ZeroAction);
        }
        Ok(a)
    }

    pub fn is_zero(&self) -> bool {
        self.n == [0; 4] && self.p == Inc::Zero && self.q == Inc::Zero
    }

    /// `n` with trailing zeros removed.
    pub fn trimmed_n(&self) -> &[u8] {
        let len = self.n.iter().rposition(|&v| v != 0).map_or(0, |i| i + 1);
        &self.n[..len]
    }

    /// The 143 selectable actions in canonical order.
    pub fn all() -> &'static [Action] {
        static ALL: OnceLock<Vec<Action>> = OnceLock::new();
        ALL.get_or_init(|| {
            let mut v = Vec::new();
            for bits in 0..16u8 {
                let n = [bits >> 3 & 1, bits >> 2 & 1, bits >> 1 & 1, bits & 1];
                for p in Inc::ALL {
                    for q in Inc::ALL {
                        let a = Action { n, p, q };
                        if !a.is_zero() {
                            v.push(a);
                        }
                    }
                }
            }
            v.sort();
            v
        })
    }

    pub fn index(&self) -> usize {
        Action::all().binary_search(self).expect("selectable action")
    }

    pub fn key(&self) -> String {
        let n: String = self.n.iter().map(|v| v.to_string()).collect();
        format!("n={};p={};q={}", n, self.p, self.q)
    }

    pub fn parse_key(s: &str) -> Option<Action> {
        let mut parts = s.split(';');
        let n = parts.next()?.strip_prefix("n=")?;
        let p = Inc::parse(parts.next()?.strip_prefix("p=")?)?;
        let q = Inc::parse(parts.next()?.strip_prefix("q=")?)?;
        if parts.next().is_some() {
            return None;
        }
        let bits: Vec<u8> = n
            .chars()
            .map(|c| c.to_digit(2).map(|d| d as u8))
            .collect::<Option<_>>()?;
        Action::new(&bits, p, q).ok()
    }

    pub fn to_json(&self) -> Value {
        json!({"n": self.n, "p": self.p.to_json(), "q": self.q.to_json()})
    }

    pub fn from_json(v: &Value) -> Result<Action, PolicyError> {
        let bad = || PolicyError::Remote(format!("malformed action {}", v));
        let n: Vec<u8> = v
            .get("n")
            .and_then(Value::as_array)
            .ok_or_else(bad)?
            .iter()
            .map(|e| e.as_u64().filter(|&b| b <= 1).map(|b| b as u8))
            .collect::<Option<_>>()
            .ok_or_else(bad)?;
        let p = v.get("p").and_then(Inc::from_json).ok_or_else(bad)?;
        let q = v.get("q").and_then(Inc::from_json).ok_or_else(bad)?;
        Action::new(&n, p, q)
    }
}

/// Zero-pads the shorter of the conjunct vector and `n`, adds componentwise,
/// and adds the bound increments.
pub fn apply_action(shape: &TemplateShape, a: &Action) -> TemplateShape {
    let n = a.trimmed_n();
    let old = shape.conjuncts();
    let len = old.len().max(n.len());
    let conj: Vec<u32> = (0..len)
        .map(|i| old.get(i).copied().unwrap_or(0) + n.get(i).copied().unwrap_or(0) as u32)
        .collect();
    TemplateShape::new(conj, shape.p.saturating_add(a.p.as_bound()), shape.q.saturating_add(a.q.as_bound()))
        .expect("adding to a nonempty shape keeps it nonempty")
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ExpertState {
    pub bits: [bool; 9],
}

pub fn expert_abstract(s: &ConcreteState) -> Result<ExpertState, PolicyError> {
    let n = s.shape.uniform().ok_or_else(|| PolicyError::NonUniform(s.shape.clone()))? as usize;
    let m = s.shape.disjuncts();
    let (p, q) = (s.shape.p, s.shape.q);
    Ok(ExpertState {
        bits: [
            m < n,
            m == n,
            p.at_least(2),
            p.at_least(5),
            q.at_least(2),
            q.at_least(5),
            s.f1,
            s.f2,
            s.z > 0,
        ],
    })
}

impl ExpertState {
    /// E.g. `e=010100000`.
    pub fn key(&self) -> String {
        let bits: String = self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
        format!("e={}", bits)
    }
}

/// `(n, m, p, q)`: `[N]*M` becomes `[N+n]*(M+m)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct ExpertAction {
    pub n: u8,
    pub m: u8,
    pub p: Inc,
    pub q: Inc,
}

impl ExpertAction {
    /// The 35 selectable expert actions in canonical order.
    pub fn all() -> &'static [ExpertAction] {
        static ALL: OnceLock<Vec<ExpertAction>> = OnceLock::new();
        ALL.get_or_init(|| {
            let mut v = Vec::new();
            for n in 0..2 {
                for m in 0..2 {
                    for p in Inc::ALL {
                        for q in Inc::ALL {
                            let a = ExpertAction { n, m, p, q };
                            if !a.is_zero() {
                                v.push(a);
                            }
                        }
                    }
                }
            }
            v
        })
    }

    pub fn is_zero(&self) -> bool {
        self.n == 0 && self.m == 0 && self.p == Inc::Zero && self.q == Inc::Zero
    }

    pub fn key(&self) -> String {
        format!("n={};m={};p={};q={}", self.n, self.m, self.p, self.q)
    }

    pub fn apply(&self, shape: &TemplateShape) -> Result<TemplateShape, PolicyError> {
        let n = shape.uniform().ok_or_else(|| PolicyError::NonUniform(shape.clone()))?;
        let m = shape.disjuncts() + self.m as usize;
        Ok(TemplateShape::new(
            vec![n + self.n as u32; m],
            shape.p.saturating_add(self.p.as_bound()),
            shape.q.saturating_add(self.q.as_bound()),
        )?)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PolicyAction {
    Raw(Action),
    Expert(ExpertAction),
}

impl PolicyAction {
    pub fn key(&self) -> String {
        match self {
            PolicyAction::Raw(a) => a.key(),
            PolicyAction::Expert(a) => a.key(),
        }
    }

    pub fn apply(&self, shape: &TemplateShape) -> Result<TemplateShape, PolicyError> {
        match self {
            PolicyAction::Raw(a) if a.is_zero() => Err(PolicyError::ZeroAction),
            PolicyAction::Raw(a) => Ok(apply_action(shape, a)),
            PolicyAction::Expert(a) if a.is_zero() => Err(PolicyError::ZeroAction),
            PolicyAction::Expert(a) => a.apply(shape),
        }
    }
}

/// Which observation and action spaces a learned policy uses.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum StateMode {
    #[default]
    Raw,
    Expert,
}

impl StateMode {
    pub fn state_key(self, s: &ConcreteState) -> Result<String, PolicyError> {
        match self {
            StateMode::Raw => Ok(raw_abstract(s).key()),
            StateMode::Expert => Ok(expert_abstract(s)?.key()),
        }
    }

    /// The selectable actions in canonical order.
    pub fn actions(self) -> Vec<PolicyAction> {
        match self {
            StateMode::Raw => Action::all().iter().map(|&a| PolicyAction::Raw(a)).collect(),
            StateMode::Expert => ExpertAction::all().iter().map(|&a| PolicyAction::Expert(a)).collect(),
        }
    }
}

pub trait Policy {
    fn decide(&mut self, state: &ConcreteState) -> Result<PolicyAction, PolicyError>;
    fn name(&self) -> String;
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Grow {
    Conjuncts,
    Disjuncts,
}

/// The hand-written heuristic: grow `N` and `M` in alternation, bump `P`
/// when a norm bound is in the core, bump `Q` (or open it once it reaches 3)
/// when a constant bound is.
#[derive(Clone, Debug)]
pub struct ExpertPolicy {
    pub next: Grow,
}

impl ExpertPolicy {
    pub fn new() -> Self {
        ExpertPolicy { next: Grow::Conjuncts }
    }
}

impl Default for ExpertPolicy {
    fn default() -> Self {
        Self::new()
    }
}

pub fn expert_action(s: &ConcreteState, next: Grow) -> Result<ExpertAction, PolicyError> {
    if s.shape.uniform().is_none() {
        return Err(PolicyError::NonUniform(s.shape.clone()));
    }
    let (n, m) = match next {
        Grow::Conjuncts => (1, 0),
        Grow::Disjuncts => (0, 1),
    };
    let p = if s.f1 { Inc::One } else { Inc::Zero };
    let q = match (s.f2, s.shape.q.at_least(3)) {
        (false, _) => Inc::Zero,
        (true, false) => Inc::One,
        (true, true) => Inc::Inf,
    };
    Ok(ExpertAction { n, m, p, q })
}

impl Policy for ExpertPolicy {
    fn decide(&mut self, s: &ConcreteState) -> Result<PolicyAction, PolicyError> {
        let a = expert_action(s, self.next)?;
        self.next = match self.next {
            Grow::Conjuncts => Grow::Disjuncts,
            Grow::Disjuncts => Grow::Conjuncts,
        };
        Ok(PolicyAction::Expert(a))
    }

    fn name(&self) -> String {
        "expert".into()
    }
}

pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

pub fn random_action(rng: &mut impl Rng) -> Action {
    let all = Action::all();
    all[rng.gen_range(0..all.len())]
}

impl Policy for RandomPolicy {
    fn decide(&mut self, _s: &ConcreteState) -> Result<PolicyAction, PolicyError> {
        Ok(PolicyAction::Raw(random_action(&mut self.rng)))
    }

    fn name(&self) -> String {
        "random".into()
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Entry {
    pub value: f64,
    pub count: u64,
}

#[derive(Debug, Error)]
#[error("line {line}: {msg}")]
pub struct QTableParseError {
    pub line: usize,
    pub msg: String,
}

/// State-action value estimates. Pairs never recorded are valued at 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QTable {
    entries: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, state: &str, action: &str) -> Option<&Entry> {
        self.entries.get(state)?.get(action)
    }

    pub fn value(&self, state: &str, action: &str) -> f64 {
        self.get(state, action).map_or(0.0, |e| e.value)
    }

    pub fn set(&mut self, state: &str, action: &str, e: Entry) {
        self.entries
            .entry(state.to_string())
            .or_default()
            .insert(action.to_string(), e);
    }

    /// Adds one sample to the pair's running mean.
    pub fn record(&mut self, state: &str, action: &str, ret: f64) {
        let e = self
            .entries
            .entry(state.to_string())
            .or_default()
            .entry(action.to_string())
            .or_insert(Entry { value: 0.0, count: 0 });
        e.count += 1;
        e.value += (ret - e.value) / e.count as f64;
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(|m| m.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &Entry)> {
        self.entries
            .iter()
            .flat_map(|(s, m)| m.iter().map(move |(a, e)| (s.as_str(), a.as_str(), e)))
    }

    /// Index of the highest-valued action; ties go to the lowest index.
    pub fn argmax(&self, state: &str, actions: &[String]) -> usize {
        let row = self.entries.get(state);
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, a) in actions.iter().enumerate() {
            let v = row.and_then(|r| r.get(a)).map_or(0.0, |e| e.value);
            if v > best_v {
                best = i;
                best_v = v;
            }
        }
        best
    }

    /// One `<state> <action> <value> <count>` line per entry, sorted.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (s, a, e) in self.iter() {
            out.push_str(&format!("{} {} {:?} {}\n", s, a, e.value, e.count));
        }
        out
    }

    pub fn parse(text: &str) -> Result<QTable, QTableParseError> {
        let mut t = QTable::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| QTableParseError {
                line: i + 1,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(err("expected `<state> <action> <value> <count>`"));
            }
            let value: f64 = f[2].parse().map_err(|_| err("bad value"))?;
            let count: u64 = f[3].parse().map_err(|_| err("bad count"))?;
            if count == 0 || !value.is_finite() {
                return Err(err("entries need a finite value and a positive count"));
            }
            t.set(f[0], f[1], Entry { value, count });
        }
        Ok(t)
    }
}

/// With probability `eps` a uniform index, else the table's argmax.
pub fn epsilon_greedy(t: &QTable, state: &str, actions: &[String], eps: f64, rng: &mut impl Rng) -> usize {
    if eps > 0.0 && rng.gen::<f64>() < eps {
        rng.gen_range(0..actions.len())
    } else {
        t.argmax(state, actions)
    }
}

/// ε-greedy over a shared table.
pub struct TablePolicy {
    table: Arc<QTable>,
    eps: f64,
    mode: StateMode,
    rng: ChaCha8Rng,
    actions: Vec<PolicyAction>,
    keys: Vec<String>,
}

impl TablePolicy {
    pub fn new(table: Arc<QTable>, eps: f64, mode: StateMode, seed: u64) -> Self {
        let actions = mode.actions();
        let keys = actions.iter().map(|a| a.key()).collect();
        TablePolicy {
            table,
            eps,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            actions,
            keys,
        }
    }
}

impl Policy for TablePolicy {
    fn decide(&mut self, s: &ConcreteState) -> Result<PolicyAction, PolicyError> {
        let key = self.mode.state_key(s)?;
        let i = epsilon_greedy(&self.table, &key, &self.keys, self.eps, &mut self.rng);
        Ok(self.actions[i])
    }

    fn name(&self) -> String {
        match self.mode {
            StateMode::Raw => "mc".into(),
            StateMode::Expert => "mc-expert".into(),
        }
    }
}

/// Asks a policy server over TCP. Each decision is one JSON line
/// `{"type":"act","state":{...}}` answered by `{"action":{"n":[..],"p":..,"q":..}}`.
pub struct RemotePolicy {
    endpoint: String,
    conn: Option<(BufReader<TcpStream>, TcpStream)>,
}

impl RemotePolicy {
    pub fn new(endpoint: &str) -> Self {
        RemotePolicy {
            endpoint: endpoint.to_string(),
            conn: None,
        }
    }

    fn ask(&mut self, msg: &Value) -> std::io::Result<String> {
        if self.conn.is_none() {
            let s = TcpStream::connect(&self.endpoint)?;
            self.conn = Some((BufReader::new(s.try_clone()?), s));
        }
        let (r, w) = self.conn.as_mut().unwrap();
        writeln!(w, "{}", msg)?;
        w.flush()?;
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "connection closed"));
        }
        Ok(line)
    }
}

impl Policy for RemotePolicy {
    fn decide(&mut self, s: &ConcreteState) -> Result<PolicyAction, PolicyError> {
        let msg = json!({"type": "act", "state": raw_abstract(s).to_json()});
        let line = self.ask(&msg).map_err(|e| {
            self.conn = None;
            PolicyError::Remote(format!("{}: {}", self.endpoint, e))
        })?;
        let v: Value = serde_json::from_str(&line).map_err(|e| PolicyError::Remote(e.to_string()))?;
        let a = v
            .get("action")
            .ok_or_else(|| PolicyError::Remote(format!("reply without action: {}", line.trim())))?;
        Ok(PolicyAction::Raw(Action::from_json(a)?))
    }

    fn name(&self) -> String {
        format!("remote:{}", self.endpoint)
    }
}
