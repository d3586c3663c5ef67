//! The template-based CEGIS loop.
//!
//! [`Engine`] is a resumable state machine: [`Engine::advance`] runs
//! candidate search and validation until either the problem is decided or a
//! template change is needed, at which point it yields the observed
//! [`ConcreteState`] and waits for [`Engine::apply`]. [`run_cegis`] drives it
//! with an in-process [`Policy`]; the environment server drives it remotely.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::time::{Duration, Instant};

use log::{debug, info};
use thiserror::Error;

use crate::logic::{ChcSystem, ExampleClause, ExampleInstance, Point};
use crate::policy::{Policy, PolicyAction, PolicyError};
use crate::smt::{LabeledConstraint, SmtResult, Solver, SolverConfig, SolverError, UnknownReason};
use crate::template::{build_constraint, instantiate, Candidate, TemplateShape};
use crate::validator::{ValidationOutcome, Validator};

/// Candidate search backend.
pub trait SynthBackend {
    fn check(&mut self, c: &LabeledConstraint, timeout: Duration) -> SmtResult;
}

impl SynthBackend for Solver {
    fn check(&mut self, c: &LabeledConstraint, timeout: Duration) -> SmtResult {
        self.check_sat(c, timeout)
    }
}

/// Candidate validation backend.
pub trait CandidateChecker {
    fn check(&mut self, chc: &ChcSystem, cand: &Candidate, timeout: Duration) -> ValidationOutcome;
}

impl CandidateChecker for Validator {
    fn check(&mut self, chc: &ChcSystem, cand: &Candidate, timeout: Duration) -> ValidationOutcome {
        self.validate(chc, &cand.formula, timeout)
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub total_timeout: Duration,
    pub query_timeout: Duration,
    pub initial_shape: TemplateShape,
    pub solver: SolverConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            total_timeout: Duration::from_secs(60),
            query_timeout: Duration::from_secs(5),
            initial_shape: TemplateShape::initial(),
            solver: SolverConfig::from_env(),
        }
    }
}

impl EngineConfig {
    pub fn with_timeout(total: Duration) -> Self {
        EngineConfig {
            total_timeout: total,
            ..Default::default()
        }
    }
}

/// What a policy sees at a decision point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcreteState {
    pub shape: TemplateShape,
    /// The last unsat core contained a `P:*` label.
    pub f1: bool,
    /// The last unsat core contained a `Q:*` label.
    pub f2: bool,
    /// Candidates found since the last template change.
    pub z: u64,
    /// Wall time since the previous policy invocation.
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct TraceStep {
    pub state: ConcreteState,
    pub action: PolicyAction,
    /// Minus the seconds spent until the next decision or termination.
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Solution(Candidate),
    Unsat,
    Timeout,
}

impl Verdict {
    pub fn tag(&self) -> &'static str {
        match self {
            Verdict::Solution(_) => "sat",
            Verdict::Unsat => "unsat",
            Verdict::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, Default)]
pub struct EngineStats {
    pub candidates: usize,
    pub smt_queries: usize,
    pub template_changes: usize,
    pub synth_unknowns: usize,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub verdict: Verdict,
    pub trace: Vec<TraceStep>,
    pub wall_time: Duration,
    pub examples: ExampleInstance,
    pub final_shape: TemplateShape,
    pub stats: EngineStats,
    /// Set when the run ended because of a backend failure.
    pub diagnostic: Option<String>,
}

impl Outcome {
    pub fn total_reward(&self) -> f64 {
        self.trace.iter().map(|s| s.reward).sum()
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("policy failed: {0}")]
    Policy(#[from] PolicyError),
    #[error("engine is not waiting for an action")]
    NotAtDecision,
    #[error("run already finished")]
    Finished,
}

pub enum Step {
    Decision(ConcreteState),
    Done(Outcome),
}

#[derive(PartialEq, Eq, Debug)]
enum Phase {
    Running,
    AtDecision,
    Finished,
}

pub struct Engine {
    chc: ChcSystem,
    cfg: EngineConfig,
    synth: Box<dyn SynthBackend + Send>,
    checker: Box<dyn CandidateChecker + Send>,
    shape: TemplateShape,
    examples: ExampleInstance,
    f1: bool,
    f2: bool,
    z: u64,
    start: Instant,
    last_tick: Instant,
    trace: Vec<TraceStep>,
    /// Time before the first decision, folded into the first step's reward.
    prelude: Option<Duration>,
    stats: EngineStats,
    phase: Phase,
    diagnostic: Option<String>,
    last_state: Option<ConcreteState>,
}

impl Engine {
    /// Starts an engine with two solver processes, one for candidate search
    /// and one for validation. The clock starts here.
    pub fn new(chc: ChcSystem, cfg: EngineConfig) -> Result<Engine, SolverError> {
        let synth = Solver::new(cfg.solver.clone())?;
        let validator = Validator::new(Solver::new(cfg.solver.clone())?);
        Ok(Engine::with_backends(chc, cfg, Box::new(synth), Box::new(validator)))
    }

    pub fn with_backends(
        chc: ChcSystem,
        cfg: EngineConfig,
        synth: Box<dyn SynthBackend + Send>,
        checker: Box<dyn CandidateChecker + Send>,
    ) -> Engine {
        let now = Instant::now();
        Engine {
            shape: cfg.initial_shape.clone(),
            chc,
            cfg,
            synth,
            checker,
            examples: ExampleInstance::new(),
            f1: false,
            f2: false,
            z: 0,
            start: now,
            last_tick: now,
            trace: Vec::new(),
            prelude: None,
            stats: EngineStats::default(),
            phase: Phase::Running,
            diagnostic: None,
            last_state: None,
        }
    }

    pub fn chc(&self) -> &ChcSystem {
        &self.chc
    }

    pub fn examples(&self) -> &ExampleInstance {
        &self.examples
    }

    pub fn trace(&self) -> &[TraceStep] {
        &self.trace
    }

    /// Snapshot of the current state. Does not mutate.
    pub fn observe(&self) -> ConcreteState {
        ConcreteState {
            shape: self.shape.clone(),
            f1: self.f1,
            f2: self.f2,
            z: self.z,
            elapsed: self.last_tick.elapsed(),
        }
    }

    fn remaining(&self) -> Duration {
        self.cfg.total_timeout.saturating_sub(self.start.elapsed())
    }

    /// Closes the pending step's reward at the current instant.
    fn tick(&mut self) -> Duration {
        let now = Instant::now();
        let dt = now - self.last_tick;
        self.last_tick = now;
        match self.trace.last_mut() {
            Some(step) => step.reward -= dt.as_secs_f64(),
            None => self.prelude = Some(self.prelude.unwrap_or_default() + dt),
        }
        dt
    }

    fn finish(&mut self, verdict: Verdict) -> Step {
        self.tick();
        self.phase = Phase::Finished;
        info!(
            "finished: {} after {:.3}s, {} candidates, {} template changes",
            verdict,
            self.start.elapsed().as_secs_f64(),
            self.stats.candidates,
            self.stats.template_changes
        );
        Step::Done(Outcome {
            verdict,
            trace: std::mem::take(&mut self.trace),
            wall_time: self.start.elapsed(),
            examples: self.examples.clone(),
            final_shape: self.shape.clone(),
            stats: self.stats.clone(),
            diagnostic: self.diagnostic.take(),
        })
    }

    fn decision(&mut self) -> Step {
        let mut state = self.observe();
        state.elapsed = self.tick();
        self.phase = Phase::AtDecision;
        self.last_state = Some(state.clone());
        Step::Decision(state)
    }

    /// Runs until the next decision point or termination.
    pub fn advance(&mut self) -> Result<Step, EngineError> {
        match self.phase {
            Phase::Finished => return Err(EngineError::Finished),
            Phase::AtDecision => return Err(EngineError::NotAtDecision),
            Phase::Running => {}
        }
        loop {
            let remaining = self.remaining();
            if remaining.is_zero() {
                return Ok(self.finish(Verdict::Timeout));
            }
            let c = build_constraint(&self.shape, self.chc.arity(), &self.examples)
                .expect("examples come from the validator at the system's arity");
            self.stats.smt_queries += 1;
            let budget = self.cfg.query_timeout.min(remaining);
            match self.synth.check(&c, budget) {
                SmtResult::Sat(sigma) => {
                    let cand = instantiate(&self.shape, self.chc.vars(), &sigma)
                        .expect("models assign every declared parameter");
                    self.z += 1;
                    self.stats.candidates += 1;
                    debug!("candidate {}: {}", self.stats.candidates, cand.formula);
                    match self.validate(&cand) {
                        Some(ValidationOutcome::Valid) => {
                            return Ok(self.finish(Verdict::Solution(cand)))
                        }
                        Some(ValidationOutcome::Cex { clause, source }) => {
                            debug!("cex from {}: {}", source, clause);
                            self.examples.insert(clause);
                        }
                        Some(ValidationOutcome::Unknown(_)) => unreachable!("validate retries unknowns"),
                        None => return Ok(self.finish(Verdict::Timeout)),
                    }
                }
                SmtResult::Unsat(core) => {
                    if detect_unsat(&self.examples) {
                        return Ok(self.finish(Verdict::Unsat));
                    }
                    self.set_flags(&core);
                    return Ok(self.decision());
                }
                SmtResult::Unknown(reason) => {
                    if self.remaining().is_zero() {
                        return Ok(self.finish(Verdict::Timeout));
                    }
                    debug!("candidate search unknown ({:?}); forcing a template change", reason);
                    self.stats.synth_unknowns += 1;
                    self.set_flags(&BTreeSet::new());
                    return Ok(self.decision());
                }
            }
        }
    }

    fn set_flags(&mut self, core: &BTreeSet<String>) {
        self.f1 = core.iter().any(|l| l.starts_with("P:"));
        self.f2 = core.iter().any(|l| l.starts_with("Q:"));
    }

    /// Validation with one retry at doubled timeout; `None` ends the run.
    fn validate(&mut self, cand: &Candidate) -> Option<ValidationOutcome> {
        let mut timeout = self.cfg.query_timeout.min(self.remaining());
        for attempt in 0..2 {
            if timeout.is_zero() {
                return None;
            }
            match self.checker.check(&self.chc, cand, timeout) {
                ValidationOutcome::Unknown(reason) => {
                    debug!("validation unknown ({:?}), attempt {}", reason, attempt + 1);
                    if let UnknownReason::SolverError(e) = &reason {
                        self.diagnostic = Some(format!("validator: {}", e));
                    }
                    timeout = (timeout * 2).min(self.remaining());
                }
                r => return Some(r),
            }
        }
        if self.diagnostic.is_none() {
            self.diagnostic = Some("validation did not finish twice".into());
        }
        None
    }

    /// Applies the policy's template update and resumes.
    pub fn apply(&mut self, action: PolicyAction) -> Result<(), EngineError> {
        if self.phase != Phase::AtDecision {
            return Err(if self.phase == Phase::Finished {
                EngineError::Finished
            } else {
                EngineError::NotAtDecision
            });
        }
        let next = action.apply(&self.shape)?;
        let state = self.last_state.take().expect("state recorded at decision");
        let mut reward = 0.0;
        if self.trace.is_empty() {
            if let Some(p) = self.prelude.take() {
                reward -= p.as_secs_f64();
            }
        }
        debug!("template {} -> {} via {}", self.shape, next, action.key());
        self.trace.push(TraceStep {
            state,
            action,
            reward,
        });
        self.shape = next;
        self.z = 0;
        self.stats.template_changes += 1;
        self.phase = Phase::Running;
        Ok(())
    }
}

/// Runs the loop to completion with an in-process policy.
pub fn run_cegis(
    chc: &ChcSystem,
    cfg: &EngineConfig,
    policy: &mut dyn Policy,
) -> Result<Outcome, EngineError> {
    let start = Instant::now();
    let mut engine = match Engine::new(chc.clone(), cfg.clone()) {
        Ok(e) => e,
        Err(e) => {
            return Ok(Outcome {
                verdict: Verdict::Timeout,
                trace: Vec::new(),
                wall_time: start.elapsed(),
                examples: ExampleInstance::new(),
                final_shape: cfg.initial_shape.clone(),
                stats: EngineStats::default(),
                diagnostic: Some(e.to_string()),
            })
        }
    };
    drive(&mut engine, policy)
}

/// Drives an existing engine to completion.
pub fn drive(engine: &mut Engine, policy: &mut dyn Policy) -> Result<Outcome, EngineError> {
    loop {
        match engine.advance()? {
            Step::Done(o) => return Ok(o),
            Step::Decision(state) => {
                let action = policy.decide(&state)?;
                engine.apply(action)?;
            }
        }
    }
}

/// Propositional consistency of the examples, treating each distinct point
/// as an atom. The clauses are Horn, so forward chaining from the positive
/// examples computes the least model; the set is inconsistent iff that model
/// makes some negative example true.
pub fn detect_unsat(examples: &ExampleInstance) -> bool {
    let mut succ: HashMap<&Point, Vec<&Point>> = HashMap::new();
    let mut negatives: HashSet<&Point> = HashSet::new();
    let mut work: Vec<&Point> = Vec::new();
    for c in examples.clauses() {
        match c {
            ExampleClause::Positive(p) => work.push(p),
            ExampleClause::Negative(p) => {
                negatives.insert(p);
            }
            ExampleClause::Implication(a, b) => succ.entry(a).or_default().push(b),
        }
    }
    let mut derived: HashSet<&Point> = HashSet::new();
    while let Some(p) = work.pop() {
        if !derived.insert(p) {
            continue;
        }
        if negatives.contains(p) {
            return true;
        }
        if let Some(next) = succ.get(p) {
            work.extend(next.iter().copied());
        }
    }
    false
}
