//! Problem loading and benchmark runs over a set of problems.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::{info, warn};

use crate::engine::{run_cegis, EngineConfig, Outcome, Verdict};
use crate::logic::{parse_problem, ChcSystem, ParseError};
use crate::policy::{ExpertPolicy, Policy, QTable, RandomPolicy, RemotePolicy, StateMode, TablePolicy};
use crate::smt::Solver;
use crate::validator::{ValidationOutcome, Validator};

pub const PROBLEM_EXTENSIONS: [&str; 3] = ["sl", "chc", "smt2"];

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{source}")]
    Parse { path: PathBuf, source: ParseError },
}

pub fn load_problem(path: &Path) -> Result<ChcSystem, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_problem(&text).map_err(|source| LoadError::Parse {
        path: path.to_owned(),
        source,
    })
}

/// Problem files in `dir`, sorted by name.
pub fn list_problems(dir: &Path) -> Result<Vec<PathBuf>, LoadError> {
    let io = |source| LoadError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(io)? {
        let p = e.map_err(io)?.path();
        let ok = p
            .extension()
            .and_then(|x| x.to_str())
            .is_some_and(|x| PROBLEM_EXTENSIONS.contains(&x));
        if ok && p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads every problem in `dir`, named by file stem.
pub fn load_dir(dir: &Path) -> Result<Vec<(String, ChcSystem)>, LoadError> {
    list_problems(dir)?
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            load_problem(&p).map(|c| (name, c))
        })
        .collect()
}

/// A recipe for a fresh policy instance per run.
#[derive(Clone, Debug)]
pub enum PolicySpec {
    Expert,
    Random,
    Table { table: Arc<QTable>, mode: StateMode },
    Remote(String),
}

impl PolicySpec {
    pub fn build(&self, seed: u64) -> Box<dyn Policy> {
        match self {
            PolicySpec::Expert => Box::new(ExpertPolicy::new()),
            PolicySpec::Random => Box::new(RandomPolicy::new(seed)),
            PolicySpec::Table { table, mode } => Box::new(TablePolicy::new(table.clone(), 0.0, *mode, seed)),
            PolicySpec::Remote(e) => Box::new(RemotePolicy::new(e)),
        }
    }

    pub fn name(&self) -> String {
        self.build(0).name()
    }
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub name: String,
    pub outcome: String,
    pub time: Duration,
    /// `define-fun` text of a validated witness.
    pub witness: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub policy: String,
    pub rows: Vec<BenchRow>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub sat: usize,
    pub unsat: usize,
    pub timeout: usize,
    pub error: usize,
}

impl Counts {
    pub fn answered(&self) -> usize {
        self.sat + self.unsat
    }

    pub fn total(&self) -> usize {
        self.sat + self.unsat + self.timeout + self.error
    }
}

impl BenchReport {
    pub fn counts(&self) -> Counts {
        let mut c = Counts::default();
        for r in &self.rows {
            match r.outcome.as_str() {
                "sat" => c.sat += 1,
                "unsat" => c.unsat += 1,
                "timeout" => c.timeout += 1,
                _ => c.error += 1,
            }
        }
        c
    }

    pub fn total_time(&self) -> Duration {
        self.rows.iter().map(|r| r.time).sum()
    }

    /// A problem counts as answered if any report answers it, at the
    /// fastest answering time; otherwise the slowest time is kept.
    pub fn joint(reports: &[BenchReport]) -> BenchReport {
        let policy = reports.iter().map(|r| r.policy.as_str()).collect::<Vec<_>>().join("+");
        let mut rows = Vec::new();
        if let Some(first) = reports.first() {
            for (i, base) in first.rows.iter().enumerate() {
                let cands: Vec<&BenchRow> = reports.iter().map(|r| &r.rows[i]).collect();
                let answered = cands
                    .iter()
                    .filter(|r| r.outcome == "sat" || r.outcome == "unsat")
                    .min_by_key(|r| r.time);
                let row = match answered {
                    Some(r) => (*r).clone(),
                    None => {
                        let slowest = cands.iter().max_by_key(|r| r.time).unwrap();
                        (*slowest).clone()
                    }
                };
                debug_assert_eq!(row.name, base.name);
                rows.push(row);
            }
        }
        BenchReport { policy, rows }
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# policy {}", self.policy)?;
        writeln!(f, "# problem outcome time_s")?;
        for r in &self.rows {
            writeln!(f, "{} {} {:.3}", r.name, r.outcome, r.time.as_secs_f64())?;
        }
        let c = self.counts();
        writeln!(
            f,
            "# total {} sat {} unsat {} timeout {} error {} time_s {:.3}",
            c.total(),
            c.sat,
            c.unsat,
            c.timeout,
            c.error,
            self.total_time().as_secs_f64()
        )
    }
}

/// Re-checks a solution with a fresh validator.
pub fn revalidate(chc: &ChcSystem, o: &Outcome, timeout: Duration) -> Result<bool, String> {
    let Verdict::Solution(cand) = &o.verdict else {
        return Ok(true);
    };
    let mut v = Validator::new(Solver::from_env().map_err(|e| e.to_string())?);
    match v.validate(chc, &cand.formula, timeout) {
        ValidationOutcome::Valid => Ok(true),
        ValidationOutcome::Cex { clause, source } => {
            warn!("witness fails {} on {}", source, clause);
            Ok(false)
        }
        ValidationOutcome::Unknown(r) => Err(format!("re-validation inconclusive: {:?}", r)),
    }
}

fn run_one(name: &str, chc: &ChcSystem, spec: &PolicySpec, cfg: &EngineConfig, seed: u64) -> BenchRow {
    let mut policy = spec.build(seed);
    match run_cegis(chc, cfg, policy.as_mut()) {
        Ok(o) => {
            let mut row = BenchRow {
                name: name.to_string(),
                outcome: o.verdict.tag().to_string(),
                time: o.wall_time,
                witness: None,
            };
            if let Verdict::Solution(cand) = &o.verdict {
                match revalidate(chc, &o, cfg.query_timeout * 4) {
                    Ok(true) => row.witness = Some(cand.to_define_fun(&chc.pred_name, chc.vars())),
                    Ok(false) => row.outcome = "error".into(),
                    Err(e) => {
                        warn!("{}: {}", name, e);
                        row.outcome = "error".into();
                    }
                }
            }
            if let Some(d) = o.diagnostic {
                warn!("{}: {}", name, d);
            }
            row
        }
        Err(e) => {
            warn!("{}: {}", name, e);
            BenchRow {
                name: name.to_string(),
                outcome: "error".into(),
                time: Duration::ZERO,
                witness: None,
            }
        }
    }
}

/// Runs one policy on every problem with up to `jobs` worker threads.
/// Rows come back in problem order.
pub fn bench(
    problems: &[(String, ChcSystem)],
    spec: &PolicySpec,
    cfg: &EngineConfig,
    seed: u64,
    jobs: usize,
) -> BenchReport {
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<BenchRow>>> = Mutex::new(vec![None; problems.len()]);
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(problems.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((name, chc)) = problems.get(i) else { break };
                let row = run_one(name, chc, spec, cfg, seed.wrapping_add(i as u64));
                info!("{} {} {:.3}s", row.name, row.outcome, row.time.as_secs_f64());
                rows.lock().unwrap()[i] = Some(row);
            });
        }
    });
    BenchReport {
        policy: spec.name(),
        rows: rows.into_inner().unwrap().into_iter().map(Option::unwrap).collect(),
    }
}
