use std::collections::HashMap;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use invsynth_core::engine::{run_cegis, EngineConfig, Verdict};
use invsynth_core::envserver;
use invsynth_core::logic::parse_witness;
use invsynth_core::mc::{train_from, EngineEnv, TrainConfig};
use invsynth_core::policy::{QTable, StateMode};
use invsynth_core::smt::{Solver, SolverConfig};
use invsynth_core::suite::{bench, load_dir, load_problem, revalidate, BenchReport, PolicySpec};
use invsynth_core::validator::{ValidationOutcome, Validator};

/// Loop-invariant synthesis for linear CHCs by template-based CEGIS.
#[derive(Parser)]
#[command(name = "invsynth", version)]
struct Cli {
    /// File of `key value` lines supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize an invariant for one problem.
    Solve(SolveArgs),
    /// Check a witness against a problem.
    Validate { problem: PathBuf, witness: PathBuf },
    /// Train a tabular Monte Carlo policy.
    TrainMc(TrainArgs),
    /// Run policies over a directory of problems.
    Bench(BenchArgs),
    /// Serve the engine as an RL environment.
    ServeEnv(ServeArgs),
}

#[derive(Args)]
struct PolicyArgs {
    /// Treat learned tables as keyed by expert states.
    #[arg(long)]
    expert_states: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-query solver timeout in seconds.
    #[arg(long)]
    query_timeout: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    file: PathBuf,
    /// expert, random, mc:<table-file> or remote:<host:port>.
    #[arg(long)]
    policy: Option<String>,
    /// Total budget in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    #[command(flatten)]
    common: PolicyArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    problems: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    episode_timeout: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the per-episode report. Defaults to `<out>.report`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// How epoch snapshots are scored: `greedy` (a greedy pass over the
    /// training set) or `episodes` (the epoch's own exploring episodes).
    #[arg(long)]
    select: Option<String>,
    #[command(flatten)]
    common: PolicyArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    problems: Option<PathBuf>,
    /// Repeat to also report the joint row.
    #[arg(long)]
    policy: Vec<String>,
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Report file; witnesses go next to it in `<out>.witnesses/`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: PolicyArgs,
}

#[derive(Args)]
struct ServeArgs {
    /// stdio or tcp:<port>.
    #[arg(long)]
    transport: Option<String>,
    #[arg(long)]
    problems: Option<PathBuf>,
    #[arg(long)]
    query_timeout: Option<f64>,
}

/// Flag values from the optional config file.
#[derive(Default)]
struct Config(HashMap<String, String>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else { return Ok(Config::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut m = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| anyhow!("{}:{}: expected `key value`", path.display(), i + 1))?;
            m.insert(k.trim_start_matches("--").to_string(), v.trim().to_string());
        }
        Ok(Config(m))
    }

    /// The flag if given, else the file's value, else `default`.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.0.get(key) {
            Some(s) => s
                .parse()
                .map_err(|e| anyhow!("config `{}`: {}", key, e)),
            None => Ok(default),
        }
    }

    fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.0
            .get(key)
            .map(|s| s.parse().map_err(|e| anyhow!("config `{}`: {}", key, e)))
            .transpose()
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        self.pick(None, key, false)
    }
}

fn secs(s: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(s).map_err(|_| anyhow!("invalid duration {}", s))
}

fn mode(expert: bool) -> StateMode {
    if expert {
        StateMode::Expert
    } else {
        StateMode::Raw
    }
}

fn parse_policy(s: &str, mode: StateMode) -> Result<PolicySpec> {
    if let Some(path) = s.strip_prefix("mc:") {
        let text = fs::read_to_string(path).with_context(|| format!("reading table {}", path))?;
        let table = QTable::parse(&text).map_err(|e| anyhow!("{}: {}", path, e))?;
        return Ok(PolicySpec::Table {
            table: Arc::new(table),
            mode,
        });
    }
    if let Some(ep) = s.strip_prefix("remote:") {
        return Ok(PolicySpec::Remote(ep.to_string()));
    }
    match s {
        "expert" => Ok(PolicySpec::Expert),
        "random" => Ok(PolicySpec::Random),
        _ => bail!("unknown policy `{}` (expected expert, random, mc:<file> or remote:<endpoint>)", s),
    }
}

fn engine_config(cfg: &Config, total: f64, query: Option<f64>) -> Result<EngineConfig> {
    let mut e = EngineConfig::with_timeout(secs(total)?);
    e.query_timeout = secs(cfg.pick(query, "query-timeout", 5.0)?)?;
    e.solver = SolverConfig::from_env();
    Ok(e)
}

fn solve(cfg: &Config, a: SolveArgs) -> Result<ExitCode> {
    let chc = load_problem(&a.file)?;
    let m = mode(cfg.flag(a.common.expert_states, "expert-states")?);
    let spec = parse_policy(&cfg.pick(a.policy, "policy", "expert".to_string())?, m)?;
    let seed = cfg.pick(a.common.seed, "seed", 0)?;
    let ecfg = engine_config(cfg, cfg.pick(a.timeout, "timeout", 60.0)?, a.common.query_timeout)?;
    let mut policy = spec.build(seed);
    let o = run_cegis(&chc, &ecfg, policy.as_mut())?;
    if let Some(d) = &o.diagnostic {
        eprintln!("warning: {}", d);
    }
    info!(
        "{} in {:.3}s, {} template changes, {} candidates",
        o.verdict,
        o.wall_time.as_secs_f64(),
        o.stats.template_changes,
        o.stats.candidates
    );
    match &o.verdict {
        Verdict::Solution(c) => {
            if !revalidate(&chc, &o, ecfg.query_timeout * 4).map_err(|e| anyhow!(e))? {
                bail!("internal error: witness failed re-validation");
            }
            println!("sat");
            println!("{}", c.to_define_fun(&chc.pred_name, chc.vars()));
            Ok(ExitCode::SUCCESS)
        }
        Verdict::Unsat => {
            println!("unsat");
            Ok(ExitCode::SUCCESS)
        }
        Verdict::Timeout => {
            println!("timeout");
            Ok(ExitCode::from(2))
        }
    }
}

fn validate(problem: &Path, witness: &Path) -> Result<ExitCode> {
    let chc = load_problem(problem)?;
    let text = fs::read_to_string(witness).with_context(|| format!("reading {}", witness.display()))?;
    let f = parse_witness(&text, &chc).map_err(|e| anyhow!("{}:{}", witness.display(), e))?;
    let mut v = Validator::new(Solver::from_env()?);
    match v.validate(&chc, &f, Duration::from_secs(30)) {
        ValidationOutcome::Valid => {
            println!("valid");
            Ok(ExitCode::SUCCESS)
        }
        ValidationOutcome::Cex { clause, source } => {
            println!("invalid");
            println!("{} counterexample: {}", source, clause);
            Ok(ExitCode::from(1))
        }
        ValidationOutcome::Unknown(r) => {
            println!("unknown");
            eprintln!("{:?}", r);
            Ok(ExitCode::from(2))
        }
    }
}

fn train_mc(cfg: &Config, a: TrainArgs) -> Result<ExitCode> {
    let dir = cfg
        .pick_opt(a.problems, "problems")?
        .ok_or_else(|| anyhow!("--problems is required"))?;
    let problems = load_dir(&dir)?;
    if problems.is_empty() {
        bail!("no problems in {}", dir.display());
    }
    let d = TrainConfig::default();
    let tc = TrainConfig {
        epsilon: cfg.pick(a.epsilon, "epsilon", d.epsilon)?,
        gamma: d.gamma,
        episode_timeout: secs(cfg.pick(a.episode_timeout, "episode-timeout", d.episode_timeout.as_secs_f64())?)?,
        epochs: cfg.pick(a.epochs, "epochs", d.epochs)?,
        seed: cfg.pick(a.common.seed, "seed", d.seed)?,
        mode: mode(cfg.flag(a.common.expert_states, "expert-states")?),
        greedy_selection: match cfg.pick(a.select, "select", "greedy".to_string())?.as_str() {
            "greedy" => true,
            "episodes" => false,
            other => bail!("unknown selection {:?}; expected greedy or episodes", other),
        },
    };
    if !(0.0..=1.0).contains(&tc.epsilon) {
        bail!("epsilon must be in [0, 1]");
    }
    let out = cfg.pick(a.out, "out", PathBuf::from("q-table.txt"))?;
    let report_path = cfg.pick_opt(a.report, "report")?.unwrap_or_else(|| {
        let mut p = out.clone().into_os_string();
        p.push(".report");
        PathBuf::from(p)
    });
    let mut env = EngineEnv {
        problems,
        cfg: engine_config(cfg, tc.episode_timeout.as_secs_f64(), a.common.query_timeout)?,
    };
    eprintln!(
        "training on {} problems for {} epochs (epsilon {}, {}s per episode)",
        env.problems.len(),
        tc.epochs,
        tc.epsilon,
        tc.episode_timeout.as_secs_f64()
    );
    let (table, report) = train_from(&mut env, &tc, QTable::new(), |e, s| {
        eprintln!("epoch {}: score {} solved in {:.1}s", e, s.solved, s.time.as_secs_f64());
    });
    fs::write(&out, table.serialize()).with_context(|| format!("writing {}", out.display()))?;
    fs::write(&report_path, report.to_string()).with_context(|| format!("writing {}", report_path.display()))?;
    println!(
        "wrote {} ({} entries, best epoch {}) and {}",
        out.display(),
        table.len(),
        report.best_epoch.map_or("-".into(), |e| e.to_string()),
        report_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_bench(cfg: &Config, a: BenchArgs) -> Result<ExitCode> {
    let dir = cfg
        .pick_opt(a.problems, "problems")?
        .ok_or_else(|| anyhow!("--problems is required"))?;
    let problems = load_dir(&dir)?;
    if problems.is_empty() {
        bail!("no problems in {}", dir.display());
    }
    let m = mode(cfg.flag(a.common.expert_states, "expert-states")?);
    let names = if a.policy.is_empty() {
        vec![cfg.pick(None, "policy", "expert".to_string())?]
    } else {
        a.policy
    };
    let specs = names.iter().map(|s| parse_policy(s, m)).collect::<Result<Vec<_>>>()?;
    let ecfg = engine_config(cfg, cfg.pick(a.timeout, "timeout", 60.0)?, a.common.query_timeout)?;
    let jobs = cfg.pick(a.jobs, "jobs", 1)?;
    let seed = cfg.pick(a.common.seed, "seed", 0)?;
    let mut reports: Vec<BenchReport> = specs.iter().map(|s| bench(&problems, s, &ecfg, seed, jobs)).collect();
    if reports.len() > 1 {
        reports.push(BenchReport::joint(&reports));
    }
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.to_string());
    }
    print!("{}", text);
    if let Some(out) = cfg.pick_opt(a.out, "out")? {
        fs::write(&out, &text).with_context(|| format!("writing {}", out.display()))?;
        let mut wdir = out.clone().into_os_string();
        wdir.push(".witnesses");
        let wdir = PathBuf::from(wdir);
        for (i, r) in reports.iter().enumerate().take(specs.len()) {
            for row in &r.rows {
                if let Some(w) = &row.witness {
                    let d = wdir.join(format!("{}-{}", i, sanitize(&r.policy)));
                    fs::create_dir_all(&d)?;
                    fs::write(d.join(format!("{}.smt2", row.name)), format!("{}\n", w))?;
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

fn serve(cfg: &Config, a: ServeArgs) -> Result<ExitCode> {
    let transport = cfg.pick(a.transport, "transport", "stdio".to_string())?;
    let dir = cfg.pick_opt(a.problems, "problems")?;
    let ecfg = engine_config(cfg, 60.0, a.query_timeout)?;
    if transport == "stdio" {
        envserver::serve_stdio(dir, ecfg)?;
    } else if let Some(port) = transport.strip_prefix("tcp:") {
        let port: u16 = port.parse().map_err(|_| anyhow!("bad port in `{}`", transport))?;
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        eprintln!("listening on {}", listener.local_addr()?);
        envserver::serve_tcp(listener, dir, ecfg)?;
    } else {
        eprintln!("error: transport must be `stdio` or `tcp:<port>`, got `{}`", transport);
        return Ok(ExitCode::from(64));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Solve(a) => solve(&cfg, a),
        Cmd::Validate { problem, witness } => validate(&problem, &witness),
        Cmd::TrainMc(a) => train_mc(&cfg, a),
        Cmd::Bench(a) => run_bench(&cfg, a),
        Cmd::ServeEnv(a) => serve(&cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp_millis()
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(1)
        }
    }
}
