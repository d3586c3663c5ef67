//! First-visit on-policy Monte Carlo control over engine episodes.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{run_cegis, ConcreteState, EngineConfig, Verdict};
use crate::logic::ChcSystem;
use crate::policy::{Policy, PolicyAction, PolicyError, QTable, StateMode, TablePolicy};

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStep {
    pub state: String,
    pub action: String,
    pub reward: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Episode {
    pub steps: Vec<EpisodeStep>,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Backward returns, then one running-mean sample per first-visited pair.
pub fn mc_update(t: &mut QTable, e: &Episode, gamma: f64) {
    let mut returns = vec![0.0; e.steps.len()];
    let mut g = 0.0;
    for (i, s) in e.steps.iter().enumerate().rev() {
        g = s.reward + gamma * g;
        returns[i] = g;
    }
    let mut seen = HashSet::new();
    for (s, g) in e.steps.iter().zip(returns) {
        if seen.insert((s.state.as_str(), s.action.as_str())) {
            t.record(&s.state, &s.action, g);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub episode_timeout: Duration,
    pub epochs: usize,
    pub seed: u64,
    pub mode: StateMode,
    /// Score each epoch's snapshot by a greedy pass over the training set
    /// rather than by the ε-greedy episodes that built it.
    pub greedy_selection: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epsilon: 0.05,
            gamma: 1.0,
            episode_timeout: Duration::from_secs(120),
            epochs: 200,
            seed: 0,
            mode: StateMode::Raw,
            greedy_selection: true,
        }
    }
}

/// Result of one episode as seen by the trainer.
#[derive(Clone, Debug)]
pub struct EpisodeResult {
    /// One reward per policy decision, in order.
    pub rewards: Vec<f64>,
    pub outcome: String,
    pub solved: bool,
    pub time: Duration,
}

/// Something that runs one episode of a problem under a policy.
pub trait EpisodeEnv {
    fn problem_count(&self) -> usize;
    fn problem_name(&self, i: usize) -> String;
    fn run(&mut self, i: usize, policy: &mut dyn Policy) -> Result<EpisodeResult, String>;
}

/// Runs the engine on a fixed list of problems.
pub struct EngineEnv {
    pub problems: Vec<(String, ChcSystem)>,
    pub cfg: EngineConfig,
}

impl EpisodeEnv for EngineEnv {
    fn problem_count(&self) -> usize {
        self.problems.len()
    }

    fn problem_name(&self, i: usize) -> String {
        self.problems[i].0.clone()
    }

    fn run(&mut self, i: usize, policy: &mut dyn Policy) -> Result<EpisodeResult, String> {
        let o = run_cegis(&self.problems[i].1, &self.cfg, policy).map_err(|e| e.to_string())?;
        if let Some(d) = &o.diagnostic {
            if o.verdict == Verdict::Timeout && o.trace.is_empty() && o.stats.smt_queries == 0 {
                return Err(d.clone());
            }
        }
        Ok(EpisodeResult {
            rewards: o.trace.iter().map(|s| s.reward).collect(),
            outcome: o.verdict.tag().to_string(),
            solved: !matches!(o.verdict, Verdict::Timeout),
            time: o.wall_time,
        })
    }
}

/// ε-greedy table policy that remembers the keys it saw.
struct Recording {
    inner: TablePolicy,
    mode: StateMode,
    keys: Vec<(String, String)>,
}

impl Policy for Recording {
    fn decide(&mut self, s: &ConcreteState) -> Result<PolicyAction, PolicyError> {
        let key = self.mode.state_key(s)?;
        let a = self.inner.decide(s)?;
        self.keys.push((key, a.key()));
        Ok(a)
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}

/// Runs one ε-greedy episode against a frozen table and pairs the keys
/// observed at decision time with the rewards.
pub fn run_episode(
    env: &mut dyn EpisodeEnv,
    problem: usize,
    table: Arc<QTable>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Episode, EpisodeResult), String> {
    let mut pol = Recording {
        inner: TablePolicy::new(table, cfg.epsilon, cfg.mode, seed),
        mode: cfg.mode,
        keys: Vec::new(),
    };
    let r = env.run(problem, &mut pol)?;
    if r.rewards.len() != pol.keys.len() {
        return Err(format!(
            "{} rewards for {} decisions",
            r.rewards.len(),
            pol.keys.len()
        ));
    }
    let steps = pol
        .keys
        .into_iter()
        .zip(&r.rewards)
        .map(|((state, action), &reward)| EpisodeStep { state, action, reward })
        .collect();
    Ok((Episode { steps }, r))
}

#[derive(Clone, Debug)]
pub struct TrainRecord {
    pub epoch: usize,
    pub problem: String,
    pub outcome: String,
    pub time: Duration,
    pub steps: usize,
    pub reward: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochScore {
    pub solved: usize,
    pub time: Duration,
}

impl EpochScore {
    /// More solved first, then less time.
    pub fn better_than(&self, other: &EpochScore) -> bool {
        self.solved > other.solved || (self.solved == other.solved && self.time < other.time)
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub records: Vec<TrainRecord>,
    pub epochs: Vec<EpochScore>,
    pub best_epoch: Option<usize>,
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# epoch problem outcome time_s steps reward")?;
        for r in &self.records {
            writeln!(
                f,
                "{} {} {} {:.3} {} {:.3}",
                r.epoch,
                r.problem,
                r.outcome,
                r.time.as_secs_f64(),
                r.steps,
                r.reward
            )?;
        }
        for (i, s) in self.epochs.iter().enumerate() {
            writeln!(f, "# epoch {} solved {} time_s {:.3}", i, s.solved, s.time.as_secs_f64())?;
        }
        if let Some(b) = self.best_epoch {
            writeln!(f, "# best epoch {}", b)?;
        }
        Ok(())
    }
}

fn episode_seed(seed: u64, epoch: usize, problem: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (problem as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

/// Greedy pass over every problem with a fixed table.
fn greedy_score(env: &mut dyn EpisodeEnv, table: &QTable, cfg: &TrainConfig, epoch: usize) -> EpochScore {
    let frozen = Arc::new(table.clone());
    let greedy = TrainConfig { epsilon: 0.0, ..cfg.clone() };
    let mut score = EpochScore {
        solved: 0,
        time: Duration::ZERO,
    };
    for i in 0..env.problem_count() {
        match run_episode(env, i, frozen.clone(), &greedy, 0) {
            Ok((_, r)) => {
                score.solved += r.solved as usize;
                score.time += r.time;
            }
            Err(e) => warn!("epoch {} greedy pass, problem {}: {}", epoch, env.problem_name(i), e),
        }
    }
    score
}

/// Trains from an empty table. After each epoch the table is snapshotted
/// and scored, either by a greedy pass or by that epoch's episodes; the
/// best snapshot is returned.
pub fn train(env: &mut dyn EpisodeEnv, cfg: &TrainConfig) -> (QTable, TrainReport) {
    train_from(env, cfg, QTable::new(), |_, _| {})
}

/// As [`train`], starting from `table`, calling `on_epoch` after each epoch.
pub fn train_from(
    env: &mut dyn EpisodeEnv,
    cfg: &TrainConfig,
    mut table: QTable,
    mut on_epoch: impl FnMut(usize, &EpochScore),
) -> (QTable, TrainReport) {
    let mut report = TrainReport::default();
    let mut best: Option<(EpochScore, QTable)> = None;
    let mut order: Vec<usize> = (0..env.problem_count()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut score = EpochScore {
            solved: 0,
            time: Duration::ZERO,
        };
        for &i in &order {
            let seed = episode_seed(cfg.seed, epoch, i);
            let frozen = Arc::new(table.clone());
            match run_episode(env, i, frozen, cfg, seed) {
                Ok((ep, r)) => {
                    mc_update(&mut table, &ep, cfg.gamma);
                    if r.solved {
                        score.solved += 1;
                    }
                    score.time += r.time;
                    report.records.push(TrainRecord {
                        epoch,
                        problem: env.problem_name(i),
                        outcome: r.outcome,
                        time: r.time,
                        steps: ep.steps.len(),
                        reward: ep.total_reward(),
                    });
                }
                Err(e) => warn!("epoch {} problem {}: {}", epoch, env.problem_name(i), e),
            }
        }
        info!(
            "epoch {}: episodes solved {} in {:.1}s, table has {} entries",
            epoch,
            score.solved,
            score.time.as_secs_f64(),
            table.len()
        );
        if cfg.greedy_selection {
            score = greedy_score(env, &table, cfg, epoch);
            info!("epoch {}: greedy solved {} in {:.1}s", epoch, score.solved, score.time.as_secs_f64());
        }
        on_epoch(epoch, &score);
        report.epochs.push(score);
        if best.as_ref().map_or(true, |(b, _)| score.better_than(b)) {
            best = Some((score, table.clone()));
            report.best_epoch = Some(epoch);
        }
    }
    let out = best.map(|(_, t)| t).unwrap_or(table);
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(s: &str, a: &str, r: f64) -> EpisodeStep {
        EpisodeStep {
            state: s.into(),
            action: a.into(),
            reward: r,
        }
    }

    #[test]
    fn update_examples() {
        let mut t = QTable::new();
        mc_update(&mut t, &Episode { steps: vec![step("s", "a", -2.0), step("s2", "a2", -3.0)] }, 1.0);
        assert_eq!(t.get("s", "a").unwrap().value, -5.0);
        assert_eq!(t.get("s", "a").unwrap().count, 1);
        assert_eq!(t.get("s2", "a2").unwrap().value, -3.0);

        let mut t = QTable::new();
        let e = Episode {
            steps: vec![step("s", "a", -1.0), step("x", "y", -1.0), step("s", "a", -1.0)],
        };
        mc_update(&mut t, &e, 1.0);
        assert_eq!(t.get("s", "a").unwrap().value, -3.0);
        assert_eq!(t.get("s", "a").unwrap().count, 1);

        let mut t = QTable::new();
        mc_update(&mut t, &Episode { steps: vec![step("s", "a", -4.0)] }, 1.0);
        mc_update(&mut t, &Episode { steps: vec![step("s", "a", -6.0)] }, 1.0);
        assert_eq!(t.get("s", "a").unwrap().value, -5.0);
        assert_eq!(t.get("s", "a").unwrap().count, 2);

        let mut t = QTable::new();
        mc_update(&mut t, &Episode::default(), 1.0);
        assert!(t.is_empty());
    }

    #[test]
    fn discounted_returns() {
        let mut t = QTable::new();
        let e = Episode {
            steps: vec![step("a", "x", -1.0), step("b", "x", -1.0)],
        };
        mc_update(&mut t, &e, 0.5);
        assert_eq!(t.value("a", "x"), -1.5);
    }

    #[test]
    fn best_on_train_ranking() {
        let a = EpochScore { solved: 3, time: Duration::from_secs(40) };
        let b = EpochScore { solved: 3, time: Duration::from_secs(30) };
        let c = EpochScore { solved: 4, time: Duration::from_secs(100) };
        assert!(b.better_than(&a));
        assert!(!a.better_than(&b));
        assert!(c.better_than(&b));
    }
}
