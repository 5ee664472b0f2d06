//! Candidate exploration: an ε-greedy bandit spends the trial budget across
//! pipelines, each with its own suggester (zero-shot seeds, then random
//! search, then Bayesian optimization once enough trials have finished).

pub mod bo;

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{HpConfig, HpSpace, Loss};

pub use bo::suggest_bo;

/// Suggestions per pipeline before the ε-greedy phase may start.
pub const GATE_SUGGESTED: usize = 5;
/// Finished trials a pipeline needs before BO replaces random search.
pub const BO_MIN_FINISHED: usize = 5;
pub const QUARANTINE_AFTER: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TunerError {
    #[error("budget or time exhausted")]
    Exhausted,
    #[error("unknown trial {0}")]
    UnknownTrial(usize),
    #[error("trial {0} already reported")]
    DoubleReport(usize),
    #[error("every trial failed")]
    AllTrialsFailed,
    #[error("invalid tuner configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerConfig {
    pub total_budget: usize,
    pub epsilon: f64,
    pub parallelism: usize,
    pub seed: u64,
    /// Seconds; no limit when absent.
    #[serde(default)]
    pub max_runtime: Option<f64>,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            total_budget: 250,
            epsilon: 0.1,
            parallelism: 10,
            seed: 0,
            max_runtime: None,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self, n_pipelines: usize) -> Result<(), TunerError> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(TunerError::InvalidConfig(format!("epsilon {} not in [0, 1]", self.epsilon)));
        }
        if self.parallelism == 0 {
            return Err(TunerError::InvalidConfig("parallelism must be >= 1".into()));
        }
        if n_pipelines == 0 {
            return Err(TunerError::InvalidConfig("no pipelines".into()));
        }
        if self.total_budget < n_pipelines {
            return Err(TunerError::InvalidConfig(format!(
                "budget {} is smaller than the number of pipelines ({n_pipelines})",
                self.total_budget
            )));
        }
        if self.max_runtime.is_some_and(|s| !(s >= 0.0)) {
            return Err(TunerError::InvalidConfig("max runtime must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub id: String,
    pub space: HpSpace,
    /// Zero-shot configurations, tried first and in order.
    pub seeds: Vec<HpConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialState {
    Suggested,
    Running,
    Finished,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionSource {
    ZeroShot,
    Random,
    Bayesian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: usize,
    pub pipeline: usize,
    pub config: HpConfig,
    pub source: SuggestionSource,
    pub state: TrialState,
    pub loss: Option<Loss>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub suggested: usize,
    pub finished: usize,
    pub failed: usize,
    pub consecutive_failures: usize,
    /// Best finished loss; the bandit reward (lower is better).
    pub best: Option<f64>,
    pub quarantined: bool,
    /// Selections made after the ε-greedy phase began.
    pub post_gate_selections: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Exploration,
    EpsilonGreedy,
}

/// One state transition, as written to the trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub trial: usize,
    pub pipeline: String,
    pub state: TrialState,
    pub config: HpConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<SuggestionSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<Loss>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct TunerState {
    pub arms: Vec<Arm>,
    pub stats: Vec<ArmStats>,
    pub trials: Vec<Trial>,
    pub phase: Phase,
    /// Trial index at which the ε-greedy phase began.
    pub gate_trial: Option<usize>,
    rng: ChaCha8Rng,
    seed: u64,
}

/// The phase condition: every pipeline has `GATE_SUGGESTED` suggestions and
/// at least one has `BO_MIN_FINISHED` finished trials.
pub fn gate_open(suggested: &[usize], finished: &[usize]) -> bool {
    suggested.iter().all(|&s| s >= GATE_SUGGESTED) && finished.iter().any(|&f| f >= BO_MIN_FINISHED)
}

impl TunerState {
    pub fn new(arms: Vec<Arm>, seed: u64) -> Self {
        let n = arms.len();
        Self {
            arms,
            stats: vec![ArmStats::default(); n],
            trials: Vec::new(),
            phase: Phase::Exploration,
            gate_trial: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    pub fn issued(&self) -> usize {
        self.trials.len()
    }

    fn update_phase(&mut self) {
        if self.phase == Phase::Exploration {
            let s: Vec<usize> = self.stats.iter().map(|a| a.suggested).collect();
            let f: Vec<usize> = self.stats.iter().map(|a| a.finished).collect();
            if gate_open(&s, &f) {
                self.phase = Phase::EpsilonGreedy;
                self.gate_trial = Some(self.trials.len());
            }
        }
    }

    /// Argmin reward over non-quarantined pipelines (all of them if every
    /// pipeline is quarantined); unfinished pipelines count as +inf, ties go
    /// to the smallest index.
    pub fn greedy_choice(&self) -> usize {
        let any_open = self.stats.iter().any(|s| !s.quarantined);
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in self.stats.iter().enumerate() {
            if any_open && s.quarantined {
                continue;
            }
            let r = s.best.unwrap_or(f64::INFINITY);
            if best.is_none_or(|(_, b)| r < b) {
                best = Some((i, r));
            }
        }
        best.map_or(0, |(i, _)| i)
    }

    fn exploration_choice(&self) -> usize {
        let mut best = 0;
        for (i, s) in self.stats.iter().enumerate() {
            if s.suggested < self.stats[best].suggested {
                best = i;
            }
        }
        best
    }

    /// Picks a pipeline and a configuration and records the trial as suggested.
    pub fn next_action(&mut self, cfg: &TunerConfig) -> Result<(usize, usize, HpConfig), TunerError> {
        if self.trials.len() >= cfg.total_budget {
            return Err(TunerError::Exhausted);
        }
        self.update_phase();
        let pipeline = match self.phase {
            Phase::Exploration => self.exploration_choice(),
            Phase::EpsilonGreedy => {
                if self.rng.random::<f64>() < cfg.epsilon {
                    self.rng.random_range(0..self.arms.len())
                } else {
                    self.greedy_choice()
                }
            }
        };
        if self.phase == Phase::EpsilonGreedy {
            self.stats[pipeline].post_gate_selections += 1;
        }
        let (config, source) = self.suggest(pipeline);
        let id = self.trials.len();
        self.stats[pipeline].suggested += 1;
        self.trials.push(Trial {
            id,
            pipeline,
            config: config.clone(),
            source,
            state: TrialState::Suggested,
            loss: None,
            error: None,
        });
        Ok((id, pipeline, config))
    }

    fn suggest(&mut self, pipeline: usize) -> (HpConfig, SuggestionSource) {
        let stats = &self.stats[pipeline];
        let arm = &self.arms[pipeline];
        if stats.suggested < GATE_SUGGESTED && stats.suggested < arm.seeds.len() {
            return (arm.space.project(&arm.seeds[stats.suggested]), SuggestionSource::ZeroShot);
        }
        if stats.finished >= BO_MIN_FINISHED {
            let history: Vec<(HpConfig, f64)> = self
                .trials
                .iter()
                .filter(|t| t.pipeline == pipeline && t.state == TrialState::Finished)
                .filter_map(|t| t.loss.map(|l| (t.config.clone(), l.value)))
                .collect();
            // a dedicated stream keeps BO draws independent of scheduling draws
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5bd1_e995);
            rng.set_stream(self.trials.len() as u64);
            if let Some(c) = suggest_bo(&history, &arm.space, &mut rng) {
                return (c, SuggestionSource::Bayesian);
            }
        }
        (suggest_random(&arm.space, &mut self.rng), SuggestionSource::Random)
    }

    pub fn mark_running(&mut self, trial: usize) -> Result<(), TunerError> {
        let t = self.trials.get_mut(trial).ok_or(TunerError::UnknownTrial(trial))?;
        if t.state != TrialState::Suggested {
            return Err(TunerError::DoubleReport(trial));
        }
        t.state = TrialState::Running;
        Ok(())
    }

    /// Records a finished (`Ok`) or failed (`Err`) trial.
    pub fn report_result(&mut self, trial: usize, outcome: Result<Loss, String>) -> Result<(), TunerError> {
        let t = self.trials.get_mut(trial).ok_or(TunerError::UnknownTrial(trial))?;
        if t.state != TrialState::Running {
            return Err(TunerError::DoubleReport(trial));
        }
        let s = &mut self.stats[t.pipeline];
        match outcome {
            Ok(loss) if loss.value.is_finite() => {
                t.state = TrialState::Finished;
                t.loss = Some(loss);
                s.finished += 1;
                s.consecutive_failures = 0;
                s.best = Some(s.best.map_or(loss.value, |b| b.min(loss.value)));
            }
            Ok(loss) => {
                t.state = TrialState::Failed;
                t.error = Some(format!("non-finite loss {}", loss.value));
                s.failed += 1;
                s.consecutive_failures += 1;
            }
            Err(e) => {
                t.state = TrialState::Failed;
                t.error = Some(e);
                s.failed += 1;
                s.consecutive_failures += 1;
            }
        }
        if s.consecutive_failures >= QUARANTINE_AFTER && !s.quarantined {
            log::warn!("pipeline {} quarantined after {} consecutive failures", self.arms[t.pipeline].id, QUARANTINE_AFTER);
            s.quarantined = true;
        }
        Ok(())
    }

    pub fn event(&self, trial: usize) -> TrialEvent {
        let t = &self.trials[trial];
        TrialEvent {
            trial: t.id,
            pipeline: self.arms[t.pipeline].id.clone(),
            state: t.state,
            config: t.config.clone(),
            source: (t.state == TrialState::Suggested).then_some(t.source),
            loss: t.loss,
            error: t.error.clone(),
        }
    }

    /// The pipeline with the most post-gate selections (ties: best reward,
    /// then smallest index).
    pub fn most_exploited(&self) -> usize {
        let mut best = 0;
        for (i, s) in self.stats.iter().enumerate() {
            let b = &self.stats[best];
            let r = |x: &ArmStats| x.best.unwrap_or(f64::INFINITY);
            if s.post_gate_selections > b.post_gate_selections
                || (s.post_gate_selections == b.post_gate_selections && r(s) < r(b))
            {
                best = i;
            }
        }
        best
    }
}

/// Uniform per domain; log domains are uniform in log space.
pub fn suggest_random<R: Rng + ?Sized>(space: &HpSpace, rng: &mut R) -> HpConfig {
    space.sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    pub trial: usize,
    pub pipeline: String,
    pub config: HpConfig,
    pub loss: Loss,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Leaderboard {
    pub entries: Vec<LeaderboardEntry>,
}

impl Leaderboard {
    /// Finished trials ordered by loss, then log loss, then trial id.
    pub fn from_state(state: &TunerState) -> Self {
        let mut finished: Vec<&Trial> = state.trials.iter().filter(|t| t.state == TrialState::Finished).collect();
        finished.sort_by(|a, b| {
            let (la, lb) = (a.loss.expect("finished"), b.loss.expect("finished"));
            la.value
                .total_cmp(&lb.value)
                .then(la.logloss.unwrap_or(0.0).total_cmp(&lb.logloss.unwrap_or(0.0)))
                .then(a.id.cmp(&b.id))
        });
        Self {
            entries: finished
                .into_iter()
                .enumerate()
                .map(|(rank, t)| LeaderboardEntry {
                    rank: rank + 1,
                    trial: t.id,
                    pipeline: state.arms[t.pipeline].id.clone(),
                    config: t.config.clone(),
                    loss: t.loss.expect("finished"),
                    model_path: None,
                })
                .collect(),
        }
    }

    pub fn best(&self) -> Option<&LeaderboardEntry> {
        self.entries.first()
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("{:>4}  {:>5}  {:<24}  {:>12}  config\n", "rank", "trial", "pipeline", "loss");
        for e in &self.entries {
            out.push_str(&format!(
                "{:>4}  {:>5}  {:<24}  {:>12.6}  {}\n",
                e.rank, e.trial, e.pipeline, e.loss.value, e.config
            ));
        }
        out
    }
}

/// Executes one trial: trains pipeline `pipeline` with `config` and returns
/// its validation loss.
pub trait TrialRunner: Sync {
    fn run_trial(&self, pipeline: usize, config: &HpConfig, seed: u64) -> Result<Loss, String>;
}

impl<F> TrialRunner for F
where
    F: Fn(usize, &HpConfig, u64) -> Result<Loss, String> + Sync,
{
    fn run_trial(&self, pipeline: usize, config: &HpConfig, seed: u64) -> Result<Loss, String> {
        self(pipeline, config, seed)
    }
}

pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add((trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn emit(log: &mut Option<&mut dyn Write>, event: &TrialEvent) {
    if let Some(w) = log.as_mut() {
        let line = serde_json::to_string(event).expect("trial events serialize");
        if let Err(e) = writeln!(w, "{line}") {
            log::warn!("trial log write failed: {e}");
        }
    }
}

/// Runs the bandit to completion. The scheduler is the only writer of the
/// state; up to `parallelism` workers train concurrently and report back
/// over a channel. With `parallelism == 1` the trial sequence is fully
/// determined by the seed.
pub fn run<R: TrialRunner>(
    arms: Vec<Arm>,
    cfg: &TunerConfig,
    runner: &R,
    mut log: Option<&mut dyn Write>,
) -> Result<(Leaderboard, TunerState), (TunerError, Box<TunerState>)> {
    let mut state = TunerState::new(arms, cfg.seed);
    if let Err(e) = cfg.validate(state.arms.len()) {
        return Err((e, Box::new(state)));
    }
    let start = Instant::now();
    let deadline = cfg.max_runtime.map(|s| start + Duration::from_secs_f64(s));
    let out_of_time = || deadline.is_some_and(|d| Instant::now() >= d);

    let (job_tx, job_rx) = crossbeam_channel::unbounded::<(usize, usize, HpConfig, u64)>();
    let (res_tx, res_rx) = crossbeam_channel::unbounded::<(usize, Result<Loss, String>)>();
    std::thread::scope(|scope| {
        let workers = if cfg.parallelism > 1 { cfg.parallelism } else { 0 };
        for _ in 0..workers {
            let job_rx = job_rx.clone();
            let res_tx = res_tx.clone();
            scope.spawn(move || {
                for (trial, pipeline, config, seed) in job_rx {
                    let outcome = runner.run_trial(pipeline, &config, seed);
                    if res_tx.send((trial, outcome)).is_err() {
                        break;
                    }
                }
            });
        }
        let mut in_flight = 0usize;
        loop {
            while in_flight < cfg.parallelism && !out_of_time() {
                let Ok((trial, pipeline, config)) = state.next_action(cfg) else { break };
                emit(&mut log, &state.event(trial));
                state.mark_running(trial).expect("fresh trial");
                emit(&mut log, &state.event(trial));
                let seed = trial_seed(cfg.seed, trial);
                if workers == 0 {
                    let outcome = runner.run_trial(pipeline, &config, seed);
                    state.report_result(trial, outcome).expect("running trial");
                    emit(&mut log, &state.event(trial));
                } else {
                    job_tx.send((trial, pipeline, config, seed)).expect("workers alive");
                    in_flight += 1;
                }
            }
            if in_flight == 0 {
                break;
            }
            let (trial, outcome) = res_rx.recv().expect("workers alive");
            in_flight -= 1;
            state.report_result(trial, outcome).expect("running trial");
            emit(&mut log, &state.event(trial));
        }
        drop(job_tx);
    });
    let board = Leaderboard::from_state(&state);
    if board.entries.is_empty() {
        return Err((TunerError::AllTrialsFailed, Box::new(state)));
    }
    Ok((board, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Domain, HpParam, HpValue, Metric};

    fn space() -> HpSpace {
        HpSpace {
            tunables: vec![HpParam {
                name: "x".into(),
                domain: Domain::Continuous { lo: 0.0, hi: 1.0, log: false },
            }],
            statics: Default::default(),
        }
    }

    fn arms(n: usize, seeds: usize) -> Vec<Arm> {
        (0..n)
            .map(|i| Arm {
                id: format!("p{i}"),
                space: space(),
                seeds: (0..seeds).map(|s| HpConfig::new().with("x", HpValue::Float(s as f64 / 10.0))).collect(),
            })
            .collect()
    }

    fn loss(v: f64) -> Loss {
        Loss { metric: Metric::Rmse, value: v, logloss: None }
    }

    fn cfg(budget: usize, eps: f64) -> TunerConfig {
        TunerConfig { total_budget: budget, epsilon: eps, parallelism: 1, seed: 1, max_runtime: None }
    }

    #[test]
    fn exploration_fills_lowest_count() {
        let mut st = TunerState::new(arms(3, 5), 0);
        st.stats[0].suggested = 5;
        st.stats[1].suggested = 5;
        st.stats[2].suggested = 4;
        let (_, p, _) = st.next_action(&cfg(100, 0.0)).unwrap();
        assert_eq!((p, st.phase), (2, Phase::Exploration));
    }

    #[test]
    fn greedy_after_gate() {
        let mut st = TunerState::new(arms(3, 5), 0);
        for (i, (s, f, best)) in [(5, 5, Some(0.4)), (5, 2, Some(0.1)), (5, 0, None)].into_iter().enumerate() {
            st.stats[i].suggested = s;
            st.stats[i].finished = f;
            st.stats[i].best = best;
        }
        let (_, p, _) = st.next_action(&cfg(100, 0.0)).unwrap();
        assert_eq!((p, st.phase), (1, Phase::EpsilonGreedy));
        // pipeline 1 has 2 finished trials, so its suggestion must be random
        assert_eq!(st.trials.last().unwrap().source, SuggestionSource::Random);
    }

    #[test]
    fn report_updates_reward_and_quarantine() {
        let mut st = TunerState::new(arms(2, 0), 0);
        let c = cfg(100, 0.0);
        let (t, p, _) = st.next_action(&c).unwrap();
        st.mark_running(t).unwrap();
        st.report_result(t, Ok(loss(0.2))).unwrap();
        assert_eq!(st.report_result(t, Ok(loss(0.1))), Err(TunerError::DoubleReport(t)));
        assert_eq!(st.stats[p].best, Some(0.2));
        let (t2, p2, _) = st.next_action(&c).unwrap();
        assert_ne!(p2, p);
        let (t3, p3, _) = st.next_action(&c).unwrap();
        assert_eq!(p3, p);
        st.mark_running(t3).unwrap();
        st.report_result(t3, Ok(loss(0.1))).unwrap();
        assert_eq!(st.stats[p].best, Some(0.1));
        st.mark_running(t2).unwrap();
        st.report_result(t2, Err("boom".into())).unwrap();
        assert_eq!((st.stats[p2].failed, st.stats[p2].best), (1, None));
        assert_eq!(st.report_result(99, Err("x".into())), Err(TunerError::UnknownTrial(99)));
        for _ in 0..4 {
            st.stats[p2].suggested = 0;
            let (t, q, _) = st.next_action(&c).unwrap();
            assert_eq!(q, p2);
            st.mark_running(t).unwrap();
            st.report_result(t, Err("boom".into())).unwrap();
        }
        assert!(st.stats[p2].quarantined);
    }

    #[test]
    fn single_pipeline_uses_its_seeds() {
        let runner = |_: usize, c: &HpConfig, _: u64| Ok(loss(c.f64("x").unwrap()));
        let (board, st) = run(arms(1, 5), &cfg(5, 0.1), &runner, None).unwrap();
        assert_eq!(st.trials.len(), 5);
        assert!(st.trials.iter().all(|t| t.source == SuggestionSource::ZeroShot));
        assert_eq!(board.entries.len(), 5);
        assert!(board.entries.windows(2).all(|w| w[0].loss.value <= w[1].loss.value));
    }

    #[test]
    fn parallel_run_respects_budget() {
        let runner = |p: usize, c: &HpConfig, _: u64| {
            if p == 0 {
                Err("always fails".to_string())
            } else {
                Ok(loss(p as f64 + c.f64("x").unwrap()))
            }
        };
        let mut c = cfg(40, 0.2);
        c.parallelism = 4;
        let (_, st) = run(arms(3, 2), &c, &runner, None).unwrap();
        assert_eq!(st.trials.len(), 40);
        assert!(st.stats[0].quarantined);
    }

    #[test]
    fn all_failures_reported() {
        let runner = |_: usize, _: &HpConfig, _: u64| Err::<Loss, _>("no".to_string());
        let err = run(arms(2, 0), &cfg(10, 0.1), &runner, None).err().unwrap();
        assert_eq!(err.0, TunerError::AllTrialsFailed);
        assert_eq!(err.1.trials.len(), 10);
    }
}
