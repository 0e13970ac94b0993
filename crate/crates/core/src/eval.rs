//! Outcome-based evaluation: run-level progress, stop and reset signals,
//! and success / progress / invalid-action aggregates.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::control::ValidityCounters;
use crate::kernel::Genre;
use crate::snapshot::{resolve_task_score, EndFieldRule, RuleEffect, ScoreResolver, SnapshotError, StateSnapshot};

pub const DEFAULT_MAX_STEPS: u32 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid task `{task}`: {message}")]
    InvalidTask { task: String, message: String },
    #[error("no records to aggregate")]
    EmptySet,
    #[error("no proposed actions")]
    NoProposals,
    #[error("run is not running")]
    NotRunning,
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

fn default_max_steps() -> u32 {
    DEFAULT_MAX_STEPS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub game_id: String,
    pub instruction: String,
    pub start_score: f64,
    pub target_score: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
    pub score_resolver: ScoreResolver,
    #[serde(default)]
    pub end_field_rules: Vec<EndFieldRule>,
    #[serde(default)]
    pub continue_on_fail: bool,
    pub genre: Genre,
    pub curriculum_level: u8,
    /// Base seed; repeat `r` plays `mix(seed, r)`.
    #[serde(default)]
    pub seed: u64,
    /// Session parameters passed to the game.
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<String>,
}

impl TaskSpec {
    pub fn check(&self) -> Result<(), EvalError> {
        let bad = |message: String| EvalError::InvalidTask {
            task: format!("{}/{}", self.game_id, self.task_id),
            message,
        };
        if self.target_score.partial_cmp(&self.start_score) != Some(std::cmp::Ordering::Greater) {
            return Err(bad(format!(
                "target {} must exceed start {}",
                self.target_score, self.start_score
            )));
        }
        if self.max_steps == 0 {
            return Err(bad("max_steps must be at least 1".into()));
        }
        if !(1..=5).contains(&self.curriculum_level) {
            return Err(bad(format!("curriculum level {} outside 1..=5", self.curriculum_level)));
        }
        self.score_resolver.check().map_err(|e| bad(e.to_string()))
    }
}

/// Clipped normalized progress. Callers guarantee `target > start`.
pub fn compute_progress(q_max: f64, start: f64, target: f64) -> f64 {
    ((q_max - start) / (target - start)).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Success,
    Fail,
    BudgetExhausted,
    /// Resolver misconfiguration; excluded from aggregates.
    Aborted,
}

impl RunStatus {
    pub fn is_finished(self) -> bool {
        self != RunStatus::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::Success => "success",
            RunStatus::Fail => "fail",
            RunStatus::BudgetExhausted => "budget_exhausted",
            RunStatus::Aborted => "aborted",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopAction {
    Continue,
    ResetEpisode,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Target,
    Terminal,
    Budget,
    EndField,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopDecision {
    pub action: StopAction,
    pub final_status: Option<RunStatus>,
    pub triggered_by: Trigger,
}

impl StopDecision {
    pub fn proceed() -> Self {
        Self {
            action: StopAction::Continue,
            final_status: None,
            triggered_by: Trigger::None,
        }
    }

    fn stop(status: RunStatus, by: Trigger) -> Self {
        Self {
            action: StopAction::Stop,
            final_status: Some(status),
            triggered_by: by,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub task_id: String,
    pub game_id: String,
    pub profile_id: String,
    pub mode: String,
    pub genre: Genre,
    pub curriculum_level: u8,
    pub seed: u64,
    pub repeat: u32,
    pub start_score: f64,
    pub target_score: f64,
    pub max_steps: u32,
    pub continue_on_fail: bool,
    /// Task score after each step.
    pub scores: Vec<f64>,
    /// Step indices (0-based) at which each episode began.
    pub episode_starts: Vec<u32>,
    /// Best score within the current episode.
    pub episode_best: Option<f64>,
    pub best_score: Option<f64>,
    pub run_progress: f64,
    pub status: RunStatus,
    pub target_reached: bool,
    pub steps_used: u32,
    pub validity: ValidityCounters,
    pub latency_ms: Vec<u64>,
    /// Simulated seconds per executed step (latency plus execution window).
    pub step_seconds: Vec<f64>,
    pub input_tokens: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl RunRecord {
    pub fn new(run_id: impl Into<String>, task: &TaskSpec, profile_id: impl Into<String>, seed: u64) -> Self {
        Self {
            run_id: run_id.into(),
            task_id: task.task_id.clone(),
            game_id: task.game_id.clone(),
            profile_id: profile_id.into(),
            mode: "paused".into(),
            genre: task.genre,
            curriculum_level: task.curriculum_level,
            seed,
            repeat: 0,
            start_score: task.start_score,
            target_score: task.target_score,
            max_steps: task.max_steps,
            continue_on_fail: task.continue_on_fail,
            scores: Vec::new(),
            episode_starts: vec![0],
            episode_best: None,
            best_score: None,
            run_progress: 0.0,
            status: RunStatus::Running,
            target_reached: false,
            steps_used: 0,
            validity: ValidityCounters::default(),
            latency_ms: Vec::new(),
            step_seconds: Vec::new(),
            input_tokens: Vec::new(),
            diagnostic: None,
        }
    }

    pub fn episodes(&self) -> usize {
        self.episode_starts.len()
    }

    pub fn is_success(&self) -> bool {
        self.status == RunStatus::Success
    }

    /// Ends the run with an excluded status and a diagnostic.
    pub fn abort(&mut self, message: impl Into<String>) {
        self.status = RunStatus::Aborted;
        self.diagnostic = Some(message.into());
    }

    /// Closes the run early (endpoint failure and similar), keeping the
    /// progress reached so far.
    pub fn finish_early(&mut self, message: impl Into<String>) {
        self.status = if self.target_reached { RunStatus::Success } else { RunStatus::Fail };
        self.diagnostic = Some(message.into());
    }

    fn record_score(&mut self, q: f64) {
        self.scores.push(q);
        self.episode_best = Some(self.episode_best.map_or(q, |b| b.max(q)));
        self.best_score = Some(self.best_score.map_or(q, |b| b.max(q)));
        let p = compute_progress(self.best_score.unwrap_or(self.start_score), self.start_score, self.target_score);
        self.run_progress = self.run_progress.max(p);
    }

    /// Starts a new episode at the next step; the run-level best survives.
    pub fn begin_episode(&mut self) {
        self.episode_best = None;
        self.episode_starts.push(self.steps_used);
    }

    fn finish(&mut self, status: RunStatus) {
        self.status = status;
        if status == RunStatus::Success {
            self.run_progress = 1.0;
        }
    }
}

/// Folds the post-action snapshot of step `step` (1-based) into the record
/// and decides what the coordinator does next.
///
/// Precedence: target, then a success end-field, then terminal, then a
/// failing end-field, then budget.
pub fn update_on_snapshot(
    rec: &mut RunRecord,
    task: &TaskSpec,
    s: &StateSnapshot,
    step: u32,
) -> Result<StopDecision, EvalError> {
    if rec.status != RunStatus::Running {
        return Err(EvalError::NotRunning);
    }
    let q = match resolve_task_score(s, &task.score_resolver) {
        Ok(q) => q,
        Err(e) => {
            rec.abort(format!("score resolution failed at step {step}: {e}"));
            return Err(e.into());
        }
    };
    rec.steps_used = step;
    rec.record_score(q);
    if q >= task.target_score {
        rec.target_reached = true;
    }
    let mut success_rule = false;
    let mut fail_rule = false;
    for rule in &task.end_field_rules {
        let fired = match rule.fires(s) {
            Ok(f) => f,
            Err(e) => {
                rec.abort(format!("end-field rule failed at step {step}: {e}"));
                return Err(e.into());
            }
        };
        if fired {
            match rule.effect {
                RuleEffect::StopSuccess => success_rule = true,
                RuleEffect::StopFail => fail_rule = true,
            }
        }
    }
    let failed_terminal = s.terminal.is_terminal && s.terminal.outcome.is_none_or(|o| o.is_failure());
    let budget_left = step < task.max_steps;

    let decision = if rec.target_reached {
        StopDecision::stop(RunStatus::Success, Trigger::Target)
    } else if success_rule {
        rec.target_reached = true;
        StopDecision::stop(RunStatus::Success, Trigger::EndField)
    } else if s.terminal.is_terminal {
        if failed_terminal && task.continue_on_fail && budget_left {
            StopDecision {
                action: StopAction::ResetEpisode,
                final_status: None,
                triggered_by: Trigger::Terminal,
            }
        } else if failed_terminal && task.continue_on_fail {
            StopDecision::stop(RunStatus::BudgetExhausted, Trigger::Budget)
        } else {
            StopDecision::stop(RunStatus::Fail, Trigger::Terminal)
        }
    } else if fail_rule {
        StopDecision::stop(RunStatus::Fail, Trigger::EndField)
    } else if !budget_left {
        StopDecision::stop(RunStatus::BudgetExhausted, Trigger::Budget)
    } else {
        StopDecision::proceed()
    };
    if let Some(status) = decision.final_status {
        rec.finish(status);
    }
    Ok(decision)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sr: f64,
    pub pg: f64,
    pub n: usize,
}

/// Mean success indicator and mean progress over finished, non-aborted
/// records.
pub fn aggregate_metrics<'a, I>(records: I) -> Result<Aggregate, EvalError>
where
    I: IntoIterator<Item = &'a RunRecord>,
{
    let mut n = 0usize;
    let mut successes = 0usize;
    let mut progress = 0.0;
    for r in records {
        if r.status == RunStatus::Aborted {
            continue;
        }
        n += 1;
        successes += usize::from(r.is_success());
        progress += r.run_progress;
    }
    if n == 0 {
        return Err(EvalError::EmptySet);
    }
    Ok(Aggregate {
        sr: successes as f64 / n as f64,
        pg: progress / n as f64,
        n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvalidRates {
    pub iar: f64,
    pub ntc_rate: f64,
    pub oos_rate: f64,
}

pub fn compute_iar(c: &ValidityCounters) -> Result<InvalidRates, EvalError> {
    if c.proposed == 0 {
        return Err(EvalError::NoProposals);
    }
    let p = c.proposed as f64;
    let ntc_rate = c.ntc as f64 / p;
    let oos_rate = c.oos as f64 / p;
    // Summing the two rates keeps the decomposition exact in floating point;
    // it equals 1 - valid/proposed up to rounding.
    Ok(InvalidRates {
        iar: ntc_rate + oos_rate,
        ntc_rate,
        oos_rate,
    })
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}
