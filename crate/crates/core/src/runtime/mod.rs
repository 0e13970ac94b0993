//! The per-run observation, decision, execution, and evaluation loop.

pub mod rundir;
pub mod service;

use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::prompt::ObservationRef;
use crate::agent::{
    assemble_prompt, build_agent, Agent, AgentError, AgentProfile, Decision, DecisionInput, ImageRef, MemoryRound,
    MemoryStore, PromptTemplates,
};
use crate::canonical::{chain_hash, chain_root, sha256_hex};
use crate::control::{lower_to_atomic_events, AtomicEvent, NormalizedAction, ValidityVerdict};
use crate::eval::{update_on_snapshot, EvalError, RunRecord, StopAction, StopDecision, TaskSpec};
use crate::kernel::{readiness_wait, GameDefinition, KernelError, Observation, ReadinessTimeout, Session, SessionConfig};
use crate::parse::{parse_output, Classification, ParseOutcome};
use crate::pipeline::{interpret, InterfaceKind};
use crate::registry::{Registry, RegistryError};
use crate::snapshot::{resolve_task_score, serialize_snapshot, LifecycleStatus, StateSnapshot};
use rundir::RunDir;

pub const READINESS_POLLS: u32 = 50;
/// Consecutive endpoint failures after which a run ends with its current
/// progress.
pub const MAX_ENDPOINT_FAILURES: u32 = 5;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Readiness(#[from] ReadinessTimeout),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("run directory: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed preset `{0}`: expected <game_id>+<task_id>+<model_spec>")]
    MalformedPreset(String),
    #[error("run already finished with status {0}")]
    Finished(&'static str),
    #[error("service: {0}")]
    Service(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Paused,
    #[serde(alias = "rt")]
    RealTime,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Paused => "paused",
            Mode::RealTime => "real_time",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paused" => Ok(Mode::Paused),
            "rt" | "real_time" | "realtime" => Ok(Mode::RealTime),
            other => Err(format!("unknown mode `{other}` (paused|rt)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Preset {
    pub game_id: String,
    pub task_id: String,
    pub model_spec: String,
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}+{}+{}", self.game_id, self.task_id, self.model_spec)
    }
}

/// Splits `<game_id>+<task_id>+<model_spec>` without resolving it.
pub fn split_preset(text: &str) -> Result<Preset, RunError> {
    let parts: Vec<&str> = text.trim().split('+').collect();
    match parts.as_slice() {
        [g, t, m] if !g.is_empty() && !t.is_empty() && !m.is_empty() => Ok(Preset {
            game_id: g.to_string(),
            task_id: t.to_string(),
            model_spec: m.to_string(),
        }),
        _ => Err(RunError::MalformedPreset(text.to_string())),
    }
}

/// Splits and resolves a preset against the registry.
pub fn parse_preset(text: &str, reg: &Registry) -> Result<Preset, RunError> {
    let p = split_preset(text)?;
    let unknown = |kind, id: &str| {
        RunError::Registry(RegistryError::Unknown {
            kind,
            id: id.to_string(),
        })
    };
    if reg.game(&p.game_id).is_none() {
        return Err(unknown("game", &p.game_id));
    }
    if reg.task(&p.game_id, &p.task_id).is_none() {
        return Err(unknown("task", &p.task_id));
    }
    if reg.profile(&p.model_spec).is_none() {
        return Err(unknown("model", &p.model_spec));
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub preset: Preset,
    pub mode: Mode,
    pub port: u16,
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<PathBuf>,
    #[serde(default)]
    pub log_frames: bool,
    /// Game seed for this run.
    pub seed: u64,
    #[serde(default)]
    pub repeat: u32,
    /// Replaces each decision's measured latency; used for reproducible
    /// real-time runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injected_latency_ms: Option<u64>,
    /// Overrides the profile's memory depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_rounds: Option<u32>,
}

impl RunConfig {
    pub fn new(preset: Preset, seed: u64) -> Self {
        let run_id = format!("{}__{}__{}__s{}", preset.game_id, preset.task_id, preset.model_spec, seed);
        Self {
            session_id: run_id.clone(),
            run_id,
            preset,
            mode: Mode::Paused,
            port: 0,
            run_dir: None,
            log_frames: false,
            seed,
            repeat: 0,
            injected_latency_ms: None,
            memory_rounds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub step: u32,
    pub episode: u64,
    /// Digest of the observed frame.
    pub observation: String,
    pub prompt_hash: String,
    pub input_tokens: u64,
    pub raw_output: String,
    pub parse: ParseOutcome,
    pub classification: Classification,
    pub verdict: ValidityVerdict,
    pub action: Option<NormalizedAction>,
    pub events: Vec<AtomicEvent>,
    pub latency_ms: u64,
    pub snapshot: StateSnapshot,
    pub score: Option<f64>,
    pub run_progress: f64,
    pub decision: StopDecision,
    /// Running hash over the post-action snapshots of this run.
    pub chain: String,
}

/// What one step executes: a reply to parse, or an already normalized
/// action from the human-play queue.
pub enum StepInput {
    Reply {
        decision: Decision,
        prompt_hash: String,
        input_tokens: u64,
    },
    Direct(NormalizedAction),
}

/// Everything a run owns. Steps are applied one at a time.
pub struct RunState {
    pub cfg: RunConfig,
    pub task: TaskSpec,
    pub profile: AgentProfile,
    pub game: Arc<GameDefinition>,
    templates: PromptTemplates,
    session: Session,
    record: RunRecord,
    memory: MemoryStore,
    chain: String,
    endpoint_failures: u32,
    dir: Option<RunDir>,
}

fn finished_name(rec: &RunRecord) -> &'static str {
    rec.status.as_str()
}

impl RunState {
    pub fn start(reg: &Registry, cfg: RunConfig) -> Result<Self, RunError> {
        let unknown = |kind, id: &str| RegistryError::Unknown {
            kind,
            id: id.to_string(),
        };
        let p = &cfg.preset;
        let game = reg.game(&p.game_id).ok_or_else(|| unknown("game", &p.game_id))?;
        let task = reg.task(&p.game_id, &p.task_id).ok_or_else(|| unknown("task", &p.task_id))?.clone();
        let mut profile = reg.profile(&p.model_spec).ok_or_else(|| unknown("model", &p.model_spec))?.clone();
        if let Some(k) = cfg.memory_rounds {
            profile.memory.memory_rounds = k;
        }
        Self::with_parts(cfg, task, profile, game, reg.templates.clone())
    }

    pub fn with_parts(
        cfg: RunConfig,
        task: TaskSpec,
        profile: AgentProfile,
        game: Arc<GameDefinition>,
        templates: PromptTemplates,
    ) -> Result<Self, RunError> {
        task.check()?;
        let session_cfg = SessionConfig {
            params: task.params.clone(),
            ..SessionConfig::seeded(cfg.seed)
        };
        let mut session = Session::init(game.clone(), &session_cfg)?;
        readiness_wait(&mut session, READINESS_POLLS)?;
        let mut record = RunRecord::new(cfg.run_id.clone(), &task, profile.agent_id.clone(), cfg.seed);
        record.mode = cfg.mode.as_str().to_string();
        record.repeat = cfg.repeat;
        let dir = match &cfg.run_dir {
            Some(path) => Some(RunDir::create(path, &cfg, &task, &profile, &record)?),
            None => None,
        };
        Ok(Self {
            cfg,
            task,
            profile,
            game,
            templates,
            session,
            record,
            memory: MemoryStore::new(),
            chain: chain_root(),
            endpoint_failures: 0,
            dir,
        })
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn memory(&self) -> &crate::agent::MemoryStore {
        &self.memory
    }

    pub fn chain(&self) -> &str {
        &self.chain
    }

    pub fn is_finished(&self) -> bool {
        self.record.status.is_finished()
    }

    pub fn next_step(&self) -> u32 {
        self.record.steps_used + 1
    }

    pub fn observe(&self) -> (StateSnapshot, Observation) {
        (self.session.get_state(), self.session.render_observation())
    }

    fn observation_ref(&self, obs: &Observation, with_png: bool) -> ObservationRef {
        let image = if with_png {
            ImageRef::from_canvas(&obs.frame)
        } else {
            ImageRef {
                digest: sha256_hex(obs.frame.to_ppm()),
                width: obs.frame.width,
                height: obs.frame.height,
                png_base64: String::new(),
            }
        };
        let step = self.next_step();
        ObservationRef {
            step,
            text: format!(
                "Step {step} of {}. The current game screen is attached.\n{}",
                self.task.max_steps, obs.text_grid
            ),
            image: Some(image),
        }
    }

    /// Observation plus prompt for the next decision.
    pub fn prepare(&self, obs: &Observation) -> crate::agent::PromptBundle {
        let observation = self.observation_ref(obs, !self.profile.is_scripted());
        let role = &self.game.roles[0];
        assemble_prompt(
            &self.profile,
            &self.templates,
            &self.game,
            role,
            &self.task.instruction,
            &self.memory,
            observation,
        )
    }

    pub fn pause_for_decision(&mut self) {
        if self.cfg.mode == Mode::Paused && self.session.status() == LifecycleStatus::Playing {
            let _ = self.session.pause();
        }
    }

    pub fn resume_after_decision(&mut self) {
        if self.session.status() == LifecycleStatus::Paused {
            let _ = self.session.resume();
        }
    }

    /// Executes one step and folds its outcome into the record.
    pub fn apply(&mut self, obs: &Observation, input: StepInput) -> Result<TrajectoryEntry, RunError> {
        if self.is_finished() {
            return Err(RunError::Finished(finished_name(&self.record)));
        }
        let role = &self.game.roles[0];
        let step = self.next_step();
        let (parse, interp, raw_output, latency_ms, prompt_hash, input_tokens, reasoning) = match input {
            StepInput::Reply {
                decision,
                prompt_hash,
                input_tokens,
            } => {
                let parse = match &decision.error {
                    Some(e) => ParseOutcome::no_call(format!("decision failed: {e}")),
                    None => parse_output(self.profile.output_format, &decision.text),
                };
                if let Some(e) = &decision.error {
                    tracing::warn!(run = %self.record.run_id, step, error = %e, "decision failed");
                    self.endpoint_failures += 1;
                } else {
                    self.endpoint_failures = 0;
                }
                let interp = interpret(self.profile.interface, &parse, role);
                let reasoning = parse.as_call().and_then(|c| c.reasoning.clone()).unwrap_or_default();
                let latency = self.cfg.injected_latency_ms.unwrap_or(decision.latency_ms);
                (parse, interp, decision.text, latency, prompt_hash, input_tokens, reasoning)
            }
            StepInput::Direct(action) => {
                let call = crate::pipeline::action_call(&action);
                let parse = ParseOutcome::call(call);
                let interp = interpret(InterfaceKind::ComputerUse, &parse, role);
                let raw = crate::canonical::to_canonical_string(&action);
                (parse, interp, raw, 0, String::new(), 0, String::new())
            }
        };

        if self.cfg.mode == Mode::RealTime && latency_ms > 0 {
            self.session.advance(latency_ms);
        }
        let window = self.game.execution_window_ms;
        let mut events = Vec::new();
        let mut used = 0;
        if let Some(a) = &interp.action {
            if self.session.status().is_actionable() {
                events = lower_to_atomic_events(a, &role.controls);
                used = events.iter().map(AtomicEvent::wait_ms).sum::<u64>();
                self.session.apply_events(&events)?;
            }
        }
        if used < window {
            self.session.advance(window - used);
        }

        let snapshot = self.session.get_state();
        self.chain = chain_hash(&self.chain, &serialize_snapshot(&snapshot));
        self.record.validity.record(&interp.verdict);
        self.record.latency_ms.push(latency_ms);
        self.record.step_seconds.push((latency_ms + window.max(used)) as f64 / 1000.0);
        self.record.input_tokens.push(input_tokens);

        let decision = match update_on_snapshot(&mut self.record, &self.task, &snapshot, step) {
            Ok(d) => d,
            Err(e) => {
                if self.record.status.is_finished() {
                    // Aborted by the evaluator: keep the step count honest.
                    self.record.steps_used = step;
                    StopDecision::proceed()
                } else {
                    return Err(e.into());
                }
            }
        };
        let score = resolve_task_score(&snapshot, &self.task.score_resolver).ok();
        if decision.action == StopAction::Continue
            && !self.record.status.is_finished()
            && self.endpoint_failures >= MAX_ENDPOINT_FAILURES
        {
            self.record
                .finish_early(format!("{MAX_ENDPOINT_FAILURES} consecutive endpoint failures"));
        }

        let obs_ref = self.observation_ref(obs, false);
        self.memory.record_round(MemoryRound {
            step,
            user_prompt: obs_ref.text.clone(),
            screenshot: if self.profile.is_scripted() {
                obs_ref.image.clone()
            } else {
                Some(ImageRef::from_canvas(&obs.frame))
            },
            reasoning,
            action: match &interp.action {
                Some(a) => a.describe(),
                None => format!("invalid ({})", interp.verdict.reason),
            },
        });
        let entry = TrajectoryEntry {
            step,
            episode: self.session.episode_index(),
            observation: obs_ref.image.map(|i| i.digest).unwrap_or_default(),
            prompt_hash,
            input_tokens,
            raw_output,
            parse,
            classification: interp.classification,
            verdict: interp.verdict,
            action: interp.action,
            events,
            latency_ms,
            snapshot,
            score,
            run_progress: self.record.run_progress,
            decision,
            chain: self.chain.clone(),
        };
        if let Some(dir) = &mut self.dir {
            dir.append(&entry)?;
            if self.cfg.log_frames {
                dir.write_frame(step, obs)?;
            }
        }
        if decision.action == StopAction::ResetEpisode {
            self.session.reset(None)?;
            readiness_wait(&mut self.session, READINESS_POLLS)?;
            self.record.begin_episode();
        }
        if self.is_finished() {
            self.persist()?;
        }
        Ok(entry)
    }

    pub fn persist(&mut self) -> Result<(), RunError> {
        if let Some(dir) = &mut self.dir {
            dir.write_record(&self.record)?;
        }
        Ok(())
    }

    /// Records a failure outside the step loop and persists the record.
    pub fn abort(&mut self, message: impl Into<String>) -> Result<(), RunError> {
        if !self.is_finished() {
            self.record.abort(message);
        }
        self.persist()
    }

    pub fn into_record(self) -> RunRecord {
        self.record
    }
}

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: RunRecord,
    pub chain: String,
    pub entries: Vec<TrajectoryEntry>,
}

fn lock(m: &Mutex<RunState>) -> MutexGuard<'_, RunState> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Drives a run held behind a lock, releasing it while the agent decides.
/// `hook` sees every entry with the record as it stands after the step.
pub fn run_with_hooks(
    run: &Mutex<RunState>,
    agent: &mut dyn Agent,
    mut hook: impl FnMut(&TrajectoryEntry, &RunRecord),
) -> Result<RunOutput, RunError> {
    let mut entries = Vec::new();
    loop {
        let (snapshot, obs, bundle, step, format, role) = {
            let mut state = lock(run);
            if state.is_finished() {
                break;
            }
            let (snapshot, obs) = state.observe();
            let bundle = state.prepare(&obs);
            state.pause_for_decision();
            let role = state.game.roles[0].clone();
            (snapshot, obs, bundle, state.next_step(), state.profile.output_format, role)
        };
        let decision = agent.decide(&DecisionInput {
            step,
            format,
            snapshot: &snapshot,
            role: &role,
            bundle: &bundle,
        });
        let mut state = lock(run);
        state.resume_after_decision();
        let input = StepInput::Reply {
            decision,
            prompt_hash: bundle.hash(),
            input_tokens: bundle.input_tokens(),
        };
        match state.apply(&obs, input) {
            Ok(e) => {
                hook(&e, &state.record);
                entries.push(e);
            }
            Err(e) => {
                state.abort(e.to_string())?;
                return Err(e);
            }
        }
    }
    let state = lock(run);
    Ok(RunOutput {
        chain: state.chain.clone(),
        record: state.record.clone(),
        entries,
    })
}

/// Drives one run to completion with the given decision source.
pub fn run_with_agent(state: RunState, agent: &mut dyn Agent) -> Result<RunOutput, RunError> {
    run_with_hooks(&Mutex::new(state), agent, |_, _| {})
}

/// Resolves the preset, builds the agent, and runs to completion.
pub fn run_task(reg: &Registry, cfg: RunConfig) -> Result<RunOutput, RunError> {
    let state = RunState::start(reg, cfg)?;
    let mut agent = build_agent(&state.profile, state.cfg.seed)?;
    let out = run_with_agent(state, agent.as_mut())?;
    let r = &out.record;
    tracing::info!(run = %r.run_id, status = r.status.as_str(), progress = r.run_progress, steps = r.steps_used, "run finished");
    Ok(out)
}

/// The same loop without pausing: inference latency advances the game.
pub fn run_task_rt(reg: &Registry, mut cfg: RunConfig) -> Result<RunOutput, RunError> {
    cfg.mode = Mode::RealTime;
    run_task(reg, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::RunStatus;

    fn cfg(preset: &str, seed: u64) -> RunConfig {
        RunConfig::new(split_preset(preset).unwrap(), seed)
    }

    #[test]
    fn preset_shapes() {
        let reg = Registry::bundled();
        assert_eq!(parse_preset("g2048+t01+oracle-2048", &reg).unwrap().task_id, "t01");
        let p = split_preset("1-2048+t01+qwen-like").unwrap();
        assert_eq!(p.game_id, "1-2048");
        assert!(matches!(split_preset("g2048+t01"), Err(RunError::MalformedPreset(_))));
        assert!(matches!(
            parse_preset("g2048+t99+oracle", &reg),
            Err(RunError::Registry(RegistryError::Unknown { kind: "task", .. }))
        ));
    }

    #[test]
    fn oracle_2048_reaches_small_target() {
        let reg = Registry::bundled();
        let out = run_task(&reg, cfg("g2048+t02+oracle-2048", 42)).unwrap();
        assert_eq!(out.record.status, RunStatus::Success);
        assert_eq!(out.record.steps_used as usize, out.entries.len());
        assert_eq!(out.record.validity.proposed, out.entries.len() as u64);
        assert_eq!(out.record.validity.valid, out.record.validity.proposed);
    }

    #[test]
    fn step_accounting_and_contiguous_numbering() {
        let reg = Registry::bundled();
        let out = run_task(&reg, cfg("lane-runner+t05+random", 3)).unwrap();
        for (i, e) in out.entries.iter().enumerate() {
            assert_eq!(e.step as usize, i + 1);
        }
        assert_eq!(out.record.steps_used as usize, out.entries.len());
        assert_eq!(out.chain, out.entries.last().unwrap().chain);
    }
}
