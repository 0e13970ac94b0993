//! Headless, seeded game sessions implementing the state contract.

pub mod games;
pub mod raster;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::control::{AtomicEvent, MouseButton, RoleControls};
use crate::rng::{mix, SplitMix64, SEED_MASK};
use crate::semantic::SemanticControlMap;
use crate::snapshot::{GameState, LifecycleStatus, StateSnapshot, TerminalInfo};

pub use raster::{Canvas, Observation};

/// Virtual wall-clock origin. Snapshot timestamps are derived from simulated
/// time so that identical schedules produce identical documents.
pub const EPOCH_MS: u64 = 1_760_000_000_000;
pub const DEFAULT_LOADING_TICKS: u32 = 3;
pub const DEFAULT_TICK_MS: u64 = 100;
pub const DEFAULT_WINDOW_MS: u64 = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("session is not actionable in status {0}")]
    NotActionable(LifecycleStatus),
    #[error("cannot {op} from status {from}")]
    InvalidTransition { from: LifecycleStatus, op: &'static str },
    #[error("unknown game `{0}`")]
    UnknownGame(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Genre {
    Arcade,
    Platformer,
    Puzzle,
    Runner,
    Simulation,
}

impl Genre {
    pub const ALL: [Genre; 5] = [
        Genre::Arcade,
        Genre::Platformer,
        Genre::Puzzle,
        Genre::Runner,
        Genre::Simulation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Genre::Arcade => "arcade",
            Genre::Platformer => "platformer",
            Genre::Puzzle => "puzzle",
            Genre::Runner => "runner",
            Genre::Simulation => "simulation",
        }
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoleDefinition {
    pub name: String,
    /// Shared role description.
    pub prompt: String,
    /// Textual control specification shown to computer-use agents.
    pub controls_prompt: String,
    pub controls: RoleControls,
    pub semantic: SemanticControlMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameDefinition {
    pub game_id: String,
    pub title: String,
    pub genre: Genre,
    pub curriculum_level: u8,
    pub tick_period_ms: u64,
    pub loading_ticks: u32,
    /// Simulated time granted to each executed action.
    pub execution_window_ms: u64,
    pub rules_text: String,
    pub roles: Vec<RoleDefinition>,
}

impl GameDefinition {
    pub fn check(&self) -> Result<(), KernelError> {
        if self.tick_period_ms == 0 {
            return Err(KernelError::InvalidConfig(format!("{}: tick_period must be > 0", self.game_id)));
        }
        if self.roles.is_empty() {
            return Err(KernelError::InvalidConfig(format!("{}: needs at least one role", self.game_id)));
        }
        if !(1..=5).contains(&self.curriculum_level) {
            return Err(KernelError::InvalidConfig(format!(
                "{}: curriculum level {} outside 1..=5",
                self.game_id, self.curriculum_level
            )));
        }
        Ok(())
    }

    pub fn role(&self, name: Option<&str>) -> Option<&RoleDefinition> {
        match name {
            None => self.roles.first(),
            Some(n) => self.roles.iter().find(|r| r.name == n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub seed: u64,
    #[serde(default = "unit_speed")]
    pub speed: f64,
    #[serde(default)]
    pub params: Map<String, Value>,
}

fn unit_speed() -> f64 {
    1.0
}

impl SessionConfig {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            speed: 1.0,
            params: Map::new(),
        }
    }
}

/// Game-specific dynamics behind a session. Every stochastic draw goes
/// through the session's generator.
pub trait GameLogic: Send + Sync {
    fn key_down(&mut self, _key: &str, _rng: &mut SplitMix64) {}
    fn key_up(&mut self, _key: &str) {}
    fn click(&mut self, _x: i32, _y: i32, _button: MouseButton, _rng: &mut SplitMix64) {}
    fn scroll(&mut self, _amount: i32) {}
    /// One simulated tick while playing; `held` lists keys currently down.
    fn tick(&mut self, _held: &BTreeSet<String>, _rng: &mut SplitMix64) {}
    fn outcome(&self) -> Option<TerminalInfo>;
    fn game_state(&self) -> GameState;
    fn metrics(&self) -> BTreeMap<String, f64>;
    fn raw(&self) -> Map<String, Value>;
    fn text_grid(&self) -> String;
    fn frame_size(&self) -> (u32, u32);
    fn draw(&self, canvas: &mut Canvas);
    fn clone_box(&self) -> Box<dyn GameLogic>;
}

impl Clone for Box<dyn GameLogic> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// One live game: lifecycle, clocks, input state, and dynamics.
#[derive(Clone)]
pub struct Session {
    definition: Arc<GameDefinition>,
    seed: u64,
    speed: f64,
    params: Map<String, Value>,
    status: LifecycleStatus,
    loading_left: u32,
    loading_time: f64,
    game_time: f64,
    ticks: u64,
    wall_ms: u64,
    rng: SplitMix64,
    episode_index: u64,
    episode_seed: u64,
    pointer: (i32, i32),
    pressed: Option<(MouseButton, (i32, i32))>,
    held: BTreeSet<String>,
    logic: Box<dyn GameLogic>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("game_id", &self.definition.game_id)
            .field("seed", &self.seed)
            .field("status", &self.status)
            .field("episode_index", &self.episode_index)
            .field("game_time_ms", &self.game_time_ms())
            .finish()
    }
}

impl Session {
    pub fn init(definition: Arc<GameDefinition>, config: &SessionConfig) -> Result<Self, KernelError> {
        definition.check()?;
        if !(config.speed.is_finite() && config.speed > 0.0) {
            return Err(KernelError::InvalidConfig(format!("speed must be positive, got {}", config.speed)));
        }
        if config.seed > SEED_MASK {
            return Err(KernelError::InvalidConfig(format!("seed {} exceeds 2^53 - 1", config.seed)));
        }
        let mut rng = SplitMix64::new(config.seed);
        let logic = games::build(&definition.game_id, &config.params, &mut rng)?;
        let mut s = Self {
            seed: config.seed,
            speed: config.speed,
            params: config.params.clone(),
            status: LifecycleStatus::Loading,
            loading_left: definition.loading_ticks,
            loading_time: 0.0,
            game_time: 0.0,
            ticks: 0,
            wall_ms: 0,
            rng,
            episode_index: 0,
            episode_seed: config.seed,
            pointer: (0, 0),
            pressed: None,
            held: BTreeSet::new(),
            logic,
            definition,
        };
        s.finish_loading_if_done();
        Ok(s)
    }

    pub fn definition(&self) -> &Arc<GameDefinition> {
        &self.definition
    }

    pub fn status(&self) -> LifecycleStatus {
        self.status
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn episode_index(&self) -> u64 {
        self.episode_index
    }

    pub fn episode_seed(&self) -> u64 {
        self.episode_seed
    }

    pub fn game_time_ms(&self) -> u64 {
        self.game_time.floor() as u64
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn rng_state(&self) -> u64 {
        self.rng.state()
    }

    pub fn held_keys(&self) -> &BTreeSet<String> {
        &self.held
    }

    fn finish_loading_if_done(&mut self) {
        if self.status == LifecycleStatus::Loading && self.loading_left == 0 {
            self.status = LifecycleStatus::Ready;
        }
    }

    fn check_terminal(&mut self) -> bool {
        if self.status == LifecycleStatus::Playing && self.logic.outcome().is_some() {
            self.status = LifecycleStatus::Terminal;
            self.held.clear();
            self.pressed = None;
        }
        self.status == LifecycleStatus::Terminal
    }

    fn start_if_ready(&mut self) {
        if self.status == LifecycleStatus::Ready {
            self.status = LifecycleStatus::Playing;
        }
    }

    pub fn get_state(&self) -> StateSnapshot {
        let terminal = match self.status {
            LifecycleStatus::Terminal => self.logic.outcome().unwrap_or_else(TerminalInfo::running),
            _ => TerminalInfo::running(),
        };
        let mut raw = Map::new();
        raw.insert("episode".into(), Value::from(self.episode_index));
        raw.insert("episode_seed".into(), Value::from(self.episode_seed));
        raw.extend(self.logic.raw());
        StateSnapshot {
            game_id: self.definition.game_id.clone(),
            seed: self.seed,
            timestamp_ms: EPOCH_MS + self.wall_ms,
            game_time_ms: self.game_time_ms(),
            status: self.status,
            terminal,
            game_state: self.logic.game_state(),
            metrics: self.logic.metrics(),
            raw,
        }
    }

    /// Consumes events in order. Waits advance the clock; the first key or
    /// button press on a ready session starts play.
    pub fn apply_events(&mut self, events: &[AtomicEvent]) -> Result<(), KernelError> {
        if !self.status.is_actionable() {
            return Err(KernelError::NotActionable(self.status));
        }
        for ev in events {
            match ev {
                AtomicEvent::KeyDown { key } => {
                    self.start_if_ready();
                    self.held.insert(key.clone());
                    self.logic.key_down(key, &mut self.rng);
                }
                AtomicEvent::KeyUp { key } => {
                    self.held.remove(key);
                    self.logic.key_up(key);
                }
                AtomicEvent::MouseMove { x, y } => self.pointer = (*x, *y),
                AtomicEvent::MouseDown { button } => {
                    self.start_if_ready();
                    self.pressed = Some((*button, self.pointer));
                }
                AtomicEvent::MouseUp { button } => {
                    if let Some((b, at)) = self.pressed.take() {
                        // A press and release on the same spot is a click;
                        // drags are not interpreted by any bundled game.
                        if b == *button && at == self.pointer {
                            self.logic.click(at.0, at.1, b, &mut self.rng);
                        }
                    }
                }
                AtomicEvent::Scroll { amount } => {
                    if self.status == LifecycleStatus::Playing {
                        self.logic.scroll(*amount);
                    }
                }
                AtomicEvent::Wait { duration_ms } => {
                    self.advance(*duration_ms);
                }
                AtomicEvent::Idle => {}
            }
            if self.check_terminal() {
                break;
            }
        }
        Ok(())
    }

    /// Simulates `dt` milliseconds of wall time; returns the ticks run.
    pub fn advance(&mut self, dt_ms: u64) -> u64 {
        self.wall_ms += dt_ms;
        let tick = self.definition.tick_period_ms as f64;
        let scaled = dt_ms as f64 * self.speed;
        match self.status {
            LifecycleStatus::Loading => {
                self.loading_time += scaled;
                while self.loading_left > 0 && self.loading_time >= tick {
                    self.loading_time -= tick;
                    self.loading_left -= 1;
                }
                self.finish_loading_if_done();
                0
            }
            LifecycleStatus::Playing => {
                self.game_time += scaled;
                let due = (self.game_time / tick).floor() as u64;
                let start = self.ticks;
                while self.ticks < due {
                    self.logic.tick(&self.held, &mut self.rng);
                    self.ticks += 1;
                    if self.check_terminal() {
                        self.game_time = self.ticks as f64 * tick;
                        break;
                    }
                }
                self.ticks - start
            }
            _ => 0,
        }
    }

    pub fn pause(&mut self) -> Result<(), KernelError> {
        if self.status != LifecycleStatus::Playing {
            return Err(KernelError::InvalidTransition {
                from: self.status,
                op: "pause",
            });
        }
        self.status = LifecycleStatus::Paused;
        Ok(())
    }

    pub fn resume(&mut self) -> Result<(), KernelError> {
        if self.status != LifecycleStatus::Paused {
            return Err(KernelError::InvalidTransition {
                from: self.status,
                op: "resume",
            });
        }
        self.status = LifecycleStatus::Playing;
        Ok(())
    }

    /// Starts a new episode. Without `reseed`, episode `k` draws from
    /// `mix(seed, k)`.
    pub fn reset(&mut self, reseed: Option<u64>) -> Result<(), KernelError> {
        let index = self.episode_index + 1;
        let episode_seed = reseed.map(|s| s & SEED_MASK).unwrap_or_else(|| mix(self.seed, index));
        let mut rng = SplitMix64::new(episode_seed);
        self.logic = games::build(&self.definition.game_id, &self.params, &mut rng)?;
        self.rng = rng;
        self.episode_index = index;
        self.episode_seed = episode_seed;
        self.status = LifecycleStatus::Loading;
        self.loading_left = self.definition.loading_ticks;
        self.loading_time = 0.0;
        self.game_time = 0.0;
        self.ticks = 0;
        self.pressed = None;
        self.held.clear();
        self.finish_loading_if_done();
        Ok(())
    }

    pub fn render_observation(&self) -> Observation {
        let (w, h) = self.logic.frame_size();
        let mut canvas = Canvas::new(w, h);
        self.logic.draw(&mut canvas);
        Observation {
            text_grid: self.logic.text_grid(),
            frame: canvas,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("readiness timeout after {polls} polls (status {status})")]
pub struct ReadinessTimeout {
    pub polls: u32,
    pub status: LifecycleStatus,
}

/// Polls the session, advancing one tick per poll, until it is actionable.
/// Returns the number of polls that advanced time.
pub fn readiness_wait(s: &mut Session, max_polls: u32) -> Result<u32, ReadinessTimeout> {
    let tick = s.definition.tick_period_ms;
    let mut polls = 0;
    loop {
        if s.get_state().status.is_actionable() {
            return Ok(polls);
        }
        if polls >= max_polls {
            return Err(ReadinessTimeout {
                polls,
                status: s.status,
            });
        }
        s.advance(tick);
        polls += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Registry;

    fn session(game: &str, seed: u64) -> Session {
        let reg = Registry::bundled();
        Session::init(reg.game(game).unwrap(), &SessionConfig::seeded(seed)).unwrap()
    }

    fn press(key: &str) -> Vec<AtomicEvent> {
        vec![
            AtomicEvent::KeyDown { key: key.into() },
            AtomicEvent::Wait { duration_ms: 200 },
            AtomicEvent::KeyUp { key: key.into() },
        ]
    }

    #[test]
    fn loading_takes_three_polls() {
        let mut s = session("g2048", 1);
        assert_eq!(s.status(), LifecycleStatus::Loading);
        assert_eq!(readiness_wait(&mut s, 10).unwrap(), 3);
        assert_eq!(s.status(), LifecycleStatus::Ready);
        assert_eq!(readiness_wait(&mut s, 10).unwrap(), 0);
    }

    #[test]
    fn zero_speed_rejected() {
        let reg = Registry::bundled();
        let cfg = SessionConfig {
            speed: 0.0,
            ..SessionConfig::seeded(1)
        };
        assert!(matches!(
            Session::init(reg.game("g2048").unwrap(), &cfg),
            Err(KernelError::InvalidConfig(_))
        ));
    }

    #[test]
    fn first_input_starts_play_and_pause_freezes() {
        let mut s = session("lane-runner", 7);
        readiness_wait(&mut s, 10).unwrap();
        s.apply_events(&press("ArrowLeft")).unwrap();
        assert_eq!(s.status(), LifecycleStatus::Playing);
        let t = s.game_time_ms();
        s.pause().unwrap();
        let before = s.get_state();
        assert_eq!(s.advance(5000), 0);
        let after = s.get_state();
        assert_eq!(before.game_state, after.game_state);
        assert_eq!(after.game_time_ms, t);
        s.resume().unwrap();
        assert_eq!(s.status(), LifecycleStatus::Playing);
    }

    #[test]
    fn residual_time_is_carried() {
        let mut s = session("lane-runner", 3);
        readiness_wait(&mut s, 10).unwrap();
        s.apply_events(&[AtomicEvent::KeyDown { key: "ArrowLeft".into() }, AtomicEvent::KeyUp { key: "ArrowLeft".into() }])
            .unwrap();
        assert_eq!(s.advance(60), 0);
        assert_eq!(s.advance(60), 1);
        assert_eq!(s.game_time_ms(), 120);
    }

    #[test]
    fn pause_on_terminal_is_invalid() {
        let mut s = session("g2048", 1);
        assert!(matches!(s.pause(), Err(KernelError::InvalidTransition { .. })));
        readiness_wait(&mut s, 10).unwrap();
        assert!(matches!(s.resume(), Err(KernelError::InvalidTransition { .. })));
    }

    #[test]
    fn reset_starts_fresh_episode() {
        let mut s = session("snake", 11);
        readiness_wait(&mut s, 10).unwrap();
        s.apply_events(&press("ArrowUp")).unwrap();
        s.advance(1000);
        s.reset(None).unwrap();
        assert_eq!(s.episode_index(), 1);
        assert_eq!(s.episode_seed(), mix(11, 1));
        assert_eq!(s.game_time_ms(), 0);
        assert_eq!(s.status(), LifecycleStatus::Loading);
        readiness_wait(&mut s, 10).unwrap();
        assert_eq!(s.get_state().game_state.score, 0.0);
    }
}
