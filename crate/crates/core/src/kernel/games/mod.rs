//! The bundled reference games.

pub mod g2048;
pub mod grid_hop;
pub mod lane_runner;
pub mod mini_mart;
pub mod minesweeper;
pub mod snake;

use serde_json::{Map, Value};

use super::{GameLogic, KernelError};
use crate::control::NormalizedAction;
use crate::rng::SplitMix64;
use crate::snapshot::StateSnapshot;

pub const GAME_IDS: [&str; 6] = ["g2048", "minesweeper", "snake", "lane-runner", "grid-hop", "mini-mart"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn key(self) -> &'static str {
        match self {
            Direction::Up => "ArrowUp",
            Direction::Down => "ArrowDown",
            Direction::Left => "ArrowLeft",
            Direction::Right => "ArrowRight",
        }
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

pub fn direction_of(key: &str) -> Option<Direction> {
    match key {
        "ArrowUp" => Some(Direction::Up),
        "ArrowDown" => Some(Direction::Down),
        "ArrowLeft" => Some(Direction::Left),
        "ArrowRight" => Some(Direction::Right),
        _ => None,
    }
}

pub(crate) fn param_u64(params: &Map<String, Value>, key: &str, default: u64) -> Result<u64, KernelError> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .ok_or_else(|| KernelError::InvalidConfig(format!("param `{key}` must be a non-negative integer"))),
    }
}

pub fn build(
    game_id: &str,
    params: &Map<String, Value>,
    rng: &mut SplitMix64,
) -> Result<Box<dyn GameLogic>, KernelError> {
    Ok(match game_id {
        "g2048" => Box::new(g2048::G2048::new(rng)),
        "minesweeper" => Box::new(minesweeper::Minesweeper::new(params)?),
        "snake" => Box::new(snake::Snake::new(params, rng)?),
        "lane-runner" => Box::new(lane_runner::LaneRunner::new(params, rng)?),
        "grid-hop" => Box::new(grid_hop::GridHop::new(params, rng)?),
        "mini-mart" => Box::new(mini_mart::MiniMart::new(params)?),
        other => return Err(KernelError::UnknownGame(other.to_string())),
    })
}

/// The scripted reference policy for a game, reading only the snapshot.
pub fn oracle_action(s: &StateSnapshot) -> Option<NormalizedAction> {
    Some(match s.game_id.as_str() {
        "g2048" => g2048::oracle(s),
        "minesweeper" => minesweeper::oracle(s),
        "snake" => snake::oracle(s),
        "lane-runner" => lane_runner::oracle(s),
        "grid-hop" => grid_hop::oracle(s),
        "mini-mart" => mini_mart::oracle(s),
        _ => return None,
    })
}

pub(crate) fn press(key: &str) -> NormalizedAction {
    NormalizedAction::PressKey {
        key: key.to_string(),
        duration_ms: None,
    }
}

pub(crate) fn wait() -> NormalizedAction {
    NormalizedAction::Wait { duration_ms: None }
}

/// Reads the full raw map back into a game's state struct.
pub(crate) fn from_raw<T: serde::de::DeserializeOwned>(s: &StateSnapshot) -> Option<T> {
    serde_json::from_value(Value::Object(s.raw.clone())).ok()
}
