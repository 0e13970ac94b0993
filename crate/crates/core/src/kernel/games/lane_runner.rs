use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{from_raw, param_u64, press, wait};
use crate::control::NormalizedAction;
use crate::kernel::raster::{palette, Canvas};
use crate::kernel::{GameLogic, KernelError};
use crate::rng::SplitMix64;
use crate::snapshot::{GameState, LifecycleStatus, StateSnapshot, TerminalInfo, TerminalOutcome};

pub const LANES: u8 = 3;
pub const FIRST_ROW: u64 = 12;
pub const MIN_GAP: i64 = 6;
pub const MAX_GAP: i64 = 10;
/// Ticks a jump or duck stays active.
pub const STANCE_TICKS: u8 = 3;
/// How far ahead rows are exposed in the snapshot.
pub const HORIZON: u64 = 30;
const VIEW_COLS: i32 = 32;
const PLAYER_COL: i32 = 2;
const CELL_PX: i32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleKind {
    /// Blocks its lane outright; switch lanes.
    Wall,
    /// Jump over it.
    Hurdle,
    /// Duck under it.
    Bar,
}

impl ObstacleKind {
    fn glyph(self) -> char {
        match self {
            ObstacleKind::Wall => 'W',
            ObstacleKind::Hurdle => 'H',
            ObstacleKind::Bar => 'B',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstacleRow {
    pub at: u64,
    pub kind: ObstacleKind,
    pub lanes: Vec<u8>,
}

/// Seeded track: rows start at [`FIRST_ROW`] with gaps drawn from
/// `MIN_GAP..=MAX_GAP`. Walls cover one or two lanes, so a free lane always
/// exists; hurdles and bars may span all three.
pub fn generate_track(rng: &mut SplitMix64, length: u64) -> Vec<ObstacleRow> {
    let mut rows = Vec::new();
    let mut at = FIRST_ROW;
    while at < length {
        let roll = rng.below(10);
        let kind = match roll {
            0..=3 => ObstacleKind::Wall,
            4..=6 => ObstacleKind::Hurdle,
            _ => ObstacleKind::Bar,
        };
        let max_lanes = if kind == ObstacleKind::Wall { 2 } else { 3 };
        let count = rng.range_inclusive(1, max_lanes) as usize;
        let mut pool: Vec<u8> = (0..LANES).collect();
        for k in 0..count {
            let j = k + rng.below((pool.len() - k) as u64) as usize;
            pool.swap(k, j);
        }
        let mut lanes = pool[..count].to_vec();
        lanes.sort_unstable();
        rows.push(ObstacleRow { at, kind, lanes });
        at += rng.range_inclusive(MIN_GAP, MAX_GAP) as u64;
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Runner {
    pub distance: u64,
    pub lane: u8,
    pub air: u8,
    pub duck: u8,
    pub dead: bool,
    pub jumps: u64,
}

impl Runner {
    pub fn start() -> Self {
        Self {
            distance: 0,
            lane: 1,
            air: 0,
            duck: 0,
            dead: false,
            jumps: 0,
        }
    }

    pub fn input(&mut self, key: &str) {
        if self.dead {
            return;
        }
        match key {
            "ArrowLeft" if self.lane > 0 => self.lane -= 1,
            "ArrowRight" if self.lane + 1 < LANES => self.lane += 1,
            "ArrowUp" | "Space" if self.air == 0 && self.duck == 0 => {
                self.air = STANCE_TICKS;
                self.jumps += 1;
            }
            "ArrowDown" if self.air == 0 => self.duck = STANCE_TICKS,
            _ => {}
        }
    }

    /// Moves one position forward and resolves any row at the new position.
    pub fn step(&mut self, rows: &[ObstacleRow]) {
        if self.dead {
            return;
        }
        self.distance += 1;
        if let Some(row) = rows.iter().find(|r| r.at == self.distance) {
            if row.lanes.contains(&self.lane) {
                let cleared = match row.kind {
                    ObstacleKind::Wall => false,
                    ObstacleKind::Hurdle => self.air > 0,
                    ObstacleKind::Bar => self.duck > 0,
                };
                if !cleared {
                    self.dead = true;
                    return;
                }
            }
        }
        self.air = self.air.saturating_sub(1);
        self.duck = self.duck.saturating_sub(1);
    }
}

#[derive(Clone, Debug)]
pub struct LaneRunner {
    runner: Runner,
    track: Vec<ObstacleRow>,
}

impl LaneRunner {
    pub fn new(params: &Map<String, Value>, rng: &mut SplitMix64) -> Result<Self, KernelError> {
        let length = param_u64(params, "track_length", 5000)?;
        Ok(Self {
            runner: Runner::start(),
            track: generate_track(rng, length),
        })
    }

    fn visible(&self) -> Vec<&ObstacleRow> {
        let d = self.runner.distance;
        self.track.iter().filter(|r| r.at > d && r.at <= d + HORIZON).collect()
    }

    fn cell(&self, offset: i32, lane: u8) -> char {
        if offset == 0 && lane == self.runner.lane {
            return if self.runner.dead {
                'X'
            } else if self.runner.air > 0 {
                'J'
            } else if self.runner.duck > 0 {
                'D'
            } else {
                'P'
            };
        }
        let at = self.runner.distance as i64 + i64::from(offset);
        self.track
            .iter()
            .find(|r| r.at as i64 == at && r.lanes.contains(&lane))
            .map_or('.', |r| r.kind.glyph())
    }
}

impl GameLogic for LaneRunner {
    fn key_down(&mut self, key: &str, _rng: &mut SplitMix64) {
        self.runner.input(key);
    }

    fn tick(&mut self, _held: &BTreeSet<String>, _rng: &mut SplitMix64) {
        self.runner.step(&self.track);
    }

    fn outcome(&self) -> Option<TerminalInfo> {
        self.runner
            .dead
            .then(|| TerminalInfo::ended(TerminalOutcome::Lose, "hit an obstacle"))
    }

    fn game_state(&self) -> GameState {
        let r = &self.runner;
        let mut player = Map::new();
        player.insert("lane".into(), json!(r.lane));
        player.insert("airborne".into(), json!(r.air > 0));
        player.insert("ducking".into(), json!(r.duck > 0));
        player.insert("alive".into(), json!(!r.dead));
        GameState {
            score: r.distance as f64,
            level: "track".into(),
            progress: None,
            player: Some(player),
            board: Some(json!(self.text_grid().lines().collect::<Vec<_>>())),
            entities: Some(
                self.visible()
                    .into_iter()
                    .map(|row| json!({"kind": row.kind, "at": row.at, "lanes": row.lanes}))
                    .collect(),
            ),
        }
    }

    fn metrics(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("distance".to_string(), self.runner.distance as f64),
            ("jumps".to_string(), self.runner.jumps as f64),
            ("lane".to_string(), f64::from(self.runner.lane)),
        ])
    }

    fn raw(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("runner".into(), json!(self.runner));
        m.insert("rows".into(), json!(self.visible()));
        m
    }

    fn text_grid(&self) -> String {
        (0..LANES)
            .map(|lane| {
                (-PLAYER_COL..VIEW_COLS - PLAYER_COL)
                    .map(|off| self.cell(off, lane))
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn frame_size(&self) -> (u32, u32) {
        ((VIEW_COLS * CELL_PX) as u32, (i32::from(LANES) * CELL_PX) as u32)
    }

    fn draw(&self, canvas: &mut Canvas) {
        for lane in 0..LANES {
            for col in 0..VIEW_COLS {
                let color = match self.cell(col - PLAYER_COL, lane) {
                    'P' | 'X' => palette::PLAYER,
                    'J' | 'D' => palette::PLAYER_ALT,
                    'W' => palette::WALL,
                    'H' => palette::HURDLE,
                    'B' => palette::BAR,
                    _ => palette::GRID,
                };
                canvas.cell(col, i32::from(lane), CELL_PX, color);
            }
        }
    }

    fn clone_box(&self) -> Box<dyn GameLogic> {
        Box::new(self.clone())
    }
}

#[derive(Deserialize)]
struct View {
    runner: Runner,
    rows: Vec<ObstacleRow>,
}

/// Keys the oracle may press, in preference order after waiting.
const CHOICES: [Option<&str>; 5] = [None, Some("ArrowLeft"), Some("ArrowRight"), Some("ArrowUp"), Some("ArrowDown")];
const TICKS_PER_ACTION: u32 = 2;
const DEPTH: u32 = 4;

fn survives(r: &Runner, rows: &[ObstacleRow], depth: u32) -> bool {
    if r.dead {
        return false;
    }
    if depth == 0 {
        return true;
    }
    CHOICES.iter().any(|k| {
        let mut next = r.clone();
        if let Some(k) = k {
            next.input(k);
        }
        for _ in 0..TICKS_PER_ACTION {
            next.step(rows);
        }
        survives(&next, rows, depth - 1)
    })
}

/// Depth-limited search over the reconstructed dynamics, assuming each
/// action is followed by one execution window. Prefers doing nothing.
pub fn oracle(s: &StateSnapshot) -> NormalizedAction {
    let Some(v) = from_raw::<View>(s) else {
        return wait();
    };
    let choices: &[Option<&str>] = if s.status == LifecycleStatus::Ready {
        // Waiting never starts the run.
        &CHOICES[1..]
    } else {
        &CHOICES
    };
    for &k in choices {
        let mut next = v.runner.clone();
        if let Some(k) = k {
            next.input(k);
        }
        for _ in 0..TICKS_PER_ACTION {
            next.step(&v.rows);
        }
        if survives(&next, &v.rows, DEPTH - 1) {
            return match k {
                Some(k) => press(k),
                None => wait(),
            };
        }
    }
    wait()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn track_rows_respect_gaps_and_walls_leave_a_lane() {
        let mut rng = SplitMix64::new(5);
        let rows = generate_track(&mut rng, 2000);
        assert_eq!(rows[0].at, FIRST_ROW);
        for w in rows.windows(2) {
            let gap = (w[1].at - w[0].at) as i64;
            assert!((MIN_GAP..=MAX_GAP).contains(&gap));
        }
        assert!(rows.iter().filter(|r| r.kind == ObstacleKind::Wall).all(|r| r.lanes.len() < 3));
    }

    #[test]
    fn hurdle_needs_jump_bar_needs_duck() {
        let rows = vec![
            ObstacleRow { at: 2, kind: ObstacleKind::Hurdle, lanes: vec![0, 1, 2] },
            ObstacleRow { at: 6, kind: ObstacleKind::Bar, lanes: vec![0, 1, 2] },
        ];
        let mut r = Runner::start();
        r.step(&rows);
        r.input("ArrowUp");
        r.step(&rows);
        assert!(!r.dead);
        r.step(&rows);
        r.step(&rows);
        r.step(&rows);
        r.input("ArrowDown");
        r.step(&rows);
        assert!(!r.dead);
        let mut r = Runner::start();
        r.step(&rows);
        r.step(&rows);
        assert!(r.dead);
    }
}
