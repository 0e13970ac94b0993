use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{from_raw, param_u64, press};
use crate::control::NormalizedAction;
use crate::kernel::raster::{palette, Canvas};
use crate::kernel::{GameLogic, KernelError};
use crate::rng::SplitMix64;
use crate::snapshot::{GameState, StateSnapshot, TerminalInfo, TerminalOutcome};

pub const HEIGHT: i32 = 8;
pub const JUMP_TICKS: u8 = 2;
const CELL_PX: i32 = 16;
const VIEW_COLS: i32 = 24;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    /// Ground height per column; 0 is a gap.
    pub heights: Vec<i32>,
    pub coins: Vec<(i32, i32)>,
    pub flag_x: i32,
}

/// Columns start flat; heights drift by at most one per column and gaps are
/// one or two columns wide, which a two-tick jump always clears.
pub fn generate_level(rng: &mut SplitMix64, width: i32) -> Level {
    let mut heights = Vec::with_capacity(width as usize);
    let mut coins = Vec::new();
    let mut h = 1;
    let mut x = 0;
    while x < width {
        let safe_zone = x < 4 || x >= width - 3;
        if !safe_zone && heights.last().is_some_and(|&p: &i32| p > 0) && rng.chance(0.18) {
            let gap = rng.range_inclusive(1, 2) as i32;
            for _ in 0..gap.min(width - 3 - x) {
                heights.push(0);
                x += 1;
            }
            continue;
        }
        if !safe_zone && rng.chance(0.35) {
            h = (h + rng.range_inclusive(-1, 1) as i32).clamp(1, 3);
        }
        heights.push(h);
        if !safe_zone && rng.chance(0.25) {
            coins.push((x, h + rng.range_inclusive(0, 1) as i32));
        }
        x += 1;
    }
    Level {
        heights,
        coins,
        flag_x: width - 2,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hopper {
    pub x: i32,
    pub y: i32,
    pub rise: u8,
    pub coins: u32,
    pub max_x: i32,
    pub dead: bool,
    pub won: bool,
    pub collected: Vec<(i32, i32)>,
}

impl Level {
    pub fn width(&self) -> i32 {
        self.heights.len() as i32
    }

    fn solid(&self, x: i32, y: i32) -> bool {
        if x < 0 || x >= self.width() {
            return true;
        }
        y >= 0 && y < self.heights[x as usize]
    }

    fn supported(&self, h: &Hopper) -> bool {
        h.y >= 1 && self.solid(h.x, h.y - 1)
    }
}

impl Hopper {
    pub fn spawn(level: &Level) -> Self {
        Self {
            x: 1,
            y: level.heights[1],
            rise: 0,
            coins: 0,
            max_x: 1,
            dead: false,
            won: false,
            collected: Vec::new(),
        }
    }

    pub fn jump(&mut self, level: &Level) {
        if !self.dead && !self.won && self.rise == 0 && level.supported(self) {
            self.rise = JUMP_TICKS;
        }
    }

    /// Vertical motion first (rise or fall one cell), then one horizontal
    /// cell toward the held direction.
    pub fn step(&mut self, level: &Level, dx: i32) {
        if self.dead || self.won {
            return;
        }
        if self.rise > 0 {
            if self.y + 1 < HEIGHT && !level.solid(self.x, self.y + 1) {
                self.y += 1;
                self.rise -= 1;
            } else {
                self.rise = 0;
            }
        } else if !level.supported(self) {
            self.y -= 1;
            if self.y < 0 {
                self.dead = true;
                return;
            }
        }
        if dx != 0 && !level.solid(self.x + dx, self.y) {
            self.x += dx;
        }
        self.max_x = self.max_x.max(self.x);
        let here = (self.x, self.y);
        if level.coins.contains(&here) && !self.collected.contains(&here) {
            self.collected.push(here);
            self.coins += 1;
        }
        if self.x >= level.flag_x {
            self.won = true;
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridHop {
    level: Level,
    hopper: Hopper,
}

impl GridHop {
    pub fn new(params: &Map<String, Value>, rng: &mut SplitMix64) -> Result<Self, KernelError> {
        let width = param_u64(params, "width", 48)? as i32;
        if !(12..=256).contains(&width) {
            return Err(KernelError::InvalidConfig("grid-hop width must be in 12..=256".into()));
        }
        let level = generate_level(rng, width);
        let hopper = Hopper::spawn(&level);
        Ok(Self { level, hopper })
    }

    fn glyph(&self, x: i32, y: i32) -> char {
        let h = &self.hopper;
        if (x, y) == (h.x, h.y) {
            return if h.dead { 'X' } else { '@' };
        }
        if x < 0 || x >= self.level.width() {
            return ' ';
        }
        if self.level.solid(x, y) {
            '#'
        } else if x == self.level.flag_x && y == self.level.heights[x as usize] {
            'F'
        } else if self.level.coins.contains(&(x, y)) && !h.collected.contains(&(x, y)) {
            'c'
        } else {
            '.'
        }
    }

    fn view_left(&self) -> i32 {
        (self.hopper.x - 4).clamp(0, (self.level.width() - VIEW_COLS).max(0))
    }
}

pub(crate) fn horizontal(held: &BTreeSet<String>) -> i32 {
    let right = held.contains("ArrowRight") || held.contains("d");
    let left = held.contains("ArrowLeft") || held.contains("a");
    i32::from(right) - i32::from(left)
}

impl GameLogic for GridHop {
    fn key_down(&mut self, key: &str, _rng: &mut SplitMix64) {
        if matches!(key, "ArrowUp" | "Space" | "w") {
            self.hopper.jump(&self.level);
        }
    }

    fn tick(&mut self, held: &BTreeSet<String>, _rng: &mut SplitMix64) {
        self.hopper.step(&self.level, horizontal(held));
    }

    fn outcome(&self) -> Option<TerminalInfo> {
        if self.hopper.dead {
            Some(TerminalInfo::ended(TerminalOutcome::Lose, "fell into a gap"))
        } else if self.hopper.won {
            Some(TerminalInfo::ended(TerminalOutcome::Win, "reached the flag"))
        } else {
            None
        }
    }

    fn game_state(&self) -> GameState {
        let h = &self.hopper;
        let mut player = Map::new();
        player.insert("x".into(), json!(h.x));
        player.insert("y".into(), json!(h.y));
        player.insert("vy".into(), json!(h.rise));
        player.insert("alive".into(), json!(!h.dead));
        GameState {
            score: f64::from(h.coins * 10),
            level: "1-1".into(),
            progress: Some((f64::from(h.max_x) / f64::from(self.level.flag_x)).min(1.0)),
            player: Some(player),
            board: Some(json!(self.text_grid().lines().collect::<Vec<_>>())),
            entities: None,
        }
    }

    fn metrics(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("distance".to_string(), f64::from(self.hopper.max_x)),
            ("coins".to_string(), f64::from(self.hopper.coins)),
            ("flag_x".to_string(), f64::from(self.level.flag_x)),
        ])
    }

    fn raw(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("level".into(), json!(self.level));
        m.insert("hopper".into(), json!(self.hopper));
        m
    }

    fn text_grid(&self) -> String {
        let left = self.view_left();
        (0..HEIGHT)
            .rev()
            .map(|y| (left..left + VIEW_COLS).map(|x| self.glyph(x, y)).collect::<String>())
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn frame_size(&self) -> (u32, u32) {
        ((VIEW_COLS * CELL_PX) as u32, (HEIGHT * CELL_PX) as u32)
    }

    fn draw(&self, canvas: &mut Canvas) {
        let left = self.view_left();
        for row in 0..HEIGHT {
            let y = HEIGHT - 1 - row;
            for col in 0..VIEW_COLS {
                let color = match self.glyph(left + col, y) {
                    '@' | 'X' => palette::PLAYER,
                    '#' => palette::GROUND,
                    'F' => palette::FLAG,
                    'c' => palette::COIN,
                    _ => palette::GRID,
                };
                canvas.cell(col, row, CELL_PX, color);
            }
        }
    }

    fn clone_box(&self) -> Box<dyn GameLogic> {
        Box::new(self.clone())
    }
}

#[derive(Deserialize)]
struct View {
    level: Level,
    hopper: Hopper,
}

#[derive(Clone, Copy, PartialEq, Eq)]
struct Move {
    jump: bool,
    dx: i32,
}

const MOVES: [Move; 5] = [
    Move { jump: false, dx: 1 },
    Move { jump: true, dx: 1 },
    Move { jump: true, dx: 0 },
    Move { jump: false, dx: 0 },
    Move { jump: false, dx: -1 },
];
const SEARCH_DEPTH: usize = 14;

fn apply(level: &Level, h: &Hopper, m: Move) -> Hopper {
    let mut next = h.clone();
    if m.jump {
        next.jump(level);
    }
    next.step(level, m.dx);
    next
}

/// Breadth-first search over (x, y, rise) with one tick per action; heads
/// for the reachable state furthest to the right, earliest first.
pub fn oracle(s: &StateSnapshot) -> NormalizedAction {
    let Some(v) = from_raw::<View>(s) else {
        return press("ArrowRight");
    };
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    let mut best: Option<(i32, usize, Move)> = None;
    for m in MOVES {
        let n = apply(&v.level, &v.hopper, m);
        if !n.dead && seen.insert((n.x, n.y, n.rise)) {
            queue.push_back((n, 1usize, m));
        }
    }
    while let Some((h, depth, first)) = queue.pop_front() {
        let score = if h.won { i32::MAX } else { h.x };
        if best.is_none_or(|(b, d, _)| score > b || (score == b && depth < d)) {
            best = Some((score, depth, first));
        }
        if depth >= SEARCH_DEPTH || h.won {
            continue;
        }
        for m in MOVES {
            let n = apply(&v.level, &h, m);
            if !n.dead && seen.insert((n.x, n.y, n.rise)) {
                queue.push_back((n, depth + 1, first));
            }
        }
    }
    let m = best.map(|(_, _, m)| m).unwrap_or(MOVES[0]);
    match (m.jump, m.dx) {
        (true, 1) => NormalizedAction::PressKeys {
            keys: vec!["ArrowUp".into(), "ArrowRight".into()],
            duration_ms: None,
        },
        (true, -1) => NormalizedAction::PressKeys {
            keys: vec!["ArrowUp".into(), "ArrowLeft".into()],
            duration_ms: None,
        },
        (true, _) => press("ArrowUp"),
        (false, 1) => press("ArrowRight"),
        (false, -1) => press("ArrowLeft"),
        _ => NormalizedAction::Wait { duration_ms: None },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_shape() {
        for seed in 0..20 {
            let level = generate_level(&mut SplitMix64::new(seed), 48);
            assert_eq!(level.width(), 48);
            assert!(level.heights[..4].iter().all(|&h| h == 1));
            let mut run = 0;
            for w in level.heights.windows(2) {
                if w[0] > 0 && w[1] > 0 {
                    assert!((w[0] - w[1]).abs() <= 1);
                }
                run = if w[1] == 0 { run + 1 } else { 0 };
                assert!(run <= 2);
            }
        }
    }

    #[test]
    fn gravity_and_gap_death() {
        let level = Level {
            heights: vec![1, 1, 0, 0, 0, 1, 1],
            coins: vec![],
            flag_x: 6,
        };
        let mut h = Hopper::spawn(&level);
        h.step(&level, 1);
        assert_eq!((h.x, h.y), (2, 1));
        h.step(&level, 0);
        assert_eq!(h.y, 0);
        h.step(&level, 0);
        assert!(h.dead);
    }
}
