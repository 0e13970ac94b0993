use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{from_raw, param_u64};
use crate::control::{MouseButton, NormalizedAction};
use crate::kernel::raster::{palette, Canvas};
use crate::kernel::{GameLogic, KernelError};
use crate::rng::SplitMix64;
use crate::snapshot::{GameState, StateSnapshot, TerminalInfo, TerminalOutcome};

pub const COLS: usize = 9;
pub const ROWS: usize = 9;
pub const CELLS: usize = COLS * ROWS;
pub const COLUMN_LETTERS: &str = "abcdefghi";
pub const PITCH: i32 = 24;
/// Top-left pixel of cell a1; its centre is at (120, 120).
pub const ORIGIN: i32 = 108;
pub const VIEWPORT: u32 = 432;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Minesweeper {
    pub mine_count: usize,
    pub placed: bool,
    pub mines: Vec<usize>,
    pub revealed: Vec<bool>,
    pub flagged: Vec<bool>,
    pub exploded: Option<usize>,
    pub clicks: u64,
}

pub fn cell_id(idx: usize) -> String {
    let col = COLUMN_LETTERS.as_bytes()[idx % COLS] as char;
    format!("{col}{}", idx / COLS + 1)
}

pub fn cell_center(idx: usize) -> (i32, i32) {
    let (c, r) = ((idx % COLS) as i32, (idx / COLS) as i32);
    (ORIGIN + PITCH / 2 + c * PITCH, ORIGIN + PITCH / 2 + r * PITCH)
}

pub fn cell_at(x: i32, y: i32) -> Option<usize> {
    let (dx, dy) = (x - ORIGIN, y - ORIGIN);
    if dx < 0 || dy < 0 {
        return None;
    }
    let (c, r) = ((dx / PITCH) as usize, (dy / PITCH) as usize);
    (c < COLS && r < ROWS).then_some(r * COLS + c)
}

pub fn neighbours(idx: usize) -> impl Iterator<Item = usize> {
    let (c, r) = ((idx % COLS) as i32, (idx / COLS) as i32);
    (-1..=1)
        .flat_map(move |dr| (-1..=1).map(move |dc| (c + dc, r + dr)))
        .filter(move |&(x, y)| (x, y) != (c, r) && x >= 0 && y >= 0 && x < COLS as i32 && y < ROWS as i32)
        .map(|(x, y)| y as usize * COLS + x as usize)
}

impl Minesweeper {
    pub fn new(params: &Map<String, Value>) -> Result<Self, KernelError> {
        let mine_count = param_u64(params, "mines", 10)? as usize;
        if mine_count == 0 || mine_count > CELLS - 9 {
            return Err(KernelError::InvalidConfig(format!("mines must be in 1..={}", CELLS - 9)));
        }
        Ok(Self {
            mine_count,
            placed: false,
            mines: Vec::new(),
            revealed: vec![false; CELLS],
            flagged: vec![false; CELLS],
            exploded: None,
            clicks: 0,
        })
    }

    fn is_mine(&self, idx: usize) -> bool {
        self.mines.contains(&idx)
    }

    pub fn adjacent_mines(&self, idx: usize) -> usize {
        neighbours(idx).filter(|&n| self.is_mine(n)).count()
    }

    /// Mines avoid the first revealed cell and its neighbours. Placement is
    /// a partial Fisher-Yates shuffle over the remaining cells in index
    /// order.
    fn place(&mut self, first: usize, rng: &mut SplitMix64) {
        let mut pool: Vec<usize> = (0..CELLS)
            .filter(|&i| i != first && !neighbours(first).any(|n| n == i))
            .collect();
        for k in 0..self.mine_count {
            let j = k + rng.below((pool.len() - k) as u64) as usize;
            pool.swap(k, j);
        }
        let mut mines = pool[..self.mine_count].to_vec();
        mines.sort_unstable();
        self.mines = mines;
        self.placed = true;
    }

    fn reveal(&mut self, idx: usize, rng: &mut SplitMix64) {
        if self.revealed[idx] || self.flagged[idx] {
            return;
        }
        if !self.placed {
            self.place(idx, rng);
        }
        if self.is_mine(idx) {
            self.exploded = Some(idx);
            return;
        }
        let mut queue = VecDeque::from([idx]);
        while let Some(i) = queue.pop_front() {
            if self.revealed[i] {
                continue;
            }
            self.revealed[i] = true;
            self.flagged[i] = false;
            if self.adjacent_mines(i) == 0 {
                queue.extend(neighbours(i).filter(|&n| !self.revealed[n]));
            }
        }
    }

    pub fn revealed_count(&self) -> usize {
        self.revealed.iter().filter(|&&r| r).count()
    }

    fn won(&self) -> bool {
        self.exploded.is_none() && self.revealed_count() == CELLS - self.mine_count
    }

    fn correct_flags(&self) -> usize {
        (0..CELLS).filter(|&i| self.flagged[i] && self.is_mine(i)).count()
    }

    fn glyph(&self, i: usize) -> char {
        if self.exploded.is_some() && self.is_mine(i) {
            '*'
        } else if self.revealed[i] {
            match self.adjacent_mines(i) {
                0 => '.',
                n => char::from_digit(n as u32, 10).unwrap_or('?'),
            }
        } else if self.flagged[i] {
            'F'
        } else {
            '#'
        }
    }
}

impl GameLogic for Minesweeper {
    fn click(&mut self, x: i32, y: i32, button: MouseButton, rng: &mut SplitMix64) {
        if self.exploded.is_some() || self.won() {
            return;
        }
        let Some(idx) = cell_at(x, y) else { return };
        self.clicks += 1;
        match button {
            MouseButton::Left => self.reveal(idx, rng),
            MouseButton::Right => {
                if !self.revealed[idx] {
                    self.flagged[idx] = !self.flagged[idx];
                }
            }
            MouseButton::Middle => {}
        }
    }

    fn outcome(&self) -> Option<TerminalInfo> {
        if let Some(i) = self.exploded {
            Some(TerminalInfo::ended(TerminalOutcome::Lose, format!("mine at {}", cell_id(i))))
        } else if self.won() {
            Some(TerminalInfo::ended(TerminalOutcome::Win, "all safe cells revealed"))
        } else {
            None
        }
    }

    fn game_state(&self) -> GameState {
        let board: Vec<String> = (0..ROWS)
            .map(|r| (0..COLS).map(|c| self.glyph(r * COLS + c)).collect())
            .collect();
        GameState {
            score: self.revealed_count() as f64,
            level: format!("{COLS}x{ROWS}/{}", self.mine_count),
            progress: Some(self.revealed_count() as f64 / (CELLS - self.mine_count) as f64),
            player: None,
            board: Some(json!(board)),
            entities: None,
        }
    }

    fn metrics(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("revealed".to_string(), self.revealed_count() as f64),
            ("flags".to_string(), self.flagged.iter().filter(|&&f| f).count() as f64),
            ("correct_flags".to_string(), self.correct_flags() as f64),
            ("mines".to_string(), self.mine_count as f64),
            ("clicks".to_string(), self.clicks as f64),
        ])
    }

    fn raw(&self) -> Map<String, Value> {
        match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        }
    }

    fn text_grid(&self) -> String {
        let mut out = String::from("  ");
        for c in COLUMN_LETTERS.chars() {
            out.push(' ');
            out.push(c);
        }
        for r in 0..ROWS {
            out.push_str(&format!("\n{:>2}", r + 1));
            for c in 0..COLS {
                out.push(' ');
                out.push(self.glyph(r * COLS + c));
            }
        }
        out
    }

    fn frame_size(&self) -> (u32, u32) {
        (VIEWPORT, VIEWPORT)
    }

    fn draw(&self, canvas: &mut Canvas) {
        for i in 0..CELLS {
            let (cx, cy) = cell_center(i);
            let (x, y) = (cx - PITCH / 2 + 1, cy - PITCH / 2 + 1);
            let color = match self.glyph(i) {
                '*' => palette::MINE,
                '#' => palette::HIDDEN,
                'F' => palette::HAZARD,
                '.' => palette::REVEALED,
                d => palette::level(d.to_digit(10).unwrap_or(0) as usize + 1),
            };
            canvas.fill_rect(x, y, PITCH - 2, PITCH - 2, color);
        }
    }

    fn clone_box(&self) -> Box<dyn GameLogic> {
        Box::new(self.clone())
    }
}

/// Privileged oracle: reads the mine layout from the raw state, flags every
/// mine, then reveals the remaining safe cells. Before mines are placed it
/// opens the centre.
pub fn oracle(s: &StateSnapshot) -> NormalizedAction {
    let target = from_raw::<Minesweeper>(s).and_then(|m| {
        if !m.placed {
            return Some((CELLS / 2, MouseButton::Left));
        }
        (0..CELLS)
            .find(|&i| m.is_mine(i) && !m.flagged[i])
            .map(|i| (i, MouseButton::Right))
            .or_else(|| (0..CELLS).find(|&i| !m.revealed[i] && !m.is_mine(i)).map(|i| (i, MouseButton::Left)))
    });
    let (cell, button) = target.unwrap_or((CELLS / 2, MouseButton::Left));
    let (x, y) = cell_center(cell);
    NormalizedAction::Click { x, y, button }
}
