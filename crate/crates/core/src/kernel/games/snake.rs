use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{direction_of, from_raw, param_u64, press, Direction};
use crate::control::NormalizedAction;
use crate::kernel::raster::{palette, Canvas};
use crate::kernel::{GameLogic, KernelError};
use crate::rng::SplitMix64;
use crate::snapshot::{GameState, StateSnapshot, TerminalInfo, TerminalOutcome};

const CELL_PX: i32 = 16;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snake {
    pub width: i32,
    pub height: i32,
    /// Head first.
    pub body: VecDeque<(i32, i32)>,
    pub heading: Direction,
    pub queued: Direction,
    pub food: Option<(i32, i32)>,
    pub eaten: u64,
    pub dead: bool,
    pub steps: u64,
}

impl Snake {
    pub fn new(params: &Map<String, Value>, rng: &mut SplitMix64) -> Result<Self, KernelError> {
        let size = param_u64(params, "size", 10)? as i32;
        if !(6..=32).contains(&size) {
            return Err(KernelError::InvalidConfig("snake size must be in 6..=32".into()));
        }
        let (cx, cy) = (size / 2, size / 2);
        let mut s = Self {
            width: size,
            height: size,
            body: VecDeque::from([(cx, cy), (cx - 1, cy), (cx - 2, cy)]),
            heading: Direction::Right,
            queued: Direction::Right,
            food: None,
            eaten: 0,
            dead: false,
            steps: 0,
        };
        s.spawn_food(rng);
        Ok(s)
    }

    fn spawn_food(&mut self, rng: &mut SplitMix64) {
        let occupied: BTreeSet<(i32, i32)> = self.body.iter().copied().collect();
        let free: Vec<(i32, i32)> = (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|c| !occupied.contains(c))
            .collect();
        self.food = rng.pick(&free).copied();
    }

    fn inside(&self, (x, y): (i32, i32)) -> bool {
        x >= 0 && y >= 0 && x < self.width && y < self.height
    }

    fn glyph(&self, c: (i32, i32)) -> char {
        if self.body.front() == Some(&c) {
            'H'
        } else if self.body.contains(&c) {
            'o'
        } else if self.food == Some(c) {
            '*'
        } else {
            '.'
        }
    }
}

impl GameLogic for Snake {
    fn key_down(&mut self, key: &str, _rng: &mut SplitMix64) {
        if let Some(d) = direction_of(key) {
            if d != self.heading.opposite() {
                self.queued = d;
            }
        }
    }

    fn tick(&mut self, _held: &BTreeSet<String>, rng: &mut SplitMix64) {
        if self.dead {
            return;
        }
        self.heading = self.queued;
        let (hx, hy) = self.body[0];
        let (dx, dy) = self.heading.delta();
        let next = (hx + dx, hy + dy);
        let grows = self.food == Some(next);
        let tail_moves = !grows;
        let hits_self = self
            .body
            .iter()
            .take(self.body.len() - usize::from(tail_moves))
            .any(|&c| c == next);
        self.steps += 1;
        if !self.inside(next) || hits_self {
            self.dead = true;
            return;
        }
        self.body.push_front(next);
        if grows {
            self.eaten += 1;
            self.spawn_food(rng);
        } else {
            self.body.pop_back();
        }
    }

    fn outcome(&self) -> Option<TerminalInfo> {
        self.dead
            .then(|| TerminalInfo::ended(TerminalOutcome::Lose, "collision"))
    }

    fn game_state(&self) -> GameState {
        let (hx, hy) = self.body[0];
        let mut player = Map::new();
        player.insert("x".into(), json!(hx));
        player.insert("y".into(), json!(hy));
        player.insert("alive".into(), json!(!self.dead));
        player.insert("heading".into(), json!(self.heading));
        GameState {
            score: self.eaten as f64,
            level: format!("{}x{}", self.width, self.height),
            progress: None,
            player: Some(player),
            board: Some(json!(self.text_grid().lines().collect::<Vec<_>>())),
            entities: Some(self.food.iter().map(|(x, y)| json!({"kind": "food", "x": x, "y": y})).collect()),
        }
    }

    fn metrics(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("food".to_string(), self.eaten as f64),
            ("length".to_string(), self.body.len() as f64),
            ("steps".to_string(), self.steps as f64),
        ])
    }

    fn raw(&self) -> Map<String, Value> {
        match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        }
    }

    fn text_grid(&self) -> String {
        (0..self.height)
            .map(|y| (0..self.width).map(|x| self.glyph((x, y))).collect::<String>())
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn frame_size(&self) -> (u32, u32) {
        ((self.width * CELL_PX) as u32, (self.height * CELL_PX) as u32)
    }

    fn draw(&self, canvas: &mut Canvas) {
        for y in 0..self.height {
            for x in 0..self.width {
                let color = match self.glyph((x, y)) {
                    'H' => palette::PLAYER,
                    'o' => palette::PLAYER_ALT,
                    '*' => palette::FOOD,
                    _ => palette::GRID,
                };
                canvas.cell(x, y, CELL_PX, color);
            }
        }
    }

    fn clone_box(&self) -> Box<dyn GameLogic> {
        Box::new(self.clone())
    }
}

/// Breadth-first path to the food through cells the body will have left;
/// falls back to any direction that survives the next tick.
pub fn oracle(s: &StateSnapshot) -> NormalizedAction {
    let Some(g) = from_raw::<Snake>(s) else {
        return press("ArrowRight");
    };
    let head = g.body[0];
    let blocked: BTreeSet<(i32, i32)> = g.body.iter().take(g.body.len() - 1).copied().collect();
    let legal: Vec<Direction> = Direction::ALL
        .into_iter()
        .filter(|d| *d != g.heading.opposite())
        .collect();
    if let Some(food) = g.food {
        let mut first: BTreeMap<(i32, i32), Direction> = BTreeMap::new();
        let mut queue = VecDeque::new();
        for &d in &legal {
            let (dx, dy) = d.delta();
            let c = (head.0 + dx, head.1 + dy);
            if g.inside(c) && !blocked.contains(&c) && !first.contains_key(&c) {
                first.insert(c, d);
                queue.push_back(c);
            }
        }
        while let Some(c) = queue.pop_front() {
            let d0 = first[&c];
            if c == food {
                return press(d0.key());
            }
            for d in Direction::ALL {
                let (dx, dy) = d.delta();
                let n = (c.0 + dx, c.1 + dy);
                if g.inside(n) && !blocked.contains(&n) && !first.contains_key(&n) {
                    first.insert(n, d0);
                    queue.push_back(n);
                }
            }
        }
    }
    let safe = legal.into_iter().find(|d| {
        let (dx, dy) = d.delta();
        let c = (head.0 + dx, head.1 + dy);
        g.inside(c) && !blocked.contains(&c)
    });
    press(safe.unwrap_or(g.heading).key())
}
