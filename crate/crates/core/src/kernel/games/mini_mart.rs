use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{direction_of, from_raw, param_u64, press, wait};
use crate::control::NormalizedAction;
use crate::kernel::raster::{palette, Canvas};
use crate::kernel::{GameLogic, KernelError};
use crate::rng::SplitMix64;
use crate::snapshot::{GameState, StateSnapshot, TerminalInfo};

pub const WIDTH: i32 = 7;
pub const HEIGHT: i32 = 6;
pub const TREE: (i32, i32) = (5, 5);
pub const SHELF: (i32, i32) = (4, 2);
pub const COUNTER: (i32, i32) = (1, 2);
pub const START: (i32, i32) = (3, 4);
pub const CARRY_CAP: u32 = 4;
pub const SHELF_CAP: u32 = 6;
pub const PRICE: u32 = 5;
pub const MAX_QUEUE: usize = 4;
const FIRST_ARRIVAL: u64 = 3;
const CELL_PX: i32 = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Customer {
    pub id: u64,
    pub want: u32,
    pub got: u32,
    pub patience: u32,
}

impl Customer {
    pub fn ready_to_pay(&self) -> bool {
        self.got >= self.want
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MiniMart {
    pub player: (i32, i32),
    pub carrying: u32,
    pub shelf: u32,
    pub money: u32,
    pub served: u64,
    pub lost: u64,
    pub queue: Vec<Customer>,
    pub next_arrival: u64,
    pub next_id: u64,
    pub tick: u64,
    pub patience_min: u32,
}

impl MiniMart {
    pub fn new(params: &Map<String, Value>) -> Result<Self, KernelError> {
        let patience_min = param_u64(params, "patience", 40)? as u32;
        if patience_min == 0 {
            return Err(KernelError::InvalidConfig("mini-mart patience must be positive".into()));
        }
        Ok(Self {
            player: START,
            carrying: 0,
            shelf: 0,
            money: 0,
            served: 0,
            lost: 0,
            queue: Vec::new(),
            next_arrival: FIRST_ARRIVAL,
            next_id: 0,
            tick: 0,
            patience_min,
        })
    }

    fn glyph(&self, c: (i32, i32)) -> char {
        if c == self.player {
            '@'
        } else if c == TREE {
            'T'
        } else if c == SHELF {
            'S'
        } else if c == COUNTER {
            'C'
        } else if c.1 == COUNTER.1 && c.0 == 0 && !self.queue.is_empty() {
            'q'
        } else {
            '.'
        }
    }
}

impl GameLogic for MiniMart {
    fn key_down(&mut self, key: &str, _rng: &mut SplitMix64) {
        if let Some(d) = direction_of(key) {
            let (dx, dy) = d.delta();
            let (x, y) = (self.player.0 + dx, self.player.1 + dy);
            if (0..WIDTH).contains(&x) && (0..HEIGHT).contains(&y) {
                self.player = (x, y);
            }
        }
    }

    /// Harvest, stock, shop, pay, then patience and arrivals.
    fn tick(&mut self, _held: &BTreeSet<String>, rng: &mut SplitMix64) {
        self.tick += 1;
        if self.player == TREE && self.carrying < CARRY_CAP {
            self.carrying += 1;
        }
        if self.player == SHELF && self.carrying > 0 && self.shelf < SHELF_CAP {
            self.carrying -= 1;
            self.shelf += 1;
        }
        if self.shelf > 0 {
            if let Some(c) = self.queue.iter_mut().find(|c| !c.ready_to_pay()) {
                c.got += 1;
                self.shelf -= 1;
            }
        }
        if self.player == COUNTER {
            if let Some(i) = self.queue.iter().position(Customer::ready_to_pay) {
                let c = self.queue.remove(i);
                self.money += PRICE * c.want;
                self.served += 1;
            }
        }
        for c in &mut self.queue {
            c.patience = c.patience.saturating_sub(1);
        }
        let before = self.queue.len();
        self.queue.retain(|c| c.patience > 0);
        self.lost += (before - self.queue.len()) as u64;
        if self.tick >= self.next_arrival {
            if self.queue.len() < MAX_QUEUE {
                let want = rng.range_inclusive(1, 2) as u32;
                let patience = self.patience_min + rng.below(21) as u32;
                self.queue.push(Customer {
                    id: self.next_id,
                    want,
                    got: 0,
                    patience,
                });
                self.next_id += 1;
            }
            self.next_arrival = self.tick + 6 + rng.below(6);
        }
    }

    fn outcome(&self) -> Option<TerminalInfo> {
        None
    }

    fn game_state(&self) -> GameState {
        let mut player = Map::new();
        player.insert("x".into(), json!(self.player.0));
        player.insert("y".into(), json!(self.player.1));
        player.insert("carrying".into(), json!(self.carrying));
        GameState {
            score: f64::from(self.money),
            level: "day-1".into(),
            progress: None,
            player: Some(player),
            board: Some(json!(self.text_grid().lines().collect::<Vec<_>>())),
            entities: Some(
                self.queue
                    .iter()
                    .map(|c| json!({"kind": "customer", "id": c.id, "want": c.want, "got": c.got, "patience": c.patience}))
                    .collect(),
            ),
        }
    }

    fn metrics(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("money".to_string(), f64::from(self.money)),
            ("served".to_string(), self.served as f64),
            ("lost".to_string(), self.lost as f64),
            ("carrying".to_string(), f64::from(self.carrying)),
            ("shelf".to_string(), f64::from(self.shelf)),
        ])
    }

    fn raw(&self) -> Map<String, Value> {
        match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        }
    }

    fn text_grid(&self) -> String {
        let mut rows: Vec<String> = (0..HEIGHT)
            .map(|y| (0..WIDTH).map(|x| self.glyph((x, y))).collect())
            .collect();
        rows.push(format!(
            "carry {} shelf {} money {} queue {}",
            self.carrying,
            self.shelf,
            self.money,
            self.queue.len()
        ));
        rows.join("\n")
    }

    fn frame_size(&self) -> (u32, u32) {
        ((WIDTH * CELL_PX) as u32, (HEIGHT * CELL_PX) as u32)
    }

    fn draw(&self, canvas: &mut Canvas) {
        for y in 0..HEIGHT {
            for x in 0..WIDTH {
                let color = match self.glyph((x, y)) {
                    '@' => palette::PLAYER,
                    'T' => palette::TREE,
                    'S' => palette::SHELF,
                    'C' => palette::COUNTER,
                    'q' => palette::CUSTOMER,
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

fn step_toward(from: (i32, i32), to: (i32, i32)) -> NormalizedAction {
    if from.0 < to.0 {
        press("ArrowRight")
    } else if from.0 > to.0 {
        press("ArrowLeft")
    } else if from.1 < to.1 {
        press("ArrowDown")
    } else if from.1 > to.1 {
        press("ArrowUp")
    } else {
        wait()
    }
}

/// Pays first, then stocks a full load (or any load when the shelf is empty
/// and someone is waiting), otherwise harvests.
pub fn oracle(s: &StateSnapshot) -> NormalizedAction {
    let Some(g) = from_raw::<MiniMart>(s) else {
        return wait();
    };
    let goal = if g.queue.iter().any(Customer::ready_to_pay) {
        COUNTER
    } else if g.player == SHELF && g.carrying > 0 && g.shelf < SHELF_CAP {
        SHELF
    } else if g.player == TREE && g.carrying < CARRY_CAP {
        TREE
    } else if g.carrying == CARRY_CAP || (g.carrying > 0 && g.shelf == 0 && !g.queue.is_empty()) {
        SHELF
    } else {
        TREE
    };
    step_toward(g.player, goal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harvest_stock_serve_cycle() {
        let mut g = MiniMart::new(&Map::new()).unwrap();
        let mut rng = SplitMix64::new(1);
        let held = BTreeSet::new();
        g.player = TREE;
        g.tick(&held, &mut rng);
        g.tick(&held, &mut rng);
        assert_eq!(g.carrying, 2);
        assert_eq!(g.queue.len(), 0);
        g.tick(&held, &mut rng);
        assert_eq!(g.queue.len(), 1);
        let want = g.queue[0].want;
        g.player = SHELF;
        for _ in 0..2 {
            g.tick(&held, &mut rng);
        }
        assert!(g.queue[0].ready_to_pay());
        g.player = COUNTER;
        g.tick(&held, &mut rng);
        assert_eq!(g.money, PRICE * want);
        assert_eq!(g.served, 1);
    }

    #[test]
    fn moves_stay_on_the_floor() {
        let mut g = MiniMart::new(&Map::new()).unwrap();
        let mut rng = SplitMix64::new(1);
        for _ in 0..10 {
            g.key_down("ArrowDown", &mut rng);
        }
        assert_eq!(g.player, (START.0, HEIGHT - 1));
    }
}
