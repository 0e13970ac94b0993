use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{direction_of, Direction};
use crate::control::NormalizedAction;
use crate::kernel::raster::{palette, Canvas};
use crate::kernel::GameLogic;
use crate::rng::SplitMix64;
use crate::snapshot::{GameState, StateSnapshot, TerminalInfo, TerminalOutcome};

pub const SIZE: usize = 4;
const CELL_PX: i32 = 32;

pub type Board = [[u32; SIZE]; SIZE];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct G2048 {
    pub board: Board,
    pub score: u64,
    pub moves: u64,
    pub over: bool,
}

/// Slides one line toward index 0, merging each pair at most once.
pub fn slide_line(line: [u32; SIZE]) -> ([u32; SIZE], u64) {
    let tiles: Vec<u32> = line.iter().copied().filter(|&v| v != 0).collect();
    let mut out = [0; SIZE];
    let mut gained = 0;
    let (mut i, mut k) = (0, 0);
    while i < tiles.len() {
        if i + 1 < tiles.len() && tiles[i] == tiles[i + 1] {
            out[k] = tiles[i] * 2;
            gained += u64::from(out[k]);
            i += 2;
        } else {
            out[k] = tiles[i];
            i += 1;
        }
        k += 1;
    }
    (out, gained)
}

/// Applies a move; returns the new board, the merge score, and whether any
/// tile moved.
pub fn apply_move(board: &Board, dir: Direction) -> (Board, u64, bool) {
    let mut next = *board;
    let mut gained = 0;
    for i in 0..SIZE {
        let coords: [(usize, usize); SIZE] = std::array::from_fn(|j| match dir {
            Direction::Left => (i, j),
            Direction::Right => (i, SIZE - 1 - j),
            Direction::Up => (j, i),
            Direction::Down => (SIZE - 1 - j, i),
        });
        let line = coords.map(|(r, c)| board[r][c]);
        let (slid, g) = slide_line(line);
        gained += g;
        for (j, (r, c)) in coords.iter().enumerate() {
            next[*r][*c] = slid[j];
        }
    }
    (next, gained, next != *board)
}

pub fn has_moves(board: &Board) -> bool {
    Direction::ALL.iter().any(|&d| apply_move(board, d).2)
}

/// Places a 2 (p = 0.9) or 4 in a uniformly chosen empty cell. The cell is
/// drawn first, then the value.
pub fn spawn(board: &mut Board, rng: &mut SplitMix64) -> Option<(usize, usize, u32)> {
    let empty: Vec<(usize, usize)> = (0..SIZE)
        .flat_map(|r| (0..SIZE).map(move |c| (r, c)))
        .filter(|&(r, c)| board[r][c] == 0)
        .collect();
    let &(r, c) = rng.pick(&empty)?;
    let v = if rng.next_f64() < 0.9 { 2 } else { 4 };
    board[r][c] = v;
    Some((r, c, v))
}

impl G2048 {
    pub fn new(rng: &mut SplitMix64) -> Self {
        let mut board = [[0; SIZE]; SIZE];
        spawn(&mut board, rng);
        spawn(&mut board, rng);
        Self {
            board,
            score: 0,
            moves: 0,
            over: false,
        }
    }

    pub fn max_tile(&self) -> u32 {
        self.board.iter().flatten().copied().max().unwrap_or(0)
    }
}

impl GameLogic for G2048 {
    fn key_down(&mut self, key: &str, rng: &mut SplitMix64) {
        let Some(dir) = direction_of(key) else { return };
        if self.over {
            return;
        }
        let (next, gained, moved) = apply_move(&self.board, dir);
        if !moved {
            return;
        }
        self.board = next;
        self.score += gained;
        self.moves += 1;
        spawn(&mut self.board, rng);
        self.over = !has_moves(&self.board);
    }

    fn outcome(&self) -> Option<TerminalInfo> {
        self.over
            .then(|| TerminalInfo::ended(TerminalOutcome::Lose, "no moves left"))
    }

    fn game_state(&self) -> GameState {
        let max = self.max_tile().max(1);
        GameState {
            score: self.score as f64,
            level: "4x4".into(),
            progress: Some((f64::from(max).log2() / 11.0).min(1.0)),
            player: None,
            board: Some(json!(self.board)),
            entities: None,
        }
    }

    fn metrics(&self) -> BTreeMap<String, f64> {
        let empty = self.board.iter().flatten().filter(|&&v| v == 0).count();
        BTreeMap::from([
            ("max_tile".to_string(), f64::from(self.max_tile())),
            ("moves".to_string(), self.moves as f64),
            ("empty_cells".to_string(), empty as f64),
        ])
    }

    fn raw(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("over".into(), json!(self.over));
        m
    }

    fn text_grid(&self) -> String {
        self.board
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| if v == 0 { format!("{:>5}", ".") } else { format!("{v:>5}") })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn frame_size(&self) -> (u32, u32) {
        (SIZE as u32 * CELL_PX as u32, SIZE as u32 * CELL_PX as u32)
    }

    fn draw(&self, canvas: &mut Canvas) {
        for (r, row) in self.board.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let color = if v == 0 {
                    palette::GRID
                } else {
                    palette::level(v.trailing_zeros() as usize - 1)
                };
                canvas.cell(c as i32, r as i32, CELL_PX, color);
            }
        }
    }

    fn clone_box(&self) -> Box<dyn GameLogic> {
        Box::new(self.clone())
    }
}

pub fn board_of(s: &StateSnapshot) -> Option<Board> {
    serde_json::from_value(s.game_state.board.clone()?).ok()
}

fn rank(v: u32) -> f64 {
    if v == 0 {
        0.0
    } else {
        f64::from(v.trailing_zeros())
    }
}

/// Line heuristic on tile ranks: rewards empty cells and adjacent equal
/// tiles, penalizes non-monotone lines and large tiles away from edges.
fn line_value(line: [u32; SIZE]) -> f64 {
    let r = line.map(rank);
    let empty = line.iter().filter(|&&v| v == 0).count() as f64;
    let mut merges = 0.0;
    let mut prev = 0.0;
    let mut run = 0.0;
    for &x in &r {
        if x == 0.0 {
            continue;
        }
        if x == prev {
            run += 1.0;
        } else if run > 0.0 {
            merges += 1.0 + run;
            run = 0.0;
        }
        prev = x;
    }
    if run > 0.0 {
        merges += 1.0 + run;
    }
    let (mut left, mut right) = (0.0, 0.0);
    for i in 1..SIZE {
        if r[i - 1] > r[i] {
            left += r[i - 1].powi(4) - r[i].powi(4);
        } else {
            right += r[i].powi(4) - r[i - 1].powi(4);
        }
    }
    let mass: f64 = r.iter().map(|x| x.powf(3.5)).sum();
    270.0 * empty + 700.0 * merges - 47.0 * left.min(right) - 11.0 * mass
}

fn board_value(b: &Board) -> f64 {
    let mut v = 0.0;
    for i in 0..SIZE {
        v += line_value(b[i]);
        v += line_value([b[0][i], b[1][i], b[2][i], b[3][i]]);
    }
    v
}

/// Expected value over tile spawns after a move, followed by the best
/// next move scored by the heuristic.
fn chance_value(b: &Board) -> f64 {
    let empties: Vec<(usize, usize)> = (0..SIZE)
        .flat_map(|r| (0..SIZE).map(move |c| (r, c)))
        .filter(|&(r, c)| b[r][c] == 0)
        .collect();
    if empties.is_empty() {
        return board_value(b);
    }
    let mut total = 0.0;
    for &(r, c) in &empties {
        for (tile, p) in [(2, 0.9), (4, 0.1)] {
            let mut next = *b;
            next[r][c] = tile;
            let best = Direction::ALL
                .iter()
                .filter_map(|&d| {
                    let (after, _, moved) = apply_move(&next, d);
                    moved.then(|| board_value(&after))
                })
                .fold(f64::NEG_INFINITY, f64::max);
            total += p * if best.is_finite() { best } else { -1e6 };
        }
    }
    total / empties.len() as f64
}

/// Two-ply expectimax over the heuristic; ties prefer down, left, right, up.
pub fn oracle(s: &StateSnapshot) -> NormalizedAction {
    const PREFERENCE: [Direction; 4] = [Direction::Down, Direction::Left, Direction::Right, Direction::Up];
    let pick = board_of(s).and_then(|board| {
        let mut best: Option<(f64, Direction)> = None;
        for dir in PREFERENCE {
            let (after, _, moved) = apply_move(&board, dir);
            if !moved {
                continue;
            }
            let v = chance_value(&after);
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, dir));
            }
        }
        best.map(|(_, d)| d)
    });
    NormalizedAction::PressKey {
        key: pick.unwrap_or(Direction::Down).key().into(),
        duration_ms: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_left_doubles() {
        assert_eq!(slide_line([2, 2, 0, 0]), ([4, 0, 0, 0], 4));
        assert_eq!(slide_line([2, 2, 2, 2]), ([4, 4, 0, 0], 8));
        assert_eq!(slide_line([4, 0, 4, 8]), ([8, 8, 0, 0], 8));
        assert_eq!(slide_line([2, 4, 8, 16]), ([2, 4, 8, 16], 0));
    }

    #[test]
    fn directions_are_rotations() {
        let b: Board = [[2, 0, 0, 2], [0, 0, 0, 0], [0, 0, 0, 0], [2, 0, 0, 0]];
        let (l, g, _) = apply_move(&b, Direction::Left);
        assert_eq!(l[0], [4, 0, 0, 0]);
        assert_eq!(g, 4);
        let (u, _, _) = apply_move(&b, Direction::Up);
        assert_eq!(u[0], [4, 0, 0, 2]);
        let (d, _, _) = apply_move(&b, Direction::Down);
        assert_eq!(d[3], [4, 0, 0, 2]);
    }

    #[test]
    fn full_board_without_pairs_is_stuck() {
        let b: Board = [[2, 4, 2, 4], [4, 2, 4, 2], [2, 4, 2, 4], [4, 2, 4, 2]];
        assert!(!has_moves(&b));
    }
}
