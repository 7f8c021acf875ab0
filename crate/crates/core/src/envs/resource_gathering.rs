use super::{Outcome, Tabular};
use crate::error::{Error, Result};

const GOLD: usize = 1;
const GEM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Cell {
    Empty,
    Home,
    Gold,
    Gem,
    Enemy,
}

/// Collect gold and/or a gem and bring them home; objectives are
/// `(enemy, gold, gem)`. Entering an enemy cell ends the episode with
/// reward `(-1, 0, 0)` with probability `attack_prob`. Arriving home while
/// carrying something delivers it and ends the episode. States are
/// `cell * 4 + carried`, `carried` a gold/gem bit set.
#[derive(Clone, Debug)]
pub struct ResourceGathering {
    cells: Vec<Cell>,
    rows: usize,
    cols: usize,
    home: usize,
    attack_prob: f64,
}

impl ResourceGathering {
    pub fn new(map: &[String], attack_prob: f64) -> Result<Self> {
        let rows = map.len();
        let cols = map.first().map(|r| r.chars().count()).unwrap_or(0);
        if rows == 0 || cols == 0 || map.iter().any(|r| r.chars().count() != cols) {
            return Err(Error::InvalidArgument("resource gathering map must be rectangular".into()));
        }
        if !(0.0..=1.0).contains(&attack_prob) {
            return Err(Error::InvalidArgument("attack_prob must be in [0, 1]".into()));
        }
        let mut cells = Vec::with_capacity(rows * cols);
        for ch in map.iter().flat_map(|r| r.chars()) {
            cells.push(match ch {
                '.' => Cell::Empty,
                'H' => Cell::Home,
                'G' => Cell::Gold,
                'J' => Cell::Gem,
                'E' => Cell::Enemy,
                other => return Err(Error::InvalidArgument(format!("unknown map cell `{other}`"))),
            });
        }
        let homes: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] == Cell::Home).collect();
        if homes.len() != 1 {
            return Err(Error::InvalidArgument("map needs exactly one home cell".into()));
        }
        Ok(Self { cells, rows, cols, home: homes[0], attack_prob })
    }
}

impl Tabular for ResourceGathering {
    fn n_states(&self) -> usize {
        self.cells.len() * 4
    }

    fn n_actions(&self) -> usize {
        4
    }

    fn start(&self) -> usize {
        self.home * 4
    }

    fn outcomes(&self, s: usize, a: usize) -> Vec<Outcome> {
        let (cell, mut carried) = (s / 4, s % 4);
        let (r, c) = ((cell / self.cols) as isize, (cell % self.cols) as isize);
        let (nr, nc) = match a {
            0 => (r - 1, c),
            1 => (r + 1, c),
            2 => (r, c - 1),
            _ => (r, c + 1),
        };
        let next_cell = if nr >= 0 && nc >= 0 && (nr as usize) < self.rows && (nc as usize) < self.cols {
            nr as usize * self.cols + nc as usize
        } else {
            cell
        };
        let zero = vec![0.0; 3];
        match self.cells[next_cell] {
            Cell::Gold => carried |= GOLD,
            Cell::Gem => carried |= GEM,
            Cell::Home if carried != 0 => {
                let reward = vec![0.0, (carried & GOLD != 0) as u8 as f64, (carried & GEM != 0) as u8 as f64];
                return vec![Outcome { prob: 1.0, next: next_cell * 4, reward, terminal: true }];
            }
            Cell::Enemy if self.attack_prob > 0.0 => {
                return vec![
                    Outcome { prob: self.attack_prob, next: next_cell * 4, reward: vec![-1.0, 0.0, 0.0], terminal: true },
                    Outcome { prob: 1.0 - self.attack_prob, next: next_cell * 4 + carried, reward: zero, terminal: false },
                ];
            }
            _ => {}
        }
        vec![Outcome { prob: 1.0, next: next_cell * 4 + carried, reward: zero, terminal: false }]
    }
}
