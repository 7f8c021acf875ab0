use super::{Outcome, Tabular};
use crate::error::{Error, Result};

/// Submarine on a grid; every step costs one unit of time and the episode
/// ends on reaching a treasure. Moves into the seabed or off the grid are
/// no-ops. Actions: 0 up, 1 down, 2 left, 3 right.
#[derive(Clone, Debug)]
pub struct DeepSeaTreasure {
    grid: Vec<Vec<f64>>,
    rows: usize,
    cols: usize,
}

impl DeepSeaTreasure {
    pub fn new(grid: Vec<Vec<f64>>) -> Result<Self> {
        let rows = grid.len();
        let cols = grid.first().map(|r| r.len()).unwrap_or(0);
        if rows == 0 || cols == 0 || grid.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("deep sea treasure grid must be rectangular".into()));
        }
        if grid[0][0] != 0.0 {
            return Err(Error::InvalidArgument("start cell must be water".into()));
        }
        Ok(Self { grid, rows, cols })
    }

    fn cell(&self, s: usize) -> (usize, usize) {
        (s / self.cols, s % self.cols)
    }
}

impl Tabular for DeepSeaTreasure {
    fn n_states(&self) -> usize {
        self.rows * self.cols
    }

    fn n_actions(&self) -> usize {
        4
    }

    fn start(&self) -> usize {
        0
    }

    fn outcomes(&self, s: usize, a: usize) -> Vec<Outcome> {
        let (r, c) = self.cell(s);
        let (dr, dc): (isize, isize) = match a {
            0 => (-1, 0),
            1 => (1, 0),
            2 => (0, -1),
            _ => (0, 1),
        };
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        let inside = nr >= 0 && nc >= 0 && (nr as usize) < self.rows && (nc as usize) < self.cols;
        let (nr, nc) = if inside && self.grid[nr as usize][nc as usize] >= 0.0 { (nr as usize, nc as usize) } else { (r, c) };
        let v = self.grid[nr][nc];
        let treasure = if v > 0.0 { v } else { 0.0 };
        vec![Outcome { prob: 1.0, next: nr * self.cols + nc, reward: vec![treasure, -1.0], terminal: v > 0.0 }]
    }
}
