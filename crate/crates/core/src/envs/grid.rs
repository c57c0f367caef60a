use rand::Rng;
use rand_distr::StandardNormal;

use super::layout::{Cell, MazeLayout, MOVES};
use super::noise::NoiseSpec;
use crate::datasets::{Dataset, Role, Trajectory};
use crate::error::{LwailError, Result};
use crate::oracle::TabularMdp;

/// Initial distribution for tabular export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mu0 {
    Start,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridStep {
    pub cell: Cell,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

impl GridStep {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Four-action grid maze. With probability `slip` the executed move is drawn
/// uniformly from all four moves instead of the requested one.
#[derive(Clone, Debug)]
pub struct GridMaze {
    layout: MazeLayout,
    pub gamma: f64,
    pub slip: f64,
    pub horizon: usize,
    cell: Cell,
    t: usize,
}

impl GridMaze {
    pub fn new(layout: MazeLayout) -> Self {
        let cell = layout.start();
        Self { layout, gamma: 0.99, slip: 0.0, horizon: 100, cell, t: 0 }
    }

    pub fn umaze() -> Self {
        Self::new(MazeLayout::grid_umaze())
    }

    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    pub fn cell(&self) -> Cell {
        self.cell
    }

    pub const fn num_actions() -> usize {
        MOVES.len()
    }

    pub const fn state_dim() -> usize {
        2
    }

    /// Normalized `(x, y) = (col, row) / (extent − 1)` in `[0, 1]²`.
    pub fn features(&self, (r, c): Cell) -> Vec<f64> {
        vec![
            c as f64 / (self.layout.width() - 1) as f64,
            r as f64 / (self.layout.height() - 1) as f64,
        ]
    }

    /// Inverse of [`GridMaze::features`] for free cells.
    pub fn cell_of(&self, f: &[f64]) -> Option<Cell> {
        let c = (f[0] * (self.layout.width() - 1) as f64).round();
        let r = (f[1] * (self.layout.height() - 1) as f64).round();
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let cell = (r as usize, c as usize);
        (!self.layout.is_wall(cell)).then_some(cell)
    }

    /// Returns the start cell, or with `init_std > 0` the start shifted by a
    /// rounded Gaussian offset, redrawn until it lands on a free cell.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R, noise: &NoiseSpec) -> Cell {
        self.t = 0;
        let (sr, sc) = self.layout.start();
        self.cell = if noise.init_std == 0.0 {
            (sr, sc)
        } else {
            loop {
                let dr: f64 = rng.sample::<f64, _>(StandardNormal) * noise.init_std;
                let dc: f64 = rng.sample::<f64, _>(StandardNormal) * noise.init_std;
                let (r, c) = (sr as isize + dr.round() as isize, sc as isize + dc.round() as isize);
                if !self.layout.is_wall_at(r, c) {
                    break (r as usize, c as usize);
                }
            }
        };
        self.cell
    }

    pub fn reset_to(&mut self, cell: Cell) -> Result<()> {
        if self.layout.is_wall(cell) {
            return Err(LwailError::InvalidInput(format!("cell {cell:?} is a wall")));
        }
        self.cell = cell;
        self.t = 0;
        Ok(())
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<GridStep> {
        if action >= MOVES.len() {
            return Err(LwailError::InvalidInput(format!("grid action {action} outside 0..4")));
        }
        let executed = if self.slip > 0.0 && rng.gen::<f64>() < self.slip {
            rng.gen_range(0..MOVES.len())
        } else {
            action
        };
        self.cell = self.layout.neighbor(self.cell, executed);
        self.t += 1;
        let at_goal = self.cell == self.layout.goal();
        Ok(GridStep {
            cell: self.cell,
            reward: if at_goal { 1.0 } else { 0.0 },
            terminal: at_goal,
            truncated: !at_goal && self.t >= self.horizon,
        })
    }

    /// Shortest BFS path from the start, as normalized states.
    pub fn expert_trajectory(&self) -> Trajectory {
        let path = self.layout.shortest_path(self.layout.start(), self.layout.goal()).expect("reachable by construction");
        Trajectory::states_only(path.into_iter().map(|c| self.features(c)).collect(), true).unwrap()
    }

    /// Uniform-random moves from uniformly drawn free cells; episodes of at
    /// most `episode_len` moves, ignoring the goal, until exactly `n`
    /// transitions are collected. Actions are stored as the move index.
    pub fn random_rollout<R: Rng + ?Sized>(&self, n: usize, episode_len: usize, rng: &mut R) -> Result<Dataset> {
        if n == 0 || episode_len == 0 {
            return Err(LwailError::InvalidInput("random rollout needs n ≥ 1 and episode_len ≥ 1".into()));
        }
        let free = self.layout.free_cells();
        let mut ds = Dataset::new(Role::Random, 2, 1)?;
        let mut left = n;
        while left > 0 {
            let len = left.min(episode_len);
            let mut cell = free[rng.gen_range(0..free.len())];
            let mut states = vec![self.features(cell)];
            let mut actions = Vec::with_capacity(len);
            for _ in 0..len {
                let requested = rng.gen_range(0..MOVES.len());
                let executed = if self.slip > 0.0 && rng.gen::<f64>() < self.slip {
                    rng.gen_range(0..MOVES.len())
                } else {
                    requested
                };
                cell = self.layout.neighbor(cell, executed);
                states.push(self.features(cell));
                actions.push(vec![requested as f64]);
            }
            ds.push(Trajectory::new(states, Some(actions), false)?)?;
            left -= len;
        }
        Ok(ds)
    }

    /// Tabular model over free cells (row-major index order). The goal is an
    /// ordinary state: the export carries dynamics only.
    pub fn to_tabular(&self, mu0: Mu0) -> TabularMdp {
        let free = self.layout.free_cells();
        let n = free.len();
        let index_of = |cell: Cell| free.iter().position(|&f| f == cell).unwrap();
        let na = MOVES.len();
        let mut p = vec![0.0; n * na * n];
        for (s, &cell) in free.iter().enumerate() {
            for a in 0..na {
                let row = &mut p[(s * na + a) * n..(s * na + a + 1) * n];
                row[index_of(self.layout.neighbor(cell, a))] += 1.0 - self.slip;
                for b in 0..na {
                    row[index_of(self.layout.neighbor(cell, b))] += self.slip / na as f64;
                }
            }
        }
        let mu = match mu0 {
            Mu0::Start => {
                let mut m = vec![0.0; n];
                m[index_of(self.layout.start())] = 1.0;
                m
            }
            Mu0::Uniform => vec![1.0 / n as f64; n],
        };
        TabularMdp::new(n, na, p, mu, self.gamma).expect("grid export is a valid MDP")
    }
}
