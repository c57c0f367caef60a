use rand::Rng;
use rand_distr::StandardNormal;

use super::layout::{Cell, MazeLayout};
use super::noise::NoiseSpec;
use crate::datasets::{Dataset, Role, Trajectory};
use crate::error::{LwailError, Result};

/// Physical constants of the point mass.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMassConfig {
    pub mass: f64,
    /// Per-step velocity retention.
    pub damping: f64,
    pub dt: f64,
    pub horizon: usize,
    pub max_speed: f64,
    /// Half side of the square collision body.
    pub radius: f64,
    pub goal_radius: f64,
    pub terminate_on_goal: bool,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            damping: 0.95,
            dt: 0.1,
            horizon: 300,
            max_speed: 2.0,
            radius: 0.1,
            goal_radius: 0.5,
            terminate_on_goal: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    /// 1 inside the goal radius, else 0.
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Deterministic state-feedback policy.
pub trait Policy {
    fn action(&self, state: &[f64]) -> Vec<f64>;
}

/// Force-driven ball in a maze. Cell `(r, c)` occupies
/// `[c − ½, c + ½] × [r − ½, r + ½]`, so cell centres sit on integer
/// coordinates. The observation is `(x, y, vx, vy)` with `x` the column axis.
#[derive(Clone, Debug)]
pub struct PointMassMaze {
    layout: MazeLayout,
    pub cfg: PointMassConfig,
    pos: [f64; 2],
    vel: [f64; 2],
    t: usize,
    noise: NoiseSpec,
}

pub fn cell_center((r, c): Cell) -> [f64; 2] {
    [c as f64, r as f64]
}

impl PointMassMaze {
    pub fn new(layout: MazeLayout, cfg: PointMassConfig) -> Self {
        let pos = cell_center(layout.start());
        Self { layout, cfg, pos, vel: [0.0; 2], t: 0, noise: NoiseSpec::none() }
    }

    pub fn umaze() -> Self {
        Self::new(MazeLayout::point_umaze(), PointMassConfig::default())
    }

    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    pub const fn state_dim() -> usize {
        4
    }

    pub const fn action_dim() -> usize {
        2
    }

    pub fn state(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    pub fn elapsed(&self) -> usize {
        self.t
    }

    pub fn start_pos(&self) -> [f64; 2] {
        cell_center(self.layout.start())
    }

    pub fn goal_pos(&self) -> [f64; 2] {
        cell_center(self.layout.goal())
    }

    pub fn at_goal(&self, pos: [f64; 2]) -> bool {
        let g = self.goal_pos();
        ((pos[0] - g[0]).powi(2) + (pos[1] - g[1]).powi(2)).sqrt() < self.cfg.goal_radius
    }

    pub fn cell_of(&self, pos: [f64; 2]) -> Cell {
        ((pos[1] + 0.5).floor().max(0.0) as usize, (pos[0] + 0.5).floor().max(0.0) as usize)
    }

    /// The collision square lies entirely in free cells. It is smaller than
    /// a cell, so checking its four corners is exhaustive.
    pub fn is_legal(&self, pos: [f64; 2]) -> bool {
        let r = self.cfg.radius;
        [(-r, -r), (-r, r), (r, -r), (r, r)].iter().all(|&(dx, dy)| {
            let (x, y) = (pos[0] + dx, pos[1] + dy);
            !self.layout.is_wall_at((y + 0.5).floor() as isize, (x + 0.5).floor() as isize)
        })
    }

    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) -> Result<()> {
        if !self.is_legal(pos) {
            return Err(LwailError::InvalidInput(format!("position {pos:?} overlaps a wall")));
        }
        self.pos = pos;
        self.vel = vel;
        self.t = 0;
        Ok(())
    }

    /// Start position, Gaussian-perturbed by `noise.init_std` and redrawn
    /// until legal; zero velocity. `noise` also sets the action noise for
    /// the episode.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R, noise: &NoiseSpec) -> Vec<f64> {
        self.noise = *noise;
        self.t = 0;
        self.vel = [0.0; 2];
        let start = self.start_pos();
        self.pos = if noise.init_std == 0.0 {
            start
        } else {
            loop {
                let p = [
                    start[0] + noise.init_std * rng.sample::<f64, _>(StandardNormal),
                    start[1] + noise.init_std * rng.sample::<f64, _>(StandardNormal),
                ];
                if self.is_legal(p) {
                    break p;
                }
            }
        };
        self.state()
    }

    /// Legal position drawn uniformly over the free cells, zero velocity.
    pub fn reset_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R, noise: &NoiseSpec) -> Vec<f64> {
        self.noise = *noise;
        self.t = 0;
        self.vel = [0.0; 2];
        let free = self.layout.free_cells();
        self.pos = loop {
            let c = cell_center(free[rng.gen_range(0..free.len())]);
            let p = [c[0] + rng.gen_range(-0.5..0.5), c[1] + rng.gen_range(-0.5..0.5)];
            if self.is_legal(p) {
                break p;
            }
        };
        self.state()
    }

    /// Semi-implicit Euler: velocity first, then position one axis at a time;
    /// an axis move that would overlap a wall is cancelled and that velocity
    /// component zeroed.
    pub fn step<R: Rng + ?Sized>(&mut self, action: &[f64], rng: &mut R) -> Result<Step> {
        if action.len() != 2 || action.iter().any(|a| !a.is_finite() || a.abs() > 1.0 + 1e-12) {
            return Err(LwailError::InvalidInput(format!("action {action:?} outside [-1, 1]²")));
        }
        let mut a = [action[0], action[1]];
        if self.noise.action_std > 0.0 {
            for v in &mut a {
                *v = (*v + self.noise.action_std * rng.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0);
            }
        }
        let c = &self.cfg;
        for i in 0..2 {
            self.vel[i] = c.damping * self.vel[i] + c.dt * a[i] / c.mass;
        }
        let speed = (self.vel[0].powi(2) + self.vel[1].powi(2)).sqrt();
        if speed > c.max_speed {
            let k = c.max_speed / speed;
            self.vel = [self.vel[0] * k, self.vel[1] * k];
        }
        for i in 0..2 {
            let mut p = self.pos;
            p[i] += c.dt * self.vel[i];
            if self.is_legal(p) {
                self.pos = p;
            } else {
                self.vel[i] = 0.0;
            }
        }
        self.t += 1;
        let at_goal = self.at_goal(self.pos);
        let terminal = at_goal && self.cfg.terminate_on_goal;
        Ok(Step {
            state: self.state(),
            reward: if at_goal { 1.0 } else { 0.0 },
            terminal,
            truncated: !terminal && self.t >= self.cfg.horizon,
        })
    }

    /// Runs `policy` from a reset with `noise` until the goal is reached or
    /// the horizon elapses; returns the visited states and whether the goal
    /// was reached.
    pub fn rollout<P: Policy + ?Sized, R: Rng + ?Sized>(
        &mut self,
        policy: &P,
        noise: &NoiseSpec,
        rng: &mut R,
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, bool)> {
        let mut s = self.reset(rng, noise);
        let mut states = vec![s.clone()];
        let mut actions = Vec::new();
        loop {
            let a = policy.action(&s);
            let st = self.step(&a, rng)?;
            let done = st.done();
            s = st.state.clone();
            states.push(st.state);
            actions.push(a);
            if st.reward > 0.0 {
                return Ok((states, actions, true));
            }
            if done {
                return Ok((states, actions, false));
            }
        }
    }

    /// State-only demonstration by the waypoint controller, ending at the
    /// goal. With `noise.init_std > 0` the start is perturbed from `seed`.
    pub fn expert_trajectory(&self, seed: u64, noise: &NoiseSpec) -> Result<Trajectory> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut env = self.clone();
        env.cfg.terminate_on_goal = true;
        let start = env.reset(&mut rng, noise);
        if env.at_goal([start[0], start[1]]) {
            return Trajectory::states_only(vec![start], true);
        }
        let controller = WaypointController::new(self.layout.clone());
        let mut s = start;
        let mut states = vec![s.clone()];
        loop {
            let st = env.step(&controller.action(&s), &mut rng)?;
            s = st.state.clone();
            states.push(st.state);
            if st.terminal {
                return Trajectory::states_only(states, true);
            }
            if st.truncated {
                return Err(LwailError::Generation(format!(
                    "waypoint controller missed the goal within {} steps (seed {seed})",
                    env.cfg.horizon
                )));
            }
        }
    }

    /// Uniform-random forces from uniformly drawn legal starts, in episodes
    /// of at most `episode_len` steps, until exactly `n` transitions exist.
    /// The goal does not end random episodes.
    pub fn random_rollout<R: Rng + ?Sized>(&self, n: usize, episode_len: usize, rng: &mut R) -> Result<Dataset> {
        if n == 0 || episode_len == 0 {
            return Err(LwailError::InvalidInput("random rollout needs n ≥ 1 and episode_len ≥ 1".into()));
        }
        let mut env = self.clone();
        env.cfg.terminate_on_goal = false;
        env.cfg.horizon = usize::MAX;
        let mut ds = Dataset::new(Role::Random, 4, 2)?;
        let mut left = n;
        while left > 0 {
            let len = left.min(episode_len);
            let mut states = vec![env.reset_uniform(rng, &NoiseSpec::none())];
            let mut actions = Vec::with_capacity(len);
            for _ in 0..len {
                let a = vec![rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
                states.push(env.step(&a, rng)?.state);
                actions.push(a);
            }
            ds.push(Trajectory::new(states, Some(actions), false)?)?;
            left -= len;
        }
        Ok(ds)
    }
}

/// Proportional-derivative tracking of the next cell centre on a shortest
/// grid path to the goal.
#[derive(Clone, Debug)]
pub struct WaypointController {
    layout: MazeLayout,
    to_goal: Vec<Option<usize>>,
    pub kp: f64,
    pub kd: f64,
}

impl WaypointController {
    pub fn new(layout: MazeLayout) -> Self {
        let to_goal = layout.bfs_distances(layout.goal());
        Self { layout, to_goal, kp: 4.0, kd: 3.0 }
    }

    fn target(&self, pos: [f64; 2]) -> [f64; 2] {
        let cell = ((pos[1] + 0.5).floor() as usize, (pos[0] + 0.5).floor() as usize);
        match self.layout.greedy_move(cell, self.layout.goal(), &self.to_goal) {
            Some(a) => cell_center(self.layout.neighbor(cell, a)),
            None => cell_center(self.layout.goal()),
        }
    }
}

impl Policy for WaypointController {
    fn action(&self, state: &[f64]) -> Vec<f64> {
        let target = self.target([state[0], state[1]]);
        (0..2)
            .map(|i| (self.kp * (target[i] - state[i]) - self.kd * state[2 + i]).clamp(-1.0, 1.0))
            .collect()
    }
}
