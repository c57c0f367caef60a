//! Trajectories, role-tagged datasets, the replay buffer and the text
//! dataset format.

use std::fmt::Write as _;
use std::path::Path;

use lwail_autodiff::Tensor;
use rand::Rng;

use crate::error::{LwailError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// State-only demonstrations.
    Expert,
    /// Exploration data; may carry actions.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    /// `actions[i]` leads from `states[i]` to `states[i + 1]`.
    pub actions: Option<Vec<Vec<f64>>>,
    /// The last state ended the episode (goal), as opposed to a cut.
    pub terminal: bool,
}

impl Trajectory {
    pub fn new(states: Vec<Vec<f64>>, actions: Option<Vec<Vec<f64>>>, terminal: bool) -> Result<Self> {
        if states.is_empty() {
            return Err(LwailError::InvalidInput("a trajectory needs at least one state".into()));
        }
        if let Some(a) = &actions {
            if a.len() + 1 != states.len() {
                return Err(LwailError::InvalidInput(format!(
                    "{} actions for {} states",
                    a.len(),
                    states.len()
                )));
            }
        }
        Ok(Self { states, actions, terminal })
    }

    pub fn states_only(states: Vec<Vec<f64>>, terminal: bool) -> Result<Self> {
        Self::new(states, None, terminal)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn strip_actions(mut self) -> Self {
        self.actions = None;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub role: Role,
    pub state_dim: usize,
    pub action_dim: usize,
    trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(role: Role, state_dim: usize, action_dim: usize) -> Result<Self> {
        if role == Role::Expert && action_dim != 0 {
            return Err(LwailError::InvalidInput("expert datasets are state-only".into()));
        }
        if state_dim == 0 {
            return Err(LwailError::InvalidInput("state_dim must be positive".into()));
        }
        Ok(Self { role, state_dim, action_dim, trajectories: Vec::new() })
    }

    pub fn from_trajectories(
        role: Role,
        state_dim: usize,
        action_dim: usize,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self> {
        let mut d = Self::new(role, state_dim, action_dim)?;
        for t in trajectories {
            d.push(t)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, traj: Trajectory) -> Result<()> {
        if traj.states.iter().any(|s| s.len() != self.state_dim) {
            return Err(LwailError::InvalidInput(format!("state width differs from {}", self.state_dim)));
        }
        match (&traj.actions, self.action_dim) {
            (Some(_), 0) => {
                return Err(LwailError::InvalidInput("this dataset does not carry actions".into()))
            }
            (Some(a), k) if a.iter().any(|x| x.len() != k) => {
                return Err(LwailError::InvalidInput(format!("action width differs from {k}")))
            }
            (None, k) if k > 0 && traj.len() > 1 => {
                return Err(LwailError::InvalidInput("trajectory is missing actions".into()))
            }
            _ => {}
        }
        self.trajectories.push(traj);
        Ok(())
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn num_states(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn num_pairs(&self) -> usize {
        self.trajectories.iter().map(|t| t.len().saturating_sub(1)).sum()
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.trajectories.iter().flat_map(|t| t.states.iter().map(Vec::as_slice))
    }

    /// Adjacent within-trajectory pairs; never spans an episode boundary.
    pub fn state_pairs(&self) -> Vec<(&[f64], &[f64])> {
        self.trajectories
            .iter()
            .flat_map(|t| t.states.windows(2).map(|w| (w[0].as_slice(), w[1].as_slice())))
            .collect()
    }

    /// `[n, state_dim]` tensors of pair sources and successors.
    pub fn pair_tensors(&self) -> (Tensor, Tensor) {
        let pairs = self.state_pairs();
        let n = pairs.len();
        let mut s = Vec::with_capacity(n * self.state_dim);
        let mut s2 = Vec::with_capacity(n * self.state_dim);
        for (a, b) in pairs {
            s.extend_from_slice(a);
            s2.extend_from_slice(b);
        }
        (
            Tensor::new(vec![n, self.state_dim], s).unwrap(),
            Tensor::new(vec![n, self.state_dim], s2).unwrap(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Text form: header, then `traj_id step s.. [a..] done` per state. The
    /// last state of an action-carrying trajectory has `nan` actions.
    pub fn to_text(&self) -> String {
        let mut out = format!("lwail-dataset v1 state_dim={} action_dim={}\n", self.state_dim, self.action_dim);
        for (id, t) in self.trajectories.iter().enumerate() {
            for (step, s) in t.states.iter().enumerate() {
                write!(out, "{id} {step}").unwrap();
                for v in s {
                    write!(out, " {v}").unwrap();
                }
                if self.action_dim > 0 {
                    match t.actions.as_ref().and_then(|a| a.get(step)) {
                        Some(a) => a.iter().for_each(|v| write!(out, " {v}").unwrap()),
                        None => (0..self.action_dim).for_each(|_| out.push_str(" nan")),
                    }
                }
                let done = t.terminal && step + 1 == t.len();
                writeln!(out, " {}", u8::from(done)).unwrap();
            }
        }
        out
    }

    pub fn load(path: &Path, role: Role) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?, role)
    }

    pub fn from_text(text: &str, role: Role) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(LwailError::Parse { line: 1, msg: "empty file".into() })?;
        let (state_dim, action_dim) = parse_header(header)?;
        let mut ds = Dataset::new(role, state_dim, action_dim)
            .map_err(|e| LwailError::Parse { line: 1, msg: e.to_string() })?;
        let width = 2 + state_dim + action_dim + 1;

        let mut cur: Option<(usize, Vec<Vec<f64>>, Vec<Vec<f64>>, bool)> = None;
        let flush = |ds: &mut Dataset, t: (usize, Vec<Vec<f64>>, Vec<Vec<f64>>, bool), line: usize| {
            let (_, states, mut actions, terminal) = t;
            let actions = if action_dim > 0 {
                actions.pop();
                Some(actions)
            } else {
                None
            };
            ds.push(Trajectory::new(states, actions, terminal)?)
                .map_err(|e| LwailError::Parse { line, msg: e.to_string() })
        };
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != width {
                return Err(LwailError::Parse {
                    line: lineno,
                    msg: format!("row has {} columns, header implies {width}", toks.len()),
                });
            }
            let int = |s: &str, what: &str| {
                s.parse::<usize>()
                    .map_err(|_| LwailError::Parse { line: lineno, msg: format!("bad {what} {s:?}") })
            };
            let real = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| LwailError::Parse { line: lineno, msg: format!("bad number {s:?}") })
            };
            let id = int(toks[0], "trajectory id")?;
            let step = int(toks[1], "step")?;
            let state = toks[2..2 + state_dim].iter().map(|s| real(s)).collect::<Result<Vec<_>>>()?;
            let action = toks[2 + state_dim..2 + state_dim + action_dim]
                .iter()
                .map(|s| real(s))
                .collect::<Result<Vec<_>>>()?;
            let done = match toks[width - 1] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(LwailError::Parse { line: lineno, msg: format!("done flag {other:?}") })
                }
            };
            let continues = matches!(&cur, Some((cid, states, _, false)) if *cid == id && states.len() == step);
            if !continues {
                if let Some(t) = cur.take() {
                    flush(&mut ds, t, lineno)?;
                }
                if step != 0 {
                    return Err(LwailError::Parse { line: lineno, msg: format!("trajectory {id} starts at step {step}") });
                }
                cur = Some((id, Vec::new(), Vec::new(), false));
            }
            let t = cur.as_mut().unwrap();
            t.1.push(state);
            t.2.push(action);
            t.3 = done;
        }
        if let Some(t) = cur.take() {
            let n = text.lines().count();
            flush(&mut ds, t, n)?;
        }
        Ok(ds)
    }
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let bad = |msg: &str| LwailError::Parse { line: 1, msg: msg.to_string() };
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != "lwail-dataset" || toks[1] != "v1" {
        return Err(bad("expected header `lwail-dataset v1 state_dim=<d> action_dim=<k>`"));
    }
    let field = |tok: &str, key: &str| {
        tok.strip_prefix(key)
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| bad(&format!("bad header field {tok:?}")))
    };
    Ok((field(toks[2], "state_dim=")?, field(toks[3], "action_dim=")?))
}

/// One stored transition.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayEntry {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s2: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Row-aligned mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionBatch {
    pub s: Tensor,
    pub a: Tensor,
    pub s2: Tensor,
    pub reward: Vec<f64>,
    pub done: Vec<bool>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

/// Fixed-capacity ring; once full, the oldest entry is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    state_dim: usize,
    action_dim: usize,
    capacity: usize,
    s: Vec<f64>,
    a: Vec<f64>,
    s2: Vec<f64>,
    reward: Vec<f64>,
    done: Vec<bool>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(state_dim: usize, action_dim: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(LwailError::InvalidInput("replay capacity must be positive".into()));
        }
        Ok(Self {
            state_dim,
            action_dim,
            capacity,
            s: Vec::new(),
            a: Vec::new(),
            s2: Vec::new(),
            reward: Vec::new(),
            done: Vec::new(),
            inserted: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total insertions, including overwritten ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, e: ReplayEntry) -> Result<()> {
        if e.s.len() != self.state_dim || e.s2.len() != self.state_dim || e.a.len() != self.action_dim {
            return Err(LwailError::InvalidInput("replay entry shape".into()));
        }
        let (ds, da) = (self.state_dim, self.action_dim);
        if self.len() < self.capacity {
            self.s.extend_from_slice(&e.s);
            self.a.extend_from_slice(&e.a);
            self.s2.extend_from_slice(&e.s2);
            self.reward.push(e.reward);
            self.done.push(e.done);
        } else {
            let i = (self.inserted % self.capacity as u64) as usize;
            self.s[i * ds..(i + 1) * ds].copy_from_slice(&e.s);
            self.a[i * da..(i + 1) * da].copy_from_slice(&e.a);
            self.s2[i * ds..(i + 1) * ds].copy_from_slice(&e.s2);
            self.reward[i] = e.reward;
            self.done[i] = e.done;
        }
        self.inserted += 1;
        Ok(())
    }

    /// Entry at storage slot `i`.
    pub fn get(&self, i: usize) -> ReplayEntry {
        let (ds, da) = (self.state_dim, self.action_dim);
        ReplayEntry {
            s: self.s[i * ds..(i + 1) * ds].to_vec(),
            a: self.a[i * da..(i + 1) * da].to_vec(),
            s2: self.s2[i * ds..(i + 1) * ds].to_vec(),
            reward: self.reward[i],
            done: self.done[i],
        }
    }

    /// Storage slots of the last `m` insertions, oldest first.
    pub fn recent_slots(&self, m: usize) -> Vec<usize> {
        let m = m.min(self.len());
        let end = self.inserted;
        (end - m as u64..end).map(|k| (k % self.capacity as u64) as usize).collect()
    }

    pub fn set_reward(&mut self, slot: usize, reward: f64) {
        self.reward[slot] = reward;
    }

    /// `n` draws uniformly with replacement over the filled region.
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<TransitionBatch> {
        if self.is_empty() {
            return Err(LwailError::Unavailable("replay buffer is empty".into()));
        }
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..self.len())).collect();
        Ok(self.gather(&idx))
    }

    pub fn gather(&self, idx: &[usize]) -> TransitionBatch {
        let (ds, da) = (self.state_dim, self.action_dim);
        let n = idx.len();
        let mut s = Vec::with_capacity(n * ds);
        let mut a = Vec::with_capacity(n * da);
        let mut s2 = Vec::with_capacity(n * ds);
        for &i in idx {
            s.extend_from_slice(&self.s[i * ds..(i + 1) * ds]);
            a.extend_from_slice(&self.a[i * da..(i + 1) * da]);
            s2.extend_from_slice(&self.s2[i * ds..(i + 1) * ds]);
        }
        TransitionBatch {
            s: Tensor::new(vec![n, ds], s).unwrap(),
            a: Tensor::new(vec![n, da], a).unwrap(),
            s2: Tensor::new(vec![n, ds], s2).unwrap(),
            reward: idx.iter().map(|&i| self.reward[i]).collect(),
            done: idx.iter().map(|&i| self.done[i]).collect(),
        }
    }
}
