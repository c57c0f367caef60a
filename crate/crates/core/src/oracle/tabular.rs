use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{LwailError, Result};

/// Finite MDP with `P[s][a][s']` stored flat in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    p: Vec<f64>,
    mu0: Vec<f64>,
    gamma: f64,
}

impl TabularMdp {
    pub fn new(n_states: usize, n_actions: usize, p: Vec<f64>, mu0: Vec<f64>, gamma: f64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(LwailError::InvalidInput("empty state or action set".into()));
        }
        if p.len() != n_states * n_actions * n_states || mu0.len() != n_states {
            return Err(LwailError::InvalidInput("transition table or μ0 has the wrong size".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(LwailError::InvalidInput(format!("γ = {gamma} outside [0, 1)")));
        }
        for (k, row) in p.chunks(n_states).enumerate() {
            if row.iter().any(|&x| !(x >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(LwailError::InvalidInput(format!(
                    "P[{}][{}] is not a distribution",
                    k / n_actions,
                    k % n_actions
                )));
            }
        }
        if mu0.iter().any(|&x| !(x >= 0.0)) || (mu0.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(LwailError::InvalidInput("μ0 is not a distribution".into()));
        }
        Ok(Self { n_states, n_actions, p, mu0, gamma })
    }

    /// Deterministic successor table `next[s][a]`.
    pub fn deterministic(next: &[Vec<usize>], mu0: Vec<f64>, gamma: f64) -> Result<Self> {
        let n = next.len();
        let na = next.first().map_or(0, Vec::len);
        let mut p = vec![0.0; n * na * n];
        for (s, row) in next.iter().enumerate() {
            if row.len() != na {
                return Err(LwailError::InvalidInput("ragged successor table".into()));
            }
            for (a, &t) in row.iter().enumerate() {
                if t >= n {
                    return Err(LwailError::InvalidInput(format!("successor {t} out of range")));
                }
                p[(s * na + a) * n + t] = 1.0;
            }
        }
        Self::new(n, na, p, mu0, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, self.p.clone(), self.mu0.clone(), gamma)
    }

    pub fn with_mu0(&self, mu0: Vec<f64>) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, self.p.clone(), mu0, self.gamma)
    }

    /// `P[s][a][·]`.
    pub fn transitions(&self, s: usize, a: usize) -> &[f64] {
        let n = self.n_states;
        &self.p[(s * self.n_actions + a) * n..(s * self.n_actions + a + 1) * n]
    }

    /// `P_π[s][s'] = Σ_a π(a|s) P(s'|s,a)`.
    pub fn policy_matrix(&self, pi: &TabularPolicy) -> Result<DMatrix<f64>> {
        self.check_policy(pi)?;
        let n = self.n_states;
        let mut m = DMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = pi.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (t, &p) in self.transitions(s, a).iter().enumerate() {
                    m[(s, t)] += w * p;
                }
            }
        }
        Ok(m)
    }

    fn check_policy(&self, pi: &TabularPolicy) -> Result<()> {
        if pi.n_states != self.n_states || pi.n_actions != self.n_actions {
            return Err(LwailError::InvalidInput("policy shape does not match the MDP".into()));
        }
        Ok(())
    }

    fn sample_from<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, pi: &TabularPolicy, rng: &mut R) -> usize {
        let a = Self::sample_from(pi.row(s), rng);
        Self::sample_from(self.transitions(s, a), rng)
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        Self::sample_from(&self.mu0, rng)
    }
}

/// `π[s][a]`, rows summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(LwailError::InvalidInput("policy table has the wrong size".into()));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            if row.iter().any(|&x| !(x >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(LwailError::InvalidInput(format!("π[{s}] is not a distribution")));
            }
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(LwailError::InvalidInput(format!("action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, probs: vec![1.0 / n_actions as f64; n_states * n_actions] }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

/// Discounted state and state-pair occupancies.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyResult {
    pub d_s: Vec<f64>,
    /// Row-major `|S| × |S|`.
    pub d_ss: Vec<f64>,
    pub n_states: usize,
}

impl OccupancyResult {
    pub fn pair(&self, s: usize, t: usize) -> f64 {
        self.d_ss[s * self.n_states + t]
    }
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    a.lu().solve(&b).ok_or_else(|| LwailError::Numerical("singular linear system".into()))
}

/// Solves `d = (1 − γ) μ0 + γ P_πᵀ d`.
pub fn state_occupancy(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<Vec<f64>> {
    let n = mdp.n_states;
    let p_pi = mdp.policy_matrix(pi)?;
    let a = DMatrix::identity(n, n) - p_pi.transpose() * mdp.gamma;
    let b = DVector::from_iterator(n, mdp.mu0.iter().map(|m| (1.0 - mdp.gamma) * m));
    Ok(solve(a, b)?.iter().copied().collect())
}

/// `d_ss[s][s'] = d_s[s] · P_π[s][s']`.
pub fn state_pair_occupancy(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<OccupancyResult> {
    let n = mdp.n_states;
    let d_s = state_occupancy(mdp, pi)?;
    let p_pi = mdp.policy_matrix(pi)?;
    let mut d_ss = vec![0.0; n * n];
    for s in 0..n {
        for t in 0..n {
            d_ss[s * n + t] = d_s[s] * p_pi[(s, t)];
        }
    }
    Ok(OccupancyResult { d_s, d_ss, n_states: n })
}

/// Solves `V(s) = I(s = s₊) + γ Σ_{s'} P_π(s'|s) V(s')`.
pub fn icvf_exact(mdp: &TabularMdp, pi_z: &TabularPolicy, s_plus: usize) -> Result<Vec<f64>> {
    let n = mdp.n_states;
    if s_plus >= n {
        return Err(LwailError::InvalidInput(format!("s₊ = {s_plus} out of range")));
    }
    let p_pi = mdp.policy_matrix(pi_z)?;
    let a = DMatrix::identity(n, n) - p_pi * mdp.gamma;
    let mut b = DVector::zeros(n);
    b[s_plus] = 1.0;
    Ok(solve(a, b)?.iter().copied().collect())
}

/// Value iteration for the reward `I(s = z)` collected on arrival in `s`
/// (the indicator convention of [`icvf_exact`]), run until the sup-norm
/// change is below `tol`. Returns values and the greedy policy; ties go to
/// the lowest action index.
pub fn goal_value_iteration(mdp: &TabularMdp, z: usize, tol: f64) -> Result<(Vec<f64>, TabularPolicy)> {
    let (n, na, g) = (mdp.n_states, mdp.n_actions, mdp.gamma);
    if z >= n {
        return Err(LwailError::InvalidInput(format!("goal {z} out of range")));
    }
    let q = |v: &[f64], s: usize, a: usize| -> f64 {
        mdp.transitions(s, a).iter().zip(v).map(|(p, x)| p * x).sum::<f64>()
    };
    let mut v = vec![0.0; n];
    for _ in 0..1_000_000 {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                let best = (0..na).map(|a| q(&v, s, a)).fold(f64::NEG_INFINITY, f64::max);
                f64::from(u8::from(s == z)) + g * best
            })
            .collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < tol {
            let actions: Vec<usize> = (0..n)
                .map(|s| {
                    let qs: Vec<f64> = (0..na).map(|a| q(&v, s, a)).collect();
                    let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    qs.iter().position(|&x| x >= best - 1e-12 * best.abs().max(1.0)).unwrap()
                })
                .collect();
            return Ok((v, TabularPolicy::deterministic(&actions, na)?));
        }
    }
    Err(LwailError::Numerical("value iteration did not converge".into()))
}

/// Discounted-occupancy estimate: each rollout stops at a horizon drawn from
/// `Geometric(1 − γ)` on `{0, 1, …}`, whose final state is distributed
/// exactly as `d_s`.
pub fn monte_carlo_occupancy<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    rollouts: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut counts = vec![0.0; mdp.n_states];
    for _ in 0..rollouts {
        let mut s = mdp.sample_initial(rng);
        while rng.gen::<f64>() < mdp.gamma {
            s = mdp.sample_next(s, pi, rng);
        }
        counts[s] += 1.0;
    }
    counts.iter().map(|c| c / rollouts as f64).collect()
}

/// Mean truncated discounted visit count `Σ_t γᵗ I(s_t = s₊)` from `s0`.
/// Truncation stops once `γᵗ < 1e-10`.
pub fn monte_carlo_icvf<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    pi_z: &TabularPolicy,
    s0: usize,
    s_plus: usize,
    rollouts: usize,
    rng: &mut R,
) -> f64 {
    let mut total = 0.0;
    for _ in 0..rollouts {
        let mut s = s0;
        let mut w = 1.0;
        while w >= 1e-10 {
            if s == s_plus {
                total += w;
            }
            s = mdp.sample_next(s, pi_z, rng);
            w *= mdp.gamma;
        }
    }
    total / rollouts as f64
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
