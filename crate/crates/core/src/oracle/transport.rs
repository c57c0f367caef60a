use std::collections::VecDeque;

use crate::error::{LwailError, Result};

/// Largest support accepted on either side.
pub const MAX_SUPPORT: usize = 512;

/// Optimal coupling of a transportation problem with its dual certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols` coupling.
    pub plan: Vec<f64>,
    pub value: f64,
    /// Row potentials `u` and column potentials `v` with `u_i + v_j ≤ c_ij`,
    /// tight on the basis.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl TransportPlan {
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols + j]
    }

    pub fn dual_value(&self, p: &[f64], q: &[f64]) -> f64 {
        p.iter().zip(&self.u).map(|(a, b)| a * b).sum::<f64>() + q.iter().zip(&self.v).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `max_ij (u_i + v_j − c_ij)`, non-positive for a feasible dual.
    pub fn max_dual_violation(&self, cost: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max(self.u[i] + self.v[j] - cost[i * self.cols + j]);
            }
        }
        worst
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self.mass(i, j)).sum()).collect()
    }
}

fn check_distribution(name: &str, d: &[f64]) -> Result<()> {
    if d.is_empty() || d.len() > MAX_SUPPORT {
        return Err(LwailError::InvalidInput(format!("{name} support size {} outside 1..={MAX_SUPPORT}", d.len())));
    }
    if d.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(LwailError::InvalidInput(format!("{name} has a negative or non-finite mass")));
    }
    let s: f64 = d.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(LwailError::InvalidInput(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// Exact 1-Wasserstein optimum by the transportation simplex: north-west
/// corner start, MODI potentials on the spanning-tree basis, and pivots along
/// the unique basis cycle. `cost` is row-major `p.len() × q.len()`.
pub fn wasserstein_lp(p: &[f64], q: &[f64], cost: &[f64]) -> Result<TransportPlan> {
    check_distribution("p", p)?;
    check_distribution("q", q)?;
    let (m, n) = (p.len(), q.len());
    if cost.len() != m * n {
        return Err(LwailError::InvalidInput(format!("cost has {} entries, expected {}", cost.len(), m * n)));
    }
    if cost.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
        return Err(LwailError::InvalidInput("costs must be finite and non-negative".into()));
    }

    let mut x = vec![0.0; m * n];
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);
    let mut is_basic = vec![false; m * n];
    {
        let (mut supply, mut demand) = (p.to_vec(), q.to_vec());
        let (mut i, mut j) = (0, 0);
        loop {
            let t = supply[i].min(demand[j]);
            x[i * n + j] = t;
            basis.push((i, j));
            is_basic[i * n + j] = true;
            supply[i] -= t;
            demand[j] -= t;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || supply[i] <= demand[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    debug_assert_eq!(basis.len(), m + n - 1);

    let scale = cost.iter().fold(0.0f64, |a, &c| a.max(c)).max(1.0);
    let tol = 1e-12 * scale;
    let max_iter = 50 * (m + n) * (m + n) + 1000;
    let (mut u, mut v) = (vec![0.0; m], vec![0.0; n]);
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m + n];

    for iter in 0..=max_iter {
        for a in adj.iter_mut() {
            a.clear();
        }
        for (k, &(i, j)) in basis.iter().enumerate() {
            adj[i].push((m + j, k));
            adj[m + j].push((i, k));
        }
        potentials(&basis, &adj, cost, n, m, &mut u, &mut v);

        // Dantzig pricing; after many iterations switch to first-improving
        // (Bland-style) pricing to rule out cycling on degenerate pivots.
        let bland = iter > max_iter / 2;
        let mut enter = None;
        let mut best = -tol;
        'scan: for i in 0..m {
            for j in 0..n {
                if is_basic[i * n + j] {
                    continue;
                }
                let r = cost[i * n + j] - u[i] - v[j];
                if r < best {
                    best = r;
                    enter = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                }
            }
        }
        let Some((ei, ej)) = enter else {
            let value = (0..m * n).map(|k| x[k] * cost[k]).sum();
            return Ok(TransportPlan { rows: m, cols: n, plan: x, value, u, v });
        };

        // Tree path from row node ei to column node m + ej.
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n];
        let mut seen = vec![false; m + n];
        seen[ei] = true;
        let mut queue = VecDeque::from([ei]);
        while let Some(node) = queue.pop_front() {
            if node == m + ej {
                break;
            }
            for &(next, k) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, k));
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = m + ej;
        while node != ei {
            let (prev, k) = parent[node].expect("basis is a spanning tree");
            path.push(k);
            node = prev;
        }
        path.reverse();
        // Walking from ei, edges alternate −, +, −, …, −.
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let (i, j) = basis[k];
                if x[i * n + j] < theta {
                    theta = x[i * n + j];
                    leave = k;
                }
            }
        }
        for (pos, &k) in path.iter().enumerate() {
            let (i, j) = basis[k];
            if pos % 2 == 0 {
                x[i * n + j] -= theta;
            } else {
                x[i * n + j] += theta;
            }
        }
        x[ei * n + ej] = theta;
        let (li, lj) = basis[leave];
        x[li * n + lj] = 0.0;
        is_basic[li * n + lj] = false;
        is_basic[ei * n + ej] = true;
        basis[leave] = (ei, ej);
    }
    Err(LwailError::Numerical("transportation simplex hit its iteration cap".into()))
}

fn potentials(
    basis: &[(usize, usize)],
    adj: &[Vec<(usize, usize)>],
    cost: &[f64],
    n: usize,
    m: usize,
    u: &mut [f64],
    v: &mut [f64],
) {
    let mut known = vec![false; m + n];
    known[0] = true;
    u[0] = 0.0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(node) = queue.pop_front() {
        for &(next, k) in &adj[node] {
            if known[next] {
                continue;
            }
            let (i, j) = basis[k];
            if next >= m {
                v[j] = cost[i * n + j] - u[i];
            } else {
                u[i] = cost[i * n + j] - v[j];
            }
            known[next] = true;
            queue.push_back(next);
        }
    }
}

/// `∫ |F_p(t) − F_q(t)| dt` for distributions on the real line, the closed
/// form of W1 in one dimension.
pub fn cdf_area_1d(xp: &[f64], p: &[f64], xq: &[f64], q: &[f64]) -> f64 {
    let mut events: Vec<(f64, f64)> = xp.iter().zip(p).map(|(&x, &w)| (x, w)).collect();
    events.extend(xq.iter().zip(q).map(|(&x, &w)| (x, -w)));
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut area = 0.0;
    let mut diff = 0.0;
    for k in 0..events.len() {
        diff += events[k].1;
        if k + 1 < events.len() {
            area += diff.abs() * (events[k + 1].0 - events[k].0);
        }
    }
    area
}

/// `|x_i − y_j|` cost matrix.
pub fn abs_cost_1d(xp: &[f64], xq: &[f64]) -> Vec<f64> {
    xp.iter().flat_map(|a| xq.iter().map(move |b| (a - b).abs())).collect()
}

/// Euclidean cost matrix between two point sets.
pub fn euclidean_cost(xp: &[Vec<f64>], xq: &[Vec<f64>]) -> Vec<f64> {
    xp.iter()
        .flat_map(|a| xq.iter().map(move |b| a.iter().zip(b).map(|(s, t)| (s - t).powi(2)).sum::<f64>().sqrt()))
        .collect()
}
