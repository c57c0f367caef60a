//! Post-run analysis: linear-occupancy fits on the tabular maze, dual-gap
//! accuracy against exact transport, embedding export and distance
//! statistics.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use lwail_autodiff::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::critic::{CriticConfig, WassersteinCritic};
use crate::datasets::Dataset;
use crate::envs::{Cell, GridMaze, Mu0};
use crate::error::{LwailError, Result};
use crate::icvf::Embedder;
use crate::oracle::{
    euclidean_cost, goal_value_iteration, state_pair_occupancy, theorem1_fit, wasserstein_lp, LinearFit,
};

/// Which adjacent pairs enter the occupancy regression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairSelection {
    /// Every distinct `(s, s')` transition in the dataset.
    Dataset,
    /// Distinct dataset transitions whose successor is the one the goal
    /// policy's move leads to.
    OnPolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Theorem1Report {
    pub env_id: String,
    pub policy: String,
    pub r2_trained: f64,
    pub r2_random: f64,
    pub eta: Vec<f64>,
    pub samples: usize,
    pub slip: f64,
    pub trained_fit: LinearFit,
    pub random_fit: LinearFit,
}

impl Theorem1Report {
    pub fn r2_gap(&self) -> f64 {
        self.r2_trained - self.r2_random
    }

    pub fn to_csv(&self) -> String {
        let eta = self.eta.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        format!(
            "env,policy,slip,samples,r2_trained,r2_random,eta\n{},{},{},{},{},{},{}\n",
            self.env_id, self.policy, self.slip, self.samples, self.r2_trained, self.r2_random, eta
        )
    }

    pub fn summary(&self) -> String {
        format!(
            "{} ({}, slip {}): R² trained {:.4}, random {:.4}, gap {:.4} over {} pairs",
            self.env_id,
            self.policy,
            self.slip,
            self.r2_trained,
            self.r2_random,
            self.r2_gap(),
            self.samples
        )
    }
}

/// Distinct adjacent cell pairs of a grid dataset, as free-cell indices.
fn dataset_cell_pairs(grid: &GridMaze, data: &Dataset) -> Result<BTreeSet<(usize, usize)>> {
    let free = grid.layout().free_cells();
    let index = |f: &[f64]| -> Result<usize> {
        let cell = grid.cell_of(f).ok_or_else(|| LwailError::InvalidInput(format!("{f:?} is not a grid state")))?;
        free.iter().position(|&c| c == cell).ok_or_else(|| LwailError::InvalidInput(format!("{cell:?} is a wall")))
    };
    let mut pairs = BTreeSet::new();
    for t in data.trajectories() {
        for w in t.states.windows(2) {
            pairs.insert((index(&w[0])?, index(&w[1])?));
        }
    }
    Ok(pairs)
}

/// Regresses `d_ss^{π_z}(s, s')` on `φ(s)` over adjacent dataset pairs, for
/// the trained embedding and dimension-matched random controls. `π_z` is the
/// value-iteration optimum for reaching `goal` (the maze goal by default).
/// The random R² is the mean over `random`.
pub fn make_theorem1_report(
    grid: &GridMaze,
    mu0: Mu0,
    goal: Option<Cell>,
    trained: &Embedder,
    random: &[Embedder],
    data: &Dataset,
    selection: PairSelection,
) -> Result<Theorem1Report> {
    if random.is_empty() || random.iter().any(|r| r.output_dim() != trained.output_dim()) {
        return Err(LwailError::InvalidInput("random controls must exist and match the trained dimension".into()));
    }
    let goal = goal.unwrap_or_else(|| grid.layout().goal());
    let (feats, y) = theorem1_targets(grid, mu0, goal, data, selection)?;
    if y.len() < trained.output_dim() {
        return Err(LwailError::InvalidInput(format!(
            "{} pairs cannot support a {}-dimensional fit",
            y.len(),
            trained.output_dim()
        )));
    }
    let x = Tensor::from_rows(&feats)?;
    let rows = |e: &Embedder| -> Result<Vec<Vec<f64>>> {
        let t = e.embed(&x)?;
        Ok((0..t.rows()).map(|i| t.row(i).to_vec()).collect())
    };
    let trained_fit = theorem1_fit(&rows(trained)?, &y)?;
    let random_fits = random.iter().map(|r| theorem1_fit(&rows(r)?, &y)).collect::<Result<Vec<_>>>()?;
    let r2_random = random_fits.iter().map(|f| f.r2).sum::<f64>() / random_fits.len() as f64;
    Ok(Theorem1Report {
        env_id: "grid_umaze".into(),
        policy: format!("value-iteration π_z, z = {goal:?}, {selection:?} pairs, μ0 {mu0:?}"),
        r2_trained: trained_fit.r2,
        r2_random,
        eta: trained_fit.eta.clone(),
        samples: y.len(),
        slip: grid.slip,
        trained_fit,
        random_fit: random_fits.into_iter().next().expect("at least one control"),
    })
}

/// Source-state features and exact `d_ss` targets of the selected pairs.
pub fn theorem1_targets(
    grid: &GridMaze,
    mu0: Mu0,
    goal: Cell,
    data: &Dataset,
    selection: PairSelection,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mdp = grid.to_tabular(mu0);
    let free = grid.layout().free_cells();
    let z = free.iter().position(|&c| c == goal).ok_or_else(|| LwailError::InvalidInput("goal is a wall".into()))?;
    let (_, pi) = goal_value_iteration(&mdp, z, 1e-12)?;
    let occ = state_pair_occupancy(&mdp, &pi)?;
    let mut pairs = dataset_cell_pairs(grid, data)?;
    if selection == PairSelection::OnPolicy {
        let intended = |s: usize| {
            let row = pi.row(s);
            let a = (0..row.len()).fold(0, |b, a| if row[a] > row[b] { a } else { b });
            let next = grid.layout().neighbor(free[s], a);
            free.iter().position(|&c| c == next).expect("moves stay on free cells")
        };
        pairs.retain(|&(s, t)| intended(s) == t);
    }
    let feats = pairs.iter().map(|&(s, _)| grid.features(free[s])).collect();
    let y = pairs.iter().map(|&(s, t)| occ.pair(s, t)).collect();
    Ok((feats, y))
}

/// Two finite-support distributions under the Euclidean ground metric.
#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub id: String,
    pub xp: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub xq: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

impl Fixture {
    pub fn identical_1d() -> Self {
        let x = vec![vec![-0.5], vec![0.25], vec![1.0]];
        let p = vec![0.2, 0.5, 0.3];
        Self { id: "identical".into(), xp: x.clone(), p: p.clone(), xq: x, q: p }
    }

    pub fn unit_point_masses() -> Self {
        Self { id: "unit-point-masses".into(), xp: vec![vec![0.0]], p: vec![1.0], xq: vec![vec![1.0]], q: vec![1.0] }
    }

    /// `n` support points per side on `[0, 2)` with random weights.
    pub fn random_1d(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut side = |shift: f64| {
            let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..2.0) + shift]).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = w.iter().sum();
            (x, w.into_iter().map(|v| v / total).collect::<Vec<_>>())
        };
        let (xp, p) = side(0.0);
        let (xq, q) = side(0.5);
        Self { id: format!("random-{n}-seed{seed}"), xp, p, xq, q }
    }

    /// The standard suite: identical, unit point masses, and five random
    /// 16-point fixtures.
    pub fn suite() -> Vec<Self> {
        let mut v = vec![Self::identical_1d(), Self::unit_point_masses()];
        v.extend((0..5).map(|s| Self::random_1d(16, 100 + s)));
        v
    }

    pub fn w1(&self) -> Result<f64> {
        Ok(wasserstein_lp(&self.p, &self.q, &euclidean_cost(&self.xp, &self.xq))?.value)
    }

    fn sample<R: Rng + ?Sized>(x: &[Vec<f64>], w: &[f64], n: usize, rng: &mut R) -> Tensor {
        let rows: Vec<&Vec<f64>> = (0..n)
            .map(|_| {
                let mut u: f64 = rng.gen();
                for (xi, wi) in x.iter().zip(w) {
                    if u < *wi {
                        return xi;
                    }
                    u -= wi;
                }
                x.last().unwrap()
            })
            .collect();
        Tensor::from_rows(&rows).unwrap()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualAccuracyReport {
    pub fixture: String,
    pub seed: u64,
    pub lp_value: f64,
    /// Exact `E_q[f] − E_p[f]` of the trained critic.
    pub gap: f64,
    /// `|gap − W1| / W1`; NaN when `W1 = 0`.
    pub rel_error: f64,
    /// Largest difference quotient over all pairs of support points.
    pub lipschitz: f64,
}

impl DualAccuracyReport {
    pub fn csv(reports: &[Self]) -> String {
        let mut out = String::from("fixture,seed,lp_value,gap,rel_error,lipschitz\n");
        for r in reports {
            writeln!(out, "{},{},{},{},{},{}", r.fixture, r.seed, r.lp_value, r.gap, r.rel_error, r.lipschitz).unwrap();
        }
        out
    }
}

/// Settings for training a fresh critic per fixture.
#[derive(Clone, Debug, PartialEq)]
pub struct DualTraining {
    pub critic: CriticConfig,
    pub steps: usize,
    pub samples_per_step: usize,
    /// Points are zero-padded to at least this width before reaching the
    /// critic; distances are unchanged.
    pub min_input_dim: usize,
}

impl Default for DualTraining {
    fn default() -> Self {
        Self { critic: CriticConfig::default(), steps: 2500, samples_per_step: 512, min_input_dim: 2 }
    }
}

fn pad(points: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            let mut v = p.clone();
            v.resize(width.max(p.len()), 0.0);
            v
        })
        .collect()
}

/// Trains a fresh critic on samples of each fixture (expert side `p`,
/// learner side `q`) and compares its exact gap with the LP optimum.
pub fn make_dual_accuracy_report(fixtures: &[Fixture], train: &DualTraining, seed: u64) -> Result<Vec<DualAccuracyReport>> {
    fixtures
        .iter()
        .map(|fx| {
            let w1 = fx.w1()?;
            let dim = fx.xp[0].len().max(train.min_input_dim);
            let (xp, xq) = (pad(&fx.xp, dim), pad(&fx.xq, dim));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut critic = WassersteinCritic::new(dim, &train.critic, &mut rng);
            for _ in 0..train.steps {
                let e = Fixture::sample(&xp, &fx.p, train.samples_per_step, &mut rng);
                let l = Fixture::sample(&xq, &fx.q, train.samples_per_step, &mut rng);
                critic.update(&e, &l, 1, &mut rng)?;
            }
            let fp = critic.values(&Tensor::from_rows(&xp)?)?;
            let fq = critic.values(&Tensor::from_rows(&xq)?)?;
            let gap = fx.q.iter().zip(&fq).map(|(w, f)| w * f).sum::<f64>()
                - fx.p.iter().zip(&fp).map(|(w, f)| w * f).sum::<f64>();
            let points: Vec<(&Vec<f64>, f64)> = xp.iter().zip(fp).chain(xq.iter().zip(fq)).collect();
            let mut lipschitz = 0.0f64;
            for (i, (a, fa)) in points.iter().enumerate() {
                for (b, fb) in &points[i + 1..] {
                    let d = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                    if d > 1e-12 {
                        lipschitz = lipschitz.max((fa - fb).abs() / d);
                    }
                }
            }
            let rel_error = if w1 > 0.0 { (gap - w1).abs() / w1 } else { f64::NAN };
            Ok(DualAccuracyReport { fixture: fx.id.clone(), seed, lp_value: w1, gap, rel_error, lipschitz })
        })
        .collect()
}

/// Writes `s0..,phi0..[,reward]` rows for every dataset state.
pub fn export_embeddings(
    embedder: &Embedder,
    data: &Dataset,
    reward: Option<&dyn Fn(&[f64]) -> f64>,
    path: &Path,
) -> Result<usize> {
    std::fs::write(path, embeddings_csv(embedder, data, reward)?)?;
    Ok(data.num_states())
}

pub fn embeddings_csv(embedder: &Embedder, data: &Dataset, reward: Option<&dyn Fn(&[f64]) -> f64>) -> Result<String> {
    let states: Vec<&[f64]> = data.states().collect();
    let phi = embedder.embed(&Tensor::from_rows(&states)?)?;
    let mut header: Vec<String> = (0..data.state_dim).map(|i| format!("s{i}")).collect();
    header.extend((0..phi.cols()).map(|i| format!("phi{i}")));
    if reward.is_some() {
        header.push("reward".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, s) in states.iter().enumerate() {
        let mut cells: Vec<String> = s.iter().chain(phi.row(i)).map(f64::to_string).collect();
        if let Some(r) = reward {
            cells.push(r(s).to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Parses an export back into `(header, rows)`.
pub fn read_embeddings(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| LwailError::Parse { line: 1, msg: "empty export".into() })?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|e| LwailError::Parse { line: i + 2, msg: e.to_string() }))
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(LwailError::Parse { line: i + 2, msg: "field count differs from header".into() });
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Mean latent distance of dataset-adjacent pairs over that of uniformly
/// random state pairs.
pub fn adjacency_distance_ratio(embedder: &Embedder, data: &Dataset, random_pairs: usize, seed: u64) -> Result<f64> {
    let (s, s2) = data.pair_tensors();
    let (a, b) = (embedder.embed(&s)?, embedder.embed(&s2)?);
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let adjacent = (0..a.rows()).map(|i| dist(a.row(i), b.row(i))).sum::<f64>() / a.rows() as f64;
    let all = embedder.embed(&Tensor::from_rows(&data.states().collect::<Vec<_>>())?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = all.rows();
    let random = (0..random_pairs)
        .map(|_| dist(all.row(rng.gen_range(0..n)), all.row(rng.gen_range(0..n))))
        .sum::<f64>()
        / random_pairs as f64;
    if random <= 0.0 {
        return Err(LwailError::Numerical("embedding collapses every state to one point".into()));
    }
    Ok(adjacent / random)
}

/// Ranks starting at 1 with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(LwailError::InvalidInput("spearman needs two equal-length samples of size ≥ 2".into()));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Err(LwailError::Numerical("constant sample has no rank correlation".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

/// Spearman correlation between `V(s, g, g)` and `−BFS(s, g)` over the free
/// cells of a grid maze.
pub fn goal_value_rank_correlation(model: &crate::icvf::IcvfModel, grid: &GridMaze, goal: Option<Cell>) -> Result<f64> {
    let layout = grid.layout();
    let goal = goal.unwrap_or_else(|| layout.goal());
    let dist = layout.bfs_distances(goal);
    let g = grid.features(goal);
    let mut values = Vec::new();
    let mut neg_dist = Vec::new();
    for cell in layout.free_cells() {
        if let Some(d) = dist[layout.index(cell)] {
            values.push(model.value(&grid.features(cell), &g, &g)?);
            neg_dist.push(-(d as f64));
        }
    }
    spearman(&values, &neg_dist)
}

/// One cell of the noise-robustness table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseRow {
    pub noise: f64,
    pub with_embedding: f64,
    pub without_embedding: f64,
}

pub fn noise_table_csv(rows: &[NoiseRow]) -> String {
    let mut out = String::from("init_noise,success_embedding,success_no_embedding\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.noise, r.with_embedding, r.without_embedding).unwrap();
    }
    out
}

/// `<kind>-<config hash>-s<seed>.<ext>`.
pub fn report_file_name(kind: &str, config_hash: u64, seed: u64, ext: &str) -> String {
    format!("{kind}-{config_hash:016x}-s{seed}.{ext}")
}
