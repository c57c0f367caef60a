//! Intention-conditioned value function `V(s, s₊, z) = φ(s)ᵀ T(z) ψ(s₊)`,
//! trained by expectile temporal differences on state-only data; its frozen
//! `φ` is the latent metric of the imitation stage.

use std::path::Path;

use lwail_autodiff::{checkpoint, Activation, Adam, Graph, Mlp, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::datasets::{Dataset, Role};
use crate::error::{LwailError, Result};

/// Branch probabilities for drawing `z` and `s₊`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mixture {
    /// Uniform over every dataset state.
    pub random: f64,
    /// Geometric offset into the same trajectory.
    pub future: f64,
    /// The transition's own source state.
    pub current: f64,
}

impl Default for Mixture {
    fn default() -> Self {
        Self { random: 0.3, future: 0.5, current: 0.2 }
    }
}

impl Mixture {
    pub fn validate(&self) -> Result<()> {
        let w = [self.random, self.future, self.current];
        if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(LwailError::InvalidInput(format!("mixture weights {w:?} are not a distribution")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcvfConfig {
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Hard target refresh period in gradient steps.
    pub target_period: u64,
    pub batch_size: usize,
    pub mixture: Mixture,
    /// Continuation probability of the geometric future offset.
    pub future_discount: f64,
}

impl Default for IcvfConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hidden: vec![256, 256],
            lr: 3e-4,
            alpha: 0.9,
            gamma: 0.99,
            target_period: 1000,
            batch_size: 256,
            mixture: Mixture::default(),
            future_discount: 0.99,
        }
    }
}

impl IcvfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return Err(LwailError::Config(format!("expectile α = {} outside (0.5, 1]", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..1.0).contains(&self.future_discount) {
            return Err(LwailError::Config("discounts must lie in [0, 1)".into()));
        }
        if self.embed_dim == 0 || self.batch_size == 0 || self.target_period == 0 {
            return Err(LwailError::Config("embed_dim, batch_size and target_period must be positive".into()));
        }
        self.mixture.validate()
    }
}

/// `|α − I(A < 0)|`.
pub fn expectile_weight(alpha: f64, advantage: f64) -> f64 {
    if advantage < 0.0 {
        1.0 - alpha
    } else {
        alpha
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcvfModel {
    pub phi: Mlp,
    pub psi: Mlp,
    /// Output reshaped row-major to `d × d`.
    pub tnet: Mlp,
    pub phi_tgt: Mlp,
    pub psi_tgt: Mlp,
    pub tnet_tgt: Mlp,
    embed_dim: usize,
}

/// Indices into a flattened dataset with the indicator flags of the draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TargetDraw {
    pub z: usize,
    pub s_plus: usize,
    /// `z` came from the current-state branch.
    pub z_current: bool,
    /// `s₊` came from the current-state branch; this is `I(s = s₊)`.
    pub indicator: bool,
}

/// One training batch; rows are aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct IcvfBatch {
    pub s: Tensor,
    pub s2: Tensor,
    pub s_plus: Tensor,
    pub z: Tensor,
    /// `I(s = s₊)`.
    pub ind_plus: Vec<f64>,
    /// `I(s = z)`.
    pub ind_z: Vec<f64>,
}

impl IcvfModel {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, cfg: &IcvfConfig, rng: &mut R) -> Self {
        let d = cfg.embed_dim;
        let sizes = |out: usize| {
            let mut s = vec![state_dim];
            s.extend(&cfg.hidden);
            s.push(out);
            s
        };
        let phi = Mlp::new(&sizes(d), Activation::Relu, Activation::Identity, rng);
        let psi = Mlp::new(&sizes(d), Activation::Relu, Activation::Identity, rng);
        let tnet = Mlp::new(&sizes(d * d), Activation::Relu, Activation::Identity, rng);
        Self::from_nets(phi, psi, tnet).expect("widths agree by construction")
    }

    /// Builds a model from explicit networks; targets start as copies.
    pub fn from_nets(phi: Mlp, psi: Mlp, tnet: Mlp) -> Result<Self> {
        let d = phi.output_width();
        if psi.output_width() != d || tnet.output_width() != d * d {
            return Err(LwailError::InvalidInput("φ, ψ and T widths are inconsistent".into()));
        }
        if phi.input_width() != psi.input_width() || phi.input_width() != tnet.input_width() {
            return Err(LwailError::InvalidInput("φ, ψ and T disagree on the state width".into()));
        }
        let mut phi_tgt = phi.clone();
        let mut psi_tgt = psi.clone();
        let mut tnet_tgt = tnet.clone();
        for n in [&mut phi_tgt, &mut psi_tgt, &mut tnet_tgt] {
            if n.is_frozen() {
                *n = Mlp::from_layers(n.layers().to_vec(), n.activations().to_vec()).unwrap();
            }
        }
        Ok(Self { phi, psi, tnet, phi_tgt, psi_tgt, tnet_tgt, embed_dim: d })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn state_dim(&self) -> usize {
        self.phi.input_width()
    }

    pub fn is_frozen(&self) -> bool {
        self.phi.is_frozen()
    }

    pub fn freeze(&mut self) {
        self.phi.freeze();
    }

    /// Hash of all live parameters.
    pub fn checksum(&self) -> u64 {
        self.phi.checksum() ^ self.psi.checksum().rotate_left(21) ^ self.tnet.checksum().rotate_left(42)
    }

    pub fn sync_targets(&mut self) {
        self.phi_tgt.copy_params_from(&self.phi);
        self.psi_tgt.copy_params_from(&self.psi);
        self.tnet_tgt.copy_params_from(&self.tnet);
    }

    /// Row-wise `φ(s)ᵀ T(z) ψ(s₊)` with the live (`target = false`) or target
    /// networks, without recording a graph.
    pub fn values(&self, s: &Tensor, s_plus: &Tensor, z: &Tensor, target: bool) -> Result<Vec<f64>> {
        let (phi, psi, tnet) = if target {
            (&self.phi_tgt, &self.psi_tgt, &self.tnet_tgt)
        } else {
            (&self.phi, &self.psi, &self.tnet)
        };
        let f = phi.predict(s)?;
        let p = psi.predict(s_plus)?;
        let t = tnet.predict(z)?;
        Ok(contract(&f, &t, &p, self.embed_dim))
    }

    pub fn value(&self, s: &[f64], s_plus: &[f64], z: &[f64]) -> Result<f64> {
        let row = |x: &[f64]| Tensor::row_vector(x);
        Ok(self.values(&row(s), &row(s_plus), &row(z), false)?[0])
    }

    /// `A = I(s = z) + γ V_tgt(s', z, z) − V_tgt(s, z, z)`.
    pub fn advantages(&self, batch: &IcvfBatch, gamma: f64) -> Result<Vec<f64>> {
        let next = self.values(&batch.s2, &batch.z, &batch.z, true)?;
        let here = self.values(&batch.s, &batch.z, &batch.z, true)?;
        Ok((0..here.len()).map(|i| batch.ind_z[i] + gamma * next[i] - here[i]).collect())
    }

    /// TD targets `I(s = s₊) + γ V_tgt(s', s₊, z)`.
    pub fn td_targets(&self, batch: &IcvfBatch, gamma: f64) -> Result<Vec<f64>> {
        let next = self.values(&batch.s2, &batch.s_plus, &batch.z, true)?;
        Ok(next.iter().zip(&batch.ind_plus).map(|(v, i)| i + gamma * v).collect())
    }

    /// Expectile loss and its gradients for `[φ, ψ, T]`. Targets and weights
    /// come from the target networks and are constants of the graph.
    pub fn loss_and_grads(&self, batch: &IcvfBatch, cfg: &IcvfConfig) -> Result<(f64, [Vec<Tensor>; 3])> {
        let y = self.td_targets(batch, cfg.gamma)?;
        let w: Vec<f64> =
            self.advantages(batch, cfg.gamma)?.into_iter().map(|a| expectile_weight(cfg.alpha, a)).collect();
        let n = y.len();
        let mut g = Graph::new();
        let s = g.constant(batch.s.clone());
        let sp = g.constant(batch.s_plus.clone());
        let z = g.constant(batch.z.clone());
        let f = self.phi.forward(&mut g, s)?;
        let p = self.psi.forward(&mut g, sp)?;
        let t = self.tnet.forward(&mut g, z)?;
        let v = g.bilinear(f.output, t.output, p.output)?;
        let yv = g.constant(Tensor::new(vec![n, 1], y)?);
        let wv = g.constant(Tensor::new(vec![n, 1], w)?);
        let diff = g.sub(v, yv)?;
        let sq = g.square(diff);
        let weighted = g.mul(sq, wv)?;
        let loss = g.mean(weighted);
        let value = g.value(loss).item();
        let grads = g.backward_scalar(loss)?;
        Ok((
            value,
            [f.param_grads(&grads, &self.phi), p.param_grads(&grads, &self.psi), t.param_grads(&grads, &self.tnet)],
        ))
    }

    pub fn loss(&self, batch: &IcvfBatch, cfg: &IcvfConfig) -> Result<f64> {
        let y = self.td_targets(batch, cfg.gamma)?;
        let a = self.advantages(batch, cfg.gamma)?;
        let v = self.values(&batch.s, &batch.s_plus, &batch.z, false)?;
        let n = v.len() as f64;
        Ok((0..v.len()).map(|i| expectile_weight(cfg.alpha, a[i]) * (v[i] - y[i]).powi(2)).sum::<f64>() / n)
    }

    /// `φ(s)`; only available once `φ` is frozen.
    pub fn embed(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.embed_batch(&Tensor::row_vector(s))?.into_data())
    }

    pub fn embed_batch(&self, s: &Tensor) -> Result<Tensor> {
        if !self.is_frozen() {
            return Err(LwailError::Usage("φ must be frozen before it is used as an embedding".into()));
        }
        Ok(self.phi.predict(s)?)
    }

    /// `‖φ(s) − φ(s')‖₂`.
    pub fn latent_cost(&self, s: &[f64], s2: &[f64]) -> Result<f64> {
        let a = self.embed(s)?;
        let b = self.embed(s2)?;
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
    }

    /// Live `φ, ψ, T` in one checkpoint file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut all = self.phi.params();
        all.extend(self.psi.params());
        all.extend(self.tnet.params());
        checkpoint::save_tensors(path, &all)?;
        Ok(())
    }

    /// Restores into a model of the given architecture; `φ` comes back frozen
    /// and the targets equal the live networks.
    pub fn load(path: &Path, state_dim: usize, cfg: &IcvfConfig) -> Result<Self> {
        let mut model = Self::new(state_dim, cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let loaded = checkpoint::load_tensors(path)?;
        let mut params = model.phi.params_mut();
        params.extend(model.psi.params_mut());
        params.extend(model.tnet.params_mut());
        checkpoint::restore_into(&mut params, &loaded)?;
        model.sync_targets();
        model.freeze();
        Ok(model)
    }
}

/// `out_i = Σ_jk f_ij T_i[j,k] p_ik`.
fn contract(f: &Tensor, t: &Tensor, p: &Tensor, d: usize) -> Vec<f64> {
    (0..f.rows())
        .map(|i| {
            let (fi, ti, pi) = (f.row(i), t.row(i), p.row(i));
            let mut acc = 0.0;
            for j in 0..d {
                let tj = &ti[j * d..(j + 1) * d];
                acc += fi[j] * tj.iter().zip(pi).map(|(a, b)| a * b).sum::<f64>();
            }
            acc
        })
        .collect()
}

/// Flattened view of a dataset for target sampling.
#[derive(Clone, Debug)]
pub struct IcvfSampler {
    states: Vec<Vec<f64>>,
    /// Global index of the last state of each state's trajectory.
    traj_end: Vec<usize>,
    /// Global indices `k` with `(k, k + 1)` a within-trajectory transition.
    transitions: Vec<usize>,
    state_dim: usize,
}

impl IcvfSampler {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let mut states = Vec::new();
        let mut traj_end = Vec::new();
        let mut transitions = Vec::new();
        for t in dataset.trajectories() {
            let base = states.len();
            let end = base + t.len() - 1;
            for (i, s) in t.states.iter().enumerate() {
                states.push(s.clone());
                traj_end.push(end);
                if i + 1 < t.len() {
                    transitions.push(base + i);
                }
            }
        }
        if transitions.is_empty() {
            return Err(LwailError::Unavailable("dataset has no transitions".into()));
        }
        Ok(Self { states, traj_end, transitions, state_dim: dataset.state_dim })
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k]
    }

    /// Global index of the source state of transition `t`.
    pub fn transition_source(&self, t: usize) -> usize {
        self.transitions[t]
    }

    fn draw_one<R: Rng + ?Sized>(&self, k: usize, cfg: &IcvfConfig, geo: &Geometric, rng: &mut R) -> (usize, bool) {
        let u: f64 = rng.gen();
        let m = &cfg.mixture;
        if u < m.random {
            (rng.gen_range(0..self.states.len()), false)
        } else if u < m.random + m.future {
            let offset = 1 + geo.sample(rng) as usize;
            ((k.saturating_add(offset)).min(self.traj_end[k]), false)
        } else {
            (k, true)
        }
    }

    /// Draws `(z, s₊)` for transition `t`; each picks a branch independently.
    pub fn sample_targets<R: Rng + ?Sized>(&self, t: usize, cfg: &IcvfConfig, rng: &mut R) -> Result<TargetDraw> {
        if t >= self.transitions.len() {
            return Err(LwailError::InvalidInput(format!("transition index {t} out of range")));
        }
        let geo = Geometric::new(1.0 - cfg.future_discount).map_err(|e| LwailError::Config(e.to_string()))?;
        let k = self.transitions[t];
        let (z, z_current) = self.draw_one(k, cfg, &geo, rng);
        let (s_plus, indicator) = self.draw_one(k, cfg, &geo, rng);
        Ok(TargetDraw { z, s_plus, z_current, indicator })
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, cfg: &IcvfConfig, rng: &mut R) -> Result<IcvfBatch> {
        let ds = self.state_dim;
        let mut cols: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n * ds));
        let mut ind_plus = Vec::with_capacity(n);
        let mut ind_z = Vec::with_capacity(n);
        for _ in 0..n {
            let t = rng.gen_range(0..self.transitions.len());
            let k = self.transitions[t];
            let d = self.sample_targets(t, cfg, rng)?;
            for (col, idx) in cols.iter_mut().zip([k, k + 1, d.s_plus, d.z]) {
                col.extend_from_slice(&self.states[idx]);
            }
            ind_plus.push(f64::from(u8::from(d.indicator)));
            ind_z.push(f64::from(u8::from(d.z_current)));
        }
        let [s, s2, s_plus, z] = cols.map(|c| Tensor::new(vec![n, ds], c).unwrap());
        Ok(IcvfBatch { s, s2, s_plus, z, ind_plus, ind_z })
    }
}

/// Adam on the expectile loss with hard target refreshes.
pub struct IcvfTrainer {
    pub model: IcvfModel,
    cfg: IcvfConfig,
    sampler: IcvfSampler,
    opt: [Adam; 3],
    step: u64,
    rng: ChaCha8Rng,
}

impl IcvfTrainer {
    pub fn new(dataset: &Dataset, cfg: &IcvfConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if dataset.role != Role::Random {
            return Err(LwailError::InvalidInput("ICVF pre-training uses the random dataset".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = IcvfModel::new(dataset.state_dim, cfg, &mut rng);
        let opt = [
            Adam::for_params(&model.phi.params(), cfg.lr),
            Adam::for_params(&model.psi.params(), cfg.lr),
            Adam::for_params(&model.tnet.params(), cfg.lr),
        ];
        Ok(Self { model, cfg: cfg.clone(), sampler: IcvfSampler::new(dataset)?, opt, step: 0, rng })
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn model(&self) -> &IcvfModel {
        &self.model
    }

    /// One gradient step; returns the batch loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let next = self.step + 1;
        let batch = self.sampler.sample_batch(self.cfg.batch_size, &self.cfg, &mut self.rng)?;
        let (loss, [gf, gp, gt]) = self.model.loss_and_grads(&batch, &self.cfg).map_err(|e| e.in_stage("icvf", next))?;
        if !loss.is_finite() {
            return Err(LwailError::Divergence { stage: "icvf".into(), step: next, msg: format!("loss {loss}") });
        }
        let [o1, o2, o3] = &mut self.opt;
        let m = &mut self.model;
        m.phi.apply_adam(o1, &gf).map_err(|e| LwailError::from(e).in_stage("icvf", next))?;
        m.psi.apply_adam(o2, &gp).map_err(|e| LwailError::from(e).in_stage("icvf", next))?;
        m.tnet.apply_adam(o3, &gt).map_err(|e| LwailError::from(e).in_stage("icvf", next))?;
        self.step = next;
        if self.step % self.cfg.target_period == 0 {
            self.model.sync_targets();
        }
        Ok(loss)
    }

    pub fn finish(mut self) -> IcvfModel {
        self.model.freeze();
        self.model
    }
}

/// Trains for `steps` gradient steps and freezes `φ`.
pub fn train_icvf(dataset: &Dataset, cfg: &IcvfConfig, steps: u64, seed: u64) -> Result<IcvfModel> {
    if steps == 0 {
        return Err(LwailError::InvalidInput("train_icvf needs at least one step".into()));
    }
    let mut trainer = IcvfTrainer::new(dataset, cfg, seed)?;
    for _ in 0..steps {
        trainer.step()?;
    }
    Ok(trainer.finish())
}

/// State map feeding the critic: a frozen network, or the identity on raw
/// states for the no-embedding control.
#[derive(Clone, Debug, PartialEq)]
pub enum Embedder {
    Network(Mlp),
    Identity(usize),
}

impl Embedder {
    pub fn from_icvf(model: &IcvfModel) -> Result<Self> {
        if !model.is_frozen() {
            return Err(LwailError::Usage("φ must be frozen before imitation".into()));
        }
        Ok(Self::Network(model.phi.clone()))
    }

    /// Untrained network of the same shape as an ICVF `φ`; the control
    /// embedding for representation comparisons.
    pub fn random<R: Rng + ?Sized>(state_dim: usize, cfg: &IcvfConfig, rng: &mut R) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(cfg.embed_dim);
        let mut m = Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng);
        m.freeze();
        Self::Network(m)
    }

    pub fn identity(state_dim: usize) -> Self {
        Self::Identity(state_dim)
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Network(m) => m.input_width(),
            Self::Identity(d) => *d,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Network(m) => m.output_width(),
            Self::Identity(d) => *d,
        }
    }

    pub fn checksum(&self) -> u64 {
        match self {
            Self::Network(m) => m.checksum(),
            Self::Identity(d) => *d as u64,
        }
    }

    pub fn embed(&self, states: &Tensor) -> Result<Tensor> {
        match self {
            Self::Network(m) => Ok(m.predict(states)?),
            Self::Identity(d) if states.cols() == *d => Ok(states.clone()),
            Self::Identity(d) => Err(LwailError::InvalidInput(format!("expected width {d}, got {}", states.cols()))),
        }
    }

    /// Rows `[φ(s), φ(s')]`.
    pub fn embed_pairs(&self, s: &Tensor, s2: &Tensor) -> Result<Tensor> {
        let a = self.embed(s)?;
        let b = self.embed(s2)?;
        Ok(Tensor::hconcat(&[&a, &b])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Trajectory;
    use lwail_autodiff::Linear;

    fn linear(w: Vec<Vec<f64>>) -> Mlp {
        let rows = w.len();
        let cols = w[0].len();
        let weight = Tensor::new(vec![rows, cols], w.into_iter().flatten().collect()).unwrap();
        Mlp::from_layers(vec![Linear { weight, bias: Tensor::zeros(&[cols]) }], vec![Activation::Identity]).unwrap()
    }

    fn constant(out: Vec<f64>, in_dim: usize) -> Mlp {
        let n = out.len();
        Mlp::from_layers(
            vec![Linear { weight: Tensor::zeros(&[in_dim, n]), bias: Tensor::new(vec![n], out).unwrap() }],
            vec![Activation::Identity],
        )
        .unwrap()
    }

    #[test]
    fn basis_contraction_is_one() {
        let m = IcvfModel::from_nets(
            constant(vec![1.0, 0.0], 1),
            constant(vec![1.0, 0.0], 1),
            constant(vec![1.0, 0.0, 0.0, 1.0], 1),
        )
        .unwrap();
        assert_eq!(m.value(&[0.3], &[0.1], &[-2.0]).unwrap(), 1.0);
    }

    #[test]
    fn zero_psi_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let phi = Mlp::new(&[2, 4, 3], Activation::Relu, Activation::Identity, &mut rng);
        let tnet = Mlp::new(&[2, 4, 9], Activation::Relu, Activation::Identity, &mut rng);
        let m = IcvfModel::from_nets(phi, constant(vec![0.0; 3], 2), tnet).unwrap();
        assert_eq!(m.value(&[0.3, 0.2], &[0.5, 0.5], &[0.1, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn expectile_weights() {
        assert_eq!(expectile_weight(0.9, 0.3), 0.9);
        assert!((expectile_weight(0.9, -0.3) - 0.1).abs() < 1e-15);
        assert_eq!(expectile_weight(0.9, 0.0), 0.9);
    }

    fn zero_model(state_dim: usize) -> IcvfModel {
        IcvfModel::from_nets(
            constant(vec![0.0], state_dim),
            constant(vec![0.0], state_dim),
            constant(vec![0.0], state_dim),
        )
        .unwrap()
    }

    fn one_row(ind_plus: f64, ind_z: f64) -> IcvfBatch {
        let r = Tensor::row_vector(&[0.5]);
        IcvfBatch { s: r.clone(), s2: r.clone(), s_plus: r.clone(), z: r, ind_plus: vec![ind_plus], ind_z: vec![ind_z] }
    }

    #[test]
    fn advantage_of_zero_value_is_the_indicator() {
        let m = zero_model(1);
        assert_eq!(m.advantages(&one_row(0.0, 0.0), 0.99).unwrap(), vec![0.0]);
        assert_eq!(m.advantages(&one_row(1.0, 1.0), 0.99).unwrap(), vec![1.0]);
    }

    #[test]
    fn single_sample_loss_arithmetic() {
        // V ≡ 2 everywhere; with γ = 0 the target is I(s = s₊) and A = I(s = z) − 2.
        let m = IcvfModel::from_nets(constant(vec![2.0], 1), constant(vec![1.0], 1), constant(vec![1.0], 1)).unwrap();
        let cfg = IcvfConfig { gamma: 0.0, ..IcvfConfig::default() };
        let below = m.loss(&one_row(0.0, 0.0), &cfg).unwrap();
        assert!((below - 0.1 * 4.0).abs() < 1e-12);
        let hit = m.loss(&one_row(1.0, 1.0), &cfg).unwrap();
        assert!((hit - 0.1 * 1.0).abs() < 1e-12);
        let (graph_loss, _) = m.loss_and_grads(&one_row(1.0, 1.0), &cfg).unwrap();
        assert!((graph_loss - hit).abs() < 1e-12);
    }

    #[test]
    fn forced_current_branch_sets_indicator() {
        let ds = Dataset::from_trajectories(
            Role::Random,
            1,
            0,
            vec![Trajectory::states_only((0..10).map(|i| vec![i as f64]).collect(), false).unwrap()],
        )
        .unwrap();
        let sampler = IcvfSampler::new(&ds).unwrap();
        let cfg = IcvfConfig { mixture: Mixture { random: 0.0, future: 0.0, current: 1.0 }, ..IcvfConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in 0..sampler.num_transitions() {
            let d = sampler.sample_targets(t, &cfg, &mut rng).unwrap();
            assert!(d.indicator && d.z_current);
            assert_eq!(d.s_plus, sampler.transition_source(t));
        }
    }

    #[test]
    fn embedding_requires_freeze() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = IcvfConfig { embed_dim: 2, hidden: vec![4], ..IcvfConfig::default() };
        let mut m = IcvfModel::new(2, &cfg, &mut rng);
        assert!(matches!(m.embed(&[0.0, 0.0]), Err(LwailError::Usage(_))));
        assert!(Embedder::from_icvf(&m).is_err());
        m.freeze();
        assert_eq!(m.latent_cost(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn linear_identity_nets_contract_like_matrices() {
        // φ(s) = s, ψ(s) = s, T(z) = reshape(z) for a 1×1 embedding.
        let m = IcvfModel::from_nets(linear(vec![vec![1.0]]), linear(vec![vec![1.0]]), linear(vec![vec![1.0]])).unwrap();
        assert_eq!(m.value(&[2.0], &[3.0], &[4.0]).unwrap(), 24.0);
    }
}
