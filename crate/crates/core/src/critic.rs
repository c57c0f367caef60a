//! Wasserstein dual potential `f` over embedded state pairs, trained with a
//! two-sided gradient penalty; its negated sigmoid is the imitation reward.

use std::path::Path;

use lwail_autodiff::{checkpoint, sigmoid, Activation, Adam, Graph, Mlp, Tensor};
use rand::seq::index;
use rand::Rng;

use crate::error::{LwailError, Result};
use crate::icvf::Embedder;

/// Rewards are kept this far inside `(0, 1)`.
pub const REWARD_EPS: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct CriticConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gp_lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub pretrain_steps: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 64], lr: 1e-3, gp_lambda: 10.0, epochs: 40, batch_size: 4000, pretrain_steps: 200 }
    }
}

/// Gap before and after an update block, measured on the full pair sets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub gap_before: f64,
    pub gap_after: f64,
    pub last_loss: f64,
    pub last_penalty: f64,
}

#[derive(Clone, Debug)]
pub struct WassersteinCritic {
    pub f: Mlp,
    opt: Adam,
    cfg: CriticConfig,
}

/// Losses of one critic step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticLoss {
    pub loss: f64,
    pub gap: f64,
    pub penalty: f64,
}

impl WassersteinCritic {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, cfg: &CriticConfig, rng: &mut R) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(1);
        Self::from_mlp(Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng), cfg).expect("scalar head")
    }

    pub fn from_mlp(f: Mlp, cfg: &CriticConfig) -> Result<Self> {
        if f.output_width() != 1 {
            return Err(LwailError::InvalidInput("critic must have a scalar output".into()));
        }
        let opt = Adam::for_params(&f.params(), cfg.lr);
        Ok(Self { f, opt, cfg: cfg.clone() })
    }

    pub fn config(&self) -> &CriticConfig {
        &self.cfg
    }

    pub fn input_dim(&self) -> usize {
        self.f.input_width()
    }

    pub fn checksum(&self) -> u64 {
        self.f.checksum()
    }

    pub fn values(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.f.predict(x)?.into_data())
    }

    /// `mean f(learner) − mean f(expert)`.
    pub fn dual_gap(&self, expert: &Tensor, learner: &Tensor) -> Result<f64> {
        check_sides(expert, learner)?;
        Ok(mean(&self.values(learner)?) - mean(&self.values(expert)?))
    }

    /// `mean (‖∇f(x̂)‖ − 1)²` at `x̂ = u·expert + (1 − u)·learner`, one `u`
    /// per aligned row pair.
    pub fn gradient_penalty<R: Rng + ?Sized>(&self, expert: &Tensor, learner: &Tensor, rng: &mut R) -> Result<f64> {
        check_sides(expert, learner)?;
        let (e, l) = aligned(expert, learner, rng);
        let xhat = interpolate(&e, &l, rng);
        let mut g = Graph::new();
        let xv = g.constant(xhat);
        let (_, grad) = self.f.input_gradient_node(&mut g, xv)?;
        let norms = g.row_norm(grad);
        Ok(g.value(norms).data().iter().map(|n| (n - 1.0).powi(2)).sum::<f64>() / g.value(norms).len() as f64)
    }

    /// `−gap + λ·penalty` on aligned rows, with parameter gradients.
    pub fn loss_and_grads(&self, expert: &Tensor, learner: &Tensor, xhat: &Tensor) -> Result<(CriticLoss, Vec<Tensor>)> {
        let mut g = Graph::new();
        let lv = g.constant(learner.clone());
        let ev = g.constant(expert.clone());
        let xv = g.constant(xhat.clone());
        let tl = self.f.forward(&mut g, lv)?;
        let te = self.f.forward_shared(&mut g, ev, &tl)?;
        let tx = self.f.forward_shared(&mut g, xv, &tl)?;
        let ml = g.mean(tl.output);
        let me = g.mean(te.output);
        let gap = g.sub(ml, me)?;
        let grad = self.f.input_gradient_from_trace(&mut g, &tx)?;
        let norms = g.row_norm(grad);
        let centred = g.add_scalar(norms, -1.0);
        let sq = g.square(centred);
        let penalty = g.mean(sq);
        let neg_gap = g.scale(gap, -1.0);
        let weighted = g.scale(penalty, self.cfg.gp_lambda);
        let loss = g.add(neg_gap, weighted)?;
        let out = CriticLoss { loss: g.value(loss).item(), gap: g.value(gap).item(), penalty: g.value(penalty).item() };
        let grads = g.backward_scalar(loss)?;
        Ok((out, tl.param_grads(&grads, &self.f)))
    }

    /// `epochs` Adam steps. Each step takes up to `batch_size` learner rows
    /// without replacement and as many expert rows with replacement.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        expert: &Tensor,
        learner: &Tensor,
        epochs: usize,
        rng: &mut R,
    ) -> Result<UpdateStats> {
        check_sides(expert, learner)?;
        let gap_before = self.dual_gap(expert, learner)?;
        let mut last = CriticLoss { loss: f64::NAN, gap: gap_before, penalty: f64::NAN };
        for epoch in 0..epochs {
            let n = learner.rows();
            let b = n.min(self.cfg.batch_size);
            let l = if b == n { learner.clone() } else { learner.gather_rows(&index::sample(rng, n, b).into_vec()) };
            let (e, l) = aligned(expert, &l, rng);
            let xhat = interpolate(&e, &l, rng);
            let (loss, grads) = self.loss_and_grads(&e, &l, &xhat)?;
            if !loss.loss.is_finite() {
                return Err(LwailError::Divergence {
                    stage: "critic".into(),
                    step: epoch as u64 + 1,
                    msg: format!("loss {}", loss.loss),
                });
            }
            self.f.apply_adam(&mut self.opt, &grads)?;
            last = loss;
        }
        Ok(UpdateStats {
            gap_before,
            gap_after: self.dual_gap(expert, learner)?,
            last_loss: last.loss,
            last_penalty: last.penalty,
        })
    }

    /// Pretraining against the untrained policy's pairs.
    pub fn pretrain<R: Rng + ?Sized>(&mut self, expert: &Tensor, learner: &Tensor, rng: &mut R) -> Result<UpdateStats> {
        let steps = self.cfg.pretrain_steps;
        self.update(expert, learner, steps, rng)
    }

    /// `σ(−f(x))` per row, clamped into `[ε, 1 − ε]`.
    pub fn pseudo_rewards(&self, pairs: &Tensor) -> Result<Vec<f64>> {
        Ok(self.values(pairs)?.into_iter().map(reward_from_output).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save_tensors(path, &self.f.params())?;
        Ok(())
    }

    /// Restores parameters into a critic of the configured shape with a fresh
    /// optimizer.
    pub fn load(path: &Path, input_dim: usize, cfg: &CriticConfig) -> Result<Self> {
        let mut c = Self::new(input_dim, cfg, &mut rand::rngs::mock::StepRng::new(0, 0));
        let loaded = checkpoint::load_tensors(path)?;
        checkpoint::restore_into(&mut c.f.params_mut(), &loaded)?;
        c.opt = Adam::for_params(&c.f.params(), cfg.lr);
        Ok(c)
    }
}

pub fn reward_from_output(f: f64) -> f64 {
    sigmoid(-f).clamp(REWARD_EPS, 1.0 - REWARD_EPS)
}

/// `σ(−f(φ(s), φ(s')))` for one transition.
pub fn pseudo_reward(critic: &WassersteinCritic, embedder: &Embedder, s: &[f64], s2: &[f64]) -> Result<f64> {
    let pair = embedder.embed_pairs(&Tensor::row_vector(s), &Tensor::row_vector(s2))?;
    Ok(critic.pseudo_rewards(&pair)?[0])
}

fn check_sides(expert: &Tensor, learner: &Tensor) -> Result<()> {
    if expert.rows() == 0 || learner.rows() == 0 {
        return Err(LwailError::InvalidInput("critic needs pairs on both sides".into()));
    }
    if expert.cols() != learner.cols() {
        return Err(LwailError::InvalidInput(format!(
            "expert width {} differs from learner width {}",
            expert.cols(),
            learner.cols()
        )));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Expert rows resampled with replacement to the learner count, unless the
/// counts already agree.
fn aligned<R: Rng + ?Sized>(expert: &Tensor, learner: &Tensor, rng: &mut R) -> (Tensor, Tensor) {
    if expert.rows() == learner.rows() {
        return (expert.clone(), learner.clone());
    }
    let idx: Vec<usize> = (0..learner.rows()).map(|_| rng.gen_range(0..expert.rows())).collect();
    (expert.gather_rows(&idx), learner.clone())
}

fn interpolate<R: Rng + ?Sized>(expert: &Tensor, learner: &Tensor, rng: &mut R) -> Tensor {
    let m = expert.cols();
    let mut out = Vec::with_capacity(expert.len());
    for r in 0..expert.rows() {
        let u: f64 = rng.gen();
        out.extend(expert.row(r).iter().zip(learner.row(r)).map(|(e, l)| u * e + (1.0 - u) * l));
    }
    Tensor::new(vec![expert.rows(), m], out).unwrap()
}
