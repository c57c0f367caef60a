//! Twin-delayed deterministic policy gradient learner.

use std::path::Path;

use lwail_autodiff::{checkpoint, Activation, Adam, Graph, Mlp, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::datasets::{ReplayBuffer, TransitionBatch};
use crate::envs::Policy;
use crate::error::{LwailError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Td3Config {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub policy_delay: u64,
    pub explore_std: f64,
    pub target_noise: f64,
    pub noise_clip: f64,
    pub batch_size: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            actor_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            explore_std: 0.1,
            target_noise: 0.2,
            noise_clip: 0.5,
            batch_size: 256,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        if self.policy_delay == 0 {
            return Err(LwailError::Config("policy_delay must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(LwailError::Config(format!("tau = {} outside (0, 1]", self.tau)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(LwailError::Config("gamma must lie in [0, 1)".into()));
        }
        if self.explore_std < 0.0 || self.target_noise < 0.0 || self.noise_clip < 0.0 || self.batch_size == 0 {
            return Err(LwailError::Config("noise scales must be non-negative and batch_size positive".into()));
        }
        Ok(())
    }
}

/// Losses reported by one [`Td3Agent::train_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainInfo {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub actor_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Td3Agent {
    pub actor: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub actor_tgt: Mlp,
    pub q1_tgt: Mlp,
    pub q2_tgt: Mlp,
    opt_actor: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    cfg: Td3Config,
    critic_updates: u64,
    actor_updates: u64,
}

fn clip_box(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, cfg: &Td3Config, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let sizes = |input: usize, hidden: &[usize], out: usize| {
            let mut s = vec![input];
            s.extend(hidden);
            s.push(out);
            s
        };
        let actor = Mlp::new(&sizes(state_dim, &cfg.actor_hidden, action_dim), Activation::Relu, Activation::Tanh, rng);
        let qs = sizes(state_dim + action_dim, &cfg.critic_hidden, 1);
        let q1 = Mlp::new(&qs, Activation::Relu, Activation::Identity, rng);
        let q2 = Mlp::new(&qs, Activation::Relu, Activation::Identity, rng);
        Ok(Self {
            opt_actor: Adam::for_params(&actor.params(), cfg.actor_lr),
            opt_q1: Adam::for_params(&q1.params(), cfg.critic_lr),
            opt_q2: Adam::for_params(&q2.params(), cfg.critic_lr),
            actor_tgt: actor.clone(),
            q1_tgt: q1.clone(),
            q2_tgt: q2.clone(),
            actor,
            q1,
            q2,
            cfg: cfg.clone(),
            critic_updates: 0,
            actor_updates: 0,
        })
    }

    pub fn config(&self) -> &Td3Config {
        &self.cfg
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_width()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_width()
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    /// `μ(s)`, plus clipped Gaussian exploration when `explore` is set.
    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], explore: bool, rng: &mut R) -> Result<Vec<f64>> {
        let mut a = self.actor.predict(&Tensor::row_vector(s))?.into_data();
        if explore && self.cfg.explore_std > 0.0 {
            for x in a.iter_mut() {
                let eps: f64 = rng.sample(StandardNormal);
                *x = clip_box(*x + self.cfg.explore_std * eps);
            }
        }
        Ok(a)
    }

    /// `y = r + γ(1 − done)·min(Q1'(s', a'), Q2'(s', a'))` with the smoothed
    /// target action `a' = clip(μ'(s') + clip(ε, ±c0))`.
    pub fn critic_target<R: Rng + ?Sized>(&self, batch: &TransitionBatch, rng: &mut R) -> Result<Vec<f64>> {
        let mut a2 = self.actor_tgt.predict(&batch.s2)?;
        if self.cfg.target_noise > 0.0 {
            let normal = Normal::new(0.0, self.cfg.target_noise).map_err(|e| LwailError::Config(e.to_string()))?;
            let c0 = self.cfg.noise_clip;
            for x in a2.data_mut() {
                *x = clip_box(*x + normal.sample(rng).clamp(-c0, c0));
            }
        }
        let sa2 = Tensor::hconcat(&[&batch.s2, &a2])?;
        let (t1, t2) = (self.q1_tgt.predict(&sa2)?, self.q2_tgt.predict(&sa2)?);
        Ok((0..batch.reward.len())
            .map(|i| {
                let cont = if batch.done[i] { 0.0 } else { self.cfg.gamma };
                batch.reward[i] + cont * t1.data()[i].min(t2.data()[i])
            })
            .collect())
    }

    /// One Adam step of each Q-network toward the shared target `y`.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &TransitionBatch, rng: &mut R) -> Result<(f64, f64)> {
        let y = self.critic_target(batch, rng)?;
        let sa = Tensor::hconcat(&[&batch.s, &batch.a])?;
        let yt = Tensor::new(vec![y.len(), 1], y)?;
        let step = self.critic_updates + 1;
        let (l1, g1) = mse_grads(&self.q1, &sa, &yt)?;
        let (l2, g2) = mse_grads(&self.q2, &sa, &yt)?;
        if !l1.is_finite() || !l2.is_finite() {
            return Err(LwailError::Divergence { stage: "td3".into(), step, msg: format!("critic losses {l1}, {l2}") });
        }
        self.q1.apply_adam(&mut self.opt_q1, &g1)?;
        self.q2.apply_adam(&mut self.opt_q2, &g2)?;
        self.critic_updates = step;
        Ok((l1, l2))
    }

    /// On `step mod delay == 0`: one Adam step ascending `Q1(s, μ(s))`, then
    /// soft target updates. Returns the actor loss when it ran.
    pub fn actor_update(&mut self, batch: &TransitionBatch, step: u64) -> Result<Option<f64>> {
        if step % self.cfg.policy_delay != 0 {
            return Ok(None);
        }
        let mut g = Graph::new();
        let s = g.constant(batch.s.clone());
        let trace = self.actor.forward(&mut g, s)?;
        let sa = g.concat(&[s, trace.output])?;
        let q = self.q1.forward_const(&mut g, sa)?;
        let mq = g.mean(q.output);
        let loss = g.scale(mq, -1.0);
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(LwailError::Divergence { stage: "td3".into(), step, msg: format!("actor loss {value}") });
        }
        let grads = trace.param_grads(&g.backward_scalar(loss)?, &self.actor);
        self.actor.apply_adam(&mut self.opt_actor, &grads)?;
        self.soft_update_targets(self.cfg.tau);
        self.actor_updates += 1;
        Ok(Some(value))
    }

    /// `target ← τ·live + (1 − τ)·target` for all three networks.
    pub fn soft_update_targets(&mut self, tau: f64) {
        self.actor_tgt.soft_update_from(&self.actor, tau);
        self.q1_tgt.soft_update_from(&self.q1, tau);
        self.q2_tgt.soft_update_from(&self.q2, tau);
    }

    /// Samples a batch, updates both critics, and the actor on schedule.
    pub fn train_step<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<TrainInfo> {
        let batch = buffer.sample_batch(self.cfg.batch_size, rng)?;
        self.train_on(&batch, rng)
    }

    pub fn train_on<R: Rng + ?Sized>(&mut self, batch: &TransitionBatch, rng: &mut R) -> Result<TrainInfo> {
        let (q1_loss, q2_loss) = self.critic_update(batch, rng)?;
        let actor_loss = self.actor_update(batch, self.critic_updates)?;
        Ok(TrainInfo { q1_loss, q2_loss, actor_loss })
    }

    /// Actor parameters only; enough to evaluate the policy.
    pub fn save_policy(&self, path: &Path) -> Result<()> {
        checkpoint::save_tensors(path, &self.actor.params())?;
        Ok(())
    }

    pub fn load_policy(&mut self, path: &Path) -> Result<()> {
        let loaded = checkpoint::load_tensors(path)?;
        checkpoint::restore_into(&mut self.actor.params_mut(), &loaded)?;
        self.actor_tgt.copy_params_from(&self.actor);
        Ok(())
    }

    pub fn checksum(&self) -> u64 {
        self.actor.checksum() ^ self.q1.checksum().rotate_left(17) ^ self.q2.checksum().rotate_left(34)
    }
}

impl Policy for Td3Agent {
    fn action(&self, state: &[f64]) -> Vec<f64> {
        self.actor.predict(&Tensor::row_vector(state)).expect("state width matches the actor").into_data()
    }
}

fn mse_grads(q: &Mlp, sa: &Tensor, y: &Tensor) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let x = g.constant(sa.clone());
    let yv = g.constant(y.clone());
    let trace = q.forward(&mut g, x)?;
    let diff = g.sub(trace.output, yv)?;
    let sq = g.square(diff);
    let loss = g.mean(sq);
    let value = g.value(loss).item();
    Ok((value, trace.param_grads(&g.backward_scalar(loss)?, q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use lwail_autodiff::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> Td3Config {
        Td3Config { actor_hidden: vec![8], critic_hidden: vec![8], ..Td3Config::default() }
    }

    fn constant_q(v: f64, input: usize) -> Mlp {
        Mlp::from_layers(
            vec![Linear { weight: Tensor::zeros(&[input, 1]), bias: Tensor::new(vec![1], vec![v]).unwrap() }],
            vec![Activation::Identity],
        )
        .unwrap()
    }

    fn batch(reward: f64, done: bool) -> TransitionBatch {
        TransitionBatch {
            s: Tensor::row_vector(&[0.1, 0.2]),
            a: Tensor::row_vector(&[0.0]),
            s2: Tensor::row_vector(&[0.3, 0.4]),
            reward: vec![reward],
            done: vec![done],
        }
    }

    #[test]
    fn target_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = Td3Config { target_noise: 0.0, ..small() };
        let mut agent = Td3Agent::new(2, 1, &cfg, &mut rng).unwrap();
        agent.q1_tgt = constant_q(2.0, 3);
        agent.q2_tgt = constant_q(1.5, 3);
        let y = agent.critic_target(&batch(1.0, false), &mut rng).unwrap();
        assert!((y[0] - 2.485).abs() < 1e-12);
        assert_eq!(agent.critic_target(&batch(0.7, true), &mut rng).unwrap(), vec![0.7]);
    }

    #[test]
    fn delayed_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut agent = Td3Agent::new(2, 1, &small(), &mut rng).unwrap();
        let b = batch(0.5, false);
        let ran: Vec<bool> = (1..=4).map(|t| agent.actor_update(&b, t).unwrap().is_some()).collect();
        assert_eq!(ran, vec![false, true, false, true]);
    }

    #[test]
    fn full_soft_update_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut agent = Td3Agent::new(2, 1, &small(), &mut rng).unwrap();
        agent.actor = Mlp::new(&[2, 8, 1], Activation::Relu, Activation::Tanh, &mut rng);
        agent.soft_update_targets(1.0);
        assert_eq!(agent.actor_tgt, agent.actor);
    }

    #[test]
    fn deterministic_action_is_repeatable_and_boxed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let agent = Td3Agent::new(2, 2, &small(), &mut rng).unwrap();
        let a = agent.act(&[5.0, -3.0], false, &mut rng).unwrap();
        assert_eq!(a, agent.act(&[5.0, -3.0], false, &mut rng).unwrap());
        for _ in 0..100 {
            assert!(agent.act(&[5.0, -3.0], true, &mut rng).unwrap().iter().all(|x| x.abs() <= 1.0));
        }
    }

    #[test]
    fn invalid_hyperparameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(Td3Agent::new(2, 1, &Td3Config { policy_delay: 0, ..small() }, &mut rng).is_err());
        assert!(Td3Agent::new(2, 1, &Td3Config { tau: 0.0, ..small() }, &mut rng).is_err());
    }
}
