//! Orchestration: random data and representation pre-training, critic
//! pre-training against the untrained policy, then the online loop that
//! interleaves environment steps, TD3 updates and periodic critic refreshes.

mod config;
mod metrics;

use std::path::{Path, PathBuf};
use std::time::Instant;

use lwail_autodiff::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{EmbeddingKind, ExperimentConfig, LearnerWindow, ResetMode, RewardSource};
pub use metrics::{MetricRow, RunMetrics, CSV_HEADER};

use crate::critic::WassersteinCritic;
use crate::datasets::{Dataset, ReplayBuffer, ReplayEntry, Role};
use crate::envs::{MazeLayout, NoiseSpec, Policy, PointMassMaze};
use crate::error::{LwailError, Result};
use crate::icvf::{train_icvf, Embedder, IcvfModel};
use crate::td3::Td3Agent;

/// Independent random streams derived from the run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    RandomData = 1,
    Icvf = 2,
    Critic = 3,
    Agent = 4,
    Online = 5,
    Eval = 6,
    Expert = 7,
    Embedding = 8,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn make_env(cfg: &ExperimentConfig) -> PointMassMaze {
    let mut env_cfg = cfg.env_config();
    env_cfg.terminate_on_goal = false;
    PointMassMaze::new(MazeLayout::point_umaze(), env_cfg)
}

/// Outputs of the pre-training stages.
#[derive(Clone, Debug)]
pub struct Pretrained {
    /// Present when the embedding is the ICVF `φ`.
    pub icvf: Option<IcvfModel>,
    pub embedder: Embedder,
    pub critic: WassersteinCritic,
    pub random: Dataset,
    pub expert: Dataset,
}

pub const ICVF_FILE: &str = "icvf.ckpt";
pub const CRITIC_FILE: &str = "critic.ckpt";
pub const RANDOM_FILE: &str = "random.dataset";
pub const EXPERT_FILE: &str = "expert.dataset";
pub const CONFIG_FILE: &str = "config.txt";

/// Expert demonstrations from the fixed start, state-only.
pub fn expert_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let env = make_env(cfg);
    let mut seeds = stream_rng(cfg.seed, Stream::Expert);
    let mut ds = Dataset::new(Role::Expert, 4, 0)?;
    for _ in 0..cfg.expert_trajectories {
        ds.push(env.expert_trajectory(seeds.gen(), &NoiseSpec::none())?)?;
    }
    Ok(ds)
}

pub fn random_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    make_env(cfg).random_rollout(cfg.random_pairs, cfg.random_episode_len, &mut stream_rng(cfg.seed, Stream::RandomData))
}

pub fn initial_agent(cfg: &ExperimentConfig) -> Result<Td3Agent> {
    Td3Agent::new(4, 2, &cfg.td3(), &mut stream_rng(cfg.seed, Stream::Agent))
}

/// Embedding selected by `cfg.embedding`; ICVF trains on `random`.
pub fn build_embedder(cfg: &ExperimentConfig, random: &Dataset) -> Result<(Option<IcvfModel>, Embedder)> {
    match cfg.embedding {
        EmbeddingKind::Icvf => {
            let model = train_icvf(random, &cfg.icvf(), cfg.icvf_steps, cfg.seed ^ 0x1c7f)
                .map_err(|e| e.in_stage("pretrain/icvf", 0))?;
            let embedder = Embedder::from_icvf(&model)?;
            Ok((Some(model), embedder))
        }
        EmbeddingKind::Identity => Ok((None, Embedder::identity(4))),
        EmbeddingKind::Random => {
            Ok((None, Embedder::random(4, &cfg.icvf(), &mut stream_rng(cfg.seed, Stream::Embedding))))
        }
    }
}

/// Pairs `(s, s')` from the untrained actor with exploration noise, `n`
/// transitions from training resets.
pub fn untrained_policy_pairs(cfg: &ExperimentConfig, agent: &Td3Agent, n: usize) -> Result<(Tensor, Tensor)> {
    let mut env = make_env(cfg);
    let noise = cfg.noise()?;
    let mut rng = stream_rng(cfg.seed, Stream::Critic);
    let (mut s_rows, mut s2_rows) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut s = reset(&mut env, cfg.train_reset, &mut rng, &noise);
    while s_rows.len() < n {
        let a = agent.act(&s, true, &mut rng)?;
        let st = env.step(&a, &mut rng)?;
        s_rows.push(s);
        s2_rows.push(st.state.clone());
        s = if st.done() { reset(&mut env, cfg.train_reset, &mut rng, &noise) } else { st.state };
    }
    Ok((Tensor::from_rows(&s_rows)?, Tensor::from_rows(&s2_rows)?))
}

fn reset<R: Rng + ?Sized>(env: &mut PointMassMaze, mode: ResetMode, rng: &mut R, noise: &NoiseSpec) -> Vec<f64> {
    match mode {
        ResetMode::Start => env.reset(rng, noise),
        ResetMode::Uniform => env.reset_uniform(rng, noise),
    }
}

/// Embedded expert pairs and untrained-policy pairs, the two sides the
/// critic separates before the online loop.
pub fn pretrain_inputs(cfg: &ExperimentConfig, embedder: &Embedder, expert: &Dataset) -> Result<(Tensor, Tensor)> {
    let agent = initial_agent(cfg)?;
    let (ls, ls2) = untrained_policy_pairs(cfg, &agent, cfg.update_interval as usize)?;
    let (es, es2) = expert.pair_tensors();
    Ok((embedder.embed_pairs(&es, &es2)?, embedder.embed_pairs(&ls, &ls2)?))
}

pub fn pretrain_critic(cfg: &ExperimentConfig, embedder: &Embedder, expert: &Dataset) -> Result<WassersteinCritic> {
    let (e, l) = pretrain_inputs(cfg, embedder, expert)?;
    let mut critic = WassersteinCritic::new(e.cols(), &cfg.critic(), &mut stream_rng(cfg.seed, Stream::Critic));
    critic.pretrain(&e, &l, &mut stream_rng(cfg.seed ^ 0xc41c, Stream::Critic)).map_err(|e| e.in_stage("pretrain/critic", 0))?;
    Ok(critic)
}

/// Random data, embedding, expert data and critic pre-training.
pub fn run_pretrain(cfg: &ExperimentConfig) -> Result<Pretrained> {
    cfg.validate()?;
    let random = random_dataset(cfg)?;
    let (icvf, embedder) = build_embedder(cfg, &random)?;
    let expert = expert_dataset(cfg)?;
    let critic = pretrain_critic(cfg, &embedder, &expert)?;
    Ok(Pretrained { icvf, embedder, critic, random, expert })
}

impl Pretrained {
    pub fn save(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        if let Some(m) = &self.icvf {
            m.save(&dir.join(ICVF_FILE))?;
        }
        self.critic.save(&dir.join(CRITIC_FILE))?;
        self.random.save(&dir.join(RANDOM_FILE))?;
        self.expert.save(&dir.join(EXPERT_FILE))?;
        std::fs::write(dir.join(CONFIG_FILE), cfg.dump())?;
        Ok(())
    }

    /// Loads saved stages without retraining any of them; a missing file is
    /// an error.
    pub fn load(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        let (random, expert) = load_datasets(dir)?;
        let (icvf, embedder) = load_embedder(dir, cfg, &random)?;
        let critic = WassersteinCritic::load(&need(dir, CRITIC_FILE)?, 2 * embedder.output_dim(), &cfg.critic())?;
        Ok(Self { icvf, embedder, critic, random, expert })
    }
}

/// Path of a saved stage output; missing files are `Unavailable`.
pub fn need(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(LwailError::Unavailable(format!("missing checkpoint {}", p.display())))
    }
}

/// Saved random and expert datasets, in that order.
pub fn load_datasets(dir: &Path) -> Result<(Dataset, Dataset)> {
    Ok((Dataset::load(&need(dir, RANDOM_FILE)?, Role::Random)?, Dataset::load(&need(dir, EXPERT_FILE)?, Role::Expert)?))
}

/// The saved ICVF model for `embedding = icvf`; the other kinds are rebuilt
/// since they involve no training.
pub fn load_embedder(dir: &Path, cfg: &ExperimentConfig, random: &Dataset) -> Result<(Option<IcvfModel>, Embedder)> {
    match cfg.embedding {
        EmbeddingKind::Icvf => {
            let m = IcvfModel::load(&need(dir, ICVF_FILE)?, 4, &cfg.icvf())?;
            let e = Embedder::from_icvf(&m)?;
            Ok((Some(m), e))
        }
        _ => build_embedder(cfg, random),
    }
}

/// Deterministic-policy evaluation over `n` episodes from noisy starts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub mean_return: f64,
    pub success: f64,
}

/// Runs `n` full-horizon episodes; success means the goal region was entered
/// at least once, return counts steps spent inside it.
pub fn evaluate<P: Policy + ?Sized>(policy: &P, cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Evaluation> {
    if n == 0 {
        return Err(LwailError::InvalidInput("evaluation needs at least one episode".into()));
    }
    let mut env = make_env(cfg);
    let noise = cfg.noise()?;
    let mut rng = stream_rng(seed, Stream::Eval);
    let (mut total, mut hits) = (0.0, 0usize);
    for _ in 0..n {
        let mut s = env.reset(&mut rng, &noise);
        let mut reached = false;
        loop {
            let a = policy.action(&s);
            let st = env.step(&a, &mut rng)?;
            total += st.reward;
            reached |= st.reward > 0.0;
            if st.done() {
                break;
            }
            s = st.state;
        }
        hits += usize::from(reached);
    }
    Ok(Evaluation { mean_return: total / n as f64, success: hits as f64 / n as f64 })
}

/// Online loop with the pseudo-reward from the pre-trained critic.
pub fn run_imitation(cfg: &ExperimentConfig, pre: &Pretrained) -> Result<(Td3Agent, RunMetrics)> {
    cfg.validate()?;
    if cfg.reward != RewardSource::Pseudo {
        return Err(LwailError::Config("imitation needs reward = pseudo".into()));
    }
    if pre.expert.trajectories().is_empty() {
        return Err(LwailError::Config("no expert trajectory available".into()));
    }
    if pre.embedder.input_dim() != 4 || pre.critic.input_dim() != 2 * pre.embedder.output_dim() {
        return Err(LwailError::Config("pre-trained artifacts do not match the environment".into()));
    }
    online_loop(cfg, Some(pre))
}

/// Same online loop fed by the environment reward; no critic involved.
pub fn run_ground_truth(cfg: &ExperimentConfig) -> Result<(Td3Agent, RunMetrics)> {
    cfg.validate()?;
    online_loop(&ExperimentConfig { reward: RewardSource::GroundTruth, ..cfg.clone() }, None)
}

/// Pre-training plus imitation with `φ` replaced by the identity.
pub fn run_ablation_no_embedding(cfg: &ExperimentConfig) -> Result<RunMetrics> {
    let cfg = ExperimentConfig { embedding: EmbeddingKind::Identity, ..cfg.clone() };
    let pre = run_pretrain(&cfg)?;
    Ok(run_imitation(&cfg, &pre)?.1)
}

/// Pre-training then imitation.
pub fn run_full(cfg: &ExperimentConfig) -> Result<(Pretrained, Td3Agent, RunMetrics)> {
    let pre = run_pretrain(cfg)?;
    let (agent, metrics) = run_imitation(cfg, &pre)?;
    Ok((pre, agent, metrics))
}

fn online_loop(cfg: &ExperimentConfig, pre: Option<&Pretrained>) -> Result<(Td3Agent, RunMetrics)> {
    let mut agent = initial_agent(cfg)?;
    let mut metrics = RunMetrics::new(cfg.hash());
    if cfg.total_steps == 0 {
        return Ok((agent, metrics));
    }
    let mut critic = pre.map(|p| p.critic.clone());
    let expert_pairs = match pre {
        Some(p) => {
            let (es, es2) = p.expert.pair_tensors();
            Some(p.embedder.embed_pairs(&es, &es2)?)
        }
        None => None,
    };
    let mut env = make_env(cfg);
    let noise = cfg.noise()?;
    let mut rng = stream_rng(cfg.seed, Stream::Online);
    let mut critic_rng = stream_rng(cfg.seed ^ 0x5eed, Stream::Critic);
    let mut buffer = ReplayBuffer::new(4, 2, cfg.replay_capacity)?;
    let mut gap = match (&critic, &expert_pairs, pre) {
        (Some(c), Some(e), Some(p)) => {
            let (ls, ls2) = untrained_policy_pairs(cfg, &agent, cfg.update_interval as usize)?;
            c.dual_gap(e, &p.embedder.embed_pairs(&ls, &ls2)?)?
        }
        _ => f64::NAN,
    };
    let clock = Instant::now();
    let mut reward_sum = 0.0;
    let mut reward_count = 0usize;
    let mut s = reset(&mut env, cfg.train_reset, &mut rng, &noise);

    for t in 1..=cfg.total_steps {
        let a = if t <= cfg.start_steps {
            vec![rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]
        } else {
            agent.act(&s, true, &mut rng)?
        };
        let st = env.step(&a, &mut rng)?;
        let reward = match (&critic, pre) {
            (Some(c), Some(p)) => {
                let pair = p.embedder.embed_pairs(&Tensor::row_vector(&s), &Tensor::row_vector(&st.state))?;
                c.pseudo_rewards(&pair)?[0]
            }
            _ => st.reward,
        };
        reward_sum += reward;
        reward_count += 1;
        buffer.push(ReplayEntry { s: s.clone(), a, s2: st.state.clone(), reward, done: st.terminal })?;
        s = if st.done() { reset(&mut env, cfg.train_reset, &mut rng, &noise) } else { st.state };

        if t % cfg.update_interval == 0 {
            if let (Some(c), Some(e), Some(p)) = (critic.as_mut(), &expert_pairs, pre) {
                let m = cfg.update_interval as usize;
                let slots: Vec<usize> = match cfg.learner_window {
                    LearnerWindow::Recent => buffer.recent_slots(m),
                    LearnerWindow::Buffer => (0..m).map(|_| critic_rng.gen_range(0..buffer.len())).collect(),
                };
                let batch = buffer.gather(&slots);
                let l = p.embedder.embed_pairs(&batch.s, &batch.s2)?;
                gap = c.update(e, &l, cfg.disc_epochs, &mut critic_rng).map_err(|e| e.in_stage("imitation", t))?.gap_after;
                metrics.refresh_steps.push(t);
            }
        }

        if buffer.len() >= cfg.replay_batch {
            agent.train_step(&buffer, &mut rng).map_err(|e| e.in_stage("imitation", t))?;
        }

        if t % cfg.eval_interval == 0 || t == cfg.total_steps {
            let ev = evaluate(&agent, cfg, cfg.eval_episodes, cfg.seed.wrapping_add(t))?;
            metrics.push(
                MetricRow {
                    step: t,
                    mean_return: ev.mean_return,
                    success: ev.success,
                    mean_pseudo_reward: reward_sum / reward_count.max(1) as f64,
                    dual_gap: gap,
                },
                clock.elapsed().as_secs_f64(),
            )?;
            reward_sum = 0.0;
            reward_count = 0;
        }
    }
    Ok((agent, metrics))
}
