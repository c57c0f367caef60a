use std::fmt::Write as _;
use std::path::Path;

use crate::critic::CriticConfig;
use crate::envs::{NoiseSpec, PointMassConfig};
use crate::error::{LwailError, Result};
use crate::icvf::{IcvfConfig, Mixture};
use crate::td3::Td3Config;

/// State map used by the critic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingKind {
    /// Frozen ICVF `φ`.
    Icvf,
    /// Raw states; the no-embedding ablation.
    Identity,
    /// Untrained network of the ICVF `φ` shape.
    Random,
}

/// Reward written into the replay buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardSource {
    Pseudo,
    /// Environment reward; bypasses the critic.
    GroundTruth,
}

/// Where training episodes start. Evaluation always uses the noisy start.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResetMode {
    Start,
    /// Uniform over the free area.
    Uniform,
}

/// Which learner pairs a critic refresh sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LearnerWindow {
    /// The last `update_interval` transitions.
    Recent,
    /// `update_interval` transitions drawn uniformly from the buffer.
    Buffer,
}

macro_rules! choice {
    ($ty:ident { $($v:ident => $s:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$v => $s),+ }
            }
        }
        impl std::str::FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s { $($s => Ok($ty::$v),)+ _ => Err(format!("unknown value {s:?}")) }
            }
        }
    };
}

choice!(EmbeddingKind { Icvf => "icvf", Identity => "identity", Random => "random" });
choice!(RewardSource { Pseudo => "pseudo", GroundTruth => "ground_truth" });
choice!(ResetMode { Start => "start", Uniform => "uniform" });
choice!(LearnerWindow { Recent => "recent", Buffer => "buffer" });

/// Every knob of a run. Text form is `key = value` per line.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: String,
    pub seed: u64,
    pub horizon: usize,
    pub init_noise: f64,
    pub action_noise: f64,
    pub random_pairs: usize,
    pub random_episode_len: usize,
    pub expert_trajectories: usize,
    pub embedding: EmbeddingKind,
    pub reward: RewardSource,
    pub train_reset: ResetMode,
    pub learner_window: LearnerWindow,
    pub total_steps: u64,
    pub update_interval: u64,
    pub start_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub replay_capacity: usize,
    pub gamma: f64,
    pub embed_dim: usize,
    pub icvf_hidden: Vec<usize>,
    pub icvf_steps: u64,
    pub icvf_lr: f64,
    pub icvf_batch: usize,
    pub icvf_target_period: u64,
    pub expectile: f64,
    pub mixture_random: f64,
    pub mixture_future: f64,
    pub mixture_current: f64,
    pub disc_hidden: Vec<usize>,
    pub disc_lr: f64,
    pub gp_lambda: f64,
    pub disc_epochs: usize,
    pub disc_batch: usize,
    pub disc_pretrain_steps: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub replay_batch: usize,
    pub tau: f64,
    pub policy_delay: u64,
    pub explore_std: f64,
    pub target_noise: f64,
    pub noise_clip: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let icvf = IcvfConfig::default();
        let critic = CriticConfig::default();
        let td3 = Td3Config::default();
        Self {
            env: "point_umaze".into(),
            seed: 0,
            horizon: PointMassConfig::default().horizon,
            init_noise: 0.0,
            action_noise: 0.0,
            random_pairs: 10_000,
            random_episode_len: 100,
            expert_trajectories: 1,
            embedding: EmbeddingKind::Icvf,
            reward: RewardSource::Pseudo,
            train_reset: ResetMode::Uniform,
            learner_window: LearnerWindow::Recent,
            total_steps: 200_000,
            update_interval: 4000,
            start_steps: 10_000,
            eval_interval: 5000,
            eval_episodes: 10,
            replay_capacity: 1_000_000,
            gamma: td3.gamma,
            embed_dim: icvf.embed_dim,
            icvf_hidden: icvf.hidden,
            icvf_steps: 20_000,
            icvf_lr: icvf.lr,
            icvf_batch: icvf.batch_size,
            icvf_target_period: icvf.target_period,
            expectile: icvf.alpha,
            mixture_random: icvf.mixture.random,
            mixture_future: icvf.mixture.future,
            mixture_current: icvf.mixture.current,
            disc_hidden: critic.hidden,
            disc_lr: critic.lr,
            gp_lambda: critic.gp_lambda,
            disc_epochs: critic.epochs,
            disc_batch: critic.batch_size,
            disc_pretrain_steps: critic.pretrain_steps,
            actor_hidden: td3.actor_hidden,
            critic_hidden: td3.critic_hidden,
            actor_lr: td3.actor_lr,
            critic_lr: td3.critic_lr,
            replay_batch: td3.batch_size,
            tau: td3.tau,
            policy_delay: td3.policy_delay,
            explore_std: td3.explore_std,
            target_noise: td3.target_noise,
            noise_clip: td3.noise_clip,
        }
    }
}

trait Field: Sized {
    fn parse_field(s: &str) -> std::result::Result<Self, String>;
    fn show(&self) -> String;
}

macro_rules! scalar_field {
    ($($t:ty),*) => {$(
        impl Field for $t {
            fn parse_field(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
scalar_field!(u64, usize, String);

impl Field for f64 {
    fn parse_field(s: &str) -> std::result::Result<Self, String> {
        let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err("must be finite".into())
        }
    }
    fn show(&self) -> String {
        format!("{self:?}")
    }
}

impl Field for Vec<usize> {
    fn parse_field(s: &str) -> std::result::Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| p.trim().parse::<usize>().map_err(|e| format!("{e}"))).collect()
    }
    fn show(&self) -> String {
        self.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

macro_rules! choice_field {
    ($($t:ty),*) => {$(
        impl Field for $t {
            fn parse_field(s: &str) -> std::result::Result<Self, String> {
                s.parse()
            }
            fn show(&self) -> String {
                self.as_str().to_string()
            }
        }
    )*};
}
choice_field!(EmbeddingKind, RewardSource, ResetMode, LearnerWindow);

macro_rules! fields {
    ($($name:ident),+ $(,)?) => {
        impl ExperimentConfig {
            /// Keys in dump order.
            pub const KEYS: &'static [&'static str] = &[$(stringify!($name)),+];

            /// Assigns one `key = value` entry.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($name) => {
                        self.$name = Field::parse_field(value)
                            .map_err(|e| LwailError::Config(format!("{key} = {value:?}: {e}")))?;
                    })+
                    _ => return Err(LwailError::Config(format!("unknown key {key:?}"))),
                }
                Ok(())
            }

            /// Canonical text: every key, in declaration order.
            pub fn dump(&self) -> String {
                let mut out = String::new();
                $(writeln!(out, "{} = {}", stringify!($name), Field::show(&self.$name)).unwrap();)+
                out
            }
        }
    };
}

fields!(
    env, seed, horizon, init_noise, action_noise, random_pairs, random_episode_len, expert_trajectories,
    embedding, reward, train_reset, learner_window, total_steps, update_interval, start_steps, eval_interval,
    eval_episodes, replay_capacity, gamma, embed_dim, icvf_hidden, icvf_steps, icvf_lr, icvf_batch,
    icvf_target_period, expectile, mixture_random, mixture_future, mixture_current, disc_hidden, disc_lr,
    gp_lambda, disc_epochs, disc_batch, disc_pretrain_steps, actor_hidden, critic_hidden, actor_lr, critic_lr,
    replay_batch, tau, policy_delay, explore_std, target_noise, noise_clip,
);

impl ExperimentConfig {
    /// Single-core scale: embedding 16, `[64, 64]` ICVF, actor and critic
    /// networks, exploration std 0.3. Every other value keeps its default.
    pub fn desk() -> Self {
        Self {
            embed_dim: 16,
            icvf_hidden: vec![64, 64],
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            explore_std: 0.3,
            ..Self::default()
        }
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_over(Self::default(), text)
    }

    pub fn parse_over(mut base: Self, text: &str) -> Result<Self> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(LwailError::Parse { line: i + 1, msg: format!("expected `key = value`, got {line:?}") });
            };
            base.set(k.trim(), v.trim()).map_err(|e| LwailError::Parse { line: i + 1, msg: e.to_string() })?;
        }
        base.validate()?;
        Ok(base)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.env != "point_umaze" {
            return Err(LwailError::Config(format!("unsupported env {:?}", self.env)));
        }
        if self.update_interval == 0 || self.eval_interval == 0 || self.eval_episodes == 0 {
            return Err(LwailError::Config("update_interval, eval_interval and eval_episodes must be ≥ 1".into()));
        }
        if self.random_pairs == 0 || self.random_episode_len == 0 || self.expert_trajectories == 0 {
            return Err(LwailError::Config("dataset sizes must be ≥ 1".into()));
        }
        if self.replay_capacity == 0 || self.horizon == 0 {
            return Err(LwailError::Config("replay_capacity and horizon must be ≥ 1".into()));
        }
        self.noise()?;
        self.icvf().validate()?;
        self.td3().validate()
    }

    /// 64-bit FNV-1a of [`ExperimentConfig::dump`].
    pub fn hash(&self) -> u64 {
        self.dump().bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
    }

    pub fn noise(&self) -> Result<NoiseSpec> {
        NoiseSpec::new(self.init_noise, self.action_noise)
    }

    pub fn env_config(&self) -> PointMassConfig {
        PointMassConfig { horizon: self.horizon, ..PointMassConfig::default() }
    }

    pub fn icvf(&self) -> IcvfConfig {
        IcvfConfig {
            embed_dim: self.embed_dim,
            hidden: self.icvf_hidden.clone(),
            lr: self.icvf_lr,
            alpha: self.expectile,
            gamma: self.gamma,
            target_period: self.icvf_target_period,
            batch_size: self.icvf_batch,
            mixture: Mixture { random: self.mixture_random, future: self.mixture_future, current: self.mixture_current },
            future_discount: self.gamma,
        }
    }

    pub fn critic(&self) -> CriticConfig {
        CriticConfig {
            hidden: self.disc_hidden.clone(),
            lr: self.disc_lr,
            gp_lambda: self.gp_lambda,
            epochs: self.disc_epochs,
            batch_size: self.disc_batch,
            pretrain_steps: self.disc_pretrain_steps,
        }
    }

    pub fn td3(&self) -> Td3Config {
        Td3Config {
            actor_hidden: self.actor_hidden.clone(),
            critic_hidden: self.critic_hidden.clone(),
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            gamma: self.gamma,
            tau: self.tau,
            policy_delay: self.policy_delay,
            explore_std: self.explore_std,
            target_noise: self.target_noise,
            noise_clip: self.noise_clip,
            batch_size: self.replay_batch,
        }
    }
}
