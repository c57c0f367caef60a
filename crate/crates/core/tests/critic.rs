use lwail_autodiff::{Activation, Linear, Mlp, Tensor};
use lwail_core::critic::{reward_from_output, CriticConfig, WassersteinCritic};
use lwail_core::envs::PointMassMaze;
use lwail_core::oracle::{euclidean_cost, wasserstein_lp};
use lwail_core::pipeline::{build_embedder, expert_dataset, pretrain_critic, random_dataset, ExperimentConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(n: usize, mean: [f64; 2], std: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..2).map(|i| mean[i] + std * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    Tensor::from_rows(&rows).unwrap()
}

fn small_cfg() -> CriticConfig {
    CriticConfig { hidden: vec![32, 32], batch_size: 256, ..CriticConfig::default() }
}

fn linear_critic(w: &[f64]) -> WassersteinCritic {
    let weight = Tensor::new(vec![w.len(), 1], w.to_vec()).unwrap();
    let f = Mlp::from_layers(vec![Linear { weight, bias: Tensor::new(vec![1], vec![0.3]).unwrap() }], vec![Activation::Identity]).unwrap();
    WassersteinCritic::from_mlp(f, &small_cfg()).unwrap()
}

#[test]
fn gap_is_antisymmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let critic = WassersteinCritic::new(2, &small_cfg(), &mut rng);
    let (e, l) = (gaussian(40, [0.0, 0.0], 1.0, &mut rng), gaussian(70, [1.0, 0.0], 1.0, &mut rng));
    let forward = critic.dual_gap(&e, &l).unwrap();
    assert!((forward + critic.dual_gap(&l, &e).unwrap()).abs() < 1e-12);
}

#[test]
fn indistinguishable_sides_give_no_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut critic = WassersteinCritic::new(2, &small_cfg(), &mut rng);
    for _ in 0..300 {
        let (e, l) = (gaussian(256, [0.0, 0.0], 1.0, &mut rng), gaussian(256, [0.0, 0.0], 1.0, &mut rng));
        critic.update(&e, &l, 1, &mut rng).unwrap();
    }
    let (e, l) = (gaussian(4000, [0.0, 0.0], 1.0, &mut rng), gaussian(4000, [0.0, 0.0], 1.0, &mut rng));
    let gap = critic.dual_gap(&e, &l).unwrap();
    assert!(gap.abs() <= 0.05, "gap {gap}");
}

#[test]
fn separated_clusters_approach_the_transport_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let e = gaussian(64, [0.0, 0.0], 0.05, &mut rng);
    let l = gaussian(64, [1.0, 0.5], 0.05, &mut rng);
    let rows = |t: &Tensor| (0..t.rows()).map(|i| t.row(i).to_vec()).collect::<Vec<_>>();
    let w = vec![1.0 / 64.0; 64];
    let lp = wasserstein_lp(&w, &w, &euclidean_cost(&rows(&l), &rows(&e))).unwrap().value;
    let mut critic = WassersteinCritic::new(2, &small_cfg(), &mut rng);
    let stats = critic.update(&e, &l, 600, &mut rng).unwrap();
    assert!(stats.gap_after >= stats.gap_before);
    let gap = critic.dual_gap(&e, &l).unwrap();
    assert!((gap - lp).abs() <= 0.1 * lp, "gap {gap}, W1 {lp}");
}

#[test]
fn pretraining_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (e, l) = (gaussian(50, [0.0, 0.0], 0.3, &mut rng), gaussian(80, [1.0, 0.0], 0.3, &mut rng));
        let cfg = CriticConfig { pretrain_steps: 20, ..small_cfg() };
        let mut critic = WassersteinCritic::new(2, &cfg, &mut rng);
        critic.pretrain(&e, &l, &mut rng).unwrap();
        critic.checksum()
    };
    assert_eq!(run(), run());
}

#[test]
fn pretrained_maze_critic_prefers_expert_pairs() {
    let cfg = ExperimentConfig { icvf_steps: 5000, ..ExperimentConfig::desk() };
    let expert = expert_dataset(&cfg).unwrap();
    let (_, embedder) = build_embedder(&cfg, &random_dataset(&cfg).unwrap()).unwrap();
    let critic = pretrain_critic(&cfg, &embedder, &expert).unwrap();
    let held_out = PointMassMaze::umaze().random_rollout(2000, 100, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    let mean_reward = |ds: &lwail_core::datasets::Dataset| {
        let (s, s2) = ds.pair_tensors();
        let r = critic.pseudo_rewards(&embedder.embed_pairs(&s, &s2).unwrap()).unwrap();
        r.iter().sum::<f64>() / r.len() as f64
    };
    let (re, rr) = (mean_reward(&expert), mean_reward(&held_out));
    assert!(re > rr, "expert {re} vs random {rr}");
}

#[test]
fn rewards_stay_strictly_inside_the_unit_interval() {
    assert_eq!(reward_from_output(0.0), 0.5);
    assert!(reward_from_output(1e9) > 0.0 && reward_from_output(1e9) < 1e-14);
    assert!(reward_from_output(-1e9) < 1.0 && reward_from_output(-1e9) > 1.0 - 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let critic = WassersteinCritic::new(4, &small_cfg(), &mut rng);
    let rows: Vec<Vec<f64>> = (0..100_000).map(|_| (0..4).map(|_| rng.gen_range(-1e3..1e3)).collect()).collect();
    let r = critic.pseudo_rewards(&Tensor::from_rows(&rows).unwrap()).unwrap();
    assert!(r.iter().all(|&x| x > 0.0 && x < 1.0));
}

proptest! {
    #[test]
    fn unit_slope_linear_critics_have_zero_penalty(theta in 0.0f64..6.3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (e, l) = (gaussian(17, [0.0, 0.0], 1.0, &mut rng), gaussian(23, [2.0, 1.0], 1.0, &mut rng));
        let unit = linear_critic(&[theta.cos(), theta.sin()]);
        prop_assert!(unit.gradient_penalty(&e, &l, &mut rng).unwrap() < 1e-20);
        let steep = linear_critic(&[2.0 * theta.cos(), 2.0 * theta.sin()]);
        prop_assert!((steep.gradient_penalty(&e, &l, &mut rng).unwrap() - 1.0).abs() < 1e-12);
    }
}
