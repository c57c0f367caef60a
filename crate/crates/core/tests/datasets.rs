use lwail_core::datasets::{Dataset, ReplayBuffer, ReplayEntry, Role, Trajectory};
use lwail_core::envs::{NoiseSpec, PointMassMaze};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn entry(i: usize) -> ReplayEntry {
    ReplayEntry { s: vec![i as f64], a: vec![0.0], s2: vec![i as f64 + 1.0], reward: i as f64, done: false }
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(1, 1, 10).unwrap();
    for i in 0..10 {
        buf.push(entry(i)).unwrap();
    }
    let n = 100_000;
    let batch = buf.sample_batch(n, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let mut counts = [0usize; 10];
    for r in &batch.reward {
        counts[*r as usize] += 1;
    }
    let (p, nf) = (0.1, n as f64);
    let sigma = (nf * p * (1.0 - p)).sqrt();
    for (i, c) in counts.iter().enumerate() {
        assert!((*c as f64 - nf * p).abs() <= 3.0 * sigma, "entry {i}: {c}");
    }
}

#[test]
fn expert_pairs_are_states_minus_one() {
    let env = PointMassMaze::umaze();
    let t = env.expert_trajectory(0, &NoiseSpec::none()).unwrap();
    let len = t.states.len();
    let ds = Dataset::from_trajectories(Role::Expert, 4, 0, vec![t]).unwrap();
    assert_eq!(ds.num_pairs(), len - 1);
}

#[test]
fn malformed_files_are_rejected() {
    assert!(Dataset::from_text("", Role::Random).is_err());
    let env = PointMassMaze::umaze();
    let ds = env.random_rollout(3, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let text = ds.to_text();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[2].push_str(" 0.5");
    let err = Dataset::from_text(&lines.join("\n"), Role::Random).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
}

fn trajectories() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 1..12), 1..8)
}

proptest! {
    #[test]
    fn pairs_never_span_trajectories(ts in trajectories()) {
        let trajs: Vec<Trajectory> = ts
            .iter()
            .enumerate()
            .map(|(k, xs)| Trajectory::states_only(xs.iter().map(|&x| vec![k as f64, x]).collect(), k % 2 == 0).unwrap())
            .collect();
        let ds = Dataset::from_trajectories(Role::Random, 2, 0, trajs).unwrap();
        prop_assert_eq!(ds.num_pairs(), ts.iter().map(|t| t.len() - 1).sum::<usize>());
        for (s, s2) in ds.state_pairs() {
            prop_assert_eq!(s[0], s2[0]);
        }
        let back = Dataset::from_text(&ds.to_text(), Role::Random).unwrap();
        prop_assert_eq!(back.to_text(), ds.to_text());
    }
}
