use lwail_autodiff::{Activation, Linear, Mlp, Tensor};
use lwail_core::datasets::{Dataset, Role, Trajectory};
use lwail_core::icvf::{train_icvf, IcvfBatch, IcvfConfig, IcvfModel, IcvfSampler, Mixture};
use lwail_core::oracle::{icvf_exact, TabularMdp, TabularPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn line_dataset(lengths: &[usize]) -> Dataset {
    let mut ds = Dataset::new(Role::Random, 1, 0).unwrap();
    let mut k = 0.0;
    for &n in lengths {
        let states = (0..n).map(|_| {
            k += 1.0;
            vec![k]
        });
        ds.push(Trajectory::states_only(states.collect(), false).unwrap()).unwrap();
    }
    ds
}

fn cfg_with(mixture: Mixture) -> IcvfConfig {
    IcvfConfig { mixture, ..IcvfConfig::default() }
}

#[test]
fn future_offsets_are_geometric() {
    let ds = line_dataset(&[20_001]);
    let sampler = IcvfSampler::new(&ds).unwrap();
    let cfg = cfg_with(Mixture { random: 0.0, future: 1.0, current: 0.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 100_000;
    let q = cfg.future_discount;
    // Twenty bins of equal probability for the offset minus one.
    let bins = 20;
    let edges: Vec<u64> = (0..=bins).map(|i| ((1.0 - i as f64 / bins as f64).ln() / q.ln()).ceil() as u64).collect();
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let d = sampler.sample_targets(0, &cfg, &mut rng).unwrap();
        let k = (d.s_plus - 1) as u64;
        let b = edges.iter().rposition(|&e| e <= k).unwrap().min(bins - 1);
        counts[b] += 1;
    }
    let mut chi2 = 0.0;
    for b in 0..bins {
        let lo = q.powi(edges[b] as i32);
        let hi = if b + 1 == bins { 0.0 } else { q.powi(edges[b + 1] as i32) };
        let expected = n as f64 * (lo - hi);
        chi2 += (counts[b] as f64 - expected).powi(2) / expected;
    }
    let critical = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(chi2 < critical, "χ² {chi2} ≥ {critical}");
}

#[test]
fn random_targets_are_uniform_over_states() {
    let ds = line_dataset(&[4, 6]);
    let sampler = IcvfSampler::new(&ds).unwrap();
    let cfg = cfg_with(Mixture { random: 1.0, future: 0.0, current: 0.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 10_000;
    let mut counts = vec![0usize; sampler.num_states()];
    for _ in 0..n {
        let t = rng.gen_range(0..sampler.num_transitions());
        let d = sampler.sample_targets(t, &cfg, &mut rng).unwrap();
        counts[d.s_plus] += 1;
        assert!(!d.indicator);
    }
    let p = 1.0 / counts.len() as f64;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma);
    }
}

#[test]
fn future_targets_stay_in_their_trajectory() {
    let ds = line_dataset(&[3, 50, 2]);
    let sampler = IcvfSampler::new(&ds).unwrap();
    let cfg = cfg_with(Mixture { random: 0.0, future: 1.0, current: 0.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for t in 0..sampler.num_transitions() {
        let k = sampler.transition_source(t);
        let traj_end = if k < 3 { 2 } else if k < 53 { 52 } else { 54 };
        for _ in 0..200 {
            let d = sampler.sample_targets(t, &cfg, &mut rng).unwrap();
            assert!(d.s_plus > k && d.s_plus <= traj_end);
        }
    }
}

#[test]
fn value_matches_independent_contraction() {
    let cfg = IcvfConfig { embed_dim: 5, hidden: vec![7], ..IcvfConfig::default() };
    let model = IcvfModel::new(3, &cfg, &mut ChaCha8Rng::seed_from_u64(10));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows = |rng: &mut ChaCha8Rng| -> Tensor {
        Tensor::from_rows(&(0..6).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>()).collect::<Vec<_>>()).unwrap()
    };
    let (s, sp, z) = (rows(&mut rng), rows(&mut rng), rows(&mut rng));
    let got = model.values(&s, &sp, &z, false).unwrap();
    let f = model.phi.predict(&s).unwrap();
    let p = model.psi.predict(&sp).unwrap();
    let t = model.tnet.predict(&z).unwrap();
    for i in 0..6 {
        let mut v = 0.0;
        for j in 0..5 {
            for k in 0..5 {
                v += f.row(i)[j] * t.row(i)[j * 5 + k] * p.row(i)[k];
            }
        }
        assert!((got[i] - v).abs() < 1e-12);
    }
}

fn perturbed_loss(model: &IcvfModel, batch: &IcvfBatch, cfg: &IcvfConfig, net: usize, idx: usize, h: f64) -> f64 {
    let mut m = model.clone();
    let params = match net {
        0 => m.phi.params_mut(),
        1 => m.psi.params_mut(),
        _ => m.tnet.params_mut(),
    };
    let mut seen = 0;
    for p in params {
        if idx < seen + p.len() {
            p.data_mut()[idx - seen] += h;
            break;
        }
        seen += p.len();
    }
    m.loss(batch, cfg).unwrap()
}

#[test]
fn gradient_is_semi_gradient_through_live_nets_only() {
    let cfg = IcvfConfig { embed_dim: 3, hidden: vec![6], batch_size: 16, ..IcvfConfig::default() };
    let ds = line_dataset(&[30, 30]);
    let sampler = IcvfSampler::new(&ds).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut model = IcvfModel::new(1, &cfg, &mut rng);
    // Live and target nets differ, so a gradient leaking through the
    // targets would not match differences of the live-only loss.
    let other = IcvfModel::new(1, &cfg, &mut rng);
    model.phi_tgt = other.phi.clone();
    model.psi_tgt = other.psi.clone();
    model.tnet_tgt = other.tnet.clone();
    let batch = sampler.sample_batch(16, &cfg, &mut rng).unwrap();
    let (_, grads) = model.loss_and_grads(&batch, &cfg).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (net, g) in grads.iter().enumerate() {
        let flat: Vec<f64> = g.iter().flat_map(|t| t.data().to_vec()).collect();
        for idx in (0..flat.len()).step_by(3) {
            let fd = (perturbed_loss(&model, &batch, &cfg, net, idx, h) - perturbed_loss(&model, &batch, &cfg, net, idx, -h))
                / (2.0 * h);
            worst = worst.max((fd - flat[idx]).abs() / fd.abs().max(flat[idx].abs()).max(1e-6));
        }
    }
    assert!(worst < 1e-5, "max relative error {worst}");
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    (0..n).map(|j| f64::from(u8::from(i == j))).collect()
}

fn linear(weight: Tensor) -> Mlp {
    let cols = weight.shape()[1];
    Mlp::from_layers(vec![Linear { weight, bias: Tensor::zeros(&[cols]) }], vec![Activation::Identity]).unwrap()
}

#[test]
fn exact_tabular_values_have_zero_advantage_on_policy() {
    let gamma = 0.9;
    let n = 5;
    let next: Vec<Vec<usize>> = (0..n).map(|s| vec![(s + 1).min(n - 1)]).collect();
    let mdp = TabularMdp::deterministic(&next, one_hot(n, 0), gamma).unwrap();
    let pi = TabularPolicy::deterministic(&vec![0; n], 1).unwrap();
    // T(onehot z) is the flattened table V(s, s₊) for outcome index s₊.
    let mut w = vec![0.0; n * n * n];
    for s_plus in 0..n {
        let v = icvf_exact(&mdp, &pi, s_plus).unwrap();
        for z in 0..n {
            for s in 0..n {
                w[z * n * n + s * n + s_plus] = v[s];
            }
        }
    }
    let eye = Tensor::new(vec![n, n], (0..n * n).map(|i| f64::from(u8::from(i / n == i % n))).collect()).unwrap();
    let model = IcvfModel::from_nets(linear(eye.clone()), linear(eye), linear(Tensor::new(vec![n, n * n], w).unwrap())).unwrap();
    let rows: Vec<usize> = (0..n - 1).collect();
    for z in 0..n {
        let batch = IcvfBatch {
            s: Tensor::from_rows(&rows.iter().map(|&s| one_hot(n, s)).collect::<Vec<_>>()).unwrap(),
            s2: Tensor::from_rows(&rows.iter().map(|&s| one_hot(n, s + 1)).collect::<Vec<_>>()).unwrap(),
            s_plus: Tensor::from_rows(&rows.iter().map(|_| one_hot(n, z)).collect::<Vec<_>>()).unwrap(),
            z: Tensor::from_rows(&rows.iter().map(|_| one_hot(n, z)).collect::<Vec<_>>()).unwrap(),
            ind_plus: rows.iter().map(|&s| f64::from(u8::from(s == z))).collect(),
            ind_z: rows.iter().map(|&s| f64::from(u8::from(s == z))).collect(),
        };
        for a in model.advantages(&batch, gamma).unwrap() {
            assert!(a.abs() < 1e-12, "z {z}: advantage {a}");
        }
    }
}

#[test]
fn training_needs_steps_and_freezes_phi() {
    let ds = line_dataset(&[20]);
    let cfg = IcvfConfig { embed_dim: 4, hidden: vec![8], batch_size: 8, ..IcvfConfig::default() };
    assert!(train_icvf(&ds, &cfg, 0, 1).is_err());
    let init = IcvfModel::new(1, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
    let model = train_icvf(&ds, &cfg, 1, 1).unwrap();
    assert!(model.is_frozen());
    assert_ne!(model.checksum(), init.checksum());
}

#[test]
fn chain_values_decrease_with_distance_to_the_goal() {
    // Random walk on an eight-state chain; features are the scaled position.
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut ds = Dataset::new(Role::Random, 1, 0).unwrap();
    for _ in 0..100 {
        let mut s: usize = rng.gen_range(0..n);
        let mut states = vec![vec![s as f64 / (n - 1) as f64]];
        for _ in 0..50 {
            s = if rng.gen::<bool>() { (s + 1).min(n - 1) } else { s.saturating_sub(1) };
            states.push(vec![s as f64 / (n - 1) as f64]);
        }
        ds.push(Trajectory::states_only(states, false).unwrap()).unwrap();
    }
    let cfg = IcvfConfig { embed_dim: 8, hidden: vec![32, 32], batch_size: 64, ..IcvfConfig::default() };
    let model = train_icvf(&ds, &cfg, 20_000, 14).unwrap();
    let x = |i: usize| vec![i as f64 / (n - 1) as f64];
    for z in [0, n - 1] {
        let v: Vec<f64> = (0..n).map(|s| model.value(&x(s), &x(z), &x(z)).unwrap()).collect();
        let mut by_distance: Vec<(usize, f64)> = (0..n).map(|s| (s.abs_diff(z), v[s])).collect();
        by_distance.sort_by_key(|p| p.0);
        for w in by_distance.windows(2) {
            assert!(w[1].1 <= w[0].1, "goal {z}: values {v:?}");
        }
    }
}
