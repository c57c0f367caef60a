use lwail_core::envs::{GridMaze, Mu0};
use lwail_core::oracle::{
    abs_cost_1d, cdf_area_1d, euclidean_cost, goal_value_iteration, icvf_exact, monte_carlo_icvf, monte_carlo_occupancy,
    state_occupancy, state_pair_occupancy, total_variation, wasserstein_lp, TabularMdp, TabularPolicy,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bfs_greedy_policy(grid: &GridMaze) -> TabularPolicy {
    let layout = grid.layout();
    let free = layout.free_cells();
    let dist = layout.bfs_distances(layout.goal());
    let actions: Vec<usize> =
        free.iter().map(|&c| layout.greedy_move(c, layout.goal(), &dist).unwrap_or(0)).collect();
    TabularPolicy::deterministic(&actions, 4).unwrap()
}

fn random_weights<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|v| v / t).collect()
}

#[test]
fn grid_occupancy_matches_monte_carlo() {
    let mut grid = GridMaze::umaze();
    grid.slip = 0.05;
    let mdp = grid.to_tabular(Mu0::Uniform);
    let pi = bfs_greedy_policy(&grid);
    let exact = state_occupancy(&mdp, &pi).unwrap();
    let mc = monte_carlo_occupancy(&mdp, &pi, 100_000, &mut ChaCha8Rng::seed_from_u64(1));
    let tv = total_variation(&exact, &mc);
    assert!(tv < 0.01, "TV {tv}");
}

#[test]
fn grid_icvf_matches_monte_carlo() {
    let mut grid = GridMaze::umaze();
    grid.slip = 0.05;
    let mdp = grid.to_tabular(Mu0::Start);
    let free = grid.layout().free_cells();
    let z = free.iter().position(|&c| c == grid.layout().goal()).unwrap();
    let (_, pi) = goal_value_iteration(&mdp, z, 1e-12).unwrap();
    let start = free.iter().position(|&c| c == grid.layout().start()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for s_plus in [start, 7, 12] {
        let exact = icvf_exact(&mdp, &pi, s_plus).unwrap();
        let mc = monte_carlo_icvf(&mdp, &pi, start, s_plus, 20_000, &mut rng);
        assert!((exact[start] - mc).abs() < 0.01, "s+ {s_plus}: exact {} mc {mc}", exact[start]);
    }
}

#[test]
fn lp_matches_cdf_area_on_random_1d_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..50 {
        let (n, m) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
        let xp: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let xq: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (p, q) = (random_weights(n, &mut rng), random_weights(m, &mut rng));
        let cost = abs_cost_1d(&xp, &xq);
        let plan = wasserstein_lp(&p, &q, &cost).unwrap();
        let area = cdf_area_1d(&xp, &p, &xq, &q);
        assert!((plan.value - area).abs() < 1e-9, "fixture {k}: {} vs {area}", plan.value);
        for (a, b) in plan.row_sums().iter().zip(&p) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in plan.col_sums().iter().zip(&q) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(plan.plan.iter().all(|&x| x >= -1e-12));
        assert!((plan.dual_value(&p, &q) - plan.value).abs() < 1e-9);
        assert!(plan.max_dual_violation(&cost) < 1e-9);
    }
}

#[test]
fn lp_distance_satisfies_metric_axioms() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let pts: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let cost = euclidean_cost(&pts, &pts);
        let [p, q, r] = [0, 1, 2].map(|_| random_weights(12, &mut rng));
        let w = |a: &[f64], b: &[f64]| wasserstein_lp(a, b, &cost).unwrap().value;
        assert!(w(&p, &p).abs() < 1e-12);
        assert!((w(&p, &q) - w(&q, &p)).abs() < 1e-9);
        assert!(w(&p, &r) <= w(&p, &q) + w(&q, &r) + 1e-9);
    }
}

fn random_mdp(seed: u64) -> (TabularMdp, TabularPolicy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, na) = (rng.gen_range(1..7), rng.gen_range(1..4));
    let p: Vec<f64> = (0..n * na).flat_map(|_| random_weights(n, &mut rng)).collect();
    let mu0 = random_weights(n, &mut rng);
    let gamma = rng.gen_range(0.0..0.99);
    let probs: Vec<f64> = (0..n).flat_map(|_| random_weights(na, &mut rng)).collect();
    (TabularMdp::new(n, na, p, mu0, gamma).unwrap(), TabularPolicy::new(n, na, probs).unwrap())
}

proptest! {
    #[test]
    fn occupancies_normalize_and_marginalize(seed in any::<u64>()) {
        let (mdp, pi) = random_mdp(seed);
        let occ = state_pair_occupancy(&mdp, &pi).unwrap();
        let n = occ.n_states;
        prop_assert!((occ.d_s.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!((occ.d_ss.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for s in 0..n {
            let row: f64 = (0..n).map(|t| occ.pair(s, t)).sum();
            prop_assert!((row - occ.d_s[s]).abs() < 1e-10);
        }
        prop_assert!(occ.d_s.iter().chain(&occ.d_ss).all(|&x| x >= -1e-12));
    }
}
