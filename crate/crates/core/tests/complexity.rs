use dynregret::complexity::{
    bound_minibatch, finite_class_sup, mixed_value_single_round, mixing_gap_profile, pure_minimax_oracle,
    seq_rademacher_exhaustive, seq_rademacher_mc, slope_fit, ComplexityError, McConfig, RademacherTree,
};
use dynregret::control::{CostPair, LqrEnv, LqrSystem};
use dynregret::discrete::{deterministic_policies, mdp_induced_transition, mdp_stationary_distribution, MdpEnv, MdpSystem, TabularGame};
use dynregret::game::Environment;
use dynregret::linalg::{spectral_norm, Matrix};
use dynregret::rollout::{counterfactual_losses, RolloutConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn units(n: usize) -> Vec<(usize, ())> {
    (0..n).map(|i| (i, ())).collect()
}

/// Brute force: every assignment of instances to the `2^T − 1` nodes, every
/// sign path, every policy.
fn rademacher_by_tree_enumeration(game: &TabularGame, policies: &[usize], depth: usize) -> f64 {
    let nodes = (1usize << depth) - 1;
    let z = game.instances();
    let cfg = RolloutConfig::default();
    let mut best = f64::NEG_INFINITY;
    let mut assignment = vec![0usize; nodes];
    loop {
        let mut total = 0.0;
        for bits in 0..(1usize << depth) {
            let signs: Vec<f64> = (0..depth).map(|k| if bits >> k & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let mut index = 0;
            let mut zs = Vec::new();
            for s in &signs {
                zs.push(assignment[index]);
                index = 2 * index + if *s > 0.0 { 2 } else { 1 };
            }
            let zetas = vec![(); depth - 1];
            let sup = policies
                .iter()
                .map(|p| {
                    let l = counterfactual_losses(game, p, &zetas, &zs, &cfg).unwrap();
                    l.iter().zip(&signs).map(|(a, b)| a * b).sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            total += sup;
        }
        best = best.max(total / (1usize << depth) as f64);
        let mut j = 0;
        loop {
            if j == nodes {
                return best;
            }
            assignment[j] += 1;
            if assignment[j] < z {
                break;
            }
            assignment[j] = 0;
            j += 1;
        }
    }
}

#[test]
fn exhaustive_recursion_matches_tree_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..12 {
        let states = if case % 2 == 0 { 1 } else { 3 };
        let game = TabularGame::random(3, 2, states, -1.0, 1.0, &mut rng);
        let depth = 1 + case % 3;
        let exact = seq_rademacher_exhaustive(&game, &[0, 1, 2], &units(2), depth, &RolloutConfig::default()).unwrap();
        let brute = rademacher_by_tree_enumeration(&game, &[0, 1, 2], depth);
        assert!((exact.value - brute).abs() < 1e-12, "case {case}: {} vs {brute}", exact.value);
    }
}

#[test]
fn mc_interval_covers_exhaustive_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut covered = 0;
    for case in 0..6u64 {
        let game = TabularGame::random(3, 3, 1, 0.0, 1.0, &mut rng);
        let policies = [0, 1, 2];
        let inst = units(3);
        let depth = 3;
        let cfg = RolloutConfig::default();
        let exact = seq_rademacher_exhaustive(&game, &policies, &inst, depth, &cfg).unwrap().value;
        let sup = finite_class_sup(&game, &policies, cfg);
        let mc = McConfig { seed: case, ..McConfig::default() };
        let (est, _) = seq_rademacher_mc(
            sup,
            |_, r| RademacherTree::from_fn(depth, |_| (r.gen_range(0..3), ())),
            Some(&inst),
            depth,
            &mc,
        )
        .unwrap();
        assert!(est.ci_low <= exact + 1e-12, "lower bound {} above exhaustive {exact}", est.ci_low);
        covered += usize::from(est.ci_low <= exact && exact <= est.ci_high);
    }
    assert!(covered >= 5);
}

/// Second implementation of the oracle: enumerate every deterministic
/// strategy (a policy per learner history) and every instance sequence.
fn minimax_by_strategy_enumeration(game: &TabularGame, horizon: usize) -> f64 {
    let p = game.policies();
    let z = game.instances();
    // histories of the learner before round t are instance prefixes of length t−1
    let histories: usize = (0..horizon).map(|t| z.pow(t as u32)).sum();
    let strategies = p.pow(histories as u32);
    let cfg = RolloutConfig::default();
    let mut best = f64::INFINITY;
    for s in 0..strategies {
        let table: Vec<usize> = (0..histories).map(|h| s / p.pow(h as u32) % p).collect();
        let mut worst = f64::NEG_INFINITY;
        for seq in 0..z.pow(horizon as u32) {
            let zs: Vec<usize> = (0..horizon).map(|t| seq / z.pow(t as u32) % z).collect();
            let mut state = game.start;
            let mut learner = 0.0;
            let mut offset = 0;
            let mut code = 0;
            for t in 0..horizon {
                let pi = table[offset + code];
                learner += game.value(pi, state, zs[t]);
                state = game.successor(state, pi);
                offset += z.pow(t as u32);
                code = code * z + zs[t];
            }
            let zetas = vec![(); horizon - 1];
            let comparator = (0..p)
                .map(|pi| counterfactual_losses(game, &pi, &zetas, &zs, &cfg).unwrap().iter().fold(0.0, |a, b| a + b))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(learner - comparator);
        }
        best = best.min(worst);
    }
    best
}

#[test]
fn minimax_recursion_matches_strategy_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..10 {
        let p = 2 + case % 2;
        let z = 2 + (case / 2) % 2;
        let game = TabularGame::random(p, z, 2, 0.0, 1.0, &mut rng);
        let horizon = 1 + case % 2;
        let policies: Vec<usize> = (0..p).collect();
        let oracle = pure_minimax_oracle(&game, &policies, &units(z), horizon).unwrap();
        assert_eq!(oracle.value, minimax_by_strategy_enumeration(&game, horizon), "case {case}");
    }
}

#[test]
fn pure_value_dominates_mixed_single_round_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let game = TabularGame::random(3, 3, 1, 0.0, 1.0, &mut rng);
        let pure = pure_minimax_oracle(&game, &[0, 1, 2], &units(3), 1).unwrap().value;
        let mixed = mixed_value_single_round(&game, &[0, 1, 2], &[0, 1, 2]).unwrap();
        assert!(mixed.lower <= pure + 1e-12);
        assert!(mixed.upper - mixed.lower <= 1e-6 || !mixed.converged);
    }
}

#[test]
fn minibatch_objective_minimum_on_a_fine_grid() {
    // Σβ(τ) = 2T/τ, rad(τ) = √(T/τ): minimum 3·2^{1/3} T^{2/3} at τ = (4T)^{1/3}
    let t = 4096.0f64;
    let taus: Vec<usize> = (1..=200).collect();
    let beta: Vec<f64> = taus.iter().map(|&k| 2.0 * t / k as f64).collect();
    let rad: Vec<f64> = taus.iter().map(|&k| (t / k as f64).sqrt()).collect();
    let report = bound_minibatch(&beta, &rad, &taus).unwrap();
    let brute = taus
        .iter()
        .map(|&k| 2.0 * t / k as f64 + 2.0 * (t * k as f64).sqrt())
        .fold(f64::INFINITY, f64::min);
    assert!((report.total - brute).abs() < 1e-9);
    assert_eq!(report.tau, Some(25));
    let continuous = 3.0 * 2f64.powf(1.0 / 3.0) * t.powf(2.0 / 3.0);
    assert!(report.total >= continuous - 1e-9 && report.total < continuous * 1.001);
    let at_cube_root = 2.0 * t / 16.0 + 2.0 * (t * 16.0).sqrt();
    assert!((at_cube_root - 4.0 * t.powf(2.0 / 3.0)).abs() < 1e-9);
}

#[test]
fn mdp_gaps_respect_geometric_envelope() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..5 {
        let system = MdpSystem::random_smoothed(3, 2, 0.3, &mut rng).unwrap();
        let tau = system.tau;
        for pi in deterministic_policies(&system).unwrap() {
            let d = mdp_stationary_distribution(&mdp_induced_transition(&pi, &system).unwrap()).unwrap();
            let started = MdpEnv::new(system.clone().with_start(d).unwrap());
            let zs: Vec<Vec<f64>> = (0..40).map(|_| (0..6).map(|_| rng.gen::<f64>()).collect()).collect();
            let zetas = vec![(); 39];
            let at_stationary = mixing_gap_profile(&started, &pi, &zs, &zetas, &RolloutConfig::default()).unwrap();
            assert!(at_stationary.iter().all(|g| *g < 1e-9));
            for x in 0..3 {
                let mut start = vec![0.0; 3];
                start[x] = 1.0;
                let env = MdpEnv::new(system.clone().with_start(start).unwrap());
                let gaps = mixing_gap_profile(&env, &pi, &zs, &zetas, &RolloutConfig::default()).unwrap();
                for (i, g) in gaps.iter().enumerate() {
                    assert!(*g <= 2.0 * (-(i as f64) / tau).exp() + 1e-9);
                }
            }
        }
    }
}

#[test]
fn lqr_gaps_respect_envelope() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for _ in 0..8 {
        let a = Matrix::from_fn(2, 2, |_, _| rng.gen_range(-0.6..0.6));
        let b = Matrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let k = Matrix::from_fn(2, 2, |_, _| rng.gen_range(-0.2..0.2));
        let g = Matrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let w = &(&g * &g.transpose()) + &Matrix::identity(2).scale(0.1);
        let Ok(system) = LqrSystem::tight_for(a, b, w, &k, 10.0) else { continue };
        let gain = system.certify(k).unwrap();
        let env = LqrEnv::new(system);
        let q = Matrix::diag(&[rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)]);
        let r = Matrix::diag(&[rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)]);
        let (sq, sr) = (spectral_norm(&q), spectral_norm(&r));
        let zs = vec![CostPair { q, r }; 60];
        let gaps = mixing_gap_profile(&env, &gain, &zs, &vec![(); 59], &RolloutConfig::default()).unwrap();
        for (i, gap) in gaps.iter().enumerate() {
            assert!(*gap <= env.system.mixing_gap_envelope(i + 1, sq, sr) + 1e-9);
        }
        let sum: f64 = gaps.iter().sum();
        assert!(sum <= env.system.mixing_gap_sum_envelope(sq, sr));
        checked += 1;
    }
    assert!(checked >= 4);
}

#[test]
fn noisy_two_thirds_power_fits() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ts: Vec<f64> = (9..=13).map(|k| 2f64.powi(k)).collect();
    let ys: Vec<f64> =
        ts.iter().map(|t| 1.7 * t.powf(2.0 / 3.0) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0))).collect();
    let fit = slope_fit(&ts, &ys).unwrap();
    assert!((fit.slope - 2.0 / 3.0).abs() < 0.02);
    assert!(fit.r_squared > 0.999);
}

#[test]
fn stateful_oracle_needs_exact_law() {
    let env = MdpEnv::new(MdpSystem::random_smoothed(2, 2, 0.5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap());
    let pol = deterministic_policies(&env.system).unwrap();
    let z = vec![(vec![0.5; 4], ())];
    assert!(matches!(pure_minimax_oracle(&env, &pol, &z, 1), Err(ComplexityError::Capability(_))));
    assert!(!env.is_deterministic());
}
