use std::sync::Arc;

use dynregret::complexity::RademacherTree;
use dynregret::control::TrackingSystem;
use dynregret::discrete::{
    LinLowerBoundEnv, LinLowerOracle, MdpEnv, MdpSystem, MemoryWrapper, SignedInstance, TabularGame,
};
use dynregret::game::{run_game, run_game_indexed, DeclaredAction, Environment, Learner, StrategyError};
use dynregret::linalg::{dot, norm2, Matrix};
use dynregret::regret::{policy_regret, stability_from_record, StabilityMode};
use dynregret::rng::{stream, Purpose};
use dynregret::rollout::{LossModel, RolloutConfig};
use dynregret::search::{PolicyClass, SearchConfig};
use dynregret::strategies::{
    ExpWeightsMdp, FixedPolicy, Ftpl, IidAdversary, MinibatchErm, ObliviousSequence, RademacherTreeAdversary,
    SwitchEvent, SwitchingAdversary, TrackingErm,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plays a scripted list of policies.
struct Scripted(Vec<Vec<f64>>);

impl Learner<LinLowerBoundEnv> for Scripted {
    fn id(&self) -> String {
        "scripted".into()
    }
    fn act(&mut self, _: &LinLowerBoundEnv, t: usize, _: &mut dyn RngCore) -> Result<Vec<f64>, StrategyError> {
        Ok(self.0[t - 1].clone())
    }
    fn declared_action(&mut self, _: &LinLowerBoundEnv, t: usize) -> Result<DeclaredAction<Vec<f64>>, StrategyError> {
        Ok(DeclaredAction::Deterministic(self.0[t - 1].clone()))
    }
    fn observe(&mut self, _: &LinLowerBoundEnv, _: usize, _: &Vec<f64>, _: &()) -> Result<(), StrategyError> {
        Ok(())
    }
}

fn random_stateless(rng: &mut ChaCha8Rng, p: usize, z: usize) -> TabularGame {
    TabularGame::random(p, z, 1, 0.0, 1.0, rng)
}

fn uniform_sequence(game: &TabularGame, t: usize, seed: u64) -> Vec<(usize, ())> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..t).map(|_| (rng.gen_range(0..game.instances()), ())).collect()
}

#[test]
fn fixed_policy_has_zero_stability_gap_and_nonpositive_self_regret() {
    let env = LinLowerBoundEnv::new(3, 4.0).unwrap();
    let f = vec![0.6, 0.0, -0.8];
    let mut learner = FixedPolicy::new(&env, f.clone()).unwrap();
    let mut adv = SwitchingAdversary::new(4.0, 4).unwrap();
    let record = run_game(&env, &mut learner, &mut adv, 64, 1).unwrap();
    let cfg = RolloutConfig::default();
    let profile = stability_from_record(&env, &record, StabilityMode::Dynamic, &cfg).unwrap();
    assert!(profile.gaps.iter().all(|g| *g == 0.0));
    let report = policy_regret(&env, &record, &PolicyClass::Finite(vec![f]), &SearchConfig::default(), &cfg).unwrap();
    assert!(report.regret <= 0.0);
}

#[test]
fn fixed_policy_rejects_outside_class() {
    let env = LinLowerBoundEnv::new(3, 1.0).unwrap();
    assert!(FixedPolicy::new(&env, vec![1.0, 1.0, 0.0]).is_err());
}

#[test]
fn full_block_plays_round_one_minimizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let game = random_stateless(&mut rng, 3, 3);
    let mut learner =
        MinibatchErm::new(40, PolicyClass::Finite(game.policy_list()), SearchConfig::default(), RolloutConfig::default())
            .unwrap();
    let mut adv = ObliviousSequence::new(uniform_sequence(&game, 40, 3));
    let record = run_game(&game, &mut learner, &mut adv, 40, 0).unwrap();
    assert!(record.policies().iter().all(|p| *p == 0));
    assert_eq!(learner.recomputations(), 1);
}

#[test]
fn minibatch_on_switching_instance_is_stable_inside_blocks() {
    let env = LinLowerBoundEnv::new(3, 5.0).unwrap();
    let tau = 5;
    let mut learner =
        MinibatchErm::new(tau, PolicyClass::Oracle(Arc::new(LinLowerOracle)), SearchConfig::default(), RolloutConfig::default())
            .unwrap();
    let mut adv = SwitchingAdversary::new(5.0, 5).unwrap();
    let record = run_game(&env, &mut learner, &mut adv, 200, 0).unwrap();
    let profile = stability_from_record(&env, &record, StabilityMode::Dynamic, &RolloutConfig::default()).unwrap();
    for (i, g) in profile.gaps.iter().enumerate() {
        if i % tau != 0 {
            assert_eq!(*g, 0.0, "round {}", i + 1);
        }
    }
    assert!(profile.gaps.iter().any(|g| *g > 0.0));
}

#[test]
fn ftpl_with_vanishing_perturbation_is_follow_the_leader() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let game = random_stateless(&mut rng, 4, 3);
    let class = PolicyClass::Finite(game.policy_list());
    let seq = uniform_sequence(&game, 60, 8);
    let mut ftpl = Ftpl::new(1e15, &class, SearchConfig::default(), RolloutConfig::default(), LossModel::Stationary).unwrap();
    let mut ftl = MinibatchErm::new(1, class.clone(), SearchConfig::default(), RolloutConfig::default()).unwrap();
    let a = run_game(&game, &mut ftpl, &mut ObliviousSequence::new(seq.clone()), 60, 2).unwrap();
    let b = run_game(&game, &mut ftl, &mut ObliviousSequence::new(seq), 60, 2).unwrap();
    // round 1 has all totals tied, so the perturbation decides it
    assert_eq!(a.policies()[1..], b.policies()[1..]);
}

#[test]
fn ftpl_picks_worse_candidate_with_exponential_tail() {
    // gap Δ between two policies; P(σ_worse − σ_better > Δ) = e^{−λΔ}/2
    let game = TabularGame::stateless(&[vec![0.0], vec![0.5]]).unwrap();
    let class = PolicyClass::Finite(vec![0, 1]);
    let lambda = 2.0;
    let mut ftpl = Ftpl::new(lambda, &class, SearchConfig::default(), RolloutConfig::default(), LossModel::Stationary).unwrap();
    ftpl.observe(&game, 1, &0, &()).unwrap();
    let draws = 10_000;
    let mut worse = 0;
    for i in 0..draws {
        let mut rng = stream(17, i, 0, Purpose::Learner);
        worse += usize::from(ftpl.act(&game, 2, &mut rng).unwrap() == 1);
    }
    let p = worse as f64 / draws as f64;
    let analytic = 0.5 * (-lambda * 0.5f64).exp();
    let se = (analytic * (1.0 - analytic) / draws as f64).sqrt();
    assert!((p - analytic).abs() < 4.0 * se, "{p} vs {analytic}");
}

#[test]
fn ftpl_movement_shrinks_as_rate_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let game = random_stateless(&mut rng, 3, 4);
    let class = PolicyClass::Finite(game.policy_list());
    let horizon = 150;
    let mut movements = Vec::new();
    for &lambda in &[0.25, 0.5, 1.0, 2.0, 4.0] {
        let mut total = 0.0;
        for seed in 0..40u64 {
            let seq = uniform_sequence(&game, horizon, 100 + seed);
            let mut ftpl =
                Ftpl::new(lambda, &class, SearchConfig::default(), RolloutConfig::default(), LossModel::Stationary).unwrap();
            let record = run_game(&game, &mut ftpl, &mut ObliviousSequence::new(seq), horizon, seed).unwrap();
            let ps = record.policies();
            total += ps.windows(2).filter(|w| w[0] != w[1]).count() as f64 * 2.0;
        }
        movements.push(total / (40.0 * (horizon - 1) as f64));
    }
    assert!(movements.windows(2).all(|w| w[1] < w[0]), "{movements:?}");
}

#[test]
fn ftpl_is_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let game = random_stateless(&mut rng, 3, 3);
    let class = PolicyClass::Finite(game.policy_list());
    let seq = uniform_sequence(&game, 30, 1);
    let run = || {
        let mut ftpl = Ftpl::new(1.0, &class, SearchConfig::default(), RolloutConfig::default(), LossModel::Stationary).unwrap();
        run_game(&game, &mut ftpl, &mut ObliviousSequence::new(seq.clone()), 30, 9).unwrap().policies()
    };
    assert_eq!(run(), run());
}

fn two_state_mdp() -> MdpSystem {
    MdpSystem::smoothed(2, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0], vec![1.0, 0.0], 0.5).unwrap()
}

#[test]
fn expweights_limits_and_stability() {
    let system = two_state_mdp();
    let env = MdpEnv::new(system.clone());
    let uniform = ExpWeightsMdp::new(&system, f64::INFINITY).unwrap();
    assert!(uniform.weights().iter().all(|q| *q == 0.25));

    let lambda = 3.0;
    let mut learner = ExpWeightsMdp::new(&system, lambda).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut previous = learner.weights();
    for t in 1..=200 {
        let z: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
        learner.observe(&env, t, &z, &()).unwrap();
        let q = learner.weights();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12 && q.iter().all(|v| *v >= 0.0));
        let moved: f64 = q.iter().zip(&previous).map(|(a, b)| (a - b).abs()).sum();
        assert!(moved <= 1.0 / lambda + 1e-12);
        previous = q;
    }
}

fn tracking_system() -> TrackingSystem {
    let a = Matrix::from_rows(&[vec![0.5, 0.1], vec![0.0, 0.4]]);
    TrackingSystem::new(a, Matrix::identity(2), Matrix::identity(2), 1.0, 1.0, 2.0, 0.7).unwrap()
}

#[test]
fn tracking_bias_examples() {
    let system = tracking_system();
    let env = dynregret::control::TrackingEnv::new(system.clone());
    let k = Matrix::zeros(2, 2);
    let mut learner = TrackingErm::new(k.clone(), &system).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for t in 1..=5 {
        assert!(learner.act(&env, t, &mut rng).unwrap().eta.iter().all(|e| *e == 0.0));
        learner.observe(&env, t, &vec![0.0, 0.0], &()).unwrap();
    }
    let mut learner = TrackingErm::new(k, &system).unwrap();
    let z = vec![0.3, -0.5];
    let mut etas = Vec::new();
    for t in 1..=6 {
        etas.push(learner.act(&env, t, &mut rng).unwrap().eta);
        learner.observe(&env, t, &z, &()).unwrap();
    }
    for e in &etas[2..] {
        assert!(norm2(&e.iter().zip(&etas[1]).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-12);
    }
}

#[test]
fn switching_schedule_and_deviation_events() {
    let env = LinLowerBoundEnv::new(3, 4.0).unwrap();
    let still = vec![vec![0.0; 3]; 6];
    let mut adv = SwitchingAdversary::new(4.0, 4).unwrap();
    run_game(&env, &mut Scripted(still), &mut adv, 6, 0).unwrap();
    assert_eq!(adv.events(), &[(1, SwitchEvent::First), (4, SwitchEvent::Scheduled)]);

    // movement 1/L + 0.01 at round 3 forces a switch there
    let mut moves = vec![vec![0.0; 3]; 6];
    moves[2..].fill(vec![0.26, 0.0, 0.0]);
    let mut adv = SwitchingAdversary::new(4.0, 100).unwrap();
    run_game(&env, &mut Scripted(moves.clone()), &mut adv, 6, 0).unwrap();
    assert_eq!(adv.events(), &[(1, SwitchEvent::First), (3, SwitchEvent::Deviation)]);

    // exactly 1/L does not
    moves[2..].fill(vec![0.25, 0.0, 0.0]);
    let mut adv = SwitchingAdversary::new(4.0, 100).unwrap();
    run_game(&env, &mut Scripted(moves), &mut adv, 6, 0).unwrap();
    assert_eq!(adv.events(), &[(1, SwitchEvent::First)]);
}

#[test]
fn switching_emissions_meet_constraints() {
    let env = LinLowerBoundEnv::new(4, 3.0).unwrap();
    let class = PolicyClass::Oracle(Arc::new(LinLowerOracle));
    let mut learner = MinibatchErm::new(2, class, SearchConfig::default(), RolloutConfig::default()).unwrap();
    let mut adv = SwitchingAdversary::new(3.0, 3).unwrap();
    let record = run_game(&env, &mut learner, &mut adv, 120, 0).unwrap();
    let switches: Vec<usize> = adv.events().iter().map(|e| e.0).collect();
    let mut sum = vec![0.0; 4];
    for e in &record.entries {
        if switches.contains(&e.t) {
            let z = &e.loss_instance;
            assert!((norm2(z) - 1.0).abs() < 1e-10);
            assert!(dot(z, &sum).abs() < 1e-10);
            assert!(dot(z, &e.policy).abs() < 1e-10);
        }
        for (s, v) in sum.iter_mut().zip(&e.loss_instance) {
            *s += v;
        }
    }
}

#[test]
fn depth_one_tree_is_constant() {
    let game = TabularGame::stateless(&[vec![0.1, 0.9]]).unwrap();
    let tree = RademacherTree::constant(1, (1usize, ())).unwrap();
    for seed in 0..10 {
        let mut adv = RademacherTreeAdversary::new(tree.clone());
        let mut learner = FixedPolicy::new(&game, 0).unwrap();
        let record = run_game(&game, &mut learner, &mut adv, 1, seed).unwrap();
        assert_eq!(record.loss_instances(), vec![1]);
    }
    let mut adv = RademacherTreeAdversary::new(tree);
    let mut learner = FixedPolicy::new(&game, 0).unwrap();
    assert!(run_game(&game, &mut learner, &mut adv, 2, 0).is_err());
}

fn memory_tree() -> (MemoryWrapper, RademacherTree<SignedInstance, ()>) {
    let env = MemoryWrapper::new(vec![vec![0.2, 0.9, 0.5], vec![0.7, 0.1, 0.4], vec![0.3, 0.6, 1.0]]).unwrap();
    let tree = RademacherTree::from_nodes(
        3,
        [0, 1, 2, 2, 0, 1, 1].iter().map(|&i| (SignedInstance { index: i, sign: 1.0 }, ())).collect(),
    )
    .unwrap();
    (env, tree)
}

#[test]
fn signed_losses_are_mean_zero_and_regret_matches_tree_value() {
    let (env, tree) = memory_tree();
    let inner = TabularGame::stateless(&[vec![0.2, 0.9, 0.5], vec![0.7, 0.1, 0.4], vec![0.3, 0.6, 1.0]]).unwrap();
    // exact E_ε sup_π Σ ε_t ℓ̃(π, z_t) over the 8 sign paths
    let mut exact = 0.0;
    for bits in 0..8u32 {
        let signs: Vec<i8> = (0..3).map(|k| if bits >> k & 1 == 1 { 1 } else { -1 }).collect();
        let path = tree.path(&signs).unwrap();
        let best = (0..3)
            .map(|p| (0..3).map(|t| f64::from(signs[t]) * inner.value(p, 0, path[t].0.index)).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        exact += best / 8.0;
    }
    let runs = 6000;
    let (mut signed, mut regret, mut sq) = (0.0, 0.0, 0.0);
    let cfg = RolloutConfig::default();
    let class = PolicyClass::Finite(vec![0, 1, 2]);
    for run in 0..runs {
        let mut adv = RademacherTreeAdversary::with_sign_channel(tree.clone());
        let mut learner = FixedPolicy::new(&env, 1).unwrap();
        let record = run_game_indexed(&env, &mut learner, &mut adv, 3, 77, run).unwrap();
        signed += record.realized_losses().iter().sum::<f64>();
        let r = policy_regret(&env, &record, &class, &SearchConfig::default(), &cfg).unwrap().regret;
        regret += r;
        sq += r * r;
    }
    let n = runs as f64;
    let (mean, var) = (regret / n, sq / n - (regret / n).powi(2));
    assert!((signed / n).abs() < 4.0 * 1.0 / n.sqrt(), "signed mean {}", signed / n);
    assert!((mean - exact).abs() < 4.0 * (var / n).sqrt(), "{mean} vs {exact}");
}

#[test]
fn oblivious_replay_and_iid_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let game = random_stateless(&mut rng, 2, 5);
    let seq = uniform_sequence(&game, 25, 4);
    let mut learner = FixedPolicy::new(&game, 1).unwrap();
    let record = run_game(&game, &mut learner, &mut ObliviousSequence::new(seq.clone()), 25, 0).unwrap();
    assert_eq!(record.loss_instances(), seq.iter().map(|s| s.0).collect::<Vec<_>>());

    let draw = |seed| {
        let mut adv = IidAdversary::<TabularGame>::new("uniform", |rng: &mut dyn RngCore| (rng.gen_range(0..5), ()));
        let mut learner = FixedPolicy::new(&game, 0).unwrap();
        run_game(&game, &mut learner, &mut adv, 50, seed).unwrap().loss_instances()
    };
    assert_eq!(draw(3), draw(3));
    assert_ne!(draw(3), draw(4));
}

#[test]
fn iid_mean_converges_at_root_n() {
    let env = MdpEnv::new(two_state_mdp());
    let n = 4000;
    let mut adv = IidAdversary::<MdpEnv>::new("u01", |rng: &mut dyn RngCore| {
        ((0..4).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>(), ())
    });
    let mut learner = FixedPolicy::new(&env, dynregret::discrete::MdpPolicy::uniform(2, 2)).unwrap();
    let record = run_game(&env, &mut learner, &mut adv, n, 5).unwrap();
    let mean: f64 = record.loss_instances().iter().map(|z| z[0]).sum::<f64>() / n as f64;
    // sd of U(0,1) is 1/√12
    assert!((mean - 0.5).abs() < 4.0 / (12f64.sqrt() * (n as f64).sqrt()));
    assert_eq!(env.name(), "mdp(S=2,A=2)");
}
