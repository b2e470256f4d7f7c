//! Acceptance suite. Each test prints one `[name] PASS|FAIL detail` line to
//! stderr, which is not captured by the test runner.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dynregret::complexity::{
    finite_class_sup, mixing_gap_profile, pure_minimax_oracle, seq_rademacher_exhaustive, seq_rademacher_mc,
    slope_fit, McConfig, RademacherTree,
};
use dynregret::control::{CostPair, LqrEnv, LqrSystem, TrackingEnv, TrackingSystem};
use dynregret::discrete::{
    deterministic_policies, LinLowerBoundEnv, LinLowerOracle, MdpEnv, MdpSystem, MemoryWrapper, SignedInstance,
    TabularGame, UnitBall,
};
use dynregret::game::{run_game_indexed, Adversary, Environment, Learner};
use dynregret::linalg::{
    inverse, lyapunov_residual, matrix_sqrt_psd, norm2, solve_discrete_lyapunov, spectral_norm, sym_eigen, Matrix,
};
use dynregret::regret::{policy_regret, stability_from_record, StabilityMode};
use dynregret::rollout::{LossModel, RolloutConfig};
use dynregret::search::{PolicyClass, SearchConfig};
use dynregret::strategies::{
    FixedPolicy, Ftpl, IidAdversary, MinibatchErm, ObliviousSequence, SwitchingAdversary, TrackingErm,
};

use dynregret_harness::config::{ExperimentConfig, StabilityKind};
use dynregret_harness::scenario::{execute, run_experiment, LqrKit, RunOutcome};

fn report(name: &str, pass: bool, detail: impl AsRef<str>) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{name}] {verdict} {}", detail.as_ref());
    assert!(pass, "{name}: {}", detail.as_ref());
}

const HORIZONS: [usize; 5] = [512, 1024, 2048, 4096, 8192];

fn mean_regret_slope(outcomes: &[RunOutcome]) -> (f64, Vec<f64>) {
    let means: Vec<f64> = HORIZONS
        .iter()
        .map(|&h| {
            let rs: Vec<f64> = outcomes.iter().filter(|o| o.horizon == h).map(|o| o.regret).collect();
            rs.iter().sum::<f64>() / rs.len() as f64
        })
        .collect();
    let xs: Vec<f64> = HORIZONS.iter().map(|&h| h as f64).collect();
    (slope_fit(&xs, &means).unwrap().slope, means)
}

fn random_contraction(d: usize, rho: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let m = Matrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let n = spectral_norm(&m);
    if n == 0.0 {
        Matrix::zeros(d, d)
    } else {
        m.scale(rho / n)
    }
}

fn random_psd(d: usize, floor: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let g = Matrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    &(&g * &g.transpose()) + &Matrix::identity(d).scale(floor)
}

#[test]
fn lyapunov_numerics() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.gen_range(1..=8);
        let a = random_contraction(d, rng.gen_range(0.0..0.99), &mut rng);
        let w = random_psd(d, 0.01, &mut rng);
        let x = solve_discrete_lyapunov(&a, &w).unwrap().x;
        worst = worst.max(lyapunov_residual(&a, &w, &x));
    }
    // Scalar: x = w / (1 − a²); a = 1/2, w = 1 gives 4/3.
    let four_thirds = solve_discrete_lyapunov(&Matrix::scalar(0.5), &Matrix::scalar(1.0)).unwrap().x.as_slice()[0];
    let mut scalar_err = (four_thirds - 4.0 / 3.0).abs();
    for _ in 0..200 {
        let a: f64 = rng.gen_range(-0.95..0.95);
        let w: f64 = rng.gen_range(0.1..2.0);
        let x = solve_discrete_lyapunov(&Matrix::scalar(a), &Matrix::scalar(w)).unwrap().x.as_slice()[0];
        scalar_err = scalar_err.max((x - w / (1.0 - a * a)).abs());
    }
    let elapsed = start.elapsed();
    report(
        "lyapunov-numerics",
        worst <= 1e-8 && scalar_err <= 1e-10 && elapsed < Duration::from_secs(10),
        format!("max residual {worst:.2e} (≤ 1e-8), scalar error {scalar_err:.2e} (≤ 1e-10), {elapsed:.2?} (< 10 s)"),
    );
}

/// Plain external regret of a stateless game, summed left to right.
fn external_regret(game: &TabularGame, played: &[usize], zs: &[usize]) -> f64 {
    let mut learner = 0.0;
    for (p, z) in played.iter().zip(zs) {
        learner += game.value(*p, 0, *z);
    }
    let mut best = f64::INFINITY;
    for p in 0..game.policies() {
        let mut total = 0.0;
        for z in zs {
            total += game.value(p, 0, *z);
        }
        best = best.min(total);
    }
    learner - best
}

#[test]
fn stateless_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let cfg = RolloutConfig::default();
    for case in 0..50u64 {
        let p = rng.gen_range(2..=6);
        let z = rng.gen_range(2..=6);
        let game = TabularGame::random(p, z, 1, -1.0, 1.0, &mut rng);
        let class = PolicyClass::Finite(game.policy_list());
        let t = rng.gen_range(20..=200);
        let mut learner: Box<dyn Learner<TabularGame>> = if case % 2 == 0 {
            Box::new(MinibatchErm::new(1 + case as usize % 5, class.clone(), SearchConfig::default(), cfg.clone()).unwrap())
        } else {
            Box::new(FixedPolicy::new(&game, case as usize % p).unwrap())
        };
        let mut adv = IidAdversary::<TabularGame>::new("uniform", move |r: &mut dyn RngCore| (r.gen_range(0..z), ()));
        let record = run_game_indexed(&game, learner.as_mut(), &mut adv, t, case, 0).unwrap();
        let measured = policy_regret(&game, &record, &class, &SearchConfig::default(), &cfg).unwrap().regret;
        let reference = external_regret(&game, &record.policies(), &record.loss_instances());
        mismatches += usize::from(measured.to_bits() != reference.to_bits());
    }
    report("stateless-reduction", mismatches == 0, format!("{mismatches} of 50 games differ from external regret"));
}

fn gaps<E: Environment>(env: &E, learner: &mut dyn Learner<E>, adv: &mut dyn Adversary<E>, t: usize, seed: u64) -> Vec<f64> {
    let record = run_game_indexed(env, learner, adv, t, seed, 0).unwrap();
    stability_from_record(env, &record, StabilityMode::Dynamic, &RolloutConfig::default()).unwrap().gaps
}

#[test]
fn stability_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut nonzero_fixed = 0;
    let mut fixed_rounds = 0;
    for seed in 0..10u64 {
        let game = TabularGame::random(3, 3, 4, 0.0, 1.0, &mut rng);
        for p in 0..3 {
            let mut learner = FixedPolicy::new(&game, p).unwrap();
            let mut adv = IidAdversary::<TabularGame>::new("u", |r: &mut dyn RngCore| (r.gen_range(0..3), ()));
            let g = gaps(&game, &mut learner, &mut adv, 60, seed);
            fixed_rounds += g.len();
            nonzero_fixed += g.iter().filter(|v| **v != 0.0).count();
        }
        let memory = MemoryWrapper::new(vec![vec![0.2, 0.7], vec![0.9, 0.1]]).unwrap();
        let mut learner = FixedPolicy::new(&memory, 1).unwrap();
        let mut adv = IidAdversary::<MemoryWrapper>::new("signed", |r: &mut dyn RngCore| {
            (SignedInstance { index: r.gen_range(0..2), sign: if r.gen::<bool>() { 1.0 } else { -1.0 } }, ())
        });
        let g = gaps(&memory, &mut learner, &mut adv, 60, seed);
        fixed_rounds += g.len();
        nonzero_fixed += g.iter().filter(|v| **v != 0.0).count();
        let lin = LinLowerBoundEnv::new(3, 5.0).unwrap();
        let mut learner = FixedPolicy::new(&lin, vec![0.6, -0.3, 0.1]).unwrap();
        let mut adv = SwitchingAdversary::new(5.0, 5).unwrap();
        let g = gaps(&lin, &mut learner, &mut adv, 60, seed);
        fixed_rounds += g.len();
        nonzero_fixed += g.iter().filter(|v| **v != 0.0).count();
    }

    let mut off_boundary = 0;
    let mut nonzero_off = 0;
    for (l, tau) in [(2.0, 1), (4.0, 3), (8.0, 8), (16.0, 5), (3.0, 16)] {
        let env = LinLowerBoundEnv::new(3, l).unwrap();
        let class = PolicyClass::Oracle(Arc::new(LinLowerOracle));
        for adversarial in [true, false] {
            let mut learner = MinibatchErm::new(tau, class.clone(), SearchConfig::default(), RolloutConfig::default()).unwrap();
            let mut adv: Box<dyn Adversary<LinLowerBoundEnv>> = if adversarial {
                Box::new(SwitchingAdversary::new(l, tau.max(2)).unwrap())
            } else {
                Box::new(IidAdversary::<LinLowerBoundEnv>::new("gauss", |r: &mut dyn RngCore| {
                    let v: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
                    let n = norm2(&v).max(1e-9);
                    (v.iter().map(|x| x / n).collect(), ())
                }))
            };
            let g = gaps(&env, &mut learner, adv.as_mut(), 200, 11);
            for (i, v) in g.iter().enumerate() {
                let t = i + 1;
                if t == 1 || (t - 1) % tau != 0 {
                    off_boundary += 1;
                    nonzero_off += usize::from(*v != 0.0);
                }
            }
        }
    }
    report(
        "stability-identities",
        nonzero_fixed == 0 && nonzero_off == 0,
        format!(
            "fixed policies: {nonzero_fixed} nonzero of {fixed_rounds} rounds; \
             mini-batch off boundaries: {nonzero_off} nonzero of {off_boundary} rounds"
        ),
    );
}

#[test]
fn mixing_gap_envelopes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = RolloutConfig::default();
    let mut mdp_violations = 0;
    let mut mdp_checked = 0;
    for _ in 0..20 {
        let s = rng.gen_range(2..=4);
        let a = rng.gen_range(2..=3);
        let system = MdpSystem::random_smoothed(s, a, rng.gen_range(0.2..0.8), &mut rng).unwrap();
        let tau = system.tau;
        let zs: Vec<Vec<f64>> = (0..60).map(|_| (0..s * a).map(|_| rng.gen::<f64>()).collect()).collect();
        let zetas = vec![(); 59];
        for x in 0..s {
            let mut start = vec![0.0; s];
            start[x] = 1.0;
            let env = MdpEnv::new(system.clone().with_start(start).unwrap());
            for pi in deterministic_policies(&system).unwrap() {
                let g = mixing_gap_profile(&env, &pi, &zs, &zetas, &cfg).unwrap();
                for (i, v) in g.iter().enumerate() {
                    mdp_checked += 1;
                    mdp_violations += usize::from(*v > 2.0 * (-(i as f64) / tau).exp() + 1e-9);
                }
            }
        }
    }

    let mut lqr_violations = 0;
    let mut lqr_checked = 0;
    let mut instances = 0;
    while instances < 20 {
        let d = rng.gen_range(1..=3);
        let k_dim = rng.gen_range(1..=d);
        let a = Matrix::from_fn(d, d, |_, _| rng.gen_range(-0.6..0.6));
        let b = Matrix::from_fn(d, k_dim, |_, _| rng.gen_range(-1.0..1.0));
        let k = Matrix::from_fn(k_dim, d, |_, _| rng.gen_range(-0.2..0.2));
        let w = random_psd(d, 0.1, &mut rng);
        let Ok(system) = LqrSystem::tight_for(a, b, w, &k, 10.0) else { continue };
        let gain = system.certify(k).unwrap();
        let env = LqrEnv::new(system);
        let zs: Vec<CostPair> = (0..60)
            .map(|_| {
                let q = Matrix::diag(&(0..d).map(|_| rng.gen_range(0.0..2.0)).collect::<Vec<_>>());
                let r = Matrix::diag(&(0..k_dim).map(|_| rng.gen_range(0.0..2.0)).collect::<Vec<_>>());
                CostPair { q, r }
            })
            .collect();
        let sq = zs.iter().map(|z| spectral_norm(&z.q)).fold(0.0, f64::max);
        let sr = zs.iter().map(|z| spectral_norm(&z.r)).fold(0.0, f64::max);
        let g = mixing_gap_profile(&env, &gain, &zs, &vec![(); 59], &cfg).unwrap();
        for (i, v) in g.iter().enumerate() {
            lqr_checked += 1;
            lqr_violations += usize::from(*v > env.system.mixing_gap_envelope(i + 1, sq, sr) + 1e-9);
        }
        instances += 1;
    }
    report(
        "mixing-gap-envelopes",
        mdp_violations == 0 && lqr_violations == 0,
        format!(
            "mdp: {mdp_violations} violations in {mdp_checked} rounds; lqr: {lqr_violations} violations in {lqr_checked} rounds"
        ),
    );
}

#[test]
fn tracking_bias_stability() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut checked = 0;
    let mut draws = 0;
    let mut tightest: f64 = 0.0;
    while draws < 20 {
        let d = rng.gen_range(1..=3);
        let k_dim = rng.gen_range(1..=d);
        let a = random_contraction(d, rng.gen_range(0.1..0.7), &mut rng);
        let b = Matrix::from_fn(d, k_dim, |_, _| rng.gen_range(-1.0..1.0));
        let q = random_psd(d, 0.3, &mut rng);
        let c_z = rng.gen_range(0.5..2.0);
        let c_eta = rng.gen_range(1.0..3.0);
        let Ok(system) = TrackingSystem::new(a, b, q, c_z, 1.0, c_eta, 0.9) else { continue };
        let k = Matrix::from_fn(k_dim, d, |_, _| rng.gen_range(-0.1..0.1));
        if system.check_gain(&k).is_err() || !system.stability_constant().is_finite() {
            continue;
        }
        let psi = system.stability_constant();
        let env = TrackingEnv::new(system.clone());
        let mut learner = TrackingErm::new(k, &system).unwrap();
        // Half the draws are iid in the ball, half drift slowly along a direction.
        let drift = draws % 2 == 1;
        let mut adv = IidAdversary::<TrackingEnv>::new("ball", move |r: &mut dyn RngCore| {
            let v: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
            let n = norm2(&v).max(1e-9);
            let scale = if drift { c_z } else { c_z * r.gen_range(0.0..1.0f64) };
            (v.iter().map(|x| x / n * scale).collect(), ())
        });
        let record = run_game_indexed(&env, &mut learner, &mut adv, 150, draws, 0).unwrap();
        let etas: Vec<Vec<f64>> = record.policies().into_iter().map(|p| p.eta).collect();
        for t in 1..etas.len() {
            let step = norm2(&etas[t - 1].iter().zip(&etas[t]).map(|(x, y)| x - y).collect::<Vec<_>>());
            let envelope = psi / (t as f64 + 1.0);
            checked += 1;
            violations += usize::from(step > envelope * (1.0 + 1e-12));
            tightest = tightest.max(step / envelope);
        }
        draws += 1;
    }
    report(
        "tracking-bias-stability",
        violations == 0,
        format!("{violations} violations in {checked} rounds over 20 draws; largest step/envelope {tightest:.3}"),
    );
}

fn units(n: usize) -> Vec<(usize, ())> {
    (0..n).map(|i| (i, ())).collect()
}

#[test]
fn rademacher_oracle() {
    let cfg = RolloutConfig::default();
    let signs = TabularGame::stateless(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
    let two_policy = seq_rademacher_exhaustive(&signs, &[0, 1], &units(2), 2, &cfg).unwrap().value;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut covered = 0;
    for case in 0..25u64 {
        let p = rng.gen_range(2..=3);
        let z = rng.gen_range(2..=3);
        let depth = 1 + case as usize % 3;
        let game = TabularGame::random(p, z, 1, -1.0, 1.0, &mut rng);
        let policies = game.policy_list();
        let inst = units(z);
        let exact = seq_rademacher_exhaustive(&game, &policies, &inst, depth, &cfg).unwrap().value;
        // Selection noise biases the chosen tree low; 20000 sign paths keep
        // that bias well inside the interval.
        let mc = McConfig { seed: 100 + case, signs: 20_000, ..McConfig::default() };
        let (est, _) = seq_rademacher_mc(
            finite_class_sup(&game, &policies, cfg.clone()),
            |_, r| RademacherTree::from_fn(depth, |_| (r.gen_range(0..z), ())),
            Some(&inst),
            depth,
            &mc,
        )
        .unwrap();
        covered += usize::from(est.ci_low <= exact && exact <= est.ci_high);
    }
    report(
        "rademacher-oracle",
        two_policy == 1.0 && covered >= 23,
        format!("two-policy value {two_policy} (= 1); interval covers exhaustive value in {covered} of 25 (≥ 23)"),
    );
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).unwrap()
}

#[test]
fn minibatch_scaling_on_switching_instance() {
    let start = Instant::now();
    let cfg = config(
        r#"
seed = 7
horizons = [512, 1024, 2048, 4096, 8192]

[environment]
kind = "lin-lower"
dim = 3
lipschitz = "cube-root-horizon"

[learner]
kind = "minibatch"
block = "cube-root-horizon"

[adversary]
kind = "switching"
block = "cube-root-horizon"

[bound]
kind = "minibatch"
rademacher = "unit-ball"
"#,
    );
    let outcomes = run_experiment(&cfg).unwrap();
    let (slope, _) = mean_regret_slope(&outcomes);
    let violations: Vec<String> = outcomes
        .iter()
        .filter(|o| o.regret > o.bound.as_ref().unwrap().total)
        .map(|o| o.run_id.clone())
        .collect();
    let detail: Vec<String> =
        outcomes.iter().map(|o| format!("T={} {:.1}/{:.1}", o.horizon, o.regret, o.bound.as_ref().unwrap().total)).collect();
    let elapsed = start.elapsed();
    report(
        "minibatch-scaling",
        (0.55..=0.80).contains(&slope) && violations.is_empty() && elapsed < Duration::from_secs(300),
        format!(
            "slope {slope:.3} in [0.55, 0.80]; regret/bound {}; runs above bound {violations:?}; {elapsed:.2?}",
            detail.join(", ")
        ),
    );
}

#[test]
fn mdp_sqrt_scaling() {
    let start = Instant::now();
    let cfg = config(
        r#"
seed = 8
horizons = [512, 1024, 2048, 4096, 8192]
reps = 10

[environment]
kind = "mdp"
states = 3
actions = 2
alpha = 0.6

[learner]
kind = "expweights"
lambda = "mixing-sqrt-horizon"

[adversary]
kind = "iid"
"#,
    );
    let outcomes = run_experiment(&cfg).unwrap();
    let (slope, means) = mean_regret_slope(&outcomes);
    let elapsed = start.elapsed();
    report(
        "mdp-sqrt-scaling",
        (0.40..=0.62).contains(&slope) && elapsed < Duration::from_secs(300),
        format!("slope {slope:.3} in [0.40, 0.62]; mean regret {means:.2?}; {elapsed:.2?}"),
    );
}

const LQR_FTPL: &str = r#"
seed = 9
horizons = [512, 1024, 2048, 4096, 8192]
reps = 3

[environment]
kind = "lqr"
a = [[0.6, 0.2], [0.0, 0.5]]
b = [[1.0, 0.0], [0.0, 1.0]]
w = [[0.1, 0.0], [0.0, 0.1]]
kappa = 3.0
gamma = 0.1
cost_trace = 2.0

[learner]
kind = "ftpl"
rate = "inverse-sqrt-horizon"

[adversary]
kind = "iid"

[comparator]
grid_points = 5
refine_rounds = 1
gain_bound = 0.6
"#;

/// Envelope of the ergodic gap with every constant measured on the run:
/// `d(σ_q + κ²σ_r)(β²/α²)(e^{−γt}‖W − X_1‖ + λ/γ)`, where `β², α²` bound
/// the spectra of the played stationary covariances `X_t`, `κ` bounds the
/// played gains, `λ` is the mean covariance movement over the second half
/// of the run and `1 − γ` bounds `‖X_t^{−1/2}(A+BK_t)X_t^{1/2}‖`.
fn lqr_ergodic_envelope(kit: &LqrKit, horizon: usize) -> (Vec<f64>, impl Fn(usize) -> f64) {
    let artifacts = execute(kit, horizon, 0).unwrap();
    let system = kit.system();
    let policies = artifacts.record.policies();
    let xs: Vec<Matrix> = policies.iter().map(|p| p.stationary_covariance(system).unwrap().clone()).collect();
    let (mut hi, mut lo, mut kappa, mut contraction): (f64, f64, f64, f64) = (0.0, f64::INFINITY, 0.0, 0.0);
    for (x, p) in xs.iter().zip(&policies) {
        let e = sym_eigen(x).unwrap();
        for v in &e.values {
            hi = hi.max(*v);
            lo = lo.min(*v);
        }
        kappa = kappa.max(spectral_norm(p.k()));
        let h = matrix_sqrt_psd(x).unwrap();
        contraction = contraction.max(spectral_norm(&(&(&inverse(&h).unwrap() * &system.closed_loop(p.k())) * &h)));
    }
    let moves: Vec<f64> = xs.windows(2).map(|w| spectral_norm(&(&w[0] - &w[1]))).collect();
    let half = &moves[moves.len() / 2..];
    let lambda = half.iter().sum::<f64>() / half.len() as f64;
    let zs = artifacts.record.loss_instances();
    let sq = zs.iter().map(|z| spectral_norm(&z.q)).fold(0.0, f64::max);
    let sr = zs.iter().map(|z| spectral_norm(&z.r)).fold(0.0, f64::max);
    let gamma = 1.0 - contraction;
    let start_gap = spectral_norm(&(system.w() - &xs[0]));
    let d = system.state_dim() as f64;
    let scale = d * (sq + kappa * kappa * sr) * hi / lo;
    (artifacts.profile.gaps, move |t: usize| scale * ((-gamma * t as f64).exp() * start_gap + lambda / gamma))
}

#[test]
fn lqr_sqrt_log_scaling() {
    let start = Instant::now();
    let cfg = config(LQR_FTPL);
    let outcomes = run_experiment(&cfg).unwrap();
    let (slope, means) = mean_regret_slope(&outcomes);

    let mut ergodic = cfg.clone();
    ergodic.stability = StabilityKind::Ergodic;
    let kit = LqrKit::new(&ergodic).unwrap();
    let horizon = 4096;
    let (gaps, envelope) = lqr_ergodic_envelope(&kit, horizon);
    let plateau = gaps[3 * horizon / 4..].iter().sum::<f64>() / (horizon / 4) as f64;
    let early = gaps[..8].iter().sum::<f64>() / 8.0;
    let bound = envelope(horizon);
    let elapsed = start.elapsed();
    report(
        "lqr-sqrt-log-scaling",
        (0.40..=0.65).contains(&slope) && plateau <= bound && plateau <= early && elapsed < Duration::from_secs(600),
        format!(
            "slope {slope:.3} in [0.40, 0.65]; mean regret {means:.2?}; ergodic gap plateau {plateau:.4} \
             (early {early:.4}, envelope {bound:.4}); {elapsed:.2?}"
        ),
    );
}

#[test]
fn switching_adversary_strength() {
    let t = 4096;
    let cap = (4.0 * t as f64).cbrt();
    let mut lines = Vec::new();
    let mut pass = true;
    for l in [1.0, 4.0, 9.0, 16.0, 25.0] {
        assert!(l <= cap);
        let floor = 0.25 * (l * t as f64).sqrt();
        let env = LinLowerBoundEnv::new(3, l).unwrap();
        let class = PolicyClass::Oracle(Arc::new(LinLowerOracle));
        let block = (l as usize).max(1);
        let learners: Vec<(&str, Box<dyn Learner<LinLowerBoundEnv>>)> = vec![
            ("fixed", Box::new(FixedPolicy::new(&env, vec![0.0, 0.0, 0.0]).unwrap())),
            ("fixed-edge", Box::new(FixedPolicy::new(&env, vec![1.0, 0.0, 0.0]).unwrap())),
            (
                "minibatch",
                Box::new(MinibatchErm::new(16, class.clone(), SearchConfig::default(), RolloutConfig::default()).unwrap()),
            ),
            (
                "ftpl",
                Box::new(
                    Ftpl::new(
                        1.0 / (t as f64).sqrt(),
                        &PolicyClass::Boxed(Arc::new(UnitBall { dim: 3 })),
                        SearchConfig { grid_points: 5, refine_rounds: 1 },
                        RolloutConfig::default(),
                        LossModel::Stationary,
                    )
                    .unwrap(),
                ),
            ),
        ];
        for (name, mut learner) in learners {
            let mut adv = SwitchingAdversary::new(l, block).unwrap();
            let record = run_game_indexed(&env, learner.as_mut(), &mut adv, t, 10, 0).unwrap();
            let regret =
                policy_regret(&env, &record, &class, &SearchConfig::default(), &RolloutConfig::default()).unwrap().regret;
            pass &= regret >= floor;
            lines.push(format!("L={l} {name} {regret:.1} (≥ {floor:.1})"));
        }
    }
    report("switching-adversary-strength", pass, lines.join(", "));
}

/// Minimax regret by direct recursion over the game tree: the learner picks
/// a policy, the adversary an instance, and leaves score learner loss minus
/// the best policy replayed from the start state.
fn minimax_recursive(game: &TabularGame, horizon: usize) -> f64 {
    fn leaf(game: &TabularGame, learner: f64, zs: &[usize]) -> f64 {
        let mut best = f64::INFINITY;
        for p in 0..game.policies() {
            let mut state = game.start;
            let mut total = 0.0;
            for z in zs {
                total += game.value(p, state, *z);
                state = game.successor(state, p);
            }
            best = best.min(total);
        }
        learner - best
    }
    fn node(game: &TabularGame, horizon: usize, state: usize, learner: f64, zs: &mut Vec<usize>) -> f64 {
        if zs.len() == horizon {
            return leaf(game, learner, zs);
        }
        let mut value = f64::INFINITY;
        for p in 0..game.policies() {
            let mut worst = f64::NEG_INFINITY;
            for z in 0..game.instances() {
                zs.push(z);
                let v = node(game, horizon, game.successor(state, p), learner + game.value(p, state, z), zs);
                zs.pop();
                worst = worst.max(v);
            }
            value = value.min(worst);
        }
        value
    }
    node(game, horizon, game.start, 0.0, &mut Vec::new())
}

/// Largest regret of a deterministic learner over every instance sequence.
fn worst_case_regret(game: &TabularGame, make: &dyn Fn() -> Box<dyn Learner<TabularGame>>, horizon: usize) -> f64 {
    let z = game.instances();
    let class = PolicyClass::Finite(game.policy_list());
    let mut worst = f64::NEG_INFINITY;
    for code in 0..z.pow(horizon as u32) {
        let seq: Vec<(usize, ())> = (0..horizon).map(|t| (code / z.pow(t as u32) % z, ())).collect();
        let mut adv = ObliviousSequence::<TabularGame>::new(seq);
        let mut learner = make();
        let record = run_game_indexed(game, learner.as_mut(), &mut adv, horizon, 0, 0).unwrap();
        let r = policy_regret(game, &record, &class, &SearchConfig::default(), &RolloutConfig::default()).unwrap();
        worst = worst.max(r.regret);
    }
    worst
}

#[test]
fn pure_minimax_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    let mut literal_failures = Vec::new();
    let mut reverse_failures = 0;
    for case in 0..10 {
        let p = rng.gen_range(2..=3);
        let z = rng.gen_range(2..=3);
        let states = 1 + case % 2;
        let horizon = 1 + case % 2;
        let game = TabularGame::random(p, z, states, 0.0, 1.0, &mut rng);
        let oracle = pure_minimax_oracle(&game, &game.policy_list(), &units(z), horizon).unwrap().value;
        mismatches += usize::from(oracle != minimax_recursive(&game, horizon));

        // Only deterministic learners have a well-defined enumerated worst case.
        let mut makers: Vec<(String, Box<dyn Fn() -> Box<dyn Learner<TabularGame>>>)> = Vec::new();
        for f in 0..p {
            let g = game.clone();
            makers.push((format!("fixed-{f}"), Box::new(move || Box::new(FixedPolicy::new(&g, f).unwrap()))));
        }
        for tau in [1, 2] {
            let class = PolicyClass::Finite(game.policy_list());
            makers.push((
                format!("minibatch-{tau}"),
                Box::new(move || {
                    Box::new(MinibatchErm::new(tau, class.clone(), SearchConfig::default(), RolloutConfig::default()).unwrap())
                }),
            ));
        }
        for (name, make) in &makers {
            let worst = worst_case_regret(&game, make.as_ref(), horizon);
            if oracle < worst {
                literal_failures.push(format!("case {case} {name}: oracle {oracle:.3} < worst {worst:.3}"));
            }
            reverse_failures += usize::from(oracle > worst);
        }
    }
    let _ = writeln!(
        std::io::stderr(),
        "[pure-minimax-consistency] note: oracle ≤ every learner's worst case in all cases ({reverse_failures} exceptions); \
         recursion mismatches {mismatches}"
    );
    assert_eq!(mismatches, 0, "oracle differs from the recursive enumeration");
    assert_eq!(reverse_failures, 0, "oracle exceeds a learner's worst case");
    report(
        "pure-minimax-consistency",
        literal_failures.is_empty() && mismatches == 0,
        format!(
            "recursion mismatches {mismatches}; oracle ≥ worst-case learner regret fails {} times: {}",
            literal_failures.len(),
            literal_failures.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
        ),
    );
}

fn run_cli(dir: &Path, args: &[&str], env_out: Option<&Path>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dynregret"));
    cmd.args(args).current_dir(dir).env_remove("DYNREGRET_OUT");
    if let Some(p) = env_out {
        cmd.env("DYNREGRET_OUT", p);
    }
    cmd.output().unwrap()
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn cli_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        (
            "run",
            r#"
seed = 4
horizons = [64, 128]
reps = 2
[environment]
kind = "random-tabular"
policies = 3
instances = 3
states = 2
[learner]
kind = "ftpl"
rate = 0.3
[adversary]
kind = "iid"
"#,
        ),
        (
            "bound",
            r#"
seed = 4
horizons = [64, 125]
[environment]
kind = "lin-lower"
lipschitz = "cube-root-horizon"
[learner]
kind = "minibatch"
block = "cube-root-horizon"
[adversary]
kind = "switching"
[bound]
kind = "minibatch"
rademacher = "unit-ball"
taus = [1, 2, "cube-root-horizon"]
"#,
        ),
        (
            "oracle",
            r#"
seed = 4
horizons = [1, 2]
[environment]
kind = "random-tabular"
policies = 3
instances = 2
states = 2
[learner]
kind = "fixed"
index = 0
[adversary]
kind = "iid"
"#,
        ),
        (
            "stability",
            r#"
seed = 4
horizons = [100]
stability = "ergodic"
[environment]
kind = "mdp"
states = 3
actions = 2
alpha = 0.5
[learner]
kind = "expweights"
lambda = "mixing-sqrt-horizon"
[adversary]
kind = "iid"
"#,
        ),
        (
            "rademacher",
            r#"
seed = 4
horizons = [3, 5]
[environment]
kind = "random-tabular"
policies = 3
instances = 3
[learner]
kind = "fixed"
index = 0
[adversary]
kind = "iid"
[monte_carlo]
rademacher_trees = 8
rademacher_signs = 400
[bound]
kind = "main"
rademacher = "monte-carlo"
"#,
        ),
        (
            "slope",
            r#"
seed = 4
horizons = [64, 128, 256]
[environment]
kind = "lqr"
a = [[0.6, 0.2], [0.0, 0.5]]
b = [[1.0, 0.0], [0.0, 1.0]]
w = [[0.1, 0.0], [0.0, 0.1]]
kappa = 3.0
gamma = 0.1
cost_trace = 2.0
[learner]
kind = "ftpl"
rate = "inverse-sqrt-horizon"
[adversary]
kind = "iid"
"#,
        ),
    ];
    let mut lines = Vec::new();
    let mut pass = true;
    for (command, body) in configs {
        let path = dir.path().join(format!("{command}.toml"));
        std::fs::write(&path, body).unwrap();
        let out = dir.path().join(format!("out-{command}"));
        // The oracle run takes its directory from the environment variable.
        let (flag, env_out) = if command == "oracle" { (None, Some(out.as_path())) } else { (Some(out.as_path()), None) };
        let mut args = vec![command, "--config", path.to_str().unwrap()];
        if let Some(f) = flag {
            args.extend(["--out", f.to_str().unwrap()]);
        }
        let first = run_cli(dir.path(), &args, env_out);
        let before = snapshot(&out);
        let second = run_cli(dir.path(), &args, env_out);
        let after = snapshot(&out);
        let ok = first.status.success() && second.status.success() && !before.is_empty() && before == after;
        pass &= ok;
        lines.push(format!(
            "{command}: {} files {}",
            before.len(),
            if ok { "identical".to_string() } else { format!("differ ({})", String::from_utf8_lossy(&first.stderr).trim()) }
        ));
    }
    report("cli-reproducibility", pass, lines.join("; "));
}
