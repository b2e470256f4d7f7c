//! Subcommands and the files they write.
//!
//! Every command writes `manifest.toml` next to its outputs. Output bytes
//! depend only on the effective config, so reruns are byte-identical.

use std::path::{Path, PathBuf};

use serde::Serialize;

use dynregret::complexity::{mixed_value_single_round, pure_minimax_oracle, slope_fit, BoundKind, BoundReport};

use crate::config::{ExperimentConfig, RademacherSource};
use crate::error::HarnessError;
use crate::scenario::{
    execute, jobs, outcome, parallel_map, rademacher, run_experiment, run_id, with_kit, Kit, KitVisitor, RunOutcome,
    RunSeeds,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Bound,
    Oracle,
    Stability,
    Rademacher,
    Slope,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Bound => "bound",
            Command::Oracle => "oracle",
            Command::Stability => "stability",
            Command::Rademacher => "rademacher",
            Command::Slope => "slope",
        }
    }
}

/// Runs `command` and returns the paths it wrote, manifest last.
pub fn run_command(command: Command, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, HarnessError> {
    cfg.validate()?;
    let out = cfg.out_dir();
    let mut files: Vec<(&'static str, String)> = Vec::new();
    let runs: Vec<ManifestRun> = match command {
        Command::Run => {
            let outcomes = run_experiment(cfg)?;
            files.push(("rounds.csv", rounds_csv(&outcomes)?));
            files.push(("summary.toml", to_toml(&summary(&outcomes))?));
            manifest_runs(cfg, &outcomes)
        }
        Command::Bound => {
            if cfg.bound.is_none() {
                return Err(HarnessError::config("bound", "the bound command needs a [bound] section"));
            }
            let outcomes = run_experiment(cfg)?;
            files.push(("bound.toml", to_toml(&bound_file(&outcomes))?));
            manifest_runs(cfg, &outcomes)
        }
        Command::Stability => {
            let outcomes = run_experiment(cfg)?;
            files.push(("stability.csv", stability_csv(&outcomes)?));
            files.push(("stability.toml", to_toml(&stability_file(cfg, &outcomes))?));
            manifest_runs(cfg, &outcomes)
        }
        Command::Slope => {
            if cfg.horizons.len() < 3 {
                return Err(HarnessError::config("horizons", "a slope fit needs at least 3 horizons"));
            }
            let outcomes = run_experiment(cfg)?;
            files.push(("slope.toml", to_toml(&slope_file(cfg, &outcomes)?)?));
            manifest_runs(cfg, &outcomes)
        }
        Command::Rademacher => {
            let estimates = with_kit(cfg, RademacherPass)?;
            files.push(("rademacher.toml", to_toml(&RademacherFile { estimates })?));
            Vec::new()
        }
        Command::Oracle => {
            let values = with_kit(cfg, OraclePass)?;
            files.push(("oracle.toml", to_toml(&OracleFile { values })?));
            Vec::new()
        }
    };
    std::fs::create_dir_all(&out)?;
    let manifest = Manifest {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        files: files.iter().map(|(name, _)| *name).chain(["manifest.toml"]).collect(),
        runs,
        config: cfg.clone(),
    };
    files.push(("manifest.toml", to_toml(&manifest)?));
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = out.join(name);
        write(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

fn to_toml<T: Serialize>(value: &T) -> Result<String, HarnessError> {
    toml::to_string(value).map_err(|e| HarnessError::Runtime(format!("serialization failed: {e}")))
}

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    version: &'static str,
    config_hash: String,
    files: Vec<&'static str>,
    runs: Vec<ManifestRun>,
    config: ExperimentConfig,
}

#[derive(Serialize)]
struct ManifestRun {
    run_id: String,
    horizon: usize,
    rep: usize,
    seed: u64,
    /// Run index of every random substream of this job.
    run_index: u64,
}

fn manifest_runs(cfg: &ExperimentConfig, outcomes: &[RunOutcome]) -> Vec<ManifestRun> {
    outcomes
        .iter()
        .map(|o| ManifestRun {
            run_id: o.run_id.clone(),
            horizon: o.horizon,
            rep: o.rep,
            seed: cfg.seed,
            run_index: o.rep as u64,
        })
        .collect()
}

pub const ROUND_HEADER: [&str; 8] = ["run_id", "t", "policy_id", "loss", "cum_loss", "comparator_cum", "regret", "beta_t"];

fn rounds_csv(outcomes: &[RunOutcome]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ROUND_HEADER)?;
    for o in outcomes {
        for r in &o.rows {
            w.serialize((&o.run_id, r.t, &r.policy_id, r.loss, r.cum_loss, r.comparator_cum, r.regret, r.beta))?;
        }
    }
    finish(w)
}

fn stability_csv(outcomes: &[RunOutcome]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["run_id", "t", "policy_id", "beta_t", "cum_beta"])?;
    for o in outcomes {
        let mut cum = 0.0;
        for r in &o.rows {
            cum += r.beta;
            w.serialize((&o.run_id, r.t, &r.policy_id, r.beta, cum))?;
        }
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, HarnessError> {
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Runtime(e.to_string()))
}

#[derive(Serialize)]
struct SummaryFile {
    runs: Vec<SummaryRow>,
}

#[derive(Serialize)]
pub struct SummaryRow {
    pub run_id: String,
    pub horizon: usize,
    pub rep: usize,
    pub learner: String,
    pub adversary: String,
    pub comparator_policy: String,
    pub comparator_method: String,
    pub learner_cumulative: f64,
    pub comparator_cumulative: f64,
    pub regret: f64,
    pub stability_sum: f64,
}

fn summary(outcomes: &[RunOutcome]) -> SummaryFile {
    SummaryFile {
        runs: outcomes
            .iter()
            .map(|o| SummaryRow {
                run_id: o.run_id.clone(),
                horizon: o.horizon,
                rep: o.rep,
                learner: o.learner_id.clone(),
                adversary: o.adversary_id.clone(),
                comparator_policy: o.comparator_policy.clone(),
                comparator_method: o.comparator_method.clone(),
                learner_cumulative: o.learner_cumulative,
                comparator_cumulative: o.comparator_cumulative,
                regret: o.regret,
                stability_sum: o.stability_sum,
            })
            .collect(),
    }
}

#[derive(Serialize)]
struct BoundFile {
    runs: Vec<BoundRow>,
}

#[derive(Serialize)]
struct BoundRow {
    run_id: String,
    horizon: usize,
    rep: usize,
    kind: &'static str,
    regret: f64,
    stability: f64,
    rademacher_term: f64,
    rademacher_value: f64,
    rademacher_method: String,
    rademacher_depth: usize,
    regularization: f64,
    mixing_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<usize>,
    total: f64,
    holds: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    objectives: Vec<TauObjective>,
}

#[derive(Serialize)]
struct TauObjective {
    tau: usize,
    value: f64,
}

fn kind_name(k: BoundKind) -> &'static str {
    match k {
        BoundKind::Main => "main",
        BoundKind::Minibatch => "minibatch",
        BoundKind::Ergodic => "ergodic",
    }
}

fn bound_file(outcomes: &[RunOutcome]) -> BoundFile {
    BoundFile {
        runs: outcomes
            .iter()
            .filter_map(|o| {
                let b: &BoundReport = o.bound.as_ref()?;
                let rad = o.rademacher.as_ref()?;
                Some(BoundRow {
                    run_id: o.run_id.clone(),
                    horizon: o.horizon,
                    rep: o.rep,
                    kind: kind_name(b.kind),
                    regret: o.regret,
                    stability: b.stability,
                    rademacher_term: b.rademacher,
                    rademacher_value: rad.value,
                    rademacher_method: rad.method.clone(),
                    rademacher_depth: rad.depth,
                    regularization: b.regularization,
                    mixing_gap: b.mixing_gap,
                    tau: b.tau,
                    total: b.total,
                    holds: o.regret <= b.total,
                    objectives: b.objectives.iter().map(|&(tau, value)| TauObjective { tau, value }).collect(),
                })
            })
            .collect(),
    }
}

#[derive(Serialize)]
struct StabilityFile {
    mode: &'static str,
    runs: Vec<StabilityRow>,
}

#[derive(Serialize)]
struct StabilityRow {
    run_id: String,
    total: f64,
    max: f64,
}

fn stability_file(cfg: &ExperimentConfig, outcomes: &[RunOutcome]) -> StabilityFile {
    StabilityFile {
        mode: match cfg.stability {
            crate::config::StabilityKind::Dynamic => "dynamic",
            crate::config::StabilityKind::Ergodic => "ergodic",
        },
        runs: outcomes
            .iter()
            .map(|o| StabilityRow {
                run_id: o.run_id.clone(),
                total: o.stability_sum,
                max: o.rows.iter().fold(0.0, |m: f64, r| m.max(r.beta)),
            })
            .collect(),
    }
}

#[derive(Serialize)]
struct SlopeFile {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    points: Vec<SlopePoint>,
}

#[derive(Serialize)]
struct SlopePoint {
    horizon: usize,
    mean_regret: f64,
}

/// Fits `ln(mean regret)` against `ln T` over the configured horizons.
fn slope_file(cfg: &ExperimentConfig, outcomes: &[RunOutcome]) -> Result<SlopeFile, HarnessError> {
    let points: Vec<SlopePoint> = cfg
        .horizons
        .iter()
        .map(|&h| {
            let of_h: Vec<f64> = outcomes.iter().filter(|o| o.horizon == h).map(|o| o.regret).collect();
            SlopePoint { horizon: h, mean_regret: of_h.iter().sum::<f64>() / of_h.len() as f64 }
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.horizon as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_regret).collect();
    let fit = slope_fit(&xs, &ys).map_err(|e| HarnessError::Runtime(format!("slope fit: {e}")))?;
    Ok(SlopeFile { slope: fit.slope, intercept: fit.intercept, r_squared: fit.r_squared, points })
}

#[derive(Serialize)]
struct RademacherFile {
    estimates: Vec<RademacherRow>,
}

#[derive(Serialize)]
struct RademacherRow {
    run_id: String,
    depth: usize,
    rep: usize,
    method: String,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci_high: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    work: Option<f64>,
}

/// Estimates at depth = horizon. The source is the `[bound]` section's, or
/// else the closed form, exhaustive enumeration, or Monte Carlo, in that
/// order of availability.
struct RademacherPass;

impl KitVisitor for RademacherPass {
    type Output = Vec<RademacherRow>;

    fn visit<K: Kit>(self, kit: &K) -> Result<Vec<RademacherRow>, HarnessError> {
        let cfg = kit.config();
        let rows = parallel_map(&jobs(cfg), |&(h, rep)| -> Result<RademacherRow, HarnessError> {
            let seeds = RunSeeds { master: cfg.seed, rep: rep as u64 };
            let env = kit.build_env(h, &seeds)?;
            let (source, given) = match &cfg.bound {
                Some(b) => (b.rademacher, b.rademacher_value),
                None if kit.unit_ball() => (RademacherSource::UnitBall, None),
                None if kit.finite_game(&env).is_some() => (RademacherSource::Exhaustive, None),
                None => (RademacherSource::MonteCarlo, None),
            };
            let est = rademacher(kit, &env, source, given, h, &seeds)?;
            Ok(RademacherRow {
                run_id: run_id(h, rep),
                depth: est.depth,
                rep,
                method: est.method,
                value: est.value,
                ci_low: est.interval.map(|c| c.0),
                ci_high: est.interval.map(|c| c.1),
                work: est.work,
            })
        });
        rows.into_iter().collect()
    }
}

#[derive(Serialize)]
struct OracleFile {
    values: Vec<OracleRow>,
}

#[derive(Serialize)]
struct OracleRow {
    run_id: String,
    horizon: usize,
    rep: usize,
    /// Minimax regret over deterministic learner strategies.
    pure_value: f64,
    first_policy: usize,
    work: f64,
    rademacher: f64,
    rademacher_work: f64,
    /// Mixed-strategy value of the one-round game.
    mixed_round_value: f64,
    mixed_round_lower: f64,
    mixed_round_upper: f64,
}

struct OraclePass;

impl KitVisitor for OraclePass {
    type Output = Vec<OracleRow>;

    fn visit<K: Kit>(self, kit: &K) -> Result<Vec<OracleRow>, HarnessError> {
        let cfg = kit.config();
        let mut rows = Vec::new();
        for (h, rep) in jobs(cfg) {
            let seeds = RunSeeds { master: cfg.seed, rep: rep as u64 };
            let env = kit.build_env(h, &seeds)?;
            let game = kit
                .finite_game(&env)
                .ok_or_else(|| HarnessError::Capability("the oracle needs a finite policy and instance set".into()))?;
            let pure = pure_minimax_oracle(&env, &game.policies, &game.instances, h)?;
            let rad = rademacher(kit, &env, RademacherSource::Exhaustive, None, h, &seeds)?;
            let zs: Vec<_> = game.instances.iter().map(|(z, _)| z.clone()).collect();
            let mixed = mixed_value_single_round(&env, &game.policies, &zs)?;
            rows.push(OracleRow {
                run_id: run_id(h, rep),
                horizon: h,
                rep,
                pure_value: pure.value,
                first_policy: pure.first_policy,
                work: pure.work,
                rademacher: rad.value,
                rademacher_work: rad.work.unwrap_or(0.0),
                mixed_round_value: mixed.value,
                mixed_round_lower: mixed.lower,
                mixed_round_upper: mixed.upper,
            });
        }
        Ok(rows)
    }
}

/// Single evaluated job, for callers that want the typed record.
pub fn single_outcome(cfg: &ExperimentConfig, horizon: usize, rep: usize) -> Result<RunOutcome, HarnessError> {
    struct One(usize, usize);
    impl KitVisitor for One {
        type Output = RunOutcome;
        fn visit<K: Kit>(self, kit: &K) -> Result<RunOutcome, HarnessError> {
            Ok(outcome(&execute(kit, self.0, self.1)?, self.0, self.1))
        }
    }
    with_kit(cfg, One(horizon, rep))
}
