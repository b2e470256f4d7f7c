//! Experiment configuration.
//!
//! A config is one TOML file. Unknown keys are rejected everywhere, and
//! defaults are filled in at parse time so the effective config, and hence
//! its hash, covers every value a run depends on.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::HarnessError;

/// Default output directory when neither the config nor `--out` sets one.
pub const OUT_ENV_VAR: &str = "DYNREGRET_OUT";
pub const DEFAULT_OUT: &str = "dynregret-out";

/// A parameter that is either a literal or derived from the horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scaled {
    Value(f64),
    /// `⌈T^{1/3}⌉`.
    CubeRootHorizon,
    /// `1/√T`.
    InverseSqrtHorizon,
    /// `τ·√(T/(S ln A))` for a chain with mixing time `τ`, `S` states and
    /// `A` actions.
    MixingSqrtHorizon,
}

impl Scaled {
    const RULES: [&'static str; 3] = ["cube-root-horizon", "inverse-sqrt-horizon", "mixing-sqrt-horizon"];

    fn rule_name(&self) -> Option<&'static str> {
        match self {
            Scaled::Value(_) => None,
            Scaled::CubeRootHorizon => Some(Self::RULES[0]),
            Scaled::InverseSqrtHorizon => Some(Self::RULES[1]),
            Scaled::MixingSqrtHorizon => Some(Self::RULES[2]),
        }
    }

    /// Resolves everything except the mixing rule, which needs a chain.
    pub fn resolve(&self, key: &str, horizon: usize) -> Result<f64, HarnessError> {
        let t = horizon as f64;
        match self {
            Scaled::Value(v) => Ok(*v),
            Scaled::CubeRootHorizon => Ok(cube_root_ceil(horizon) as f64),
            Scaled::InverseSqrtHorizon => Ok(1.0 / t.sqrt()),
            Scaled::MixingSqrtHorizon => {
                Err(HarnessError::config(key, "`mixing-sqrt-horizon` applies only to the exponential-weights rate"))
            }
        }
    }
}

/// `⌈T^{1/3}⌉` computed on integers, so perfect cubes are exact.
pub fn cube_root_ceil(t: usize) -> usize {
    let mut r = (t as f64).cbrt().round() as usize;
    while r.saturating_mul(r).saturating_mul(r) < t {
        r += 1;
    }
    while r > 1 && (r - 1) * (r - 1) * (r - 1) >= t {
        r -= 1;
    }
    r.max(1)
}

impl Serialize for Scaled {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Scaled::Value(v) => s.serialize_f64(*v),
            other => s.serialize_str(other.rule_name().unwrap_or_default()),
        }
    }
}

impl<'de> Deserialize<'de> for Scaled {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ScaledVisitor;
        impl Visitor<'_> for ScaledVisitor {
            type Value = Scaled;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a number or one of {}", Scaled::RULES.join(", "))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Scaled, E> {
                Ok(Scaled::Value(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Scaled, E> {
                Ok(Scaled::Value(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Scaled, E> {
                Ok(Scaled::Value(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Scaled, E> {
                match v {
                    "cube-root-horizon" => Ok(Scaled::CubeRootHorizon),
                    "inverse-sqrt-horizon" => Ok(Scaled::InverseSqrtHorizon),
                    "mixing-sqrt-horizon" => Ok(Scaled::MixingSqrtHorizon),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(ScaledVisitor)
    }
}

fn default_reps() -> usize {
    1
}

fn default_one() -> usize {
    1
}

fn default_high() -> f64 {
    1.0
}

fn default_dim() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub horizons: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub stability: StabilityKind,
    pub environment: EnvironmentConfig,
    pub learner: LearnerConfig,
    pub adversary: AdversaryConfig,
    #[serde(default)]
    pub comparator: ComparatorConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundConfig>,
}

/// Which stability gap the `beta_t` column reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityKind {
    #[default]
    Dynamic,
    Ergodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    /// Stateless game with loss matrix `losses[policy][instance]`.
    Stateless { losses: Vec<Vec<f64>> },
    /// Deterministic tabular game with uniform losses in `[low, high]` and
    /// uniform transitions, redrawn for every repetition.
    RandomTabular {
        policies: usize,
        instances: usize,
        #[serde(default = "default_one")]
        states: usize,
        #[serde(default)]
        low: f64,
        #[serde(default = "default_high")]
        high: f64,
    },
    /// Random smoothed chain, redrawn for every repetition.
    Mdp { states: usize, actions: usize, alpha: f64 },
    Lqr {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        w: Vec<Vec<f64>>,
        kappa: f64,
        gamma: f64,
        cost_trace: f64,
    },
    LinLower {
        #[serde(default = "default_dim")]
        dim: usize,
        lipschitz: Scaled,
    },
    Tracking {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        c_z: f64,
        c_k: f64,
        c_eta: f64,
        rho: f64,
    },
}

impl EnvironmentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvironmentConfig::Stateless { .. } => "stateless",
            EnvironmentConfig::RandomTabular { .. } => "random-tabular",
            EnvironmentConfig::Mdp { .. } => "mdp",
            EnvironmentConfig::Lqr { .. } => "lqr",
            EnvironmentConfig::LinLower { .. } => "lin-lower",
            EnvironmentConfig::Tracking { .. } => "tracking",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LearnerConfig {
    /// Plays one policy forever. Finite classes take `index`, the unit ball
    /// takes `vector`, control environments take `gain` (and `bias` for
    /// tracking).
    Fixed {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vector: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gain: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bias: Option<Vec<f64>>,
    },
    Minibatch { block: Scaled },
    Ftpl {
        rate: Scaled,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid_points: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        refine_rounds: Option<usize>,
    },
    Expweights { lambda: Scaled },
    TrackingErm { gain: Vec<Vec<f64>> },
}

impl LearnerConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            LearnerConfig::Fixed { .. } => "fixed",
            LearnerConfig::Minibatch { .. } => "minibatch",
            LearnerConfig::Ftpl { .. } => "ftpl",
            LearnerConfig::Expweights { .. } => "expweights",
            LearnerConfig::TrackingErm { .. } => "tracking-erm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversaryConfig {
    /// Independent draws from an environment-specific distribution.
    Iid {},
    /// Replays instance indices of a finite game.
    Sequence { instances: Vec<usize> },
    /// Lower-bound adversary; the block defaults to `⌊L⌋`.
    Switching {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        block: Option<Scaled>,
    },
}

impl AdversaryConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            AdversaryConfig::Iid {} => "iid",
            AdversaryConfig::Sequence { .. } => "sequence",
            AdversaryConfig::Switching { .. } => "switching",
        }
    }
}

fn default_grid_points() -> usize {
    5
}

fn default_gain_bound() -> f64 {
    0.6
}

/// Search over the comparator class. `gain_bound` is the half-width of the
/// parameter box for gridded classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparatorConfig {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_one")]
    pub refine_rounds: usize,
    #[serde(default = "default_gain_bound")]
    pub gain_bound: f64,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        ComparatorConfig { grid_points: default_grid_points(), refine_rounds: 1, gain_bound: default_gain_bound() }
    }
}

fn default_rollout_samples() -> usize {
    64
}

fn default_trees() -> usize {
    32
}

fn default_signs() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_rollout_samples")]
    pub rollout_samples: usize,
    #[serde(default = "default_trees")]
    pub rademacher_trees: usize,
    #[serde(default = "default_signs")]
    pub rademacher_signs: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            rollout_samples: default_rollout_samples(),
            rademacher_trees: default_trees(),
            rademacher_signs: default_signs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKindConfig {
    Main,
    Minibatch,
    Ergodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RademacherSource {
    /// `√n` for linear losses over the unit ball.
    UnitBall,
    Exhaustive,
    MonteCarlo,
    /// The literal in `rademacher_value`.
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub kind: BoundKindConfig,
    pub rademacher: RademacherSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rademacher_value: Option<f64>,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub sup_omega: f64,
    /// Block lengths of the mini-batch bound; defaults to the learner's.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub taus: Vec<Scaled>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub horizons: Option<Vec<usize>>,
    pub reps: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let key = e.message().split('`').nth(1).unwrap_or("<document>").to_string();
            HarnessError::config(key, e.to_string().trim_end().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Applies command-line overrides, then resolves the output directory
    /// as `--out`, the file's `out`, `$DYNREGRET_OUT`, then the default.
    pub fn with_overrides(mut self, o: &Overrides, env_out: Option<PathBuf>) -> Result<Self, HarnessError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(h) = &o.horizons {
            self.horizons = h.clone();
        }
        if let Some(r) = o.reps {
            self.reps = r;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if self.out.is_none() {
            self.out = Some(env_out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.horizons.is_empty() {
            return Err(HarnessError::config("horizons", "at least one horizon is required"));
        }
        if self.horizons.contains(&0) {
            return Err(HarnessError::config("horizons", "horizons must be positive"));
        }
        if self.reps == 0 {
            return Err(HarnessError::config("reps", "at least one repetition is required"));
        }
        if self.comparator.grid_points < 2 {
            return Err(HarnessError::config("comparator.grid_points", "at least 2 grid points are required"));
        }
        if !(self.comparator.gain_bound > 0.0) {
            return Err(HarnessError::config("comparator.gain_bound", "must be positive"));
        }
        if self.monte_carlo.rollout_samples == 0 {
            return Err(HarnessError::config("monte_carlo.rollout_samples", "must be positive"));
        }
        if self.monte_carlo.rademacher_trees == 0 || self.monte_carlo.rademacher_signs == 0 {
            return Err(HarnessError::config("monte_carlo", "tree and sign counts must be positive"));
        }
        if let Some(b) = &self.bound {
            if b.rademacher == RademacherSource::Given && b.rademacher_value.is_none() {
                return Err(HarnessError::config("bound.rademacher_value", "required when rademacher = \"given\""));
            }
            if !(b.lambda >= 0.0) || !(b.sup_omega >= 0.0) {
                return Err(HarnessError::config("bound.lambda", "lambda and sup_omega must be nonnegative"));
            }
        }
        Ok(())
    }

    /// Canonical TOML of every semantic field. The output directory is
    /// excluded: it decides where results go, not what they are.
    pub fn canonical_toml(&self) -> String {
        let mut semantic = self.clone();
        semantic.out = None;
        toml::to_string(&semantic).expect("config types serialize")
    }

    /// SHA-256 of [`ExperimentConfig::canonical_toml`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 7
horizons = [16, 32]

[environment]
kind = "stateless"
losses = [[0.0, 1.0], [1.0, 0.0]]

[learner]
kind = "fixed"
index = 0

[adversary]
kind = "iid"
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(BASE).unwrap();
        assert_eq!(cfg.reps, 1);
        assert_eq!(cfg.comparator, ComparatorConfig::default());
        assert_eq!(cfg.stability, StabilityKind::Dynamic);
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = BASE.replace("index = 0", "index = 0\nspeed = 3");
        match ExperimentConfig::from_toml_str(&text) {
            Err(HarnessError::Config { key, .. }) => assert_eq!(key, "speed"),
            other => panic!("expected config error, got {other:?}"),
        }
        let text = format!("{BASE}\n[comparator]\ngrid = 3\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(HarnessError::Config { key, .. }) if key == "grid"));
    }

    #[test]
    fn validation_names_the_key() {
        let text = BASE.replace("horizons = [16, 32]", "horizons = []");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(HarnessError::Config { key, .. }) if key == "horizons"));
    }

    #[test]
    fn hash_tracks_semantic_fields_only() {
        let a = ExperimentConfig::from_toml_str(BASE).unwrap();
        let reformatted = format!("# comment\n{}", BASE.replace("seed = 7", "seed    =    7"));
        let b = ExperimentConfig::from_toml_str(&reformatted).unwrap();
        assert_eq!(a.hash(), b.hash());
        let explicit_default = format!("reps = 1\n{BASE}");
        assert_eq!(a.hash(), ExperimentConfig::from_toml_str(&explicit_default).unwrap().hash());
        let moved = a.clone().with_overrides(&Overrides { out: Some("elsewhere".into()), ..Default::default() }, None).unwrap();
        assert_eq!(a.hash(), moved.hash());
        let reseeded = a.clone().with_overrides(&Overrides { seed: Some(8), ..Default::default() }, None).unwrap();
        assert_ne!(a.hash(), reseeded.hash());
        let shifted = ExperimentConfig::from_toml_str(&BASE.replace("[1.0, 0.0]]", "[1.0, 0.5]]")).unwrap();
        assert_ne!(a.hash(), shifted.hash());
    }

    #[test]
    fn output_directory_precedence() {
        let a = ExperimentConfig::from_toml_str(BASE).unwrap();
        let from_env = a.clone().with_overrides(&Overrides::default(), Some("env-dir".into())).unwrap();
        assert_eq!(from_env.out_dir(), PathBuf::from("env-dir"));
        let in_file = ExperimentConfig::from_toml_str(&format!("out = \"file-dir\"\n{BASE}")).unwrap();
        let kept = in_file.clone().with_overrides(&Overrides::default(), Some("env-dir".into())).unwrap();
        assert_eq!(kept.out_dir(), PathBuf::from("file-dir"));
        let flag = Overrides { out: Some("flag-dir".into()), ..Default::default() };
        assert_eq!(in_file.with_overrides(&flag, None).unwrap().out_dir(), PathBuf::from("flag-dir"));
        assert_eq!(a.with_overrides(&Overrides::default(), None).unwrap().out_dir(), PathBuf::from(DEFAULT_OUT));
    }

    #[test]
    fn scaled_rules() {
        assert_eq!(cube_root_ceil(512), 8);
        assert_eq!(cube_root_ceil(513), 9);
        assert_eq!(cube_root_ceil(1), 1);
        assert_eq!(cube_root_ceil(8192), 21);
        assert_eq!(Scaled::InverseSqrtHorizon.resolve("k", 64).unwrap(), 0.125);
        let text = BASE.replace("kind = \"fixed\"\nindex = 0", "kind = \"minibatch\"\nblock = \"cube-root-horizon\"");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.learner, LearnerConfig::Minibatch { block: Scaled::CubeRootHorizon });
        assert!(ExperimentConfig::from_toml_str(&text.replace("cube-root-horizon", "cubic")).is_err());
        let round_trip = ExperimentConfig::from_toml_str(&cfg.canonical_toml()).unwrap();
        assert_eq!(round_trip, cfg);
    }
}
