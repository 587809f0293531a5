//! Declarative experiment configuration (TOML) and the shipped presets.
//!
//! One file describes a whole experiment: the ground-truth system, the
//! reservoir, how the training corpus is assembled, what to predict, and how
//! sections are taken. Unknown keys are rejected. Control-parameter lists
//! can be given explicitly or as a seeded uniform draw, which keeps the
//! "n random values" experiments reproducible and auditable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{Direction, GateSign, SectionPredicate};
use crate::error::{Error, Result};
use crate::models::standard_map::TWO_PI;
use crate::reservoir::ReservoirConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Pendulum,
    StandardMap,
}

fn default_dt() -> f64 {
    0.2
}
fn default_theta1() -> f64 {
    0.6
}
fn default_theta0() -> f64 {
    std::f64::consts::PI
}

/// Ground-truth system settings. The pendulum's control value is theta2(0);
/// the map's is p0, fed to the reservoir as p0 / 2 pi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    /// Sampling step (pendulum); the map always advances one iteration.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_theta1")]
    pub theta1_0: f64,
    #[serde(default)]
    pub omega1_0: f64,
    #[serde(default)]
    pub omega2_0: f64,
    /// Kicking strength (map only).
    #[serde(default)]
    pub k: Option<f64>,
    /// Initial angle of map orbits.
    #[serde(default = "default_theta0")]
    pub theta0: f64,
    /// Iterate the literal `K theta` kick law instead of `K sin theta`.
    #[serde(default)]
    pub literal_eq9: bool,
}

impl SystemConfig {
    pub fn state_dim(&self) -> usize {
        4
    }

    pub fn sample_dt(&self) -> f64 {
        match self.kind {
            SystemKind::Pendulum => self.dt,
            SystemKind::StandardMap => 1.0,
        }
    }

    /// Drive value fed to the parameter channel for a physical control
    /// value (theta2(0) directly; p0 scaled to p0 / 2 pi).
    pub fn drive_beta(&self, physical: f64) -> f64 {
        match self.kind {
            SystemKind::Pendulum => physical,
            SystemKind::StandardMap => physical / TWO_PI,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            SystemKind::Pendulum => {
                if !(self.dt > 0.0) {
                    return Err(Error::Config("system.dt must be > 0".into()));
                }
            }
            SystemKind::StandardMap => {
                if self.k.is_none() {
                    return Err(Error::Config(
                        "system.k is required for the standard map".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Reservoir hyperparameters as they appear in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSettings {
    pub size: usize,
    pub density: f64,
    pub spectral_radius: f64,
    pub leak: f64,
    pub input_scale: f64,
    pub ridge: f64,
}

impl ReservoirSettings {
    pub fn to_config(&self, d_in: usize, dt: f64, seed: u64) -> ReservoirConfig {
        ReservoirConfig {
            d_r: self.size,
            density: self.density,
            spectral_radius: self.spectral_radius,
            leak: self.leak,
            input_scale: self.input_scale,
            ridge: self.ridge,
            d_in,
            d_out: d_in,
            dt,
            seed,
        }
    }
}

/// Explicit control-value list, or a seeded uniform draw from a range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    List(Vec<f64>),
    Random {
        count: usize,
        min: f64,
        max: f64,
        seed: u64,
    },
}

impl Default for BetaSpec {
    fn default() -> Self {
        BetaSpec::List(Vec::new())
    }
}

impl BetaSpec {
    pub fn expand(&self) -> Vec<f64> {
        match self {
            BetaSpec::List(v) => v.clone(),
            BetaSpec::Random {
                count,
                min,
                max,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..*count)
                    .map(|_| {
                        if max > min {
                            rng.random_range(*min..*max)
                        } else {
                            *min
                        }
                    })
                    .collect()
            }
        }
    }
}

/// How the readout is trained across control values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// One readout over all beta-labeled segments, control drive on.
    ParameterAware,
    /// One readout, control drive forced to zero (plain echo-state RC).
    Standard,
    /// A fresh standard RC per evaluation value, trained on that value's
    /// own time series.
    Independent,
}

fn default_washout() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub mode: TrainingMode,
    /// Physical control values of the training segments.
    pub betas: BetaSpec,
    pub segment_len: usize,
    /// Extra simulated samples per training value, held out for validation
    /// and continuation comparisons.
    #[serde(default)]
    pub holdout_len: usize,
    #[serde(default = "default_washout")]
    pub washout: usize,
}

fn default_steps() -> usize {
    10_000
}
fn default_discard() -> usize {
    500
}
fn default_threshold() -> f64 {
    0.25
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Leading closed-loop outputs dropped as machine transient before any
    /// climate statistic.
    #[serde(default = "default_discard")]
    pub discard: usize,
    /// Physical control values evaluated in addition to the training ones.
    #[serde(default)]
    pub eval_betas: BetaSpec,
    #[serde(default = "default_true")]
    pub include_training_betas: bool,
    /// Start the closed loop from the machine's own next-step estimate at
    /// the end of training (continuation of the training trajectory)
    /// instead of the control value's initial condition.
    #[serde(default)]
    pub continuation: bool,
    /// Normalized-error threshold of the valid-time metric.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Re-normalize fed-back (sin, cos) pairs onto the unit circle.
    #[serde(default)]
    pub project_unit_circle: bool,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            discard: default_discard(),
            eval_betas: BetaSpec::default(),
            include_training_betas: true,
            continuation: false,
            threshold: default_threshold(),
            project_unit_circle: false,
        }
    }
}

/// Section predicate as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionConfig {
    pub trigger: usize,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub gate: Option<usize>,
    #[serde(default)]
    pub gate_sign: Option<GateSign>,
}

impl SectionConfig {
    pub fn to_predicate(&self) -> Result<SectionPredicate> {
        let gate = match (self.gate, self.gate_sign) {
            (Some(g), Some(s)) => Some((g, s)),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "section.gate and section.gate_sign must be set together".into(),
                ))
            }
        };
        Ok(SectionPredicate {
            trigger: self.trigger,
            direction: self.direction,
            gate,
        })
    }
}

/// Search ranges of the random hyperparameter search; reservoir size stays
/// fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperoptConfig {
    pub budget: usize,
    pub seed: u64,
    /// Held-out samples (per training value) used for scoring.
    pub holdout_len: usize,
    pub density: (f64, f64),
    pub spectral_radius: (f64, f64),
    pub leak: (f64, f64),
    pub input_scale: (f64, f64),
    pub log10_ridge: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    pub reservoir: ReservoirSettings,
    pub training: TrainingConfig,
    #[serde(default)]
    pub prediction: PredictionConfig,
    #[serde(default)]
    pub section: Option<SectionConfig>,
    #[serde(default)]
    pub hyperopt: Option<HyperoptConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a preset by name or a config file by path.
    pub fn load(spec: &str) -> Result<Self> {
        if let Some(text) = preset(spec) {
            return Self::from_toml(text);
        }
        let path = std::path::Path::new(spec);
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            return Self::from_toml(&text);
        }
        Err(Error::Config(format!(
            "'{spec}' is neither a preset ({}) nor an existing file",
            PRESET_NAMES.join(", ")
        )))
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let rc = self
            .reservoir
            .to_config(self.system.state_dim(), self.system.sample_dt(), self.seed);
        rc.validate()?;
        if self.training.segment_len < 2 {
            return Err(Error::Config("training.segment_len must be >= 2".into()));
        }
        if self.training.washout >= self.training.segment_len {
            return Err(Error::Config(
                "training.washout must be < training.segment_len".into(),
            ));
        }
        if self.training.betas.expand().is_empty() {
            return Err(Error::Config("training.betas must be nonempty".into()));
        }
        if self.prediction.steps == 0 {
            return Err(Error::Config("prediction.steps must be >= 1".into()));
        }
        if self.prediction.discard >= self.prediction.steps {
            return Err(Error::Config(
                "prediction.discard must be < prediction.steps".into(),
            ));
        }
        if let Some(s) = &self.section {
            let p = s.to_predicate()?;
            let d = self.system.state_dim();
            if p.trigger >= d || p.gate.is_some_and(|(g, _)| g >= d) {
                return Err(Error::Config("section index out of range".into()));
            }
        }
        if let Some(h) = &self.hyperopt {
            if h.budget == 0 {
                return Err(Error::Config("hyperopt.budget must be >= 1".into()));
            }
            for (name, (lo, hi)) in [
                ("density", h.density),
                ("spectral_radius", h.spectral_radius),
                ("leak", h.leak),
                ("input_scale", h.input_scale),
                ("log10_ridge", h.log10_ridge),
            ] {
                if !(lo.is_finite() && hi.is_finite()) || hi < lo {
                    return Err(Error::Config(format!("hyperopt.{name}: empty range")));
                }
            }
            if h.holdout_len < 2 {
                return Err(Error::Config("hyperopt.holdout_len must be >= 2".into()));
            }
        }
        Ok(())
    }

    /// Section predicate: configured one, or the pendulum default
    /// (omega1 = 0 with theta1 > 0).
    pub fn section_predicate(&self) -> Result<Option<SectionPredicate>> {
        match (&self.section, self.system.kind) {
            (Some(s), _) => Ok(Some(s.to_predicate()?)),
            (None, SystemKind::Pendulum) => Ok(Some(SectionPredicate::pendulum_gated())),
            (None, SystemKind::StandardMap) => Ok(None),
        }
    }

    pub fn reservoir_config(&self, seed: u64) -> ReservoirConfig {
        self.reservoir
            .to_config(self.system.state_dim(), self.system.sample_dt(), seed)
    }
}

pub const PRESET_NAMES: [&str; 7] = [
    "fig1a", "fig1b", "fig2", "fig4", "fig5", "fig6", "fig7",
];

/// Embedded preset text by name.
pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "fig1a" => Some(include_str!("../presets/fig1a.toml")),
        "fig1b" => Some(include_str!("../presets/fig1b.toml")),
        "fig2" => Some(include_str!("../presets/fig2.toml")),
        "fig4" => Some(include_str!("../presets/fig4.toml")),
        "fig5" => Some(include_str!("../presets/fig5.toml")),
        "fig6" => Some(include_str!("../presets/fig6.toml")),
        "fig7" => Some(include_str!("../presets/fig7.toml")),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_parse_and_validate() {
        for name in PRESET_NAMES {
            let cfg = ExperimentConfig::load(name)
                .unwrap_or_else(|e| panic!("preset {name}: {e}"));
            assert_eq!(cfg.name, name);
        }
    }

    #[test]
    fn unknown_key_rejected_with_field_name() {
        let text = r#"
name = "x"
[system]
kind = "pendulum"
bogus_field = 3
[reservoir]
size = 10
density = 0.5
spectral_radius = 1.0
leak = 0.5
input_scale = 1.0
ridge = 1e-9
[training]
mode = "standard"
betas = [1.0]
segment_len = 100
"#;
        match ExperimentConfig::from_toml(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("bogus_field"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn map_requires_k() {
        let text = r#"
name = "x"
[system]
kind = "standard_map"
[reservoir]
size = 10
density = 0.5
spectral_radius = 1.0
leak = 0.5
input_scale = 1.0
ridge = 1e-9
[training]
mode = "parameter_aware"
betas = [1.0]
segment_len = 100
"#;
        match ExperimentConfig::from_toml(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("system.k"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn beta_spec_expansion() {
        let list = BetaSpec::List(vec![1.0, 2.0]);
        assert_eq!(list.expand(), vec![1.0, 2.0]);

        let random = BetaSpec::Random {
            count: 31,
            min: -3.1,
            max: 3.1,
            seed: 5,
        };
        let a = random.expand();
        let b = random.expand();
        assert_eq!(a, b);
        assert_eq!(a.len(), 31);
        assert!(a.iter().all(|v| (-3.1..3.1).contains(v)));

        // Collapsed range returns the point.
        let point = BetaSpec::Random {
            count: 3,
            min: 0.7,
            max: 0.7,
            seed: 1,
        };
        assert_eq!(point.expand(), vec![0.7; 3]);
    }

    #[test]
    fn drive_beta_scaling() {
        let fig6 = ExperimentConfig::load("fig6").unwrap();
        assert_eq!(fig6.system.drive_beta(TWO_PI), 1.0);
        let fig4 = ExperimentConfig::load("fig4").unwrap();
        assert_eq!(fig4.system.drive_beta(1.98), 1.98);
    }

    #[test]
    fn paper_presets_carry_paper_tuples() {
        let c = ExperimentConfig::load("fig1a").unwrap();
        assert_eq!(
            (
                c.reservoir.size,
                c.reservoir.density,
                c.reservoir.spectral_radius,
                c.reservoir.leak,
                c.reservoir.input_scale,
                c.reservoir.ridge
            ),
            (500, 0.48, 1.48, 0.25, 1.52, 1e-9)
        );
        assert_eq!(c.training.betas.expand(), vec![1.35]);
        assert_eq!(c.training.segment_len, 2000);
        assert_eq!(c.training.holdout_len, 1000);

        let c = ExperimentConfig::load("fig4").unwrap();
        assert_eq!(c.training.betas.expand(), vec![-1.84, 1.0, 1.45, 1.98]);
        assert_eq!(c.training.segment_len, 2500);
        assert_eq!((c.reservoir.size, c.reservoir.ridge), (1000, 2e-2));

        let c = ExperimentConfig::load("fig6").unwrap();
        assert_eq!(c.system.k, Some(0.5));
        assert_eq!(
            c.training.betas.expand(),
            vec![1.76, 2.38, 3.2, 3.35, 3.73, 4.74, 5.28, 5.77]
        );
        assert_eq!(c.reservoir.size, 1500);
        assert_eq!(c.reservoir.density, 3.6e-3);

        let c = ExperimentConfig::load("fig7").unwrap();
        assert_eq!(c.system.k, Some(1.0));
        assert_eq!(
            c.training.betas.expand(),
            vec![0.58, 2.07, 2.19, 3.35, 3.49, 4.1]
        );
        assert_eq!(c.reservoir.input_scale, 3.0);
    }

    #[test]
    fn section_config_round_trip() {
        let s = SectionConfig {
            trigger: 1,
            direction: Direction::Ascending,
            gate: None,
            gate_sign: None,
        };
        assert_eq!(
            s.to_predicate().unwrap(),
            SectionPredicate::pendulum_ascending()
        );
        let bad = SectionConfig {
            trigger: 1,
            direction: Direction::Any,
            gate: Some(0),
            gate_sign: None,
        };
        assert!(bad.to_predicate().is_err());
    }
}
