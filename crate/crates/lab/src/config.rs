//! Experiment configuration, read from TOML. Unknown keys are rejected
//! everywhere; densities and volumes are always per unit Riemannian volume.

use std::fmt;
use std::path::Path;

use eqmanifold::geometry::{DiffSteps, GridSpec, ParamBox};
use eqmanifold::helicoid::HelicoidSpec;
use eqmanifold::quadrature::QuadratureSpec;
use eqmanifold::{DemandSpec, Economy, ScanConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Equilibria,
    CurvatureScan,
    Entropy,
    HelicoidCheck,
    GeodesicCheck,
    MvpProbe,
    ConjectureSweep,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Self::Equilibria => "equilibria",
            Self::CurvatureScan => "curvature-scan",
            Self::Entropy => "entropy",
            Self::HelicoidCheck => "helicoid-check",
            Self::GeodesicCheck => "geodesic-check",
            Self::MvpProbe => "mvp-probe",
            Self::ConjectureSweep => "conjecture-sweep",
        }
    }

    fn needs_economy(self) -> bool {
        self != Self::HelicoidCheck
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A config problem, located by a dotted key path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConsumerConfig {
    CobbDouglas { alpha: Vec<f64> },
    Ces { weights: Vec<f64>, rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyConfig {
    pub id: String,
    pub resources: Vec<f64>,
    pub consumers: Vec<ConsumerConfig>,
}

impl EconomyConfig {
    pub fn build(&self) -> Result<Economy, ConfigError> {
        let consumers = self
            .consumers
            .iter()
            .enumerate()
            .map(|(i, c)| {
                match c {
                    ConsumerConfig::CobbDouglas { alpha } => DemandSpec::cobb_douglas(alpha.clone()),
                    ConsumerConfig::Ces { weights, rho } => DemandSpec::ces(weights.clone(), *rho),
                }
                .map_err(|e| ConfigError::at(format!("economy.consumers[{i}]"), e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Economy::new(self.resources.clone(), consumers).map_err(|e| ConfigError::at("economy", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Threshold on `|H|` separating minimal from non-minimal.
    pub minimal: f64,
    /// Largest accepted helicoid/hyperplane residual.
    pub intersection: f64,
    /// Geodesic residual below which a curve counts as a geodesic.
    pub geodesic: f64,
    /// Slack allowed below the unperturbed volume in same-boundary probes.
    pub volume_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            minimal: 1e-5,
            intersection: 1e-10,
            geodesic: 1e-6,
            volume_floor: 1e-8,
        }
    }
}

/// Uniform draws of the endowments of the first `M − 1` consumers (row
/// major); the last consumer receives the rest of the resources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomEndowments {
    pub count: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndowmentConfig {
    /// Each entry lists the rows of the first `M − 1` consumers.
    pub explicit: Vec<Vec<Vec<f64>>>,
    pub random: Option<RandomEndowments>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HelicoidCheckConfig {
    /// Expected non-degenerate.
    pub specs: Vec<HelicoidSpec>,
    /// Expected degenerate.
    pub degenerate: Vec<HelicoidSpec>,
    pub hyperplanes: usize,
}

impl Default for HelicoidCheckConfig {
    fn default() -> Self {
        Self {
            specs: vec![
                HelicoidSpec::classical(),
                HelicoidSpec {
                    n: 3,
                    k: 2,
                    a: vec![1.0, 2.0],
                    b: 0.5,
                },
            ],
            degenerate: vec![
                HelicoidSpec {
                    n: 2,
                    k: 1,
                    a: vec![0.0],
                    b: 1.0,
                },
                HelicoidSpec {
                    n: 3,
                    k: 2,
                    a: vec![1.0, 2.0],
                    b: 0.0,
                },
            ],
            hyperplanes: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    /// `t ↦ Φ(t, 0)`.
    #[default]
    ZeroFiber,
    /// `t ↦` the no-trade point above `t`.
    NoTrade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeodesicConfig {
    pub curve: CurveKind,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self {
            curve: CurveKind::ZeroFiber,
            t_min: 0.5,
            t_max: 1.5,
            points: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MvpConfig {
    pub eps: Vec<f64>,
    /// Random sine-series bumps, each vanishing on the box boundary.
    pub perturbations: usize,
    pub terms: usize,
    pub max_mode: u32,
}

impl Default for MvpConfig {
    fn default() -> Self {
        Self {
            eps: vec![-0.1, -0.05, 0.0, 0.05, 0.1],
            perturbations: 20,
            terms: 3,
            max_mode: 3,
        }
    }
}

fn default_failure_fraction() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when present.
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub economy: Option<EconomyConfig>,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub steps: DiffSteps,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Chart-parameter grid for curvature scans.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Chart-parameter boxes for volume and entropy.
    #[serde(default)]
    pub boxes: Vec<ParamBox>,
    #[serde(default)]
    pub endowments: EndowmentConfig,
    #[serde(default)]
    pub helicoid: HelicoidCheckConfig,
    #[serde(default)]
    pub geodesic: GeodesicConfig,
    #[serde(default)]
    pub mvp: MvpConfig,
    /// Fraction of failed points above which the run exits with status 3.
    #[serde(default = "default_failure_fraction")]
    pub max_failure_fraction: f64,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    /// Settings with no economy, for scenarios that need none.
    pub fn empty() -> Self {
        toml::from_str("").expect("empty config is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let path = e.span().map_or_else(|| "<config>".to_string(), |s| format!("<config>@{}..{}", s.start, s.end));
            ConfigError::at(path, e.message())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::at(path.display().to_string(), e))?;
        Self::from_toml(&text).map_err(|e| ConfigError::at(format!("{}: {}", path.display(), e.path), e.message))
    }

    pub fn economy(&self) -> Result<Economy, ConfigError> {
        self.economy
            .as_ref()
            .ok_or_else(|| ConfigError::at("economy", "this scenario needs an economy"))?
            .build()
    }

    pub fn economy_id(&self) -> String {
        self.economy.as_ref().map_or_else(String::new, |e| e.id.clone())
    }

    /// Checks everything the given scenario reads.
    pub fn validate(&self, scenario: Scenario) -> Result<(), ConfigError> {
        if let Some(s) = self.scenario {
            if s != scenario {
                return Err(ConfigError::at("scenario", format!("config is for `{s}`, not `{scenario}`")));
            }
        }
        let positive = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::at(path, format!("must be positive, got {v}")))
            }
        };
        positive("tolerances.minimal", self.tolerances.minimal)?;
        positive("tolerances.intersection", self.tolerances.intersection)?;
        positive("tolerances.geodesic", self.tolerances.geodesic)?;
        positive("tolerances.volume_floor", self.tolerances.volume_floor)?;
        positive("steps.h_rel", self.steps.h_rel)?;
        positive("steps.h2_rel", self.steps.h2_rel)?;
        positive("steps.rank_tol", self.steps.rank_tol)?;
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(ConfigError::at("max_failure_fraction", "must lie in [0, 1]"));
        }
        if self.quadrature.nodes_per_axis == 0 {
            return Err(ConfigError::at("quadrature.nodes_per_axis", "must be positive"));
        }
        if self.quadrature.mc_samples < 2 {
            return Err(ConfigError::at("quadrature.mc_samples", "must be at least 2"));
        }
        self.scan.validate().map_err(|e| ConfigError::at("scan", e))?;

        let economy = if scenario.needs_economy() { Some(self.economy()?) } else { None };
        let n_chart = economy.as_ref().map(|e| e.goods() * (e.consumer_count() - 1));

        match scenario {
            Scenario::Equilibria | Scenario::ConjectureSweep => {
                let eco = economy.as_ref().expect("checked above");
                self.validate_endowments(eco)?;
                if scenario == Scenario::ConjectureSweep {
                    self.validate_grid(n_chart.expect("economy present"))?;
                }
            }
            Scenario::CurvatureScan => self.validate_grid(n_chart.expect("economy present"))?,
            Scenario::Entropy | Scenario::MvpProbe => {
                if self.boxes.is_empty() {
                    return Err(ConfigError::at("boxes", "at least one box is required"));
                }
                for (i, b) in self.boxes.iter().enumerate() {
                    let path = format!("boxes[{i}]");
                    ParamBox::new(b.lower.clone(), b.upper.clone()).map_err(|e| ConfigError::at(&path, e))?;
                    if !b.is_finite() {
                        return Err(ConfigError::at(path, "bounds must be finite"));
                    }
                    if Some(b.dim()) != n_chart {
                        return Err(ConfigError::at(path, format!("box has dimension {}, chart has {}", b.dim(), n_chart.unwrap_or(0))));
                    }
                }
                if scenario == Scenario::MvpProbe {
                    let eco = economy.as_ref().expect("checked above");
                    if eco.goods() != 2 || eco.consumer_count() != 2 {
                        return Err(ConfigError::at("economy", "same-boundary probes need a hypersurface: two goods and two consumers"));
                    }
                    if self.mvp.eps.is_empty() || !self.mvp.eps.iter().all(|e| e.is_finite()) {
                        return Err(ConfigError::at("mvp.eps", "needs finite values"));
                    }
                    if self.mvp.terms == 0 || self.mvp.max_mode == 0 {
                        return Err(ConfigError::at("mvp", "terms and max_mode must be positive"));
                    }
                }
            }
            Scenario::GeodesicCheck => {
                let eco = economy.as_ref().expect("checked above");
                if eco.goods() != 2 || eco.consumer_count() != 2 {
                    return Err(ConfigError::at("economy", "the wedge test needs two goods and two consumers"));
                }
                let g = &self.geodesic;
                if !(g.t_min.is_finite() && g.t_max.is_finite() && g.t_min <= g.t_max) || g.points == 0 {
                    return Err(ConfigError::at("geodesic", "needs finite t_min <= t_max and points > 0"));
                }
            }
            Scenario::HelicoidCheck => {
                for (name, list) in [("helicoid.specs", &self.helicoid.specs), ("helicoid.degenerate", &self.helicoid.degenerate)] {
                    for (i, h) in list.iter().enumerate() {
                        h.validate().map_err(|e| ConfigError::at(format!("{name}[{i}]"), e))?;
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_grid(&self, n: usize) -> Result<(), ConfigError> {
        let grid = self.grid.as_ref().ok_or_else(|| ConfigError::at("grid", "a chart grid is required"))?;
        grid.validate().map_err(|e| ConfigError::at("grid", e))?;
        if grid.dim() != n {
            return Err(ConfigError::at("grid", format!("grid has dimension {}, chart has {n}", grid.dim())));
        }
        Ok(())
    }

    fn validate_endowments(&self, eco: &Economy) -> Result<(), ConfigError> {
        let (l, m) = (eco.goods(), eco.consumer_count());
        let e = &self.endowments;
        for (i, rows) in e.explicit.iter().enumerate() {
            let path = format!("endowments.explicit[{i}]");
            if rows.len() != m - 1 || rows.iter().any(|r| r.len() != l) {
                return Err(ConfigError::at(path, format!("expected {} rows of {l} goods", m - 1)));
            }
            if rows.iter().flatten().any(|x| !x.is_finite()) {
                return Err(ConfigError::at(path, "entries must be finite"));
            }
        }
        if let Some(r) = &e.random {
            let d = (m - 1) * l;
            if r.lower.len() != d || r.upper.len() != d {
                return Err(ConfigError::at("endowments.random", format!("bounds need {d} entries")));
            }
            if r.lower.iter().zip(&r.upper).any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
                return Err(ConfigError::at("endowments.random", "bounds must be finite with lower <= upper"));
            }
        }
        let count = e.explicit.len() + e.random.as_ref().map_or(0, |r| r.count);
        if count == 0 {
            return Err(ConfigError::at("endowments", "no endowments to evaluate"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTICAL: &str = r#"
        seed = 3
        [economy]
        id = "identical-cd"
        resources = [2.0, 2.0]
        consumers = [
            { family = "cobb-douglas", alpha = [0.5, 0.5] },
            { family = "cobb-douglas", alpha = [0.5, 0.5] },
        ]
        [grid]
        lower = [0.5, 0.0]
        upper = [3.5, 2.0]
        points = [5, 5]
    "#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(IDENTICAL).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.scan, ScanConfig::default());
        cfg.validate(Scenario::CurvatureScan).unwrap();
        assert_eq!(cfg.economy().unwrap().consumer_count(), 2);
    }

    #[test]
    fn seed_defaults_to_zero() {
        assert_eq!(ExperimentConfig::empty().seed, 0);
        ExperimentConfig::empty().validate(Scenario::HelicoidCheck).unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = IDENTICAL.replace("seed = 3", "sede = 3");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.message.contains("sede"), "{err}");
        let text = IDENTICAL.replace("alpha = [0.5, 0.5] },\n            { family", "alpha = [0.5, 0.5], beta = 1 },\n            { family");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = IDENTICAL.replace("points = [5, 5]", "points = [5, 5]\nstep = 1");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn errors_carry_paths() {
        let text = IDENTICAL.replace("alpha = [0.5, 0.5] },\n            { family", "alpha = [0.5, 0.6] },\n            { family");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.validate(Scenario::CurvatureScan).unwrap_err().path, "economy.consumers[0]");

        let mut cfg = ExperimentConfig::from_toml(IDENTICAL).unwrap();
        cfg.tolerances.minimal = -1.0;
        assert_eq!(cfg.validate(Scenario::CurvatureScan).unwrap_err().path, "tolerances.minimal");

        let cfg = ExperimentConfig::from_toml(IDENTICAL).unwrap();
        assert_eq!(cfg.validate(Scenario::Entropy).unwrap_err().path, "boxes");
        assert_eq!(cfg.validate(Scenario::Equilibria).unwrap_err().path, "endowments");
        assert_eq!(ExperimentConfig::empty().validate(Scenario::Equilibria).unwrap_err().path, "economy");
    }

    #[test]
    fn scenario_must_match() {
        let text = format!("scenario = \"entropy\"\n{IDENTICAL}");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.scenario, Some(Scenario::Entropy));
        assert_eq!(cfg.validate(Scenario::CurvatureScan).unwrap_err().path, "scenario");
    }
}
