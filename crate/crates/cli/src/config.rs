//! Scenario configuration documents.
//!
//! A document is a single JSON object. `estimator` selects the shape of the
//! `observed` and `unobserved` blocks:
//!
//! ```json
//! {
//!   "estimator": "simple",
//!   "direction": "positive",
//!   "threshold": { "mode": "statistical", "significance": 0.05, "z_literal": 1.96 },
//!   "observed": {
//!     "treated": { "mean": 615, "variance": 45, "n": 27 },
//!     "control": { "mean": 607, "variance": 45, "n": 22 }
//!   },
//!   "unobserved": { "control_mean": 611.5, "alpha": 1.0 },
//!   "focal": { "kind": "alpha", "pi_r": 0.46 },
//!   "pev_grid": [0.1, 0.5, 0.9]
//! }
//! ```
//!
//! Regression documents carry moments ordered `[outcome, treatment,
//! covariates...]` plus the known residual variance on the observed block.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use pev_core::solvers::{default_grid, FocalParameter, MomentEntry, Scenario};
use pev_core::{DecisionRule, Direction, GroupMoments, MultivariateMoments, RegressionScenario, SimpleScenario, VariableRoles};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DirectionConfig {
    Positive,
    Negative,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
enum ThresholdConfig {
    Statistical {
        significance: Option<f64>,
        z_literal: Option<f64>,
    },
    Fixed {
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum FocalKind {
    Alpha,
    PiR,
    NUn,
    Custom,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EntryConfig {
    Mean(String),
    Cov(String, String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FocalConfig {
    kind: FocalKind,
    alpha: Option<f64>,
    pi_r: Option<f64>,
    n_un: Option<u64>,
    entry: Option<EntryConfig>,
    bracket: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmConfig {
    mean: f64,
    variance: f64,
    n: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimpleObserved {
    treated: ArmConfig,
    control: ArmConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimpleUnobserved {
    control_mean: f64,
    alpha: Option<f64>,
    pi_r: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegressionObserved {
    outcome: String,
    treatment: String,
    #[serde(default)]
    covariates: Vec<String>,
    #[serde(default)]
    binary_treatment: bool,
    means: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    n: u64,
    residual_variance: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegressionUnobserved {
    means: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    #[serde(default)]
    n: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document<O, U> {
    #[allow(dead_code)]
    estimator: String,
    direction: DirectionConfig,
    threshold: ThresholdConfig,
    observed: O,
    unobserved: U,
    focal: Option<FocalConfig>,
    pev_grid: Option<Vec<f64>>,
}

/// Simple-estimator scenario with possibly unresolved α and π_R.
#[derive(Debug, Clone)]
pub struct SimpleSetup {
    treated: GroupMoments,
    control: GroupMoments,
    control_mean_un: f64,
    alpha: Option<f64>,
    pi_r: Option<f64>,
}

impl SimpleSetup {
    /// Scenario with both α and π_R resolved.
    pub fn point(&self) -> Result<SimpleScenario, CliError> {
        let alpha = self.alpha.ok_or_else(|| CliError::config("unobserved.alpha: required for a point evaluation"))?;
        let pi_r = self.pi_r.ok_or_else(|| CliError::config("unobserved.pi_r: required for a point evaluation"))?;
        self.build(alpha, pi_r)
    }

    /// Scenario where the focal parameter may be unresolved; it is set to a
    /// placeholder the solvers overwrite.
    fn for_focal(&self, focal: FocalKind) -> Result<SimpleScenario, CliError> {
        match focal {
            FocalKind::Alpha => {
                let pi_r = self.pi_r.ok_or_else(|| CliError::config("focal.pi_r: required when the focal parameter is alpha"))?;
                self.build(self.alpha.unwrap_or(1.0), pi_r)
            }
            FocalKind::PiR => {
                let alpha = self.alpha.ok_or_else(|| CliError::config("focal.alpha: required when the focal parameter is pi_r"))?;
                self.build(alpha, self.pi_r.unwrap_or(1.0))
            }
            _ => Err(CliError::config("focal.kind: must be alpha or pi_r for the simple estimator")),
        }
    }

    fn build(&self, alpha: f64, pi_r: f64) -> Result<SimpleScenario, CliError> {
        SimpleScenario::new(self.treated, self.control, self.control_mean_un, alpha, pi_r).map_err(CliError::from_build)
    }
}

#[derive(Debug, Clone)]
pub enum Setup {
    Simple(SimpleSetup),
    Regression(RegressionScenario),
}

/// A validated configuration document.
#[derive(Debug, Clone)]
pub struct Config {
    pub setup: Setup,
    pub rule: DecisionRule,
    pub focal: Option<FocalParameter>,
    pub grid: Vec<f64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(|e| CliError::config(format!("malformed document: {e}")))?;
        let estimator = value
            .get("estimator")
            .ok_or_else(|| CliError::config("estimator: missing field"))?
            .as_str()
            .ok_or_else(|| CliError::config("estimator: expected a string"))?
            .to_owned();
        match estimator.as_str() {
            "simple" => Self::simple(decode(value)?),
            "regression" => Self::regression(decode(value)?),
            other => Err(CliError::config(format!(
                "estimator: expected \"simple\" or \"regression\", got {other:?}"
            ))),
        }
    }

    fn simple(doc: Document<SimpleObserved, SimpleUnobserved>) -> Result<Self, CliError> {
        let rule = rule(&doc)?;
        let grid = grid(&doc)?;
        let arm = |a: &ArmConfig, field: &str| {
            GroupMoments::new(a.mean, a.variance, a.n).map_err(|e| CliError::config(format!("observed.{field}: {e}")))
        };
        let mut setup = SimpleSetup {
            treated: arm(&doc.observed.treated, "treated")?,
            control: arm(&doc.observed.control, "control")?,
            control_mean_un: doc.unobserved.control_mean,
            alpha: doc.unobserved.alpha,
            pi_r: doc.unobserved.pi_r,
        };
        let focal = match &doc.focal {
            None => None,
            Some(f) => {
                match f.kind {
                    FocalKind::Alpha => {
                        reject(f.alpha.is_some(), "focal.alpha: the focal parameter cannot also be fixed")?;
                        setup.pi_r = f.pi_r.or(setup.pi_r);
                    }
                    FocalKind::PiR => {
                        reject(f.pi_r.is_some(), "focal.pi_r: the focal parameter cannot also be fixed")?;
                        setup.alpha = f.alpha.or(setup.alpha);
                    }
                    _ => return Err(CliError::config("focal.kind: must be alpha or pi_r for the simple estimator")),
                }
                reject(f.n_un.is_some() || f.entry.is_some() || f.bracket.is_some(), "focal: n_un, entry and bracket apply to the regression estimator")?;
                setup.for_focal(f.kind)?;
                Some(if f.kind == FocalKind::Alpha { FocalParameter::Alpha } else { FocalParameter::PiR })
            }
        };
        // validate whatever is resolvable now
        if let (Some(a), Some(p)) = (setup.alpha, setup.pi_r) {
            setup.build(a, p)?;
        }
        Ok(Self {
            setup: Setup::Simple(setup),
            rule,
            focal,
            grid,
        })
    }

    fn regression(doc: Document<RegressionObserved, RegressionUnobserved>) -> Result<Self, CliError> {
        let rule = rule(&doc)?;
        let grid = grid(&doc)?;
        let ob = &doc.observed;
        let roles = VariableRoles::new(ob.outcome.clone(), ob.treatment.clone(), ob.covariates.clone())
            .map_err(|e| CliError::config(format!("observed: {e}")))?
            .with_binary_treatment(ob.binary_treatment);
        let observed = moments(&roles, &ob.means, &ob.covariance, ob.n, "observed")?;
        let un = &doc.unobserved;
        let unobserved = moments(&roles, &un.means, &un.covariance, un.n, "unobserved")?;
        let scenario = RegressionScenario::new(observed, unobserved, ob.residual_variance)
            .map_err(|e| CliError::config(format!("observed.residual_variance: {e}")))?;

        let focal = match &doc.focal {
            None => None,
            Some(f) => {
                reject(f.alpha.is_some() || f.pi_r.is_some(), "focal: alpha and pi_r apply to the simple estimator")?;
                match f.kind {
                    FocalKind::NUn => {
                        reject(f.n_un.is_some() || f.entry.is_some() || f.bracket.is_some(), "focal: n_un focal takes no co-parameters")?;
                        Some(FocalParameter::NUn)
                    }
                    FocalKind::Custom => {
                        let entry = match f.entry.as_ref().ok_or_else(|| CliError::config("focal.entry: required for a custom focal"))? {
                            EntryConfig::Mean(v) => MomentEntry::Mean(v.clone()),
                            EntryConfig::Cov(a, b) => MomentEntry::Cov(a.clone(), b.clone()),
                        };
                        let known = |v: &str| roles.index_of(v).is_some();
                        let ok = match &entry {
                            MomentEntry::Mean(v) => known(v),
                            MomentEntry::Cov(a, b) => known(a) && known(b),
                        };
                        reject(!ok, "focal.entry: names a variable that is not in the moments")?;
                        let [lo, hi] = f.bracket.ok_or_else(|| CliError::config("focal.bracket: required for a custom focal"))?;
                        reject(lo.is_nan() || hi.is_nan() || lo >= hi, "focal.bracket: lower end must be below upper end")?;
                        Some(FocalParameter::Custom {
                            entry,
                            n_un: f.n_un.unwrap_or(scenario.unobserved().n()),
                            bracket: (lo, hi),
                        })
                    }
                    _ => return Err(CliError::config("focal.kind: must be n_un or custom for the regression estimator")),
                }
            }
        };
        Ok(Self {
            setup: Setup::Regression(scenario),
            rule,
            focal,
            grid,
        })
    }

    /// The scenario and focal parameter for sweeps and bounds.
    pub fn focal_scenario(&self) -> Result<(FocalParameter, Scenario), CliError> {
        let focal = self.focal.clone().ok_or_else(|| CliError::config("focal: required for this command"))?;
        let scenario = match &self.setup {
            Setup::Simple(s) => {
                let kind = if focal == FocalParameter::Alpha { FocalKind::Alpha } else { FocalKind::PiR };
                Scenario::Simple(s.for_focal(kind)?)
            }
            Setup::Regression(r) => Scenario::Regression(r.clone()),
        };
        Ok((focal, scenario))
    }
}

fn decode<T: DeserializeOwned>(value: Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(format!("{path}: {}", e.into_inner()))
    })
}

fn reject(bad: bool, msg: &str) -> Result<(), CliError> {
    if bad {
        Err(CliError::config(msg))
    } else {
        Ok(())
    }
}

fn rule<O, U>(doc: &Document<O, U>) -> Result<DecisionRule, CliError> {
    let direction = match doc.direction {
        DirectionConfig::Positive => Direction::Positive,
        DirectionConfig::Negative => Direction::Negative,
    };
    let built = match doc.threshold {
        ThresholdConfig::Fixed { value } => DecisionRule::fixed(direction, value),
        ThresholdConfig::Statistical { z_literal: Some(z), .. } => DecisionRule::statistical(direction, z),
        ThresholdConfig::Statistical { significance: Some(level), .. } => DecisionRule::significance(direction, level),
        ThresholdConfig::Statistical { .. } => {
            return Err(CliError::config("threshold.significance: required unless z_literal is given"))
        }
    };
    built.map_err(|e| CliError::config(format!("threshold: {e}")))
}

fn grid<O, U>(doc: &Document<O, U>) -> Result<Vec<f64>, CliError> {
    let grid = doc.pev_grid.clone().unwrap_or_else(default_grid);
    for (i, p) in grid.iter().enumerate() {
        reject(!(*p > 0.0 && *p < 1.0), &format!("pev_grid[{i}]: must lie in (0, 1), got {p}"))?;
    }
    Ok(grid)
}

fn moments(
    roles: &VariableRoles,
    means: &[f64],
    cov: &[Vec<f64>],
    n: u64,
    block: &str,
) -> Result<MultivariateMoments, CliError> {
    let k = roles.dim();
    if means.len() != k {
        return Err(CliError::config(format!("{block}.means: expected {k} entries, got {}", means.len())));
    }
    if cov.len() != k || cov.iter().any(|r| r.len() != k) {
        return Err(CliError::config(format!("{block}.covariance: expected a {k}x{k} matrix")));
    }
    let flat: Vec<f64> = cov.iter().flatten().copied().collect();
    MultivariateMoments::new(
        roles.clone(),
        DVector::from_vec(means.to_vec()),
        DMatrix::from_row_slice(k, k, &flat),
        n,
    )
    .map_err(|e| CliError::config(format!("{block}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIMPLE: &str = r#"{
        "estimator": "simple",
        "direction": "positive",
        "threshold": {"mode": "statistical", "significance": 0.05},
        "observed": {
            "treated": {"mean": 615, "variance": 45, "n": 27},
            "control": {"mean": 607, "variance": 45, "n": 22}
        },
        "unobserved": {"control_mean": 611.5, "alpha": 1.0, "pi_r": 0.3},
        "focal": {"kind": "alpha", "pi_r": 0.46}
    }"#;

    #[test]
    fn simple_document() {
        let c = Config::parse(SIMPLE).unwrap();
        assert_eq!(c.grid.len(), 9);
        assert!((c.rule.z().unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        let (focal, scn) = c.focal_scenario().unwrap();
        assert_eq!(focal, FocalParameter::Alpha);
        match (scn, &c.setup) {
            (Scenario::Simple(s), Setup::Simple(setup)) => {
                // the focal block's co-parameter wins
                assert_eq!(s.pi_r(), 0.46);
                assert_eq!(setup.point().unwrap().pi_r(), 0.46);
            }
            _ => panic!("wrong estimator"),
        }
    }

    fn with(edit: impl FnOnce(&mut Value)) -> Result<Config, CliError> {
        let mut v: Value = serde_json::from_str(SIMPLE).unwrap();
        edit(&mut v);
        Config::parse(&v.to_string())
    }

    fn message(r: Result<Config, CliError>) -> String {
        match r {
            Err(CliError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        assert!(message(with(|v| v["observed"]["treated"]["mean"] = "high".into())).contains("observed.treated.mean"));
        assert!(message(with(|v| v["threshold"]["significance"] = 1.5.into())).contains("threshold"));
        assert!(message(with(|v| v["pev_grid"] = serde_json::json!([0.5, 1.0]))).contains("pev_grid[1]"));
        assert!(message(with(|v| v["focal"]["kind"] = "n_un".into())).contains("focal.kind"));
        assert!(message(with(|v| v["estimator"] = "logit".into())).contains("estimator"));
        assert!(message(with(|v| v["unobserved"]["typo"] = 1.into())).contains("typo"));
        assert!(message(with(|v| v["unobserved"]["control_mean"] = 0.into())).contains("control_mean"));
        assert!(message(Config::parse("{ not json")).contains("malformed"));
    }

    #[test]
    fn missing_co_parameter() {
        let r = with(|v| {
            v["focal"] = serde_json::json!({"kind": "pi_r"});
            v["unobserved"].as_object_mut().unwrap().remove("alpha");
        });
        assert!(message(r).contains("focal.alpha"));
    }
}
