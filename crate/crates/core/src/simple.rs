//! Group-mean-difference estimator.
//!
//! The ideal-sample law of the effect is N(θ_t − θ_c, φ_t + φ_c), with each
//! arm's mean and variance pooled from observed and unobserved moments. Under
//! the π_R parameterization the unobserved arm sizes are `(1 − π_R)/π_R` times
//! the observed ones, and the unobserved treated mean is `α · Ȳ_c^un`. The probit
//! of the PEV is then linear in α and, after multiplying through by √π_R,
//! quadratic in √π_R.

use crate::error::{invalid, Result};
use crate::moments::{pool_mean, GroupMoments};
use crate::normal;

/// Sign of the effect that was claimed on the observed sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }
}

/// How the decision threshold δ# is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    /// A threshold fixed in outcome units.
    Fixed(f64),
    /// δ# = ±z · se of the ideal-sample estimate.
    Statistical { z: f64 },
}

/// Direction of the claim together with its threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRule {
    direction: Direction,
    mode: ThresholdMode,
}

/// Φ⁻¹(0.975)
pub fn default_z() -> f64 {
    normal::two_sided_critical(0.05)
}

impl DecisionRule {
    pub fn fixed(direction: Direction, delta_sharp: f64) -> Result<Self> {
        if !delta_sharp.is_finite() {
            return Err(invalid("delta_sharp", "must be finite"));
        }
        Ok(Self {
            direction,
            mode: ThresholdMode::Fixed(delta_sharp),
        })
    }

    pub fn statistical(direction: Direction, z: f64) -> Result<Self> {
        if !(z.is_finite() && z > 0.0) {
            return Err(invalid("z", format!("must be positive, got {z}")));
        }
        Ok(Self {
            direction,
            mode: ThresholdMode::Statistical { z },
        })
    }

    /// Statistical threshold at a two-sided significance level.
    pub fn significance(direction: Direction, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(invalid("significance", format!("must lie in (0, 1), got {level}")));
        }
        Self::statistical(direction, normal::two_sided_critical(level))
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn mode(&self) -> ThresholdMode {
        self.mode
    }

    /// The critical value, in statistical mode.
    pub fn z(&self) -> Option<f64> {
        match self.mode {
            ThresholdMode::Statistical { z } => Some(z),
            ThresholdMode::Fixed(_) => None,
        }
    }

    /// Resolves δ#. Statistical mode needs the ideal-sample standard error.
    pub fn delta_sharp(&self, se_ideal: Option<f64>) -> Result<f64> {
        match self.mode {
            ThresholdMode::Fixed(d) => Ok(d),
            ThresholdMode::Statistical { z } => match se_ideal {
                Some(se) if se.is_finite() && se > 0.0 => Ok(self.direction.sign() * z * se),
                Some(se) => Err(invalid("se_ideal", format!("must be positive, got {se}"))),
                None => Err(invalid("se_ideal", "required for a statistical threshold")),
            },
        }
    }
}

/// Gaussian law of the true effect given an ideal sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaPosterior {
    mean: f64,
    variance: f64,
}

impl DeltaPosterior {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(invalid("mean", format!("must be finite, got {mean}")));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(invalid("variance", format!("must be positive, got {variance}")));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Observed arms plus the hypothesized unobserved control mean, α and π_R.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpleScenario {
    treated: GroupMoments,
    control: GroupMoments,
    control_mean_un: f64,
    alpha: f64,
    pi_r: f64,
}

impl SimpleScenario {
    pub fn new(
        treated: GroupMoments,
        control: GroupMoments,
        control_mean_un: f64,
        alpha: f64,
        pi_r: f64,
    ) -> Result<Self> {
        if treated.n() == 0 || control.n() == 0 {
            return Err(invalid("observed", "both observed arms must be non-empty"));
        }
        if !control_mean_un.is_finite() || control_mean_un == 0.0 {
            return Err(invalid(
                "control_mean_un",
                "must be finite and non-zero for the alpha parameterization",
            ));
        }
        if !alpha.is_finite() {
            return Err(invalid("alpha", "must be finite"));
        }
        check_pi_r(pi_r)?;
        Ok(Self {
            treated,
            control,
            control_mean_un,
            alpha,
            pi_r,
        })
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.treated, self.control, self.control_mean_un, alpha, self.pi_r)
    }

    pub fn with_pi_r(&self, pi_r: f64) -> Result<Self> {
        Self::new(self.treated, self.control, self.control_mean_un, self.alpha, pi_r)
    }

    pub fn treated(&self) -> &GroupMoments {
        &self.treated
    }

    pub fn control(&self) -> &GroupMoments {
        &self.control
    }

    pub fn control_mean_un(&self) -> f64 {
        self.control_mean_un
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn pi_r(&self) -> f64 {
        self.pi_r
    }

    /// Ȳ_t^un = α · Ȳ_c^un
    pub fn treated_mean_un(&self) -> f64 {
        self.alpha * self.control_mean_un
    }

    /// Ȳ_t^ob − Ȳ_c^ob
    pub fn observed_effect(&self) -> f64 {
        self.treated.mean() - self.control.mean()
    }

    /// Standard error of the observed difference, √(σ_t²/n_t + σ_c²/n_c).
    pub fn observed_se(&self) -> f64 {
        (self.treated.variance_of_mean() + self.control.variance_of_mean()).sqrt()
    }
}

fn check_pi_r(pi_r: f64) -> Result<()> {
    if !(pi_r > 0.0 && pi_r <= 1.0) {
        return Err(invalid("pi_r", format!("must lie in (0, 1], got {pi_r}")));
    }
    Ok(())
}

/// Ideal-sample law of the effect from observed and unobserved arm moments.
///
/// Each arm carries a single known variance; an unobserved arm with a
/// non-zero size must therefore report the same variance as its observed arm.
pub fn delta_distribution(
    obs_treated: &GroupMoments,
    obs_control: &GroupMoments,
    un_treated: &GroupMoments,
    un_control: &GroupMoments,
) -> Result<DeltaPosterior> {
    let (theta_t, phi_t) = ideal_arm(obs_treated, un_treated, "treated")?;
    let (theta_c, phi_c) = ideal_arm(obs_control, un_control, "control")?;
    DeltaPosterior::new(theta_t - theta_c, phi_t + phi_c)
}

fn ideal_arm(ob: &GroupMoments, un: &GroupMoments, arm: &'static str) -> Result<(f64, f64)> {
    let total = ob.n() + un.n();
    if total == 0 {
        return Err(invalid(arm, "arm has no observations in the ideal sample"));
    }
    if un.n() > 0 && ob.n() > 0 {
        let (a, b) = (ob.variance(), un.variance());
        if (a - b).abs() > 1e-12 * a.max(b) {
            return Err(invalid(
                arm,
                format!("observed and unobserved variances differ ({a} vs {b})"),
            ));
        }
    }
    let variance = if ob.n() > 0 { ob.variance() } else { un.variance() };
    let mean = pool_mean(un.mean(), un.n(), ob.mean(), ob.n())?;
    Ok((mean, variance / total as f64))
}

/// Ideal-sample law under the π_R parameterization.
pub fn delta_distribution_pi(scn: &SimpleScenario) -> Result<DeltaPosterior> {
    let pi = scn.pi_r;
    let theta_t = (1.0 - pi) * scn.treated_mean_un() + pi * scn.treated.mean();
    let theta_c = (1.0 - pi) * scn.control_mean_un + pi * scn.control.mean();
    let variance = pi * (scn.treated.variance_of_mean() + scn.control.variance_of_mean());
    DeltaPosterior::new(theta_t - theta_c, variance)
}

/// Standard error of the ideal-sample estimate, √(π_R (σ_t²/n_t + σ_c²/n_c)).
pub fn se_ideal_simple(scn: &SimpleScenario) -> f64 {
    scn.pi_r.sqrt() * scn.observed_se()
}

/// Probability of failing to reject on the ideal sample.
///
/// `se_ideal` is only consulted for a statistical threshold. The result is
/// clamped into the open unit interval.
pub fn pev(dist: &DeltaPosterior, rule: &DecisionRule, se_ideal: Option<f64>) -> Result<f64> {
    let delta_sharp = rule.delta_sharp(se_ideal)?;
    let standardized = (delta_sharp - dist.mean()) / dist.sd();
    let p = match rule.direction() {
        Direction::Positive => normal::cdf(standardized),
        // 1 − Φ(x), evaluated as Φ(−x) to keep the upper tail accurate
        Direction::Negative => normal::cdf(-standardized),
    };
    Ok(clamp_open_unit(p))
}

pub(crate) fn clamp_open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Coefficients of the probit model in the α, π_R parameterization:
///
/// `probit = a·α√π + b·α/√π + c·√π + d/√π + constant`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbitCoefficients {
    pub alpha_sqrt_pi: f64,
    pub alpha_inv_sqrt_pi: f64,
    pub sqrt_pi: f64,
    pub inv_sqrt_pi: f64,
    pub constant: f64,
}

impl ProbitCoefficients {
    pub fn eval(&self, alpha: f64, pi_r: f64) -> f64 {
        let s = pi_r.sqrt();
        self.alpha_sqrt_pi * alpha * s
            + self.alpha_inv_sqrt_pi * alpha / s
            + self.sqrt_pi * s
            + self.inv_sqrt_pi / s
            + self.constant
    }

    /// ∂probit/∂α at a given π_R.
    pub fn alpha_slope(&self, pi_r: f64) -> f64 {
        let s = pi_r.sqrt();
        self.alpha_sqrt_pi * s + self.alpha_inv_sqrt_pi / s
    }
}

/// Probit coefficients for the scenario's observed arms and Ȳ_c^un.
///
/// α and π_R of the scenario are ignored; they are the free variables.
pub fn probit_coefficients(scn: &SimpleScenario, rule: &DecisionRule) -> ProbitCoefficients {
    let s = scn.observed_se();
    let yc = scn.control_mean_un;
    let d = scn.observed_effect();
    let (threshold_term, constant) = match rule.mode() {
        ThresholdMode::Fixed(delta_sharp) => (yc + delta_sharp, 0.0),
        ThresholdMode::Statistical { z } => (yc, z),
    };
    let sign = rule.direction().sign();
    ProbitCoefficients {
        alpha_sqrt_pi: sign * yc / s,
        alpha_inv_sqrt_pi: -sign * yc / s,
        sqrt_pi: -sign * (d + yc) / s,
        inv_sqrt_pi: sign * threshold_term / s,
        constant,
    }
}

/// Φ⁻¹(PEV) for a fixed threshold δ#.
pub fn probit_pev_fixed(scn: &SimpleScenario, delta_sharp: f64, direction: Direction) -> Result<f64> {
    let s = scn.observed_se();
    let yc = scn.control_mean_un;
    let d = scn.observed_effect();
    let (a, pi) = (scn.alpha, scn.pi_r);
    check_pi_r(pi)?;
    let (up, down) = (pi.sqrt(), 1.0 / pi.sqrt());
    let bracket = match direction {
        Direction::Positive => {
            yc * a * up - yc * a * down - (d + yc) * up + (yc + delta_sharp) * down
        }
        Direction::Negative => {
            yc * a * down + (d + yc) * up - yc * a * up - (yc + delta_sharp) * down
        }
    };
    Ok(bracket / s)
}

/// Φ⁻¹(PEV) for a statistical threshold δ# = ±z · se.
pub fn probit_pev_statistical(scn: &SimpleScenario, direction: Direction, z: f64) -> Result<f64> {
    let s = scn.observed_se();
    let yc = scn.control_mean_un;
    let d = scn.observed_effect();
    let (a, pi) = (scn.alpha, scn.pi_r);
    check_pi_r(pi)?;
    let (up, down) = (pi.sqrt(), 1.0 / pi.sqrt());
    let bracket = match direction {
        Direction::Positive => yc * a * up - yc * a * down - (d + yc) * up + yc * down,
        Direction::Negative => yc * a * down + (d + yc) * up - yc * a * up - yc * down,
    };
    Ok(bracket / s + z)
}

/// Φ⁻¹(PEV) under either threshold mode.
pub fn probit_pev_simple(scn: &SimpleScenario, rule: &DecisionRule) -> Result<f64> {
    match rule.mode() {
        ThresholdMode::Fixed(delta_sharp) => probit_pev_fixed(scn, delta_sharp, rule.direction()),
        ThresholdMode::Statistical { z } => probit_pev_statistical(scn, rule.direction(), z),
    }
}

/// Conjugate normal posterior of μ_t − μ_c with priors built from the
/// unobserved arms and likelihoods from the observed arms.
pub fn posterior_bayes_simple(
    prior_treated: &GroupMoments,
    prior_control: &GroupMoments,
    obs_treated: &GroupMoments,
    obs_control: &GroupMoments,
) -> Result<DeltaPosterior> {
    let (mt, vt) = conjugate_update(prior_treated, obs_treated, "treated")?;
    let (mc, vc) = conjugate_update(prior_control, obs_control, "control")?;
    DeltaPosterior::new(mt - mc, vt + vc)
}

/// Posterior mean and variance of μ for the prior N(Ȳ^un, σ²/n^un) and
/// likelihood of n^ob draws from N(μ, σ²).
fn conjugate_update(prior: &GroupMoments, obs: &GroupMoments, arm: &'static str) -> Result<(f64, f64)> {
    if prior.n() == 0 {
        return Err(invalid(
            arm,
            "unobserved size must be at least 1 to define a prior",
        ));
    }
    let prior_precision = prior.n() as f64 / prior.variance();
    let data_precision = obs.n() as f64 / obs.variance();
    let precision = prior_precision + data_precision;
    let mean = (prior_precision * prior.mean() + data_precision * obs.mean()) / precision;
    Ok((mean, 1.0 / precision))
}
