//! Thresholds of a focal parameter at which the PEV crosses a target.
//!
//! α enters the probit linearly, π_R through a quadratic in √π_R, and n_un is
//! searched over the integers. Other unobserved-moment entries are handled by
//! bisection. Thresholds are open: a reported value is where the PEV equals
//! the target, and for n_un the largest size whose PEV is still below it.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::normal;
use crate::regression::{delta_distribution_reg, probit_pev_reg, se_ideal_reg, RegressionScenario};
use crate::simple::{
    delta_distribution_pi, pev, probit_coefficients, probit_pev_simple, se_ideal_simple, DecisionRule,
    SimpleScenario,
};

/// Largest n_un searched before a target is declared unreachable.
pub const DEFAULT_N_UN_CAP: u64 = 10_000_000;

/// A named entry of the unobserved moments.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentEntry {
    Mean(String),
    Cov(String, String),
}

/// The parameter that varies; everything else in the scenario stays fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum FocalParameter {
    Alpha,
    PiR,
    NUn,
    /// An unobserved-moment entry of a regression scenario, searched within
    /// `bracket` at a fixed unobserved size.
    Custom {
        entry: MomentEntry,
        n_un: u64,
        bracket: (f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Simple(SimpleScenario),
    Regression(RegressionScenario),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FocalValue {
    Real(f64),
    Count(u64),
}

impl FocalValue {
    pub fn as_f64(self) -> f64 {
        match self {
            FocalValue::Real(v) => v,
            FocalValue::Count(n) => n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    pub focal: FocalValue,
    /// Ȳ_t^un at the threshold (α focal only).
    pub ybar_t_un: Option<f64>,
    /// Ȳ_t^un − Ȳ_c^un at the threshold (α focal only).
    pub effect_un: Option<f64>,
    pub delta_id: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowOutcome {
    Found(Threshold),
    /// No focal value in the domain reaches the target.
    Infeasible(String),
    Failed(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub pev_target: f64,
    pub outcome: RowOutcome,
}

impl ThresholdRow {
    fn found(pev_target: f64, t: Threshold) -> Self {
        Self {
            pev_target,
            outcome: RowOutcome::Found(t),
        }
    }

    fn infeasible(pev_target: f64, why: impl Into<String>) -> Self {
        Self {
            pev_target,
            outcome: RowOutcome::Infeasible(why.into()),
        }
    }

    pub fn threshold(&self) -> Option<&Threshold> {
        match &self.outcome {
            RowOutcome::Found(t) => Some(t),
            _ => None,
        }
    }
}

fn target_probit(target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(invalid("pev_target", format!("must lie in (0, 1), got {target}")));
    }
    Ok(normal::quantile(target))
}

/// α at which the PEV equals `target`, with π_R held at the scenario value.
pub fn solve_alpha(target: f64, scn: &SimpleScenario, rule: &DecisionRule) -> Result<ThresholdRow> {
    let q = target_probit(target)?;
    let coef = probit_coefficients(scn, rule);
    let pi = scn.pi_r();
    let slope = coef.alpha_slope(pi);
    if slope == 0.0 || !slope.is_finite() {
        return Err(invalid("alpha", "the PEV does not depend on alpha when pi_r = 1"));
    }
    let alpha = (q - coef.eval(0.0, pi)) / slope;
    let at = scn.with_alpha(alpha)?;
    let yc = scn.control_mean_un();
    Ok(ThresholdRow::found(
        target,
        Threshold {
            focal: FocalValue::Real(alpha),
            ybar_t_un: Some(alpha * yc),
            effect_un: Some((alpha - 1.0) * yc),
            delta_id: delta_distribution_pi(&at)?.mean(),
            notes: Vec::new(),
        },
    ))
}

/// π_R at which the PEV equals `target`, with α held at the scenario value.
///
/// Multiplying the probit by u = √π_R gives `A u² + (c₀ − q) u + C = 0`. Roots
/// in (0, 1] are candidates; with two, the one where the PEV falls as π_R
/// grows is returned and the other is recorded in the notes.
pub fn solve_pi(target: f64, scn: &SimpleScenario, rule: &DecisionRule) -> Result<ThresholdRow> {
    let q = target_probit(target)?;
    let coef = probit_coefficients(scn, rule);
    let alpha = scn.alpha();
    let a = coef.alpha_sqrt_pi * alpha + coef.sqrt_pi;
    let c = coef.alpha_inv_sqrt_pi * alpha + coef.inv_sqrt_pi;
    let b = coef.constant - q;

    let mut roots: Vec<f64> = quadratic_roots(a, b, c)
        .into_iter()
        .filter(|u| *u > 0.0 && *u <= 1.0)
        .collect();
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-15);
    if roots.is_empty() {
        return Ok(ThresholdRow::infeasible(
            target,
            "no pi_r in (0, 1] reaches the target",
        ));
    }
    // d probit / du = A − C/u²; negative means the PEV falls as π_R grows
    let falling = |u: f64| a - c / (u * u) < 0.0;
    let mut notes = Vec::new();
    let u = if roots.len() == 1 {
        roots[0]
    } else {
        let pick = roots.iter().copied().find(|&u| falling(u)).unwrap_or(roots[0]);
        for &other in roots.iter().filter(|&&r| r != pick) {
            notes.push(format!("second root at pi_r = {}", other * other));
        }
        pick
    };
    let pi = u * u;
    let at = scn.with_pi_r(pi)?;
    Ok(ThresholdRow::found(
        target,
        Threshold {
            focal: FocalValue::Real(pi),
            ybar_t_un: None,
            effect_un: None,
            delta_id: delta_distribution_pi(&at)?.mean(),
            notes,
        },
    ))
}

/// Real roots of `a x² + b x + c`, avoiding cancellation.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let h = -0.5 * (b + b.signum() * disc.sqrt());
    if h == 0.0 {
        return vec![0.0];
    }
    let mut r = vec![h / a, c / h];
    r.sort_by(f64::total_cmp);
    r
}

/// Largest n_un with PEV below `target`, searching up to [`DEFAULT_N_UN_CAP`].
pub fn solve_n_un(target: f64, scn: &RegressionScenario, rule: &DecisionRule) -> Result<ThresholdRow> {
    solve_n_un_capped(target, scn, rule, DEFAULT_N_UN_CAP)
}

/// [`solve_n_un`] with an explicit search cap.
///
/// Doubling finds a size whose PEV reaches the target, then integer bisection
/// narrows to the crossing. If the probit values seen along the way are not
/// monotone, every size up to the bracket end is scanned instead and all
/// crossings are reported in the notes.
pub fn solve_n_un_capped(
    target: f64,
    scn: &RegressionScenario,
    rule: &DecisionRule,
    cap: u64,
) -> Result<ThresholdRow> {
    let q = target_probit(target)?;
    let probit = |n: u64| probit_pev_reg(scn, n, rule);
    let at_zero = probit(0)?;
    if at_zero >= q {
        return Ok(ThresholdRow::infeasible(
            target,
            "the PEV of the observed sample already reaches the target",
        ));
    }

    let mut seen = vec![(0u64, at_zero)];
    let mut hi = 1u64;
    loop {
        let v = probit(hi)?;
        seen.push((hi, v));
        if v >= q {
            break;
        }
        if hi >= cap {
            return Ok(ThresholdRow::infeasible(
                target,
                format!("the PEV stays below the target up to n_un = {cap}"),
            ));
        }
        hi = (hi * 2).min(cap);
    }

    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let v = probit(mid)?;
        seen.push((mid, v));
        if v < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    seen.sort_by_key(|(n, _)| *n);
    let increasing = seen.windows(2).all(|w| w[1].1 >= w[0].1);
    let mut notes = Vec::new();
    let n_un = if increasing {
        lo
    } else {
        let end = seen.last().map(|(n, _)| *n).unwrap_or(0);
        let (first, crossings) = scan_crossings(&probit, q, end)?;
        notes.push("probit is not monotone in n_un; scanned every size".to_string());
        for (n, up) in &crossings {
            let kind = if *up { "rises to" } else { "falls below" };
            notes.push(format!("PEV {kind} the target at n_un = {n}"));
        }
        first
    };

    Ok(ThresholdRow::found(
        target,
        Threshold {
            focal: FocalValue::Count(n_un),
            ybar_t_un: None,
            effect_un: None,
            delta_id: delta_distribution_reg(scn, n_un)?.mean(),
            notes,
        },
    ))
}

/// Exhaustive scan over `0..=end`. Returns the size just before the first
/// upward crossing and every crossing as `(n, upward)`.
fn scan_crossings(probit: &impl Fn(u64) -> Result<f64>, q: f64, end: u64) -> Result<(u64, Vec<(u64, bool)>)> {
    let mut crossings = Vec::new();
    let mut prev_below = probit(0)? < q;
    let mut first = None;
    for n in 1..=end {
        let below = probit(n)? < q;
        if below != prev_below {
            crossings.push((n, !below));
            if !below && first.is_none() {
                first = Some(n - 1);
            }
        }
        prev_below = below;
    }
    Ok((first.unwrap_or(end), crossings))
}

/// Bisection for the point where `probit_fn` equals Φ⁻¹(`target`).
///
/// Stops when the bracket is narrower than `1e-10 · max(1, |hi|)` or after 200
/// halvings, and returns the midpoint.
pub fn solve_generic<F>(mut probit_fn: F, target: f64, bracket: (f64, f64)) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let q = target_probit(target)?;
    let (mut lo, mut hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(invalid("bracket", format!("[{lo}, {hi}] is not a finite interval")));
    }
    let f_lo = probit_fn(lo)? - q;
    let f_hi = probit_fn(hi)? - q;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let tol = 1e-10 * hi.abs().max(1.0);
    let lo_negative = f_lo < 0.0;
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f = probit_fn(mid)? - q;
        if f == 0.0 {
            return Ok(mid);
        }
        if (f < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Probit of the PEV for a regression scenario with one unobserved-moment
/// entry replaced.
fn custom_probit(
    scn: &RegressionScenario,
    entry: &MomentEntry,
    n_un: u64,
    value: f64,
    rule: &DecisionRule,
) -> Result<f64> {
    probit_pev_reg(&with_entry(scn, entry, value)?, n_un, rule)
}

fn with_entry(scn: &RegressionScenario, entry: &MomentEntry, value: f64) -> Result<RegressionScenario> {
    let un = scn.unobserved();
    let index = |label: &str| {
        un.roles()
            .index_of(label)
            .ok_or_else(|| invalid("focal", format!("unknown variable '{label}'")))
    };
    let edited = match entry {
        MomentEntry::Mean(v) => un.with_mean(index(v)?, value)?,
        MomentEntry::Cov(a, b) => un.with_cov_entry(index(a)?, index(b)?, value)?,
    };
    scn.with_unobserved(edited)
}

/// Value of a custom unobserved-moment entry at which the PEV equals `target`.
pub fn solve_custom(
    target: f64,
    scn: &RegressionScenario,
    entry: &MomentEntry,
    n_un: u64,
    bracket: (f64, f64),
    rule: &DecisionRule,
) -> Result<ThresholdRow> {
    target_probit(target)?;
    let value = match solve_generic(|v| custom_probit(scn, entry, n_un, v, rule), target, bracket) {
        Ok(v) => v,
        Err(Error::NoSignChange { lo, hi }) => {
            return Ok(ThresholdRow::infeasible(
                target,
                format!("the PEV does not cross the target within [{lo}, {hi}]"),
            ))
        }
        Err(e) => return Err(e),
    };
    let at = with_entry(scn, entry, value)?;
    Ok(ThresholdRow::found(
        target,
        Threshold {
            focal: FocalValue::Real(value),
            ybar_t_un: None,
            effect_un: None,
            delta_id: delta_distribution_reg(&at, n_un)?.mean(),
            notes: Vec::new(),
        },
    ))
}

fn solve_one(target: f64, focal: &FocalParameter, scenario: &Scenario, rule: &DecisionRule) -> Result<ThresholdRow> {
    match (focal, scenario) {
        (FocalParameter::Alpha, Scenario::Simple(s)) => solve_alpha(target, s, rule),
        (FocalParameter::PiR, Scenario::Simple(s)) => solve_pi(target, s, rule),
        (FocalParameter::NUn, Scenario::Regression(r)) => solve_n_un(target, r, rule),
        (FocalParameter::Custom { entry, n_un, bracket }, Scenario::Regression(r)) => {
            solve_custom(target, r, entry, *n_un, *bracket, rule)
        }
        _ => Err(mismatch(focal)),
    }
}

fn mismatch(focal: &FocalParameter) -> Error {
    let what = match focal {
        FocalParameter::Alpha | FocalParameter::PiR => "alpha and pi_r need a simple-estimator scenario",
        FocalParameter::NUn | FocalParameter::Custom { .. } => {
            "n_un and custom focals need a regression scenario"
        }
    };
    invalid("focal", what)
}

/// One row per target, in order. A failing row never stops the others.
pub fn sweep(targets: &[f64], focal: &FocalParameter, scenario: &Scenario, rule: &DecisionRule) -> Vec<ThresholdRow> {
    targets
        .par_iter()
        .map(|&t| {
            solve_one(t, focal, scenario, rule).unwrap_or_else(|e| ThresholdRow {
                pev_target: t,
                outcome: RowOutcome::Failed(e),
            })
        })
        .collect()
}

/// The grid 0.1, 0.2, …, 0.9.
pub fn default_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// PEV and ideal-sample quantities at one value of the focal parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub pev: f64,
    pub probit: f64,
    pub delta_id: f64,
    pub se_ideal: f64,
}

pub fn evaluate_simple(scn: &SimpleScenario, rule: &DecisionRule) -> Result<Evaluation> {
    let dist = delta_distribution_pi(scn)?;
    let se = se_ideal_simple(scn);
    Ok(Evaluation {
        pev: pev(&dist, rule, Some(se))?,
        probit: probit_pev_simple(scn, rule)?,
        delta_id: dist.mean(),
        se_ideal: se,
    })
}

pub fn evaluate_regression(scn: &RegressionScenario, n_un: u64, rule: &DecisionRule) -> Result<Evaluation> {
    let dist = delta_distribution_reg(scn, n_un)?;
    let se = se_ideal_reg(scn, n_un)?;
    Ok(Evaluation {
        pev: pev(&dist, rule, Some(se))?,
        probit: probit_pev_reg(scn, n_un, rule)?,
        delta_id: dist.mean(),
        se_ideal: se,
    })
}

/// Evaluates the scenario with the focal parameter set to `value`.
pub fn evaluate(focal: &FocalParameter, value: f64, scenario: &Scenario, rule: &DecisionRule) -> Result<Evaluation> {
    match (focal, scenario) {
        (FocalParameter::Alpha, Scenario::Simple(s)) => evaluate_simple(&s.with_alpha(value)?, rule),
        (FocalParameter::PiR, Scenario::Simple(s)) => evaluate_simple(&s.with_pi_r(value)?, rule),
        (FocalParameter::NUn, Scenario::Regression(r)) => evaluate_regression(r, count(value)?, rule),
        (FocalParameter::Custom { entry, n_un, .. }, Scenario::Regression(r)) => {
            evaluate_regression(&with_entry(r, entry, value)?, *n_un, rule)
        }
        _ => Err(mismatch(focal)),
    }
}

fn count(value: f64) -> Result<u64> {
    if !(value >= 0.0 && value.fract() == 0.0 && value <= u64::MAX as f64) {
        return Err(invalid("n_un", format!("must be a non-negative integer, got {value}")));
    }
    Ok(value as u64)
}

/// PEV and δ̂^id ranges over an interval of the focal parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub pev: (f64, f64),
    pub delta_id: (f64, f64),
    /// False when sampling found the PEV or δ̂^id non-monotone; the ranges are
    /// then the envelope over a dense grid.
    pub monotone: bool,
}

const MONOTONE_PROBES: usize = 33;
const ENVELOPE_POINTS: usize = 1025;

/// Ranges of the PEV and δ̂^id as the focal parameter runs over `[lo, hi]`.
pub fn bound_pev(interval: (f64, f64), focal: &FocalParameter, scenario: &Scenario, rule: &DecisionRule) -> Result<Bound> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(invalid("interval", format!("[{lo}, {hi}] is not a finite interval")));
    }
    let integer = matches!(focal, FocalParameter::NUn);
    if integer {
        count(lo)?;
        count(hi)?;
    }
    let eval = |v: f64| evaluate(focal, v, scenario, rule);

    let probes = grid(lo, hi, MONOTONE_PROBES, integer);
    let values = probes.iter().map(|&v| eval(v)).collect::<Result<Vec<_>>>()?;
    let monotone = is_monotone(values.iter().map(|e| e.probit)) && is_monotone(values.iter().map(|e| e.delta_id));

    let sample = if monotone {
        vec![eval(lo)?, eval(hi)?]
    } else {
        grid(lo, hi, ENVELOPE_POINTS, integer)
            .into_iter()
            .map(eval)
            .collect::<Result<Vec<_>>>()?
    };
    Ok(Bound {
        pev: envelope(sample.iter().map(|e| e.pev)),
        delta_id: envelope(sample.iter().map(|e| e.delta_id)),
        monotone,
    })
}

fn grid(lo: f64, hi: f64, points: usize, integer: bool) -> Vec<f64> {
    let mut g: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .map(|v| if integer { v.round() } else { v })
        .collect();
    g.dedup();
    g
}

fn is_monotone(values: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = values.collect();
    v.windows(2).all(|w| w[1] >= w[0]) || v.windows(2).all(|w| w[1] <= w[0])
}

fn envelope(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}
