//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use pev_core::moments::{from_raw, pool_multivariate};
use pev_core::normal;
use pev_core::oracle::{mc_pev, ols_oracle};
use pev_core::power::{curve_data, retest};
use pev_core::regression::{beta_w_hat, delta_distribution_reg, posterior_bayes_reg, probit_pev_reg};
use pev_core::simple::{delta_distribution, delta_distribution_pi, pev, posterior_bayes_simple, probit_coefficients};
use pev_core::solvers::{bound_pev, default_grid, sweep, FocalParameter, Scenario, ThresholdRow};
use pev_core::{
    DecisionRule, DeltaPosterior, Direction, GroupMoments, MultivariateMoments, RegressionScenario, SimpleScenario,
    VariableRoles,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const Z_LITERAL: f64 = 1.96;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn reading_simple(alpha: f64, pi_r: f64) -> SimpleScenario {
    SimpleScenario::new(
        GroupMoments::new(615.0, 45.0, 27).unwrap(),
        GroupMoments::new(607.0, 45.0, 22).unwrap(),
        611.5,
        alpha,
        pi_r,
    )
    .unwrap()
}

fn reading_regression() -> RegressionScenario {
    let roles = VariableRoles::new("Y", "W", ["Z"]).unwrap().with_binary_treatment(true);
    let means = DVector::from_vec(vec![609.96, 0.55, 576.62]);
    let cov = |wy: f64| DMatrix::from_row_slice(3, 3, &[1662.21, wy, 1832.2, wy, 0.25, 0.39, 1832.2, 0.39, 2079.36]);
    let observed = MultivariateMoments::new(roles.clone(), means.clone(), cov(2.33), 49).unwrap();
    let unobserved = MultivariateMoments::new(roles, means, cov(0.0), 0).unwrap();
    RegressionScenario::new(observed, unobserved, 32.0).unwrap()
}

fn positive() -> DecisionRule {
    DecisionRule::statistical(Direction::Positive, Z_LITERAL).unwrap()
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{name} = {got:.6}, expected {want} ± {tol}"))
    }
}

fn timed<T>(limit: Duration, f: impl FnOnce() -> T) -> Result<(T, Duration), String> {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    if took < limit {
        Ok((out, took))
    } else {
        Err(format!("took {took:?}, limit {limit:?}"))
    }
}

fn rows_found(rows: &[ThresholdRow]) -> Result<Vec<&pev_core::solvers::Threshold>, String> {
    rows.iter()
        .map(|r| r.threshold().ok_or_else(|| format!("no threshold for target {}: {:?}", r.pev_target, r.outcome)))
        .collect()
}

fn alpha_sweep() -> Outcome {
    let scenario = Scenario::Simple(reading_simple(1.0, 0.46));
    let (rows, took) = timed(Duration::from_millis(100), || {
        sweep(&default_grid(), &FocalParameter::Alpha, &scenario, &positive())
    })?;
    let alpha = [1.0017, 0.9999, 0.9987, 0.9976, 0.9966, 0.9956, 0.9945, 0.9933, 0.9915];
    let ybar = [612.54, 611.44, 610.71, 610.03, 609.42, 608.81, 608.14, 607.4, 606.3];
    let delta = [4.24, 3.65, 3.25, 2.89, 2.56, 2.23, 1.86, 1.47, 0.87];
    for (i, t) in rows_found(&rows)?.into_iter().enumerate() {
        within("alpha", t.focal.as_f64(), alpha[i], 0.001)?;
        within("ybar_t_un", t.ybar_t_un.unwrap_or(f64::NAN), ybar[i], 0.05)?;
        within("delta_id", t.delta_id, delta[i], 0.05)?;
    }
    Ok(format!("9 rows in {took:?}"))
}

fn pi_sweep() -> Outcome {
    let scenario = Scenario::Simple(reading_simple(1.0, 0.5));
    let (rows, took) = timed(Duration::from_millis(100), || {
        sweep(&default_grid(), &FocalParameter::PiR, &scenario, &positive())
    })?;
    let pi = [0.6095, 0.4553, 0.358, 0.284, 0.2228, 0.1689, 0.1195, 0.0725, 0.0267];
    let delta = [4.88, 3.64, 2.86, 2.27, 1.78, 1.35, 0.96, 0.58, 0.21];
    for (i, t) in rows_found(&rows)?.into_iter().enumerate() {
        within("pi_r", t.focal.as_f64(), pi[i], 0.002)?;
        within("delta_id", t.delta_id, delta[i], 0.05)?;
    }
    Ok(format!("9 rows in {took:?}"))
}

fn n_un_sweep() -> Outcome {
    let scenario = Scenario::Regression(reading_regression());
    let (rows, took) = timed(Duration::from_millis(500), || {
        sweep(&default_grid(), &FocalParameter::NUn, &scenario, &positive())
    })?;
    let n = [36.0, 51.0, 64.0, 77.0, 91.0, 107.0, 126.0, 152.0, 195.0];
    let delta = [4.00, 3.19, 2.67, 2.25, 1.89, 1.55, 1.23, 0.90, 0.50];
    for (i, t) in rows_found(&rows)?.into_iter().enumerate() {
        if t.focal.as_f64() != n[i] {
            return Err(format!("n_un = {}, expected {}", t.focal.as_f64(), n[i]));
        }
        within("delta_id", t.delta_id, delta[i], 0.02)?;
    }
    Ok(format!("9 rows in {took:?}"))
}

fn spot_values() -> Outcome {
    let scn = reading_regression();
    within("observed-only effect", beta_w_hat(scn.observed()).map_err(|e| e.to_string())?, 7.95, 0.01)?;

    let at = reading_simple(0.9966, 0.46);
    within("ybar_t_un", at.treated_mean_un(), 609.42, 0.01)?;
    within("unobserved effect", at.treated_mean_un() - at.control_mean_un(), -2.08, 0.01)?;
    within("delta_id at alpha", delta_distribution_pi(&at).unwrap().mean(), 2.56, 0.01)?;

    let d91 = delta_distribution_reg(&scn, 91).map_err(|e| e.to_string())?;
    within("delta_id at n_un = 91", d91.mean(), 1.89, 0.01)?;
    Ok("all spot values within 0.01".into())
}

fn coefficient_recovery() -> Outcome {
    let coef = probit_coefficients(&reading_simple(1.0, 0.5), &positive());
    within("alpha*sqrt(pi) coefficient", coef.alpha_sqrt_pi, 317.38, 0.01)?;
    within("alpha/sqrt(pi) coefficient", -coef.alpha_inv_sqrt_pi, 317.38, 0.01)?;
    within("sqrt(pi) coefficient", -coef.sqrt_pi, 321.54, 0.01)?;
    within("1/sqrt(pi) coefficient", coef.inv_sqrt_pi, 317.38, 0.01)?;

    // probit(n_un) = z − a/√N + b√N with N = n_un + n_ob; recover a and b from
    // two sizes and confirm the form at a third
    let scn = reading_regression();
    let rule = positive();
    let gap = |n_un: u64| Z_LITERAL - probit_pev_reg(&scn, n_un, &rule).unwrap();
    let (u1, u2) = (49f64.sqrt(), 100f64.sqrt());
    let (g1, g2) = (gap(0), gap(51));
    // g = a/u − b u
    let det = (1.0 / u1) * (-u2) - (-u1) * (1.0 / u2);
    let a = (g1 * (-u2) - (-u1) * g2) / det;
    let b = ((1.0 / u1) * g2 - g1 * (1.0 / u2)) / det;
    let u3 = 300f64.sqrt();
    within("model form at n_un = 251", a / u3 - b * u3, gap(251), 1e-9)?;
    let first = within("1/sqrt(N) coefficient", a, 40.36, 0.01);
    let second = within("sqrt(N) coefficient", b, 0.12, 0.005);
    match (first, second) {
        (Ok(()), Ok(())) => Ok(format!(
            "317.384 / 321.536; regression {a:.4} / {b:.4}"
        )),
        (f, s) => Err([f.err(), s.err()].into_iter().flatten().collect::<Vec<_>>().join("; ")),
    }
}

fn interval_bound() -> Outcome {
    let b = bound_pev((0.2, 0.5), &FocalParameter::PiR, &Scenario::Simple(reading_simple(1.0, 0.5)), &positive())
        .map_err(|e| e.to_string())?;
    within("PEV lower", b.pev.0, 0.16, 0.005)?;
    within("PEV upper", b.pev.1, 0.54, 0.005)?;
    within("delta_id lower", b.delta_id.0, 1.6, 0.01)?;
    within("delta_id upper", b.delta_id.1, 4.0, 0.01)?;
    Ok(format!(
        "PEV [{:.4}, {:.4}], delta_id [{:.4}, {:.4}]",
        b.pev.0, b.pev.1, b.delta_id.0, b.delta_id.1
    ))
}

/// Agreement of two effect laws: means on the scale of the larger of |mean|
/// and the sd, variances relative.
fn laws_agree(a: &DeltaPosterior, b: &DeltaPosterior) -> bool {
    let scale = b.mean().abs().max(b.sd());
    (a.mean() - b.mean()).abs() <= 1e-9 * scale && (a.variance() - b.variance()).abs() <= 1e-9 * b.variance()
}

fn random_raw(rng: &mut ChaCha8Rng, n: usize, p: usize, shift: f64) -> DMatrix<f64> {
    loop {
        let data = DMatrix::from_fn(n, p + 2, |_, j| match j {
            1 => f64::from(u8::from(rng.random_bool(0.5))),
            _ => shift + rng.random_range(-10.0..10.0),
        });
        let w = data.column(1);
        if w.iter().any(|&v| v == 0.0) && w.iter().any(|&v| v == 1.0) {
            return data;
        }
    }
}

fn roles(p: usize) -> VariableRoles {
    VariableRoles::new("Y", "W", (0..p).map(|i| format!("Z{i}"))).unwrap()
}

fn bayes_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    for case in 0..200 {
        let var_t = rng.random_range(1.0..100.0);
        let var_c = rng.random_range(1.0..100.0);
        let arm = |rng: &mut ChaCha8Rng, var: f64| {
            GroupMoments::new(rng.random_range(-50.0..50.0), var, rng.random_range(1..500)).unwrap()
        };
        let (ot, oc, ut, uc) = (arm(&mut rng, var_t), arm(&mut rng, var_c), arm(&mut rng, var_t), arm(&mut rng, var_c));
        let bayes = posterior_bayes_simple(&ut, &uc, &ot, &oc);
        let freq = delta_distribution(&ot, &oc, &ut, &uc);
        match (bayes, freq) {
            (Ok(b), Ok(f)) if laws_agree(&b, &f) => {}
            other => failures.push(format!("simple case {case}: {other:?}")),
        }
    }
    for case in 0..200 {
        let p = rng.random_range(0..=3);
        let n_ob = rng.random_range(p + 6..60);
        let n_un = rng.random_range(p + 6..60);
        let ob = random_raw(&mut rng, n_ob, p, 0.0);
        let shift = rng.random_range(-3.0..3.0);
        let un = random_raw(&mut rng, n_un, p, shift);
        let result = (|| {
            let scn = RegressionScenario::new(from_raw(&ob, roles(p))?, from_raw(&un, roles(p))?, rng_sigma2(case))?;
            let post = posterior_bayes_reg(&scn, n_un as u64)?.w_marginal()?;
            let freq = delta_distribution_reg(&scn, n_un as u64)?;
            Ok::<_, pev_core::Error>((post, freq))
        })();
        match result {
            Ok((b, f)) if laws_agree(&b, &f) => {}
            other => failures.push(format!("regression case {case}: {other:?}")),
        }
    }
    if failures.is_empty() {
        Ok("400 scenarios, 0 failures".into())
    } else {
        Err(format!("{} failures, first: {}", failures.len(), failures[0]))
    }
}

fn rng_sigma2(case: usize) -> f64 {
    0.5 + (case % 13) as f64
}

fn oracle_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    for case in 0..100 {
        let p = rng.random_range(0..=3);
        let (na, nb) = (rng.random_range(2..30), rng.random_range(2..30));
        let a = random_raw(&mut rng, na, p, 0.0);
        let shift = rng.random_range(-5.0..5.0);
        let b = random_raw(&mut rng, nb, p, shift);
        let mut all = DMatrix::zeros(a.nrows() + b.nrows(), p + 2);
        all.rows_mut(0, a.nrows()).copy_from(&a);
        all.rows_mut(a.nrows(), b.nrows()).copy_from(&b);
        let pooled = pool_multivariate(&from_raw(&b, roles(p)).map_err(|e| e.to_string())?, &from_raw(&a, roles(p)).unwrap())
            .map_err(|e| e.to_string())?;
        let direct = from_raw(&all, roles(p)).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * y.abs().max(1.0);
        let ok = pooled.n() == direct.n()
            && pooled.means().iter().zip(direct.means().iter()).all(|(x, y)| close(*x, *y))
            && pooled.cov().iter().zip(direct.cov().iter()).all(|(x, y)| close(*x, *y));
        if !ok {
            return Err(format!("pooling case {case} disagrees with concatenation"));
        }
    }

    for case in 0..100 {
        let p = rng.random_range(0..=3);
        let n = rng.random_range(p + 4..40);
        let data = random_raw(&mut rng, n, p, 0.0);
        let oracle = ols_oracle(&data, &roles(p)).map_err(|e| e.to_string())?;
        let beta = beta_w_hat(&from_raw(&data, roles(p)).unwrap()).map_err(|e| e.to_string())?;
        let w = oracle[p + 1];
        if (beta - w).abs() > 1e-9 * w.abs().max(1.0) {
            return Err(format!("ols case {case}: moments {beta} vs oracle {w}"));
        }
    }

    let draws = 1_000_000u64;
    for case in 0..20u64 {
        let mean = rng.random_range(-3.0..3.0);
        let sd = rng.random_range(0.2..2.0);
        let dist = DeltaPosterior::new(mean, sd * sd).unwrap();
        let dir = if case % 2 == 0 { Direction::Positive } else { Direction::Negative };
        let rule = if case % 3 == 0 {
            DecisionRule::fixed(dir, rng.random_range(-2.0..2.0)).unwrap()
        } else {
            DecisionRule::statistical(dir, rng.random_range(1.0..2.5)).unwrap()
        };
        let exact = pev(&dist, &rule, Some(sd)).unwrap();
        let mc = mc_pev(&dist, &rule, Some(sd), draws, 1000 + case).unwrap();
        let band = 4.0 * (exact * (1.0 - exact) / draws as f64).sqrt();
        if (mc - exact).abs() > band {
            return Err(format!("mc case {case}: {mc} vs {exact} (band {band:.2e})"));
        }
    }

    let took = start.elapsed();
    if took >= Duration::from_secs(30) {
        return Err(format!("took {took:?}, limit 30s"));
    }
    Ok(format!("100 pooling, 100 ols, 20 mc cases in {took:?}"))
}

fn retest_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let reg = reading_regression();
    for case in 0..100 {
        let z = rng.random_range(1.0..3.0);
        let (dist, dir) = if case % 2 == 0 {
            let dir = if case % 4 == 0 { Direction::Positive } else { Direction::Negative };
            let (treated, control, alpha) = match dir {
                Direction::Positive => (615.0, 607.0, rng.random_range(0.993..1.01)),
                Direction::Negative => (607.0, 615.0, rng.random_range(0.99..1.007)),
            };
            let scn = SimpleScenario::new(
                GroupMoments::new(treated, 45.0, 27).unwrap(),
                GroupMoments::new(control, 45.0, 22).unwrap(),
                611.5,
                alpha,
                rng.random_range(0.2..1.0),
            )
            .unwrap();
            (delta_distribution_pi(&scn).unwrap(), dir)
        } else {
            (delta_distribution_reg(&reg, rng.random_range(0..400)).unwrap(), Direction::Positive)
        };
        let rule = DecisionRule::statistical(dir, z).unwrap();
        let r = retest(&dist, &rule).map_err(|e| e.to_string())?;
        let probit = normal::quantile(r.pev);
        let residual = match dir {
            Direction::Positive => probit + r.t_ratio - z,
            Direction::Negative => probit - r.t_ratio - z,
        };
        if residual.abs() > 1e-9 {
            return Err(format!("case {case}: identity residual {residual:e}"));
        }
        if r.pev + r.power != 1.0 {
            return Err(format!("case {case}: pev + power = {}", r.pev + r.power));
        }
    }
    Ok("100 scenarios".into())
}

fn trapezoid_below(x: &[f64], y: &[f64], cut: f64) -> f64 {
    let mut total = 0.0;
    for i in 1..x.len() {
        let (x0, x1) = (x[i - 1], x[i].min(cut));
        if x1 <= x0 {
            break;
        }
        let y1 = y[i - 1] + (y[i] - y[i - 1]) * (x1 - x0) / (x[i] - x0);
        total += 0.5 * (x1 - x0) * (y[i - 1] + y1);
    }
    total
}

fn curve_consistency() -> Outcome {
    let scn = reading_regression();
    let mut worst = 0f64;
    for n_un in [36, 91, 195] {
        let dist = delta_distribution_reg(&scn, n_un).unwrap();
        let c = curve_data(0.0, &dist, &positive(), 2048, 6.0).map_err(|e| e.to_string())?;
        let mass = trapezoid_below(&c.x, &c.ideal_density, c.delta_sharp);
        let err = (mass - c.pev).abs();
        worst = worst.max(err);
        if err > 0.002 {
            return Err(format!("n_un = {n_un}: quadrature {mass} vs pev {}", c.pev));
        }
    }
    Ok(format!("worst quadrature error {worst:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("alpha threshold sweep", alpha_sweep),
        ("pi_r threshold sweep", pi_sweep),
        ("unobserved-size threshold sweep", n_un_sweep),
        ("worked-example spot values", spot_values),
        ("probit coefficient recovery", coefficient_recovery),
        ("PEV interval bound", interval_bound),
        ("frequentist/Bayesian equivalence", bayes_equivalence),
        ("oracle suite", oracle_suite),
        ("retest identity", retest_identity),
        ("curve self-consistency", curve_consistency),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
