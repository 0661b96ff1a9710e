//! Text and CSV rendering.

use std::fmt::Write as _;

use pev_core::power::CurveData;
use pev_core::solvers::{Bound, FocalParameter, FocalValue, RowOutcome, ThresholdRow};

/// Decimal places: 4 for probabilities and ratios, 2 for effect-scale
/// quantities, shortest round-trip for raw curve values. `--precision`
/// replaces all of them.
#[derive(Debug, Clone, Copy)]
pub struct Format {
    pub precision: Option<usize>,
}

impl Format {
    fn fixed(&self, x: f64, default: usize) -> String {
        format!("{x:.*}", self.precision.unwrap_or(default))
    }

    pub fn prob(&self, x: f64) -> String {
        self.fixed(x, 4)
    }

    pub fn ratio(&self, x: f64) -> String {
        self.fixed(x, 4)
    }

    pub fn effect(&self, x: f64) -> String {
        self.fixed(x, 2)
    }

    pub fn raw(&self, x: f64) -> String {
        match self.precision {
            Some(p) => format!("{x:.p$}"),
            None => format!("{x}"),
        }
    }
}

/// Fields of a point evaluation.
pub struct PointReport {
    pub pev: f64,
    pub delta_id: f64,
    pub se_ideal: f64,
    /// T-ratio and power; absent for a fixed threshold.
    pub retest: Option<(f64, f64)>,
    pub mc: Option<(f64, u64, u64)>,
}

pub fn point(fmt: &Format, r: &PointReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "pev: {}", fmt.prob(r.pev));
    let _ = writeln!(s, "delta_id: {}", fmt.effect(r.delta_id));
    let _ = writeln!(s, "se_ideal: {}", fmt.effect(r.se_ideal));
    match r.retest {
        Some((t, power)) => {
            let _ = writeln!(s, "t_ratio: {}", fmt.ratio(t));
            let _ = writeln!(s, "power: {}", fmt.prob(power));
        }
        None => {
            s.push_str("t_ratio: n/a (fixed threshold)\n");
            s.push_str("power: n/a (fixed threshold)\n");
        }
    }
    if let Some((p, draws, seed)) = r.mc {
        let _ = writeln!(s, "mc_pev: {} ({draws} draws, seed {seed})", fmt.prob(p));
    }
    s
}

/// Sweep table. Threshold columns that do not apply to the focal are left out.
pub fn sweep_csv(fmt: &Format, focal: &FocalParameter, rows: &[ThresholdRow]) -> String {
    let with_aux = matches!(focal, FocalParameter::Alpha);
    let mut s = String::from(if with_aux {
        "pev,threshold,ybar_t_un,effect_un,delta_id\n"
    } else {
        "pev,threshold,delta_id\n"
    });
    let blanks = if with_aux { ",,," } else { "," };
    let mut notes = Vec::new();
    for row in rows {
        let target = fmt.prob(row.pev_target);
        match &row.outcome {
            RowOutcome::Found(t) => {
                let threshold = match (focal, t.focal) {
                    (_, FocalValue::Count(n)) => n.to_string(),
                    (FocalParameter::Custom { .. }, FocalValue::Real(v)) => fmt.ratio(v),
                    (_, FocalValue::Real(v)) => fmt.prob(v),
                };
                let _ = write!(s, "{target},{threshold}");
                if with_aux {
                    let cell = |v: Option<f64>| v.map(|x| fmt.effect(x)).unwrap_or_default();
                    let _ = write!(s, ",{},{}", cell(t.ybar_t_un), cell(t.effect_un));
                }
                let _ = writeln!(s, ",{}", fmt.effect(t.delta_id));
                notes.extend(t.notes.iter().map(|n| format!("# note {target}: {n}")));
            }
            RowOutcome::Infeasible(why) => {
                let _ = writeln!(s, "{target},infeasible{blanks}");
                notes.push(format!("# note {target}: {why}"));
            }
            RowOutcome::Failed(e) => {
                let _ = writeln!(s, "{target},error{blanks}");
                notes.push(format!("# error {target}: {e}"));
            }
        }
    }
    for n in notes {
        s.push_str(&n);
        s.push('\n');
    }
    s
}

pub const CURVE_HEADER: &str = "x,null_density,ideal_density,scenario_id\n";

pub fn curve_block(fmt: &Format, id: usize, label: &str, c: &CurveData) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# scenario_id={id} {label} delta_sharp={} pev={}",
        fmt.raw(c.delta_sharp),
        fmt.prob(c.pev)
    );
    for i in 0..c.x.len() {
        let _ = writeln!(
            s,
            "{},{},{},{id}",
            fmt.raw(c.x[i]),
            fmt.raw(c.null_density[i]),
            fmt.raw(c.ideal_density[i])
        );
    }
    s
}

pub fn bound(fmt: &Format, b: &Bound) -> String {
    let mut s = String::new();
    if !b.monotone {
        s.push_str("warning: not monotone over the interval; ranges are the envelope over a dense grid\n");
    }
    let _ = writeln!(s, "pev: [{}, {}]", fmt.prob(b.pev.0), fmt.prob(b.pev.1));
    let _ = writeln!(s, "delta_id: [{}, {}]", fmt.effect(b.delta_id.0), fmt.effect(b.delta_id.1));
    s
}
