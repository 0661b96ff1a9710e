//! Independent checks for the closed-form routes.
//!
//! Nothing in the analysis path calls into this module. It exists so tests can
//! compare moment algebra against raw data and closed-form probabilities
//! against simulation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::moments::{MultivariateMoments, VariableRoles};
use crate::simple::{DecisionRule, DeltaPosterior, Direction};

/// Draws per shard. Shard `i` uses ChaCha8 stream `i` of the seed, so the
/// estimate does not depend on how shards are scheduled.
const SHARD: u64 = 1 << 16;

/// Monte-Carlo estimate of the PEV: the share of draws from the ideal-sample
/// law that land on the fail-to-reject side of δ#.
pub fn mc_pev(dist: &DeltaPosterior, rule: &DecisionRule, se_ideal: Option<f64>, draws: u64, seed: u64) -> Result<f64> {
    if draws == 0 {
        return Err(invalid("draws", "must be at least 1"));
    }
    let delta_sharp = rule.delta_sharp(se_ideal)?;
    let (mean, sd) = (dist.mean(), dist.sd());
    let direction = rule.direction();
    let shards = draws.div_ceil(SHARD);
    let hits: u64 = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            let count = SHARD.min(draws - shard * SHARD);
            (0..count)
                .filter(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let x = mean + sd * z;
                    match direction {
                        Direction::Positive => x < delta_sharp,
                        Direction::Negative => x > delta_sharp,
                    }
                })
                .count() as u64
        })
        .sum();
    Ok(hits as f64 / draws as f64)
}

/// Raw data whose divisor-`n` moments reproduce `target`.
pub fn synth_raw(target: &MultivariateMoments) -> Result<DMatrix<f64>> {
    synth_raw_seeded(target, 0x5eed)
}

/// [`synth_raw`] with an explicit seed for the base design.
///
/// A random base design is centered and orthonormalized, which gives `k`
/// orthonormal columns orthogonal to the intercept. Scaling by √n and
/// recoloring with the symmetric square root of the target covariance then
/// hits the covariance exactly; adding the target means hits the means.
pub fn synth_raw_seeded(target: &MultivariateMoments, seed: u64) -> Result<DMatrix<f64>> {
    let k = target.roles().dim();
    let n = target.n() as usize;
    if n < k + 1 {
        return Err(invalid(
            "n",
            format!("need at least {} rows for {k} variables, got {n}", k + 1),
        ));
    }

    let root = symmetric_sqrt(target.cov())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base: DMatrix<f64> = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    for mut col in base.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let qr = base.qr();
    let r_diag = qr.r().diagonal();
    if r_diag.iter().any(|d| d.abs() < 1e-8) {
        return Err(Error::Singular("synthetic base design"));
    }
    let q = qr.q();

    let mut data = q * root * (n as f64).sqrt();
    for (mut col, m) in data.column_iter_mut().zip(target.means().iter()) {
        col.add_scalar_mut(*m);
    }
    Ok(data)
}

/// Symmetric square root, clipping eigenvalues below 1e-10 of the spectral
/// norm to zero.
fn symmetric_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(cov.clone());
    let floor = 1e-10 * eig.eigenvalues.amax();
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -floor {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: *v });
        }
        *v = if *v < floor { 0.0 } else { v.sqrt() };
    }
    let vecs = &eig.eigenvectors;
    Ok(vecs * DMatrix::from_diagonal(&roots) * vecs.transpose())
}

/// OLS coefficients `[intercept, Z_1..Z_p, W]` from the normal equations on
/// raw data whose columns follow `roles`.
pub fn ols_oracle(data: &DMatrix<f64>, roles: &VariableRoles) -> Result<DVector<f64>> {
    let k = roles.dim();
    if data.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: data.ncols(),
        });
    }
    let n = data.nrows();
    let mut design = DMatrix::zeros(n, k);
    design.column_mut(0).fill(1.0);
    for j in 0..roles.p() {
        design
            .column_mut(1 + j)
            .copy_from(&data.column(VariableRoles::FIRST_COVARIATE + j));
    }
    design
        .column_mut(k - 1)
        .copy_from(&data.column(VariableRoles::TREATMENT));
    let y = data.column(VariableRoles::OUTCOME).into_owned();

    let xtx = design.transpose() * &design;
    let sv = xtx.singular_values();
    if n < k || sv.min() <= 1e-12 * sv.max() {
        return Err(Error::Singular("design is rank deficient"));
    }
    let xty = design.transpose() * y;
    xtx.lu()
        .solve(&xty)
        .ok_or(Error::Singular("normal equations"))
}
