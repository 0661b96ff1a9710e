//! Covariate-adjusted regression estimator.
//!
//! The effect is the coefficient of the treatment indicator W in the OLS
//! regression of Y on `[1, Z_1..Z_p, W]`. Everything is computed from
//! summary moments: the W coefficient is
//!
//! ```text
//! (σ_WY − S_WZ S_ZZ⁻¹ S_ZY) / (σ_WW − S_WZ S_ZZ⁻¹ S_ZW)
//! ```
//!
//! and its known-σ² variance is `σ² / (n · (σ_WW − S_WZ S_ZZ⁻¹ S_ZW))`. The
//! denominator is the Schur complement of S_ZZ in the predictor covariance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::moments::{pool_multivariate, MultivariateMoments, VariableRoles};
use crate::simple::{DecisionRule, DeltaPosterior, Direction, ThresholdMode};

/// Largest accepted condition estimate of S_ZZ.
pub const MAX_CONDITION: f64 = 1e12;

/// Observed moments, hypothesized unobserved moments and the known residual
/// variance σ².
///
/// The size recorded on `unobserved` is its default `n_un`; routines that take
/// an explicit `n_un` override it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionScenario {
    observed: MultivariateMoments,
    unobserved: MultivariateMoments,
    sigma2: f64,
}

impl RegressionScenario {
    pub fn new(observed: MultivariateMoments, unobserved: MultivariateMoments, sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(invalid("sigma2", format!("must be positive, got {sigma2}")));
        }
        if observed.roles() != unobserved.roles() {
            return Err(Error::RoleMismatch(
                "observed and unobserved moments must share variables and order".into(),
            ));
        }
        if observed.n() == 0 {
            return Err(invalid("observed", "the observed sample must be non-empty"));
        }
        Ok(Self {
            observed,
            unobserved,
            sigma2,
        })
    }

    pub fn observed(&self) -> &MultivariateMoments {
        &self.observed
    }

    pub fn unobserved(&self) -> &MultivariateMoments {
        &self.unobserved
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn with_unobserved(&self, unobserved: MultivariateMoments) -> Result<Self> {
        Self::new(self.observed.clone(), unobserved, self.sigma2)
    }

    /// Moments of the ideal sample with `n_un` unobserved units.
    pub fn ideal_moments(&self, n_un: u64) -> Result<MultivariateMoments> {
        pool_multivariate(&self.unobserved.with_n(n_un), &self.observed)
    }
}

/// Numerator and denominator of the W coefficient.
#[derive(Debug, Clone, Copy)]
struct SchurParts {
    /// σ_WW − S_WZ S_ZZ⁻¹ S_ZW
    precision: f64,
    /// σ_WY − S_WZ S_ZZ⁻¹ S_ZY
    cross: f64,
}

fn covariate_factor(m: &MultivariateMoments) -> Result<Option<Cholesky<f64, Dyn>>> {
    if m.p() == 0 {
        return Ok(None);
    }
    let s_zz = m.s_zz();
    let eig = SymmetricEigen::new(s_zz.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.amax());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::SingularCovariates { condition });
    }
    Cholesky::new(s_zz)
        .map(Some)
        .ok_or(Error::SingularCovariates { condition })
}

fn schur_parts(m: &MultivariateMoments) -> Result<SchurParts> {
    let (mut precision, mut cross) = (m.sigma_ww(), m.sigma_wy());
    if let Some(chol) = covariate_factor(m)? {
        let s_zw = m.s_zw();
        let b_w = chol.solve(&s_zw);
        let b_y = chol.solve(&m.s_zy());
        precision -= s_zw.dot(&b_w);
        cross -= s_zw.dot(&b_y);
    }
    if precision.is_nan() || precision <= (1e-12 * m.sigma_ww()).max(0.0) {
        return Err(Error::CollinearTreatment { value: precision });
    }
    Ok(SchurParts { precision, cross })
}

/// σ_WW − S_WZ S_ZZ⁻¹ S_ZW, the residual variance of W after projecting on Z.
pub fn schur_precision(m: &MultivariateMoments) -> Result<f64> {
    schur_parts(m).map(|s| s.precision)
}

/// OLS coefficient of W computed from moments.
pub fn beta_w_hat(m: &MultivariateMoments) -> Result<f64> {
    schur_parts(m).map(|s| s.cross / s.precision)
}

/// Ideal-sample law of the W coefficient with `n_un` unobserved units.
pub fn delta_distribution_reg(scn: &RegressionScenario, n_un: u64) -> Result<DeltaPosterior> {
    let ideal = scn.ideal_moments(n_un)?;
    let parts = schur_parts(&ideal)?;
    let n = ideal.n() as f64;
    DeltaPosterior::new(parts.cross / parts.precision, scn.sigma2 / n / parts.precision)
}

pub fn se_ideal_reg(scn: &RegressionScenario, n_un: u64) -> Result<f64> {
    delta_distribution_reg(scn, n_un).map(|d| d.sd())
}

/// Φ⁻¹(PEV) for the regression estimator.
pub fn probit_pev_reg(scn: &RegressionScenario, n_un: u64, rule: &DecisionRule) -> Result<f64> {
    let ideal = scn.ideal_moments(n_un)?;
    let parts = schur_parts(&ideal)?;
    let scale = (ideal.n() as f64).sqrt() / (scn.sigma2.sqrt() * parts.precision.sqrt());
    let probit = match (rule.mode(), rule.direction()) {
        (ThresholdMode::Fixed(d), Direction::Positive) => scale * (d * parts.precision - parts.cross),
        (ThresholdMode::Fixed(d), Direction::Negative) => scale * (parts.cross - d * parts.precision),
        (ThresholdMode::Statistical { z }, Direction::Positive) => z - scale * parts.cross,
        (ThresholdMode::Statistical { z }, Direction::Negative) => z + scale * parts.cross,
    };
    Ok(probit)
}

/// Gaussian posterior of the full coefficient vector, ordered
/// `[intercept, Z_1..Z_p, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPosterior {
    labels: Vec<String>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl CoefficientPosterior {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Marginal law of the W coefficient.
    pub fn w_marginal(&self) -> Result<DeltaPosterior> {
        let last = self.mean.len() - 1;
        DeltaPosterior::new(self.mean[last], self.covariance[(last, last)])
    }
}

fn coefficient_labels(roles: &VariableRoles) -> Vec<String> {
    std::iter::once("(intercept)".to_string())
        .chain(roles.covariates().iter().cloned())
        .chain(std::iter::once(roles.treatment().to_string()))
        .collect()
}

/// Design ordering `[1, Z, W]` expressed as indices into the moment layout.
fn predictor_indices(roles: &VariableRoles) -> Vec<usize> {
    (VariableRoles::FIRST_COVARIATE..roles.dim())
        .chain(std::iter::once(VariableRoles::TREATMENT))
        .collect()
}

/// XᵀX of a sample rebuilt from its moments, for the design `[1, Z, W]`.
pub fn cross_product_from_moments(m: &MultivariateMoments) -> DMatrix<f64> {
    let idx = predictor_indices(m.roles());
    let k = idx.len() + 1;
    let n = m.n() as f64;
    let vbar: Vec<f64> = idx.iter().map(|&i| m.means()[i]).collect();
    DMatrix::from_fn(k, k, |r, c| match (r, c) {
        (0, 0) => n,
        (0, c) => n * vbar[c - 1],
        (r, 0) => n * vbar[r - 1],
        (r, c) => n * (m.cov()[(idx[r - 1], idx[c - 1])] + vbar[r - 1] * vbar[c - 1]),
    })
}

/// XᵀY of a sample rebuilt from its moments.
pub fn cross_response_from_moments(m: &MultivariateMoments) -> DVector<f64> {
    let idx = predictor_indices(m.roles());
    let n = m.n() as f64;
    let y = VariableRoles::OUTCOME;
    let ybar = m.means()[y];
    DVector::from_iterator(
        idx.len() + 1,
        std::iter::once(n * ybar).chain(
            idx.iter()
                .map(|&i| n * (m.cov()[(i, y)] + m.means()[i] * ybar)),
        ),
    )
}

/// (XᵀX)⁻¹ assembled blockwise: the predictor-covariance inverse comes from
/// the Schur complement of S_ZZ, and the intercept row/column from the means.
pub fn xtx_inverse_from_moments(m: &MultivariateMoments) -> Result<DMatrix<f64>> {
    let p = m.p();
    let n = m.n() as f64;
    if m.n() == 0 {
        return Err(invalid("n", "sample is empty"));
    }
    let parts = schur_parts(m)?;
    let inv_schur = 1.0 / parts.precision;

    // S_VV⁻¹ over V = [Z, W]
    let mut svv_inv = DMatrix::zeros(p + 1, p + 1);
    if let Some(chol) = covariate_factor(m)? {
        let szz_inv = chol.inverse();
        let g = &szz_inv * m.s_zw();
        let top_left = &szz_inv + &g * g.transpose() * inv_schur;
        svv_inv.view_mut((0, 0), (p, p)).copy_from(&top_left);
        for i in 0..p {
            svv_inv[(i, p)] = -g[i] * inv_schur;
            svv_inv[(p, i)] = -g[i] * inv_schur;
        }
    }
    svv_inv[(p, p)] = inv_schur;

    let idx = predictor_indices(m.roles());
    let vbar = DVector::from_iterator(p + 1, idx.iter().map(|&i| m.means()[i]));
    let s_vbar = &svv_inv * &vbar;

    let mut out = DMatrix::zeros(p + 2, p + 2);
    out[(0, 0)] = (1.0 + vbar.dot(&s_vbar)) / n;
    for i in 0..=p {
        out[(0, i + 1)] = -s_vbar[i] / n;
        out[(i + 1, 0)] = -s_vbar[i] / n;
    }
    out.view_mut((1, 1), (p + 1, p + 1)).copy_from(&(svv_inv / n));
    Ok(out)
}

/// All OLS coefficients `[intercept, Z, W]` from moments.
pub fn ols_from_moments(m: &MultivariateMoments) -> Result<DVector<f64>> {
    Ok(xtx_inverse_from_moments(m)? * cross_response_from_moments(m))
}

/// Conjugate posterior of the coefficients: the prior is the OLS law on the
/// unobserved moments, updated with the observed sample's likelihood.
pub fn posterior_bayes_reg(scn: &RegressionScenario, n_un: u64) -> Result<CoefficientPosterior> {
    let k = scn.observed.roles().dim();
    if n_un < k as u64 {
        return Err(invalid(
            "n_un",
            format!("at least {k} unobserved units are needed for a proper prior"),
        ));
    }
    let un = scn.unobserved.with_n(n_un);
    let xtx_un = cross_product_from_moments(&un);
    let xty_un = cross_response_from_moments(&un);
    let chol_un = Cholesky::new(xtx_un.clone()).ok_or(Error::Singular("unobserved cross-product"))?;
    let prior_mean = chol_un.solve(&xty_un);
    let prior_precision = xtx_un / scn.sigma2;

    let xtx_ob = cross_product_from_moments(&scn.observed);
    let xty_ob = cross_response_from_moments(&scn.observed);

    let precision = &prior_precision + xtx_ob / scn.sigma2;
    let chol = Cholesky::new(precision).ok_or(Error::Singular("posterior precision"))?;
    let rhs = &prior_precision * prior_mean + xty_ob / scn.sigma2;
    let mean = chol.solve(&rhs);
    let covariance = chol.inverse();

    Ok(CoefficientPosterior {
        labels: coefficient_labels(scn.observed.roles()),
        mean,
        covariance,
    })
}
