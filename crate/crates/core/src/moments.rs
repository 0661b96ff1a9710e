//! Summary moments of observed, unobserved and ideal samples.
//!
//! The ideal sample is the concatenation of the observed sample with a
//! hypothesized unobserved one. Everything downstream works from moments, so
//! pooling has to reproduce the moments of the concatenated raw data exactly.
//! Covariances use the population divisor `n` throughout.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};

const SYMMETRY_RTOL: f64 = 1e-12;
const PSD_FLOOR: f64 = 1e-10;

/// Mean, known variance and size of one arm of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMoments {
    mean: f64,
    variance: f64,
    n: u64,
}

impl GroupMoments {
    pub fn new(mean: f64, variance: f64, n: u64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(invalid("mean", format!("must be finite, got {mean}")));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(invalid("variance", format!("must be positive, got {variance}")));
        }
        Ok(Self { mean, variance, n })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Sampling variance of the arm mean, σ²/n.
    pub fn variance_of_mean(&self) -> f64 {
        self.variance / self.n as f64
    }
}

/// Unobserved share of the ideal sample, λ = n_un / (n_un + n_ob).
///
/// When built from counts the ratio is kept exact and only evaluated on
/// demand, so integer searches over `n_un` do not accumulate rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixFraction(Repr);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Repr {
    Counts { un: u64, ob: u64 },
    Value(f64),
}

impl MixFraction {
    pub fn from_counts(n_un: u64, n_ob: u64) -> Result<Self> {
        if n_ob == 0 {
            return Err(invalid("n_ob", "the observed sample must be non-empty"));
        }
        Ok(Self(Repr::Counts { un: n_un, ob: n_ob }))
    }

    pub fn from_value(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(invalid("lambda", format!("must lie in [0, 1], got {lambda}")));
        }
        Ok(Self(Repr::Value(lambda)))
    }

    /// λ
    pub fn value(&self) -> f64 {
        match self.0 {
            Repr::Counts { un, ob } => un as f64 / (un + ob) as f64,
            Repr::Value(v) => v,
        }
    }

    /// 1 − λ
    pub fn complement(&self) -> f64 {
        match self.0 {
            Repr::Counts { un, ob } => ob as f64 / (un + ob) as f64,
            Repr::Value(v) => 1.0 - v,
        }
    }

    /// The counts this fraction was built from, if any.
    pub fn counts(&self) -> Option<(u64, u64)> {
        match self.0 {
            Repr::Counts { un, ob } => Some((un, ob)),
            Repr::Value(_) => None,
        }
    }
}

pub fn mix_fraction(n_un: u64, n_ob: u64) -> Result<MixFraction> {
    MixFraction::from_counts(n_un, n_ob)
}

/// Size-weighted mean of two samples.
pub fn pool_mean(mean_un: f64, n_un: u64, mean_ob: f64, n_ob: u64) -> Result<f64> {
    match (n_un, n_ob) {
        (0, 0) => Err(invalid("n", "both samples are empty")),
        (0, _) => Ok(mean_ob),
        (_, 0) => Ok(mean_un),
        _ => {
            let total = (n_un + n_ob) as f64;
            Ok((n_un as f64 * mean_un + n_ob as f64 * mean_ob) / total)
        }
    }
}

/// Covariance of two variables on the concatenated sample, from the
/// per-sample covariances and means.
pub fn pool_covariance(
    cov_un: f64,
    cov_ob: f64,
    mean_a_un: f64,
    mean_a_ob: f64,
    mean_b_un: f64,
    mean_b_ob: f64,
    lam: MixFraction,
) -> f64 {
    let l = lam.value();
    let lc = lam.complement();
    l * cov_un + lc * cov_ob + lc * l * (mean_a_ob - mean_a_un) * (mean_b_ob - mean_b_un)
}

/// Labels for the variables of a regression design, laid out as
/// `[Y, W, Z_1, ..., Z_p]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableRoles {
    outcome: String,
    treatment: String,
    covariates: Vec<String>,
    binary_treatment: bool,
}

impl VariableRoles {
    pub const OUTCOME: usize = 0;
    pub const TREATMENT: usize = 1;
    pub const FIRST_COVARIATE: usize = 2;

    pub fn new(
        outcome: impl Into<String>,
        treatment: impl Into<String>,
        covariates: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self> {
        let roles = Self {
            outcome: outcome.into(),
            treatment: treatment.into(),
            covariates: covariates.into_iter().map(Into::into).collect(),
            binary_treatment: false,
        };
        let labels: Vec<&str> = roles.labels().collect();
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(invalid("variables", format!("duplicate label {a:?}")));
            }
        }
        Ok(roles)
    }

    /// Declares W binary, which bounds its variance by 1/4.
    pub fn with_binary_treatment(mut self, binary: bool) -> Self {
        self.binary_treatment = binary;
        self
    }

    pub fn binary_treatment(&self) -> bool {
        self.binary_treatment
    }

    /// Number of covariates, p.
    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    /// p + 2
    pub fn dim(&self) -> usize {
        self.covariates.len() + 2
    }

    pub fn outcome(&self) -> &str {
        &self.outcome
    }

    pub fn treatment(&self) -> &str {
        &self.treatment
    }

    pub fn covariates(&self) -> &[String] {
        &self.covariates
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        [self.outcome.as_str(), self.treatment.as_str()]
            .into_iter()
            .chain(self.covariates.iter().map(String::as_str))
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels().position(|l| l == label)
    }
}

/// Means and divisor-`n` covariance matrix over `[Y, W, Z_1, ..., Z_p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateMoments {
    roles: VariableRoles,
    means: DVector<f64>,
    cov: DMatrix<f64>,
    n: u64,
}

impl MultivariateMoments {
    /// Validates and stores the moments. The covariance is symmetrized after
    /// the symmetry check passes.
    pub fn new(roles: VariableRoles, means: DVector<f64>, cov: DMatrix<f64>, n: u64) -> Result<Self> {
        let k = roles.dim();
        if means.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: means.len(),
            });
        }
        if cov.nrows() != k || cov.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: if cov.nrows() != k { cov.nrows() } else { cov.ncols() },
            });
        }
        if means.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("moments", "all means and covariances must be finite"));
        }

        let scale = cov.amax();
        for i in 0..k {
            for j in 0..i {
                let (a, b) = (cov[(i, j)], cov[(j, i)]);
                if (a - b).abs() > SYMMETRY_RTOL * scale {
                    return Err(invalid(
                        "cov",
                        format!("not symmetric at ({i}, {j}): {a} vs {b}"),
                    ));
                }
            }
        }
        let cov = (&cov + cov.transpose()) * 0.5;

        check_psd(&cov)?;

        if roles.binary_treatment() {
            let w = cov[(VariableRoles::TREATMENT, VariableRoles::TREATMENT)];
            if !(-1e-12..=0.25 + 1e-12).contains(&w) {
                return Err(invalid(
                    "cov",
                    format!("binary treatment variance must lie in [0, 0.25], got {w}"),
                ));
            }
        }

        Ok(Self { roles, means, cov, n })
    }

    pub fn roles(&self) -> &VariableRoles {
        &self.roles
    }

    pub fn means(&self) -> &DVector<f64> {
        &self.means
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p(&self) -> usize {
        self.roles.p()
    }

    /// Same moments attributed to a sample of size `n`.
    pub fn with_n(&self, n: u64) -> Self {
        Self { n, ..self.clone() }
    }

    /// Replaces one mean.
    pub fn with_mean(&self, index: usize, value: f64) -> Result<Self> {
        let mut means = self.means.clone();
        *means
            .get_mut(index)
            .ok_or_else(|| invalid("mean", format!("index {index} out of range")))? = value;
        Self::new(self.roles.clone(), means, self.cov.clone(), self.n)
    }

    /// Replaces one covariance entry (and its mirror), re-validating PSD.
    pub fn with_cov_entry(&self, i: usize, j: usize, value: f64) -> Result<Self> {
        let k = self.roles.dim();
        if i >= k || j >= k {
            return Err(invalid("cov", format!("entry ({i}, {j}) out of range")));
        }
        let mut cov = self.cov.clone();
        cov[(i, j)] = value;
        cov[(j, i)] = value;
        Self::new(self.roles.clone(), self.means.clone(), cov, self.n)
    }

    pub fn sigma_ww(&self) -> f64 {
        self.cov[(VariableRoles::TREATMENT, VariableRoles::TREATMENT)]
    }

    pub fn sigma_wy(&self) -> f64 {
        self.cov[(VariableRoles::TREATMENT, VariableRoles::OUTCOME)]
    }

    /// S_ZZ, the p×p covariate block.
    pub fn s_zz(&self) -> DMatrix<f64> {
        let p = self.p();
        self.cov
            .view((VariableRoles::FIRST_COVARIATE, VariableRoles::FIRST_COVARIATE), (p, p))
            .into_owned()
    }

    /// S_ZW as a column.
    pub fn s_zw(&self) -> DVector<f64> {
        self.covariate_column(VariableRoles::TREATMENT)
    }

    /// S_ZY as a column.
    pub fn s_zy(&self) -> DVector<f64> {
        self.covariate_column(VariableRoles::OUTCOME)
    }

    fn covariate_column(&self, col: usize) -> DVector<f64> {
        let p = self.p();
        self.cov
            .view((VariableRoles::FIRST_COVARIATE, col), (p, 1))
            .column(0)
            .into_owned()
    }
}

fn check_psd(cov: &DMatrix<f64>) -> Result<()> {
    if cov.is_empty() {
        return Ok(());
    }
    let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
    let largest = eig.amax();
    let smallest = eig.min();
    if smallest < -PSD_FLOOR * largest {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: smallest,
        });
    }
    Ok(())
}

/// Moments of the concatenation of two samples sharing the same roles.
pub fn pool_multivariate(
    un: &MultivariateMoments,
    ob: &MultivariateMoments,
) -> Result<MultivariateMoments> {
    if un.roles != ob.roles {
        let un_labels: Vec<_> = un.roles.labels().collect();
        let ob_labels: Vec<_> = ob.roles.labels().collect();
        return Err(Error::RoleMismatch(format!(
            "unobserved {un_labels:?} vs observed {ob_labels:?}"
        )));
    }
    match (un.n, ob.n) {
        (0, 0) => return Err(invalid("n", "both samples are empty")),
        (0, _) => return Ok(ob.clone()),
        (_, 0) => return Ok(un.clone()),
        _ => {}
    }

    let lam = mix_fraction(un.n, ob.n)?;
    let k = un.roles.dim();
    let means = DVector::from_fn(k, |i, _| {
        pool_mean(un.means[i], un.n, ob.means[i], ob.n).expect("sizes checked above")
    });
    let cov = DMatrix::from_fn(k, k, |i, j| {
        pool_covariance(
            un.cov[(i, j)],
            ob.cov[(i, j)],
            un.means[i],
            ob.means[i],
            un.means[j],
            ob.means[j],
            lam,
        )
    });
    MultivariateMoments::new(un.roles.clone(), means, cov, un.n + ob.n)
}

/// Moments of a raw `n × (p+2)` data matrix whose columns follow `roles`.
pub fn from_raw(data: &DMatrix<f64>, roles: VariableRoles) -> Result<MultivariateMoments> {
    let n = data.nrows();
    if n == 0 {
        return Err(invalid("data", "at least one row is required"));
    }
    if data.ncols() != roles.dim() {
        return Err(Error::DimensionMismatch {
            expected: roles.dim(),
            found: data.ncols(),
        });
    }
    let nf = n as f64;
    let means = DVector::from_iterator(data.ncols(), data.column_iter().map(|c| c.sum() / nf));
    let mut centered = data.clone();
    for (mut col, m) in centered.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-m);
    }
    let cov = centered.tr_mul(&centered) / nf;
    MultivariateMoments::new(roles, means, cov, n as u64)
}
