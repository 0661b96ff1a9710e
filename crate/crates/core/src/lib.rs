//! Robustness of randomized-experiment inferences to limited external validity.
//!
//! The observed sample is merged with a hypothesized unobserved sample into an
//! ideal sample. The PEV is the probability, under the ideal-sample law of the
//! treatment effect, of failing to reject the null hypothesis that was
//! rejected on the observed sample. This crate computes that law for the
//! group-mean-difference and covariate-adjusted regression estimators, solves
//! for the unobserved-sample parameters at which the PEV crosses a target, and
//! links the PEV to the power of a retest on the ideal sample.

pub mod error;
pub mod moments;
pub mod normal;
pub mod oracle;
pub mod power;
pub mod regression;
pub mod simple;
pub mod solvers;

pub use error::{Error, Result};
pub use moments::{GroupMoments, MixFraction, MultivariateMoments, VariableRoles};
pub use regression::{CoefficientPosterior, RegressionScenario};
pub use simple::{DecisionRule, DeltaPosterior, Direction, SimpleScenario, ThresholdMode};
