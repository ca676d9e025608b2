//! Error-budget arithmetic: how relative errors compose through products,
//! quotients and positive sums, how a target error is split across factors,
//! and how a confidence target is shared out across aggregates and groups.

use crate::stats::{Probability, StatsError};

/// Target maximum relative error `e` with confidence `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSpec {
    pub e: f64,
    pub p: f64,
}

impl ErrorSpec {
    pub fn new(e: f64, p: f64) -> Result<Self, StatsError> {
        if !(e > 0.0 && e < 1.0) {
            return Err(StatsError::Domain(format!("relative error {e} must lie in (0,1)")));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(StatsError::Domain(format!("confidence {p} must lie in (0,1)")));
        }
        Ok(ErrorSpec { e, p })
    }
}

/// Budget for one (aggregate, group) estimate. `p_prime` is the confidence
/// demanded of the normal approximation once the two bound failures
/// (`delta1` for the mean, `delta2` for the variance) are paid for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerAggregateBudget {
    pub e_ij: f64,
    pub p_ij: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub p_prime: f64,
}

pub fn propagate_product(e1: f64, e2: f64) -> f64 {
    e1 + e2 + e1 * e2
}

/// The standard quotient rule. It under-covers the case where the
/// denominator is underestimated; see [`propagate_quotient_tight`].
pub fn propagate_quotient(e1: f64, e2: f64) -> f64 {
    (e1 + e2) / (1.0 + e1.min(e2))
}

/// Worst case of |(1+a)/(1+b) − 1| over |a| ≤ e1, |b| ≤ e2, reached at
/// a = e1, b = −e2. This is the rule the planner budgets with.
pub fn propagate_quotient_tight(e1: f64, e2: f64) -> f64 {
    (e1 + e2) / (1.0 - e2)
}

/// Valid for linear combinations with positive coefficients only.
pub fn propagate_sum(e1: f64, e2: f64) -> f64 {
    e1.max(e2)
}

/// Even split across two factors: the e' with propagate_product(e', e') = e.
pub fn split_relative_error_product(e: f64) -> f64 {
    (1.0 + e).sqrt() - 1.0
}

/// Even split across a quotient: the e' with propagate_quotient_tight(e', e') = e.
pub fn split_relative_error_quotient(e: f64) -> f64 {
    e / (2.0 + e)
}

/// A positive sum inherits the largest child error, so each child may use all of it.
pub fn split_relative_error_sum(e: f64) -> f64 {
    e
}

/// Boole allocation of confidence `p` over k aggregates and m groups.
pub fn allocate_confidence(p: f64, k: usize, m: usize) -> Result<f64, StatsError> {
    Probability::new(p)?;
    if k == 0 || m == 0 {
        return Err(StatsError::Domain("allocation needs k, m >= 1".into()));
    }
    Ok(1.0 - (1.0 - p) / (k * m) as f64)
}

/// δ1 = δ2 = 1 − p' = (1 − p_ij)/3.
pub fn default_delta_split(e_ij: f64, p_ij: f64) -> Result<PerAggregateBudget, StatsError> {
    if !(p_ij > 0.0 && p_ij < 1.0) {
        return Err(StatsError::Domain(format!("p_ij={p_ij} must lie in (0,1)")));
    }
    delta_split(e_ij, p_ij, 1.0 / 3.0, 1.0 / 3.0)
}

/// General split: δ1 = f1·(1−p_ij), δ2 = f2·(1−p_ij), p' = p_ij + δ1 + δ2.
pub fn delta_split(e_ij: f64, p_ij: f64, f1: f64, f2: f64) -> Result<PerAggregateBudget, StatsError> {
    if !(f1 > 0.0 && f2 > 0.0 && f1 + f2 < 1.0) {
        return Err(StatsError::Domain(format!("delta fractions {f1}, {f2} must be positive with sum < 1")));
    }
    let slack = 1.0 - p_ij;
    let delta1 = f1 * slack;
    let delta2 = f2 * slack;
    Ok(PerAggregateBudget { e_ij, p_ij, delta1, delta2, p_prime: p_ij + delta1 + delta2 })
}
