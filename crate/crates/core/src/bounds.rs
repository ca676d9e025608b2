//! Probabilistic bounds from a pilot sample: a lower bound on the mean, an
//! upper bound on the final estimator's variance (chained through lower
//! bounds on the population and final sample sizes), the pilot rate that
//! keeps large groups from being missed, and the block-vs-row efficiency
//! ratio.

use crate::stats::{quantile_chi2, quantile_normal, quantile_student_t, StatsError};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("nonpositive mean bound {0}: relative error is undefined")]
    NonPositiveMean(f64),
    #[error("rate {0} too small to bound the final sample size away from 0")]
    InfeasibleRate(f64),
}

pub type Result<T> = std::result::Result<T, BoundsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleUnit {
    Row,
    Block,
}

/// Per-unit summary of a pilot sample. With `unit = Block` each observation
/// is one sampled block's aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotSummary {
    pub theta_p: f64,
    pub n_p: u64,
    pub mean_p: f64,
    pub var_p: f64,
    pub unit: SampleUnit,
    pub block_size: u64,
}

impl PilotSummary {
    pub fn new(theta_p: f64, n_p: u64, mean_p: f64, var_p: f64, unit: SampleUnit, block_size: u64) -> Result<Self> {
        if !(theta_p > 0.0 && theta_p <= 1.0) {
            return Err(StatsError::Domain(format!("pilot rate {theta_p} must lie in (0,1]")).into());
        }
        if n_p < 2 {
            return Err(StatsError::InsufficientSample { need: 2, got: n_p }.into());
        }
        if !(var_p >= 0.0) || !mean_p.is_finite() || !var_p.is_finite() {
            return Err(StatsError::Domain(format!("bad pilot moments mean={mean_p} var={var_p}")).into());
        }
        let block_size = if unit == SampleUnit::Row { 1 } else { block_size.max(1) };
        Ok(PilotSummary { theta_p, n_p, mean_p, var_p, unit, block_size })
    }
}

/// Bounds together with the failure probabilities they were built under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSet {
    pub l_mu: f64,
    pub u_v: f64,
    pub l_n: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl BoundSet {
    /// Mean and variance bounds for a final sample at rate `theta`.
    pub fn single(pilot: &PilotSummary, theta: f64, delta1: f64, delta2: f64) -> Result<Self> {
        Ok(BoundSet {
            l_mu: lower_bound_mean(pilot, delta1)?,
            u_v: upper_bound_variance_single(pilot, theta, delta2)?,
            l_n: lower_bound_population(pilot, delta2)?,
            delta1,
            delta2,
        })
    }
}

fn open_unit(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x < 1.0 {
        Ok(x)
    } else {
        Err(StatsError::Domain(format!("{name}={x} must lie in (0,1)")).into())
    }
}

/// μ̂_p − t_{n_p−1,1−δ1}·σ̂_p/√n_p; an error when the bound is not positive.
pub fn lower_bound_mean(pilot: &PilotSummary, delta1: f64) -> Result<f64> {
    let delta1 = open_unit("delta1", delta1)?;
    let t = quantile_student_t(pilot.n_p - 1, 1.0 - delta1)?;
    let l = pilot.mean_p - t * pilot.var_p.sqrt() / (pilot.n_p as f64).sqrt();
    if l > 0.0 {
        Ok(l)
    } else {
        Err(BoundsError::NonPositiveMean(l))
    }
}

/// Lower bound on the population unit count N given that n_p ~ Bin(N, θ_p)
/// was observed; `z` is the normal critical value.
pub fn population_lower_bound(n_p: f64, theta_p: f64, z: f64) -> f64 {
    if theta_p >= 1.0 {
        return n_p;
    }
    let a = n_p / theta_p;
    let b = z * z * (1.0 - theta_p) / (4.0 * theta_p);
    // (√(a+b) − √b)² written without cancellation.
    let d = a / ((a + b).sqrt() + b.sqrt());
    d * d
}

/// L_N with z = z_{1−δ/3}.
pub fn lower_bound_population(pilot: &PilotSummary, delta: f64) -> Result<f64> {
    let delta = open_unit("delta", delta)?;
    let z = quantile_normal(1.0 - delta / 3.0)?;
    Ok(population_lower_bound(pilot.n_p as f64, pilot.theta_p, z))
}

/// L_N·θ − z_{1−δ/3}·√(L_N·θ(1−θ)), floored at 0.
pub fn lower_bound_sample_size(l_n: f64, theta: f64, delta: f64) -> Result<f64> {
    let delta = open_unit("delta", delta)?;
    if !(theta > 0.0 && theta <= 1.0) || !(l_n >= 0.0) {
        return Err(StatsError::Domain(format!("bad inputs L_N={l_n}, theta={theta}")).into());
    }
    let z = quantile_normal(1.0 - delta / 3.0)?;
    let m = l_n * theta;
    Ok((m - z * (m * (1.0 - theta)).sqrt()).max(0.0))
}

/// ((n_p−1)/χ²_{n_p−1}(δ2/3))·σ̂_p² / L_n: an upper bound on the variance of
/// the mean estimator from a rate-θ sample, holding with prob ≥ 1−δ2.
pub fn upper_bound_variance_single(pilot: &PilotSummary, theta: f64, delta2: f64) -> Result<f64> {
    let delta2 = open_unit("delta2", delta2)?;
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(StatsError::Domain(format!("theta={theta} must lie in (0,1]")).into());
    }
    if pilot.var_p == 0.0 {
        return Ok(0.0);
    }
    let l_big_n = lower_bound_population(pilot, delta2)?;
    let l_n = lower_bound_sample_size(l_big_n, theta, delta2)?;
    if l_n <= 0.0 {
        return Err(BoundsError::InfeasibleRate(theta));
    }
    // Upper bound on σ² uses the lower δ2/3 point of χ².
    let df = pilot.n_p - 1;
    let var_upper = df as f64 / quantile_chi2(df, delta2 / 3.0)? * pilot.var_p;
    Ok(var_upper / l_n)
}

/// Smallest block-sampling rate at which no group with more than `g` rows is
/// missed, with probability at least 1 − p_f.
pub fn min_rate_group_coverage(table_rows: u64, block_size: u64, g: u64, p_f: f64) -> Result<f64> {
    let p_f = open_unit("p_f", p_f)?;
    if block_size == 0 || g == 0 {
        return Err(StatsError::Domain("block size and g must be positive".into()).into());
    }
    if g > table_rows {
        return Ok(1.0);
    }
    let c = g.div_ceil(block_size) as f64;
    // a = 1 − (1−p_f)^{c/|T|}; θ = 1 − a^{1/c}.
    let a = -((c / table_rows as f64) * (-p_f).ln_1p()).exp_m1();
    let theta = -(a.ln() / c).exp_m1();
    Ok(theta.clamp(f64::MIN_POSITIVE, 1.0))
}

/// b·(1 − E[σ_j²]/Var[X]): how many row samples one block sample is worth.
pub fn block_efficiency_ratio(within_block_var_mean: f64, total_var: f64, block_size: u64) -> Result<f64> {
    if !(total_var > 0.0) || !(within_block_var_mean >= 0.0) || block_size == 0 {
        return Err(StatsError::Domain("efficiency ratio needs Var > 0, E[σ²] ≥ 0, b ≥ 1".into()).into());
    }
    if within_block_var_mean > total_var * (1.0 + 1e-12) {
        return Err(StatsError::Domain(format!(
            "within-block variance {within_block_var_mean} exceeds total variance {total_var}"
        ))
        .into());
    }
    let b = block_size as f64;
    Ok((b * (1.0 - within_block_var_mean / total_var)).clamp(0.0, b))
}
