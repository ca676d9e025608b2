//! Distribution quantiles and the textbook confidence intervals everything
//! else is built on.
//!
//! CDFs come from the regularized incomplete gamma/beta functions in
//! `statrs`; quantiles are obtained by bracketed Newton inversion of those
//! CDFs (upper-tail form above the median, so precision survives near 1).

use statrs::function::{beta::beta_reg, erf::erfc, erf::erfc_inv, gamma::gamma_lr, gamma::gamma_ur, gamma::ln_gamma};
use std::f64::consts::{PI, SQRT_2};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient sample: need n >= {need}, got {got}")]
    InsufficientSample { need: u64, got: u64 },
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// A value in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(StatsError::Domain(format!("probability {value} outside [0,1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> Self {
        Probability(1.0 - self.0)
    }
}

/// Count, mean and unbiased variance of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub n: u64,
    pub mean: f64,
    pub var: f64,
}

impl SampleSummary {
    pub fn new(n: u64, mean: f64, var: f64) -> Result<Self> {
        if n == 0 || !mean.is_finite() || !(var >= 0.0) || !var.is_finite() {
            return Err(StatsError::Domain(format!("bad summary n={n} mean={mean} var={var}")));
        }
        Ok(SampleSummary { n, mean, var })
    }

    /// Two-pass summary; variance is 0 for a single observation.
    pub fn from_slice(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(StatsError::InsufficientSample { need: 1, got: 0 });
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() < 2 {
            0.0
        } else {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        };
        Self::new(xs.len() as u64, mean, var)
    }

    /// Summary from running moments (count, Σx, Σx²). Used where the
    /// observations are implicit, e.g. blocks that contributed nothing.
    pub fn from_moments(n: u64, sum: f64, sumsq: f64) -> Result<Self> {
        if n == 0 {
            return Err(StatsError::InsufficientSample { need: 1, got: 0 });
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n < 2 { 0.0 } else { ((sumsq - sum * mean) / (nf - 1.0)).max(0.0) };
        Self::new(n, mean, var)
    }

    pub fn std_dev(&self) -> f64 {
        self.var.sqrt()
    }
}

fn open_unit(name: &str, q: f64) -> Result<f64> {
    if q > 0.0 && q < 1.0 {
        Ok(q)
    } else {
        Err(StatsError::Domain(format!("{name}={q} must lie in (0,1)")))
    }
}

fn check_df(df: u64) -> Result<f64> {
    if df == 0 {
        Err(StatsError::Domain("degrees of freedom must be >= 1".into()))
    } else {
        Ok(df as f64)
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn student_t_cdf(df: u64, t: f64) -> Result<f64> {
    let nu = check_df(df)?;
    Ok(t_cdf(nu, t))
}

fn t_cdf(nu: f64, t: f64) -> f64 {
    let tail = 0.5 * beta_reg(nu / 2.0, 0.5, nu / (nu + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// P(T > t) for t ≥ 0, without cancellation.
fn t_sf_pos(nu: f64, t: f64) -> f64 {
    0.5 * beta_reg(nu / 2.0, 0.5, nu / (nu + t * t))
}

fn t_pdf(nu: f64, t: f64) -> f64 {
    let ln_c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * PI).ln();
    (ln_c - (nu + 1.0) / 2.0 * (1.0 + t * t / nu).ln()).exp()
}

pub fn chi2_cdf(df: u64, x: f64) -> Result<f64> {
    let k = check_df(df)?;
    Ok(if x <= 0.0 { 0.0 } else { gamma_lr(k / 2.0, x / 2.0) })
}

fn chi2_pdf(k: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ((k / 2.0 - 1.0) * x.ln() - x / 2.0 - (k / 2.0) * 2f64.ln() - ln_gamma(k / 2.0)).exp()
}

/// Solve g(x) = 0 for g increasing on (lo, hi), Newton with bisection
/// fallback. `hi` may be +∞; the bracket is grown from `x0`.
fn invert(g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64, x0: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut x = x0;
    for _ in 0..500 {
        let gx = g(x);
        if gx == 0.0 {
            return x;
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = dg(x);
        let newton = x - gx / d;
        let next = if d > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if hi.is_finite() {
            hi - 2.0 * (hi - x).abs().max(1.0)
        } else {
            lo + 2.0 * (x - lo).abs().max(1.0)
        };
        let bracketed = lo.is_finite() && hi.is_finite() && (hi - lo) <= 1e-15 * hi.abs().max(lo.abs());
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) || bracketed {
            return next;
        }
        x = next;
    }
    x
}

/// z_q with Φ(z_q) = q.
pub fn quantile_normal(q: f64) -> Result<f64> {
    let q = open_unit("q", q)?;
    if q == 0.5 {
        return Ok(0.0);
    }
    if q > 0.5 {
        return Ok(-quantile_normal(1.0 - q)?);
    }
    // Lower tail: solve Φ(x) = q, x < 0.
    let x0 = -SQRT_2 * erfc_inv(2.0 * q);
    Ok(invert(|x| (normal_cdf(x) - q) / q, |x| normal_pdf(x) / q, x0, f64::NEG_INFINITY, 0.0))
}

/// t_{df,q}.
pub fn quantile_student_t(df: u64, q: f64) -> Result<f64> {
    let nu = check_df(df)?;
    let q = open_unit("q", q)?;
    if q == 0.5 {
        return Ok(0.0);
    }
    if q < 0.5 {
        return Ok(-quantile_student_t(df, 1.0 - q)?);
    }
    let tail = 1.0 - q;
    if df == 1 {
        return Ok((PI * (0.5 - tail)).tan());
    }
    if df == 2 {
        let p = q;
        return Ok((2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt());
    }
    // Solve tail − sf(t) = 0, increasing in t.
    let x0 = -quantile_normal(tail)?;
    Ok(invert(
        |t| (tail - t_sf_pos(nu, t)) / tail,
        |t| t_pdf(nu, t) / tail,
        x0.max(1e-3),
        0.0,
        f64::INFINITY,
    ))
}

/// χ²_{df,q}.
pub fn quantile_chi2(df: u64, q: f64) -> Result<f64> {
    let k = check_df(df)?;
    let q = open_unit("q", q)?;
    // Wilson–Hilferty starting point.
    let z = quantile_normal(q)?;
    let c = 2.0 / (9.0 * k);
    let x0 = (k * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-8);
    let x = if q <= 0.5 {
        invert(|x| (gamma_lr(k / 2.0, x / 2.0) - q) / q, |x| chi2_pdf(k, x) / q, x0, 0.0, f64::INFINITY)
    } else {
        let tail = 1.0 - q;
        invert(
            |x| (tail - gamma_ur(k / 2.0, x / 2.0)) / tail,
            |x| chi2_pdf(k, x) / tail,
            x0,
            0.0,
            f64::INFINITY,
        )
    };
    Ok(x)
}

fn need(s: &SampleSummary, n: u64) -> Result<()> {
    if s.n < n {
        Err(StatsError::InsufficientSample { need: n, got: s.n })
    } else {
        Ok(())
    }
}

/// Two-sided t interval for the mean, each side holding with prob 1−δ.
pub fn ci_mean_t(s: &SampleSummary, delta: f64) -> Result<(f64, f64)> {
    need(s, 2)?;
    let delta = open_unit("delta", delta)?;
    let t = quantile_student_t(s.n - 1, 1.0 - delta)?;
    let half = t * s.std_dev() / (s.n as f64).sqrt();
    Ok((s.mean - half, s.mean + half))
}

/// Interval for the mean when the variance is known; `s.var` is taken as σ².
pub fn ci_mean_z(s: &SampleSummary, delta: f64) -> Result<(f64, f64)> {
    need(s, 1)?;
    let delta = open_unit("delta", delta)?;
    let z = quantile_normal(1.0 - delta)?;
    let half = z * s.std_dev() / (s.n as f64).sqrt();
    Ok((s.mean - half, s.mean + half))
}

/// Chi-squared interval for σ.
pub fn ci_stddev_chi2(s: &SampleSummary, delta: f64) -> Result<(f64, f64)> {
    need(s, 2)?;
    let delta = open_unit("delta", delta)?;
    let df = s.n - 1;
    let lo = ((df as f64) / quantile_chi2(df, 1.0 - delta)?).sqrt() * s.std_dev();
    let hi = ((df as f64) / quantile_chi2(df, delta)?).sqrt() * s.std_dev();
    Ok((lo, hi))
}

/// Normal-approximation bounds on the number of successes in N Bernoulli(θ)
/// trials. Degenerate rates return the point Nθ.
pub fn bounds_binomial_count(n: u64, theta: f64, delta: f64) -> Result<(f64, f64)> {
    let theta = Probability::new(theta)?.value();
    let delta = open_unit("delta", delta)?;
    let mean = n as f64 * theta;
    if theta <= 0.0 || theta >= 1.0 {
        return Ok((mean, mean));
    }
    let half = quantile_normal(1.0 - delta)? * (mean * (1.0 - theta)).sqrt();
    Ok((mean - half, mean + half))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(quantile_normal(0.0).is_err());
        assert!(quantile_normal(1.0).is_err());
        assert!(quantile_student_t(0, 0.5).is_err());
        assert!(quantile_chi2(3, 1.0).is_err());
        let s = SampleSummary::new(1, 0.0, 1.0).unwrap();
        assert_eq!(ci_mean_t(&s, 0.05), Err(StatsError::InsufficientSample { need: 2, got: 1 }));
        assert!(Probability::new(1.5).is_err());
    }

    #[test]
    fn moments_match_slice() {
        let xs = [1.0, 4.0, 2.0, 8.0];
        let a = SampleSummary::from_slice(&xs).unwrap();
        let b = SampleSummary::from_moments(4, 15.0, 85.0).unwrap();
        assert!((a.var - b.var).abs() < 1e-12);
        assert!((a.mean - b.mean).abs() < 1e-12);
    }
}
