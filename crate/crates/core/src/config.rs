//! Session configuration, loadable from flat `key = value` text.

use std::fmt;
use std::str::FromStr;

/// How the planner lower-bounds a total from the pilot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanBound {
    /// Block-count bound times a Student-t bound on the per-block mean.
    StudentT,
    /// Pilot estimate minus √(variance bound / δ).
    Chebyshev,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Pilot block-sampling rate before the group-coverage adjustment.
    pub theta_p: f64,
    /// Smallest group size (rows) that must not be missed.
    pub g: u64,
    /// Allowed probability of missing such a group.
    pub p_f: f64,
    /// Largest rate a sampled table may get in a plan.
    pub rate_cap: f64,
    pub rate_floor: f64,
    /// Bisection tolerance on a rate.
    pub tolerance: f64,
    /// Tables with at least this many rows are sampling candidates.
    pub large_table_threshold: u64,
    /// Shares of 1 − p_ij given to the mean and variance bounds.
    pub delta1_fraction: f64,
    pub delta2_fraction: f64,
    /// Pilots with fewer sampled blocks fall back to exact execution.
    pub min_pilot_units: u64,
    pub mean_bound: MeanBound,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            theta_p: 0.0005,
            g: 200,
            p_f: 0.05,
            rate_cap: 0.1,
            rate_floor: 1e-6,
            tolerance: 1e-6,
            large_table_threshold: 1_000_000,
            delta1_fraction: 1.0 / 3.0,
            delta2_fraction: 1.0 / 3.0,
            min_pilot_units: 30,
            mean_bound: MeanBound::StudentT,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError(format!("{key}: cannot parse '{v}'")))
}

impl Config {
    pub const KEYS: &'static [&'static str] = &[
        "theta_p",
        "g",
        "p_f",
        "rate_cap",
        "rate_floor",
        "tolerance",
        "large_table_threshold",
        "delta1_fraction",
        "delta2_fraction",
        "min_pilot_units",
        "mean_bound",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "theta_p" => self.theta_p = num(key, v)?,
            "g" => self.g = num(key, v)?,
            "p_f" => self.p_f = num(key, v)?,
            "rate_cap" => self.rate_cap = num(key, v)?,
            "rate_floor" => self.rate_floor = num(key, v)?,
            "tolerance" => self.tolerance = num(key, v)?,
            "large_table_threshold" => self.large_table_threshold = num(key, v)?,
            "delta1_fraction" => self.delta1_fraction = num(key, v)?,
            "delta2_fraction" => self.delta2_fraction = num(key, v)?,
            "min_pilot_units" => self.min_pilot_units = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "mean_bound" => {
                self.mean_bound = match v {
                    "t" | "student_t" => MeanBound::StudentT,
                    "chebyshev" => MeanBound::Chebyshev,
                    _ => return Err(ConfigError(format!("mean_bound: expected 't' or 'chebyshev', got '{v}'"))),
                }
            }
            other => return Err(ConfigError(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines over the current values; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v).map_err(|e| ConfigError(format!("line {}: {}", i + 1, e.0)))?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let open = |name: &str, x: f64| {
            if x > 0.0 && x < 1.0 {
                Ok(())
            } else {
                Err(ConfigError(format!("{name}={x} must lie in (0,1)")))
            }
        };
        if !(self.theta_p > 0.0 && self.theta_p <= 1.0) {
            return Err(ConfigError(format!("theta_p={} must lie in (0,1]", self.theta_p)));
        }
        open("p_f", self.p_f)?;
        open("delta1_fraction", self.delta1_fraction)?;
        open("delta2_fraction", self.delta2_fraction)?;
        if self.delta1_fraction + self.delta2_fraction >= 1.0 {
            return Err(ConfigError("delta1_fraction + delta2_fraction must be below 1".into()));
        }
        if !(self.rate_floor > 0.0 && self.rate_floor < self.rate_cap && self.rate_cap <= 1.0) {
            return Err(ConfigError(format!("need 0 < rate_floor < rate_cap <= 1, got {} and {}", self.rate_floor, self.rate_cap)));
        }
        if !(self.tolerance > 0.0) {
            return Err(ConfigError("tolerance must be positive".into()));
        }
        if self.g == 0 {
            return Err(ConfigError("g must be positive".into()));
        }
        if self.min_pilot_units < 2 {
            return Err(ConfigError("min_pilot_units must be at least 2".into()));
        }
        Ok(())
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "theta_p = {}", self.theta_p)?;
        writeln!(f, "g = {}", self.g)?;
        writeln!(f, "p_f = {}", self.p_f)?;
        writeln!(f, "rate_cap = {}", self.rate_cap)?;
        writeln!(f, "rate_floor = {}", self.rate_floor)?;
        writeln!(f, "tolerance = {}", self.tolerance)?;
        writeln!(f, "large_table_threshold = {}", self.large_table_threshold)?;
        writeln!(f, "delta1_fraction = {}", self.delta1_fraction)?;
        writeln!(f, "delta2_fraction = {}", self.delta2_fraction)?;
        writeln!(f, "min_pilot_units = {}", self.min_pilot_units)?;
        let mb = match self.mean_bound {
            MeanBound::StudentT => "t",
            MeanBound::Chebyshev => "chebyshev",
        };
        writeln!(f, "mean_bound = {mb}")?;
        writeln!(f, "seed = {}", self.seed)
    }
}
