//! Verification harness: enumeration oracles, synthetic data, and the
//! repeated-trial experiments behind the statistical claims.
//!
//! Experiments are described by flat `key = value` text (see
//! [`Experiment::from_text`]) and produce reports that serialize to one JSON
//! object per line and display as a short human summary.

pub mod data;
pub mod enumerate;
pub mod experiments;

pub use data::{build_store, DataSpec, Distribution, JoinSpec};
pub use enumerate::{enumerate_sampling_distribution, max_deviation, test_equivalence, EquivalenceReport, Operation, OutcomeDistribution};
pub use experiments::*;

use crate::config::{Config, ConfigError};
use crate::planner::PlanError;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Coverage(CoverageConfig),
    NaiveClt(NaiveCltConfig),
    Equivalence { theta: f64, seed: u64 },
    Efficiency(EfficiencyConfig),
    GroupCoverage(GroupCoverageConfig),
    JoinBound(JoinBoundConfig),
    BoundChain(BoundChainConfig),
    Propagation { cases: usize, seed: u64 },
}

struct Keys {
    map: BTreeMap<String, String>,
    used: std::cell::RefCell<Vec<String>>,
}

impl Keys {
    fn parse(text: &str) -> Result<Keys, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError(format!("line {}: expected key = value", i + 1)))?;
            if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(ConfigError(format!("line {}: duplicate key '{}'", i + 1, k.trim())));
            }
        }
        Ok(Keys { map, used: Default::default() })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().push(key.to_string());
        self.map.get(key).map(String::as_str)
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError(format!("{key}: cannot parse '{v}'"))),
        }
    }

    fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key).ok_or_else(|| ConfigError(format!("missing key '{key}'")))
    }

    fn planner(&self) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        for (k, v) in &self.map {
            if let Some(name) = k.strip_prefix("planner.") {
                self.used.borrow_mut().push(k.clone());
                cfg.set(name, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn data(&self) -> Result<DataSpec, ConfigError> {
        let distribution = self.get::<String>("distribution", "uniform".into())?.parse().map_err(ConfigError)?;
        let mut spec = DataSpec::new(distribution, self.get("rows", 200_000)?, self.get("block_size", 100)?, self.get("groups", 1)?);
        spec.seed = self.get("data_seed", 1)?;
        if let Some(keys) = self.raw("join_keys") {
            let keys = keys.parse().map_err(|_| ConfigError(format!("join_keys: cannot parse '{keys}'")))?;
            spec.join = Some(JoinSpec { keys, zipf_s: self.get("zipf_s", 1.1)?, fanout: self.get("fanout", 1)? });
        }
        if spec.rows == 0 || spec.block_size == 0 {
            return Err(ConfigError("rows and block_size must be positive".into()));
        }
        Ok(spec)
    }

    fn finish(self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.map.keys().find(|k| !used.contains(k)) {
            Some(k) => Err(ConfigError(format!("unknown key '{k}' for this experiment"))),
            None => Ok(()),
        }
    }
}

fn positive(name: &str, n: usize) -> Result<usize, ConfigError> {
    if n == 0 {
        Err(ConfigError(format!("{name} must be at least 1")))
    } else {
        Ok(n)
    }
}

fn unit(name: &str, x: f64) -> Result<f64, ConfigError> {
    if x > 0.0 && x <= 1.0 {
        Ok(x)
    } else {
        Err(ConfigError(format!("{name}={x} must lie in (0,1]")))
    }
}

impl Experiment {
    /// Parse an experiment description. `kind` selects the experiment;
    /// `planner.<key>` lines override planner configuration.
    pub fn from_text(text: &str) -> Result<Experiment, ConfigError> {
        let k = Keys::parse(text)?;
        let seed = k.get("seed", 0u64)?;
        let exp = match k.require("kind")? {
            "coverage" => Experiment::Coverage(CoverageConfig {
                data: k.data()?,
                query: k.require("query")?.to_string(),
                trials: positive("trials", k.get("trials", 200)?)?,
                seed,
                planner: k.planner()?,
            }),
            "naive_clt" => {
                let data = k.data()?;
                if data.join.is_none() {
                    return Err(ConfigError("naive_clt needs join_keys".into()));
                }
                let naive_rate = match k.raw("naive_rate") {
                    None | Some("planned") => None,
                    Some(v) => Some(unit("naive_rate", v.parse().map_err(|_| ConfigError(format!("naive_rate: cannot parse '{v}'")))?)?),
                };
                Experiment::NaiveClt(NaiveCltConfig {
                    data,
                    value: k.get("value", "f.x * d.w".to_string())?,
                    e: unit("error", k.get("error", 0.1)?)?,
                    p: unit("probability", k.get("probability", 0.95)?)?,
                    naive_rate,
                    trials: positive("trials", k.get("trials", 500)?)?,
                    seed,
                    planner: k.planner()?,
                })
            }
            "equivalence" => Experiment::Equivalence { theta: unit("theta", k.get("theta", 0.5)?)?, seed },
            "efficiency" => {
                let layout = match k.get::<String>("layout", "homogeneous".into())?.as_str() {
                    "homogeneous" => BlockLayout::Homogeneous,
                    "shuffled" => BlockLayout::Shuffled,
                    other => match other.strip_prefix("intermediate:").and_then(|r| r.parse::<f64>().ok()) {
                        Some(r) if (0.0..=1.0).contains(&r) => BlockLayout::Intermediate(r),
                        _ => return Err(ConfigError(format!("layout: expected homogeneous, shuffled or intermediate:<rho>, got '{other}'"))),
                    },
                };
                Experiment::Efficiency(EfficiencyConfig {
                    blocks: positive("blocks", k.get("blocks", 1000)?)?,
                    block_size: k.get("block_size", 100)?,
                    layout,
                    sample_blocks: positive("sample_blocks", k.get("sample_blocks", 20)?)?,
                    trials: positive("trials", k.get("trials", 20_000)?)?,
                    seed,
                })
            }
            "group_coverage" => Experiment::GroupCoverage(GroupCoverageConfig {
                rows: k.get("rows", 20_000)?,
                block_size: k.get("block_size", 100)?,
                g: k.get("g", 200)?,
                p_f: unit("p_f", k.get("p_f", 0.05)?)?,
                trials: positive("trials", k.get("trials", 10_000)?)?,
                seed,
            }),
            "join_bound" => {
                let plan: Vec<f64> = k
                    .get::<String>("plan", "0.3,0.5".into())?
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| ConfigError(format!("plan: cannot parse '{s}'"))))
                    .collect::<Result<_, _>>()?;
                let [t1, t2] = plan[..] else { return Err(ConfigError("plan needs two rates".into())) };
                Experiment::JoinBound(JoinBoundConfig {
                    n1: positive("n1", k.get("n1", 200)?)?,
                    n2: positive("n2", k.get("n2", 5)?)?,
                    density: unit("density", k.get("density", 0.5)?)?,
                    theta_p: unit("theta_p", k.get("theta_p", 0.25)?)?,
                    plan: [unit("plan", t1)?, unit("plan", t2)?],
                    delta2: unit("delta2", k.get("delta2", 0.05)?)?,
                    draws: positive("draws", k.get("draws", 500)?)?,
                    seed,
                })
            }
            "bound_chain" => Experiment::BoundChain(BoundChainConfig {
                blocks: positive("blocks", k.get("blocks", 2000)?)?,
                theta_p: unit("theta_p", k.get("theta_p", 0.05)?)?,
                theta: unit("theta", k.get("theta", 0.1)?)?,
                delta1: unit("delta1", k.get("delta1", 0.05)?)?,
                delta2: unit("delta2", k.get("delta2", 0.05)?)?,
                draws: positive("draws", k.get("draws", 500)?)?,
                seed,
            }),
            "propagation" => Experiment::Propagation { cases: positive("cases", k.get("cases", 100_000)?)?, seed },
            other => return Err(ConfigError(format!("unknown experiment kind '{other}'"))),
        };
        k.finish()?;
        Ok(exp)
    }

    pub fn run(&self) -> Result<Report, PlanError> {
        Ok(match self {
            Experiment::Coverage(c) => Report::Coverage(coverage_experiment(c)?),
            Experiment::NaiveClt(c) => Report::NaiveClt(naive_clt_experiment(c)?),
            Experiment::Equivalence { theta, seed } => Report::Equivalence(
                Operation::ALL.iter().map(|op| test_equivalence(*op, *theta, *seed)).collect::<Result<_, _>>()?,
            ),
            Experiment::Efficiency(c) => Report::Efficiency(efficiency_experiment(c)?),
            Experiment::GroupCoverage(c) => Report::GroupCoverage(group_coverage_experiment(c)?),
            Experiment::JoinBound(c) => Report::JoinBound(join_bound_validity(c)?),
            Experiment::BoundChain(c) => Report::BoundChain(bound_chain_experiment(c)?),
            Experiment::Propagation { cases, seed } => Report::Propagation(propagation_experiment(*cases, *seed)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Coverage(CoverageReport),
    NaiveClt(NaiveCltReport),
    Equivalence(Vec<EquivalenceReport>),
    Efficiency(EfficiencyReport),
    GroupCoverage(GroupCoverageReport),
    JoinBound(ValidityReport),
    BoundChain(BoundChainReport),
    Propagation(PropagationReport),
}

impl Report {
    /// Whether the report meets its own statistical tolerance.
    pub fn passed(&self) -> bool {
        match self {
            Report::Coverage(r) => r.empirical_coverage >= binomial_floor(r.nominal, r.trials - r.skipped) && r.missed_groups == 0,
            Report::NaiveClt(r) => r.planned_coverage >= binomial_floor(r.nominal, r.trials),
            Report::Equivalence(v) => v.iter().all(|r| r.equivalent),
            Report::Efficiency(r) => r.relative_difference <= 0.1,
            Report::GroupCoverage(r) => r.any_miss_rate <= r.allowance,
            Report::JoinBound(r) => r.frequency >= r.required,
            Report::BoundChain(r) => [&r.mean, &r.variance, &r.population].iter().all(|v| v.frequency >= v.required),
            Report::Propagation(r) => r.product_violations + r.quotient_tight_violations + r.sum_violations == 0,
        }
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        match self {
            Report::Equivalence(v) => v
                .iter()
                .map(|r| {
                    let mut j = serde_json::to_value(r).expect("report serializes");
                    j["kind"] = "equivalence".into();
                    j.to_string()
                })
                .collect::<Vec<_>>()
                .join("\n"),
            other => serde_json::to_string(other).expect("report serializes"),
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Report::Coverage(r) => {
                writeln!(f, "coverage: {}/{} trials within {}% ({:.4}; nominal {})", r.successes, r.trials - r.skipped, r.target_error * 100.0, r.empirical_coverage, r.nominal)?;
                writeln!(f, "achieved error: mean of per-trial max {:.5}, overall max {:.5}", r.mean_max_error, r.max_error)?;
                write!(f, "missed groups: {}, exact fallbacks: {}, skipped: {}", r.missed_groups, r.exact_fallbacks, r.skipped)
            }
            Report::NaiveClt(r) => {
                writeln!(f, "naive row-level coverage: {:.4} (nominal {})", r.naive_coverage, r.nominal)?;
                writeln!(f, "planned coverage: {:.4} ({} exact fallbacks)", r.planned_coverage, r.planned_fallbacks)?;
                write!(f, "worst naive error / half-width: {:.2}", r.naive_worst_error_ratio)
            }
            Report::Equivalence(v) => {
                writeln!(f, "{:<10} {:>6} {:>8} {:>12}  result", "operation", "blocks", "outcomes", "deviation")?;
                for (i, r) in v.iter().enumerate() {
                    let name = serde_json::to_value(r.operation).unwrap();
                    write!(f, "{:<10} {:>6} {:>8} {:>12.3e}  {}", name.as_str().unwrap(), r.blocks, r.outcomes, r.max_deviation, if r.equivalent { "pass" } else { "FAIL" })?;
                    if i + 1 < v.len() {
                        writeln!(f)?;
                    }
                }
                Ok(())
            }
            Report::Efficiency(r) => write!(f, "block/row sample-size ratio: measured {:.4}, predicted {:.4} (diff {:.2}%)", r.measured, r.predicted, r.relative_difference * 100.0),
            Report::GroupCoverage(r) => write!(
                f,
                "theta {:.6}: planted group missed {}/{} ({:.5}, expected {:.2e}); any group missed {:.5} (allowed {:.5})",
                r.theta, r.planted_misses, r.trials, r.planted_miss_rate, r.planted_miss_expected, r.any_miss_rate, r.allowance
            ),
            Report::JoinBound(r) => write!(f, "variance bound held in {}/{} draws ({:.4}; required {:.4})", r.holds, r.draws - r.undefined, r.frequency, r.required),
            Report::BoundChain(r) => {
                for (name, v) in [("mean", &r.mean), ("variance", &r.variance), ("population", &r.population)] {
                    writeln!(f, "{name:<10} held {:.4} (required {:.4})", v.frequency, v.required)?;
                }
                write!(f, "draws: {}", r.draws)
            }
            Report::Propagation(r) => write!(
                f,
                "{} cases: product {}, quotient {} (standard rule), quotient {} (worst-case rule), sum {} violations",
                r.cases, r.product_violations, r.quotient_violations, r.quotient_tight_violations, r.sum_violations
            ),
        }
    }
}
