//! Repeated-trial experiments. Each is reproducible from its config: trial
//! seeds are drawn up front from the config seed, then trials run in
//! parallel and are reduced in trial order.

use super::data::{build_store, DataSpec};
use crate::bounds::{
    block_efficiency_ratio, lower_bound_mean, lower_bound_population, min_rate_group_coverage, upper_bound_variance_single,
    BoundsError, PilotSummary, SampleUnit,
};
use crate::budget::{propagate_product, propagate_quotient, propagate_quotient_tight, propagate_sum};
use crate::config::Config;
use crate::engine::{execute, BlockTable, ExecOptions, Store, Value};
use crate::joinstats::{build_join_inputs, exact_variance_closed_form, var_upper_two_table, JoinBlockMatrix, JoinTensor};
use crate::planner::{derive_seed, run_exact, run_query, PlanError, SamplingPlan};
use crate::sql::{parse_query, SqlError};
use crate::stats::{quantile_normal, SampleSummary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Normal};
use rayon::prelude::*;
use std::collections::HashMap;

fn trial_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

/// One-sided allowance: nominal rate minus three binomial standard errors.
pub fn binomial_floor(nominal: f64, trials: usize) -> f64 {
    nominal - 3.0 * (nominal * (1.0 - nominal) / trials as f64).sqrt()
}

fn invalid(msg: impl Into<String>) -> PlanError {
    PlanError::Sql(SqlError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub data: DataSpec,
    /// Must carry an error clause.
    pub query: String,
    pub trials: usize,
    pub seed: u64,
    pub planner: Config,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CoverageReport {
    pub trials: usize,
    /// Trials with every aggregate of every group within e and no group missed.
    pub successes: usize,
    /// Trials with no comparable cell (every exact aggregate zero or null).
    pub skipped: usize,
    pub empirical_coverage: f64,
    pub target_error: f64,
    pub nominal: f64,
    pub mean_max_error: f64,
    pub max_error: f64,
    pub missed_groups: usize,
    pub trials_with_missed_groups: usize,
    /// Trials answered by the exact query rather than a sampled plan.
    pub exact_fallbacks: usize,
    /// Exact aggregates equal to zero or null; excluded from comparison.
    pub undefined_cells: usize,
}

type Answer = HashMap<Vec<Value>, Vec<Value>>;

fn keyed(rows: &[Vec<Value>], key_cols: &[usize], agg_cols: &[usize]) -> Answer {
    rows.iter()
        .map(|r| (key_cols.iter().map(|&i| r[i].clone()).collect(), agg_cols.iter().map(|&i| r[i].clone()).collect()))
        .collect()
}

struct TrialOutcome {
    max_error: f64,
    missed: usize,
    compared: usize,
    exact: bool,
}

fn compare(exact: &Answer, est: &Answer) -> TrialOutcome {
    let (mut max_error, mut missed, mut compared) = (0.0f64, 0, 0);
    for (key, truth) in exact {
        let Some(got) = est.get(key) else {
            missed += 1;
            continue;
        };
        for (t, g) in truth.iter().zip(got) {
            let Some(t) = t.as_f64().filter(|t| *t != 0.0) else { continue };
            compared += 1;
            let err = g.as_f64().map_or(f64::INFINITY, |g| (g - t).abs() / t.abs());
            max_error = max_error.max(err);
        }
    }
    TrialOutcome { max_error, missed, compared, exact: false }
}

/// Repeated end-to-end runs against the exact answer, computed once with
/// sampling disabled.
pub fn coverage_experiment(cfg: &CoverageConfig) -> Result<CoverageReport, PlanError> {
    if cfg.trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let store = build_store(&cfg.data)?;
    let q = parse_query(&cfg.query)?;
    let err = q.error.ok_or_else(|| invalid("coverage query needs an ERROR WITHIN clause"))?;
    let (e, p) = (err.error_percent / 100.0, err.probability_percent / 100.0);
    let key_cols: Vec<usize> = (0..q.select.len()).filter(|&i| !q.select[i].expr.contains_aggregate()).collect();
    let agg_cols: Vec<usize> = (0..q.select.len()).filter(|&i| q.select[i].expr.contains_aggregate()).collect();
    let exact_rows = run_exact(&cfg.query, &store)?.rows;
    let exact = keyed(&exact_rows, &key_cols, &agg_cols);
    let undefined_cells = exact.values().flatten().filter(|v| v.as_f64().is_none_or(|x| x == 0.0)).count();

    let outcomes: Vec<TrialOutcome> = trial_seeds(cfg.seed, cfg.trials)
        .into_par_iter()
        .map(|s| {
            let out = run_query(&cfg.query, &store, &cfg.planner, s)?;
            let mut o = compare(&exact, &keyed(&out.result.rows, &key_cols, &agg_cols));
            o.exact = out.report.chosen == SamplingPlan::Exact;
            Ok(o)
        })
        .collect::<Result<_, PlanError>>()?;

    let mut r = CoverageReport {
        trials: cfg.trials,
        successes: 0,
        skipped: 0,
        empirical_coverage: 0.0,
        target_error: e,
        nominal: p,
        mean_max_error: 0.0,
        max_error: 0.0,
        missed_groups: 0,
        trials_with_missed_groups: 0,
        exact_fallbacks: 0,
        undefined_cells,
    };
    let mut err_sum = 0.0;
    for o in &outcomes {
        r.exact_fallbacks += o.exact as usize;
        r.missed_groups += o.missed;
        r.trials_with_missed_groups += (o.missed > 0) as usize;
        if o.compared == 0 && o.missed == 0 {
            r.skipped += 1;
            continue;
        }
        err_sum += o.max_error;
        r.max_error = r.max_error.max(o.max_error);
        r.successes += (o.missed == 0 && o.max_error <= e * (1.0 + 1e-12)) as usize;
    }
    let counted = (cfg.trials - r.skipped).max(1) as f64;
    r.empirical_coverage = r.successes as f64 / counted;
    r.mean_max_error = err_sum / counted;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveCltConfig {
    /// Must include a join spec (fact `f` joined to dim `d` on `k`).
    pub data: DataSpec,
    /// Per-row value over the join, e.g. `f.x * d.w`.
    pub value: String,
    pub e: f64,
    pub p: f64,
    /// Fact-table rate for the naive run; `None` reuses the planned rate and
    /// the same final-stage blocks (the cap when the plan is exact).
    pub naive_rate: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub planner: Config,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NaiveCltReport {
    pub trials: usize,
    pub nominal: f64,
    /// Fraction of naive row-level intervals containing the true total.
    pub naive_coverage: f64,
    /// Fraction of planned runs within relative error e.
    pub planned_coverage: f64,
    /// Largest |error| / naive half-width over trials.
    pub naive_worst_error_ratio: f64,
    pub mean_naive_rate: f64,
    pub planned_fallbacks: usize,
}

/// Row-level CLT interval vs the block-level planned estimate on the same
/// join; the naive interval treats joined sample rows as independent.
pub fn naive_clt_experiment(cfg: &NaiveCltConfig) -> Result<NaiveCltReport, PlanError> {
    if cfg.trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if cfg.data.join.is_none() {
        return Err(invalid("naive CLT experiment needs a join spec"));
    }
    let store = build_store(&cfg.data)?;
    let v = &cfg.value;
    let from = "fact f JOIN dim d ON f.k = d.k";
    let truth = run_exact(&format!("SELECT SUM({v}) FROM {from}"), &store)?.rows[0][0]
        .as_f64()
        .ok_or_else(|| invalid("join is empty"))?;
    let planned = format!("SELECT SUM({v}) FROM {from} ERROR WITHIN {}% PROBABILITY {}%", cfg.e * 100.0, cfg.p * 100.0);
    let z = quantile_normal((1.0 + cfg.p) / 2.0)?;

    let rows: Vec<(bool, bool, f64, f64, bool)> = trial_seeds(cfg.seed, cfg.trials)
        .into_par_iter()
        .map(|s| {
            let out = run_query(&planned, &store, &cfg.planner, s)?;
            let est = out.result.rows[0][0].as_f64().unwrap_or(0.0);
            let fallback = out.report.chosen.is_exact();
            let planned_rate = match &out.report.chosen {
                SamplingPlan::Rates(r) => r.iter().find(|(n, _)| n == "f").map_or(1.0, |x| x.1),
                SamplingPlan::Exact => cfg.planner.rate_cap,
            };
            let theta = cfg.naive_rate.unwrap_or(planned_rate);
            let naive_sql = format!(
                "SELECT SUM({v}), SUM(({v}) * ({v})), COUNT(*) FROM fact f TABLESAMPLE SYSTEM ({}%) JOIN dim d ON f.k = d.k",
                theta * 100.0
            );
            let r = execute(&parse_query(&naive_sql)?, &store, &ExecOptions::seeded(derive_seed(s, 2)))?;
            let sum = r.rows[0][0].as_f64().unwrap_or(0.0);
            let sumsq = r.rows[0][1].as_f64().unwrap_or(0.0);
            let n = r.rows[0][2].as_f64().unwrap_or(0.0);
            let naive_total = sum / theta;
            // Each joined row is an independent Bernoulli(θ) draw:
            // Var[Σ y·I/θ] = (1−θ)/θ·Σ y², estimated by (1−θ)/θ²·Σ_sample y².
            let half = if n >= 1.0 { z * ((1.0 - theta) * sumsq).sqrt() / theta } else { 0.0 };
            let err = (naive_total - truth).abs();
            let ratio = if half > 0.0 { err / half } else if err > 0.0 { f64::INFINITY } else { 0.0 };
            Ok((err <= half, (est - truth).abs() <= cfg.e * truth.abs() * (1.0 + 1e-12), ratio, theta, fallback))
        })
        .collect::<Result<_, PlanError>>()?;

    let t = cfg.trials as f64;
    Ok(NaiveCltReport {
        trials: cfg.trials,
        nominal: cfg.p,
        naive_coverage: rows.iter().filter(|r| r.0).count() as f64 / t,
        planned_coverage: rows.iter().filter(|r| r.1).count() as f64 / t,
        naive_worst_error_ratio: rows.iter().map(|r| r.2).fold(0.0, f64::max),
        mean_naive_rate: rows.iter().map(|r| r.3).sum::<f64>() / t,
        planned_fallbacks: rows.iter().filter(|r| r.4).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockLayout {
    /// Every row equals its block's mean.
    Homogeneous,
    /// Intermediate data with rows randomly permuted across blocks.
    Shuffled,
    /// Share `rho` of the variance between blocks, the rest within.
    Intermediate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyConfig {
    pub blocks: usize,
    pub block_size: u64,
    pub layout: BlockLayout,
    /// Blocks per block sample; the row sample takes blocks·b rows.
    pub sample_blocks: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EfficiencyReport {
    pub layout: BlockLayout,
    pub block_size: u64,
    pub within_block_var_mean: f64,
    pub total_var: f64,
    /// b(1 − E[σ_j²]/Var).
    pub predicted: f64,
    /// Block sample size (rows) over the row sample size reaching the same
    /// variance of the AVG estimate.
    pub measured: f64,
    pub relative_difference: f64,
}

fn layout_values(cfg: &EfficiencyConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let b = cfg.block_size as usize;
    let rho = match cfg.layout {
        BlockLayout::Homogeneous => 1.0,
        BlockLayout::Shuffled => 0.5,
        BlockLayout::Intermediate(r) => r,
    };
    let between = Normal::new(100.0, 20.0 * rho.sqrt()).unwrap();
    let within = Normal::new(0.0, 20.0 * (1.0 - rho).sqrt()).unwrap();
    let mut v = Vec::with_capacity(cfg.blocks * b);
    for _ in 0..cfg.blocks {
        let m = between.sample(&mut rng);
        for _ in 0..b {
            v.push(m + within.sample(&mut rng));
        }
    }
    if cfg.layout == BlockLayout::Shuffled {
        use rand::seq::SliceRandom;
        v.shuffle(&mut rng);
    }
    v
}

/// Measured vs predicted block-to-row sample-size ratio. Both estimators
/// draw with replacement, so the prediction is exact in expectation.
pub fn efficiency_experiment(cfg: &EfficiencyConfig) -> Result<EfficiencyReport, PlanError> {
    if cfg.trials < 2 || cfg.blocks == 0 || cfg.block_size == 0 || cfg.sample_blocks == 0 {
        return Err(invalid("efficiency experiment needs trials >= 2 and positive sizes"));
    }
    let v = layout_values(cfg);
    let b = cfg.block_size as usize;
    let n = v.len() as f64;
    let mu = v.iter().sum::<f64>() / n;
    let total_var = v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    let block_means: Vec<f64> = v.chunks(b).map(|c| c.iter().sum::<f64>() / b as f64).collect();
    let within: f64 = v
        .chunks(b)
        .zip(&block_means)
        .map(|(c, m)| c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / b as f64)
        .sum::<f64>()
        / cfg.blocks as f64;
    let predicted = block_efficiency_ratio(within, total_var, cfg.block_size)?;

    let (sq_block, sq_row) = trial_seeds(cfg.seed ^ 1, cfg.trials)
        .into_par_iter()
        .map(|s| {
            // Identical streams: with b = 1 both estimators see the same rows.
            let (mut rb, mut rr) = (ChaCha8Rng::seed_from_u64(s), ChaCha8Rng::seed_from_u64(s));
            let m = cfg.sample_blocks;
            let block_est = (0..m).map(|_| block_means[rb.random_range(0..cfg.blocks)]).sum::<f64>() / m as f64;
            let rows = m * b;
            let row_est = (0..rows).map(|_| v[rr.random_range(0..v.len())]).sum::<f64>() / rows as f64;
            ((block_est - mu).powi(2), (row_est - mu).powi(2))
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    // Equal-variance row sample size is rows·Var_row/Var_block, so the ratio
    // b·m / that size is Var_block/Var_row.
    let measured = if sq_row > 0.0 { sq_block / sq_row } else { 1.0 };
    Ok(EfficiencyReport {
        layout: cfg.layout,
        block_size: cfg.block_size,
        within_block_var_mean: within,
        total_var,
        predicted,
        measured,
        relative_difference: (measured - predicted).abs() / predicted.max(f64::MIN_POSITIVE),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCoverageConfig {
    pub rows: u64,
    pub block_size: u64,
    pub g: u64,
    pub p_f: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GroupCoverageReport {
    pub theta: f64,
    pub blocks_per_group: u64,
    pub groups: u64,
    pub trials: usize,
    /// Trials in which the planted group (group 0) was missed.
    pub planted_misses: usize,
    pub planted_miss_rate: f64,
    /// (1 − θ)^{⌈g/b⌉}.
    pub planted_miss_expected: f64,
    /// Trials in which any group was missed.
    pub any_misses: usize,
    pub any_miss_rate: f64,
    pub p_f: f64,
    pub allowance: f64,
}

/// Worst-case layout: every group occupies exactly ⌈g/b⌉ whole blocks.
/// Each trial runs a block-sampled GROUP BY through the engine.
pub fn group_coverage_experiment(cfg: &GroupCoverageConfig) -> Result<GroupCoverageReport, PlanError> {
    if cfg.trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let theta = min_rate_group_coverage(cfg.rows, cfg.block_size, cfg.g, cfg.p_f)?;
    let c = cfg.g.div_ceil(cfg.block_size);
    let rows_per_group = c * cfg.block_size;
    let groups = cfg.rows.div_ceil(rows_per_group);
    let gcol: Vec<i64> = (0..cfg.rows).map(|i| (i / rows_per_group) as i64).collect();
    let store = Store::in_memory();
    store.put(BlockTable::from_ints("t", &[("g", gcol)], cfg.block_size)?, false)?;
    let q = parse_query(&format!("SELECT g, COUNT(*) FROM t TABLESAMPLE SYSTEM ({}%) GROUP BY g", theta * 100.0))?;
    let hits: Vec<(bool, bool)> = trial_seeds(cfg.seed, cfg.trials)
        .into_par_iter()
        .map(|s| {
            let r = execute(&q, &store, &ExecOptions::seeded(s))?;
            let planted = r.rows.iter().any(|row| row[0] == Value::Int(0));
            Ok((!planted, (r.rows.len() as u64) < groups))
        })
        .collect::<Result<_, PlanError>>()?;
    let t = cfg.trials as f64;
    let planted_misses = hits.iter().filter(|h| h.0).count();
    let any_misses = hits.iter().filter(|h| h.1).count();
    Ok(GroupCoverageReport {
        theta,
        blocks_per_group: c,
        groups,
        trials: cfg.trials,
        planted_misses,
        planted_miss_rate: planted_misses as f64 / t,
        planted_miss_expected: (1.0 - theta).powi(c as i32),
        any_misses,
        any_miss_rate: any_misses as f64 / t,
        p_f: cfg.p_f,
        allowance: cfg.p_f + 3.0 * (cfg.p_f * (1.0 - cfg.p_f) / t).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidityReport {
    pub draws: usize,
    /// Draws where no bound could be formed (e.g. fewer than 2 pilot blocks).
    pub undefined: usize,
    pub holds: usize,
    pub frequency: f64,
    pub required: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinBoundConfig {
    pub n1: usize,
    pub n2: usize,
    /// Fraction of nonzero cells in the block cross-sum matrix.
    pub density: f64,
    pub theta_p: f64,
    pub plan: [f64; 2],
    pub delta2: f64,
    pub draws: usize,
    pub seed: u64,
}

/// Fixed random two-table population; per draw, a Bernoulli pilot of table-1
/// blocks and the two-table variance bound, checked against the exact variance.
pub fn join_bound_validity(cfg: &JoinBoundConfig) -> Result<ValidityReport, PlanError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let exp: Exp<f64> = Exp::new(0.1).unwrap();
    let data: Vec<f64> =
        (0..cfg.n1 * cfg.n2).map(|_| if rng.random::<f64>() < cfg.density { 1.0 + exp.sample(&mut rng).floor() } else { 0.0 }).collect();
    let tensor = JoinTensor::new(vec![cfg.n1, cfg.n2], data.clone()).map_err(|e| invalid(e.to_string()))?;
    let exact = exact_variance_closed_form(&tensor, &cfg.plan).map_err(|e| invalid(e.to_string()))?;
    let outcomes: Vec<Option<bool>> = trial_seeds(cfg.seed ^ 2, cfg.draws)
        .into_par_iter()
        .map(|s| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let cells: Vec<Vec<f64>> =
                data.chunks(cfg.n2).filter(|_| r.random::<f64>() < cfg.theta_p).map(|c| c.to_vec()).collect();
            if cells.len() < 2 {
                return None;
            }
            let m = JoinBlockMatrix::new(cells).ok()?;
            let u = var_upper_two_table(&build_join_inputs(&m, cfg.theta_p), cfg.plan, cfg.delta2).ok()?;
            Some(exact <= u)
        })
        .collect();
    Ok(validity(outcomes, cfg.delta2, exact))
}

fn validity(outcomes: Vec<Option<bool>>, delta: f64, exact: f64) -> ValidityReport {
    let draws = outcomes.len();
    let undefined = outcomes.iter().filter(|o| o.is_none()).count();
    let holds = outcomes.iter().filter(|o| **o == Some(true)).count();
    let defined = (draws - undefined).max(1);
    ValidityReport {
        draws,
        undefined,
        holds,
        frequency: holds as f64 / defined as f64,
        required: binomial_floor(1.0 - delta, defined),
        exact,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundChainConfig {
    pub blocks: usize,
    pub theta_p: f64,
    pub theta: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoundChainReport {
    pub draws: usize,
    pub true_mean: f64,
    pub true_var: f64,
    /// μ ≥ L_μ (vacuous when the pilot gives no positive bound).
    pub mean: ValidityReport,
    /// σ²/n ≤ U_V with n the realized final sample size.
    pub variance: ValidityReport,
    /// N ≥ L_N at δ2/3.
    pub population: ValidityReport,
}

/// Single-table chain on a fixed population of block totals.
pub fn bound_chain_experiment(cfg: &BoundChainConfig) -> Result<BoundChainReport, PlanError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let exp = Exp::new(1.0 / 50.0).unwrap();
    let pop: Vec<f64> = (0..cfg.blocks).map(|_| 1.0 + exp.sample(&mut rng)).collect();
    let n = pop.len() as f64;
    let mu = pop.iter().sum::<f64>() / n;
    let sigma2 = pop.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    let rows: Vec<Option<(bool, bool, bool)>> = trial_seeds(cfg.seed ^ 3, cfg.draws)
        .into_par_iter()
        .map(|s| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let pilot: Vec<f64> = pop.iter().copied().filter(|_| r.random::<f64>() < cfg.theta_p).collect();
            let n_final = pop.iter().filter(|_| r.random::<f64>() < cfg.theta).count() as f64;
            let sum = SampleSummary::from_slice(&pilot).ok()?;
            let ps = PilotSummary::new(cfg.theta_p, sum.n, sum.mean, sum.var, SampleUnit::Block, 1).ok()?;
            let mean_ok = match lower_bound_mean(&ps, cfg.delta1) {
                Ok(l) => mu >= l,
                Err(BoundsError::NonPositiveMean(_)) => true,
                Err(_) => return None,
            };
            let var_ok = match upper_bound_variance_single(&ps, cfg.theta, cfg.delta2) {
                Ok(u) => n_final > 0.0 && sigma2 / n_final <= u,
                Err(BoundsError::InfeasibleRate(_)) => true,
                Err(_) => return None,
            };
            let pop_ok = n >= lower_bound_population(&ps, cfg.delta2).ok()?;
            Some((mean_ok, var_ok, pop_ok))
        })
        .collect();
    let pick = |f: fn(&(bool, bool, bool)) -> bool| rows.iter().map(|o| o.as_ref().map(f)).collect::<Vec<_>>();
    Ok(BoundChainReport {
        draws: cfg.draws,
        true_mean: mu,
        true_var: sigma2,
        mean: validity(pick(|r| r.0), cfg.delta1, mu),
        variance: validity(pick(|r| r.1), cfg.delta2, sigma2),
        population: validity(pick(|r| r.2), cfg.delta2 / 3.0, n),
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PropagationReport {
    pub cases: usize,
    pub product_violations: usize,
    /// The standard quotient rule (e1+e2)/(1+min(e1,e2)).
    pub quotient_violations: usize,
    /// The worst-case quotient rule (e1+e2)/(1−e2).
    pub quotient_tight_violations: usize,
    pub sum_violations: usize,
}

/// Random (e1, e2) and realized errors inside them, half of the draws at
/// the ± extremes where the rules are tight.
pub fn propagation_experiment(cases: usize, seed: u64) -> PropagationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = PropagationReport {
        cases,
        product_violations: 0,
        quotient_violations: 0,
        quotient_tight_violations: 0,
        sum_violations: 0,
    };
    let tol = 1.0 + 1e-12;
    for _ in 0..cases {
        let e1 = rng.random_range(0.001..0.5);
        let e2 = rng.random_range(0.001..0.5);
        let mut dev = |e: f64| if rng.random::<bool>() { if rng.random::<bool>() { e } else { -e } } else { rng.random_range(-e..=e) };
        let (a, b) = (dev(e1), dev(e2));
        let (x, y) = (rng.random_range(0.1..1000.0), rng.random_range(0.1..1000.0));
        let (c1, c2) = (rng.random_range(0.1..10.0), rng.random_range(0.1..10.0));
        let (xh, yh) = (x * (1.0 + a), y * (1.0 + b));
        let rel = |est: f64, truth: f64| (est - truth).abs() / truth;
        let prod = rel(xh * yh, x * y);
        let quot = rel(xh / yh, x / y);
        let sum = rel(c1 * xh + c2 * yh, c1 * x + c2 * y);
        r.product_violations += (prod > propagate_product(e1, e2) * tol) as usize;
        r.quotient_violations += (quot > propagate_quotient(e1, e2) * tol) as usize;
        r.quotient_tight_violations += (quot > propagate_quotient_tight(e1, e2) * tol) as usize;
        r.sum_violations += (sum > propagate_sum(e1, e2) * tol) as usize;
    }
    r
}
