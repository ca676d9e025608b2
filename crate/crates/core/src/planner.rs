//! Two-stage planning: run a pilot on a block sample, turn its per-block
//! statistics into one constraint per (leaf aggregate, group), search the
//! sampling-plan space for the cheapest plan satisfying all of them, then
//! run the final query (or the exact query when no plan pays off).

use crate::bounds::population_lower_bound;
use crate::budget::{allocate_confidence, delta_split, ErrorSpec, PerAggregateBudget};
use crate::config::{Config, MeanBound};
use crate::engine::{execute, EngineError, ExecOptions, ResultTable, Store, Value};
use crate::joinstats::{join_lower_bound_chebyshev, JoinPilot, JoinVarianceModel, MAX_TABLES};
use crate::sql::rewrite::{block_column, group_column, leaf_column};
use crate::sql::{
    large_references, parse, parse_query, rewrite_final, rewrite_pilot, Decomposition, Query, SampleMethod, SqlError,
    TableSample,
};
use crate::stats::{quantile_normal, quantile_student_t, SampleSummary, StatsError};
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Bounds(#[from] crate::bounds::BoundsError),
}

/// Per-table rates for the large tables of a query (θ = 1: read in full),
/// or the exact-execution sentinel.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum SamplingPlan {
    Exact,
    Rates(Vec<(String, f64)>),
}

impl SamplingPlan {
    pub fn is_exact(&self) -> bool {
        matches!(self, SamplingPlan::Exact)
    }

    /// Sampling clauses for the final query (rates below 1 only).
    pub fn clauses(&self) -> Vec<(String, TableSample)> {
        match self {
            SamplingPlan::Exact => Vec::new(),
            SamplingPlan::Rates(r) => r
                .iter()
                .filter(|(_, t)| *t < 1.0)
                .map(|(n, t)| (n.clone(), TableSample { method: SampleMethod::System, percent: t * 100.0 }))
                .collect(),
        }
    }
}

/// One row of pilot output.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotRow {
    pub group: Vec<Value>,
    /// Block ids: pilot table first, then the other large tables.
    pub blocks: [u32; MAX_TABLES],
    pub leaves: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotData {
    pub theta_p: f64,
    /// Sampled blocks of the pilot table, including ones with no output.
    pub n_p: u64,
    /// Block counts of the other large tables.
    pub dims: Vec<usize>,
    pub rows: Vec<PilotRow>,
}

fn as_f64(v: &Value) -> Result<f64, PlanError> {
    match v {
        Value::Null => Ok(0.0),
        other => other.as_f64().ok_or_else(|| EngineError::Type(format!("pilot aggregate is not numeric: {other:?}")).into()),
    }
}

impl PilotData {
    pub fn from_result(r: &ResultTable, groups: usize, k: usize, leaves: usize, theta_p: f64, n_p: u64, dims: Vec<usize>) -> Result<Self, PlanError> {
        let idx = |name: String| r.column(&name).ok_or_else(|| EngineError::Invalid(format!("pilot output lacks {name}")));
        let g: Vec<usize> = (0..groups).map(|i| idx(group_column(i))).collect::<Result<_, _>>()?;
        let b: Vec<usize> = (0..k).map(|i| idx(block_column(i))).collect::<Result<_, _>>()?;
        let l: Vec<usize> = (0..leaves).map(|i| idx(leaf_column(i))).collect::<Result<_, _>>()?;
        let mut rows = Vec::with_capacity(r.rows.len());
        for row in &r.rows {
            let mut blocks = [0u32; MAX_TABLES];
            for (slot, &c) in blocks.iter_mut().zip(&b) {
                *slot = match row[c] {
                    Value::Int(v) => v as u32,
                    ref other => return Err(EngineError::Type(format!("block id {other:?}")).into()),
                };
            }
            rows.push(PilotRow {
                group: g.iter().map(|&c| row[c].clone()).collect(),
                blocks,
                leaves: l.iter().map(|&c| as_f64(&row[c])).collect::<Result<_, _>>()?,
            });
        }
        Ok(PilotData { theta_p, n_p, dims, rows })
    }

    /// Distinct groups in output order.
    pub fn groups(&self) -> Vec<Vec<Value>> {
        let mut g: Vec<Vec<Value>> = self.rows.iter().map(|r| r.group.clone()).collect();
        g.sort();
        g.dedup();
        g
    }

    /// The join pilot of one (group, leaf): per-pilot-block cross sums,
    /// sign-flipped so the pilot total is nonnegative.
    pub fn join_pilot(&self, group: &[Value], leaf: usize) -> JoinPilot {
        let mut by_block: BTreeMap<u32, Vec<([u32; 2], f64)>> = BTreeMap::new();
        let mut total = 0.0;
        for r in self.rows.iter().filter(|r| r.group == group) {
            let v = r.leaves[leaf];
            total += v;
            by_block.entry(r.blocks[0]).or_default().push(([r.blocks[1], r.blocks[2]], v));
        }
        let sign = if total < 0.0 { -1.0 } else { 1.0 };
        let blocks = by_block.into_values().map(|cells| cells.into_iter().map(|(k, v)| (k, sign * v)).collect()).collect();
        JoinPilot { theta_p: self.theta_p, n_p: self.n_p, dims: self.dims.clone(), blocks }
    }
}

/// φ_ij(Θ): z_{(1+p')/2}·√U_V[Θ] ≤ e·L_μ for one leaf aggregate in one group.
#[derive(Debug, Clone)]
pub struct PlanConstraint {
    pub leaf: usize,
    pub group: Vec<Value>,
    pub budget: PerAggregateBudget,
    pub z: f64,
    /// `None` when the pilot cannot certify a positive lower bound.
    pub l_mu: Option<f64>,
    /// `None` when the variance bound could not be built.
    pub model: Option<JoinVarianceModel>,
    /// Pilot HT estimate of the (sign-normalized) total.
    pub estimate: f64,
    /// Pilot blocks in which the group appears.
    pub support: u64,
}

impl PlanConstraint {
    pub fn u_v(&self, rates: &[f64]) -> Option<f64> {
        self.model.as_ref()?.evaluate(rates).ok()
    }

    /// e·L_μ − z·√U_V; nonnegative iff the constraint holds.
    pub fn slack(&self, rates: &[f64]) -> f64 {
        match (self.l_mu, self.u_v(rates)) {
            (Some(l), Some(u)) => self.budget.e_ij * l - self.z * u.sqrt(),
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn holds(&self, rates: &[f64]) -> bool {
        self.slack(rates) >= 0.0
    }
}

/// Lower bound on a pilot total: N ≥ L_N and per-block mean ≥ L_mean, each
/// at δ1/2.
pub fn lower_bound_total_t(pilot: &JoinPilot, delta1: f64) -> Result<f64, StatsError> {
    let q = pilot.block_totals();
    let s = SampleSummary::from_slice(&q)?;
    if pilot.theta_p >= 1.0 {
        return Ok(s.mean * s.n as f64);
    }
    let t = quantile_student_t(s.n - 1, 1.0 - delta1 / 2.0)?;
    let l_mean = s.mean - t * s.std_dev() / (s.n as f64).sqrt();
    let l_n = population_lower_bound(s.n as f64, pilot.theta_p, quantile_normal(1.0 - delta1 / 2.0)?);
    Ok(if l_mean > 0.0 { l_n * l_mean } else { l_mean })
}

pub fn build_constraints(pilot: &PilotData, d: &Decomposition, spec: ErrorSpec, cfg: &Config) -> Result<Vec<PlanConstraint>, PlanError> {
    let groups = pilot.groups();
    if groups.is_empty() || d.leaves.is_empty() {
        return Ok(Vec::new());
    }
    let leaf_e = d.leaf_errors(spec.e);
    let p_ij = allocate_confidence(spec.p, d.leaves.len(), groups.len())?;
    let mut out = Vec::with_capacity(groups.len() * d.leaves.len());
    for group in &groups {
        let support = {
            let mut b: Vec<u32> = pilot.rows.iter().filter(|r| &r.group == group).map(|r| r.blocks[0]).collect();
            b.sort_unstable();
            b.dedup();
            b.len() as u64
        };
        for (leaf, e) in leaf_e.iter().enumerate() {
            let budget = delta_split(*e, p_ij, cfg.delta1_fraction, cfg.delta2_fraction)?;
            let jp = pilot.join_pilot(group, leaf);
            let z = quantile_normal((1.0 + budget.p_prime) / 2.0)?;
            let l = match cfg.mean_bound {
                MeanBound::StudentT => lower_bound_total_t(&jp, budget.delta1).ok(),
                MeanBound::Chebyshev if jp.theta_p >= 1.0 => Some(jp.total()),
                MeanBound::Chebyshev => join_lower_bound_chebyshev(&jp, budget.delta1).ok(),
            };
            out.push(PlanConstraint {
                leaf,
                group: group.clone(),
                budget,
                z,
                l_mu: l.filter(|v| *v > 0.0),
                model: JoinVarianceModel::build(&jp, budget.delta2).ok(),
                estimate: jp.total() / jp.theta_p,
                support,
            });
        }
    }
    Ok(out)
}

fn feasible(constraints: &[PlanConstraint], rates: &[f64]) -> bool {
    constraints.iter().all(|c| c.holds(rates))
}

/// Minimize θ_i subject to every constraint, with tables outside `subset`
/// at θ = 1 and the other members of `subset` at the cap. `None` if even
/// θ_i = cap is infeasible.
pub fn solve_min_rate(constraints: &[PlanConstraint], k: usize, subset: usize, target: usize, cfg: &Config) -> Option<Vec<f64>> {
    assert!(subset >> target & 1 == 1, "target must be in the subset");
    let mut rates: Vec<f64> = (0..k).map(|j| if subset >> j & 1 == 1 { cfg.rate_cap } else { 1.0 }).collect();
    let at = |theta: f64, rates: &mut Vec<f64>| {
        rates[target] = theta;
        feasible(constraints, rates)
    };
    if !at(cfg.rate_cap, &mut rates) {
        return None;
    }
    if at(cfg.rate_floor, &mut rates) {
        return Some(rates);
    }
    let (mut lo, mut hi) = (cfg.rate_floor, cfg.rate_cap);
    while hi - lo > cfg.tolerance {
        let mid = 0.5 * (lo + hi);
        if at(mid, &mut rates) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    rates[target] = hi;
    Some(rates)
}

/// One solve per (nonempty subset S of the large tables, target i ∈ S);
/// duplicates removed, enumeration order kept.
pub fn enumerate_candidates(constraints: &[PlanConstraint], k: usize, cfg: &Config) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for subset in 1..(1usize << k) {
        for target in (0..k).filter(|i| subset >> i & 1 == 1) {
            if let Some(r) = solve_min_rate(constraints, k, subset, target, cfg) {
                if !out.contains(&r) {
                    out.push(r);
                }
            }
        }
    }
    out
}

/// Scanned-volume cost: Σ bytes·θ, θ = 1 for tables the plan leaves alone.
pub fn estimate_cost(plan: &SamplingPlan, tables: &[(String, u64)]) -> f64 {
    let rate = |r: &str| match plan {
        SamplingPlan::Exact => 1.0,
        SamplingPlan::Rates(v) => v.iter().find(|(n, _)| n == r).map_or(1.0, |(_, t)| *t),
    };
    tables.iter().map(|(r, bytes)| *bytes as f64 * rate(r)).sum()
}

/// Index of the cheapest candidate strictly cheaper than exact execution.
pub fn choose_plan(costs: &[f64], exact_cost: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in costs.iter().enumerate() {
        if *c < exact_cost && best.is_none_or(|b| *c < costs[b]) {
            best = Some(i);
        }
    }
    best
}

pub fn derive_seed(seed: u64, stage: u64) -> u64 {
    (crate::engine::sample::unit_uniform(seed, "stage", stage) * (1u64 << 53) as f64) as u64
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PilotReport {
    pub reference: String,
    pub table: String,
    pub theta_p: f64,
    pub blocks_sampled: u64,
    pub blocks_total: u64,
    pub groups: usize,
    pub scanned_bytes: u64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Candidate {
    pub rates: Vec<(String, f64)>,
    pub cost: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConstraintReport {
    pub aggregate: String,
    pub group: Vec<Value>,
    pub e: f64,
    pub p: f64,
    pub lower_bound: Option<f64>,
    pub variance_bound: Option<f64>,
    pub slack: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PlanReport {
    pub guarantee: Option<(f64, f64)>,
    pub large_tables: Vec<(String, u64)>,
    pub pilot: Option<PilotReport>,
    pub candidates: Vec<Candidate>,
    pub exact_cost: f64,
    pub chosen: SamplingPlan,
    pub chosen_cost: f64,
    /// Why the exact query runs, when it does.
    pub fallback: Option<String>,
    pub constraints: Vec<ConstraintReport>,
    pub scale_factor: f64,
}

/// A parsed query with everything needed to run its final stage.
#[derive(Debug, Clone)]
pub struct PlannedQuery {
    pub query: Query,
    pub report: PlanReport,
}

impl PlannedQuery {
    fn exact(query: Query, guarantee: Option<(f64, f64)>, exact_cost: f64, large: Vec<(String, u64)>, why: Option<String>) -> Self {
        let report = PlanReport {
            guarantee,
            large_tables: large,
            pilot: None,
            candidates: Vec::new(),
            exact_cost,
            chosen: SamplingPlan::Exact,
            chosen_cost: exact_cost,
            fallback: why,
            constraints: Vec::new(),
            scale_factor: 1.0,
        };
        PlannedQuery { query, report }
    }
}

/// Parse and plan. Runs the pilot query when the query carries an error
/// clause; otherwise (or on any planning fallback) the plan is exact.
pub fn plan_query(sql: &str, store: &Store, cfg: &Config, seed: u64) -> Result<PlannedQuery, PlanError> {
    let q = match parse(sql) {
        Ok(q) => q,
        Err(SqlError::Unsupported(what)) => {
            let q = parse_query(sql)?;
            let g = q.error.map(|e| (e.error_percent / 100.0, e.probability_percent / 100.0));
            let cost = query_bytes(&q, store)?.iter().map(|(_, b)| *b as f64).sum();
            return Ok(PlannedQuery::exact(q, g, cost, Vec::new(), Some(format!("unsupported: {what}"))));
        }
        Err(e) => return Err(e.into()),
    };
    let tables = query_bytes(&q, store)?;
    let exact_cost: f64 = tables.iter().map(|(_, b)| *b as f64).sum();
    let Some(err) = q.error else {
        return Ok(PlannedQuery::exact(q, None, exact_cost, Vec::new(), None));
    };
    let spec = ErrorSpec::new(err.error_percent / 100.0, err.probability_percent / 100.0)?;
    let guarantee = Some((spec.e, spec.p));
    let rows_of = |t: &str| store.table_stats(t).ok().map(|s| s.rows);
    let large = large_references(&q, &rows_of, cfg.large_table_threshold);
    if large.is_empty() {
        return Ok(PlannedQuery::exact(q, guarantee, exact_cost, large, Some("no large tables".into())));
    }
    if large.len() > MAX_TABLES {
        let why = format!("{} large tables (at most {MAX_TABLES} supported)", large.len());
        return Ok(PlannedQuery::exact(q, guarantee, exact_cost, large, Some(why)));
    }

    // Stage one: the pilot.
    let pilot_ref = large[0].0.clone();
    let table_of = |r: &str| q.from.iter().find(|f| f.reference() == r).and_then(|f| f.table_name()).unwrap().to_string();
    let pilot_stats = store.table_stats(&table_of(&pilot_ref))?;
    let mut theta_p = cfg.theta_p;
    if !q.group_by.is_empty() {
        let cover = crate::bounds::min_rate_group_coverage(pilot_stats.rows, pilot_stats.block_size, cfg.g, cfg.p_f)?;
        theta_p = theta_p.max(cover);
    }
    let refs: Vec<String> = large.iter().map(|(r, _)| r.clone()).collect();
    let (pilot_q, d) = rewrite_pilot(&q, &pilot_ref, theta_p, &refs)?;
    let pilot_res = execute(&pilot_q.query, store, &ExecOptions::seeded(derive_seed(seed, 1)))?;
    let n_p = pilot_res.samples.iter().find(|s| s.reference == pilot_ref).map_or(0, |s| s.units_drawn);
    let dims: Vec<usize> =
        refs[1..].iter().map(|r| store.table_stats(&table_of(r)).map(|s| s.blocks as usize)).collect::<Result<_, _>>()?;
    let pilot = PilotData::from_result(&pilot_res, q.group_by.len(), refs.len(), d.leaves.len(), theta_p, n_p, dims)?;
    let groups = pilot.groups();
    let pilot_report = PilotReport {
        reference: pilot_ref.clone(),
        table: table_of(&pilot_ref),
        theta_p,
        blocks_sampled: n_p,
        blocks_total: pilot_stats.blocks,
        groups: groups.len(),
        scanned_bytes: pilot_res.scanned_bytes,
    };
    let mut planned = PlannedQuery::exact(q.clone(), guarantee, exact_cost, large.clone(), None);
    planned.report.pilot = Some(pilot_report);
    let fallback = |mut p: PlannedQuery, why: String| {
        p.report.fallback = Some(why);
        Ok(p)
    };
    if n_p < cfg.min_pilot_units {
        return fallback(planned, format!("pilot sampled {n_p} blocks (minimum {})", cfg.min_pilot_units));
    }
    if groups.is_empty() {
        return fallback(planned, "pilot produced no rows".into());
    }

    let constraints = build_constraints(&pilot, &d, spec, cfg)?;
    if let Some(c) = constraints.iter().find(|c| c.support < cfg.min_pilot_units) {
        return fallback(planned, format!("group {:?} appears in {} pilot blocks (minimum {})", c.group, c.support, cfg.min_pilot_units));
    }
    for group in &groups {
        let totals: Vec<f64> =
            (0..d.leaves.len()).map(|l| pilot.rows.iter().filter(|r| &r.group == group).map(|r| r.leaves[l]).sum()).collect();
        if d.outputs.iter().flatten().any(|c| !c.sums_are_sign_consistent(&totals)) {
            return fallback(planned, "sum of aggregates with opposite signs".into());
        }
    }

    // Plan search.
    let k = refs.len();
    let candidates = enumerate_candidates(&constraints, k, cfg);
    let bytes_by_ref = tables;
    let named = |rates: &[f64]| SamplingPlan::Rates(refs.iter().cloned().zip(rates.iter().copied()).collect());
    let costs: Vec<f64> = candidates.iter().map(|r| estimate_cost(&named(r), &bytes_by_ref)).collect();
    planned.report.candidates = candidates
        .iter()
        .zip(&costs)
        .map(|(r, c)| Candidate { rates: refs.iter().cloned().zip(r.iter().copied()).collect(), cost: *c })
        .collect();
    let report_constraints = |rates: &[f64]| {
        constraints
            .iter()
            .map(|c| ConstraintReport {
                aggregate: d.leaves[c.leaf].to_expr().to_string(),
                group: c.group.clone(),
                e: c.budget.e_ij,
                p: c.budget.p_ij,
                lower_bound: c.l_mu,
                variance_bound: c.u_v(rates),
                slack: c.slack(rates),
            })
            .collect::<Vec<_>>()
    };
    match choose_plan(&costs, exact_cost) {
        Some(i) => {
            let plan = named(&candidates[i]);
            planned.report.constraints = report_constraints(&candidates[i]);
            planned.report.scale_factor = candidates[i].iter().product::<f64>().recip();
            planned.report.chosen = plan;
            planned.report.chosen_cost = costs[i];
            Ok(planned)
        }
        None => {
            planned.report.constraints = report_constraints(&vec![cfg.rate_cap; k]);
            let why = if candidates.is_empty() {
                "plan rejected: no sampling plan within the rate cap meets the error target"
            } else {
                "plan rejected: every feasible plan costs at least the exact query"
            };
            fallback(planned, why.into())
        }
    }
}

/// (reference, stored bytes) for every FROM item.
fn query_bytes(q: &Query, store: &Store) -> Result<Vec<(String, u64)>, PlanError> {
    q.from
        .iter()
        .map(|f| {
            let t = f.table_name().ok_or_else(|| SqlError::Invalid("unflattened subquery".into()))?;
            Ok((f.reference().to_string(), store.table_stats(t)?.bytes))
        })
        .collect()
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct QueryOutcome {
    pub result: ResultTable,
    pub report: PlanReport,
}

/// Run the planned query's final stage.
pub fn execute_planned(p: &PlannedQuery, store: &Store, seed: u64) -> Result<QueryOutcome, PlanError> {
    let rw = rewrite_final(&p.query, &p.report.chosen.clauses())?;
    let mut result = execute(&rw.query, store, &ExecOptions::seeded(derive_seed(seed, 2)))?;
    result.columns = p.query.select.iter().map(|s| s.output_name()).collect();
    Ok(QueryOutcome { result, report: p.report.clone() })
}

/// Full pipeline: plan (with pilot) then run.
pub fn run_query(sql: &str, store: &Store, cfg: &Config, seed: u64) -> Result<QueryOutcome, PlanError> {
    let planned = plan_query(sql, store, cfg, seed)?;
    execute_planned(&planned, store, seed)
}

/// Exact execution of any parseable query, ignoring its error clause.
pub fn run_exact(sql: &str, store: &Store) -> Result<ResultTable, PlanError> {
    let q = parse_query(sql)?;
    let q = Query { error: None, ..q };
    Ok(execute(&q, store, &ExecOptions::default())?)
}

/// Leaf totals grouped by group key, for callers that want pilot summaries.
pub fn pilot_totals(p: &PilotData) -> HashMap<Vec<Value>, Vec<f64>> {
    let mut out: HashMap<Vec<Value>, Vec<f64>> = HashMap::new();
    for r in &p.rows {
        let e = out.entry(r.group.clone()).or_insert_with(|| vec![0.0; r.leaves.len()]);
        for (a, v) in e.iter_mut().zip(&r.leaves) {
            *a += v;
        }
    }
    out
}
