//! Exact sampling distributions by enumerating every block subset, and the
//! commutation checks built on them: sampling blocks before a selection,
//! join or union gives the same output distribution as applying the
//! operation first and then sampling its output by block provenance.

use crate::engine::{execute, BlockTable, EngineError, ExecOptions, Store, Value};
use crate::joinstats::MAX_ENUMERATION_BITS;
use crate::sql::{parse_query, AggFunc, Expr, Query, SelectItem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};

/// Outcome (rendered result rows) → probability.
pub type OutcomeDistribution = BTreeMap<String, f64>;

/// (reference, block count, rate) for each sampled reference.
type Units = Vec<(String, usize, f64)>;

fn units(store: &Store, branches: &[Query], rates: &[(String, f64)]) -> Result<Units, EngineError> {
    let mut out = Vec::new();
    for (r, theta) in rates {
        if !(*theta > 0.0 && *theta <= 1.0) {
            return Err(EngineError::Invalid(format!("rate {theta} for '{r}' must lie in (0,1]")));
        }
        let item = branches
            .iter()
            .flat_map(|q| q.from.iter())
            .find(|f| f.reference() == r)
            .ok_or_else(|| EngineError::UnknownTable(r.clone()))?;
        let table = item.table_name().ok_or_else(|| EngineError::Invalid("subquery in enumeration".into()))?;
        out.push((r.clone(), store.table_stats(table)?.blocks as usize, *theta));
    }
    let bits: usize = out.iter().map(|u| u.1).sum();
    if bits > MAX_ENUMERATION_BITS {
        return Err(EngineError::Invalid(format!("{bits} blocks to enumerate (at most {MAX_ENUMERATION_BITS})")));
    }
    Ok(out)
}

/// Every joint block selection with its probability.
fn selections(u: &Units) -> Vec<(HashMap<String, Vec<usize>>, f64)> {
    let bits: usize = u.iter().map(|x| x.1).sum();
    let mut out = Vec::with_capacity(1 << bits);
    for mask in 0u64..(1u64 << bits) {
        let (mut sel, mut p, mut shift) = (HashMap::new(), 1.0, 0);
        for (r, n, theta) in u {
            let chosen: Vec<usize> = (0..*n).filter(|b| mask >> (shift + b) & 1 == 1).collect();
            p *= theta.powi(chosen.len() as i32) * (1.0 - theta).powi((*n - chosen.len()) as i32);
            shift += n;
            sel.insert(r.clone(), chosen);
        }
        if p > 0.0 {
            out.push((sel, p));
        }
    }
    out
}

fn render(rows: &[Vec<Value>]) -> String {
    rows.iter().map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")).collect::<Vec<_>>().join(";")
}

/// Exact output distribution of `q` when each listed reference keeps each
/// of its blocks independently with its rate. At most 20 blocks in total.
pub fn enumerate_sampling_distribution(store: &Store, q: &Query, rates: &[(String, f64)]) -> Result<OutcomeDistribution, EngineError> {
    let u = units(store, std::slice::from_ref(q), rates)?;
    let mut dist = OutcomeDistribution::new();
    for (sel, p) in selections(&u) {
        let opts = ExecOptions { seed: 0, block_selection: sel };
        *dist.entry(render(&execute(q, store, &opts)?.rows)).or_default() += p;
    }
    Ok(dist)
}

/// SQL SUM over several branches (a UNION ALL feeding one SUM).
fn add_sums(vals: impl Iterator<Item = Value>) -> Value {
    vals.fold(Value::Null, |acc, v| match (acc, v) {
        (Value::Null, v) => v,
        (a, Value::Null) => a,
        (Value::Int(a), Value::Int(b)) => Value::Int(a + b),
        (a, b) => Value::Float(a.as_f64().unwrap() + b.as_f64().unwrap()),
    })
}

fn single_sum(q: &Query) -> Result<&Expr, EngineError> {
    match q.select.as_slice() {
        [SelectItem { expr: Expr::Aggregate { func: AggFunc::Sum, arg: Some(arg), distinct: false }, .. }]
            if q.group_by.is_empty() =>
        {
            Ok(arg)
        }
        _ => Err(EngineError::Invalid("equivalence checks need a single ungrouped SUM".into())),
    }
}

/// Sample first: each branch runs on the sampled blocks, results summed.
fn pushed(store: &Store, branches: &[Query], rates: &[(String, f64)]) -> Result<OutcomeDistribution, EngineError> {
    let u = units(store, branches, rates)?;
    let mut dist = OutcomeDistribution::new();
    for (sel, p) in selections(&u) {
        let opts = ExecOptions { seed: 0, block_selection: sel };
        let vals = branches.iter().map(|q| execute(q, store, &opts).map(|r| r.rows[0][0].clone())).collect::<Result<Vec<_>, _>>()?;
        *dist.entry(add_sums(vals.into_iter()).to_string()).or_default() += p;
    }
    Ok(dist)
}

/// Operate first: run each branch unsampled, keep each output row's source
/// blocks, then sample the output by those blocks.
fn pulled(store: &Store, branches: &[Query], rates: &[(String, f64)]) -> Result<OutcomeDistribution, EngineError> {
    let u = units(store, branches, rates)?;
    // (reference, block) pairs per output cell with the cell's row count and sum.
    let mut cells: Vec<(Vec<(String, usize)>, i64, Value)> = Vec::new();
    for q in branches {
        let arg = single_sum(q)?.clone();
        let sampled: Vec<String> =
            q.from.iter().map(|f| f.reference().to_string()).filter(|r| u.iter().any(|x| &x.0 == r)).collect();
        let mut prov = q.clone();
        prov.select = sampled.iter().map(|r| SelectItem { expr: Expr::BlockId(r.clone()), alias: None }).collect();
        prov.select.push(SelectItem { expr: Expr::agg(AggFunc::Count, None), alias: None });
        prov.select.push(SelectItem { expr: Expr::agg(AggFunc::Sum, Some(arg)), alias: None });
        prov.group_by = sampled.iter().map(|r| Expr::BlockId(r.clone())).collect();
        for row in execute(&prov, store, &ExecOptions::default())?.rows {
            let tags = sampled.iter().zip(&row).map(|(r, v)| (r.clone(), v.as_f64().unwrap() as usize)).collect();
            let Value::Int(n) = row[sampled.len()] else { unreachable!("COUNT is an integer") };
            cells.push((tags, n, row[sampled.len() + 1].clone()));
        }
    }
    let mut dist = OutcomeDistribution::new();
    for (sel, p) in selections(&u) {
        let kept = cells.iter().filter(|(tags, _, _)| tags.iter().all(|(r, b)| sel[r].contains(b)));
        let (mut rows, mut vals) = (0, Vec::new());
        for (_, n, v) in kept {
            rows += n;
            vals.push(v.clone());
        }
        let out = if rows == 0 { Value::Null } else { add_sums(vals.into_iter()) };
        *dist.entry(out.to_string()).or_default() += p;
    }
    Ok(dist)
}

/// Largest |p₁(o) − p₂(o)| over all outcomes of either distribution.
pub fn max_deviation(a: &OutcomeDistribution, b: &OutcomeDistribution) -> f64 {
    a.keys()
        .chain(b.keys())
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Selection,
    Join,
    Union,
}

impl Operation {
    pub const ALL: [Operation; 3] = [Operation::Selection, Operation::Join, Operation::Union];
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EquivalenceReport {
    pub operation: Operation,
    pub theta: f64,
    pub blocks: usize,
    pub outcomes: usize,
    pub max_deviation: f64,
    pub equivalent: bool,
}

fn random_table(name: &str, blocks: usize, rows_per_block: u64, keys: i64, rng: &mut ChaCha8Rng) -> BlockTable {
    let n = blocks * rows_per_block as usize;
    let k = (0..n).map(|_| rng.random_range(0..keys)).collect();
    let x = (0..n).map(|_| rng.random_range(0..10)).collect();
    BlockTable::from_ints(name, &[("k", k), ("x", x)], rows_per_block).unwrap()
}

/// Pushed vs pulled sampling for one operation on random small tables
/// (8 blocks for selection, 3 + 3 for join, 4 + 4 for union).
pub fn test_equivalence(op: Operation, theta: f64, seed: u64) -> Result<EquivalenceReport, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = Store::in_memory();
    let (sizes, branches): (&[usize], Vec<&str>) = match op {
        Operation::Selection => (&[8], vec!["SELECT SUM(x) FROM a WHERE x > 4"]),
        Operation::Join => (&[3, 3], vec!["SELECT SUM(a.x * b.x) FROM a JOIN b ON a.k = b.k"]),
        Operation::Union => (&[4, 4], vec!["SELECT SUM(x) FROM a", "SELECT SUM(x) FROM b"]),
    };
    for (name, n) in ["a", "b"].iter().zip(sizes) {
        store.put(random_table(name, *n, 3, 3, &mut rng), false)?;
    }
    let branches: Vec<Query> = branches.iter().map(|s| parse_query(s).expect("fixed query parses")).collect();
    let rates: Vec<(String, f64)> = ["a", "b"].iter().take(sizes.len()).map(|r| (r.to_string(), theta)).collect();
    let push = pushed(&store, &branches, &rates)?;
    let pull = pulled(&store, &branches, &rates)?;
    let dev = max_deviation(&push, &pull);
    let total: f64 = push.values().sum();
    Ok(EquivalenceReport {
        operation: op,
        theta,
        blocks: sizes.iter().sum(),
        outcomes: push.len(),
        max_deviation: dev.max((total - 1.0).abs()),
        equivalent: dev < 1e-12 && (total - 1.0).abs() < 1e-12,
    })
}
