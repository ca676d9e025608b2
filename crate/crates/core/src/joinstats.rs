//! Variance machinery for Horvitz–Thompson SUM estimates over joins whose
//! input tables are each block-sampled independently.
//!
//! For tables 1..k sampled at rates θ_i, with 𝒥(i_1..i_k) the aggregate of the
//! join restricted to one block from each table, the estimator
//! Σ_sampled 𝒥 / Πθ_i has
//!
//!   Var = Σ_{S≠∅} c_S · Y_S,   c_S = Π_{i∈S} (1/θ_i − 1),
//!   Y_S = Σ_{idx_S} (Σ_{idx_{S^c}} 𝒥)².
//!
//! Only table 1 is sampled by the pilot, so every Y_S is bounded from the
//! pilot blocks: when 1 ∈ S, Y_S is a population total over table-1 blocks of
//! a per-block quantity; otherwise each inner sum is such a total and is
//! bounded in magnitude, then squared.

use crate::stats::{quantile_student_t, SampleSummary, StatsError};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JoinStatsError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("enumeration too large: 2^{0} outcomes")]
    TooLarge(usize),
}

pub type Result<T> = std::result::Result<T, JoinStatsError>;

pub const MAX_TABLES: usize = 3;

/// Join cross-sums for the n1 sampled table-1 blocks against all N2 table-2 blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinBlockMatrix {
    pub cells: Vec<Vec<f64>>,
    pub n2: usize,
}

impl JoinBlockMatrix {
    pub fn new(cells: Vec<Vec<f64>>) -> Result<Self> {
        let n2 = cells.first().map_or(0, Vec::len);
        if cells.iter().any(|r| r.len() != n2) || cells.iter().flatten().any(|v| !v.is_finite()) {
            return Err(StatsError::Domain("ragged or non-finite join matrix".into()).into());
        }
        Ok(JoinBlockMatrix { cells, n2 })
    }

    pub fn n1(&self) -> usize {
        self.cells.len()
    }
}

/// y1_i = (Σ_{i2} cell)², y2[i2][i] = cell[i][i2], y3_i = Σ_{i2} cell².
#[derive(Debug, Clone, PartialEq)]
pub struct JoinVarianceInputs {
    pub theta_p: f64,
    pub y1: Vec<f64>,
    pub y2: Vec<Vec<f64>>,
    pub y3: Vec<f64>,
    pub n2: usize,
}

pub fn build_join_inputs(m: &JoinBlockMatrix, theta_p: f64) -> JoinVarianceInputs {
    let y1 = m.cells.iter().map(|r| r.iter().sum::<f64>().powi(2)).collect();
    let y3 = m.cells.iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let y2 = (0..m.n2).map(|i2| m.cells.iter().map(|r| r[i2]).collect()).collect();
    JoinVarianceInputs { theta_p, y1, y2, y3, n2: m.n2 }
}

fn check_delta(delta: f64) -> Result<f64> {
    if delta > 0.0 && delta < 1.0 {
        Ok(delta)
    } else {
        Err(StatsError::Domain(format!("delta={delta} must lie in (0,1)")).into())
    }
}

/// One-sided upper bound on the population total of y from a rate-θ_p
/// sample: (Σy + √n·σ̂(y)·t_{n−1,1−δ}) / θ_p.
pub fn u_y_upper(y: &[f64], theta_p: f64, delta: f64) -> Result<f64> {
    let s = SampleSummary::from_slice(y)?;
    u_y_upper_summary(&s, theta_p, delta)
}

/// Same bound from moments; observations not listed are zeros.
pub fn u_y_upper_moments(n: u64, sum: f64, sumsq: f64, theta_p: f64, delta: f64) -> Result<f64> {
    let s = SampleSummary::from_moments(n, sum, sumsq)?;
    u_y_upper_summary(&s, theta_p, delta)
}

fn u_y_upper_summary(s: &SampleSummary, theta_p: f64, delta: f64) -> Result<f64> {
    Ok(total_bounds(s, theta_p, delta)?.1)
}

/// (lower, upper) one-sided bounds on the population total, each at level δ.
fn total_bounds(s: &SampleSummary, theta_p: f64, delta: f64) -> Result<(f64, f64)> {
    let delta = check_delta(delta)?;
    if s.n < 2 {
        return Err(StatsError::InsufficientSample { need: 2, got: s.n }.into());
    }
    if !(theta_p > 0.0 && theta_p <= 1.0) {
        return Err(StatsError::Domain(format!("theta_p={theta_p} must lie in (0,1]")).into());
    }
    let n = s.n as f64;
    let half = if s.var > 0.0 { n.sqrt() * s.std_dev() * quantile_student_t(s.n - 1, 1.0 - delta)? } else { 0.0 };
    let sum = s.mean * n;
    Ok(((sum - half) / theta_p, (sum + half) / theta_p))
}

/// Upper bound on |population total|: one-sided when every observation is
/// nonnegative, otherwise two-sided with δ split across the two tails.
fn magnitude_bound(n: u64, sum: f64, sumsq: f64, any_negative: bool, theta_p: f64, delta: f64) -> Result<f64> {
    let s = SampleSummary::from_moments(n, sum, sumsq)?;
    if any_negative {
        let (lo, hi) = total_bounds(&s, theta_p, delta / 2.0)?;
        Ok(lo.abs().max(hi.abs()))
    } else {
        Ok(total_bounds(&s, theta_p, delta)?.1.max(0.0))
    }
}

fn check_rates(plan: &[f64]) -> Result<()> {
    if plan.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(StatsError::Domain(format!("sampling rates {plan:?} must lie in (0,1]")).into());
    }
    Ok(())
}

fn coeff(plan: &[f64], mask: usize) -> f64 {
    plan.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, t)| 1.0 / t - 1.0).product()
}

/// Two-table upper bound on Var of the HT SUM estimate at rates (θ1, θ2),
/// holding with probability ≥ 1 − δ2 (δ2 shared evenly across N2 + 2 bounds).
pub fn var_upper_two_table(inp: &JoinVarianceInputs, plan: [f64; 2], delta2: f64) -> Result<f64> {
    check_rates(&plan)?;
    let d = check_delta(delta2)? / (inp.n2 + 2) as f64;
    let [t1, t2] = plan;
    let u1 = u_y_upper(&inp.y1, inp.theta_p, d)?;
    let u3 = u_y_upper(&inp.y3, inp.theta_p, d)?;
    let mut u2 = 0.0;
    for col in &inp.y2 {
        let s = SampleSummary::from_slice(col)?;
        let sumsq = col.iter().map(|v| v * v).sum();
        let m = magnitude_bound(s.n, s.mean * s.n as f64, sumsq, col.iter().any(|v| *v < 0.0), inp.theta_p, d)?;
        u2 += m * m;
    }
    Ok((1.0 - t1) / t1 * u1 + (1.0 - t2) / t2 * u2 + (1.0 - t1) * (1.0 - t2) / (t1 * t2) * u3)
}

/// Pilot harvest for a k-table join (k ≤ 3): for each sampled table-1 block,
/// the nonzero cross-sums keyed by the block ids of tables 2..k. `n_p` counts
/// every sampled table-1 block, including those with no join output.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinPilot {
    pub theta_p: f64,
    pub n_p: u64,
    /// Block counts of tables 2..k.
    pub dims: Vec<usize>,
    pub blocks: Vec<Vec<([u32; 2], f64)>>,
}

impl JoinPilot {
    pub fn k(&self) -> usize {
        self.dims.len() + 1
    }

    pub fn from_matrix(m: &JoinBlockMatrix, theta_p: f64) -> Self {
        let blocks = m
            .cells
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| ([i as u32, 0], *v)).collect())
            .collect();
        JoinPilot { theta_p, n_p: m.n1() as u64, dims: vec![m.n2], blocks }
    }

    /// Sum of all harvested cross-sums (the pilot's raw join total).
    pub fn total(&self) -> f64 {
        self.blocks.iter().flatten().map(|(_, v)| v).sum()
    }

    /// Per-block join totals, zeros included.
    pub fn block_totals(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.blocks.iter().map(|b| b.iter().map(|(_, v)| v).sum()).collect();
        v.resize(self.n_p as usize, 0.0);
        v
    }
}

/// Number of sub-bounds the k-table bound spends δ on.
pub fn sub_bound_count(dims: &[usize]) -> usize {
    let k = dims.len() + 1;
    let case2: usize = dims.iter().map(|n| n + 1).product::<usize>() - 1;
    (1 << (k - 1)) + case2
}

/// Bounds Û_S on every Y_S, fixed once from the pilot; evaluating at a plan
/// is then a weighted sum.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinVarianceModel {
    pub k: usize,
    /// (subset mask, Û_S); bit 0 is table 1.
    pub terms: Vec<(usize, f64)>,
    pub delta: f64,
}

impl JoinVarianceModel {
    pub fn build(pilot: &JoinPilot, delta: f64) -> Result<Self> {
        let k = pilot.k();
        if k > MAX_TABLES {
            return Err(JoinStatsError::Unsupported(format!("{k}-table join (at most {MAX_TABLES})")));
        }
        if pilot.blocks.len() as u64 > pilot.n_p {
            return Err(StatsError::Domain("more harvested blocks than n_p".into()).into());
        }
        let d = check_delta(delta)? / sub_bound_count(&pilot.dims) as f64;
        let mut terms = Vec::new();
        for mask in 1..(1usize << k) {
            // Which of tables 2..k (key positions 0..k−2) are in S.
            let keep: Vec<bool> = (1..k).map(|t| mask >> t & 1 == 1).collect();
            let project = |key: &[u32; 2]| -> [u32; 2] {
                let mut out = [u32::MAX; 2];
                for (j, kept) in keep.iter().enumerate() {
                    if *kept {
                        out[j] = key[j];
                    }
                }
                out
            };
            let u = if mask & 1 == 1 {
                // Case 1: per-block q(i) = Σ_{idx_{S∖1}} (Σ_{idx_{S^c}} 𝒥)².
                let (mut sum, mut sumsq) = (0.0, 0.0);
                for block in &pilot.blocks {
                    let mut groups: HashMap<[u32; 2], f64> = HashMap::new();
                    for (key, v) in block {
                        *groups.entry(project(key)).or_default() += v;
                    }
                    let q: f64 = groups.values().map(|s| s * s).sum();
                    sum += q;
                    sumsq += q * q;
                }
                u_y_upper_moments(pilot.n_p, sum, sumsq, pilot.theta_p, d)?
            } else {
                // Case 2: for each idx_S, bound |Σ_{i1} r(i1)| and square.
                let mut per: BTreeMap<[u32; 2], (f64, f64, bool)> = BTreeMap::new();
                for block in &pilot.blocks {
                    let mut groups: HashMap<[u32; 2], f64> = HashMap::new();
                    for (key, v) in block {
                        *groups.entry(project(key)).or_default() += v;
                    }
                    for (key, r) in groups {
                        let e = per.entry(key).or_insert((0.0, 0.0, false));
                        e.0 += r;
                        e.1 += r * r;
                        e.2 |= r < 0.0;
                    }
                }
                let mut total = 0.0;
                for (sum, sumsq, neg) in per.values() {
                    let m = magnitude_bound(pilot.n_p, *sum, *sumsq, *neg, pilot.theta_p, d)?;
                    total += m * m;
                }
                total
            };
            terms.push((mask, u));
        }
        Ok(JoinVarianceModel { k, terms, delta })
    }

    pub fn evaluate(&self, plan: &[f64]) -> Result<f64> {
        if plan.len() != self.k {
            return Err(StatsError::Domain(format!("plan has {} rates for {} tables", plan.len(), self.k)).into());
        }
        check_rates(plan)?;
        Ok(self.terms.iter().map(|(mask, u)| coeff(plan, *mask) * u).sum())
    }
}

/// Generalized k-table upper bound (k ≤ 3) at the given rates.
pub fn var_upper_k_table(pilot: &JoinPilot, plan: &[f64], delta: f64) -> Result<f64> {
    JoinVarianceModel::build(pilot, delta)?.evaluate(plan)
}

/// Chebyshev lower bound on the join total: Ŝ_p − √(U/δ) with U the variance
/// bound of the pilot estimator itself. δ1 is split evenly between the
/// variance bound and the Chebyshev step.
pub fn join_lower_bound_chebyshev(pilot: &JoinPilot, delta1: f64) -> Result<f64> {
    let delta1 = check_delta(delta1)?;
    let model = JoinVarianceModel::build(pilot, delta1 / 2.0)?;
    let mut plan = vec![1.0; pilot.k()];
    plan[0] = pilot.theta_p;
    let v = model.evaluate(&plan)?;
    Ok(pilot.total() / pilot.theta_p - (v / (delta1 / 2.0)).sqrt())
}

/// Dense 𝒥 over every block combination (row-major, table 1 outermost).
#[derive(Debug, Clone, PartialEq)]
pub struct JoinTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl JoinTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_TABLES {
            return Err(JoinStatsError::Unsupported(format!("{} tables", dims.len())));
        }
        if dims.iter().product::<usize>() != data.len() {
            return Err(StatsError::Domain("tensor size mismatch".into()).into());
        }
        Ok(JoinTensor { dims, data })
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (i, d)| acc * d + i)
    }

    /// Restriction to a subset of table-1 blocks, as a pilot would see it.
    pub fn pilot(&self, sampled: &[usize], theta_p: f64) -> JoinPilot {
        let inner: usize = self.dims[1..].iter().product();
        let blocks = sampled
            .iter()
            .map(|&i1| {
                let mut cells = Vec::new();
                for r in 0..inner {
                    let v = self.data[i1 * inner + r];
                    if v != 0.0 {
                        let mut key = [0u32; 2];
                        let mut rem = r;
                        for (j, d) in self.dims[1..].iter().enumerate().rev() {
                            key[j] = (rem % d) as u32;
                            rem /= d;
                        }
                        cells.push((key, v));
                    }
                }
                cells
            })
            .collect();
        JoinPilot { theta_p, n_p: sampled.len() as u64, dims: self.dims[1..].to_vec(), blocks }
    }
}

/// Var = Σ_{S≠∅} c_S·Y_S evaluated on the full tensor.
pub fn exact_variance_closed_form(t: &JoinTensor, plan: &[f64]) -> Result<f64> {
    check_rates(plan)?;
    let k = t.dims.len();
    if plan.len() != k {
        return Err(StatsError::Domain("plan length mismatch".into()).into());
    }
    let mut var = 0.0;
    for mask in 1..(1usize << k) {
        let c = coeff(plan, mask);
        if c == 0.0 {
            continue;
        }
        let mut sums: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut idx = vec![0usize; k];
        for flat in 0..t.data.len() {
            let mut rem = flat;
            for j in (0..k).rev() {
                idx[j] = rem % t.dims[j];
                rem /= t.dims[j];
            }
            let key: Vec<usize> = (0..k).filter(|j| mask >> j & 1 == 1).map(|j| idx[j]).collect();
            *sums.entry(key).or_default() += t.data[flat];
        }
        var += c * sums.values().map(|s| s * s).sum::<f64>();
    }
    Ok(var)
}

/// Exact mean and variance of the HT estimate by enumerating every
/// combination of block subsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
}

pub const MAX_ENUMERATION_BITS: usize = 20;

pub fn exact_variance_bruteforce(t: &JoinTensor, plan: &[f64]) -> Result<Moments> {
    check_rates(plan)?;
    if plan.len() != t.dims.len() {
        return Err(StatsError::Domain("plan length mismatch".into()).into());
    }
    let bits: usize = t.dims.iter().sum();
    if bits > MAX_ENUMERATION_BITS {
        return Err(JoinStatsError::TooLarge(bits));
    }
    let (mut e1, mut e2) = (0.0, 0.0);
    contract(&t.data, &t.dims, plan, 1.0, &mut |est, p| {
        e1 += p * est;
        e2 += p * est * est;
    });
    Ok(Moments { mean: e1, var: (e2 - e1 * e1).max(0.0) })
}

/// Sum out the leading table over each of its block subsets, recursing with
/// the subset's probability until a scalar estimate remains.
fn contract(data: &[f64], dims: &[usize], plan: &[f64], prob: f64, visit: &mut dyn FnMut(f64, f64)) {
    if dims.is_empty() {
        visit(data[0], prob);
        return;
    }
    let (n, theta) = (dims[0], plan[0]);
    let inner: usize = dims[1..].iter().product();
    for subset in 0..(1usize << n) {
        let m = subset.count_ones() as i32;
        let p = theta.powi(m) * (1.0 - theta).powi(n as i32 - m);
        if p == 0.0 {
            continue;
        }
        let mut next = vec![0.0; inner];
        for i in (0..n).filter(|i| subset >> i & 1 == 1) {
            for (r, slot) in next.iter_mut().enumerate() {
                *slot += data[i * inner + r] / theta;
            }
        }
        contract(&next, &dims[1..], &plan[1..], prob * p, visit);
    }
}

impl JoinTensor {
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.index(idx)]
    }
}
