use super::ast::*;
use super::decompose::{decompose, Decomposition};
use super::SqlError;

/// A query ready for the engine, plus what the caller needs to read its
/// output back.
#[derive(Debug, Clone, PartialEq)]
pub struct RewrittenQuery {
    pub query: Query,
    /// Table references whose `_blockid` was appended to GROUP BY.
    pub extra_group_cols: Vec<String>,
    /// Π 1/θ over sampled references; 1 for pilot queries.
    pub scale_factor: f64,
}

/// Column naming convention of pilot query output.
pub fn group_column(i: usize) -> String {
    format!("_g{i}")
}

pub fn block_column(i: usize) -> String {
    format!("_b{i}")
}

pub fn leaf_column(i: usize) -> String {
    format!("_l{i}")
}

/// Stage-one query: block-sample `pilot_ref` at `theta_p`, output per-block
/// SUM/COUNT leaves for every group and every combination of blocks of the
/// references in `block_refs` (the pilot reference first).
pub fn rewrite_pilot(q: &Query, pilot_ref: &str, theta_p: f64, block_refs: &[String]) -> Result<(RewrittenQuery, Decomposition), SqlError> {
    if !(theta_p > 0.0 && theta_p <= 1.0) {
        return Err(SqlError::Internal(format!("pilot rate {theta_p} outside (0, 1]")));
    }
    if block_refs.first().map(String::as_str) != Some(pilot_ref) {
        return Err(SqlError::Internal("pilot reference must lead the block columns".into()));
    }
    let d = decompose(q)?;
    let mut from = q.from.clone();
    let target = from
        .iter_mut()
        .find(|f| f.reference() == pilot_ref)
        .ok_or_else(|| SqlError::Internal(format!("pilot table '{pilot_ref}' not in query")))?;
    target.sample = Some(TableSample { method: SampleMethod::System, percent: theta_p * 100.0 });
    for r in block_refs {
        if !q.from.iter().any(|f| f.reference() == r) {
            return Err(SqlError::Internal(format!("table '{r}' not in query")));
        }
    }

    let mut select = Vec::new();
    for (i, g) in q.group_by.iter().enumerate() {
        select.push(SelectItem { expr: g.clone(), alias: Some(group_column(i)) });
    }
    for (i, r) in block_refs.iter().enumerate() {
        select.push(SelectItem { expr: Expr::BlockId(r.clone()), alias: Some(block_column(i)) });
    }
    for (i, l) in d.leaves.iter().enumerate() {
        select.push(SelectItem { expr: l.to_expr(), alias: Some(leaf_column(i)) });
    }
    let mut group_by = q.group_by.clone();
    group_by.extend(block_refs.iter().map(|r| Expr::BlockId(r.clone())));
    let query = Query { select, from, selection: q.selection.clone(), group_by, error: None };
    Ok((RewrittenQuery { query, extra_group_cols: block_refs.to_vec(), scale_factor: 1.0 }, d))
}

/// Stage-two query: apply the plan's sampling clauses and scale SUM/COUNT
/// outputs by Π 1/θ. References absent from `plan` are read in full; a plan
/// with every θ = 1 leaves the query unchanged apart from the error clause.
pub fn rewrite_final(q: &Query, plan: &[(String, TableSample)]) -> Result<RewrittenQuery, SqlError> {
    let mut from = q.from.clone();
    let mut scale = 1.0;
    for (r, s) in plan {
        let item = from
            .iter_mut()
            .find(|f| f.reference() == r)
            .ok_or_else(|| SqlError::Internal(format!("plan table '{r}' not in query")))?;
        if !(s.percent > 0.0 && s.percent <= 100.0) {
            return Err(SqlError::Internal(format!("plan rate {}% for '{r}' outside (0, 100]", s.percent)));
        }
        if s.percent < 100.0 {
            item.sample = Some(*s);
            scale /= s.rate();
        }
    }
    let select = if scale == 1.0 {
        q.select.clone()
    } else {
        q.select.iter().map(|s| SelectItem { expr: scale_aggregates(s.expr.clone(), scale), alias: s.alias.clone() }).collect()
    };
    let query = Query { select, from, selection: q.selection.clone(), group_by: q.group_by.clone(), error: None };
    Ok(RewrittenQuery { query, extra_group_cols: Vec::new(), scale_factor: scale })
}

fn scale_aggregates(e: Expr, scale: f64) -> Expr {
    let scaled = |a: Expr| Expr::binary(BinaryOp::Mul, a, Expr::float(scale));
    e.transform(&mut |e| match e {
        Expr::Aggregate { func: AggFunc::Sum | AggFunc::Count, .. } => scaled(e),
        Expr::Aggregate { func: AggFunc::Avg, arg, distinct: false } => Expr::binary(
            BinaryOp::Div,
            scaled(Expr::Aggregate { func: AggFunc::Sum, arg, distinct: false }),
            scaled(Expr::agg(AggFunc::Count, None)),
        ),
        other => other,
    })
}

/// References whose table has at least `threshold` rows, largest first,
/// ties broken by table name then reference.
pub fn large_references(q: &Query, rows_of: &dyn Fn(&str) -> Option<u64>, threshold: u64) -> Vec<(String, u64)> {
    let mut out: Vec<(String, String, u64)> = q
        .from
        .iter()
        .filter_map(|f| {
            let t = f.table_name()?;
            let rows = rows_of(t)?;
            (rows >= threshold).then(|| (f.reference().to_string(), t.to_string(), rows))
        })
        .collect();
    out.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.1.cmp(&b.1)).then_with(|| a.0.cmp(&b.0)));
    out.into_iter().map(|(r, _, n)| (r, n)).collect()
}

/// The reference to pilot-sample: the largest large table, if any.
pub fn select_pilot_table(q: &Query, rows_of: &dyn Fn(&str) -> Option<u64>, threshold: u64) -> Option<String> {
    large_references(q, rows_of, threshold).into_iter().next().map(|(r, _)| r)
}
