use super::ast::*;
use super::SqlError;
use std::collections::HashMap;

/// Inline aggregation-free FROM subqueries, then check that the query is
/// executable (grouping discipline, no aggregates in WHERE/ON/GROUP BY).
pub fn flatten(mut q: Query) -> Result<Query, SqlError> {
    if q.from.iter().any(|f| matches!(f.source, TableSource::Subquery(_))) {
        let items = std::mem::take(&mut q.from);
        let mut extra_preds = Vec::new();
        let mut subst: Vec<(Option<String>, HashMap<String, Expr>)> = Vec::new();
        for item in items {
            let FromItem { source, alias, sample, join } = item;
            if let JoinKind::Inner(on) = join.clone() {
                extra_preds.push(on);
            }
            match source {
                TableSource::Table(_) => {
                    q.from.push(FromItem { source, alias, sample, join: JoinKind::Comma });
                }
                TableSource::Subquery(sub) => {
                    let sub = flatten(*sub)?;
                    if sub.error.is_some() || !sub.group_by.is_empty() || sub.select.iter().any(|s| s.expr.contains_aggregate())
                    {
                        return Err(SqlError::Unsupported("aggregating subquery in FROM".into()));
                    }
                    let mut inner = sub.from;
                    if let Some(s) = sample {
                        if inner.len() != 1 || inner[0].sample.is_some() {
                            return Err(SqlError::Unsupported("TABLESAMPLE on a multi-table subquery".into()));
                        }
                        inner[0].sample = Some(s);
                    }
                    for f in inner {
                        if let JoinKind::Inner(on) = &f.join {
                            extra_preds.push(on.clone());
                        }
                        q.from.push(FromItem { join: JoinKind::Comma, ..f });
                    }
                    extra_preds.extend(sub.selection);
                    let map = sub.select.into_iter().map(|s| (s.output_name(), s.expr)).collect();
                    subst.push((alias, map));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for f in &q.from {
            if !seen.insert(f.reference().to_string()) {
                return Err(SqlError::Unsupported(format!("duplicate table reference '{}' after flattening", f.reference())));
            }
        }
        let mut rewrite = |e: Expr| {
            e.transform(&mut |e| match &e {
                Expr::Column(c) => {
                    for (alias, map) in &subst {
                        let hit = match &c.qualifier {
                            Some(qual) => alias.as_deref() == Some(qual.as_str()),
                            None => true,
                        };
                        if hit {
                            if let Some(r) = map.get(&c.name) {
                                return r.clone();
                            }
                        }
                    }
                    e
                }
                _ => e,
            })
        };
        for s in &mut q.select {
            s.expr = rewrite(std::mem::replace(&mut s.expr, Expr::int(0)));
        }
        q.group_by = std::mem::take(&mut q.group_by).into_iter().map(&mut rewrite).collect();
        let mut preds: Vec<Expr> = q.selection.take().into_iter().collect();
        preds.extend(extra_preds);
        q.selection = Expr::and_all(preds.into_iter().map(&mut rewrite).collect());
    }
    check_structure(&q)?;
    Ok(q)
}

fn check_structure(q: &Query) -> Result<(), SqlError> {
    let no_agg = |e: &Expr, place: &str| {
        if e.contains_aggregate() {
            Err(SqlError::Invalid(format!("aggregate not allowed in {place}")))
        } else {
            Ok(())
        }
    };
    if let Some(w) = &q.selection {
        no_agg(w, "WHERE")?;
    }
    for f in &q.from {
        if let JoinKind::Inner(on) = &f.join {
            no_agg(on, "JOIN ... ON")?;
        }
    }
    for g in &q.group_by {
        no_agg(g, "GROUP BY")?;
    }
    let aggregating = !q.group_by.is_empty() || q.select.iter().any(|s| s.expr.contains_aggregate());
    for s in &q.select {
        if aggregating && !grouped(&s.expr, &q.group_by)? {
            return Err(SqlError::Invalid(format!("'{}' must appear in GROUP BY or inside an aggregate", s.expr)));
        }
    }
    Ok(())
}

fn grouped(e: &Expr, group_by: &[Expr]) -> Result<bool, SqlError> {
    if group_by.contains(e) {
        return Ok(true);
    }
    Ok(match e {
        Expr::Aggregate { arg, .. } => {
            if arg.as_ref().is_some_and(|a| a.contains_aggregate()) {
                return Err(SqlError::Invalid("nested aggregates".into()));
            }
            true
        }
        Expr::Column(_) | Expr::BlockId(_) => false,
        Expr::Literal(_) => true,
        Expr::Unary { expr, .. } | Expr::Like { expr, .. } => grouped(expr, group_by)?,
        Expr::Binary { left, right, .. } => grouped(left, group_by)? && grouped(right, group_by)?,
        Expr::Between { expr, low, high, .. } => {
            grouped(expr, group_by)? && grouped(low, group_by)? && grouped(high, group_by)?
        }
        Expr::InList { expr, list, .. } => {
            let mut ok = grouped(expr, group_by)?;
            for i in list {
                ok &= grouped(i, group_by)?;
            }
            ok
        }
    })
}

/// Reject constructs the approximate path cannot give guarantees for.
pub fn check_supported(q: &Query) -> Result<(), SqlError> {
    for f in &q.from {
        if f.sample.is_some() {
            return Err(SqlError::Unsupported("explicit TABLESAMPLE in an approximate query".into()));
        }
    }
    let mut problem = None;
    let mut visit = |e: &Expr| {
        let found = match e {
            Expr::Aggregate { func: func @ (AggFunc::Min | AggFunc::Max), .. } => Some(format!("{} aggregate", func.name())),
            Expr::Aggregate { func, distinct: true, .. } => Some(format!("{}(DISTINCT ...)", func.name())),
            Expr::BlockId(_) => Some("_blockid in an approximate query".into()),
            _ => None,
        };
        if problem.is_none() {
            problem = found;
        }
    };
    for s in &q.select {
        s.expr.walk(&mut visit);
    }
    if let Some(w) = &q.selection {
        w.walk(&mut visit);
    }
    for g in &q.group_by {
        g.walk(&mut visit);
    }
    if let Some(p) = problem {
        return Err(SqlError::Unsupported(p));
    }
    if !q.select.iter().any(|s| s.expr.contains_aggregate()) {
        return Err(SqlError::Unsupported("query without aggregates".into()));
    }
    super::decompose::decompose(q).map(|_| ())
}
