//! Evaluator for the SQL subset: sampled scans, pushed-down filters,
//! left-deep hash joins, grouping and aggregation.

use super::sample::include;
use super::store::Store;
use super::table::BlockTable;
use super::value::Value;
use super::EngineError;
use crate::sql::{add_interval, AggFunc, BinaryOp, Expr, JoinKind, Literal, Query, SampleMethod, TableSource, UnaryOp};
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

type Result<T> = std::result::Result<T, EngineError>;

#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    pub seed: u64,
    /// Reference → exact set of blocks to scan, overriding hash-based
    /// block selection. Used by enumeration oracles.
    pub block_selection: HashMap<String, Vec<usize>>,
}

impl ExecOptions {
    pub fn seeded(seed: u64) -> Self {
        ExecOptions { seed, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SampleInfo {
    pub reference: String,
    pub table: String,
    /// Blocks drawn for SYSTEM sampling, rows drawn for BERNOULLI, blocks
    /// for a full scan.
    pub units_drawn: u64,
    pub units_total: u64,
    pub sampled: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub scanned_bytes: u64,
    pub samples: Vec<SampleInfo>,
}

impl ResultTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone)]
enum B {
    Col { item: usize, col: usize },
    BlockId { item: usize },
    Lit(Value),
    Neg(Box<B>),
    Not(Box<B>),
    Bin(BinaryOp, Box<B>, Box<B>),
    Like { e: Box<B>, pattern: Vec<char>, negated: bool },
    Between { e: Box<B>, low: Box<B>, high: Box<B>, negated: bool },
    In { e: Box<B>, list: Vec<B>, negated: bool },
    Agg(usize),
    Group(usize),
}

struct Ctx<'a> {
    tables: &'a [Arc<BlockTable>],
    rows: &'a [u32],
    aggs: &'a [Value],
    groups: &'a [Value],
}

const TRUE: Value = Value::Int(1);
const FALSE: Value = Value::Int(0);

fn truth(v: &Value) -> bool {
    matches!(v, Value::Int(x) if *x != 0)
}

fn boolean(b: bool) -> Value {
    if b {
        TRUE
    } else {
        FALSE
    }
}

fn type_err(op: &str, a: &Value, b: &Value) -> EngineError {
    EngineError::Type(format!("cannot apply {op} to {a:?} and {b:?}"))
}

fn arith(op: BinaryOp, a: Value, b: Value) -> Result<Value> {
    use Value::*;
    if a.is_null() || b.is_null() {
        return Ok(Null);
    }
    let overflow = || EngineError::Overflow(format!("{a} {} {b}", op.symbol()));
    Ok(match (op, &a, &b) {
        (BinaryOp::Add, Int(x), Int(y)) => Int(x.checked_add(*y).ok_or_else(overflow)?),
        (BinaryOp::Sub, Int(x), Int(y)) => Int(x.checked_sub(*y).ok_or_else(overflow)?),
        (BinaryOp::Mul, Int(x), Int(y)) => Int(x.checked_mul(*y).ok_or_else(overflow)?),
        (BinaryOp::Add, Date(d), Interval(n, u)) | (BinaryOp::Add, Interval(n, u), Date(d)) => {
            Date(add_interval(*d, *n, *u).ok_or_else(overflow)?)
        }
        (BinaryOp::Sub, Date(d), Interval(n, u)) => Date(add_interval(*d, -n, *u).ok_or_else(overflow)?),
        (BinaryOp::Add, Date(d), Int(n)) | (BinaryOp::Add, Int(n), Date(d)) => {
            Date(i32::try_from(*d as i64 + n).map_err(|_| overflow())?)
        }
        (BinaryOp::Sub, Date(d), Int(n)) => Date(i32::try_from(*d as i64 - n).map_err(|_| overflow())?),
        (BinaryOp::Sub, Date(x), Date(y)) => Int(*x as i64 - *y as i64),
        _ => {
            let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
                return Err(type_err(op.symbol(), &a, &b));
            };
            match op {
                BinaryOp::Add => Float(x + y),
                BinaryOp::Sub => Float(x - y),
                BinaryOp::Mul => Float(x * y),
                // Division is always real-valued; x / 0 is NULL.
                BinaryOp::Div if y == 0.0 => Null,
                BinaryOp::Div => Float(x / y),
                _ => unreachable!(),
            }
        }
    })
}

fn compare(a: &Value, b: &Value) -> Result<Option<std::cmp::Ordering>> {
    use Value::*;
    Ok(match (a, b) {
        (Null, _) | (_, Null) => None,
        (Int(x), Int(y)) => Some(x.cmp(y)),
        (Str(x), Str(y)) => Some(x.cmp(y)),
        (Date(x), Date(y)) => Some(x.cmp(y)),
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => x.partial_cmp(&y),
            _ => return Err(type_err("comparison", a, b)),
        },
    })
}

fn like(s: &[char], p: &[char]) -> bool {
    // Iterative wildcard match with single-star backtracking.
    let (mut i, mut j) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while i < s.len() {
        if j < p.len() && (p[j] == '_' || (p[j] != '%' && p[j] == s[i])) {
            i += 1;
            j += 1;
        } else if j < p.len() && p[j] == '%' {
            star = Some((j, i));
            j += 1;
        } else if let Some((sj, si)) = star {
            j = sj + 1;
            i = si + 1;
            star = Some((sj, si + 1));
        } else {
            return false;
        }
    }
    p[j..].iter().all(|c| *c == '%')
}

impl B {
    fn eval(&self, cx: &Ctx) -> Result<Value> {
        Ok(match self {
            B::Col { item, col } => cx.tables[*item].value(*col, cx.rows[*item] as usize),
            B::BlockId { item } => Value::Int(cx.tables[*item].block_of(cx.rows[*item] as usize) as i64),
            B::Lit(v) => v.clone(),
            B::Agg(i) => cx.aggs[*i].clone(),
            B::Group(i) => cx.groups[*i].clone(),
            B::Neg(e) => match e.eval(cx)? {
                Value::Null => Value::Null,
                Value::Int(v) => Value::Int(v.checked_neg().ok_or_else(|| EngineError::Overflow(format!("-({v})")))?),
                Value::Float(v) => Value::Float(-v),
                other => return Err(EngineError::Type(format!("cannot negate {other:?}"))),
            },
            B::Not(e) => boolean(!truth(&e.eval(cx)?)),
            B::Bin(BinaryOp::And, l, r) => boolean(truth(&l.eval(cx)?) && truth(&r.eval(cx)?)),
            B::Bin(BinaryOp::Or, l, r) => boolean(truth(&l.eval(cx)?) || truth(&r.eval(cx)?)),
            B::Bin(op, l, r) if op.is_comparison() => {
                let ord = compare(&l.eval(cx)?, &r.eval(cx)?)?;
                boolean(ord.is_some_and(|o| match op {
                    BinaryOp::Eq => o.is_eq(),
                    BinaryOp::NotEq => o.is_ne(),
                    BinaryOp::Lt => o.is_lt(),
                    BinaryOp::LtEq => o.is_le(),
                    BinaryOp::Gt => o.is_gt(),
                    _ => o.is_ge(),
                }))
            }
            B::Bin(op, l, r) => arith(*op, l.eval(cx)?, r.eval(cx)?)?,
            B::Like { e, pattern, negated } => match e.eval(cx)? {
                Value::Str(s) => {
                    let chars: Vec<char> = s.chars().collect();
                    boolean(like(&chars, pattern) != *negated)
                }
                Value::Null => FALSE,
                other => return Err(EngineError::Type(format!("LIKE needs a string, got {other:?}"))),
            },
            B::Between { e, low, high, negated } => {
                let v = e.eval(cx)?;
                let lo = compare(&v, &low.eval(cx)?)?;
                let hi = compare(&v, &high.eval(cx)?)?;
                match (lo, hi) {
                    (Some(a), Some(b)) => boolean((a.is_ge() && b.is_le()) != *negated),
                    _ => FALSE,
                }
            }
            B::In { e, list, negated } => {
                let v = e.eval(cx)?;
                if v.is_null() {
                    return Ok(FALSE);
                }
                let mut found = false;
                for item in list {
                    if compare(&v, &item.eval(cx)?)?.is_some_and(|o| o.is_eq()) {
                        found = true;
                        break;
                    }
                }
                boolean(found != *negated)
            }
        })
    }

    /// Items referenced, as a bitmask.
    fn items(&self) -> u64 {
        match self {
            B::Col { item, .. } | B::BlockId { item } => 1 << item,
            B::Lit(_) | B::Agg(_) | B::Group(_) => 0,
            B::Neg(e) | B::Not(e) | B::Like { e, .. } => e.items(),
            B::Bin(_, l, r) => l.items() | r.items(),
            B::Between { e, low, high, .. } => e.items() | low.items() | high.items(),
            B::In { e, list, .. } => list.iter().fold(e.items(), |m, x| m | x.items()),
        }
    }
}

struct Scope<'a> {
    refs: Vec<String>,
    tables: &'a [Arc<BlockTable>],
}

#[derive(Default)]
struct AggBinder {
    exprs: Vec<Expr>,
    specs: Vec<(AggFunc, Option<B>, bool)>,
}

impl Scope<'_> {
    fn column(&self, qualifier: Option<&str>, name: &str) -> Result<B> {
        let mut hits = Vec::new();
        for (i, (r, t)) in self.refs.iter().zip(self.tables).enumerate() {
            if qualifier.is_some_and(|q| q != r) {
                continue;
            }
            if let Some(c) = t.column_index(name) {
                hits.push(B::Col { item: i, col: c });
            }
        }
        let full = match qualifier {
            Some(q) => format!("{q}.{name}"),
            None => name.to_string(),
        };
        if let Some(q) = qualifier {
            if !self.refs.iter().any(|r| r == q) {
                return Err(EngineError::UnknownTable(q.to_string()));
            }
        }
        match hits.len() {
            0 => Err(EngineError::UnknownColumn(full)),
            1 => Ok(hits.pop().unwrap()),
            _ => Err(EngineError::Ambiguous(full)),
        }
    }

    fn bind(&self, e: &Expr, groups: &[Expr], aggs: Option<&mut AggBinder>) -> Result<B> {
        let mut aggs = aggs;
        self.bind_inner(e, groups, &mut aggs)
    }

    fn bind_inner(&self, e: &Expr, groups: &[Expr], aggs: &mut Option<&mut AggBinder>) -> Result<B> {
        if let Some(i) = groups.iter().position(|g| g == e) {
            return Ok(B::Group(i));
        }
        let mut rec = |x: &Expr| self.bind_inner(x, groups, aggs).map(Box::new);
        Ok(match e {
            Expr::Column(c) => {
                if !groups.is_empty() || aggs.is_some() {
                    return Err(EngineError::Invalid(format!("column '{c}' must be grouped or aggregated")));
                }
                self.column(c.qualifier.as_deref(), &c.name)?
            }
            Expr::BlockId(r) => {
                if !groups.is_empty() || aggs.is_some() {
                    return Err(EngineError::Invalid(format!("_blockid({r}) must be grouped")));
                }
                let item = self.refs.iter().position(|x| x == r).ok_or_else(|| EngineError::UnknownTable(r.clone()))?;
                B::BlockId { item }
            }
            Expr::Literal(l) => B::Lit(match l {
                Literal::Int(v) => Value::Int(*v),
                Literal::Float(v) => Value::Float(*v),
                Literal::Str(s) => Value::Str(Arc::from(s.as_str())),
                Literal::Date(d) => Value::Date(*d),
                Literal::Interval { amount, unit } => Value::Interval(*amount, *unit),
            }),
            Expr::Unary { op: UnaryOp::Neg, expr } => B::Neg(rec(expr)?),
            Expr::Unary { op: UnaryOp::Not, expr } => B::Not(rec(expr)?),
            Expr::Binary { op, left, right } => B::Bin(*op, rec(left)?, rec(right)?),
            Expr::Like { expr, pattern, negated } => B::Like { e: rec(expr)?, pattern: pattern.chars().collect(), negated: *negated },
            Expr::Between { expr, low, high, negated } => {
                B::Between { e: rec(expr)?, low: rec(low)?, high: rec(high)?, negated: *negated }
            }
            Expr::InList { expr, list, negated } => {
                let e = rec(expr)?;
                let list = list.iter().map(|x| self.bind_inner(x, groups, aggs)).collect::<Result<_>>()?;
                B::In { e, list, negated: *negated }
            }
            Expr::Aggregate { func, arg, distinct } => {
                let Some(binder) = aggs.as_deref_mut() else {
                    return Err(EngineError::Invalid("aggregate in a non-aggregating context".into()));
                };
                if let Some(i) = binder.exprs.iter().position(|x| x == e) {
                    return Ok(B::Agg(i));
                }
                let arg = match arg {
                    Some(a) => Some(self.bind(a, &[], None)?),
                    None => None,
                };
                binder.exprs.push(e.clone());
                binder.specs.push((*func, arg, *distinct));
                B::Agg(binder.exprs.len() - 1)
            }
        })
    }
}

enum Acc {
    Count(i64),
    Sum { int: i128, float: f64, is_float: bool, n: u64 },
    Extreme(Option<Value>),
    Distinct(HashSet<Value>),
}

impl Acc {
    fn new(func: AggFunc, distinct: bool) -> Acc {
        match (func, distinct) {
            (_, true) => Acc::Distinct(HashSet::new()),
            (AggFunc::Count, _) => Acc::Count(0),
            (AggFunc::Sum | AggFunc::Avg, _) => Acc::Sum { int: 0, float: 0.0, is_float: false, n: 0 },
            (AggFunc::Min | AggFunc::Max, _) => Acc::Extreme(None),
        }
    }

    fn add(&mut self, func: AggFunc, v: Option<Value>) -> Result<()> {
        match self {
            Acc::Count(c) => {
                if !v.as_ref().is_some_and(Value::is_null) {
                    *c += 1;
                }
            }
            Acc::Sum { int, float, is_float, n } => match v {
                Some(Value::Int(x)) => {
                    *int += x as i128;
                    *n += 1;
                }
                Some(Value::Float(x)) => {
                    *float += x;
                    *is_float = true;
                    *n += 1;
                }
                Some(Value::Null) => {}
                other => return Err(EngineError::Type(format!("{} over non-numeric {other:?}", func.name()))),
            },
            Acc::Extreme(cur) => {
                let v = v.unwrap_or(Value::Null);
                if !v.is_null() {
                    let better = match cur {
                        None => true,
                        Some(c) => {
                            let o = compare(&v, c)?.unwrap_or(std::cmp::Ordering::Equal);
                            if func == AggFunc::Min {
                                o.is_lt()
                            } else {
                                o.is_gt()
                            }
                        }
                    };
                    if better {
                        *cur = Some(v);
                    }
                }
            }
            Acc::Distinct(set) => {
                if let Some(v) = v.filter(|v| !v.is_null()) {
                    set.insert(v);
                }
            }
        }
        Ok(())
    }

    fn finish(self, func: AggFunc) -> Result<Value> {
        Ok(match self {
            Acc::Count(c) => Value::Int(c),
            Acc::Sum { n: 0, .. } => Value::Null,
            Acc::Sum { int, float, is_float, n } => {
                if func == AggFunc::Avg {
                    Value::Float((int as f64 + float) / n as f64)
                } else if is_float {
                    Value::Float(int as f64 + float)
                } else {
                    Value::Int(i64::try_from(int).map_err(|_| EngineError::Overflow("SUM exceeds 64-bit range".into()))?)
                }
            }
            Acc::Extreme(v) => v.unwrap_or(Value::Null),
            Acc::Distinct(set) => {
                if func == AggFunc::Count {
                    return Ok(Value::Int(set.len() as i64));
                }
                let mut vals: Vec<Value> = set.into_iter().collect();
                vals.sort();
                let mut acc = Acc::new(func, false);
                for v in vals {
                    acc.add(func, Some(v))?;
                }
                acc.finish(func)?
            }
        })
    }
}

/// Join keys compare numerically, so integral floats hash like ints.
fn key_value(v: Value) -> Value {
    match v {
        Value::Float(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Value::Int(f as i64),
        other => other,
    }
}

pub fn execute(q: &Query, store: &Store, opts: &ExecOptions) -> Result<ResultTable> {
    let mut refs = Vec::new();
    let mut tables = Vec::new();
    for f in &q.from {
        match &f.source {
            TableSource::Table(t) => tables.push(store.get(t)?),
            TableSource::Subquery(_) => return Err(EngineError::Invalid("unflattened subquery".into())),
        }
        let r = f.reference().to_string();
        if refs.contains(&r) {
            return Err(EngineError::Invalid(format!("table reference '{r}' used twice; add an alias")));
        }
        refs.push(r);
    }
    if tables.len() > 63 {
        return Err(EngineError::Invalid("too many tables".into()));
    }
    let scope = Scope { refs, tables: &tables };
    let n = tables.len();

    let mut preds: Vec<B> = Vec::new();
    let mut conjuncts: Vec<&Expr> = q.selection.as_ref().map(|w| w.conjuncts()).unwrap_or_default();
    for f in &q.from {
        if let JoinKind::Inner(on) = &f.join {
            conjuncts.extend(on.conjuncts());
        }
    }
    for c in conjuncts {
        preds.push(scope.bind(c, &[], None)?);
    }

    // Scan with sampling and single-table filters.
    let mut samples = Vec::with_capacity(n);
    let mut scanned_bytes = 0u64;
    let mut scans: Vec<Vec<u32>> = Vec::with_capacity(n);
    let empty_ctx_rows = vec![0u32; n];
    let mut constant_false = false;
    for p in preds.iter().filter(|p| p.items() == 0) {
        let cx = Ctx { tables: &tables, rows: &empty_ctx_rows, aggs: &[], groups: &[] };
        constant_false |= !truth(&p.eval(&cx)?);
    }
    for (i, (f, t)) in q.from.iter().zip(&tables).enumerate() {
        let r = &scope.refs[i];
        let local: Vec<&B> = preds.iter().filter(|p| p.items() == 1 << i).collect();
        let mut rows = Vec::new();
        let mut ctx_rows = vec![0u32; n];
        let mut keep = |row: usize, rows: &mut Vec<u32>| -> Result<()> {
            ctx_rows[i] = row as u32;
            let cx = Ctx { tables: &tables, rows: &ctx_rows, aggs: &[], groups: &[] };
            for p in &local {
                if !truth(&p.eval(&cx)?) {
                    return Ok(());
                }
            }
            rows.push(row as u32);
            Ok(())
        };
        let (drawn, total, sampled) = if let Some(blocks) = opts.block_selection.get(r) {
            for &b in blocks {
                if b >= t.blocks() {
                    return Err(EngineError::Invalid(format!("block {b} out of range for '{r}'")));
                }
                scanned_bytes += t.block_bytes(b);
                for row in t.block_rows(b) {
                    keep(row, &mut rows)?;
                }
            }
            (blocks.len() as u64, t.blocks() as u64, true)
        } else {
            match f.sample {
                Some(s) if s.method == SampleMethod::System && s.rate() < 1.0 => {
                    let mut drawn = 0;
                    for b in 0..t.blocks() {
                        if include(opts.seed, r, b as u64, s.rate()) {
                            drawn += 1;
                            scanned_bytes += t.block_bytes(b);
                            for row in t.block_rows(b) {
                                keep(row, &mut rows)?;
                            }
                        }
                    }
                    (drawn, t.blocks() as u64, true)
                }
                Some(s) if s.method == SampleMethod::Bernoulli && s.rate() < 1.0 => {
                    let mut drawn = 0;
                    scanned_bytes += t.bytes();
                    for row in 0..t.rows() {
                        if include(opts.seed, r, row as u64, s.rate()) {
                            drawn += 1;
                            keep(row, &mut rows)?;
                        }
                    }
                    (drawn, t.rows() as u64, true)
                }
                _ => {
                    scanned_bytes += t.bytes();
                    for row in 0..t.rows() {
                        keep(row, &mut rows)?;
                    }
                    (t.blocks() as u64, t.blocks() as u64, f.sample.is_some())
                }
            }
        };
        if constant_false {
            rows.clear();
        }
        samples.push(SampleInfo { reference: r.clone(), table: t.name.clone(), units_drawn: drawn, units_total: total, sampled });
        scans.push(rows);
    }

    // Left-deep hash joins in FROM order.
    let mut applied: Vec<bool> = preds.iter().map(|p| p.items().count_ones() <= 1).collect();
    let mut tuples: Vec<u32> = scans[0].clone();
    let mut stride = 1;
    let mut ctx_rows = vec![0u32; n];
    for j in 1..n {
        let joined: u64 = (1 << j) - 1;
        let mut keys: Vec<(&B, &B)> = Vec::new();
        for (pi, p) in preds.iter().enumerate() {
            if applied[pi] {
                continue;
            }
            if let B::Bin(BinaryOp::Eq, l, r) = p {
                let (lm, rm) = (l.items(), r.items());
                if lm != 0 && rm != 0 {
                    if lm & !joined == 0 && rm == 1 << j {
                        keys.push((l, r));
                        applied[pi] = true;
                    } else if rm & !joined == 0 && lm == 1 << j {
                        keys.push((r, l));
                        applied[pi] = true;
                    }
                }
            }
        }
        let mut next = Vec::new();
        if keys.is_empty() {
            for t in tuples.chunks(stride) {
                for &r in &scans[j] {
                    next.extend_from_slice(t);
                    next.push(r);
                }
            }
        } else {
            let mut build: HashMap<Vec<Value>, Vec<u32>> = HashMap::new();
            'rows: for &r in &scans[j] {
                ctx_rows[j] = r;
                let cx = Ctx { tables: &tables, rows: &ctx_rows, aggs: &[], groups: &[] };
                let mut key = Vec::with_capacity(keys.len());
                for (_, right) in &keys {
                    let v = key_value(right.eval(&cx)?);
                    if v.is_null() {
                        continue 'rows;
                    }
                    key.push(v);
                }
                build.entry(key).or_default().push(r);
            }
            'probe: for t in tuples.chunks(stride) {
                ctx_rows[..stride].copy_from_slice(t);
                let cx = Ctx { tables: &tables, rows: &ctx_rows, aggs: &[], groups: &[] };
                let mut key = Vec::with_capacity(keys.len());
                for (left, _) in &keys {
                    let v = key_value(left.eval(&cx)?);
                    if v.is_null() {
                        continue 'probe;
                    }
                    key.push(v);
                }
                if let Some(matches) = build.get(&key) {
                    for &r in matches {
                        next.extend_from_slice(t);
                        next.push(r);
                    }
                }
            }
        }
        stride += 1;
        tuples = next;
        // Residual predicates that are now fully bound.
        let now = (1u64 << (j + 1)) - 1;
        let ready: Vec<usize> = (0..preds.len()).filter(|&pi| !applied[pi] && preds[pi].items() & !now == 0).collect();
        if !ready.is_empty() {
            let mut kept = Vec::with_capacity(tuples.len());
            for t in tuples.chunks(stride) {
                ctx_rows[..stride].copy_from_slice(t);
                let cx = Ctx { tables: &tables, rows: &ctx_rows, aggs: &[], groups: &[] };
                let mut ok = true;
                for &pi in &ready {
                    if !truth(&preds[pi].eval(&cx)?) {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    kept.extend_from_slice(t);
                }
            }
            tuples = kept;
            for pi in ready {
                applied[pi] = true;
            }
        }
    }

    let columns: Vec<String> = q.select.iter().map(|s| s.output_name()).collect();
    let aggregating = !q.group_by.is_empty() || q.select.iter().any(|s| s.expr.contains_aggregate());
    let mut out_rows = Vec::new();
    if !aggregating {
        let items: Vec<B> = q.select.iter().map(|s| scope.bind(&s.expr, &[], None)).collect::<Result<_>>()?;
        for t in tuples.chunks(stride) {
            ctx_rows[..stride].copy_from_slice(t);
            let cx = Ctx { tables: &tables, rows: &ctx_rows, aggs: &[], groups: &[] };
            out_rows.push(items.iter().map(|b| b.eval(&cx)).collect::<Result<Vec<_>>>()?);
        }
    } else {
        let group_exprs: Vec<B> = q.group_by.iter().map(|g| scope.bind(g, &[], None)).collect::<Result<_>>()?;
        let mut binder = AggBinder::default();
        let items: Vec<B> =
            q.select.iter().map(|s| scope.bind(&s.expr, &q.group_by, Some(&mut binder))).collect::<Result<_>>()?;
        let mut index: HashMap<Vec<Value>, usize> = HashMap::new();
        let mut keys: Vec<Vec<Value>> = Vec::new();
        let mut accs: Vec<Vec<Acc>> = Vec::new();
        let new_accs = || binder.specs.iter().map(|(f, _, d)| Acc::new(*f, *d)).collect::<Vec<_>>();
        if group_exprs.is_empty() {
            index.insert(Vec::new(), 0);
            keys.push(Vec::new());
            accs.push(new_accs());
        }
        for t in tuples.chunks(stride) {
            ctx_rows[..stride].copy_from_slice(t);
            let cx = Ctx { tables: &tables, rows: &ctx_rows, aggs: &[], groups: &[] };
            let key = group_exprs.iter().map(|g| g.eval(&cx)).collect::<Result<Vec<_>>>()?;
            let gi = match index.get(&key) {
                Some(&gi) => gi,
                None => {
                    index.insert(key.clone(), keys.len());
                    keys.push(key);
                    accs.push(new_accs());
                    keys.len() - 1
                }
            };
            for ((func, arg, _), acc) in binder.specs.iter().zip(accs[gi].iter_mut()) {
                let v = match arg {
                    Some(a) => Some(a.eval(&cx)?),
                    None => None,
                };
                acc.add(*func, v)?;
            }
        }
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
        let mut accs: Vec<Option<Vec<Acc>>> = accs.into_iter().map(Some).collect();
        for gi in order {
            let values = accs[gi]
                .take()
                .unwrap()
                .into_iter()
                .zip(&binder.specs)
                .map(|(acc, (f, _, _))| acc.finish(*f))
                .collect::<Result<Vec<_>>>()?;
            let cx = Ctx { tables: &tables, rows: &ctx_rows, aggs: &values, groups: &keys[gi] };
            out_rows.push(items.iter().map(|b| b.eval(&cx)).collect::<Result<Vec<_>>>()?);
        }
    }
    Ok(ResultTable { columns, rows: out_rows, scanned_bytes, samples })
}
