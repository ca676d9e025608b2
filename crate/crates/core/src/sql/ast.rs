//! Query AST and its SQL rendering.
//!
//! Rendering parenthesizes only where precedence requires it, so
//! `parse(render(q)) == q` for every AST the parser can produce.

use chrono::{Days, Months, NaiveDate};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub select: Vec<SelectItem>,
    pub from: Vec<FromItem>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub error: Option<ErrorClause>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectItem {
    pub expr: Expr,
    pub alias: Option<String>,
}

impl SelectItem {
    /// Output column name: the alias, else the rendered expression.
    pub fn output_name(&self) -> String {
        self.alias.clone().unwrap_or_else(|| self.expr.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FromItem {
    pub source: TableSource,
    pub alias: Option<String>,
    pub sample: Option<TableSample>,
    pub join: JoinKind,
}

impl FromItem {
    pub fn table(name: &str) -> Self {
        FromItem { source: TableSource::Table(name.to_string()), alias: None, sample: None, join: JoinKind::Comma }
    }

    /// The name columns are qualified with: the alias, else the table name.
    pub fn reference(&self) -> &str {
        match (&self.alias, &self.source) {
            (Some(a), _) => a,
            (None, TableSource::Table(t)) => t,
            (None, TableSource::Subquery(_)) => "",
        }
    }

    pub fn table_name(&self) -> Option<&str> {
        match &self.source {
            TableSource::Table(t) => Some(t),
            TableSource::Subquery(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableSource {
    Table(String),
    Subquery(Box<Query>),
}

/// How a FROM item attaches to the ones before it. The first item is
/// always `Comma`.
#[derive(Debug, Clone, PartialEq)]
pub enum JoinKind {
    Comma,
    Inner(Expr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleMethod {
    System,
    Bernoulli,
}

/// `TABLESAMPLE SYSTEM (x%)`; `percent` is in [0, 100].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableSample {
    pub method: SampleMethod,
    pub percent: f64,
}

impl TableSample {
    pub fn rate(&self) -> f64 {
        self.percent / 100.0
    }
}

/// `ERROR WITHIN e% PROBABILITY p%`, both stored as percentages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorClause {
    pub error_percent: f64,
    pub probability_percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(ColumnRef),
    Literal(Literal),
    Unary { op: UnaryOp, expr: Box<Expr> },
    Binary { op: BinaryOp, left: Box<Expr>, right: Box<Expr> },
    Like { expr: Box<Expr>, pattern: String, negated: bool },
    Between { expr: Box<Expr>, low: Box<Expr>, high: Box<Expr>, negated: bool },
    InList { expr: Box<Expr>, list: Vec<Expr>, negated: bool },
    Aggregate { func: AggFunc, arg: Option<Box<Expr>>, distinct: bool },
    /// `_blockid(t)`: the block a row of table reference `t` lives in.
    BlockId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub qualifier: Option<String>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
    /// Days since 1970-01-01.
    Date(i32),
    Interval { amount: i64, unit: IntervalUnit },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalUnit {
    Day,
    Month,
    Year,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Sum,
    Count,
    Avg,
    Min,
    Max,
}

impl BinaryOp {
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::NotEq | BinaryOp::Lt | BinaryOp::LtEq | BinaryOp::Gt | BinaryOp::GtEq => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul | BinaryOp::Div => 6,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "OR",
            BinaryOp::And => "AND",
            BinaryOp::Eq => "=",
            BinaryOp::NotEq => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }
}

// NOT binds looser than comparisons, tighter than AND.
const NOT_PRECEDENCE: u8 = 3;
// LIKE / BETWEEN / IN sit at comparison level.
const PREDICATE_PRECEDENCE: u8 = 4;
const UNARY_MINUS_PRECEDENCE: u8 = 7;
const ATOM_PRECEDENCE: u8 = 8;

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Sum => "SUM",
            AggFunc::Count => "COUNT",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }
}

impl Expr {
    pub fn col(name: &str) -> Expr {
        Expr::Column(ColumnRef { qualifier: None, name: name.to_string() })
    }

    pub fn qcol(table: &str, name: &str) -> Expr {
        Expr::Column(ColumnRef { qualifier: Some(table.to_string()), name: name.to_string() })
    }

    pub fn int(v: i64) -> Expr {
        Expr::Literal(Literal::Int(v))
    }

    pub fn float(v: f64) -> Expr {
        Expr::Literal(Literal::Float(v))
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary { op, left: Box::new(left), right: Box::new(right) }
    }

    pub fn agg(func: AggFunc, arg: Option<Expr>) -> Expr {
        Expr::Aggregate { func, arg: arg.map(Box::new), distinct: false }
    }

    pub fn and_all(mut preds: Vec<Expr>) -> Option<Expr> {
        let first = if preds.is_empty() { return None } else { preds.remove(0) };
        Some(preds.into_iter().fold(first, |acc, p| Expr::binary(BinaryOp::And, acc, p)))
    }

    /// Split a predicate into its top-level AND conjuncts.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        match self {
            Expr::Binary { op: BinaryOp::And, left, right } => {
                let mut v = left.conjuncts();
                v.extend(right.conjuncts());
                v
            }
            other => vec![other],
        }
    }

    pub fn contains_aggregate(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::Aggregate { .. }));
        found
    }

    /// Pre-order traversal.
    pub fn walk(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Unary { expr, .. } | Expr::Like { expr, .. } => expr.walk(f),
            Expr::Binary { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
            Expr::Between { expr, low, high, .. } => {
                expr.walk(f);
                low.walk(f);
                high.walk(f);
            }
            Expr::InList { expr, list, .. } => {
                expr.walk(f);
                list.iter().for_each(|e| e.walk(f));
            }
            Expr::Aggregate { arg: Some(a), .. } => a.walk(f),
            _ => {}
        }
    }

    /// Bottom-up rewrite.
    pub fn transform(self, f: &mut dyn FnMut(Expr) -> Expr) -> Expr {
        let rebuilt = match self {
            Expr::Unary { op, expr } => Expr::Unary { op, expr: Box::new(expr.transform(f)) },
            Expr::Binary { op, left, right } => {
                Expr::Binary { op, left: Box::new(left.transform(f)), right: Box::new(right.transform(f)) }
            }
            Expr::Like { expr, pattern, negated } => Expr::Like { expr: Box::new(expr.transform(f)), pattern, negated },
            Expr::Between { expr, low, high, negated } => Expr::Between {
                expr: Box::new(expr.transform(f)),
                low: Box::new(low.transform(f)),
                high: Box::new(high.transform(f)),
                negated,
            },
            Expr::InList { expr, list, negated } => Expr::InList {
                expr: Box::new(expr.transform(f)),
                list: list.into_iter().map(|e| e.transform(f)).collect(),
                negated,
            },
            Expr::Aggregate { func, arg, distinct } => {
                Expr::Aggregate { func, arg: arg.map(|a| Box::new(a.transform(f))), distinct }
            }
            other => other,
        };
        f(rebuilt)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Unary { op: UnaryOp::Not, .. } => NOT_PRECEDENCE,
            Expr::Unary { op: UnaryOp::Neg, .. } => UNARY_MINUS_PRECEDENCE,
            Expr::Like { .. } | Expr::Between { .. } | Expr::InList { .. } => PREDICATE_PRECEDENCE,
            _ => ATOM_PRECEDENCE,
        }
    }
}

fn date_from_days(days: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + chrono::Duration::days(days as i64)
}

pub fn days_from_date(d: NaiveDate) -> i32 {
    (d - NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()).num_days() as i32
}

pub fn format_date(days: i32) -> String {
    date_from_days(days).format("%Y-%m-%d").to_string()
}

/// Shift a date by a calendar interval; `None` if the result is out of range.
pub fn add_interval(days: i32, amount: i64, unit: IntervalUnit) -> Option<i32> {
    let d = date_from_days(days);
    let out = match unit {
        IntervalUnit::Day if amount >= 0 => d.checked_add_days(Days::new(amount as u64)),
        IntervalUnit::Day => d.checked_sub_days(Days::new(amount.unsigned_abs())),
        IntervalUnit::Month | IntervalUnit::Year => {
            let months = if unit == IntervalUnit::Year { amount.checked_mul(12)? } else { amount };
            let m = Months::new(u32::try_from(months.unsigned_abs()).ok()?);
            if months >= 0 {
                d.checked_add_months(m)
            } else {
                d.checked_sub_months(m)
            }
        }
    }?;
    Some(days_from_date(out))
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

/// Floats render with a decimal point or exponent so they re-lex as floats.
fn format_float(v: f64) -> String {
    format!("{v:?}")
}

fn format_percent(v: f64) -> String {
    format!("{v}")
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Float(v) => write!(f, "{}", format_float(*v)),
            Literal::Str(s) => write!(f, "{}", quote(s)),
            Literal::Date(d) => write!(f, "DATE '{}'", format_date(*d)),
            Literal::Interval { amount, unit } => {
                let u = match unit {
                    IntervalUnit::Day => "day",
                    IntervalUnit::Month => "month",
                    IntervalUnit::Year => "year",
                };
                write!(f, "INTERVAL '{amount} {u}'")
            }
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{q}.{}", self.name),
            None => write!(f, "{}", self.name),
        }
    }
}

struct Child<'a>(&'a Expr, u8, bool);

impl fmt::Display for Child<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Child(e, parent, strict) = *self;
        let p = e.precedence();
        if p < parent || (strict && p == parent) {
            write!(f, "({e})")
        } else {
            write!(f, "{e}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => write!(f, "{c}"),
            Expr::Literal(l) => write!(f, "{l}"),
            Expr::Unary { op: UnaryOp::Neg, expr } => {
                // Always parenthesize nested minus so "--" never appears.
                if matches!(**expr, Expr::Unary { op: UnaryOp::Neg, .. }) {
                    write!(f, "-({expr})")
                } else {
                    write!(f, "-{}", Child(expr, UNARY_MINUS_PRECEDENCE, false))
                }
            }
            Expr::Unary { op: UnaryOp::Not, expr } => write!(f, "NOT {}", Child(expr, NOT_PRECEDENCE, false)),
            Expr::Binary { op, left, right } => {
                let p = op.precedence();
                // Comparisons are non-associative: parenthesize equal-level children on both sides.
                let left_strict = op.is_comparison();
                write!(f, "{} {} {}", Child(left, p, left_strict), op.symbol(), Child(right, p, true))
            }
            Expr::Like { expr, pattern, negated } => {
                let not = if *negated { "NOT " } else { "" };
                write!(f, "{} {not}LIKE {}", Child(expr, PREDICATE_PRECEDENCE, true), quote(pattern))
            }
            Expr::Between { expr, low, high, negated } => {
                let not = if *negated { "NOT " } else { "" };
                write!(
                    f,
                    "{} {not}BETWEEN {} AND {}",
                    Child(expr, PREDICATE_PRECEDENCE, true),
                    Child(low, PREDICATE_PRECEDENCE, true),
                    Child(high, PREDICATE_PRECEDENCE, true)
                )
            }
            Expr::InList { expr, list, negated } => {
                let not = if *negated { "NOT " } else { "" };
                let items: Vec<String> = list.iter().map(|e| e.to_string()).collect();
                write!(f, "{} {not}IN ({})", Child(expr, PREDICATE_PRECEDENCE, true), items.join(", "))
            }
            Expr::Aggregate { func, arg, distinct } => {
                let d = if *distinct { "DISTINCT " } else { "" };
                match arg {
                    Some(a) => write!(f, "{}({d}{a})", func.name()),
                    None => write!(f, "{}(*)", func.name()),
                }
            }
            Expr::BlockId(t) => write!(f, "_blockid({t})"),
        }
    }
}

impl fmt::Display for TableSample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.method {
            SampleMethod::System => "SYSTEM",
            SampleMethod::Bernoulli => "BERNOULLI",
        };
        write!(f, "TABLESAMPLE {m} ({}%)", format_percent(self.percent))
    }
}

impl fmt::Display for FromItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            TableSource::Table(t) => write!(f, "{t}")?,
            TableSource::Subquery(q) => write!(f, "({q})")?,
        }
        if let Some(a) = &self.alias {
            write!(f, " AS {a}")?;
        }
        if let Some(s) = &self.sample {
            write!(f, " {s}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self
            .select
            .iter()
            .map(|s| match &s.alias {
                Some(a) => format!("{} AS {a}", s.expr),
                None => s.expr.to_string(),
            })
            .collect();
        write!(f, "SELECT {}", items.join(", "))?;
        for (i, item) in self.from.iter().enumerate() {
            match (&item.join, i) {
                (_, 0) => write!(f, " FROM {item}")?,
                (JoinKind::Comma, _) => write!(f, ", {item}")?,
                (JoinKind::Inner(on), _) => write!(f, " JOIN {item} ON {on}")?,
            }
        }
        if let Some(w) = &self.selection {
            write!(f, " WHERE {w}")?;
        }
        if !self.group_by.is_empty() {
            let g: Vec<String> = self.group_by.iter().map(|e| e.to_string()).collect();
            write!(f, " GROUP BY {}", g.join(", "))?;
        }
        if let Some(e) = &self.error {
            write!(
                f,
                " ERROR WITHIN {}% PROBABILITY {}%",
                format_percent(e.error_percent),
                format_percent(e.probability_percent)
            )?;
        }
        Ok(())
    }
}
