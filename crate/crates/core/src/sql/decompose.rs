//! Split select-list aggregates into simple SUM/COUNT leaves plus a tree
//! that rebuilds each output from the leaves and distributes its error
//! budget down to them.

use super::ast::*;
use super::SqlError;
use crate::budget::{split_relative_error_product, split_relative_error_quotient, split_relative_error_sum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeafFunc {
    Sum,
    Count,
}

/// A SUM/COUNT aggregate whose HT-scaled value estimates a population total.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub func: LeafFunc,
    pub arg: Option<Expr>,
}

impl Leaf {
    pub fn to_expr(&self) -> Expr {
        let f = match self.func {
            LeafFunc::Sum => AggFunc::Sum,
            LeafFunc::Count => AggFunc::Count,
        };
        Expr::agg(f, self.arg.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Composite {
    Leaf(usize),
    Const(f64),
    Add(Box<Composite>, Box<Composite>),
    Mul(Box<Composite>, Box<Composite>),
    Div(Box<Composite>, Box<Composite>),
}

impl Composite {
    pub fn eval(&self, leaves: &[f64]) -> f64 {
        match self {
            Composite::Leaf(i) => leaves[*i],
            Composite::Const(c) => *c,
            Composite::Add(a, b) => a.eval(leaves) + b.eval(leaves),
            Composite::Mul(a, b) => a.eval(leaves) * b.eval(leaves),
            Composite::Div(a, b) => a.eval(leaves) / b.eval(leaves),
        }
    }

    /// Push a relative-error target `e` down to the leaves, keeping the
    /// strictest requirement per leaf.
    pub fn allocate(&self, e: f64, out: &mut [f64]) {
        match self {
            Composite::Leaf(i) => out[*i] = out[*i].min(e),
            Composite::Const(_) => {}
            Composite::Add(a, b) => {
                let s = split_relative_error_sum(e);
                a.allocate(s, out);
                b.allocate(s, out);
            }
            Composite::Mul(a, b) => match (&**a, &**b) {
                (Composite::Const(_), x) | (x, Composite::Const(_)) => x.allocate(e, out),
                _ => {
                    let s = split_relative_error_product(e);
                    a.allocate(s, out);
                    b.allocate(s, out);
                }
            },
            Composite::Div(a, b) => match (&**a, &**b) {
                (x, Composite::Const(_)) => x.allocate(e, out),
                // c / X: 1/(1 − e2) − 1 ≤ e  ⇔  e2 ≤ e/(1 + e).
                (Composite::Const(_), x) => x.allocate(e / (1.0 + e), out),
                _ => {
                    let s = split_relative_error_quotient(e);
                    a.allocate(s, out);
                    b.allocate(s, out);
                }
            },
        }
    }

    /// The max-rule for sums holds only when the addends share a sign.
    pub fn sums_are_sign_consistent(&self, leaves: &[f64]) -> bool {
        match self {
            Composite::Leaf(_) | Composite::Const(_) => true,
            Composite::Add(a, b) => {
                let (x, y) = (a.eval(leaves), b.eval(leaves));
                (x * y >= 0.0) && a.sums_are_sign_consistent(leaves) && b.sums_are_sign_consistent(leaves)
            }
            Composite::Mul(a, b) | Composite::Div(a, b) => {
                a.sums_are_sign_consistent(leaves) && b.sums_are_sign_consistent(leaves)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub leaves: Vec<Leaf>,
    /// One entry per select item; `None` for group-by pass-through columns.
    pub outputs: Vec<Option<Composite>>,
}

impl Decomposition {
    /// Per-leaf relative error targets for a query-level target `e`.
    pub fn leaf_errors(&self, e: f64) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; self.leaves.len()];
        for c in self.outputs.iter().flatten() {
            c.allocate(e, &mut out);
        }
        out
    }
}

pub fn decompose(q: &Query) -> Result<Decomposition, SqlError> {
    let mut leaves = Vec::new();
    let mut outputs = Vec::new();
    for s in &q.select {
        if s.expr.contains_aggregate() {
            outputs.push(Some(build(&s.expr, &mut leaves)?));
        } else {
            outputs.push(None);
        }
    }
    Ok(Decomposition { leaves, outputs })
}

fn leaf(l: Leaf, leaves: &mut Vec<Leaf>) -> Composite {
    match leaves.iter().position(|x| *x == l) {
        Some(i) => Composite::Leaf(i),
        None => {
            leaves.push(l);
            Composite::Leaf(leaves.len() - 1)
        }
    }
}

fn build(e: &Expr, leaves: &mut Vec<Leaf>) -> Result<Composite, SqlError> {
    let unsupported = |what: &str| Err(SqlError::Unsupported(what.to_string()));
    match e {
        Expr::Aggregate { distinct: true, .. } => unsupported("DISTINCT aggregate"),
        Expr::Aggregate { func, arg, .. } => {
            let arg = arg.as_deref().cloned();
            match func {
                AggFunc::Sum => Ok(leaf(Leaf { func: LeafFunc::Sum, arg }, leaves)),
                AggFunc::Count => Ok(leaf(Leaf { func: LeafFunc::Count, arg }, leaves)),
                AggFunc::Avg => {
                    let s = leaf(Leaf { func: LeafFunc::Sum, arg }, leaves);
                    let c = leaf(Leaf { func: LeafFunc::Count, arg: None }, leaves);
                    Ok(Composite::Div(Box::new(s), Box::new(c)))
                }
                AggFunc::Min | AggFunc::Max => unsupported(&format!("{} aggregate", func.name())),
            }
        }
        Expr::Literal(Literal::Int(v)) => Ok(Composite::Const(*v as f64)),
        Expr::Literal(Literal::Float(v)) => Ok(Composite::Const(*v)),
        Expr::Binary { op, left, right } => {
            let (l, r) = (build(left, leaves)?, build(right, leaves)?);
            match op {
                BinaryOp::Add => {
                    if [&l, &r].iter().any(|c| matches!(c, Composite::Const(v) if *v < 0.0)) {
                        return unsupported("adding a negative constant to an aggregate");
                    }
                    Ok(Composite::Add(Box::new(l), Box::new(r)))
                }
                BinaryOp::Mul => Ok(Composite::Mul(Box::new(l), Box::new(r))),
                BinaryOp::Div => Ok(Composite::Div(Box::new(l), Box::new(r))),
                BinaryOp::Sub => unsupported("subtraction of aggregates"),
                _ => unsupported(&format!("operator {} over aggregates", op.symbol())),
            }
        }
        Expr::Unary { op: UnaryOp::Neg, .. } => unsupported("negation of aggregates"),
        _ => unsupported(&format!("expression '{e}' in an aggregate output")),
    }
}
