//! SQL subset: parsing, supportability checks, aggregate decomposition and
//! the pilot/final rewrites. Grammar reference: `docs/grammar.md`.

pub mod ast;
pub mod decompose;
mod lexer;
mod parser;
pub mod rewrite;
mod validate;

pub use ast::*;
pub use decompose::{decompose, Composite, Decomposition, Leaf, LeafFunc};
pub use parser::{is_reserved, parse_query, RESERVED};
pub use rewrite::{large_references, rewrite_final, rewrite_pilot, select_pilot_table, RewrittenQuery};
pub use validate::check_supported;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SqlError {
    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("invalid query: {0}")]
    Invalid(String),
    #[error("unsupported for approximation: {0}")]
    Unsupported(String),
    #[error("internal rewrite error: {0}")]
    Internal(String),
}

/// Parse and, when an error clause is present, check that the query can be
/// approximated. `Unsupported` means the caller should run it exactly
/// (see [`parse_query`]).
pub fn parse(sql: &str) -> Result<Query, SqlError> {
    let q = parse_query(sql)?;
    if q.error.is_some() {
        check_supported(&q)?;
    }
    Ok(q)
}
