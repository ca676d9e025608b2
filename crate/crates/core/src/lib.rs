//! Two-stage approximate query processing with a priori error guarantees.
//!
//! A pilot query on a small block sample produces per-block statistics; from
//! those, probabilistic bounds on the answer's mean and variance select the
//! cheapest sampling plan whose estimates stay within relative error `e`
//! with probability `p`. The final query runs under that plan and scales
//! SUM-like outputs by the inverse sampling rates.

pub mod stats;
pub mod budget;
pub mod bounds;
pub mod joinstats;
pub mod sql;
pub mod engine;
pub mod config;
pub mod planner;
pub mod montecarlo;
