#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod cost;
pub mod dataset;
pub mod drift;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod nn;
pub mod oracle;
pub mod planner;
pub mod rng;
pub mod selfcheck;
pub mod trainer;
pub mod trajectory;

pub use error::{Error, Result};
