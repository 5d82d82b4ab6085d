//! Deep reinforcement learning for long-short portfolio management.
//!
//! The crate covers market data ingestion, signed-weight portfolio
//! arithmetic, a daily trading environment, small convolutional networks with
//! hand-written gradients, a DDPG trainer, back-test analytics and a
//! multi-factor long-short baseline.

// negated comparisons are how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod baseline_factor;
pub mod cli;
pub mod config;
pub mod ddpg;
pub mod error;
pub mod market_data;
pub mod neural;
pub mod portfolio_math;
pub mod synthetic;
pub mod trading_env;

pub use error::{Error, Result};
