//! Deterministic portfolio construction and backtesting over daily crypto closes.
//!
//! The crate is organised as a chain of pure building blocks:
//!
//! - [`market_data`] loads, cleans, summarises and splits price panels and
//!   turns them into log-return panels.
//! - [`metrics`] computes annualised risk-adjusted performance figures for a
//!   portfolio return series.
//! - [`optimizer`] maximises the Sharpe ratio over the long-only, fully
//!   invested simplex, once or on a rolling schedule.
//! - [`backtest`] applies weights to a return panel.
//! - [`pipeline`] wires everything into two auditable "crews" whose stages
//!   persist checksummed artifacts and end in a templated report.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod market_data;
pub mod metrics;
pub mod optimizer;
pub mod pipeline;

pub use backtest::{run_schedule, run_static, BacktestResult};
pub use market_data::{PricePanel, ReturnPanel};
pub use metrics::{MetricsConfig, MetricsReport, PortfolioReturns};
pub use optimizer::{OptimizerConfig, WeightSchedule, WeightVector};
