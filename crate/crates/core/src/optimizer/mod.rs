//! Long-only, fully invested Sharpe maximisation.
//!
//! [`optimize_static`] runs multi-start projected gradient ascent over the
//! probability simplex. [`optimize_rolling`] repeats it on a trailing window
//! every `holding` rows. [`grid_oracle`] enumerates a simplex lattice and is
//! used to verify the continuous solver on small universes.

mod grid;
mod objective;
mod rolling;
mod schedule;
pub mod simplex;
mod solve;

use thiserror::Error;

use crate::market_data::MarketDataError;
use crate::metrics::MetricError;

pub use grid::{grid_oracle, lattice_size, GridResult, MAX_GRID_ASSETS};
pub use objective::{sharpe_objective, Moments, SharpeObjective};
pub use rolling::{optimize_rolling, optimize_rolling_from, Rebalance, RollingOutcome};
pub use schedule::{parse_schedule_records, ScheduleEntry, ScheduleRecord, WeightSchedule};
pub use solve::{optimize_static, StaticSolution};

/// Tolerance on `|sum(w) - 1|` for a valid weight vector.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("asset universe is empty")]
    NoAssets,
    #[error("need at least {needed} return rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("grid oracle supports at most {max} assets, got {found}")]
    TooManyAssets { max: usize, found: usize },
    #[error("grid resolution {0} does not divide 1 evenly")]
    BadResolution(f64),
    #[error("objective undefined at every lattice point")]
    AllUndefined,
    #[error("weights are for {weights:?} but the panel holds {panel:?}")]
    AssetMismatch {
        weights: Vec<String>,
        panel: Vec<String>,
    },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("window ({window}) and holding ({holding}) must both be at least 2")]
    BadWindow { window: usize, holding: usize },
    #[error("malformed schedule: {0}")]
    Parse(String),
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T, E = OptimizerError> = std::result::Result<T, E>;

/// Portfolio allocation: non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    assets: Vec<String>,
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(assets: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if assets.is_empty() {
            return Err(OptimizerError::NoAssets);
        }
        if assets.len() != weights.len() {
            return Err(OptimizerError::InvalidWeights(format!(
                "{} assets but {} weights",
                assets.len(),
                weights.len()
            )));
        }
        if let Some((a, w)) = assets
            .iter()
            .zip(&weights)
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(OptimizerError::InvalidWeights(format!(
                "weight {w} for {a} is not a non-negative number"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(OptimizerError::InvalidWeights(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self { assets, weights })
    }

    /// `1/N` on every asset.
    pub fn equal(assets: Vec<String>) -> Result<Self> {
        if assets.is_empty() {
            return Err(OptimizerError::NoAssets);
        }
        let w = 1.0 / assets.len() as f64;
        let weights = vec![w; assets.len()];
        Self::new(assets, weights)
    }

    /// Clamps to the simplex: negatives become zero and the rest is rescaled
    /// to sum to one. Used on solver output that is already a projection.
    pub(crate) fn from_projected(assets: Vec<String>, raw: &[f64]) -> Result<Self> {
        let clamped: Vec<f64> = raw.iter().map(|w| w.max(0.0)).collect();
        let sum: f64 = clamped.iter().sum();
        if !(sum > 0.0) {
            return Err(OptimizerError::InvalidWeights(
                "all weights are zero".into(),
            ));
        }
        Self::new(assets, clamped.iter().map(|w| w / sum).collect())
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, asset: &str) -> Option<f64> {
        self.assets
            .iter()
            .position(|a| a == asset)
            .map(|i| self.weights[i])
    }

    /// Sum of absolute weight differences.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub(crate) fn check_assets(&self, panel_assets: &[String]) -> Result<()> {
        if self.assets != panel_assets {
            return Err(OptimizerError::AssetMismatch {
                weights: self.assets.clone(),
                panel: panel_assets.to_vec(),
            });
        }
        Ok(())
    }
}

pub fn equal_weights(assets: &[String]) -> Result<WeightVector> {
    WeightVector::equal(assets.to_vec())
}

/// What to do when the objective is undefined at every start point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackPolicy {
    #[default]
    EqualWeights,
    /// Reuse the previous schedule entry (equal weights if there is none).
    CarryForward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Number of start points: equal weights plus `restarts - 1` random draws.
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop when one accepted step improves the objective by less than this.
    pub convergence_tol: f64,
    /// Backtracking factor in `(0, 1)`.
    pub step_shrink: f64,
    pub seed: u64,
    pub fallback_policy: FallbackPolicy,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 16,
            max_iterations: 500,
            convergence_tol: 1e-8,
            step_shrink: 0.5,
            seed: 0,
            fallback_policy: FallbackPolicy::EqualWeights,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(OptimizerError::InvalidConfig(m.to_string()));
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol must be positive");
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad("step_shrink must lie in (0, 1)");
        }
        Ok(())
    }
}
