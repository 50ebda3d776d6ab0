//! Annualised performance metrics for a daily portfolio log-return series.
//!
//! Conventions: arithmetic mean annualised by `periods_per_year`, sample
//! standard deviation (divisor `n - 1`) annualised by its square root,
//! Sortino with a full-sample downside deviation, drawdown on the compounded
//! equity curve. Metrics that cannot be computed are reported as
//! [`Metric::Undefined`] rather than `NaN` or infinities.

mod benchmark;
mod report;

use chrono::NaiveDate;
use thiserror::Error;

use crate::optimizer::WeightVector;

pub use benchmark::{compare_with_benchmark, BenchmarkComparison};
pub use report::{
    format_display, full_report, LiquidityRisk, Metric, MetricsReport, RegimeStatus, METRIC_KEYS,
    UNDEFINED,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("return series is empty")]
    Empty,
    #[error("need at least {needed} observations, found {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("Sharpe ratio undefined: volatility is zero")]
    UndefinedSharpe,
    #[error("Sortino ratio undefined: no observation below the minimum acceptable return")]
    UndefinedSortino,
    #[error("variance ratio undefined: {0} series has zero variance")]
    DegenerateVariance(&'static str),
    #[error("portfolio and benchmark share no dates")]
    EmptyIntersection,
    #[error("invalid metrics configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite return on {0}")]
    NonFinite(NaiveDate),
    #[error("dates not strictly increasing at {0}")]
    UnorderedDates(NaiveDate),
    #[error("{dates} dates but {values} values")]
    LengthMismatch { dates: usize, values: usize },
    #[error("malformed metrics block: {0}")]
    Parse(String),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    /// Annualised risk-free rate.
    pub risk_free_rate: f64,
    pub periods_per_year: u32,
    /// Annualised minimum acceptable return for Sortino; `None` means the
    /// risk-free rate.
    pub mar: Option<f64>,
    /// Variance ratio above which a regime change is flagged.
    pub regime_var_ratio_threshold: f64,
    /// HHI cut points: `<= .0` is Low, `> .1` is High.
    pub liquidity_hhi_thresholds: (f64, f64),
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            risk_free_rate: 0.0,
            periods_per_year: 252,
            mar: None,
            regime_var_ratio_threshold: 2.0,
            liquidity_hhi_thresholds: (0.15, 0.30),
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MetricError::InvalidConfig(m.to_string()));
        if self.periods_per_year == 0 {
            return bad("periods_per_year must be positive");
        }
        if !self.risk_free_rate.is_finite() || !self.mar().is_finite() {
            return bad("rates must be finite");
        }
        if !(self.regime_var_ratio_threshold > 1.0) {
            return bad("regime threshold must exceed 1");
        }
        let (lo, hi) = self.liquidity_hhi_thresholds;
        if !(lo > 0.0 && lo < hi) {
            return bad("liquidity thresholds must be positive and strictly increasing");
        }
        Ok(())
    }

    pub fn mar(&self) -> f64 {
        self.mar.unwrap_or(self.risk_free_rate)
    }

    pub fn periods(&self) -> f64 {
        f64::from(self.periods_per_year)
    }
}

/// Daily portfolio log returns.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioReturns {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl PortfolioReturns {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(MetricError::LengthMismatch {
                dates: dates.len(),
                values: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite(dates[i]));
        }
        if let Some(pair) = dates.windows(2).find(|p| p[1] <= p[0]) {
            return Err(MetricError::UnorderedDates(pair[1]));
        }
        Ok(Self { dates, values })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (divisor `n - 1`); callers guarantee `n >= 2`.
///
/// Exactly zero for a constant series, where the rounded mean would otherwise
/// leave residual deviations.
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    if xs.iter().all(|x| *x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn annualized_return(r: &PortfolioReturns, cfg: &MetricsConfig) -> Result<f64> {
    if r.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(mean(&r.values) * cfg.periods())
}

pub fn annualized_volatility(r: &PortfolioReturns, cfg: &MetricsConfig) -> Result<f64> {
    if r.len() < 2 {
        return Err(MetricError::TooFewObservations {
            needed: 2,
            found: r.len(),
        });
    }
    Ok(sample_variance(&r.values).sqrt() * cfg.periods().sqrt())
}

pub fn sharpe_ratio(r: &PortfolioReturns, cfg: &MetricsConfig) -> Result<f64> {
    let vol = annualized_volatility(r, cfg)?;
    if vol == 0.0 {
        return Err(MetricError::UndefinedSharpe);
    }
    Ok((annualized_return(r, cfg)? - cfg.risk_free_rate) / vol)
}

pub fn sortino_ratio(r: &PortfolioReturns, cfg: &MetricsConfig) -> Result<f64> {
    let ann = annualized_return(r, cfg)?;
    let daily_mar = cfg.mar() / cfg.periods();
    let below: f64 = r
        .values
        .iter()
        .map(|v| (v - daily_mar).min(0.0).powi(2))
        .sum();
    if below == 0.0 {
        return Err(MetricError::UndefinedSortino);
    }
    let downside = (below / r.len() as f64).sqrt() * cfg.periods().sqrt();
    Ok((ann - cfg.mar()) / downside)
}

/// Largest peak-to-trough decline of `exp(cumsum(r))`, starting from wealth 1.
/// Returns a value in `[-1, 0]`.
pub fn max_drawdown(r: &PortfolioReturns) -> Result<f64> {
    if r.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut cum = 0.0;
    let mut peak = 0.0_f64;
    let mut worst = 0.0_f64;
    for v in &r.values {
        cum += v;
        peak = peak.max(cum);
        worst = worst.min((cum - peak).exp() - 1.0);
    }
    Ok(worst)
}

/// Outcome of the variance-ratio regime test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeTest {
    /// `max(var) / min(var)` of the two samples; always `>= 1`.
    pub statistic: f64,
    pub changed: bool,
}

pub fn detect_regime_change(
    train: &PortfolioReturns,
    test: &PortfolioReturns,
    cfg: &MetricsConfig,
) -> Result<RegimeTest> {
    for side in [train, test] {
        if side.len() < 2 {
            return Err(MetricError::TooFewObservations {
                needed: 2,
                found: side.len(),
            });
        }
    }
    let var_train = sample_variance(&train.values);
    let var_test = sample_variance(&test.values);
    if var_train == 0.0 {
        return Err(MetricError::DegenerateVariance("train"));
    }
    if var_test == 0.0 {
        return Err(MetricError::DegenerateVariance("test"));
    }
    let statistic = var_train.max(var_test) / var_train.min(var_test);
    Ok(RegimeTest {
        statistic,
        changed: statistic > cfg.regime_var_ratio_threshold,
    })
}

/// Herfindahl-Hirschman concentration of the weights, `sum(w_i^2)`.
pub fn hhi(w: &WeightVector) -> f64 {
    w.weights().iter().map(|x| x * x).sum()
}

/// Concentration-based liquidity proxy.
///
/// The band between the two thresholds is split at its midpoint into
/// Moderately Low and Moderate.
pub fn classify_liquidity(w: &WeightVector, cfg: &MetricsConfig) -> LiquidityRisk {
    classify_hhi(hhi(w), cfg)
}

pub(crate) fn classify_hhi(h: f64, cfg: &MetricsConfig) -> LiquidityRisk {
    let (lo, hi) = cfg.liquidity_hhi_thresholds;
    let mid = 0.5 * (lo + hi);
    if h <= lo {
        LiquidityRisk::Low
    } else if h <= mid {
        LiquidityRisk::ModeratelyLow
    } else if h <= hi {
        LiquidityRisk::Moderate
    } else {
        LiquidityRisk::High
    }
}

#[cfg(test)]
pub(crate) fn series(values: &[f64]) -> PortfolioReturns {
    let start = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
    let dates = (0..values.len() as u64)
        .map(|i| start + chrono::Days::new(i))
        .collect();
    PortfolioReturns::new(dates, values.to_vec()).unwrap()
}
