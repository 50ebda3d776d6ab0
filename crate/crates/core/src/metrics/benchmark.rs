use std::collections::BTreeMap;

use super::report::{full_report, Metric, MetricsReport};
use super::{
    annualized_return, annualized_volatility, MetricError, MetricsConfig, PortfolioReturns, Result,
};

/// Portfolio against benchmark on their common dates.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkComparison {
    pub common_dates: usize,
    pub portfolio: MetricsReport,
    pub benchmark: MetricsReport,
    /// Annualised portfolio return minus annualised benchmark return.
    pub excess_return: f64,
    /// Annualised sample std of the daily return differences.
    pub tracking_error: Metric,
}

/// Compares on the inner join of dates. Dates present on only one side are
/// dropped rather than filled.
pub fn compare_with_benchmark(
    portfolio: &PortfolioReturns,
    benchmark: &PortfolioReturns,
    cfg: &MetricsConfig,
) -> Result<BenchmarkComparison> {
    if portfolio.is_empty() || benchmark.is_empty() {
        return Err(MetricError::Empty);
    }
    let bench: BTreeMap<_, _> = benchmark.dates().iter().zip(benchmark.values()).collect();
    let (mut dates, mut p, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for (d, v) in portfolio.dates().iter().zip(portfolio.values()) {
        if let Some(bv) = bench.get(d) {
            dates.push(*d);
            p.push(*v);
            b.push(**bv);
        }
    }
    if dates.is_empty() {
        return Err(MetricError::EmptyIntersection);
    }
    let diff: Vec<f64> = p.iter().zip(&b).map(|(x, y)| x - y).collect();
    let p = PortfolioReturns::new(dates.clone(), p)?;
    let b = PortfolioReturns::new(dates.clone(), b)?;
    let diff = PortfolioReturns::new(dates, diff)?;
    Ok(BenchmarkComparison {
        common_dates: p.len(),
        excess_return: annualized_return(&p, cfg)? - annualized_return(&b, cfg)?,
        tracking_error: annualized_volatility(&diff, cfg).into(),
        portfolio: full_report(&p, None, None, cfg),
        benchmark: full_report(&b, None, None, cfg),
    })
}
