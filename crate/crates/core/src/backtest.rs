//! Applies weights to a return panel.
//!
//! Weights are re-struck to target every day, so a day's portfolio log
//! return is the weighted sum of asset log returns. This linear aggregation
//! approximates the log of the weighted simple returns and matches the series
//! the optimiser scores.

use std::fmt::Write as _;

use chrono::NaiveDate;
use thiserror::Error;

use crate::market_data::{ReturnPanel, DATE_FORMAT};
use crate::metrics::{MetricError, PortfolioReturns};
use crate::optimizer::{OptimizerError, WeightSchedule, WeightVector};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("weights are for {weights:?} but the panel holds {panel:?}")]
    AssetMismatch {
        weights: Vec<String>,
        panel: Vec<String>,
    },
    #[error("return panel is empty")]
    Empty,
    #[error("no schedule entry covers {0}")]
    CoverageGap(NaiveDate),
    #[error("malformed backtest series: {0}")]
    Parse(String),
    #[error(transparent)]
    Schedule(#[from] OptimizerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T, E = BacktestError> = std::result::Result<T, E>;

/// Sum of absolute weight changes when a new schedule entry takes over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Turnover {
    pub date: NaiveDate,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub portfolio_returns: PortfolioReturns,
    /// Wealth after each row, starting from 1 before the first row.
    pub equity_curve: Vec<f64>,
    pub applied_weights: WeightSchedule,
    pub turnover: Vec<Turnover>,
}

impl BacktestResult {
    pub fn final_equity(&self) -> f64 {
        self.equity_curve.last().copied().unwrap_or(1.0)
    }

    /// `date,portfolio_return,equity` rows with a header line.
    pub fn series_text(&self) -> String {
        let mut out = String::from("date,portfolio_return,equity\n");
        let r = &self.portfolio_returns;
        for ((d, v), e) in r.dates().iter().zip(r.values()).zip(&self.equity_curve) {
            writeln!(out, "{},{v},{e}", d.format(DATE_FORMAT)).unwrap();
        }
        out
    }
}

/// Parses [`BacktestResult::series_text`] into the return series and equity.
pub fn parse_series_text(text: &str) -> Result<(PortfolioReturns, Vec<f64>)> {
    let bad = |m: String| BacktestError::Parse(m);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next() != Some("date,portfolio_return,equity") {
        return Err(bad("missing header".into()));
    }
    let (mut dates, mut values, mut equity) = (Vec::new(), Vec::new(), Vec::new());
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let [d, r, e] = fields[..] else {
            return Err(bad(format!("expected 3 fields in `{line}`")));
        };
        dates.push(
            NaiveDate::parse_from_str(d, DATE_FORMAT)
                .map_err(|_| bad(format!("bad date `{d}`")))?,
        );
        values.push(r.parse().map_err(|_| bad(format!("bad return `{r}`")))?);
        equity.push(e.parse().map_err(|_| bad(format!("bad equity `{e}`")))?);
    }
    Ok((PortfolioReturns::new(dates, values)?, equity))
}

/// Holds `w` over the whole panel.
pub fn run_static(returns: &ReturnPanel, w: &WeightVector) -> Result<BacktestResult> {
    if returns.is_empty() {
        return Err(BacktestError::Empty);
    }
    let dates = returns.dates();
    let schedule = WeightSchedule::single(dates[0], dates[dates.len() - 1], w.clone())?;
    run_schedule(returns, &schedule)
}

/// Applies each schedule entry to the rows whose dates it covers.
pub fn run_schedule(returns: &ReturnPanel, schedule: &WeightSchedule) -> Result<BacktestResult> {
    if returns.is_empty() {
        return Err(BacktestError::Empty);
    }
    if schedule.assets() != returns.assets() {
        return Err(BacktestError::AssetMismatch {
            weights: schedule.assets().to_vec(),
            panel: returns.assets().to_vec(),
        });
    }
    let entries = schedule.entries();
    let mut values = Vec::with_capacity(returns.n_rows());
    let mut equity = Vec::with_capacity(returns.n_rows());
    let mut turnover = Vec::new();
    let mut current: Option<usize> = None;
    let mut cum = 0.0;
    for (t, row) in returns.rows().enumerate() {
        let date = returns.dates()[t];
        let idx = entries.partition_point(|e| e.end < date);
        if idx >= entries.len() || entries[idx].start > date {
            return Err(BacktestError::CoverageGap(date));
        }
        if let Some(prev) = current {
            if prev != idx {
                turnover.push(Turnover {
                    date,
                    value: entries[idx].weights.l1_distance(&entries[prev].weights),
                });
            }
        }
        current = Some(idx);
        let p: f64 = row
            .iter()
            .zip(entries[idx].weights.weights())
            .map(|(r, w)| r * w)
            .sum();
        cum += p;
        values.push(p);
        equity.push(cum.exp());
    }
    Ok(BacktestResult {
        portfolio_returns: PortfolioReturns::new(returns.dates().to_vec(), values)?,
        equity_curve: equity,
        applied_weights: schedule.clone(),
        turnover,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::test_dates;
    use crate::optimizer::ScheduleEntry;
    use proptest::prelude::*;

    fn two_col(rows: &[[f64; 2]]) -> ReturnPanel {
        ReturnPanel::from_rows(
            test_dates(rows.len()),
            vec!["A".into(), "B".into()],
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    fn wv(a: f64) -> WeightVector {
        WeightVector::new(vec!["A".into(), "B".into()], vec![a, 1.0 - a]).unwrap()
    }

    #[test]
    fn full_weight_copies_column() {
        let p = two_col(&[[0.01, 0.5], [-0.02, 0.1], [0.03, -0.2]]);
        let r = run_static(&p, &wv(1.0)).unwrap();
        assert_eq!(r.portfolio_returns.values(), &[0.01, -0.02, 0.03]);
        assert!(r.turnover.is_empty());
    }

    #[test]
    fn opposite_columns_cancel() {
        let p = two_col(&[[0.01, -0.01], [-0.02, 0.02], [0.037, -0.037]]);
        let r = run_static(&p, &wv(0.5)).unwrap();
        assert!(r.portfolio_returns.values().iter().all(|v| *v == 0.0));
        assert!(r.equity_curve.iter().all(|e| *e == 1.0));
    }

    #[test]
    fn hand_computed_dot_products() {
        let p = two_col(&[[0.01, 0.03], [-0.02, 0.04], [0.006, -0.002]]);
        let r = run_static(&p, &wv(0.5)).unwrap();
        let expected = [0.02, 0.01, 0.002];
        for (a, b) in r.portfolio_returns.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((r.final_equity() - 0.032f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn flip_schedule() {
        let p = two_col(&[[0.01, 0.5], [0.02, 0.6], [0.03, 0.7], [0.04, 0.8]]);
        let d = p.dates();
        let s = WeightSchedule::new(
            vec![
                ScheduleEntry {
                    start: d[0],
                    end: d[1],
                    weights: wv(1.0),
                },
                ScheduleEntry {
                    start: d[2],
                    end: d[3],
                    weights: wv(0.0),
                },
            ],
            Some(2),
            Some(2),
        )
        .unwrap();
        let r = run_schedule(&p, &s).unwrap();
        assert_eq!(r.portfolio_returns.values(), &[0.01, 0.02, 0.7, 0.8]);
        assert_eq!(
            r.turnover,
            vec![Turnover {
                date: d[2],
                value: 2.0
            }]
        );
    }

    #[test]
    fn coverage_gap_names_date() {
        let p = two_col(&[[0.0, 0.0]; 3]);
        let d = p.dates();
        let s = WeightSchedule::single(d[0], d[1], wv(0.3)).unwrap();
        let err = run_schedule(&p, &s).unwrap_err();
        assert!(matches!(err, BacktestError::CoverageGap(g) if g == d[2]));
    }

    #[test]
    fn asset_mismatch() {
        let p = two_col(&[[0.0, 0.0]]);
        let w = WeightVector::new(vec!["B".into(), "A".into()], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            run_static(&p, &w),
            Err(BacktestError::AssetMismatch { .. })
        ));
    }

    #[test]
    fn series_text_round_trip() {
        let p = two_col(&[[0.01, 0.03], [-0.02, 0.04]]);
        let r = run_static(&p, &wv(0.25)).unwrap();
        let (series, equity) = parse_series_text(&r.series_text()).unwrap();
        assert_eq!(series, r.portfolio_returns);
        assert_eq!(equity, r.equity_curve);
    }

    proptest! {
        #[test]
        fn invariants(
            raw in prop::collection::vec((-0.1f64..0.1, -0.1f64..0.1), 1..60),
            a in 0.0f64..=1.0,
        ) {
            let rows: Vec<[f64; 2]> = raw.iter().map(|(x, y)| [*x, *y]).collect();
            let p = two_col(&rows);
            let w = wv(a);
            let stat = run_static(&p, &w).unwrap();
            let d = p.dates();
            let single = WeightSchedule::single(d[0], d[d.len() - 1], w).unwrap();
            prop_assert_eq!(&run_schedule(&p, &single).unwrap(), &stat);

            let total: f64 = stat.portfolio_returns.values().iter().sum();
            prop_assert!((total.exp() / stat.final_equity() - 1.0).abs() < 1e-12);
            prop_assert!(stat.equity_curve.iter().all(|e| *e > 0.0));

            let eq = run_static(&p, &wv(0.5)).unwrap();
            for (v, r) in eq.portfolio_returns.values().iter().zip(&rows) {
                prop_assert!((v - (r[0] + r[1]) / 2.0).abs() < 1e-15);
            }

            // Splitting a constant allocation into two entries adds no turnover.
            if d.len() >= 2 {
                let mid = d.len() / 2;
                let s = WeightSchedule::new(vec![
                    ScheduleEntry { start: d[0], end: d[mid - 1], weights: wv(a) },
                    ScheduleEntry { start: d[mid], end: d[d.len() - 1], weights: wv(a) },
                ], None, None).unwrap();
                let r = run_schedule(&p, &s).unwrap();
                prop_assert!(r.turnover.iter().all(|t| t.value == 0.0));
            }
        }
    }
}
