use chrono::NaiveDate;
use tracing::{debug, info};

use super::solve::optimize_with_fallback;
use super::{OptimizerConfig, OptimizerError, Result, ScheduleEntry, WeightSchedule, WeightVector};
use crate::market_data::ReturnPanel;
use crate::metrics::MetricsConfig;

/// One re-optimisation of a rolling schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rebalance {
    /// First row governed by the new weights.
    pub row: usize,
    pub date: NaiveDate,
    /// The estimation window is rows `[window_start, row)`.
    pub window_start: usize,
    pub objective: Option<f64>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingOutcome {
    pub schedule: WeightSchedule,
    pub rebalances: Vec<Rebalance>,
}

fn check_lengths(window: usize, holding: usize) -> Result<()> {
    if window < 2 || holding < 2 {
        return Err(OptimizerError::BadWindow { window, holding });
    }
    Ok(())
}

/// Rolling Sharpe maximisation over the whole panel.
///
/// Rows `[0, window)` are a warm-up held at equal weights. From row `window`
/// on, every `holding` rows the weights are re-optimised on the preceding
/// `window` rows and applied to the next `holding` rows; the last entry may
/// be shorter.
pub fn optimize_rolling(
    returns: &ReturnPanel,
    mcfg: &MetricsConfig,
    ocfg: &OptimizerConfig,
    window: usize,
    holding: usize,
) -> Result<RollingOutcome> {
    check_lengths(window, holding)?;
    if returns.n_rows() < window + 1 {
        return Err(OptimizerError::TooFewRows {
            needed: window + 1,
            found: returns.n_rows(),
        });
    }
    let dates = returns.dates();
    let warm_up = ScheduleEntry {
        start: dates[0],
        end: dates[window - 1],
        weights: WeightVector::equal(returns.assets().to_vec())?,
    };
    info!(rows = window, "rolling warm-up held at equal weights");
    let (mut entries, rebalances) = rebalance_entries(
        returns,
        window,
        mcfg,
        ocfg,
        window,
        holding,
        Some(&warm_up.weights),
    )?;
    entries.insert(0, warm_up);
    Ok(RollingOutcome {
        schedule: WeightSchedule::new(entries, Some(window), Some(holding))?,
        rebalances,
    })
}

/// Rolling schedule covering only rows `[first_rebalance, T)`, with the first
/// re-optimisation at `first_rebalance` drawing on the rows before it.
///
/// Used to carry a rolling strategy into an evaluation period appended to
/// its history, so that no warm-up is needed there.
pub fn optimize_rolling_from(
    returns: &ReturnPanel,
    first_rebalance: usize,
    mcfg: &MetricsConfig,
    ocfg: &OptimizerConfig,
    window: usize,
    holding: usize,
) -> Result<RollingOutcome> {
    check_lengths(window, holding)?;
    if first_rebalance < window || first_rebalance >= returns.n_rows() {
        return Err(OptimizerError::TooFewRows {
            needed: first_rebalance.max(window) + 1,
            found: returns.n_rows(),
        });
    }
    let (entries, rebalances) =
        rebalance_entries(returns, first_rebalance, mcfg, ocfg, window, holding, None)?;
    Ok(RollingOutcome {
        schedule: WeightSchedule::new(entries, Some(window), Some(holding))?,
        rebalances,
    })
}

fn rebalance_entries(
    returns: &ReturnPanel,
    first: usize,
    mcfg: &MetricsConfig,
    ocfg: &OptimizerConfig,
    window: usize,
    holding: usize,
    seed_weights: Option<&WeightVector>,
) -> Result<(Vec<ScheduleEntry>, Vec<Rebalance>)> {
    let rows = returns.n_rows();
    let dates = returns.dates();
    let mut entries: Vec<ScheduleEntry> = Vec::new();
    let mut rebalances = Vec::new();
    for t in (first..rows).step_by(holding) {
        let history = returns.slice_rows(t - window..t);
        let previous = entries.last().map(|e| &e.weights).or(seed_weights);
        let solution = optimize_with_fallback(&history, mcfg, ocfg, previous)?;
        debug!(row = t, objective = ?solution.objective, "rebalanced");
        rebalances.push(Rebalance {
            row: t,
            date: dates[t],
            window_start: t - window,
            objective: solution.objective,
            fallback: solution.fallback,
        });
        entries.push(ScheduleEntry {
            start: dates[t],
            end: dates[(t + holding).min(rows) - 1],
            weights: solution.weights,
        });
    }
    Ok((entries, rebalances))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::test_dates;
    use crate::optimizer::grid_oracle;

    /// Deterministic panel: asset 0 trends up with noise, asset 1 is noise.
    fn panel(rows: usize) -> ReturnPanel {
        let values = (0..rows)
            .flat_map(|t| {
                let wiggle = ((t * 37) % 11) as f64 / 1000.0 - 0.005;
                let other = ((t * 53) % 7) as f64 / 1000.0 - 0.003;
                [0.004 + wiggle, other]
            })
            .collect();
        ReturnPanel::new(test_dates(rows), vec!["UP".into(), "FLAT".into()], values).unwrap()
    }

    fn run(rows: usize, window: usize, holding: usize) -> Result<RollingOutcome> {
        optimize_rolling(
            &panel(rows),
            &MetricsConfig::default(),
            &OptimizerConfig::default(),
            window,
            holding,
        )
    }

    #[test]
    fn ninety_rows_three_entries() {
        let out = run(90, 30, 30).unwrap();
        let rows: Vec<usize> = out.rebalances.iter().map(|r| r.row).collect();
        assert_eq!(rows, vec![30, 60]);
        assert_eq!(out.schedule.entries().len(), 3);
        let dates = test_dates(90);
        assert_eq!(out.schedule.entries()[0].end, dates[29]);
        assert_eq!(out.schedule.entries()[1].start, dates[30]);
        assert_eq!(out.schedule.entries()[2].end, dates[89]);
        assert_eq!(out.schedule.entries()[0].weights.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn boundary_single_row_entry() {
        let out = run(31, 30, 30).unwrap();
        let last = out.schedule.entries().last().unwrap();
        assert_eq!(out.schedule.entries().len(), 2);
        assert_eq!(last.start, last.end);
    }

    #[test]
    fn dominant_asset_matches_oracle_in_every_window() {
        let p = panel(120);
        let mcfg = MetricsConfig::default();
        let out = optimize_rolling(&p, &mcfg, &OptimizerConfig::default(), 30, 30).unwrap();
        for (entry, reb) in out.schedule.entries()[1..].iter().zip(&out.rebalances) {
            let oracle =
                grid_oracle(&p.slice_rows(reb.window_start..reb.row), 0.05, &mcfg).unwrap();
            assert!(entry.weights.weights()[0] > 0.5);
            for (a, b) in entry.weights.weights().iter().zip(oracle.weights.weights()) {
                assert!((a - b).abs() <= 0.05 + 1e-9);
            }
        }
    }

    #[test]
    fn preconditions() {
        assert!(matches!(
            run(30, 30, 30),
            Err(OptimizerError::TooFewRows { .. })
        ));
        assert!(matches!(
            run(90, 1, 30),
            Err(OptimizerError::BadWindow { .. })
        ));
        assert!(matches!(
            run(90, 30, 1),
            Err(OptimizerError::BadWindow { .. })
        ));
    }

    #[test]
    fn continuation_covers_only_the_tail() {
        let p = panel(100);
        let out = optimize_rolling_from(
            &p,
            70,
            &MetricsConfig::default(),
            &OptimizerConfig::default(),
            30,
            20,
        )
        .unwrap();
        let e = out.schedule.entries();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].start, p.dates()[70]);
        assert_eq!(e[1].end, p.dates()[99]);
        assert_eq!(out.rebalances[0].window_start, 40);

        // Same rebalance rows as the full schedule, same weights.
        let full = optimize_rolling(
            &p,
            &MetricsConfig::default(),
            &OptimizerConfig::default(),
            30,
            20,
        )
        .unwrap();
        let at_70 = full.schedule.entry_for(p.dates()[70]).unwrap();
        assert_eq!(at_70.weights, e[0].weights);
    }

    #[test]
    fn no_lookahead() {
        let base = panel(150);
        let cut = 140;
        let mut values: Vec<f64> = base.rows().flatten().copied().collect();
        for v in &mut values[cut * 2..] {
            *v = -*v * 3.0 + 0.01;
        }
        let perturbed =
            ReturnPanel::new(base.dates().to_vec(), base.assets().to_vec(), values).unwrap();
        let a = run_panel(&base);
        let b = run_panel(&perturbed);
        for (i, reb) in a.rebalances.iter().enumerate() {
            if reb.row <= cut {
                assert_eq!(
                    a.schedule.entries()[i + 1].weights,
                    b.schedule.entries()[i + 1].weights
                );
            }
        }
    }

    fn run_panel(p: &ReturnPanel) -> RollingOutcome {
        optimize_rolling(
            p,
            &MetricsConfig::default(),
            &OptimizerConfig::default(),
            30,
            30,
        )
        .unwrap()
    }
}
