use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{Days, NaiveDate};
use crewfolio::backtest::{run_schedule, run_static};
use crewfolio::market_data::{clean_prices, log_returns, read_prices, split, LoadOptions};
use crewfolio::metrics::{full_report, sharpe_ratio, Metric, MetricsConfig, RegimeStatus};
use crewfolio::optimizer::{
    grid_oracle, optimize_rolling, optimize_static, sharpe_objective, OptimizerConfig,
};
use crewfolio::pipeline::{
    check_run, render_final_report, run_crew, CrewId, CrewPlan, Manifest, PipelineError, Stage,
    StageStatus,
};
use proptest::prelude::*;

/// Two assets with alternating fortunes plus a gap in the second column.
fn csv(rows: usize) -> String {
    let start = NaiveDate::from_ymd_opt(2022, 3, 1).unwrap();
    let mut out = String::from("Date,BTC,ETH\n");
    let (mut a, mut b) = (100.0f64, 20.0f64);
    for t in 0..rows {
        a *= (0.001 + 0.01 * ((t * 7 % 13) as f64 / 13.0 - 0.5)).exp();
        b *= (0.0005 + 0.02 * ((t * 5 % 11) as f64 / 11.0 - 0.5)).exp();
        let day = (start + Days::new(t as u64)).format("%Y-%m-%d");
        if t == 3 {
            writeln!(out, "{day},{a},").unwrap();
        } else {
            writeln!(out, "{day},{a},{b}").unwrap();
        }
    }
    out
}

#[test]
fn library_flow_matches_pipeline_artifacts() {
    let raw = read_prices(csv(150).as_bytes(), &LoadOptions::default()).unwrap();
    let (clean, log) = clean_prices(&raw).unwrap();
    assert_eq!(log.counts("ETH"), (1, 0));
    let pair = split(&clean, 0.8).unwrap();
    assert_eq!((pair.train.n_rows(), pair.test.n_rows()), (120, 30));
    let train = log_returns(&pair.train).unwrap();
    let test = log_returns(&pair.test).unwrap();

    let mcfg = MetricsConfig::default();
    let sol = optimize_static(&train, &mcfg, &OptimizerConfig::default()).unwrap();
    let objective = sol.objective.unwrap();
    let series = sharpe_objective(&sol.weights, &train, &mcfg).unwrap();
    assert!((objective - series).abs() < 1e-9 * series.abs().max(1.0));
    let grid = grid_oracle(&train, 0.01, &mcfg).unwrap();
    assert!(objective >= grid.objective - 1e-9);

    let bt_train = run_static(&train, &sol.weights).unwrap();
    let bt_test = run_static(&test, &sol.weights).unwrap();
    let report = full_report(
        &bt_test.portfolio_returns,
        Some(&sol.weights),
        Some(&bt_train.portfolio_returns),
        &mcfg,
    );
    assert!(matches!(
        report.regime_change,
        RegimeStatus::Assessed { .. }
    ));
    assert_eq!(
        report.sharpe,
        Metric::from(sharpe_ratio(&bt_test.portfolio_returns, &mcfg))
    );

    // The crew A run must record the same numbers.
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("p.csv");
    fs::write(&data, csv(150)).unwrap();
    let run = dir.path().join("run");
    run_crew(&CrewPlan::new(CrewId::A), &data, &run).unwrap();
    let m = crewfolio::pipeline::load_run_metrics(&run).unwrap();
    assert_eq!(m.optimized.test, report);
}

#[test]
fn rolling_schedule_backtests_without_gaps() {
    let raw = read_prices(csv(200).as_bytes(), &LoadOptions::default()).unwrap();
    let returns = log_returns(&clean_prices(&raw).unwrap().0).unwrap();
    let out = optimize_rolling(
        &returns,
        &MetricsConfig::default(),
        &OptimizerConfig::default(),
        30,
        30,
    )
    .unwrap();
    let bt = run_schedule(&returns, &out.schedule).unwrap();
    assert_eq!(bt.portfolio_returns.len(), returns.n_rows());
    assert_eq!(bt.turnover.len(), out.schedule.entries().len() - 1);
}

fn files(run: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(run)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn resume_after_failure_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("p.csv");
    let run = dir.path().join("run");
    // Too short for a 30-row window on the training side.
    fs::write(&data, csv(30)).unwrap();
    let err = run_crew(&CrewPlan::new(CrewId::B), &data, &run).unwrap_err();
    assert!(matches!(
        err,
        PipelineError::Stage {
            stage: Stage::Optimizer,
            ..
        }
    ));
    assert!(files(&run).contains(&"failure".to_string()));

    // Shortening the window lets the same directory resume from the optimizer.
    let mut plan = CrewPlan::new(CrewId::B);
    plan.window = 10;
    plan.holding = 10;
    let out = run_crew(&plan, &data, &run).unwrap();
    let reused: Vec<Stage> = out
        .statuses
        .iter()
        .filter(|(_, s)| *s == StageStatus::Reused)
        .map(|(st, _)| *st)
        .collect();
    assert_eq!(
        reused,
        [
            Stage::Loader,
            Stage::Cleaner,
            Stage::Splitter,
            Stage::BaselineMetrics
        ]
    );
    assert!(!files(&run).contains(&"failure".to_string()));
    assert!(check_run(&run).unwrap().passed());

    let manifest = Manifest::load(&run).unwrap();
    let again = render_final_report(&manifest, &run, CrewId::B, plan.degradation_margin).unwrap();
    assert_eq!(again, out.report);
    assert!(matches!(
        render_final_report(&manifest, &run, CrewId::A, 0.1),
        Err(PipelineError::CrewMismatch { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn any_valid_run_passes_its_own_check(rows in 60usize..160, ratio in 0.5f64..0.9, b in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("p.csv");
        fs::write(&data, csv(rows)).unwrap();
        let mut plan = CrewPlan::new(if b { CrewId::B } else { CrewId::A });
        plan.split_ratio = ratio;
        plan.window = 10;
        plan.holding = 7;
        plan.optimizer.restarts = 3;
        let run = dir.path().join("run");
        run_crew(&plan, &data, &run).unwrap();
        let first = check_run(&run).unwrap();
        prop_assert!(first.passed());
        prop_assert_eq!(check_run(&run).unwrap(), first);
    }
}
