use std::fs;
use std::path::{Path, PathBuf};

use crewfolio::backtest::run_schedule;
use crewfolio::market_data::{
    clean_prices, load_prices, log_returns, split, write_prices, LoadOptions, PricePanel,
};
use crewfolio::metrics::{
    compare_with_benchmark, full_report, Metric, MetricsConfig, MetricsReport, PortfolioReturns,
};
use crewfolio::optimizer::{optimize_rolling, optimize_static, OptimizerConfig, WeightSchedule};
use crewfolio::pipeline::{
    check_run, load_run_metrics, load_test_series, run_crew, CheckOutcome, CrewPlan, PipelineError,
    RunMetrics,
};

use crate::config::FileConfig;
use crate::{CliError, Command, MetricArgs, RunArgs, SolverArgs, Tool};

pub fn dispatch(command: Command, file: &FileConfig) -> Result<(), CliError> {
    match command {
        Command::Run(args) => cmd_run(args, file),
        Command::Compare { run_a, run_b } => cmd_compare(&run_a, &run_b),
        Command::Check { run } => cmd_check(&run),
        Command::Benchmark {
            run,
            file: bench,
            metrics,
        } => {
            let bench = file.require_path(bench, "benchmark")?;
            cmd_benchmark(&run, &bench, &metrics_config(&metrics, file)?)
        }
        Command::Tools(tool) => cmd_tool(tool, file),
    }
}

fn metrics_config(args: &MetricArgs, file: &FileConfig) -> Result<MetricsConfig, CliError> {
    let d = MetricsConfig::default();
    let cfg = MetricsConfig {
        risk_free_rate: file.resolve(args.risk_free, "risk_free", d.risk_free_rate)?,
        periods_per_year: file.resolve(args.periods, "periods", d.periods_per_year)?,
        ..d
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

fn optimizer_config(args: &SolverArgs, file: &FileConfig) -> Result<OptimizerConfig, CliError> {
    let d = OptimizerConfig::default();
    let cfg = OptimizerConfig {
        seed: file.resolve(args.seed, "seed", d.seed)?,
        restarts: file.resolve(args.restarts, "restarts", d.restarts)?,
        ..d
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::Stage { .. }
        | PipelineError::MissingArtifact(_)
        | PipelineError::BadArtifact { .. } => CliError::domain(e.to_string()),
        _ => CliError::usage(e.to_string()),
    }
}

fn cmd_run(args: RunArgs, file: &FileConfig) -> Result<(), CliError> {
    let data = file.require_path(args.data, "data")?;
    let out = file.require_path(args.out, "out")?;
    let mut plan = CrewPlan::new(args.crew.into());
    plan.split_ratio = file.resolve(args.split, "split", plan.split_ratio)?;
    plan.window = file.resolve(args.rolling.window, "window", plan.window)?;
    plan.holding = file.resolve(args.rolling.holding, "holding", plan.holding)?;
    plan.degradation_margin = file.resolve(args.margin, "margin", plan.degradation_margin)?;
    plan.metrics = metrics_config(&args.metrics, file)?;
    plan.optimizer = optimizer_config(&args.solver, file)?;
    plan.validate()
        .map_err(|e| CliError::usage(e.to_string()))?;

    let outcome = run_crew(&plan, &data, &out).map_err(pipeline_error)?;
    for (stage, status) in &outcome.statuses {
        tracing::info!(%stage, ?status, "stage done");
    }
    print!("{}", outcome.report.text);
    Ok(())
}

/// Prints findings and turns a failed check into an exit-1 error.
fn require_pass(run: &Path) -> Result<CheckOutcome, CliError> {
    let outcome = check_run(run).map_err(pipeline_error)?;
    if !outcome.passed() {
        for f in &outcome.findings {
            eprintln!("{f}");
        }
        return Err(CliError::domain(format!(
            "{} failed the artifact check with {} error(s)",
            run.display(),
            outcome.errors().count()
        )));
    }
    Ok(outcome)
}

fn cmd_check(run: &Path) -> Result<(), CliError> {
    let outcome = check_run(run).map_err(pipeline_error)?;
    for f in &outcome.findings {
        println!("{f}");
    }
    if outcome.passed() {
        println!("check passed: {}", run.display());
        Ok(())
    } else {
        Err(CliError::domain(format!(
            "check failed: {} error(s) in {}",
            outcome.errors().count(),
            run.display()
        )))
    }
}

const ROWS: [&str; 7] = [
    "Expected Return",
    "Volatility",
    "Sharpe Ratio",
    "Sortino Ratio",
    "Max Drawdown",
    "Liquidity Risk",
    "Regime Change Detection",
];

fn cells(r: &MetricsReport) -> [String; 7] {
    [
        r.expected_return.display(),
        r.volatility.display(),
        r.sharpe.display(),
        r.sortino.display(),
        r.max_drawdown.display(),
        r.liquidity_risk.to_string(),
        r.regime_change.to_string(),
    ]
}

fn print_table(title: &str, headers: [&str; 3], cols: [&MetricsReport; 3]) {
    println!("{title}");
    println!(
        "{:<26}{:<16}{:<16}{}",
        "Metric", headers[0], headers[1], headers[2]
    );
    let cols = cols.map(cells);
    for (i, label) in ROWS.iter().enumerate() {
        println!(
            "{label:<26}{:<16}{:<16}{}",
            cols[0][i], cols[1][i], cols[2][i]
        );
    }
}

/// `Some(true)` if `a` is strictly better, `Some(false)` if `b` is, `None`
/// on a tie or when either is undefined.
fn better(a: Metric, b: Metric, higher_is_better: bool) -> Option<bool> {
    match (a, b) {
        (Metric::Value(x), Metric::Value(y)) if x != y => Some((x > y) == higher_is_better),
        _ => None,
    }
}

fn dominance(a: &MetricsReport, b: &MetricsReport, names: [&str; 2]) -> String {
    let sharpe = better(a.sharpe, b.sharpe, true);
    let vol = better(a.volatility, b.volatility, false);
    let name = |x: bool| if x { names[0] } else { names[1] };
    match (sharpe, vol) {
        (None, None) => "tie".to_string(),
        (Some(s), Some(v)) if s == v => format!("{} (higher Sharpe, lower volatility)", name(s)),
        (Some(s), None) => format!("{} (higher Sharpe, equal volatility)", name(s)),
        (None, Some(v)) => format!("{} (lower volatility, equal Sharpe)", name(v)),
        (Some(s), Some(v)) => format!(
            "none (higher Sharpe: {}, lower volatility: {})",
            name(s),
            name(v)
        ),
    }
}

fn cmd_compare(a: &Path, b: &Path) -> Result<(), CliError> {
    require_pass(a)?;
    require_pass(b)?;
    let load = |p: &Path| load_run_metrics(p).map_err(pipeline_error);
    let (ma, mb): (RunMetrics, RunMetrics) = (load(a)?, load(b)?);
    if ma.baseline != mb.baseline {
        eprintln!("warning: the runs have different equal-weight baselines; showing the first");
    }
    let (na, nb) = if ma.crew == mb.crew {
        (
            format!("Crew {} (1)", ma.crew),
            format!("Crew {} (2)", mb.crew),
        )
    } else {
        (format!("Crew {}", ma.crew), format!("Crew {}", mb.crew))
    };
    let headers = ["Equal", na.as_str(), nb.as_str()];
    print_table(
        "Training period",
        headers,
        [&ma.baseline.train, &ma.optimized.train, &mb.optimized.train],
    );
    println!(
        "Dominance (train): {}",
        dominance(&ma.optimized.train, &mb.optimized.train, [&na, &nb])
    );
    println!();
    print_table(
        "Test period",
        headers,
        [&ma.baseline.test, &ma.optimized.test, &mb.optimized.test],
    );
    println!(
        "Dominance (test): {}",
        dominance(&ma.optimized.test, &mb.optimized.test, [&na, &nb])
    );
    Ok(())
}

fn load_clean(path: &Path) -> Result<PricePanel, CliError> {
    let raw =
        load_prices(path, &LoadOptions::default()).map_err(|e| CliError::usage(e.to_string()))?;
    let (clean, log) = clean_prices(&raw).map_err(|e| CliError::domain(e.to_string()))?;
    if !log.is_empty() {
        tracing::info!(changes = log.entries.len(), "cleaned price panel");
    }
    Ok(clean)
}

fn cmd_benchmark(run: &Path, bench: &Path, cfg: &MetricsConfig) -> Result<(), CliError> {
    require_pass(run)?;
    let portfolio = load_test_series(run).map_err(pipeline_error)?;
    let prices = load_clean(bench)?;
    if prices.n_assets() != 1 {
        return Err(CliError::domain(format!(
            "benchmark must hold one asset, found {}",
            prices.n_assets()
        )));
    }
    let returns = log_returns(&prices).map_err(|e| CliError::domain(e.to_string()))?;
    let benchmark = PortfolioReturns::new(returns.dates().to_vec(), returns.column(0).collect())
        .map_err(|e| CliError::domain(e.to_string()))?;
    let cmp = compare_with_benchmark(&portfolio, &benchmark, cfg).map_err(|e| {
        CliError::domain(format!(
            "{e}: the benchmark and the run's test period do not overlap"
        ))
    })?;
    println!("Common dates: {}", cmp.common_dates);
    println!("{:<26}{:<16}Benchmark", "Metric", "Portfolio");
    let (p, b) = (cells(&cmp.portfolio), cells(&cmp.benchmark));
    for i in 0..5 {
        println!("{:<26}{:<16}{}", ROWS[i], p[i], b[i]);
    }
    println!(
        "Excess Return             {}",
        Metric::Value(cmp.excess_return).display()
    );
    println!("Tracking Error            {}", cmp.tracking_error.display());
    Ok(())
}

fn write_csv(panel: &PricePanel, path: PathBuf) -> Result<(), CliError> {
    let f =
        fs::File::create(&path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    write_prices(panel, f, b',').map_err(|e| CliError::usage(e.to_string()))
}

fn cmd_tool(tool: Tool, file: &FileConfig) -> Result<(), CliError> {
    match tool {
        Tool::Split {
            data,
            split: ratio,
            out,
        } => {
            let data = file.require_path(data, "data")?;
            let out = file.require_path(out, "out")?;
            let ratio = file.resolve(ratio, "split", 0.8)?;
            let pair =
                split(&load_clean(&data)?, ratio).map_err(|e| CliError::domain(e.to_string()))?;
            fs::create_dir_all(&out)
                .map_err(|e| CliError::usage(format!("{}: {e}", out.display())))?;
            write_csv(&pair.train, out.join("train.csv"))?;
            write_csv(&pair.test, out.join("test.csv"))?;
            println!(
                "train_rows={}\ntest_rows={}",
                pair.train.n_rows(),
                pair.test.n_rows()
            );
            Ok(())
        }
        Tool::Metrics {
            data,
            weights,
            metrics,
        } => {
            let data = file.require_path(data, "data")?;
            let cfg = metrics_config(&metrics, file)?;
            let returns =
                log_returns(&load_clean(&data)?).map_err(|e| CliError::domain(e.to_string()))?;
            let schedule = match weights {
                Some(p) => {
                    let text = fs::read_to_string(&p)
                        .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
                    WeightSchedule::from_text(&text).map_err(|e| CliError::domain(e.to_string()))?
                }
                None => {
                    let d = returns.dates();
                    let eq = crewfolio::WeightVector::equal(returns.assets().to_vec())
                        .map_err(|e| CliError::domain(e.to_string()))?;
                    WeightSchedule::single(d[0], d[d.len() - 1], eq)
                        .map_err(|e| CliError::domain(e.to_string()))?
                }
            };
            let bt =
                run_schedule(&returns, &schedule).map_err(|e| CliError::domain(e.to_string()))?;
            let report = full_report(
                &bt.portfolio_returns,
                Some(schedule.last_weights()),
                None,
                &cfg,
            );
            print!("{}", report.to_display_kv());
            Ok(())
        }
        Tool::Optimize {
            data,
            rolling,
            window,
            metrics,
            solver,
        } => {
            let data = file.require_path(data, "data")?;
            let mcfg = metrics_config(&metrics, file)?;
            let ocfg = optimizer_config(&solver, file)?;
            let rolling = rolling || file.get::<bool>("rolling")?.unwrap_or(false);
            let returns =
                log_returns(&load_clean(&data)?).map_err(|e| CliError::domain(e.to_string()))?;
            let schedule = if rolling {
                let w = file.resolve(window.window, "window", 30)?;
                let h = file.resolve(window.holding, "holding", 30)?;
                optimize_rolling(&returns, &mcfg, &ocfg, w, h).map(|o| o.schedule)
            } else {
                optimize_static(&returns, &mcfg, &ocfg).and_then(|s| {
                    let d = returns.dates();
                    WeightSchedule::single(d[0], d[d.len() - 1], s.weights)
                })
            }
            .map_err(|e| CliError::domain(e.to_string()))?;
            print!("{}", schedule.to_text());
            Ok(())
        }
    }
}
