use std::collections::HashMap;
use std::fs;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use tracing::{info, warn};

use super::check::check_artifacts;
use super::manifest::{digest_hex, ArtifactInput, Manifest, StageArtifact};
use super::payload::{kv_get, parse_kv, Sections};
use super::report::{render, FinalReport, MetricsPair, RunMetrics};
use super::{
    CrewId, CrewPlan, PayloadError, PipelineError, Result, Stage, StageError, FAILURE_FILE,
    REPORT_SIDECAR,
};
use crate::backtest::{parse_series_text, run_schedule, run_static};
use crate::market_data::{
    clean_prices, log_returns, read_prices, split, write_prices, CleaningLog, LoadOptions,
    PricePanel, ReturnPanel,
};
use crate::metrics::{full_report, MetricsReport, PortfolioReturns};
use crate::optimizer::{
    optimize_rolling, optimize_rolling_from, optimize_static, WeightSchedule, WeightVector,
};

type StageResult<T> = std::result::Result<T, StageError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    /// The recorded artifact was intact and its inputs unchanged.
    Reused,
    Executed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: FinalReport,
    pub manifest: Manifest,
    pub statuses: Vec<(Stage, StageStatus)>,
}

impl RunOutcome {
    pub fn executed(&self) -> Vec<Stage> {
        self.statuses
            .iter()
            .filter(|(_, s)| *s == StageStatus::Executed)
            .map(|(st, _)| *st)
            .collect()
    }
}

/// Runs every stage of `plan` on `dataset`, persisting artifacts in `run_dir`.
///
/// A stage is skipped when the manifest already holds a record for it whose
/// payload still matches its digest and whose recorded inputs equal the
/// current ones. On failure the failing stage and everything after it are
/// dropped from the manifest, earlier artifacts are left untouched and a
/// `failure` file names the stage.
pub fn run_crew(plan: &CrewPlan, dataset: &Path, run_dir: &Path) -> Result<RunOutcome> {
    plan.validate().map_err(PipelineError::InvalidPlan)?;
    let dataset_bytes = fs::read(dataset).map_err(|e| PipelineError::io(dataset, e))?;
    fs::create_dir_all(run_dir).map_err(|e| PipelineError::io(run_dir, e))?;

    let mut manifest = match Manifest::load(run_dir) {
        Ok(m) if m.crew != plan.crew => {
            return Err(PipelineError::CrewMismatch {
                expected: plan.crew,
                found: m.crew,
            })
        }
        Ok(m) => m,
        Err(PipelineError::MissingManifest(_)) => Manifest::new(plan.crew),
        Err(e) => return Err(e),
    };
    let failure = run_dir.join(FAILURE_FILE);
    if failure.exists() {
        fs::remove_file(&failure).map_err(|e| PipelineError::io(&failure, e))?;
    }

    let mut payloads: HashMap<Stage, String> = HashMap::new();
    let mut statuses = Vec::new();
    for stage in plan.stages() {
        let inputs = stage_inputs(plan, stage, &manifest, &dataset_bytes);
        let tag = stage.schema_tag(plan.crew);
        if let Some(text) = reusable(&manifest, stage, tag, &inputs, run_dir) {
            info!(%stage, "reusing intact artifact");
            payloads.insert(stage, text);
            statuses.push((stage, StageStatus::Reused));
            continue;
        }
        info!(%stage, "executing");
        let text = match execute(stage, plan, &dataset_bytes, &payloads, &manifest, run_dir) {
            Ok(text) => text,
            Err(source) => {
                warn!(%stage, error = %source, "stage failed");
                for later in Stage::ALL.into_iter().filter(|s| *s >= stage) {
                    manifest.remove(later);
                }
                manifest.save(run_dir)?;
                let record = format!("stage={stage}\nerror={source}\n");
                fs::write(&failure, record).map_err(|e| PipelineError::io(&failure, e))?;
                return Err(PipelineError::Stage { stage, source });
            }
        };
        let path = run_dir.join(stage.payload_file());
        fs::write(&path, &text).map_err(|e| PipelineError::io(&path, e))?;
        manifest.upsert(StageArtifact {
            stage,
            schema_tag: tag.to_string(),
            digest: digest_hex(text.as_bytes()),
            path: stage.payload_file(),
            inputs,
            produced_at: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        });
        manifest.save(run_dir)?;
        payloads.insert(stage, text);
        statuses.push((stage, StageStatus::Executed));
    }

    let report = final_report(plan, &payloads)?;
    let sidecar = run_dir.join(REPORT_SIDECAR);
    fs::write(&sidecar, report.sidecar()).map_err(|e| PipelineError::io(&sidecar, e))?;
    Ok(RunOutcome {
        report,
        manifest,
        statuses,
    })
}

fn stage_inputs(
    plan: &CrewPlan,
    stage: Stage,
    manifest: &Manifest,
    dataset: &[u8],
) -> Vec<ArtifactInput> {
    let mut inputs: Vec<ArtifactInput> = stage
        .dependencies()
        .iter()
        .map(|d| {
            // Upstream stages always have a record by the time this runs.
            let digest = manifest.get(*d).map_or("", |r| r.digest.as_str());
            ArtifactInput::stage(*d, digest)
        })
        .collect();
    if stage == Stage::Loader {
        inputs.push(ArtifactInput::external("dataset", digest_hex(dataset)));
    }
    if let Some(cfg) = plan.stage_config(stage) {
        inputs.push(ArtifactInput::external(
            "config",
            digest_hex(cfg.as_bytes()),
        ));
    }
    inputs
}

fn reusable(
    manifest: &Manifest,
    stage: Stage,
    tag: &str,
    inputs: &[ArtifactInput],
    run_dir: &Path,
) -> Option<String> {
    let record = manifest.get(stage)?;
    if record.schema_tag != tag || record.inputs != inputs || record.path != stage.payload_file() {
        return None;
    }
    let text = fs::read_to_string(run_dir.join(&record.path)).ok()?;
    (digest_hex(text.as_bytes()) == record.digest).then_some(text)
}

fn execute(
    stage: Stage,
    plan: &CrewPlan,
    dataset: &[u8],
    payloads: &HashMap<Stage, String>,
    manifest: &Manifest,
    run_dir: &Path,
) -> StageResult<String> {
    let input = |s: Stage| payloads[&s].as_str();
    match stage {
        Stage::Loader => {
            let panel = read_prices(dataset, &LoadOptions::default())?;
            prices_text(&panel)
        }
        Stage::Cleaner => {
            let raw = parse_prices(input(Stage::Loader))?;
            let (clean, log) = clean_prices(&raw)?;
            let mut s = Sections::new();
            s.push("prices", prices_text(&clean)?)
                .push("log", log.to_string());
            Ok(s.to_text())
        }
        Stage::Splitter => {
            let clean = parse_clean(input(Stage::Cleaner))?.0;
            let pair = split(&clean, plan.split_ratio)?;
            let meta = format!(
                "rows={}\ntrain_rows={}\ntest_rows={}\nratio={}\n",
                clean.n_rows(),
                pair.train.n_rows(),
                pair.test.n_rows(),
                plan.split_ratio
            );
            let mut s = Sections::new();
            s.push("meta", meta)
                .push("train", prices_text(&pair.train)?)
                .push("test", prices_text(&pair.test)?);
            Ok(s.to_text())
        }
        Stage::BaselineMetrics => {
            let (train, test) = split_returns(input(Stage::Splitter))?;
            let eq = WeightVector::equal(train.assets().to_vec())?;
            let tr = run_static(&train, &eq)?;
            let te = run_static(&test, &eq)?;
            Ok(metrics_text(
                full_report(&tr.portfolio_returns, Some(&eq), None, &plan.metrics),
                full_report(
                    &te.portfolio_returns,
                    Some(&eq),
                    Some(&tr.portfolio_returns),
                    &plan.metrics,
                ),
                &tr.series_text(),
                &te.series_text(),
            ))
        }
        Stage::Optimizer => {
            let (train, test) = split_returns(input(Stage::Splitter))?;
            let (train_s, test_s, rebalances, fallbacks) = optimize(plan, &train, &test)?;
            let mut s = Sections::new();
            s.push(
                "meta",
                format!(
                    "crew={}\nrebalances={rebalances}\nfallbacks={fallbacks}\n",
                    plan.crew
                ),
            )
            .push("train", train_s.to_text())
            .push("test", test_s.to_text());
            Ok(s.to_text())
        }
        Stage::OptimizedMetrics => {
            let (train, test) = split_returns(input(Stage::Splitter))?;
            let (train_s, test_s) = parse_weights(input(Stage::Optimizer))?;
            let tr = run_schedule(&train, &train_s)?;
            let te = run_schedule(&test, &test_s)?;
            Ok(metrics_text(
                full_report(
                    &tr.portfolio_returns,
                    Some(train_s.last_weights()),
                    None,
                    &plan.metrics,
                ),
                full_report(
                    &te.portfolio_returns,
                    Some(test_s.last_weights()),
                    Some(&tr.portfolio_returns),
                    &plan.metrics,
                ),
                &tr.series_text(),
                &te.series_text(),
            ))
        }
        Stage::Checker => {
            let mut upstream = manifest.clone();
            for later in [Stage::Checker, Stage::FinalReport] {
                upstream.remove(later);
            }
            let outcome = check_artifacts(&upstream, run_dir);
            if !outcome.passed() {
                return Err(StageError::CheckFailed(outcome.errors().count()));
            }
            Ok(outcome.to_payload())
        }
        Stage::FinalReport => Ok(final_report(plan, payloads)
            .map_err(|e| PayloadError(e.to_string()))?
            .text),
    }
}

/// Crew A holds one static optimum over both periods; crew B rolls through
/// training and keeps rolling into the test period using the trailing rows
/// available at each rebalance.
fn optimize(
    plan: &CrewPlan,
    train: &ReturnPanel,
    test: &ReturnPanel,
) -> StageResult<(WeightSchedule, WeightSchedule, usize, usize)> {
    let (m, o) = (&plan.metrics, &plan.optimizer);
    match plan.crew {
        CrewId::A => {
            let sol = optimize_static(train, m, o)?;
            let span = |p: &ReturnPanel| {
                let d = p.dates();
                WeightSchedule::single(d[0], d[d.len() - 1], sol.weights.clone())
            };
            Ok((span(train)?, span(test)?, 1, usize::from(sol.fallback)))
        }
        CrewId::B => {
            let tr = optimize_rolling(train, m, o, plan.window, plan.holding)?;
            let all = train.concat(test)?;
            let te = optimize_rolling_from(&all, train.n_rows(), m, o, plan.window, plan.holding)?;
            let rebalances = tr.rebalances.len() + te.rebalances.len();
            let fallbacks = tr
                .rebalances
                .iter()
                .chain(&te.rebalances)
                .filter(|r| r.fallback)
                .count();
            Ok((tr.schedule, te.schedule, rebalances, fallbacks))
        }
    }
}

fn final_report(plan: &CrewPlan, payloads: &HashMap<Stage, String>) -> Result<FinalReport> {
    let metrics = RunMetrics {
        crew: plan.crew,
        baseline: parse_metrics(&payloads[&Stage::BaselineMetrics]).map_err(|source| {
            PipelineError::BadArtifact {
                stage: Stage::BaselineMetrics,
                source,
            }
        })?,
        optimized: parse_metrics(&payloads[&Stage::OptimizedMetrics]).map_err(|source| {
            PipelineError::BadArtifact {
                stage: Stage::OptimizedMetrics,
                source,
            }
        })?,
    };
    Ok(render(&metrics, plan.degradation_margin))
}

// ---- payload codecs shared with the checker -------------------------------

pub(crate) fn prices_text(panel: &PricePanel) -> StageResult<String> {
    let mut buf = Vec::new();
    write_prices(panel, &mut buf, b',')?;
    Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
}

pub(crate) fn parse_prices(text: &str) -> StageResult<PricePanel> {
    Ok(read_prices(text.as_bytes(), &LoadOptions::default())?)
}

pub(crate) fn parse_clean(text: &str) -> StageResult<(PricePanel, CleaningLog)> {
    let s = Sections::parse(text)?;
    let prices = parse_prices(s.require("prices")?)?;
    if !prices.is_clean() {
        return Err(PayloadError("cleaned prices contain missing or invalid values".into()).into());
    }
    Ok((prices, s.require("log")?.parse()?))
}

pub(crate) struct SplitPayload {
    pub rows: usize,
    pub train: PricePanel,
    pub test: PricePanel,
}

pub(crate) fn parse_split(text: &str) -> StageResult<SplitPayload> {
    let s = Sections::parse(text)?;
    let meta = parse_kv(s.require("meta")?)?;
    let count = |k: &str| -> StageResult<usize> {
        let v = kv_get(&meta, k)?;
        v.parse()
            .map_err(|_| PayloadError(format!("bad count `{k}={v}`")).into())
    };
    let out = SplitPayload {
        rows: count("rows")?,
        train: parse_prices(s.require("train")?)?,
        test: parse_prices(s.require("test")?)?,
    };
    if count("train_rows")? != out.train.n_rows() || count("test_rows")? != out.test.n_rows() {
        return Err(PayloadError("split counts disagree with the panels".into()).into());
    }
    Ok(out)
}

fn split_returns(text: &str) -> StageResult<(ReturnPanel, ReturnPanel)> {
    let s = parse_split(text)?;
    Ok((log_returns(&s.train)?, log_returns(&s.test)?))
}

pub(crate) fn parse_weights(text: &str) -> StageResult<(WeightSchedule, WeightSchedule)> {
    let s = Sections::parse(text)?;
    Ok((
        WeightSchedule::from_text(s.require("train")?)?,
        WeightSchedule::from_text(s.require("test")?)?,
    ))
}

fn metrics_text(
    train: MetricsReport,
    test: MetricsReport,
    train_series: &str,
    test_series: &str,
) -> String {
    let mut s = Sections::new();
    s.push("train", train.to_kv())
        .push("test", test.to_kv())
        .push("train_series", train_series)
        .push("test_series", test_series);
    s.to_text()
}

pub(crate) fn parse_metrics(text: &str) -> StageResult<MetricsPair> {
    let s = Sections::parse(text)?;
    for series in ["train_series", "test_series"] {
        parse_series_text(s.require(series)?)?;
    }
    Ok(MetricsPair {
        train: MetricsReport::from_kv(s.require("train")?)?,
        test: MetricsReport::from_kv(s.require("test")?)?,
    })
}

fn read_artifact(run_dir: &Path, manifest: &Manifest, stage: Stage) -> Result<String> {
    let record = manifest
        .get(stage)
        .ok_or(PipelineError::MissingArtifact(stage))?;
    let path = run_dir.join(&record.path);
    fs::read_to_string(&path).map_err(|e| PipelineError::io(path, e))
}

/// Baseline and optimised metrics of a finished run.
pub fn load_run_metrics(run_dir: &Path) -> Result<RunMetrics> {
    let manifest = Manifest::load(run_dir)?;
    let load = |stage| -> Result<MetricsPair> {
        parse_metrics(&read_artifact(run_dir, &manifest, stage)?)
            .map_err(|source| PipelineError::BadArtifact { stage, source })
    };
    Ok(RunMetrics {
        crew: manifest.crew,
        baseline: load(Stage::BaselineMetrics)?,
        optimized: load(Stage::OptimizedMetrics)?,
    })
}

/// The optimised portfolio's daily returns over the test period.
pub fn load_test_series(run_dir: &Path) -> Result<PortfolioReturns> {
    let manifest = Manifest::load(run_dir)?;
    let stage = Stage::OptimizedMetrics;
    let text = read_artifact(run_dir, &manifest, stage)?;
    let series = Sections::parse(&text)
        .map_err(StageError::from)
        .and_then(|s| Ok(parse_series_text(s.require("test_series")?)?.0))
        .map_err(|source| PipelineError::BadArtifact { stage, source })?;
    Ok(series)
}
