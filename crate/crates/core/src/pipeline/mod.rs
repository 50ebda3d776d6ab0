//! Staged crew pipeline.
//!
//! A crew is a fixed chain of eight stages. Each stage reads the payloads of
//! earlier stages from the run directory, writes exactly one payload file and
//! records it in the `manifest` together with its SHA-256 digest and the
//! digests it consumed. Re-running a crew in the same directory reuses every
//! stage whose record, payload and inputs are still intact.

mod check;
mod manifest;
mod payload;
mod report;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::backtest::BacktestError;
use crate::market_data::MarketDataError;
use crate::metrics::{MetricError, MetricsConfig};
use crate::optimizer::{OptimizerConfig, OptimizerError};

pub use check::{check_artifacts, check_run, CheckOutcome, Finding, FindingKind, Severity};
pub use manifest::{digest_hex, ArtifactInput, Manifest, StageArtifact, DIGEST_ALGORITHM};
pub use payload::Sections;
pub use report::{
    render_final_report, Degradation, FinalReport, MetricsPair, RunMetrics, DEFAULT_MARGIN,
};
pub use run::{load_run_metrics, load_test_series, run_crew, RunOutcome, StageStatus};

/// File name of the manifest inside a run directory.
pub const MANIFEST_FILE: &str = "manifest";
/// File written when a stage fails.
pub const FAILURE_FILE: &str = "failure";
/// Machine-readable companion of the final report.
pub const REPORT_SIDECAR: &str = "report.kv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrewId {
    /// Static Sharpe maximisation on the training period.
    A,
    /// Rolling re-optimisation every holding period.
    B,
}

impl fmt::Display for CrewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A => "A",
            Self::B => "B",
        })
    }
}

impl FromStr for CrewId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Self::A),
            "B" | "b" => Ok(Self::B),
            other => Err(format!("unknown crew `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Loader,
    Cleaner,
    Splitter,
    BaselineMetrics,
    Optimizer,
    OptimizedMetrics,
    Checker,
    FinalReport,
}

impl Stage {
    /// Every stage in dependency order.
    pub const ALL: [Stage; 8] = [
        Stage::Loader,
        Stage::Cleaner,
        Stage::Splitter,
        Stage::BaselineMetrics,
        Stage::Optimizer,
        Stage::OptimizedMetrics,
        Stage::Checker,
        Stage::FinalReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Loader => "loader",
            Self::Cleaner => "cleaner",
            Self::Splitter => "splitter",
            Self::BaselineMetrics => "baseline-metrics",
            Self::Optimizer => "optimizer",
            Self::OptimizedMetrics => "optimized-metrics",
            Self::Checker => "checker",
            Self::FinalReport => "final-report",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Payload schema written by this stage for `crew`.
    pub fn schema_tag(self, crew: CrewId) -> &'static str {
        match (self, crew) {
            (Self::Loader, _) => "prices.raw.v1",
            (Self::Cleaner, _) => "prices.clean.v1",
            (Self::Splitter, _) => "split.v1",
            (Self::BaselineMetrics, _) => "metrics.baseline.v1",
            (Self::Optimizer, CrewId::A) => "weights.static.v1",
            (Self::Optimizer, CrewId::B) => "weights.rolling.v1",
            (Self::OptimizedMetrics, _) => "metrics.optimized.v1",
            (Self::Checker, _) => "check.v1",
            (Self::FinalReport, _) => "report.v1",
        }
    }

    /// Upstream stages whose payloads this stage reads.
    pub fn dependencies(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Loader => &[],
            Cleaner => &[Loader],
            Splitter => &[Cleaner],
            BaselineMetrics => &[Splitter],
            Optimizer => &[Splitter],
            OptimizedMetrics => &[Splitter, Optimizer],
            Checker => &[
                Loader,
                Cleaner,
                Splitter,
                BaselineMetrics,
                Optimizer,
                OptimizedMetrics,
            ],
            FinalReport => &[BaselineMetrics, OptimizedMetrics, Checker],
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Payload file name inside the run directory.
    pub fn payload_file(self) -> String {
        format!("{:02}-{}.txt", self.index() + 1, self.name())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything that determines a crew run besides the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct CrewPlan {
    pub crew: CrewId,
    pub metrics: MetricsConfig,
    pub optimizer: OptimizerConfig,
    pub split_ratio: f64,
    pub window: usize,
    pub holding: usize,
    /// Relative margin beyond which a test metric counts as degraded.
    pub degradation_margin: f64,
}

impl CrewPlan {
    pub fn new(crew: CrewId) -> Self {
        Self {
            crew,
            metrics: MetricsConfig::default(),
            optimizer: OptimizerConfig::default(),
            split_ratio: 0.8,
            window: 30,
            holding: 30,
            degradation_margin: DEFAULT_MARGIN,
        }
    }

    pub fn stages(&self) -> [Stage; 8] {
        Stage::ALL
    }

    /// The configuration slice a stage depends on, as canonical text. Its
    /// digest is recorded among the stage's inputs so that changing an
    /// unrelated setting does not invalidate the stage.
    pub fn stage_config(&self, stage: Stage) -> Option<String> {
        let m = &self.metrics;
        let metrics = format!(
            "risk_free_rate={}\nperiods_per_year={}\nmar={}\nregime_threshold={}\nliquidity_thresholds={},{}\n",
            m.risk_free_rate,
            m.periods_per_year,
            m.mar(),
            m.regime_var_ratio_threshold,
            m.liquidity_hhi_thresholds.0,
            m.liquidity_hhi_thresholds.1,
        );
        let o = &self.optimizer;
        match stage {
            Stage::Loader | Stage::Cleaner | Stage::Checker => None,
            Stage::Splitter => Some(format!("split_ratio={}\n", self.split_ratio)),
            Stage::BaselineMetrics | Stage::OptimizedMetrics => Some(metrics),
            Stage::Optimizer => {
                let mut s = format!(
                    "crew={}\n{metrics}restarts={}\nmax_iterations={}\nconvergence_tol={}\nstep_shrink={}\nseed={}\nfallback={:?}\n",
                    self.crew, o.restarts, o.max_iterations, o.convergence_tol, o.step_shrink, o.seed, o.fallback_policy,
                );
                if self.crew == CrewId::B {
                    s.push_str(&format!(
                        "window={}\nholding={}\n",
                        self.window, self.holding
                    ));
                }
                Some(s)
            }
            Stage::FinalReport => Some(format!(
                "crew={}\nmargin={}\n",
                self.crew, self.degradation_margin
            )),
        }
    }

    pub fn validate(&self) -> Result<(), StageError> {
        self.metrics.validate()?;
        self.optimizer.validate()?;
        crate::market_data::train_rows(100, self.split_ratio).map(|_| ())?;
        if self.crew == CrewId::B && (self.window < 2 || self.holding < 2) {
            return Err(OptimizerError::BadWindow {
                window: self.window,
                holding: self.holding,
            }
            .into());
        }
        if !(self.degradation_margin >= 0.0 && self.degradation_margin.is_finite()) {
            return Err(PayloadError("degradation margin must be non-negative".into()).into());
        }
        Ok(())
    }
}

/// A payload that does not match its schema.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct PayloadError(pub String);

/// Why a single stage failed.
#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Backtest(#[from] BacktestError),
    #[error("malformed payload: {0}")]
    Payload(#[from] PayloadError),
    #[error("artifact check failed with {0} error finding(s)")]
    CheckFailed(usize),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no manifest in {0}")]
    MissingManifest(PathBuf),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("run directory belongs to crew {found}, not crew {expected}")]
    CrewMismatch { expected: CrewId, found: CrewId },
    #[error("invalid plan: {0}")]
    InvalidPlan(StageError),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageError,
    },
    #[error("no `{0}` artifact in the run")]
    MissingArtifact(Stage),
    #[error("artifact `{stage}` is unreadable: {source}")]
    BadArtifact {
        stage: Stage,
        #[source]
        source: StageError,
    },
}

impl PipelineError {
    /// The failing stage, if the error came from one.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Self::Stage { stage, .. } | Self::BadArtifact { stage, .. } => Some(*stage),
            Self::MissingArtifact(stage) => Some(*stage),
            _ => None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_order_is_topological() {
        for (i, s) in Stage::ALL.iter().enumerate() {
            assert_eq!(s.index(), i);
            assert!(s.dependencies().iter().all(|d| d.index() < i));
            assert_eq!(Stage::from_name(s.name()), Some(*s));
        }
    }

    #[test]
    fn crews_differ_only_in_the_optimizer() {
        for s in Stage::ALL {
            let differs = s.schema_tag(CrewId::A) != s.schema_tag(CrewId::B);
            assert_eq!(differs, s == Stage::Optimizer);
        }
        let (a, b) = (CrewPlan::new(CrewId::A), CrewPlan::new(CrewId::B));
        for s in Stage::ALL {
            let same = a.stage_config(s) == b.stage_config(s);
            assert_eq!(
                same,
                !matches!(s, Stage::Optimizer | Stage::FinalReport),
                "{s}"
            );
        }
    }

    #[test]
    fn plan_validation() {
        assert!(CrewPlan::new(CrewId::B).validate().is_ok());
        let mut p = CrewPlan::new(CrewId::B);
        p.window = 1;
        assert!(p.validate().is_err());
        let mut p = CrewPlan::new(CrewId::A);
        p.split_ratio = 1.0;
        assert!(p.validate().is_err());
        assert_eq!("b".parse::<CrewId>().unwrap(), CrewId::B);
        assert!("c".parse::<CrewId>().is_err());
    }
}
