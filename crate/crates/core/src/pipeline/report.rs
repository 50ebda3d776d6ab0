use std::fmt::Write as _;
use std::path::Path;

use super::run::parse_metrics;
use super::{CrewId, Manifest, PipelineError, Result, Stage};
use crate::metrics::{Metric, MetricsReport, RegimeStatus, UNDEFINED};

/// Default relative margin for degradation flags.
pub const DEFAULT_MARGIN: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsPair {
    pub train: MetricsReport,
    pub test: MetricsReport,
}

/// Baseline (equal-weight) and optimised metrics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub crew: CrewId,
    pub baseline: MetricsPair,
    pub optimized: MetricsPair,
}

/// Train-to-test change of one optimised metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Degradation {
    pub key: &'static str,
    pub train: Metric,
    pub test: Metric,
    /// `None` when either side is undefined.
    pub degraded: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalReport {
    pub crew: CrewId,
    pub superior_on_train: bool,
    pub recommend_optimized: bool,
    pub degradations: Vec<Degradation>,
    pub margin: f64,
    /// Rendered five-section text.
    pub text: String,
}

impl FinalReport {
    /// Machine-readable `key=value` companion of [`text`](Self::text).
    pub fn sidecar(&self) -> String {
        let degraded: Vec<&str> = self
            .degradations
            .iter()
            .filter(|d| d.degraded == Some(true))
            .map(|d| d.key)
            .collect();
        format!(
            "crew={}\nverdict={}\nrecommendation={}\nmargin={}\ndegraded={}\n",
            self.crew,
            if self.superior_on_train {
                "optimized_superior"
            } else {
                "optimized_not_superior"
            },
            if self.recommend_optimized {
                "optimized"
            } else {
                "equal_weight"
            },
            self.margin,
            if degraded.is_empty() {
                "none".to_string()
            } else {
                degraded.join(",")
            },
        )
    }
}

const ROWS: [(&str, &str); 5] = [
    ("expected_return", "Expected Return"),
    ("volatility", "Volatility"),
    ("sharpe", "Sharpe Ratio"),
    ("sortino", "Sortino Ratio"),
    ("max_drawdown", "Max Drawdown"),
];

fn field(r: &MetricsReport, key: &str) -> Metric {
    r.numeric_fields()
        .into_iter()
        .find(|(k, _)| *k == key)
        .map_or(Metric::Undefined, |(_, m)| m)
}

fn gt(a: Metric, b: Metric) -> bool {
    matches!((a, b), (Metric::Value(x), Metric::Value(y)) if x > y)
}

/// Whether `test` is worse than `train` by more than `margin` relative to
/// `|train|`. Returns, Sharpe and Sortino should not fall, volatility should
/// not rise and drawdowns should not deepen.
pub(crate) fn is_degraded(key: &str, train: f64, test: f64, margin: f64) -> bool {
    let slack = margin * train.abs();
    match key {
        "volatility" => test > train + slack,
        "max_drawdown" => test.abs() > train.abs() + slack,
        _ => test < train - slack,
    }
}

fn liquidity_cell(r: &MetricsReport) -> String {
    match r.liquidity_hhi {
        Metric::Value(_) => format!("{} ({})", r.liquidity_risk, r.liquidity_hhi.display()),
        Metric::Undefined => UNDEFINED.to_string(),
    }
}

fn regime_cell(r: &MetricsReport) -> String {
    match r.regime_change {
        RegimeStatus::Assessed { .. } => {
            format!(
                "{} ({})",
                r.regime_change,
                r.regime_change.statistic().display()
            )
        }
        _ => UNDEFINED.to_string(),
    }
}

fn table(out: &mut String, base: &MetricsReport, opt: &MetricsReport) {
    writeln!(out, "{:<26}{:<22}Optimized", "Metric", "Equal Weight").unwrap();
    for (key, label) in ROWS {
        writeln!(
            out,
            "{:<26}{:<22}{}",
            label,
            field(base, key).display(),
            field(opt, key).display()
        )
        .unwrap();
    }
    writeln!(
        out,
        "{:<26}{:<22}{}",
        "Liquidity Risk (proxy)",
        liquidity_cell(base),
        liquidity_cell(opt)
    )
    .unwrap();
    writeln!(
        out,
        "{:<26}{:<22}{}",
        "Regime Change Detection",
        regime_cell(base),
        regime_cell(opt)
    )
    .unwrap();
}

/// Renders the five-section report. Every number in the text is the
/// four-decimal display form of a metrics field.
pub(crate) fn render(m: &RunMetrics, margin: f64) -> FinalReport {
    let (base, opt) = (&m.baseline, &m.optimized);
    let superior_on_train = gt(opt.train.sharpe, base.train.sharpe);
    let recommend_optimized = gt(opt.test.sharpe, base.test.sharpe);
    let degradations: Vec<Degradation> = ROWS
        .iter()
        .map(|(key, _)| {
            let (train, test) = (field(&opt.train, key), field(&opt.test, key));
            let degraded = match (train, test) {
                (Metric::Value(a), Metric::Value(b)) => Some(is_degraded(key, a, b, margin)),
                _ => None,
            };
            Degradation {
                key,
                train,
                test,
                degraded,
            }
        })
        .collect();

    let strategy = match m.crew {
        CrewId::A => "static Sharpe maximisation",
        CrewId::B => "rolling Sharpe maximisation",
    };
    let mut out = String::new();
    writeln!(out, "Crew {} final report: {strategy}", m.crew).unwrap();
    out.push('\n');
    out.push_str("1. Comparison of approaches (training period)\n");
    table(&mut out, &base.train, &opt.train);
    out.push('\n');

    out.push_str("2. Training verdict\n");
    writeln!(
        out,
        "{}: Sharpe ratio {} (optimized) vs {} (equal weight).",
        if superior_on_train {
            "The optimized portfolio is superior on the training period"
        } else {
            "The optimized portfolio is not superior on the training period"
        },
        opt.train.sharpe.display(),
        base.train.sharpe.display()
    )
    .unwrap();
    out.push('\n');

    out.push_str("3. Test period metrics\n");
    table(&mut out, &base.test, &opt.test);
    out.push('\n');

    out.push_str("4. Generalization (optimized portfolio, training vs test)\n");
    for (d, (_, label)) in degradations.iter().zip(ROWS) {
        let verdict = match d.degraded {
            Some(true) => "degraded",
            Some(false) => "stable",
            None => "not assessed",
        };
        writeln!(
            out,
            "{label}: {} -> {} ({verdict})",
            d.train.display(),
            d.test.display()
        )
        .unwrap();
    }
    out.push_str("Liquidity risk is a concentration proxy of the final weights, not a market liquidity measure.\n");
    out.push('\n');

    out.push_str("5. Recommendation\n");
    writeln!(
        out,
        "{}: test Sharpe ratio {} (optimized) vs {} (equal weight).",
        if recommend_optimized {
            "Adopt the optimized portfolio"
        } else {
            "Keep the equal-weight portfolio"
        },
        opt.test.sharpe.display(),
        base.test.sharpe.display()
    )
    .unwrap();

    FinalReport {
        crew: m.crew,
        superior_on_train,
        recommend_optimized,
        degradations,
        margin,
        text: out,
    }
}

/// Renders the report of `crew` from the metrics artifacts listed in
/// `manifest`.
pub fn render_final_report(
    manifest: &Manifest,
    run_dir: &Path,
    crew: CrewId,
    margin: f64,
) -> Result<FinalReport> {
    if manifest.crew != crew {
        return Err(PipelineError::CrewMismatch {
            expected: crew,
            found: manifest.crew,
        });
    }
    let load = |stage: Stage| -> Result<MetricsPair> {
        let record = manifest
            .get(stage)
            .ok_or(PipelineError::MissingArtifact(stage))?;
        let path = run_dir.join(&record.path);
        let text =
            std::fs::read_to_string(&path).map_err(|_| PipelineError::MissingArtifact(stage))?;
        parse_metrics(&text).map_err(|source| PipelineError::BadArtifact { stage, source })
    };
    let metrics = RunMetrics {
        crew,
        baseline: load(Stage::BaselineMetrics)?,
        optimized: load(Stage::OptimizedMetrics)?,
    };
    Ok(render(&metrics, margin))
}

/// Numerals in `text` as `(line number, token)`, 1-based. Digits that are
/// part of a word (e.g. a ticker) and leading section ordinals are skipped.
pub(crate) fn numerals(text: &str) -> Vec<(usize, String)> {
    let mut found = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            if !chars[i].is_ascii_digit() {
                i += 1;
                continue;
            }
            let mut start = i;
            let word_before = i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == '_');
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let word_after = i < chars.len() && (chars[i].is_alphabetic() || chars[i] == '_');
            if word_before || word_after {
                continue;
            }
            let ordinal =
                start == 0 && chars.get(i) == Some(&'.') && chars.get(i + 1) == Some(&' ');
            if ordinal {
                continue;
            }
            if start > 0 && chars[start - 1] == '-' {
                start -= 1;
            }
            found.push((ln + 1, chars[start..i].iter().collect()));
        }
    }
    found
}
