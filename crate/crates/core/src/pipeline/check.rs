use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use super::manifest::{digest_hex, Manifest, StageArtifact};
use super::payload::{kv_get, parse_kv, Sections};
use super::report::numerals;
use super::run::{parse_clean, parse_metrics, parse_prices, parse_split, parse_weights};
use super::{Result, Stage, StageError};
use crate::market_data::CleaningAction;
use crate::metrics::{format_display, METRIC_KEYS};
use crate::optimizer::{parse_schedule_records, SUM_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FindingKind {
    MissingPayload,
    DigestMismatch,
    SchemaViolation,
    InputMismatch,
    RowCountMismatch,
    SimplexViolation,
    MissingMetricKey,
    ReportNumeral,
    FallbackUsed,
}

impl FindingKind {
    fn label(self) -> &'static str {
        match self {
            Self::MissingPayload => "missing-payload",
            Self::DigestMismatch => "digest-mismatch",
            Self::SchemaViolation => "schema-violation",
            Self::InputMismatch => "input-mismatch",
            Self::RowCountMismatch => "row-count-mismatch",
            Self::SimplexViolation => "simplex-violation",
            Self::MissingMetricKey => "missing-metric-key",
            Self::ReportNumeral => "report-numeral",
            Self::FallbackUsed => "fallback-used",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub severity: Severity,
    pub stage: Stage,
    pub kind: FindingKind,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{sev} [{}] {}: {}",
            self.stage,
            self.kind.label(),
            self.message
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckOutcome {
    pub findings: Vec<Finding>,
}

impl CheckOutcome {
    /// True iff no finding is an error.
    pub fn passed(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub(crate) fn to_payload(&self) -> String {
        let warnings = self.findings.len() - self.errors().count();
        let mut s = Sections::new();
        s.push(
            "summary",
            format!(
                "status={}\nerrors={}\nwarnings={warnings}\n",
                if self.passed() { "pass" } else { "fail" },
                self.errors().count()
            ),
        )
        .push(
            "findings",
            self.findings
                .iter()
                .map(|f| format!("{f}\n"))
                .collect::<String>(),
        );
        s.to_text()
    }
}

/// Loads the manifest of `run_dir` and checks it.
pub fn check_run(run_dir: &Path) -> Result<CheckOutcome> {
    Ok(check_artifacts(&Manifest::load(run_dir)?, run_dir))
}

#[derive(Default)]
struct Seen {
    raw_rows: Option<usize>,
    clean_rows: Option<usize>,
    allowed_numerals: Option<BTreeSet<String>>,
}

/// Verifies payload digests, schemas and cross-stage coherence. Never fails;
/// problems are reported as findings.
pub fn check_artifacts(manifest: &Manifest, run_dir: &Path) -> CheckOutcome {
    let mut findings = Vec::new();
    let mut seen = Seen::default();
    for record in manifest.records() {
        let mut push = |severity, kind, message: String| {
            findings.push(Finding {
                severity,
                stage: record.stage,
                kind,
                message,
            })
        };
        check_inputs(manifest, record, &mut push);
        let expected_tag = record.stage.schema_tag(manifest.crew);
        if record.schema_tag != expected_tag {
            push(
                Severity::Error,
                FindingKind::SchemaViolation,
                format!(
                    "schema `{}` but crew {} writes `{expected_tag}`",
                    record.schema_tag, manifest.crew
                ),
            );
        }
        let bytes = match fs::read(run_dir.join(&record.path)) {
            Ok(b) => b,
            Err(e) => {
                push(
                    Severity::Error,
                    FindingKind::MissingPayload,
                    format!("{}: {e}", record.path),
                );
                continue;
            }
        };
        let actual = digest_hex(&bytes);
        if actual != record.digest {
            push(
                Severity::Error,
                FindingKind::DigestMismatch,
                format!(
                    "{} hashes to {actual}, manifest records {}",
                    record.path, record.digest
                ),
            );
        }
        let Ok(text) = String::from_utf8(bytes) else {
            push(
                Severity::Error,
                FindingKind::SchemaViolation,
                "payload is not UTF-8".into(),
            );
            continue;
        };
        check_payload(record.stage, &text, &mut seen, &mut push);
    }
    CheckOutcome { findings }
}

fn check_inputs(
    manifest: &Manifest,
    record: &StageArtifact,
    push: &mut impl FnMut(Severity, FindingKind, String),
) {
    let mut upstream = Vec::new();
    for input in &record.inputs {
        if input.source.starts_with('@') {
            continue;
        }
        let Some(stage) = input.upstream() else {
            push(
                Severity::Error,
                FindingKind::InputMismatch,
                format!("unknown input `{}`", input.source),
            );
            continue;
        };
        upstream.push(stage);
        match manifest.get(stage) {
            Some(up) if stage < record.stage && up.digest == input.digest => {}
            Some(_) if stage < record.stage => push(
                Severity::Error,
                FindingKind::InputMismatch,
                format!(
                    "consumed `{stage}` {} but the run holds a different artifact",
                    input.digest
                ),
            ),
            _ => push(
                Severity::Error,
                FindingKind::InputMismatch,
                format!("input `{stage}` is not an earlier artifact of this run"),
            ),
        }
    }
    if upstream != record.stage.dependencies() {
        push(
            Severity::Error,
            FindingKind::InputMismatch,
            format!("inputs {upstream:?} differ from the stage dependencies"),
        );
    }
}

fn check_payload(
    stage: Stage,
    text: &str,
    seen: &mut Seen,
    push: &mut impl FnMut(Severity, FindingKind, String),
) {
    let schema = |push: &mut dyn FnMut(Severity, FindingKind, String), e: StageError| {
        push(Severity::Error, FindingKind::SchemaViolation, e.to_string())
    };
    match stage {
        Stage::Loader => match parse_prices(text) {
            Ok(p) => seen.raw_rows = Some(p.n_rows()),
            Err(e) => schema(push, e),
        },
        Stage::Cleaner => match parse_clean(text) {
            Ok((clean, log)) => {
                let dropped: BTreeSet<_> = log
                    .entries
                    .iter()
                    .filter(|e| e.action == CleaningAction::Drop)
                    .map(|e| e.date)
                    .collect();
                if let Some(raw) = seen.raw_rows {
                    if clean.n_rows() + dropped.len() != raw {
                        push(
                            Severity::Error,
                            FindingKind::RowCountMismatch,
                            format!(
                                "{} clean rows + {} dropped != {raw} raw rows",
                                clean.n_rows(),
                                dropped.len()
                            ),
                        );
                    }
                }
                seen.clean_rows = Some(clean.n_rows());
            }
            Err(e) => schema(push, e),
        },
        Stage::Splitter => match parse_split(text) {
            Ok(s) => {
                let (train, test) = (s.train.n_rows(), s.test.n_rows());
                if train + test != s.rows || seen.clean_rows.is_some_and(|c| c != s.rows) {
                    push(
                        Severity::Error,
                        FindingKind::RowCountMismatch,
                        format!(
                            "train {train} + test {test} rows do not make up the {} cleaned rows",
                            seen.clean_rows.unwrap_or(s.rows)
                        ),
                    );
                }
            }
            Err(e) => schema(push, e),
        },
        Stage::BaselineMetrics | Stage::OptimizedMetrics => {
            if check_metric_keys(text, push) {
                match parse_metrics(text) {
                    Ok(pair) => {
                        let allowed = seen.allowed_numerals.get_or_insert_with(BTreeSet::new);
                        for r in [&pair.train, &pair.test] {
                            for (_, m) in r.numeric_fields() {
                                if let Some(v) = m.value() {
                                    allowed.insert(format_display(v));
                                }
                            }
                        }
                    }
                    Err(e) => schema(push, e),
                }
            }
        }
        Stage::Optimizer => {
            if check_simplex(text, push) {
                if let Err(e) = parse_weights(text) {
                    schema(push, e);
                }
            }
            let fallbacks = Sections::parse(text)
                .ok()
                .and_then(|s| s.get("meta").map(str::to_string))
                .and_then(|m| {
                    let kv = parse_kv(&m).ok()?;
                    kv_get(&kv, "fallbacks").ok()?.parse::<usize>().ok()
                });
            match fallbacks {
                Some(0) => {}
                Some(n) => push(
                    Severity::Warning,
                    FindingKind::FallbackUsed,
                    format!("{n} optimisation(s) fell back to the fallback policy"),
                ),
                None => push(
                    Severity::Error,
                    FindingKind::SchemaViolation,
                    "missing fallbacks count".into(),
                ),
            }
        }
        Stage::Checker => {
            let status = Sections::parse(text)
                .ok()
                .and_then(|s| s.get("summary").map(str::to_string))
                .and_then(|m| Some(kv_get(&parse_kv(&m).ok()?, "status").ok()? == "pass"));
            if status != Some(true) {
                push(
                    Severity::Error,
                    FindingKind::SchemaViolation,
                    "checker payload does not record a pass".into(),
                );
            }
        }
        Stage::FinalReport => {
            let Some(allowed) = &seen.allowed_numerals else {
                push(
                    Severity::Error,
                    FindingKind::ReportNumeral,
                    "no metrics artifacts to source numerals from".into(),
                );
                return;
            };
            for (line, n) in numerals(text) {
                if !allowed.contains(&n) {
                    push(
                        Severity::Error,
                        FindingKind::ReportNumeral,
                        format!("line {line}: `{n}` matches no metrics field"),
                    );
                }
            }
        }
    }
}

/// Reports every required metric key missing from the train and test blocks;
/// true when all are present.
fn check_metric_keys(text: &str, push: &mut impl FnMut(Severity, FindingKind, String)) -> bool {
    let sections = match Sections::parse(text) {
        Ok(s) => s,
        Err(e) => {
            push(Severity::Error, FindingKind::SchemaViolation, e.to_string());
            return false;
        }
    };
    let mut complete = true;
    for block in ["train", "test"] {
        let body = sections.get(block).unwrap_or("");
        let keys: BTreeSet<&str> = body
            .lines()
            .filter_map(|l| l.split_once('=').map(|(k, _)| k.trim()))
            .collect();
        for key in METRIC_KEYS.iter().filter(|k| !keys.contains(*k)) {
            complete = false;
            push(
                Severity::Error,
                FindingKind::MissingMetricKey,
                format!("[{block}] lacks `{key}`"),
            );
        }
    }
    complete
}

/// Reports weight groups that leave the simplex; true when all are valid.
fn check_simplex(text: &str, push: &mut impl FnMut(Severity, FindingKind, String)) -> bool {
    let sections = match Sections::parse(text) {
        Ok(s) => s,
        Err(e) => {
            push(Severity::Error, FindingKind::SchemaViolation, e.to_string());
            return false;
        }
    };
    let mut valid = true;
    for block in ["train", "test"] {
        let records = match sections
            .require(block)
            .map_err(StageError::from)
            .and_then(|b| {
                parse_schedule_records(b)
                    .map(|(_, _, r)| r)
                    .map_err(StageError::from)
            }) {
            Ok(r) => r,
            Err(e) => {
                push(Severity::Error, FindingKind::SchemaViolation, e.to_string());
                valid = false;
                continue;
            }
        };
        for group in records.chunk_by(|a, b| a.start == b.start && a.end == b.end) {
            let sum: f64 = group.iter().map(|r| r.weight).sum();
            let negative = group
                .iter()
                .any(|r| !(r.weight >= 0.0) || !r.weight.is_finite());
            if negative || (sum - 1.0).abs() > SUM_TOLERANCE {
                valid = false;
                push(
                    Severity::Error,
                    FindingKind::SimplexViolation,
                    format!(
                        "[{block}] weights for {}..{} sum to {sum}{}",
                        group[0].start,
                        group[0].end,
                        if negative {
                            " with negative or non-finite entries"
                        } else {
                            ""
                        }
                    ),
                );
            }
        }
    }
    valid
}
