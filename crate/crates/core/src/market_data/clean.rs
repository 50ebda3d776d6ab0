use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;

use super::{MarketDataError, PricePanel, Result, DATE_FORMAT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CleaningAction {
    /// Missing or non-positive price replaced by the previous valid price.
    Fill,
    /// Leading row removed because no earlier price exists to fill from.
    Drop,
}

impl CleaningAction {
    fn as_str(self) -> &'static str {
        match self {
            Self::Fill => "fill",
            Self::Drop => "drop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleaningEntry {
    pub date: NaiveDate,
    pub asset: String,
    pub action: CleaningAction,
}

/// Record of every change made by [`clean_prices`], in date order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleaningLog {
    pub entries: Vec<CleaningEntry>,
}

impl CleaningLog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(fills, drops)` recorded for `asset`.
    pub fn counts(&self, asset: &str) -> (usize, usize) {
        self.entries
            .iter()
            .filter(|e| e.asset == asset)
            .fold((0, 0), |(f, d), e| match e.action {
                CleaningAction::Fill => (f + 1, d),
                CleaningAction::Drop => (f, d + 1),
            })
    }
}

/// One `date,asset,action` line per entry.
impl fmt::Display for CleaningLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(
                f,
                "{},{},{}",
                e.date.format(DATE_FORMAT),
                e.asset,
                e.action.as_str()
            )?;
        }
        Ok(())
    }
}

impl FromStr for CleaningLog {
    type Err = MarketDataError;

    fn from_str(s: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for line in s.lines().filter(|l| !l.trim().is_empty()) {
            let bad = || MarketDataError::BadLogLine(line.to_string());
            let mut parts = line.splitn(3, ',');
            let (Some(date), Some(asset), Some(action)) =
                (parts.next(), parts.next(), parts.next())
            else {
                return Err(bad());
            };
            let date = NaiveDate::parse_from_str(date, DATE_FORMAT).map_err(|_| bad())?;
            let action = match action {
                "fill" => CleaningAction::Fill,
                "drop" => CleaningAction::Drop,
                _ => return Err(bad()),
            };
            entries.push(CleaningEntry {
                date,
                asset: asset.to_string(),
                action,
            });
        }
        Ok(Self { entries })
    }
}

fn is_valid(p: f64) -> bool {
    p.is_finite() && p > 0.0
}

/// Forward-fills missing and non-positive prices and drops leading rows that
/// still contain a gap afterwards.
///
/// A dropped row is logged once per asset. Fails if any asset has no valid
/// price at all.
pub fn clean_prices(panel: &PricePanel) -> Result<(PricePanel, CleaningLog)> {
    let n = panel.n_assets();
    for (col, asset) in panel.assets().iter().enumerate() {
        if !panel.column(col).any(is_valid) {
            return Err(MarketDataError::AllMissing(asset.clone()));
        }
    }

    // Every column has a valid value somewhere, so the first fully valid row
    // after forward-filling is the row where the last column starts.
    let first_full = (0..n)
        .map(|col| panel.column(col).position(is_valid).unwrap_or(0))
        .max()
        .unwrap_or(0);

    let mut log = CleaningLog::default();
    for &date in &panel.dates()[..first_full] {
        for asset in panel.assets() {
            log.entries.push(CleaningEntry {
                date,
                asset: asset.clone(),
                action: CleaningAction::Drop,
            });
        }
    }

    let mut last: Vec<f64> = vec![f64::NAN; n];
    for t in 0..first_full {
        for (col, &p) in panel.row(t).iter().enumerate() {
            if is_valid(p) {
                last[col] = p;
            }
        }
    }

    let mut values = Vec::with_capacity((panel.n_rows() - first_full) * n);
    for t in first_full..panel.n_rows() {
        for (col, &p) in panel.row(t).iter().enumerate() {
            if is_valid(p) {
                last[col] = p;
            } else {
                log.entries.push(CleaningEntry {
                    date: panel.dates()[t],
                    asset: panel.assets()[col].clone(),
                    action: CleaningAction::Fill,
                });
            }
            values.push(last[col]);
        }
    }

    let cleaned = PricePanel::new(
        panel.dates()[first_full..].to_vec(),
        panel.assets().to_vec(),
        values,
    )?;
    Ok((cleaned, log))
}
