//! Daily close-price panels: loading, cleaning, log returns, summaries and
//! chronological train/test splits.

mod clean;
mod csv_io;
mod summary;

use std::fmt;
use std::marker::PhantomData;
use std::ops::Range;
use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub use clean::{clean_prices, CleaningAction, CleaningEntry, CleaningLog};
pub use csv_io::{load_prices, read_prices, write_prices, LoadOptions};
pub use summary::{summarize, AssetSummary, PanelSummary};

/// Date format used everywhere a date is read or written.
pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited input: {0}")]
    Csv(#[from] csv::Error),
    #[error("header has no `date` column")]
    NoDateColumn,
    #[error("header names no asset columns")]
    NoAssetColumns,
    #[error("duplicate asset column `{0}`")]
    DuplicateAsset(String),
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("dates are not strictly increasing at {0}")]
    UnorderedDates(NaiveDate),
    #[error("line {line}: cannot parse date `{value}`")]
    BadDate { line: u64, value: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("panel shape mismatch: {dates} dates x {assets} assets but {values} values")]
    ShapeMismatch {
        dates: usize,
        assets: usize,
        values: usize,
    },
    #[error("asset `{0}` has no valid price")]
    AllMissing(String),
    #[error("invalid price {value} for {asset} on {date}; clean the panel first")]
    InvalidPrice {
        date: NaiveDate,
        asset: String,
        value: f64,
    },
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    InvalidRatio(f64),
    #[error("split of {rows} rows at ratio {ratio} leaves an empty side")]
    EmptySplitSide { rows: usize, ratio: f64 },
    #[error("panel is empty")]
    Empty,
    #[error("malformed cleaning log line `{0}`")]
    BadLogLine(String),
}

pub type Result<T, E = MarketDataError> = std::result::Result<T, E>;

/// Marker for panels holding closing prices in USD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prices;

/// Marker for panels holding daily log returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Returns;

/// Date-indexed matrix with one column per asset, stored row-major.
///
/// Missing observations are represented by `NaN` until the panel is cleaned.
/// Equality is bitwise on the stored values so that missing markers compare
/// equal to themselves.
#[derive(Debug, Clone)]
pub struct Panel<K> {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    values: Vec<f64>,
    kind: PhantomData<K>,
}

pub type PricePanel = Panel<Prices>;
pub type ReturnPanel = Panel<Returns>;

impl<K> Panel<K> {
    /// Builds a panel from row-major values.
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if assets.is_empty() {
            return Err(MarketDataError::NoAssetColumns);
        }
        if values.len() != dates.len() * assets.len() {
            return Err(MarketDataError::ShapeMismatch {
                dates: dates.len(),
                assets: assets.len(),
                values: values.len(),
            });
        }
        for (i, a) in assets.iter().enumerate() {
            if assets[..i].contains(a) {
                return Err(MarketDataError::DuplicateAsset(a.clone()));
            }
        }
        for pair in dates.windows(2) {
            if pair[1] == pair[0] {
                return Err(MarketDataError::DuplicateDate(pair[1]));
            }
            if pair[1] < pair[0] {
                return Err(MarketDataError::UnorderedDates(pair[1]));
            }
        }
        Ok(Self {
            dates,
            assets,
            values,
            kind: PhantomData,
        })
    }

    /// Builds a panel from one `Vec` per row.
    pub fn from_rows(
        dates: Vec<NaiveDate>,
        assets: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let width = assets.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(MarketDataError::RaggedRow {
                line: bad as u64 + 1,
                expected: width,
                found: rows[bad].len(),
            });
        }
        Self::new(dates, assets, rows.into_iter().flatten().collect())
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.assets.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.assets.len();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.assets.len())
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[col])
    }

    pub fn asset_index(&self, ticker: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == ticker)
    }

    /// Copy of the rows in `range`.
    pub fn slice_rows(&self, range: Range<usize>) -> Self {
        let n = self.assets.len();
        Self {
            dates: self.dates[range.clone()].to_vec(),
            assets: self.assets.clone(),
            values: self.values[range.start * n..range.end * n].to_vec(),
            kind: PhantomData,
        }
    }

    /// Appends `other` below `self`; both must share tickers and `other` must
    /// start after `self` ends.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.assets != other.assets {
            return Err(MarketDataError::ShapeMismatch {
                dates: other.n_rows(),
                assets: self.n_assets(),
                values: other.values.len(),
            });
        }
        let mut dates = self.dates.clone();
        dates.extend_from_slice(&other.dates);
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Self::new(dates, self.assets.clone(), values)
    }
}

impl<K> PartialEq for Panel<K> {
    fn eq(&self, other: &Self) -> bool {
        self.dates == other.dates
            && self.assets == other.assets
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl fmt::Display for Panel<Prices> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "price panel {} rows x {} assets",
            self.n_rows(),
            self.n_assets()
        )
    }
}

impl PricePanel {
    /// True when every price is finite and strictly positive.
    pub fn is_clean(&self) -> bool {
        self.values.iter().all(|p| p.is_finite() && *p > 0.0)
    }
}

/// Daily log returns: `ln(p[t] / p[t-1])`, dated by the later observation.
pub fn log_returns(panel: &PricePanel) -> Result<ReturnPanel> {
    if panel.n_rows() < 2 {
        return Err(MarketDataError::TooFewRows {
            needed: 2,
            found: panel.n_rows(),
        });
    }
    let n = panel.n_assets();
    for (t, row) in panel.rows().enumerate() {
        if let Some(col) = row.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(MarketDataError::InvalidPrice {
                date: panel.dates[t],
                asset: panel.assets[col].clone(),
                value: row[col],
            });
        }
    }
    let mut values = Vec::with_capacity((panel.n_rows() - 1) * n);
    for t in 1..panel.n_rows() {
        let prev = panel.row(t - 1);
        let cur = panel.row(t);
        values.extend(cur.iter().zip(prev).map(|(c, p)| (c / p).ln()));
    }
    ReturnPanel::new(panel.dates[1..].to_vec(), panel.assets.clone(), values)
}

/// Chronological train/test split of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair<K> {
    pub train: Panel<K>,
    pub test: Panel<K>,
    pub ratio: f64,
}

/// Number of training rows for `rows` observations: `floor(ratio * rows)`.
///
/// A tiny epsilon absorbs representation error so that e.g. `0.29 * 100`
/// yields 29 rather than 28.
pub fn train_rows(rows: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(MarketDataError::InvalidRatio(ratio));
    }
    let train = (ratio * rows as f64 + 1e-9).floor() as usize;
    if train == 0 || train >= rows {
        return Err(MarketDataError::EmptySplitSide { rows, ratio });
    }
    Ok(train)
}

/// Splits without shuffling: the first `floor(ratio * T)` rows train, the rest test.
pub fn split<K: Clone>(panel: &Panel<K>, ratio: f64) -> Result<SplitPair<K>> {
    if panel.is_empty() {
        return Err(MarketDataError::Empty);
    }
    let cut = train_rows(panel.n_rows(), ratio)?;
    Ok(SplitPair {
        train: panel.slice_rows(0..cut),
        test: panel.slice_rows(cut..panel.n_rows()),
        ratio,
    })
}

#[cfg(test)]
pub(crate) fn test_dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2020, 8, 20).unwrap();
    (0..n as u64)
        .map(|i| start + chrono::Days::new(i))
        .collect()
}
