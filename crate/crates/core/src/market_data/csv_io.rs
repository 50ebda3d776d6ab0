use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{MarketDataError, PricePanel, Result, DATE_FORMAT};

/// Parsing options for delimited price files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    pub delimiter: u8,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

/// Loads a price file: a header row with a `date` column plus one column per
/// ticker, one row per day.
///
/// Rows may appear in any order; the panel is sorted ascending. Cells that do
/// not parse as numbers become missing (`NaN`) and are left for
/// [`clean_prices`](super::clean_prices).
pub fn load_prices(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<PricePanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| MarketDataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_prices(file, opts)
}

pub fn read_prices<R: Read>(reader: R, opts: &LoadOptions) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    let date_col = header
        .iter()
        .position(|h| h.eq_ignore_ascii_case("date"))
        .ok_or(MarketDataError::NoDateColumn)?;
    let asset_cols: Vec<usize> = (0..header.len()).filter(|&c| c != date_col).collect();
    if asset_cols.is_empty() {
        return Err(MarketDataError::NoAssetColumns);
    }
    let assets: Vec<String> = asset_cols.iter().map(|&c| header[c].to_string()).collect();

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != header.len() {
            return Err(MarketDataError::RaggedRow {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        let raw_date = &record[date_col];
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|_| {
            MarketDataError::BadDate {
                line,
                value: raw_date.to_string(),
            }
        })?;
        let prices = asset_cols
            .iter()
            .map(|&c| record[c].parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        rows.push((date, prices));
    }

    rows.sort_by_key(|(d, _)| *d);
    if let Some(pair) = rows.windows(2).find(|p| p[0].0 == p[1].0) {
        return Err(MarketDataError::DuplicateDate(pair[0].0));
    }
    let (dates, values): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    PricePanel::from_rows(dates, assets, values)
}

/// Writes the canonical delimited form read back by [`read_prices`].
///
/// Values use the shortest representation that round-trips exactly; missing
/// values are written as empty cells.
pub fn write_prices<W: Write>(panel: &PricePanel, writer: W, delimiter: u8) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(panel.assets().iter().cloned());
    wtr.write_record(&header)?;
    for (date, row) in panel.dates().iter().zip(panel.rows()) {
        let mut rec = vec![date.format(DATE_FORMAT).to_string()];
        rec.extend(row.iter().map(|v| {
            if v.is_nan() {
                String::new()
            } else {
                v.to_string()
            }
        }));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| MarketDataError::Csv(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(s: &str) -> Result<PricePanel> {
        read_prices(s.as_bytes(), &LoadOptions::default())
    }

    #[test]
    fn minimal_file() {
        let p = read("date,BTC\n2021-01-01,29000.5\n").unwrap();
        assert_eq!((p.n_rows(), p.n_assets()), (1, 1));
        assert_eq!(p.value(0, 0), 29000.5);
    }

    #[test]
    fn reverse_order_is_sorted() {
        let p = read("date,A,B\n2021-01-03,3,30\n2021-01-02,2,20\n2021-01-01,1,10\n").unwrap();
        assert_eq!(p.dates()[0].to_string(), "2021-01-01");
        assert_eq!(p.row(2), &[3.0, 30.0]);
    }

    #[test]
    fn date_column_need_not_be_first() {
        let p = read("A,Date\n1.5,2021-01-01\n").unwrap();
        assert_eq!(p.assets(), &["A".to_string()]);
        assert_eq!(p.value(0, 0), 1.5);
    }

    #[test]
    fn unparseable_cells_become_missing() {
        let p = read("date,A,B\n2021-01-01,,x\n2021-01-02,1,2\n").unwrap();
        assert!(p.value(0, 0).is_nan() && p.value(0, 1).is_nan());
        assert!(!p.is_clean());
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            read("day,A\n"),
            Err(MarketDataError::NoDateColumn)
        ));
        assert!(matches!(
            read("date\n2021-01-01\n"),
            Err(MarketDataError::NoAssetColumns)
        ));
    }

    #[test]
    fn duplicate_date_names_the_date() {
        let err = read("date,A\n2021-03-04,1\n2021-03-04,2\n").unwrap_err();
        assert!(matches!(err, MarketDataError::DuplicateDate(_)));
        assert!(err.to_string().contains("2021-03-04"));
    }

    #[test]
    fn bad_date_and_ragged_rows() {
        assert!(matches!(
            read("date,A\n03/04/2021,1\n"),
            Err(MarketDataError::BadDate { .. })
        ));
        assert!(matches!(
            read("date,A,B\n2021-03-04,1\n"),
            Err(MarketDataError::RaggedRow { .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_prices("/nonexistent/prices.csv", &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, MarketDataError::Io { .. }));
    }

    #[test]
    fn semicolon_delimiter() {
        let opts = LoadOptions { delimiter: b';' };
        let p = read_prices("date;A;B\n2021-01-01;1.25;2\n".as_bytes(), &opts).unwrap();
        assert_eq!(p.row(0), &[1.25, 2.0]);
    }

    proptest! {
        #[test]
        fn canonical_round_trip(
            rows in 1usize..20,
            cols in 1usize..5,
            seed in prop::collection::vec(prop_oneof![Just(f64::NAN), 1e-9f64..1e9], 100),
        ) {
            let values: Vec<f64> = (0..rows * cols).map(|i| seed[i % seed.len()]).collect();
            let assets = (0..cols).map(|c| format!("T{c}")).collect();
            let panel = PricePanel::new(super::super::test_dates(rows), assets, values).unwrap();
            let mut buf = Vec::new();
            write_prices(&panel, &mut buf, b',').unwrap();
            let back = read_prices(buf.as_slice(), &LoadOptions::default()).unwrap();
            prop_assert_eq!(back, panel);
        }
    }
}
