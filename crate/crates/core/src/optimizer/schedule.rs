use std::fmt::Write as _;

use chrono::NaiveDate;

use super::{OptimizerError, Result, WeightVector};
use crate::market_data::DATE_FORMAT;

const HEADER: &str = "start_date,end_date,ticker,weight";

/// Weights in force from `start` to `end`, both inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEntry {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub weights: WeightVector,
}

/// Chronological, non-overlapping sequence of weight vectors.
///
/// A static allocation is a one-entry schedule without window or holding
/// lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    entries: Vec<ScheduleEntry>,
    window_length: Option<usize>,
    holding_period: Option<usize>,
}

impl WeightSchedule {
    pub fn new(
        entries: Vec<ScheduleEntry>,
        window_length: Option<usize>,
        holding_period: Option<usize>,
    ) -> Result<Self> {
        let Some(first) = entries.first() else {
            return Err(OptimizerError::Parse("schedule has no entries".into()));
        };
        for e in &entries {
            if e.end < e.start {
                return Err(OptimizerError::Parse(format!(
                    "entry starting {} ends before it starts",
                    e.start
                )));
            }
            if e.weights.assets() != first.weights.assets() {
                return Err(OptimizerError::AssetMismatch {
                    weights: e.weights.assets().to_vec(),
                    panel: first.weights.assets().to_vec(),
                });
            }
        }
        if let Some(pair) = entries.windows(2).find(|p| p[1].start <= p[0].end) {
            return Err(OptimizerError::Parse(format!(
                "entry starting {} overlaps or precedes the previous entry",
                pair[1].start
            )));
        }
        Ok(Self {
            entries,
            window_length,
            holding_period,
        })
    }

    pub fn single(start: NaiveDate, end: NaiveDate, weights: WeightVector) -> Result<Self> {
        Self::new(
            vec![ScheduleEntry {
                start,
                end,
                weights,
            }],
            None,
            None,
        )
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    pub fn window_length(&self) -> Option<usize> {
        self.window_length
    }

    pub fn holding_period(&self) -> Option<usize> {
        self.holding_period
    }

    pub fn assets(&self) -> &[String] {
        self.entries[0].weights.assets()
    }

    /// Weights of the final entry.
    pub fn last_weights(&self) -> &WeightVector {
        &self.entries[self.entries.len() - 1].weights
    }

    /// The entry whose range contains `date`.
    pub fn entry_for(&self, date: NaiveDate) -> Option<&ScheduleEntry> {
        let idx = self.entries.partition_point(|e| e.end < date);
        self.entries.get(idx).filter(|e| e.start <= date)
    }

    /// Delimited text: optional `# window=` / `# holding=` lines, a header,
    /// then one `start_date,end_date,ticker,weight` row per asset per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(w) = self.window_length {
            writeln!(out, "# window={w}").unwrap();
        }
        if let Some(h) = self.holding_period {
            writeln!(out, "# holding={h}").unwrap();
        }
        writeln!(out, "{HEADER}").unwrap();
        for e in &self.entries {
            let (s, t) = (e.start.format(DATE_FORMAT), e.end.format(DATE_FORMAT));
            for (a, w) in e.weights.assets().iter().zip(e.weights.weights()) {
                writeln!(out, "{s},{t},{a},{w}").unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (window, holding, records) = parse_schedule_records(text)?;
        let mut entries = Vec::new();
        let mut i = 0;
        while i < records.len() {
            let (start, end) = (records[i].start, records[i].end);
            let group: Vec<&ScheduleRecord> = records[i..]
                .iter()
                .take_while(|r| r.start == start && r.end == end)
                .collect();
            i += group.len();
            let weights = WeightVector::new(
                group.iter().map(|r| r.ticker.clone()).collect(),
                group.iter().map(|r| r.weight).collect(),
            )?;
            entries.push(ScheduleEntry {
                start,
                end,
                weights,
            });
        }
        Self::new(entries, window, holding)
    }
}

/// One row of the schedule text format.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRecord {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub ticker: String,
    pub weight: f64,
}

/// Parses the schedule text format without checking the simplex constraints.
pub fn parse_schedule_records(
    text: &str,
) -> Result<(Option<usize>, Option<usize>, Vec<ScheduleRecord>)> {
    let bad = |m: String| OptimizerError::Parse(m);
    let mut window = None;
    let mut holding = None;
    let mut seen_header = false;
    let mut records = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(meta) = line.strip_prefix('#') {
            let (k, v) = meta
                .trim()
                .split_once('=')
                .ok_or_else(|| bad(format!("bad metadata line `{line}`")))?;
            let v: usize = v
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad metadata value `{line}`")))?;
            match k.trim() {
                "window" => window = Some(v),
                "holding" => holding = Some(v),
                other => return Err(bad(format!("unknown metadata `{other}`"))),
            }
            continue;
        }
        if !seen_header {
            if line != HEADER {
                return Err(bad(format!("expected header `{HEADER}`, found `{line}`")));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [start, end, ticker, weight] = fields[..] else {
            return Err(bad(format!("expected 4 fields in `{line}`")));
        };
        let date = |s: &str| {
            NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|_| bad(format!("bad date `{s}`")))
        };
        records.push(ScheduleRecord {
            start: date(start)?,
            end: date(end)?,
            ticker: ticker.to_string(),
            weight: weight
                .parse()
                .map_err(|_| bad(format!("bad weight `{weight}`")))?,
        });
    }
    if !seen_header {
        return Err(bad("missing header".into()));
    }
    Ok((window, holding, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, day).unwrap()
    }

    fn wv(ws: &[f64]) -> WeightVector {
        WeightVector::new(
            vec!["BTC".into(), "ETH".into()][..ws.len()].to_vec(),
            ws.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_overlap_and_reversed_ranges() {
        let e = |s, t| ScheduleEntry {
            start: d(s),
            end: d(t),
            weights: wv(&[0.5, 0.5]),
        };
        assert!(WeightSchedule::new(vec![e(1, 5), e(6, 9)], None, None).is_ok());
        assert!(WeightSchedule::new(vec![e(1, 5), e(5, 9)], None, None).is_err());
        assert!(WeightSchedule::new(vec![e(5, 1)], None, None).is_err());
        assert!(WeightSchedule::new(vec![], None, None).is_err());
    }

    #[test]
    fn entry_lookup() {
        let s = WeightSchedule::new(
            vec![
                ScheduleEntry {
                    start: d(1),
                    end: d(3),
                    weights: wv(&[1.0, 0.0]),
                },
                ScheduleEntry {
                    start: d(5),
                    end: d(9),
                    weights: wv(&[0.0, 1.0]),
                },
            ],
            Some(2),
            Some(5),
        )
        .unwrap();
        assert_eq!(s.entry_for(d(2)).unwrap().start, d(1));
        assert_eq!(s.entry_for(d(9)).unwrap().start, d(5));
        assert!(s.entry_for(d(4)).is_none());
        assert!(s.entry_for(d(10)).is_none());
    }

    #[test]
    fn text_format() {
        let s = WeightSchedule::single(d(1), d(31), wv(&[0.25, 0.75])).unwrap();
        assert_eq!(
            s.to_text(),
            "start_date,end_date,ticker,weight\n\
             2024-01-01,2024-01-31,BTC,0.25\n\
             2024-01-01,2024-01-31,ETH,0.75\n"
        );
        let bad = s.to_text().replace("0.75", "0.95");
        assert!(matches!(
            WeightSchedule::from_text(&bad),
            Err(OptimizerError::InvalidWeights(_))
        ));
        let (_, _, rows) = parse_schedule_records(&bad).unwrap();
        assert_eq!(rows[1].weight, 0.95);
        assert!(parse_schedule_records("2024-01-01,2024-01-31,BTC,1\n").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            raw in prop::collection::vec((0.0f64..1.0, 1u64..20), 1..8),
            window in prop::option::of(2usize..60),
        ) {
            let mut entries = Vec::new();
            let mut start = d(1);
            for (a, len) in raw {
                let end = start + chrono::Days::new(len);
                let weights = WeightVector::from_projected(
                    vec!["BTC".into(), "ETH".into()], &[a, 1.0 - a]).unwrap();
                entries.push(ScheduleEntry { start, end, weights });
                start = end + chrono::Days::new(1);
            }
            let s = WeightSchedule::new(entries, window, window.map(|w| w + 1)).unwrap();
            prop_assert_eq!(WeightSchedule::from_text(&s.to_text()).unwrap(), s);
        }
    }
}
