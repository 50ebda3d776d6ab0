use super::{MarketDataError, PricePanel, Result};

/// Descriptive statistics of one price column.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetSummary {
    pub asset: String,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (divisor `n - 1`); 0 for a single observation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelSummary {
    pub assets: Vec<AssetSummary>,
}

impl PanelSummary {
    pub fn get(&self, asset: &str) -> Option<&AssetSummary> {
        self.assets.iter().find(|s| s.asset == asset)
    }
}

pub fn summarize(panel: &PricePanel) -> Result<PanelSummary> {
    if panel.is_empty() {
        return Err(MarketDataError::Empty);
    }
    let assets = panel
        .assets()
        .iter()
        .enumerate()
        .map(|(col, asset)| {
            let mut xs: Vec<f64> = panel.column(col).collect();
            xs.sort_by(f64::total_cmp);
            let n = xs.len();
            let constant = xs[0] == xs[n - 1];
            // Summation rounding would otherwise leave a constant column with
            // a mean off by an ulp and a tiny positive std.
            let mean = if constant {
                xs[0]
            } else {
                xs.iter().sum::<f64>() / n as f64
            };
            let median = if n % 2 == 1 {
                xs[n / 2]
            } else {
                0.5 * (xs[n / 2 - 1] + xs[n / 2])
            };
            let std = if n < 2 || constant {
                0.0
            } else {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            AssetSummary {
                asset: asset.clone(),
                mean,
                median,
                std,
                min: xs[0],
                max: xs[n - 1],
            }
        })
        .collect();
    Ok(PanelSummary { assets })
}

#[cfg(test)]
mod tests {
    use super::super::test_dates;
    use super::*;
    use proptest::prelude::*;

    fn summary_of(xs: &[f64]) -> AssetSummary {
        let p = PricePanel::new(test_dates(xs.len()), vec!["X".into()], xs.to_vec()).unwrap();
        summarize(&p).unwrap().assets.remove(0)
    }

    #[test]
    fn constant_series() {
        let s = summary_of(&[5.0, 5.0, 5.0]);
        assert_eq!(
            (s.mean, s.median, s.std, s.min, s.max),
            (5.0, 5.0, 0.0, 5.0, 5.0)
        );
    }

    #[test]
    fn one_two_three() {
        let s = summary_of(&[3.0, 1.0, 2.0]);
        assert_eq!(
            (s.mean, s.median, s.std, s.min, s.max),
            (2.0, 2.0, 1.0, 1.0, 3.0)
        );
    }

    #[test]
    fn even_length_median() {
        assert_eq!(summary_of(&[1.0, 4.0, 2.0, 10.0]).median, 3.0);
    }

    #[test]
    fn empty_panel() {
        let p = PricePanel::new(vec![], vec!["X".into()], vec![]).unwrap();
        assert!(matches!(summarize(&p), Err(MarketDataError::Empty)));
    }

    proptest! {
        #[test]
        fn ordering_and_std(xs in prop::collection::vec(0.01f64..1e5, 1..50)) {
            let s = summary_of(&xs);
            prop_assert!(s.min <= s.median && s.median <= s.max);
            prop_assert!(s.std >= 0.0);
            let constant = xs.iter().all(|x| *x == xs[0]);
            prop_assert_eq!(s.std == 0.0, constant);
        }
    }
}
