use crate::market_data::ReturnPanel;
use crate::metrics::{sharpe_ratio, MetricsConfig, PortfolioReturns};

use super::{OptimizerError, Result, WeightVector};

/// Portfolio variance below this fraction of the largest single-asset
/// variance is treated as zero.
const DEGENERATE_VARIANCE: f64 = 1e-14;

/// Sample mean vector and covariance matrix (divisor `n - 1`) of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    /// Row-major `n x n`.
    pub cov: Vec<f64>,
}

impl Moments {
    pub fn from_panel(returns: &ReturnPanel) -> Result<Self> {
        let rows = returns.n_rows();
        if rows < 2 {
            return Err(OptimizerError::TooFewRows {
                needed: 2,
                found: rows,
            });
        }
        let n = returns.n_assets();
        let mean: Vec<f64> = (0..n)
            .map(|c| {
                let first = returns.value(0, c);
                // Constant columns get their exact value so their deviations
                // vanish instead of leaving rounding noise in the covariance.
                if returns.column(c).all(|x| x == first) {
                    first
                } else {
                    returns.column(c).sum::<f64>() / rows as f64
                }
            })
            .collect();
        let mut cov = vec![0.0; n * n];
        for row in returns.rows() {
            for i in 0..n {
                let di = row[i] - mean[i];
                for j in i..n {
                    cov[i * n + j] += di * (row[j] - mean[j]);
                }
            }
        }
        let denom = (rows - 1) as f64;
        for i in 0..n {
            for j in i..n {
                cov[i * n + j] /= denom;
                cov[j * n + i] = cov[i * n + j];
            }
        }
        Ok(Self { mean, cov })
    }

    pub fn n_assets(&self) -> usize {
        self.mean.len()
    }
}

/// Annualised Sharpe ratio of `w . r_t` computed from panel moments, with its
/// analytic gradient.
///
/// For `m = w . mean` and `v = w' C w`, the objective is
/// `(P m - rf) / (sqrt(P) sqrt(v))` with `P` periods per year.
#[derive(Debug, Clone)]
pub struct SharpeObjective {
    moments: Moments,
    periods: f64,
    risk_free: f64,
    variance_floor: f64,
}

impl SharpeObjective {
    pub fn new(returns: &ReturnPanel, cfg: &MetricsConfig) -> Result<Self> {
        if returns.n_assets() == 0 {
            return Err(OptimizerError::NoAssets);
        }
        let moments = Moments::from_panel(returns)?;
        let n = moments.n_assets();
        let max_var = (0..n).map(|i| moments.cov[i * n + i]).fold(0.0, f64::max);
        Ok(Self {
            moments,
            periods: cfg.periods(),
            risk_free: cfg.risk_free_rate,
            variance_floor: DEGENERATE_VARIANCE * max_var,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.moments.n_assets()
    }

    fn mean_and_cov_product(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let n = self.n_assets();
        let m = w.iter().zip(&self.moments.mean).map(|(a, b)| a * b).sum();
        let cw = (0..n)
            .map(|i| {
                self.moments.cov[i * n..(i + 1) * n]
                    .iter()
                    .zip(w)
                    .map(|(c, x)| c * x)
                    .sum()
            })
            .collect();
        (m, cw)
    }

    fn variance(&self, w: &[f64], cw: &[f64]) -> Option<f64> {
        let v: f64 = w.iter().zip(cw).map(|(a, b)| a * b).sum();
        (v > self.variance_floor && v > 0.0).then_some(v)
    }

    /// `None` when the portfolio variance is (numerically) zero.
    pub fn value(&self, w: &[f64]) -> Option<f64> {
        let (m, cw) = self.mean_and_cov_product(w);
        let v = self.variance(w, &cw)?;
        Some((self.periods * m - self.risk_free) / (self.periods * v).sqrt())
    }

    pub fn value_and_gradient(&self, w: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (m, cw) = self.mean_and_cov_product(w);
        let v = self.variance(w, &cw)?;
        let num = self.periods * m - self.risk_free;
        let den = (self.periods * v).sqrt();
        let value = num / den;
        // d num = P mean, d den = P C w / den
        let grad = self
            .moments
            .mean
            .iter()
            .zip(&cw)
            .map(|(mu, c)| self.periods * (mu / den - num * c / (den * den * den)))
            .collect();
        Some((value, grad))
    }
}

/// Annualised Sharpe ratio of the daily portfolio series `sum_i w_i r_{t,i}`,
/// computed on the series itself with the metrics conventions.
pub fn sharpe_objective(
    w: &WeightVector,
    returns: &ReturnPanel,
    cfg: &MetricsConfig,
) -> Result<f64> {
    w.check_assets(returns.assets())?;
    if returns.n_rows() < 2 {
        return Err(OptimizerError::TooFewRows {
            needed: 2,
            found: returns.n_rows(),
        });
    }
    let p: Vec<f64> = returns
        .rows()
        .map(|r| r.iter().zip(w.weights()).map(|(x, y)| x * y).sum())
        .collect();
    let series = PortfolioReturns::new(returns.dates().to_vec(), p)?;
    Ok(sharpe_ratio(&series, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::test_dates;
    use crate::metrics::MetricError;
    use proptest::prelude::*;

    fn panel(rows: &[&[f64]]) -> ReturnPanel {
        let n = rows[0].len();
        ReturnPanel::from_rows(
            test_dates(rows.len()),
            (0..n).map(|i| format!("A{i}")).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    fn fixture() -> ReturnPanel {
        panel(&[
            &[0.01, 0.002, -0.004],
            &[-0.005, 0.006, 0.001],
            &[0.02, -0.003, 0.002],
            &[0.004, 0.001, -0.006],
            &[-0.012, 0.009, 0.003],
            &[0.007, -0.002, 0.005],
        ])
    }

    fn wv(ws: &[f64]) -> WeightVector {
        WeightVector::new(
            (0..ws.len()).map(|i| format!("A{i}")).collect(),
            ws.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn fixture_value_matches_hand_computation() {
        let cfg = MetricsConfig::default();
        let w = [0.5, 0.3, 0.2];
        let series = sharpe_objective(&wv(&w), &fixture(), &cfg).unwrap();
        assert!((series - 9.821647571926585).abs() < 1e-10);
        let moments = SharpeObjective::new(&fixture(), &cfg)
            .unwrap()
            .value(&w)
            .unwrap();
        assert!((moments - 9.821647571926585).abs() < 1e-10);
    }

    #[test]
    fn single_asset_is_its_own_sharpe() {
        let p = panel(&[&[0.01], &[-0.02], &[0.03]]);
        let cfg = MetricsConfig::default();
        let direct = sharpe_ratio(
            &PortfolioReturns::new(p.dates().to_vec(), vec![0.01, -0.02, 0.03]).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(sharpe_objective(&wv(&[1.0]), &p, &cfg).unwrap(), direct);
    }

    #[test]
    fn identical_columns_are_degenerate_in_weights() {
        let p = panel(&[&[0.01, 0.01], &[-0.02, -0.02], &[0.005, 0.005]]);
        let obj = SharpeObjective::new(&p, &MetricsConfig::default()).unwrap();
        let a = obj.value(&[1.0, 0.0]).unwrap();
        for w in [[0.3, 0.7], [0.5, 0.5], [0.0, 1.0]] {
            assert!((obj.value(&w).unwrap() - a).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_is_undefined() {
        let p = panel(&[&[0.01, 0.02], &[0.01, -0.02]]);
        let obj = SharpeObjective::new(&p, &MetricsConfig::default()).unwrap();
        assert_eq!(obj.value(&[1.0, 0.0]), None);
        assert!(obj.value(&[0.0, 1.0]).is_some());
        assert!(matches!(
            sharpe_objective(&wv(&[1.0, 0.0]), &p, &MetricsConfig::default()),
            Err(OptimizerError::Metric(MetricError::UndefinedSharpe))
        ));
    }

    proptest! {
        #[test]
        fn moment_and_series_routes_agree(
            raw in prop::collection::vec(-0.05f64..0.05, 30),
            w in prop::collection::vec(0.01f64..1.0, 3),
        ) {
            let rows: Vec<Vec<f64>> = raw.chunks(3).map(|c| c.to_vec()).collect();
            let p = ReturnPanel::from_rows(
                test_dates(10),
                vec!["A0".into(), "A1".into(), "A2".into()],
                rows,
            ).unwrap();
            let s: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / s).collect();
            let cfg = MetricsConfig { risk_free_rate: 0.03, ..Default::default() };
            let a = SharpeObjective::new(&p, &cfg).unwrap().value(&w).unwrap();
            let b = sharpe_objective(&WeightVector::from_projected(p.assets().to_vec(), &w).unwrap(), &p, &cfg).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }
}
