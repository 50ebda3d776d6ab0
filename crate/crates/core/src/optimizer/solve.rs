use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tracing::warn;

use super::objective::SharpeObjective;
use super::simplex;
use super::{FallbackPolicy, OptimizerConfig, OptimizerError, Result, WeightVector};
use crate::market_data::ReturnPanel;
use crate::metrics::MetricsConfig;

/// Sufficient-increase constant of the backtracking line search.
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;
const MAX_STEP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct StaticSolution {
    pub weights: WeightVector,
    /// Achieved Sharpe ratio; `None` when every start was degenerate.
    pub objective: Option<f64>,
    /// True when the weights come from the fallback policy.
    pub fallback: bool,
}

/// Maximises the annualised Sharpe ratio over the simplex.
///
/// Start points are equal weights, every vertex, and `restarts - 1` seeded
/// uniform simplex draws. Each start is improved by projected gradient ascent
/// with backtracking; the best local optimum wins, ties going to the
/// lexicographically smallest weights so the result does not depend on the
/// order in which starts are processed.
pub fn optimize_static(
    returns: &ReturnPanel,
    mcfg: &MetricsConfig,
    ocfg: &OptimizerConfig,
) -> Result<StaticSolution> {
    optimize_with_fallback(returns, mcfg, ocfg, None)
}

pub(crate) fn optimize_with_fallback(
    returns: &ReturnPanel,
    mcfg: &MetricsConfig,
    ocfg: &OptimizerConfig,
    previous: Option<&WeightVector>,
) -> Result<StaticSolution> {
    ocfg.validate()?;
    mcfg.validate()?;
    let n = returns.n_assets();
    if n == 0 {
        return Err(OptimizerError::NoAssets);
    }
    if returns.n_rows() < 2 {
        return Err(OptimizerError::TooFewRows {
            needed: 2,
            found: returns.n_rows(),
        });
    }
    let objective = SharpeObjective::new(returns, mcfg)?;
    let assets = returns.assets().to_vec();

    let best = start_points(n, ocfg)
        .iter()
        .filter_map(|s| ascend(&objective, s, ocfg))
        .max_by(better);

    match best {
        Some((_, x)) => {
            let weights = WeightVector::from_projected(assets, &x)?;
            let objective = objective.value(weights.weights());
            Ok(StaticSolution {
                weights,
                objective,
                fallback: false,
            })
        }
        None => {
            warn!(
                policy = ?ocfg.fallback_policy,
                "Sharpe objective undefined at every start point; using fallback weights"
            );
            let weights = match (ocfg.fallback_policy, previous) {
                (FallbackPolicy::CarryForward, Some(prev)) => prev.clone(),
                _ => WeightVector::equal(assets)?,
            };
            Ok(StaticSolution {
                weights,
                objective: None,
                fallback: true,
            })
        }
    }
}

/// Orders candidates so that `max_by` picks the highest objective and, among
/// equal objectives, the lexicographically smallest weights.
fn better(a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| {
        for (x, y) in a.1.iter().zip(&b.1) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                o => return o.reverse(),
            }
        }
        Ordering::Equal
    })
}

fn start_points(n: usize, ocfg: &OptimizerConfig) -> Vec<Vec<f64>> {
    let mut starts = vec![vec![1.0 / n as f64; n]];
    if n > 1 {
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            starts.push(e);
        }
    }
    for k in 1..ocfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(ocfg.seed);
        rng.set_stream(k as u64);
        starts.push(simplex::sample(&mut rng, n));
    }
    starts
}

/// Projected gradient ascent from `start`; `None` if the start is degenerate.
fn ascend(
    objective: &SharpeObjective,
    start: &[f64],
    ocfg: &OptimizerConfig,
) -> Option<(f64, Vec<f64>)> {
    let mut x = simplex::project(start);
    let (mut f, mut g) = objective.value_and_gradient(&x)?;
    let mut step = 1.0;
    for _ in 0..ocfg.max_iterations {
        let mut accepted = None;
        while step > MIN_STEP {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + step * gi).collect();
            let y = simplex::project(&trial);
            if let Some(fy) = objective.value(&y) {
                let predicted: f64 = g
                    .iter()
                    .zip(y.iter().zip(&x))
                    .map(|(gi, (yi, xi))| gi * (yi - xi))
                    .sum();
                if fy >= f + ARMIJO * predicted {
                    accepted = Some((y, fy));
                    break;
                }
            }
            step *= ocfg.step_shrink;
        }
        let Some((y, fy)) = accepted else { break };
        let gain = fy - f;
        let Some((fy, gy)) = objective.value_and_gradient(&y) else {
            break;
        };
        x = y;
        f = fy;
        g = gy;
        if gain < ocfg.convergence_tol {
            break;
        }
        step = (step / ocfg.step_shrink).min(MAX_STEP);
    }
    Some((f, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::test_dates;
    use crate::optimizer::{grid_oracle, SUM_TOLERANCE};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn synthetic(seed: u64, rows: usize, params: &[(f64, f64)]) -> ReturnPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dists: Vec<Normal<f64>> = params
            .iter()
            .map(|(m, s)| Normal::new(*m, *s).unwrap())
            .collect();
        let values = (0..rows)
            .flat_map(|_| dists.iter().map(|d| d.sample(&mut rng)).collect::<Vec<_>>())
            .collect();
        ReturnPanel::new(
            test_dates(rows),
            (0..params.len()).map(|i| format!("A{i}")).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn single_asset_gets_everything() {
        let p = synthetic(1, 20, &[(0.001, 0.02)]);
        let s =
            optimize_static(&p, &MetricsConfig::default(), &OptimizerConfig::default()).unwrap();
        assert_eq!(s.weights.weights(), &[1.0]);
        assert!(!s.fallback);
    }

    #[test]
    fn better_asset_gets_more_weight() {
        // Uncorrelated, equal volatility, A has the higher mean.
        let p = synthetic(11, 500, &[(0.002, 0.01), (0.0, 0.01)]);
        let mcfg = MetricsConfig::default();
        let s = optimize_static(&p, &mcfg, &OptimizerConfig::default()).unwrap();
        let w = s.weights.weights();
        assert!(w[0] > w[1]);
        let g = grid_oracle(&p, 0.01, &mcfg).unwrap();
        for (a, b) in w.iter().zip(g.weights.weights()) {
            assert!((a - b).abs() <= 0.01 + 1e-9, "{w:?} vs {:?}", g.weights);
        }
    }

    #[test]
    fn matches_fine_grid_on_three_assets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..5 {
            let params: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.gen_range(-0.001..0.003), rng.gen_range(0.01..0.05)))
                .collect();
            let p = synthetic(100 + case, 80, &params);
            let mcfg = MetricsConfig::default();
            let s = optimize_static(&p, &mcfg, &OptimizerConfig::default()).unwrap();
            let ours = s.objective.unwrap();
            // The 0.01 lattice can trail the continuous optimum by more than
            // 1e-4 on sharply curved panels, so closeness is measured on a
            // finer lattice and dominance on the coarse one.
            let coarse = grid_oracle(&p, 0.01, &mcfg).unwrap();
            let fine = grid_oracle(&p, 0.001, &mcfg).unwrap();
            assert!(ours >= coarse.objective - 1e-9, "case {case}");
            assert!(
                (ours - fine.objective).abs() <= 1e-4,
                "case {case}: {ours} vs fine grid {}",
                fine.objective
            );
        }
    }

    #[test]
    fn dominates_equal_weights_and_is_deterministic() {
        let p = synthetic(
            3,
            60,
            &[
                (0.001, 0.03),
                (0.0005, 0.02),
                (-0.0002, 0.01),
                (0.002, 0.05),
            ],
        );
        let mcfg = MetricsConfig::default();
        let ocfg = OptimizerConfig {
            seed: 42,
            ..Default::default()
        };
        let a = optimize_static(&p, &mcfg, &ocfg).unwrap();
        let b = optimize_static(&p, &mcfg, &ocfg).unwrap();
        assert_eq!(a, b);
        let eq = SharpeObjective::new(&p, &mcfg)
            .unwrap()
            .value(&[0.25; 4])
            .unwrap();
        assert!(a.objective.unwrap() >= eq);
        assert!((a.weights.weights().iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
    }

    #[test]
    fn constant_panel_falls_back() {
        let p =
            ReturnPanel::new(test_dates(5), vec!["A".into(), "B".into()], vec![0.01; 10]).unwrap();
        let prev = WeightVector::new(vec!["A".into(), "B".into()], vec![0.9, 0.1]).unwrap();
        let mcfg = MetricsConfig::default();
        let s = optimize_static(&p, &mcfg, &OptimizerConfig::default()).unwrap();
        assert!(s.fallback && s.objective.is_none());
        assert_eq!(s.weights.weights(), &[0.5, 0.5]);

        let carry = OptimizerConfig {
            fallback_policy: FallbackPolicy::CarryForward,
            ..Default::default()
        };
        let s = optimize_with_fallback(&p, &mcfg, &carry, Some(&prev)).unwrap();
        assert_eq!(s.weights, prev);
    }

    #[test]
    fn too_few_rows() {
        let p = synthetic(1, 1, &[(0.0, 0.01), (0.0, 0.01)]);
        assert!(matches!(
            optimize_static(&p, &MetricsConfig::default(), &OptimizerConfig::default()),
            Err(OptimizerError::TooFewRows { .. })
        ));
    }

    #[test]
    fn tie_break_prefers_lexicographically_smaller() {
        let a = (1.0, vec![0.2, 0.8]);
        let b = (1.0, vec![0.8, 0.2]);
        assert_eq!(better(&a, &b), Ordering::Greater);
        assert_eq!(better(&(2.0, vec![0.8, 0.2]), &a), Ordering::Greater);
    }
}
