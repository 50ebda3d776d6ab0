use super::objective::sharpe_objective;
use super::{OptimizerError, Result, WeightVector};
use crate::market_data::ReturnPanel;
use crate::metrics::MetricsConfig;

/// Largest universe the exhaustive search accepts.
pub const MAX_GRID_ASSETS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub weights: WeightVector,
    pub objective: f64,
    /// Number of lattice points visited.
    pub evaluated: usize,
}

/// Number of points of the simplex lattice with `steps` increments over `n`
/// assets: `C(steps + n - 1, n - 1)`.
pub fn lattice_size(n: usize, steps: usize) -> usize {
    (1..n).fold(1usize, |acc, k| acc * (steps + k) / k)
}

/// All compositions of `steps` into `n` non-negative parts, in ascending
/// lexicographic order.
pub(crate) fn lattice_points(n: usize, steps: usize) -> Vec<Vec<usize>> {
    fn fill(prefix: &mut Vec<usize>, n: usize, left: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == n {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            fill(prefix, n, left - k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::with_capacity(lattice_size(n, steps));
    fill(&mut Vec::with_capacity(n), n, steps, &mut out);
    out
}

/// Exhaustive Sharpe maximisation over the lattice `{k / steps}` of the
/// simplex, with `steps = 1 / resolution`.
///
/// Evaluates the objective on the portfolio series directly, independently
/// of the moment-based objective the continuous solver uses. Ties keep the
/// lexicographically smallest weight vector.
pub fn grid_oracle(
    returns: &ReturnPanel,
    resolution: f64,
    mcfg: &MetricsConfig,
) -> Result<GridResult> {
    let n = returns.n_assets();
    if n == 0 {
        return Err(OptimizerError::NoAssets);
    }
    if n > MAX_GRID_ASSETS {
        return Err(OptimizerError::TooManyAssets {
            max: MAX_GRID_ASSETS,
            found: n,
        });
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(OptimizerError::BadResolution(resolution));
    }
    let steps = (1.0 / resolution).round() as usize;
    if (steps as f64 * resolution - 1.0).abs() > 1e-9 {
        return Err(OptimizerError::BadResolution(resolution));
    }

    let points = lattice_points(n, steps);
    let evaluated = points.len();
    let mut best: Option<(f64, WeightVector)> = None;
    for counts in points {
        let w = WeightVector::new(
            returns.assets().to_vec(),
            counts.iter().map(|&k| k as f64 / steps as f64).collect(),
        )?;
        let Ok(value) = sharpe_objective(&w, returns, mcfg) else {
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, w));
        }
    }
    let (objective, weights) = best.ok_or(OptimizerError::AllUndefined)?;
    Ok(GridResult {
        weights,
        objective,
        evaluated,
    })
}
