//! Euclidean projection onto, and uniform sampling from, the probability simplex.

use rand::Rng;

/// Closest point of `{w : w >= 0, sum(w) = 1}` to `v` in the Euclidean norm.
///
/// Sort-based algorithm: find the largest `k` such that the `k` biggest
/// coordinates stay positive after subtracting a common threshold, then shift
/// and clip.
pub fn project(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Uniform draw from the simplex (flat Dirichlet) via normalised exponentials.
pub fn sample<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn points_on_simplex_are_fixed() {
        assert_eq!(project(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        assert_eq!(project(&[1.0]), vec![1.0]);
    }

    #[test]
    fn known_projections() {
        assert_eq!(project(&[2.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(project(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = project(&[1.0, 1.0, -3.0]);
        assert_eq!(p, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn samples_are_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..8 {
            let s = sample(&mut rng, n);
            assert!(s.iter().all(|x| *x >= 0.0));
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    // The projection is characterised by: on the simplex, and for any other
    // simplex point y, <v - p, y - p> <= 0. Checking against vertices suffices.
    proptest! {
        #[test]
        fn projection_optimality(v in prop::collection::vec(-5.0f64..5.0, 1..10)) {
            let p = project(&v);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for k in 0..v.len() {
                let inner: f64 = (0..v.len())
                    .map(|i| (v[i] - p[i]) * (if i == k { 1.0 } else { 0.0 } - p[i]))
                    .sum();
                prop_assert!(inner <= 1e-10);
            }
        }
    }
}
