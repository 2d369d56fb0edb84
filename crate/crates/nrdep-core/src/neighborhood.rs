//! Per-view bandwidths and neighborhood probability fields.
//!
//! A neighborhood field assigns each sample `i` a probability distribution
//! over the other samples, with an exponential falloff in squared distance:
//!
//! ```text
//! p(j|i) = exp(-d2(i,j)/sigma^2) / sum_{k != i} exp(-d2(i,k)/sigma^2)
//! ```
//!
//! Rows are computed with max-subtraction stabilization so that large
//! distances cannot underflow an entire row to zero.

use ndarray::Array2;
use rayon::prelude::*;

use crate::data_model::{FeatureMatrix, LinearMap, NeighborField};
use crate::error::{NrdepError, Result};

/// Gaussian falloff scale for one view, shared by all points of that view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthSpec {
    pub sigma: f64,
}

impl BandwidthSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(NrdepError::InvalidConfig(format!(
                "bandwidth must be a positive finite number, got {sigma}"
            )));
        }
        Ok(BandwidthSpec { sigma })
    }
}

/// Squared Euclidean distance between rows `i` and `j`.
#[inline]
fn sq_dist_rows(coords: &FeatureMatrix, i: usize, j: usize) -> f64 {
    let a = coords.row(i);
    let b = coords.row(j);
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Bandwidth as `sigma_fraction` times the maximum pairwise distance of the
/// raw view features.
///
/// The bandwidth is computed once from input-space coordinates and held fixed
/// while maps are optimized.
pub fn compute_sigma(view: &FeatureMatrix, sigma_fraction: f64) -> Result<BandwidthSpec> {
    if !(sigma_fraction > 0.0) {
        return Err(NrdepError::InvalidConfig(format!(
            "sigma_fraction must be > 0, got {sigma_fraction}"
        )));
    }
    let n = view.nrows();
    if n < 2 {
        return Err(NrdepError::TooFewSamples { got: n });
    }
    let max_sq = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0f64;
            for j in (i + 1)..n {
                let d2 = sq_dist_rows(view, i, j);
                if d2 > best {
                    best = d2;
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    if max_sq == 0.0 {
        return Err(NrdepError::DegenerateView);
    }
    BandwidthSpec::new(sigma_fraction * max_sq.sqrt())
}

/// Row-stochastic neighborhood field of the given coordinates.
///
/// Rows are independent; each row's normalizing sum is accumulated in fixed
/// index order, so the output is bit-identical for identical inputs
/// regardless of thread count.
pub fn neighbor_field(coords: &FeatureMatrix, sigma: BandwidthSpec) -> Result<NeighborField> {
    let n = coords.nrows();
    if n < 2 {
        return Err(NrdepError::TooFewSamples { got: n });
    }
    let inv_s2 = 1.0 / (sigma.sigma * sigma.sigma);
    let mut probs = Array2::<f64>::zeros((n, n));
    probs
        .as_slice_mut()
        .expect("freshly allocated array is contiguous")
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            // exponents -d2/sigma^2, with the row max subtracted before exp
            let mut max_e = f64::NEG_INFINITY;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let e = -sq_dist_rows(coords, i, j) * inv_s2;
                row[j] = e;
                if e > max_e {
                    max_e = e;
                }
            }
            let mut sum = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let a = (row[j] - max_e).exp();
                row[j] = a;
                sum += a;
            }
            let inv_sum = 1.0 / sum;
            for j in 0..n {
                if j != i {
                    row[j] *= inv_sum;
                }
            }
        });
    Ok(NeighborField { probs })
}

/// Neighborhood field of `view` projected through `map`.
///
/// Equivalent to `neighbor_field` on `view * map.weights`: squared distances
/// become `(x_i - x_j)^T W W^T (x_i - x_j)`, evaluated with the fixed
/// input-space bandwidth.
pub fn projected_neighbor_field(
    view: &FeatureMatrix,
    map: &LinearMap,
    sigma: BandwidthSpec,
) -> Result<NeighborField> {
    let coords = project(view, map)?;
    neighbor_field(&coords, sigma)
}

/// Projects samples into the subspace: `view * weights`.
pub fn project(view: &FeatureMatrix, map: &LinearMap) -> Result<FeatureMatrix> {
    if map.weights.nrows() != view.ncols() {
        return Err(NrdepError::dim(format!(
            "map expects {} input features, view has {}",
            map.weights.nrows(),
            view.ncols()
        )));
    }
    Ok(view.dot(&map.weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> FeatureMatrix {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// Orthogonalizes the columns of a random square matrix (Gram-Schmidt).
    fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
        let mut q = random_matrix(rng, d, d);
        for c in 0..d {
            for prev in 0..c {
                let dot: f64 = (0..d).map(|r| q[[r, c]] * q[[r, prev]]).sum();
                for r in 0..d {
                    q[[r, c]] -= dot * q[[r, prev]];
                }
            }
            let norm: f64 = (0..d).map(|r| q[[r, c]] * q[[r, c]]).sum::<f64>().sqrt();
            for r in 0..d {
                q[[r, c]] /= norm;
            }
        }
        q
    }

    #[test]
    fn sigma_two_points() {
        let view = array![[0.0], [10.0]];
        let bw = compute_sigma(&view, 0.05).unwrap();
        assert_abs_diff_eq!(bw.sigma, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn sigma_degenerate_view() {
        let view = Array2::from_elem((5, 3), 2.5);
        assert!(matches!(
            compute_sigma(&view, 0.05),
            Err(NrdepError::DegenerateView)
        ));
    }

    #[test]
    fn sigma_matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let view = random_matrix(&mut rng, 50, 3);
        let bw = compute_sigma(&view, 0.05).unwrap();
        // independent exhaustive scan over all 1225 pairs
        let mut max_d = 0.0f64;
        for i in 0..50 {
            for j in 0..50 {
                let d: f64 = (0..3)
                    .map(|c| (view[[i, c]] - view[[j, c]]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                max_d = max_d.max(d);
            }
        }
        assert_abs_diff_eq!(bw.sigma, 0.05 * max_d, epsilon = 1e-14);
    }

    #[test]
    fn field_two_points() {
        let coords = array![[0.0], [3.0]];
        let f = neighbor_field(&coords, BandwidthSpec::new(1.0).unwrap()).unwrap();
        assert_eq!(f.probs, array![[0.0, 1.0], [1.0, 0.0]]);
        f.validate().unwrap();
    }

    #[test]
    fn field_equilateral_triangle() {
        let h = 3.0f64.sqrt() / 2.0;
        let coords = array![[0.0, 0.0], [1.0, 0.0], [0.5, h]];
        let f = neighbor_field(&coords, BandwidthSpec::new(0.7).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 0.5 };
                assert_abs_diff_eq!(f.probs[[i, j]], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn field_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coords = random_matrix(&mut rng, 6, 2);
        let sigma = compute_sigma(&coords, 0.5).unwrap();
        let f = neighbor_field(&coords, sigma).unwrap();
        // direct evaluation without stabilization, viable at moderate sigma
        let s2 = sigma.sigma * sigma.sigma;
        for i in 0..6 {
            let mut denom = 0.0;
            for k in 0..6 {
                if k != i {
                    denom += (-sq_dist_rows(&coords, i, k) / s2).exp();
                }
            }
            for j in 0..6 {
                if j == i {
                    continue;
                }
                let want = (-sq_dist_rows(&coords, i, j) / s2).exp() / denom;
                assert_abs_diff_eq!(f.probs[[i, j]], want, epsilon = 1e-12);
            }
        }
        f.validate().unwrap();
    }

    #[test]
    fn projected_identity_map_equals_raw() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let view = random_matrix(&mut rng, 7, 3);
        let sigma = compute_sigma(&view, 0.05).unwrap();
        let identity = LinearMap::new(Array2::eye(3)).unwrap();
        let raw = neighbor_field(&view, sigma).unwrap();
        let proj = projected_neighbor_field(&view, &identity, sigma).unwrap();
        for (a, b) in raw.probs.iter().zip(proj.probs.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn projected_invariant_under_subspace_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let view = random_matrix(&mut rng, 8, 5);
        let sigma = compute_sigma(&view, 0.05).unwrap();
        let w = random_matrix(&mut rng, 5, 2);
        let q = random_orthogonal(&mut rng, 2);
        let f1 = projected_neighbor_field(&view, &LinearMap::new(w.clone()).unwrap(), sigma).unwrap();
        let f2 = projected_neighbor_field(&view, &LinearMap::new(w.dot(&q)).unwrap(), sigma).unwrap();
        for (a, b) in f1.probs.iter().zip(f2.probs.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn projected_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let view = random_matrix(&mut rng, 8, 5);
        let sigma = compute_sigma(&view, 0.05).unwrap();
        let w = random_matrix(&mut rng, 5, 2);
        let f = projected_neighbor_field(&view, &LinearMap::new(w.clone()).unwrap(), sigma).unwrap();
        // brute-force (x_i - x_j)^T W W^T (x_i - x_j) and an unstabilized softmax
        let s2 = sigma.sigma * sigma.sigma;
        let d2 = |i: usize, j: usize| -> f64 {
            let mut acc = 0.0;
            for c in 0..2 {
                let mut proj = 0.0;
                for r in 0..5 {
                    proj += (view[[i, r]] - view[[j, r]]) * w[[r, c]];
                }
                acc += proj * proj;
            }
            acc
        };
        for i in 0..8 {
            let denom: f64 = (0..8).filter(|&k| k != i).map(|k| (-d2(i, k) / s2).exp()).sum();
            for j in 0..8 {
                if j == i {
                    continue;
                }
                assert_abs_diff_eq!(f.probs[[i, j]], (-d2(i, j) / s2).exp() / denom, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn translation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let coords = random_matrix(&mut rng, 10, 3);
        let sigma = compute_sigma(&coords, 0.05).unwrap();
        let mut shifted = coords.clone();
        for mut row in shifted.rows_mut() {
            row[0] += 4.5;
            row[1] -= 2.0;
            row[2] += 0.25;
        }
        let f1 = neighbor_field(&coords, sigma).unwrap();
        let f2 = neighbor_field(&shifted, sigma).unwrap();
        for (a, b) in f1.probs.iter().zip(f2.probs.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_mirroring_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let view = random_matrix(&mut rng, 10, 4);
        let sigma = compute_sigma(&view, 0.05).unwrap();
        let w = random_matrix(&mut rng, 4, 2);
        let r = random_orthogonal(&mut rng, 4);
        let rotated_view = view.dot(&r.t());
        let rotated_w = r.dot(&w);
        let f1 = projected_neighbor_field(&view, &LinearMap::new(w).unwrap(), sigma).unwrap();
        let f2 =
            projected_neighbor_field(&rotated_view, &LinearMap::new(rotated_w).unwrap(), sigma)
                .unwrap();
        for (a, b) in f1.probs.iter().zip(f2.probs.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn determinism_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let coords = random_matrix(&mut rng, 30, 4);
        let sigma = compute_sigma(&coords, 0.05).unwrap();
        let f1 = neighbor_field(&coords, sigma).unwrap();
        let f2 = neighbor_field(&coords, sigma).unwrap();
        assert_eq!(f1.probs, f2.probs);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let view = Array2::<f64>::zeros((4, 3));
        let map = LinearMap::new(Array2::zeros((5, 2))).unwrap();
        assert!(matches!(
            projected_neighbor_field(&view, &map, BandwidthSpec::new(1.0).unwrap()),
            Err(NrdepError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stabilization_handles_huge_distances() {
        // naive exponentials underflow at this scale; rows must still normalize
        let coords = array![[0.0], [1e6], [2.5e6]];
        let f = neighbor_field(&coords, BandwidthSpec::new(1.0).unwrap()).unwrap();
        f.validate().unwrap();
    }
}
