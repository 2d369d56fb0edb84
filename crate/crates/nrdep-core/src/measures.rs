//! Scalar comparison measures between two discrete neighborhood distributions.
//!
//! All functions operate on probability rows (nonnegative entries summing
//! to one). The KL divergence clamps its denominator at a caller-supplied
//! floor so that a single missed neighbor yields a large but finite value.

use crate::error::{NrdepError, Result};

fn check_lengths(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(NrdepError::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(())
}

/// Kullback-Leibler divergence `sum_j p(j) ln(p(j) / max(q(j), floor))`.
///
/// Terms with `p(j) = 0` contribute zero; exactly zero when `p = q`.
pub fn kl_divergence(p: &[f64], q: &[f64], floor: f64) -> Result<f64> {
    check_lengths(p, q)?;
    if !(floor > 0.0) {
        return Err(NrdepError::InvalidConfig(format!(
            "KL floor must be > 0, got {floor}"
        )));
    }
    let mut acc = 0.0;
    for (&pj, &qj) in p.iter().zip(q.iter()) {
        if pj > 0.0 {
            acc += pj * (pj / qj.max(floor)).ln();
        }
    }
    Ok(acc)
}

/// `(KL(p,q) + KL(q,p)) / 2`; symmetric in its arguments.
pub fn symmetrized_kl(p: &[f64], q: &[f64], floor: f64) -> Result<f64> {
    Ok(0.5 * (kl_divergence(p, q, floor)? + kl_divergence(q, p, floor)?))
}

/// Angle cosine between the distributions viewed as vectors; in `[0, 1]`.
///
/// Reaches 1 iff the rows are equal up to positive scale, 0 iff their
/// supports are disjoint.
pub fn angle_cosine(p: &[f64], q: &[f64]) -> Result<f64> {
    check_lengths(p, q)?;
    let mut dot = 0.0;
    let mut pp = 0.0;
    let mut qq = 0.0;
    for (&pj, &qj) in p.iter().zip(q.iter()) {
        dot += pj * qj;
        pp += pj * pj;
        qq += qj * qj;
    }
    if pp == 0.0 || qq == 0.0 {
        return Err(NrdepError::ZeroVector {
            context: "angle cosine of an all-zero row".into(),
        });
    }
    Ok(dot / (pp * qq).sqrt())
}

/// Plain inner product `sum_j p(j) q(j)`; in `[0, 1]` for probability rows.
///
/// Unlike the cosine it is not normalized, so it rewards sparse (spiked)
/// neighborhoods: the value 1 requires both rows to be the same single spike.
pub fn sim_inner(p: &[f64], q: &[f64]) -> Result<f64> {
    check_lengths(p, q)?;
    Ok(p.iter().zip(q.iter()).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const FLOOR: f64 = 1e-12;

    #[test]
    fn kl_identical_is_zero() {
        let p = [0.5, 0.5];
        assert_eq!(kl_divergence(&p, &p, FLOOR).unwrap(), 0.0);
    }

    #[test]
    fn kl_spike_vs_uniform() {
        let p = [1.0, 0.0];
        let q = [0.5, 0.5];
        assert_abs_diff_eq!(
            kl_divergence(&p, &q, FLOOR).unwrap(),
            2.0f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn kl_disjoint_is_clamped_finite() {
        let p = [1.0, 0.0];
        let q = [0.0, 1.0];
        let v = kl_divergence(&p, &q, FLOOR).unwrap();
        assert_abs_diff_eq!(v, (1.0f64 / 1e-12).ln(), epsilon = 1e-9);
        assert!(v.is_finite());
        assert_abs_diff_eq!(v, 27.631, epsilon = 1e-3);
    }

    #[test]
    fn symkl_identical_is_zero() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(symmetrized_kl(&p, &p, FLOOR).unwrap(), 0.0);
    }

    #[test]
    fn symkl_direct_value() {
        let p = [0.75, 0.25];
        let q = [0.25, 0.75];
        // 0.5*(0.75 ln3 - 0.25 ln3 + 0.75 ln3 - 0.25 ln3) = 0.5 ln3
        assert_abs_diff_eq!(
            symmetrized_kl(&p, &q, FLOOR).unwrap(),
            0.5 * 3.0f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cosine_identical_is_one() {
        let p = [0.1, 0.2, 0.7];
        assert_abs_diff_eq!(angle_cosine(&p, &p).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn cosine_disjoint_is_zero() {
        let p = [0.5, 0.5, 0.0, 0.0];
        let q = [0.0, 0.0, 0.5, 0.5];
        assert_eq!(angle_cosine(&p, &q).unwrap(), 0.0);
    }

    #[test]
    fn cosine_direct_value() {
        let p = [0.5, 0.5, 0.0];
        let q = [0.0, 0.5, 0.5];
        assert_abs_diff_eq!(angle_cosine(&p, &q).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn cosine_zero_vector_rejected() {
        let p = [0.0, 0.0];
        let q = [0.5, 0.5];
        assert!(matches!(
            angle_cosine(&p, &q),
            Err(NrdepError::ZeroVector { .. })
        ));
    }

    #[test]
    fn sim_single_spike_is_one() {
        let p = [0.0, 1.0, 0.0];
        assert_eq!(sim_inner(&p, &p).unwrap(), 1.0);
    }

    #[test]
    fn sim_disjoint_is_zero() {
        let p = [0.5, 0.5, 0.0, 0.0];
        let q = [0.0, 0.0, 0.5, 0.5];
        assert_eq!(sim_inner(&p, &q).unwrap(), 0.0);
    }

    #[test]
    fn sim_block_uniform_overlap() {
        // K=2 high entries in p, L=2 in q, overlap M=1 -> M/(K*L) = 0.25
        let p = [0.5, 0.5, 0.0];
        let q = [0.0, 0.5, 0.5];
        assert_abs_diff_eq!(sim_inner(&p, &q).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn length_mismatch_rejected() {
        let p = [0.5, 0.5];
        let q = [1.0];
        assert!(matches!(
            sim_inner(&p, &q),
            Err(NrdepError::LengthMismatch { left: 2, right: 1 })
        ));
        assert!(kl_divergence(&p, &q, FLOOR).is_err());
    }

    fn prob_row(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(1e-6..1.0f64, len).prop_map(|mut v| {
            let s: f64 = v.iter().sum();
            for x in v.iter_mut() {
                *x /= s;
            }
            v
        })
    }

    proptest! {
        #[test]
        fn symkl_is_symmetric(p in prob_row(8), q in prob_row(8)) {
            let a = symmetrized_kl(&p, &q, FLOOR).unwrap();
            let b = symmetrized_kl(&q, &p, FLOOR).unwrap();
            prop_assert!((a - b).abs() < 1e-13);
        }

        #[test]
        fn kl_nonnegative_without_clamping(p in prob_row(8), q in prob_row(8)) {
            // entries are bounded away from the floor, so no clamping triggers
            let v = kl_divergence(&p, &q, FLOOR).unwrap();
            prop_assert!(v >= -1e-12);
        }

        #[test]
        fn sim_bounded_by_cosine(p in prob_row(8), q in prob_row(8)) {
            let sim = sim_inner(&p, &q).unwrap();
            let cos = angle_cosine(&p, &q).unwrap();
            prop_assert!(sim <= cos + 1e-12);
        }

        #[test]
        fn measures_permutation_equivariant(p in prob_row(6), q in prob_row(6), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut idx: Vec<usize> = (0..6).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let pp: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
            let qp: Vec<f64> = idx.iter().map(|&i| q[i]).collect();
            prop_assert!((sim_inner(&p, &q).unwrap() - sim_inner(&pp, &qp).unwrap()).abs() < 1e-14);
            prop_assert!((angle_cosine(&p, &q).unwrap() - angle_cosine(&pp, &qp).unwrap()).abs() < 1e-13);
            prop_assert!((symmetrized_kl(&p, &q, FLOOR).unwrap() - symmetrized_kl(&pp, &qp, FLOOR).unwrap()).abs() < 1e-12);
        }
    }
}
