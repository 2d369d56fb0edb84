//! Neighbor-retrieval quality evaluation.
//!
//! Given a "truth" space and a "retrieval" space over the same samples, the
//! relevant items for sample `i` are its `k_truth` nearest neighbors in the
//! truth space; retrieving `k` nearest neighbors in the retrieval space
//! yields per-point precision and recall, averaged over points and swept
//! over `k`. Also batch scoring of repeated synthetic runs against the
//! CCA baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::ops::RangeInclusive;

use crate::baseline_cca::{cca_fit, default_ridge};
use crate::data_model::{FeatureMatrix, FitConfig};
use crate::error::{NrdepError, Result};
use crate::optimizer::fit;
use crate::synthgen::{correspondence_score, generate, SyntheticSpec};

/// One sweep point of a precision-recall curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalPoint {
    pub k_retrieved: usize,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

/// Mean precision / mean recall over a range of retrieved-neighbor counts.
#[derive(Debug, Clone)]
pub struct RetrievalReport {
    pub k_ground_truth: usize,
    pub points: Vec<RetrievalPoint>,
    pub truth_label: String,
    pub retrieval_label: String,
}

/// Per-point neighbor index lists in ascending (distance, index) order.
///
/// Ties break toward the lower index, which makes every downstream report
/// deterministic.
fn knn_order(coords: &FeatureMatrix, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = coords.nrows();
    if k == 0 {
        return Err(NrdepError::InvalidConfig("k must be >= 1".into()));
    }
    if k >= n {
        return Err(NrdepError::KTooLarge {
            k,
            available: n.saturating_sub(1),
        });
    }
    let d = coords.ncols();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let mut acc = 0.0;
                    for c in 0..d {
                        let diff = coords[[i, c]] - coords[[j, c]];
                        acc += diff * diff;
                    }
                    (acc, j)
                })
                .collect();
            cand.select_nth_unstable_by(k - 1, |a, b| {
                a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
            });
            cand.truncate(k);
            cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect())
}

/// The `k` nearest neighbors of every point as sorted index sets.
pub fn knn_sets(coords: &FeatureMatrix, k: usize) -> Result<Vec<Vec<usize>>> {
    let mut order = knn_order(coords, k)?;
    for set in order.iter_mut() {
        set.sort_unstable();
    }
    Ok(order)
}

/// Sweeps mean precision and mean recall of retrieving neighbors from
/// `retrieval_coords` against `k_truth`-neighbor ground truth taken from
/// `truth_coords`.
pub fn mean_precision_recall(
    truth_coords: &FeatureMatrix,
    retrieval_coords: &FeatureMatrix,
    k_truth: usize,
    k_range: RangeInclusive<usize>,
    truth_label: &str,
    retrieval_label: &str,
) -> Result<RetrievalReport> {
    let n = truth_coords.nrows();
    if retrieval_coords.nrows() != n {
        return Err(NrdepError::dim(format!(
            "truth has {} rows, retrieval has {}",
            n,
            retrieval_coords.nrows()
        )));
    }
    let k_max = *k_range.end();
    let k_min = *k_range.start();
    if k_min == 0 || k_min > k_max {
        return Err(NrdepError::InvalidConfig(format!(
            "bad retrieved-neighbor range {k_min}..={k_max}"
        )));
    }
    let truth_sets = knn_sets(truth_coords, k_truth)?;
    let retrieval_order = knn_order(retrieval_coords, k_max)?;

    // per point: mark the relevant set, then walk the retrieval prefix once
    let per_point: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut relevant = vec![false; n];
            for &j in &truth_sets[i] {
                relevant[j] = true;
            }
            let mut hits = 0usize;
            let mut counts = Vec::with_capacity(k_max);
            for &j in &retrieval_order[i] {
                if relevant[j] {
                    hits += 1;
                }
                counts.push(hits);
            }
            counts
        })
        .collect();

    let points = (k_min..=k_max)
        .map(|k| {
            let mut precision = 0.0;
            let mut recall = 0.0;
            for counts in &per_point {
                let hits = counts[k - 1] as f64;
                precision += hits / k as f64;
                recall += hits / k_truth as f64;
            }
            RetrievalPoint {
                k_retrieved: k,
                mean_precision: precision / n as f64,
                mean_recall: recall / n as f64,
            }
        })
        .collect();

    Ok(RetrievalReport {
        k_ground_truth: k_truth,
        points,
        truth_label: truth_label.to_string(),
        retrieval_label: retrieval_label.to_string(),
    })
}

/// Mean and standard deviation of correspondence scores over repeated
/// synthetic datasets, for the fitted method and the CCA baseline.
#[derive(Debug, Clone)]
pub struct Table1Summary {
    pub method_scores: Vec<f64>,
    pub cca_scores: Vec<f64>,
    pub method_mean: f64,
    pub method_std: f64,
    pub cca_mean: f64,
    pub cca_std: f64,
}

fn mean_std(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    // population std so a single dataset reports 0
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the repeated-generation benchmark: `n_datasets` seeded datasets,
/// each fitted with 1-D subspaces by the method and by CCA, scored against
/// the known ground-truth axes.
pub fn table1_protocol(
    n_datasets: usize,
    fit_config: &FitConfig,
    synth_template: &SyntheticSpec,
) -> Result<Table1Summary> {
    if n_datasets < 1 {
        return Err(NrdepError::InvalidConfig("n_datasets must be >= 1".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(fit_config.rng_seed);
    let seeds: Vec<(u64, u64)> = (0..n_datasets)
        .map(|_| (master.random(), master.random()))
        .collect();

    let pairs: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|&(gen_seed, fit_seed)| -> Result<(f64, f64)> {
            let spec = SyntheticSpec {
                rng_seed: gen_seed,
                ..synth_template.clone()
            };
            let synth = generate(&spec)?;
            let cfg = FitConfig {
                subspace_dims: vec![1, 1],
                rng_seed: fit_seed,
                ..fit_config.clone()
            };
            let fitted = fit(&synth.dataset, &cfg)?;
            let method_score =
                correspondence_score(&fitted.maps[0], &fitted.maps[1], &synth.ground_truth)?;

            let v1 = synth.dataset.view(0);
            let v2 = synth.dataset.view(1);
            let ridge = default_ridge(v1).max(default_ridge(v2));
            let cca = cca_fit(v1, v2, 1, ridge)?;
            let cca_score = correspondence_score(&cca.w1, &cca.w2, &synth.ground_truth)?;
            Ok((method_score, cca_score))
        })
        .collect::<Result<_>>()?;

    let method_scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let cca_scores: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (method_mean, method_std) = mean_std(&method_scores);
    let (cca_mean, cca_std) = mean_std(&cca_scores);
    Ok(Table1Summary {
        method_scores,
        cca_scores,
        method_mean,
        method_std,
        cca_mean,
        cca_std,
    })
}
