//! Core data types shared by every module, plus dataset validation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{NrdepError, Result};

/// Dense sample-by-feature matrix, one row per sample.
pub type FeatureMatrix = Array2<f64>;

/// Absolute tolerance on neighbor-field row sums.
pub const ROW_SUM_TOL: f64 = 1e-10;

/// Aligned samples across two or more views.
///
/// Samples are paired strictly by row index; every view holds the same
/// `n_samples` rows.
#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    views: Vec<FeatureMatrix>,
    n_samples: usize,
    view_dims: Vec<usize>,
}

impl MultiViewDataset {
    pub fn views(&self) -> &[FeatureMatrix] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &FeatureMatrix {
        &self.views[v]
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn view_dims(&self) -> &[usize] {
        &self.view_dims
    }
}

/// Per-view projection matrix, shape `d_V x k_V` (input dim by subspace dim).
///
/// Projected coordinates are `x^T W`; the matrix defines both the subspace
/// and its metric.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub weights: Array2<f64>,
}

impl LinearMap {
    /// Builds a map after checking `1 <= k <= d` and that all entries are finite.
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        let (d, k) = weights.dim();
        if k == 0 || k > d {
            return Err(NrdepError::dim(format!(
                "linear map must have 1 <= k <= d, got d={d}, k={k}"
            )));
        }
        if let Some(bad) = weights.iter().position(|v| !v.is_finite()) {
            let row = bad / k;
            let col = bad % k;
            return Err(NrdepError::NonFiniteValue { view: 0, row, col });
        }
        Ok(LinearMap { weights })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Frobenius norm of the weight matrix.
    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Row-stochastic matrix of neighborhood probabilities `p(j|i)`.
///
/// Row `i` is the distribution over candidate neighbors of sample `i`;
/// the diagonal is exactly zero.
#[derive(Debug, Clone)]
pub struct NeighborField {
    pub probs: Array2<f64>,
}

impl NeighborField {
    pub fn n_samples(&self) -> usize {
        self.probs.nrows()
    }

    /// Row `i` as a slice (includes the zero self-entry).
    pub fn row(&self, i: usize) -> &[f64] {
        self.probs
            .row(i)
            .to_slice()
            .expect("neighbor field rows are contiguous")
    }

    /// Checks row sums, entry range, and the zero diagonal.
    ///
    /// Shared validator: any `NeighborField` constructed in the system must
    /// pass this check.
    pub fn validate(&self) -> Result<()> {
        let n = self.probs.nrows();
        if self.probs.ncols() != n {
            return Err(NrdepError::dim(format!(
                "neighbor field must be square, got {}x{}",
                n,
                self.probs.ncols()
            )));
        }
        for i in 0..n {
            if self.probs[[i, i]] != 0.0 {
                return Err(NrdepError::InvalidConfig(format!(
                    "neighbor field diagonal entry [{i},{i}] is {} (must be exactly 0)",
                    self.probs[[i, i]]
                )));
            }
            let mut sum = 0.0;
            for j in 0..n {
                let p = self.probs[[i, j]];
                if !(0.0..=1.0).contains(&p) {
                    return Err(NrdepError::InvalidConfig(format!(
                        "neighbor field entry [{i},{j}] = {p} outside [0,1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(NrdepError::InvalidConfig(format!(
                    "neighbor field row {i} sums to {sum}, expected 1 within {ROW_SUM_TOL}"
                )));
            }
        }
        Ok(())
    }
}

/// All optimizer, bandwidth, annealing, and reproducibility settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Requested subspace dimension `k_V` per view.
    pub subspace_dims: Vec<usize>,
    /// Bandwidth as a fraction of the maximum input-space pairwise distance.
    pub sigma_fraction: f64,
    /// Penalty shrink factor applied at the start of each round.
    pub gamma_multiplier: f64,
    /// Number of annealed rounds before the penalty-free polish pass.
    pub n_rounds: usize,
    /// Iteration cap per round.
    pub lbfgs_max_iters: usize,
    /// History length of the two-loop recursion.
    pub lbfgs_memory: usize,
    /// Convergence threshold on the gradient infinity-norm.
    pub grad_tolerance: f64,
    /// Independent random restarts; best final objective wins.
    pub n_restarts: usize,
    pub rng_seed: u64,
    /// Floor applied to denominators inside KL terms.
    pub prob_floor: f64,
    /// Orthonormalize the random initial map columns before rescaling.
    pub orthonormalize_init: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            subspace_dims: Vec::new(),
            sigma_fraction: 0.05,
            gamma_multiplier: 0.9,
            n_rounds: 30,
            lbfgs_max_iters: 100,
            lbfgs_memory: 10,
            grad_tolerance: 1e-6,
            n_restarts: 3,
            rng_seed: 0,
            prob_floor: 1e-12,
            orthonormalize_init: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_fraction > 0.0) {
            return Err(NrdepError::InvalidConfig(format!(
                "sigma_fraction must be > 0, got {}",
                self.sigma_fraction
            )));
        }
        if !(self.gamma_multiplier > 0.0 && self.gamma_multiplier < 1.0) {
            return Err(NrdepError::InvalidConfig(format!(
                "gamma_multiplier must be in (0,1), got {}",
                self.gamma_multiplier
            )));
        }
        if self.n_rounds < 1 {
            return Err(NrdepError::InvalidConfig("n_rounds must be >= 1".into()));
        }
        if !(self.prob_floor > 0.0) {
            return Err(NrdepError::InvalidConfig(format!(
                "prob_floor must be > 0, got {}",
                self.prob_floor
            )));
        }
        if self.lbfgs_memory < 1 {
            return Err(NrdepError::InvalidConfig("lbfgs_memory must be >= 1".into()));
        }
        if self.n_restarts < 1 {
            return Err(NrdepError::InvalidConfig("n_restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Validates paired views and assembles a dataset.
///
/// Pure function: never mutates its input, same input yields the same output.
pub fn validate_dataset(views: Vec<FeatureMatrix>) -> Result<MultiViewDataset> {
    if views.len() < 2 {
        return Err(NrdepError::InvalidConfig(format!(
            "need at least 2 views, got {}",
            views.len()
        )));
    }
    let n_samples = views[0].nrows();
    for (v, view) in views.iter().enumerate() {
        if view.nrows() != n_samples {
            return Err(NrdepError::RowCountMismatch {
                view: v,
                got: view.nrows(),
                expected: n_samples,
            });
        }
        if view.ncols() == 0 {
            return Err(NrdepError::dim(format!("view {v} has zero columns")));
        }
        for ((row, col), value) in view.indexed_iter() {
            if !value.is_finite() {
                return Err(NrdepError::NonFiniteValue { view: v, row, col });
            }
        }
    }
    if n_samples < 2 {
        return Err(NrdepError::TooFewSamples { got: n_samples });
    }
    let view_dims = views.iter().map(|v| v.ncols()).collect();
    Ok(MultiViewDataset {
        views,
        n_samples,
        view_dims,
    })
}
