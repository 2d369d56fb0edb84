//! Regularized linear Canonical Correlation Analysis baseline.
//!
//! Standard whitening construction: center both views, regularize the
//! per-view covariances with a ridge, whiten, and take the SVD of the
//! whitened cross-covariance. Singular values are the canonical
//! correlations; back-transformed singular vectors are the projection maps.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::data_model::{FeatureMatrix, LinearMap};
use crate::error::{NrdepError, Result};

/// Projection maps and canonical correlations (non-increasing order).
#[derive(Debug, Clone)]
pub struct CcaResult {
    pub w1: LinearMap,
    pub w2: LinearMap,
    pub correlations: Vec<f64>,
}

/// Ridge used when the caller does not supply one:
/// `1e-6 * trace(cov) / d`, scaled to the view's variance.
pub fn default_ridge(view: &FeatureMatrix) -> f64 {
    let n = view.nrows();
    let d = view.ncols();
    if n < 2 || d == 0 {
        return 0.0;
    }
    let centered = center(view);
    let mut trace = 0.0;
    for c in 0..d {
        let col = centered.column(c);
        trace += col.iter().map(|v| v * v).sum::<f64>() / (n as f64 - 1.0);
    }
    1e-6 * trace / d as f64
}

fn center(view: &FeatureMatrix) -> FeatureMatrix {
    let n = view.nrows() as f64;
    let mut out = view.clone();
    for mut col in out.columns_mut() {
        let mean = col.iter().sum::<f64>() / n;
        col.mapv_inplace(|v| v - mean);
    }
    out
}

fn to_na(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(m.nrows(), m.ncols(), m.iter().cloned())
}

/// Symmetric inverse square root via eigendecomposition.
///
/// With `ridge = 0` a (numerically) singular matrix is an error; with a
/// positive ridge the spectrum is bounded away from zero by construction.
fn inv_sqrt_sym(m: &DMatrix<f64>, ridge_was_zero: bool) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if ridge_was_zero && min_eig <= 1e-12 * max_eig.max(1e-300) {
        return Err(NrdepError::RankDeficiency { min_eig });
    }
    let d = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for c in 0..d {
        let inv_sqrt = 1.0 / eig.eigenvalues[c].max(1e-300).sqrt();
        for r in 0..d {
            scaled[(r, c)] *= inv_sqrt;
        }
    }
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// Two-view CCA with covariance ridge regularization.
pub fn cca_fit(
    view1: &FeatureMatrix,
    view2: &FeatureMatrix,
    n_components: usize,
    ridge: f64,
) -> Result<CcaResult> {
    let n = view1.nrows();
    if view2.nrows() != n {
        return Err(NrdepError::dim(format!(
            "views have {} and {} rows",
            n,
            view2.nrows()
        )));
    }
    if n < 2 {
        return Err(NrdepError::TooFewSamples { got: n });
    }
    let (d1, d2) = (view1.ncols(), view2.ncols());
    if n_components == 0 || n_components > d1.min(d2) {
        return Err(NrdepError::dim(format!(
            "n_components={n_components} must satisfy 1 <= k <= min({d1}, {d2})"
        )));
    }
    if !(ridge >= 0.0) {
        return Err(NrdepError::InvalidConfig(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }

    let x1 = center(view1);
    let x2 = center(view2);
    let denom = n as f64 - 1.0;
    let c11 = to_na(&(x1.t().dot(&x1) / denom));
    let c22 = to_na(&(x2.t().dot(&x2) / denom));
    let c12 = to_na(&(x1.t().dot(&x2) / denom));

    let reg = |mut c: DMatrix<f64>| {
        for i in 0..c.nrows() {
            c[(i, i)] += ridge;
        }
        c
    };
    let w1_white = inv_sqrt_sym(&reg(c11), ridge == 0.0)?;
    let w2_white = inv_sqrt_sym(&reg(c22), ridge == 0.0)?;

    let t = &w1_white * &c12 * &w2_white;
    let svd = t.svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");

    // nalgebra sorts singular values descending; keep an explicit order
    // anyway so the contract does not depend on it
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let a_full = &w1_white * u;
    let b_full = &w2_white * v_t.transpose();

    let mut w1 = Array2::zeros((d1, n_components));
    let mut w2 = Array2::zeros((d2, n_components));
    let mut correlations = Vec::with_capacity(n_components);
    for (c, &idx) in order.iter().take(n_components).enumerate() {
        correlations.push(svd.singular_values[idx]);
        for r in 0..d1 {
            w1[[r, c]] = a_full[(r, idx)];
        }
        for r in 0..d2 {
            w2[[r, c]] = b_full[(r, idx)];
        }
    }

    Ok(CcaResult {
        w1: LinearMap::new(w1)?,
        w2: LinearMap::new(w2)?,
        correlations,
    })
}
