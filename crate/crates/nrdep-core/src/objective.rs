//! Full multi-view objective, penalty, and analytic gradients.
//!
//! The driving quantity is
//!
//! ```text
//! C       = sum_V sum_{U != V} sum_i sum_{j != i} p_V(j|i) p_U(j|i)
//! C_pen   = sum_V sum_{U != V} sum_i symmetrized_kl(p_{i,V}, p_{i,U})
//! C_total = C - gamma * C_pen
//! ```
//!
//! `C_total` is maximized with respect to the per-view maps; the optimizer
//! minimizes its negation. Gradients are analytic: the chain rule factors
//! through the softmax Jacobian of each probability row and
//! `dD(i,j)/dW = 2 (x_i - x_j)(x_i - x_j)^T W`.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use std::cell::OnceCell;

use crate::data_model::{LinearMap, MultiViewDataset, NeighborField};
use crate::error::{NrdepError, Result};
use crate::neighborhood::{projected_neighbor_field, BandwidthSpec};

/// Dataset, maps, bandwidths, and penalty weight for one evaluation point,
/// with the per-view neighbor fields cached.
pub struct ObjectiveState<'a> {
    dataset: &'a MultiViewDataset,
    maps: Vec<LinearMap>,
    sigmas: Vec<BandwidthSpec>,
    gamma: f64,
    prob_floor: f64,
    fields: Vec<NeighborField>,
    // ln(max(p, floor)) per view, built on first use after a map change
    logs: OnceCell<Vec<Array2<f64>>>,
}

impl<'a> ObjectiveState<'a> {
    pub fn new(
        dataset: &'a MultiViewDataset,
        maps: Vec<LinearMap>,
        sigmas: Vec<BandwidthSpec>,
        gamma: f64,
        prob_floor: f64,
    ) -> Result<Self> {
        if maps.len() != dataset.n_views() || sigmas.len() != dataset.n_views() {
            return Err(NrdepError::dim(format!(
                "expected {} maps and bandwidths, got {} and {}",
                dataset.n_views(),
                maps.len(),
                sigmas.len()
            )));
        }
        if !(gamma >= 0.0) {
            return Err(NrdepError::InvalidConfig(format!(
                "gamma must be >= 0, got {gamma}"
            )));
        }
        if !(prob_floor > 0.0) {
            return Err(NrdepError::InvalidConfig(format!(
                "prob_floor must be > 0, got {prob_floor}"
            )));
        }
        for (v, map) in maps.iter().enumerate() {
            if map.input_dim() != dataset.view_dims()[v] {
                return Err(NrdepError::dim(format!(
                    "map {v} expects {} input features, view has {}",
                    map.input_dim(),
                    dataset.view_dims()[v]
                )));
            }
        }
        let fields = compute_fields(dataset, &maps, &sigmas)?;
        Ok(ObjectiveState {
            dataset,
            maps,
            sigmas,
            gamma,
            prob_floor,
            fields,
            logs: OnceCell::new(),
        })
    }

    pub fn dataset(&self) -> &MultiViewDataset {
        self.dataset
    }

    pub fn maps(&self) -> &[LinearMap] {
        &self.maps
    }

    pub fn sigmas(&self) -> &[BandwidthSpec] {
        &self.sigmas
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) {
        self.gamma = gamma.max(0.0);
    }

    /// Cached per-view neighbor fields at the current maps.
    pub fn fields(&self) -> &[NeighborField] {
        &self.fields
    }

    /// Replaces the maps and refreshes the cached fields.
    pub fn set_maps(&mut self, maps: Vec<LinearMap>) -> Result<()> {
        self.fields = compute_fields(self.dataset, &maps, &self.sigmas)?;
        self.maps = maps;
        self.logs = OnceCell::new();
        Ok(())
    }

    fn logs(&self) -> &[Array2<f64>] {
        let floor = self.prob_floor;
        self.logs.get_or_init(|| {
            self.fields
                .iter()
                .map(|f| f.probs.mapv(|p| p.max(floor).ln()))
                .collect()
        })
    }

    /// The neighborhood-agreement objective `C`; in
    /// `[0, n_views * (n_views - 1) * n_samples]`.
    pub fn objective_sim(&self) -> f64 {
        let n = self.dataset.n_samples();
        let vn = self.dataset.n_views();
        let mut total = 0.0;
        for v in 0..vn {
            for u in (v + 1)..vn {
                let pv = &self.fields[v].probs;
                let pu = &self.fields[u].probs;
                let row_dots: Vec<f64> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let a = pv.row(i);
                        let b = pu.row(i);
                        let a = a.to_slice().expect("contiguous row");
                        let b = b.to_slice().expect("contiguous row");
                        let mut acc = 0.0;
                        for (x, y) in a.iter().zip(b.iter()) {
                            acc += x * y;
                        }
                        acc
                    })
                    .collect();
                // both orderings of the (v, u) pair contribute the same sum
                total += 2.0 * row_dots.iter().sum::<f64>();
            }
        }
        total
    }

    /// The symmetrized-KL disagreement penalty; nonnegative, zero iff all
    /// views' fields coincide.
    pub fn penalty_kl(&self) -> f64 {
        let n = self.dataset.n_samples();
        let vn = self.dataset.n_views();
        let logs = self.logs();
        let mut total = 0.0;
        for v in 0..vn {
            for u in (v + 1)..vn {
                let pv = &self.fields[v].probs;
                let pu = &self.fields[u].probs;
                let lv = &logs[v];
                let lu = &logs[u];
                let row_kls: Vec<f64> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let p = pv.row(i);
                        let q = pu.row(i);
                        let lp = lv.row(i);
                        let lq = lu.row(i);
                        // (KL(p,q) + KL(q,p)) / 2 with floored denominators
                        let mut acc = 0.0;
                        for l in 0..n {
                            acc += (p[l] - q[l]) * (lp[l] - lq[l]);
                        }
                        0.5 * acc
                    })
                    .collect();
                total += 2.0 * row_kls.iter().sum::<f64>();
            }
        }
        total
    }

    /// `C - gamma * C_pen`, the quantity the optimizer maximizes.
    pub fn total_objective(&self) -> f64 {
        if self.gamma == 0.0 {
            self.objective_sim()
        } else {
            self.objective_sim() - self.gamma * self.penalty_kl()
        }
    }

    /// Penalty weight making the two objective parts equal at the current
    /// maps: `C / C_pen`, or 0 when the views already agree.
    pub fn init_gamma(&self) -> f64 {
        let pen = self.penalty_kl();
        if pen < 1e-15 {
            0.0
        } else {
            self.objective_sim() / pen
        }
    }

    /// `dC_total/dW_V` for every view.
    ///
    /// The per-row softmax Jacobian reduces each view's gradient to a
    /// weighted graph-Laplacian form: with `G(i,j) = dC_total/dD_V(i,j)` and
    /// `M = G + G^T`, the gradient is `2 X^T (diag(M 1) - M) X W`.
    pub fn gradient_total(&self) -> Vec<Array2<f64>> {
        let n = self.dataset.n_samples();
        let vn = self.dataset.n_views();
        let gamma = self.gamma;
        let eps = self.prob_floor;
        let logs = if gamma != 0.0 { Some(self.logs()) } else { None };

        (0..vn)
            .map(|v| {
                let x = self.dataset.view(v);
                let p = &self.fields[v].probs;
                let s = self.sigmas[v].sigma;
                let inv_s2 = 1.0 / (s * s);
                let others: Vec<usize> = (0..vn).filter(|&u| u != v).collect();
                let pairs = others.len() as f64;

                let mut g = Array2::<f64>::zeros((n, n));
                g.as_slice_mut()
                    .expect("contiguous")
                    .par_chunks_mut(n)
                    .enumerate()
                    .for_each(|(i, grow)| {
                        let p_i = p.row(i);
                        let p_i = p_i.to_slice().expect("contiguous row");
                        let q_at = |l: usize| -> f64 {
                            others.iter().map(|&u| self.fields[u].probs[[i, l]]).sum()
                        };
                        let lam_at = |l: usize| -> f64 {
                            let logs = logs.expect("penalty logs present when gamma != 0");
                            let lv = logs[v][[i, l]];
                            others.iter().map(|&u| lv - logs[u][[i, l]]).sum()
                        };
                        // row constants
                        let mut sim_bar = 0.0; // sum_l p q
                        let mut lam_bar = 0.0; // sum_l p lambda
                        let mut p_act = 0.0; //   sum_l p       over unclamped entries
                        let mut q_act = 0.0; //   sum_l q       over unclamped entries
                        for l in 0..n {
                            if l == i {
                                continue;
                            }
                            let pil = p_i[l];
                            let qil = q_at(l);
                            sim_bar += pil * qil;
                            if gamma != 0.0 {
                                lam_bar += pil * lam_at(l);
                                if pil > eps {
                                    p_act += pil;
                                    q_act += qil;
                                }
                            }
                        }
                        let pen_bar = lam_bar + pairs * p_act - q_act;
                        for j in 0..n {
                            if j == i {
                                continue;
                            }
                            let pij = p_i[j];
                            let qij = q_at(j);
                            let mut val = 2.0 * pij * (qij - sim_bar);
                            if gamma != 0.0 {
                                let ind = if pij > eps { 1.0 } else { 0.0 };
                                let pen = pij * lam_at(j) + pairs * pij * ind - qij * ind
                                    - pij * pen_bar;
                                val -= gamma * pen;
                            }
                            grow[j] = -inv_s2 * val;
                        }
                    });

                // 2 X^T (diag(r) - M) X W  with M = G + G^T, r = M 1
                let gx = g.dot(x);
                let gtx = g.t().dot(x);
                let r = g.sum_axis(Axis(1)) + g.sum_axis(Axis(0));
                let d = x.ncols();
                let mut lx = Array2::<f64>::zeros((n, d));
                for i in 0..n {
                    for c in 0..d {
                        lx[[i, c]] = r[i] * x[[i, c]] - gx[[i, c]] - gtx[[i, c]];
                    }
                }
                let t = x.t().dot(&lx);
                let mut grad = t.dot(&self.maps[v].weights);
                grad.mapv_inplace(|z| 2.0 * z);
                grad
            })
            .collect()
    }

    /// Flattened gradient infinity-norm, for convergence reporting.
    pub fn gradient_inf_norm(grads: &[Array2<f64>]) -> f64 {
        grads
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Frobenius norms of the current maps.
    pub fn map_norms(&self) -> Vec<f64> {
        self.maps.iter().map(|m| m.norm()).collect()
    }
}

fn compute_fields(
    dataset: &MultiViewDataset,
    maps: &[LinearMap],
    sigmas: &[BandwidthSpec],
) -> Result<Vec<NeighborField>> {
    dataset
        .views()
        .iter()
        .zip(maps.iter().zip(sigmas.iter()))
        .map(|(view, (map, &sigma))| projected_neighbor_field(view, map, sigma))
        .collect()
}

/// Row-major sum over `Array1` pairs, used for trace reporting.
pub fn l2_norm(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::validate_dataset;
    use crate::measures;
    use crate::neighborhood::compute_sigma;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FLOOR: f64 = 1e-12;

    fn random_state<'a>(
        dataset: &'a MultiViewDataset,
        seed: u64,
        dims: &[usize],
        gamma: f64,
    ) -> ObjectiveState<'a> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigmas: Vec<BandwidthSpec> = dataset
            .views()
            .iter()
            .map(|v| compute_sigma(v, 0.3).unwrap())
            .collect();
        let maps: Vec<LinearMap> = dataset
            .views()
            .iter()
            .zip(dims)
            .map(|(v, &k)| {
                LinearMap::new(Array2::from_shape_fn((v.ncols(), k), |_| {
                    rng.random_range(-1.0..1.0)
                }))
                .unwrap()
            })
            .collect();
        ObjectiveState::new(dataset, maps, sigmas, gamma, FLOOR).unwrap()
    }

    fn random_dataset(seed: u64, n: usize, dims: &[usize]) -> MultiViewDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let views = dims
            .iter()
            .map(|&d| Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0)))
            .collect();
        validate_dataset(views).unwrap()
    }

    /// Naive quadruple loop over (V, U, i, j), straight from the cached rows.
    fn sim_oracle(state: &ObjectiveState) -> f64 {
        let n = state.dataset().n_samples();
        let vn = state.dataset().n_views();
        let mut total = 0.0;
        for v in 0..vn {
            for u in 0..vn {
                if u == v {
                    continue;
                }
                for i in 0..n {
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        total +=
                            state.fields()[v].probs[[i, j]] * state.fields()[u].probs[[i, j]];
                    }
                }
            }
        }
        total
    }

    /// Naive triple loop via the scalar measure functions.
    fn penalty_oracle(state: &ObjectiveState) -> f64 {
        let n = state.dataset().n_samples();
        let vn = state.dataset().n_views();
        let mut total = 0.0;
        for v in 0..vn {
            for u in 0..vn {
                if u == v {
                    continue;
                }
                for i in 0..n {
                    total += measures::symmetrized_kl(
                        state.fields()[v].row(i),
                        state.fields()[u].row(i),
                        FLOOR,
                    )
                    .unwrap();
                }
            }
        }
        total
    }

    #[test]
    fn sim_identical_spiky_views() {
        let view = array![[0.0], [3.0]];
        let ds = validate_dataset(vec![view.clone(), view]).unwrap();
        let maps = vec![
            LinearMap::new(array![[1.0]]).unwrap(),
            LinearMap::new(array![[1.0]]).unwrap(),
        ];
        let sig = BandwidthSpec::new(1.0).unwrap();
        let state = ObjectiveState::new(&ds, maps, vec![sig, sig], 0.0, FLOOR).unwrap();
        assert_abs_diff_eq!(state.objective_sim(), 4.0, epsilon = 1e-12);
        assert_eq!(state.penalty_kl(), 0.0);
        assert_eq!(state.init_gamma(), 0.0);
    }

    #[test]
    fn sim_disjoint_supports_is_zero() {
        // pairings (0,1)(2,3) in view 1 vs (0,2)(1,3) in view 2; the huge
        // separations underflow every cross-pair probability to exactly 0
        let b = 1e9;
        let d = 1e-9;
        let v1 = array![[0.0], [d], [b], [b + d]];
        let v2 = array![[0.0], [b], [d], [b + d]];
        let ds = validate_dataset(vec![v1, v2]).unwrap();
        let maps = vec![
            LinearMap::new(array![[1.0]]).unwrap(),
            LinearMap::new(array![[1.0]]).unwrap(),
        ];
        let sig = BandwidthSpec::new(1.0).unwrap();
        let state = ObjectiveState::new(&ds, maps, vec![sig, sig], 0.0, FLOOR).unwrap();
        assert_eq!(state.objective_sim(), 0.0);
    }

    #[test]
    fn sim_matches_quadruple_loop_oracle() {
        for seed in 0..5 {
            let ds = random_dataset(seed, 8, &[3, 4]);
            let state = random_state(&ds, seed + 100, &[2, 2], 0.0);
            let got = state.objective_sim();
            assert!(got >= 0.0);
            assert!(got <= 2.0 * 8.0);
            assert_abs_diff_eq!(got, sim_oracle(&state), epsilon = 1e-10);
        }
    }

    #[test]
    fn penalty_matches_triple_loop_oracle() {
        for seed in 0..5 {
            let ds = random_dataset(seed, 8, &[3, 4]);
            let state = random_state(&ds, seed + 200, &[2, 2], 0.0);
            let got = state.penalty_kl();
            assert!(got >= 0.0);
            assert_abs_diff_eq!(got, penalty_oracle(&state), epsilon = 1e-10);
        }
    }

    #[test]
    fn penalty_symmetric_in_view_labels() {
        let ds = random_dataset(42, 7, &[3, 3]);
        let state = random_state(&ds, 7, &[2, 2], 0.0);
        let swapped_views = vec![ds.view(1).clone(), ds.view(0).clone()];
        let swapped = validate_dataset(swapped_views).unwrap();
        let maps = vec![state.maps()[1].clone(), state.maps()[0].clone()];
        let sigmas = vec![state.sigmas()[1], state.sigmas()[0]];
        let state2 = ObjectiveState::new(&swapped, maps, sigmas, 0.0, FLOOR).unwrap();
        assert_abs_diff_eq!(state.penalty_kl(), state2.penalty_kl(), epsilon = 1e-10);
    }

    #[test]
    fn total_composes_sim_and_penalty() {
        let ds = random_dataset(3, 9, &[4, 3]);
        let mut state = random_state(&ds, 31, &[2, 1], 0.0);
        assert_eq!(state.total_objective(), state.objective_sim());
        state.set_gamma(0.5);
        assert_abs_diff_eq!(
            state.total_objective(),
            state.objective_sim() - 0.5 * state.penalty_kl(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn init_gamma_balances_parts() {
        let ds = random_dataset(5, 10, &[3, 3]);
        let mut state = random_state(&ds, 55, &[1, 1], 0.0);
        let g = state.init_gamma();
        assert!(g > 0.0);
        state.set_gamma(g);
        assert_abs_diff_eq!(state.total_objective(), 0.0, epsilon = 1e-10);
    }

    fn fd_gradient(
        ds: &MultiViewDataset,
        maps: &[LinearMap],
        sigmas: &[BandwidthSpec],
        gamma: f64,
        h: f64,
    ) -> Vec<Array2<f64>> {
        maps.iter()
            .enumerate()
            .map(|(v, map)| {
                let (dv, kv) = map.weights.dim();
                let mut g = Array2::zeros((dv, kv));
                for r in 0..dv {
                    for c in 0..kv {
                        let mut eval = |delta: f64| {
                            let mut m = maps.to_vec();
                            m[v].weights[[r, c]] += delta;
                            ObjectiveState::new(ds, m, sigmas.to_vec(), gamma, FLOOR)
                                .unwrap()
                                .total_objective()
                        };
                        g[[r, c]] = (eval(h) - eval(-h)) / (2.0 * h);
                    }
                }
                g
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ds = random_dataset(77, 6, &[3, 3]);
        for &gamma in &[0.0, 0.7] {
            let state = random_state(&ds, 770, &[1, 2], gamma);
            let analytic = state.gradient_total();
            let fd = fd_gradient(&ds, state.maps(), state.sigmas(), gamma, 1e-5);
            for (a, f) in analytic.iter().zip(fd.iter()) {
                for (x, y) in a.iter().zip(f.iter()) {
                    let scale = x.abs().max(y.abs());
                    if scale > 1e-8 {
                        assert!(
                            (x - y).abs() / scale < 1e-4,
                            "analytic {x} vs fd {y} at gamma {gamma}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_zero_at_zero_maps() {
        // the map enters distances quadratically, so W = 0 is stationary
        let ds = random_dataset(12, 8, &[3, 3]);
        let sigmas: Vec<_> = ds.views().iter().map(|v| compute_sigma(v, 0.05).unwrap()).collect();
        let maps = vec![
            LinearMap::new(Array2::zeros((3, 2))).unwrap(),
            LinearMap::new(Array2::zeros((3, 2))).unwrap(),
        ];
        let state = ObjectiveState::new(&ds, maps, sigmas, 0.0, FLOOR).unwrap();
        let grads = state.gradient_total();
        assert!(ObjectiveState::gradient_inf_norm(&grads) < 1e-8);
    }

    #[test]
    fn gradient_linear_in_gamma() {
        let ds = random_dataset(21, 7, &[3, 4]);
        let g0 = random_state(&ds, 210, &[2, 2], 0.0);
        let maps = g0.maps().to_vec();
        let sigmas = g0.sigmas().to_vec();
        let grad_at = |gamma: f64| {
            ObjectiveState::new(&ds, maps.clone(), sigmas.clone(), gamma, FLOOR)
                .unwrap()
                .gradient_total()
        };
        let base = grad_at(0.0);
        let g1 = grad_at(0.8);
        let g2 = grad_at(1.6);
        for v in 0..2 {
            for ((b, x), y) in base[v].iter().zip(g1[v].iter()).zip(g2[v].iter()) {
                // grad(2g) - grad(0) = 2 (grad(g) - grad(0))
                assert_abs_diff_eq!(y - b, 2.0 * (x - b), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn total_invariant_under_subspace_rotation() {
        let ds = random_dataset(33, 9, &[4, 4]);
        let state = random_state(&ds, 330, &[2, 2], 0.4);
        let before = state.total_objective();
        // rotate both subspaces by (different) orthogonal 2x2 matrices
        let rot = |theta: f64| array![[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]];
        let maps = vec![
            LinearMap::new(state.maps()[0].weights.dot(&rot(0.83))).unwrap(),
            LinearMap::new(state.maps()[1].weights.dot(&rot(-1.21))).unwrap(),
        ];
        let rotated =
            ObjectiveState::new(&ds, maps, state.sigmas().to_vec(), 0.4, FLOOR).unwrap();
        assert_abs_diff_eq!(before, rotated.total_objective(), epsilon = 1e-10);
    }
}
