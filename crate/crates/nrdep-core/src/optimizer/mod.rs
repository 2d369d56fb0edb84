//! Annealed multi-round L-BFGS fitting with random restarts.
//!
//! Each restart draws random initial maps, sets the penalty weight so the
//! two objective parts balance, then runs one L-BFGS round per annealing
//! step with the weight shrunk geometrically at the start of each round.
//! A final penalty-free pass polishes the result, and the restart with the
//! highest final agreement objective wins.

mod lbfgs;

pub use lbfgs::{lbfgs_minimize, lbfgs_minimize_fused, LbfgsOptions, LbfgsResult};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data_model::{FeatureMatrix, FitConfig, LinearMap, MultiViewDataset};
use crate::error::{NrdepError, Result};
use crate::neighborhood::{compute_sigma, project, BandwidthSpec};
use crate::objective::ObjectiveState;

/// Concatenation of all map entries in fixed (view, column-major) order.
#[derive(Debug, Clone)]
pub struct FlatParams {
    pub vector: Vec<f64>,
    pub layout: Vec<ViewLayout>,
}

/// Packing descriptor for one view's block of the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewLayout {
    pub view: usize,
    pub input_dim: usize,
    pub subspace_dim: usize,
}

pub fn pack_maps(maps: &[LinearMap]) -> FlatParams {
    let mut vector = Vec::new();
    let mut layout = Vec::with_capacity(maps.len());
    for (view, map) in maps.iter().enumerate() {
        let (d, k) = map.weights.dim();
        layout.push(ViewLayout {
            view,
            input_dim: d,
            subspace_dim: k,
        });
        for c in 0..k {
            for r in 0..d {
                vector.push(map.weights[[r, c]]);
            }
        }
    }
    FlatParams { vector, layout }
}

pub fn unpack_maps(vector: &[f64], layout: &[ViewLayout]) -> Vec<LinearMap> {
    let mut maps = Vec::with_capacity(layout.len());
    let mut offset = 0;
    for lay in layout {
        let (d, k) = (lay.input_dim, lay.subspace_dim);
        let mut w = Array2::zeros((d, k));
        for c in 0..k {
            for r in 0..d {
                w[[r, c]] = vector[offset];
                offset += 1;
            }
        }
        maps.push(LinearMap::new(w).expect("layout guarantees valid shape"));
    }
    maps
}

fn pack_grads(grads: &[Array2<f64>], layout: &[ViewLayout]) -> Vec<f64> {
    let mut vector = Vec::new();
    for (g, lay) in grads.iter().zip(layout) {
        for c in 0..lay.subspace_dim {
            for r in 0..lay.input_dim {
                vector.push(g[[r, c]]);
            }
        }
    }
    vector
}

/// One annealing round of the winning restart's trace.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    /// 1-based round index; the penalty-free polish pass is `n_rounds + 1`.
    pub round: usize,
    pub gamma: f64,
    pub objective_sim: f64,
    pub penalty_kl: f64,
    pub total: f64,
    pub grad_norm: f64,
    pub map_norms: Vec<f64>,
    pub lbfgs_iterations: usize,
    pub converged: bool,
    /// Minimized objective (`-C_total`) at x0 and each accepted iterate.
    pub f_trace: Vec<f64>,
}

/// Full trace of one restart.
#[derive(Debug, Clone)]
pub struct RestartTrace {
    pub restart: usize,
    pub gamma_init: f64,
    pub rounds: Vec<RoundRecord>,
    pub final_objective: f64,
    pub converged: bool,
}

/// Outcome of `fit`: winning maps plus the traces of every restart.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub maps: Vec<LinearMap>,
    /// Agreement objective at gamma = 0, recomputed from the returned maps.
    pub final_objective: f64,
    /// Per-round records of the winning restart.
    pub objective_trace: Vec<RoundRecord>,
    pub restart_index: usize,
    /// Final polish pass reached the gradient tolerance.
    pub converged: bool,
    /// Traces of all restarts, in restart order.
    pub restart_traces: Vec<RestartTrace>,
    /// Fixed input-space bandwidth per view.
    pub sigmas: Vec<f64>,
}

struct RestartRun {
    maps: Vec<LinearMap>,
    trace: RestartTrace,
}

/// Draws a random map and scales it so the median projected squared
/// distance equals `sigma^2`, keeping the initial neighborhoods neither
/// saturated nor uniform.
fn init_map(
    view: &FeatureMatrix,
    k: usize,
    sigma: f64,
    orthonormalize: bool,
    rng: &mut ChaCha8Rng,
) -> LinearMap {
    let d = view.ncols();
    let mut w = Array2::from_shape_fn((d, k), |_| StandardNormal.sample(rng));
    if orthonormalize {
        for c in 0..k {
            for prev in 0..c {
                let dot: f64 = (0..d).map(|r| w[[r, c]] * w[[r, prev]]).sum();
                for r in 0..d {
                    w[[r, c]] -= dot * w[[r, prev]];
                }
            }
            let norm: f64 = (0..d).map(|r| w[[r, c]] * w[[r, c]]).sum::<f64>().sqrt();
            if norm > 0.0 {
                for r in 0..d {
                    w[[r, c]] /= norm;
                }
            }
        }
    }
    let coords = view.dot(&w);
    let n = coords.nrows();
    let mut d2s = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for c in 0..k {
                let diff = coords[[i, c]] - coords[[j, c]];
                acc += diff * diff;
            }
            d2s.push(acc);
        }
    }
    let mid = d2s.len() / 2;
    let (_, med, _) = d2s.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let mut scale_ref = *med;
    if scale_ref <= 0.0 {
        scale_ref = d2s.iter().sum::<f64>() / d2s.len() as f64;
    }
    if scale_ref > 0.0 {
        let s = sigma / scale_ref.sqrt();
        w.mapv_inplace(|v| v * s);
    }
    LinearMap::new(w).expect("finite scaled init")
}

fn run_restart(
    dataset: &MultiViewDataset,
    config: &FitConfig,
    sigmas: &[BandwidthSpec],
    restart: usize,
    seed: u64,
) -> Result<RestartRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let maps: Vec<LinearMap> = dataset
        .views()
        .iter()
        .zip(config.subspace_dims.iter().zip(sigmas))
        .map(|(view, (&k, bw))| init_map(view, k, bw.sigma, config.orthonormalize_init, &mut rng))
        .collect();

    let layout = pack_maps(&maps).layout;
    let mut state = ObjectiveState::new(
        dataset,
        maps,
        sigmas.to_vec(),
        0.0,
        config.prob_floor,
    )?;
    let gamma_init = state.init_gamma();

    let opts = LbfgsOptions {
        max_iters: config.lbfgs_max_iters,
        memory: config.lbfgs_memory,
        grad_tol: config.grad_tolerance,
    };

    let mut rounds = Vec::with_capacity(config.n_rounds + 1);
    let mut x = pack_maps(state.maps()).vector;
    let mut polish_converged = false;

    for round in 1..=(config.n_rounds + 1) {
        let gamma = if round <= config.n_rounds {
            gamma_init * config.gamma_multiplier.powi(round as i32)
        } else {
            0.0
        };
        state.set_gamma(gamma);

        let res = {
            let state_ref = &mut state;
            let layout_ref = &layout;
            lbfgs_minimize_fused(
                move |xv: &[f64]| {
                    if xv.iter().any(|v| !v.is_finite()) {
                        return (f64::INFINITY, vec![0.0; xv.len()]);
                    }
                    let maps = unpack_maps(xv, layout_ref);
                    state_ref.set_maps(maps).expect("layout matches dataset");
                    let f = -state_ref.total_objective();
                    let grads = state_ref.gradient_total();
                    let mut g = pack_grads(&grads, layout_ref);
                    for v in g.iter_mut() {
                        *v = -*v;
                    }
                    (f, g)
                },
                &x,
                &opts,
            )
        };

        x = res.x.clone();
        state.set_maps(unpack_maps(&x, &layout))?;
        let c = state.objective_sim();
        let cp = state.penalty_kl();
        rounds.push(RoundRecord {
            round,
            gamma,
            objective_sim: c,
            penalty_kl: cp,
            total: c - gamma * cp,
            grad_norm: res.grad_norm,
            map_norms: state.map_norms(),
            lbfgs_iterations: res.iterations,
            converged: res.converged,
            f_trace: res.f_trace,
        });
        if round == config.n_rounds + 1 {
            polish_converged = res.converged;
        }
    }

    let final_objective = state.objective_sim();
    let maps = state.maps().to_vec();
    Ok(RestartRun {
        maps,
        trace: RestartTrace {
            restart,
            gamma_init,
            rounds,
            final_objective,
            converged: polish_converged,
        },
    })
}

/// Fits dependent-subspace maps for every view.
///
/// Runs `config.n_restarts` independent seeded restarts and returns the one
/// with the highest final agreement objective. Identical configurations give
/// bit-identical results regardless of thread count.
pub fn fit(dataset: &MultiViewDataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if config.subspace_dims.len() != dataset.n_views() {
        return Err(NrdepError::dim(format!(
            "subspace_dims has {} entries for {} views",
            config.subspace_dims.len(),
            dataset.n_views()
        )));
    }
    for (v, (&k, &d)) in config
        .subspace_dims
        .iter()
        .zip(dataset.view_dims())
        .enumerate()
    {
        if k == 0 || k > d {
            return Err(NrdepError::dim(format!(
                "view {v}: subspace dim {k} must satisfy 1 <= k <= {d}"
            )));
        }
    }

    let sigmas: Vec<BandwidthSpec> = dataset
        .views()
        .iter()
        .map(|view| compute_sigma(view, config.sigma_fraction))
        .collect::<Result<_>>()?;

    let mut master = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let seeds: Vec<u64> = (0..config.n_restarts).map(|_| master.random()).collect();

    let runs: Vec<RestartRun> = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| run_restart(dataset, config, &sigmas, r, seed))
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.trace.final_objective > runs[best].trace.final_objective {
            best = r;
        }
    }
    let restart_traces: Vec<RestartTrace> = runs.iter().map(|r| r.trace.clone()).collect();
    let winner = &runs[best];
    Ok(FitResult {
        maps: winner.maps.clone(),
        final_objective: winner.trace.final_objective,
        objective_trace: winner.trace.rounds.clone(),
        restart_index: best,
        converged: winner.trace.converged,
        restart_traces,
        sigmas: sigmas.iter().map(|b| b.sigma).collect(),
    })
}

/// Projects every view of a dataset through fitted maps.
pub fn project_views(dataset: &MultiViewDataset, maps: &[LinearMap]) -> Result<Vec<FeatureMatrix>> {
    if maps.len() != dataset.n_views() {
        return Err(NrdepError::dim(format!(
            "{} maps for {} views",
            maps.len(),
            dataset.n_views()
        )));
    }
    dataset
        .views()
        .iter()
        .zip(maps)
        .map(|(view, map)| project(view, map))
        .collect()
}
