//! Limited-memory BFGS with a strong Wolfe line search.
//!
//! Two-loop recursion (Nocedal & Wright, Numerical Optimization, Alg. 7.4)
//! with the usual `s^T y / y^T y` initial Hessian scaling. The line search
//! brackets and zooms with cubic interpolation under the strong Wolfe
//! conditions (c1 = 1e-4, c2 = 0.9) and falls back to backtracking Armijo
//! when bracketing fails.

use std::collections::VecDeque;

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_BRACKET: usize = 20;
const MAX_ZOOM: usize = 30;
const ALPHA_MAX: f64 = 1e4;

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    pub memory: usize,
    pub grad_tol: f64,
}

/// Outcome of one L-BFGS run.
#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Gradient infinity-norm at the returned point.
    pub grad_norm: f64,
    pub iterations: usize,
    /// Gradient tolerance reached (as opposed to hitting the iteration cap
    /// or a failed line search).
    pub converged: bool,
    /// Line search could not make progress; the best point found so far is
    /// returned instead of an error.
    pub line_search_failed: bool,
    /// Objective at x0 followed by each accepted iterate.
    pub f_trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizes with separate value and gradient callbacks.
pub fn lbfgs_minimize<F, G>(
    mut f: F,
    mut grad: G,
    x0: &[f64],
    max_iters: usize,
    memory: usize,
    grad_tol: f64,
) -> LbfgsResult
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    lbfgs_minimize_fused(
        |x| {
            let v = f(x);
            let g = grad(x);
            (v, g)
        },
        x0,
        &LbfgsOptions {
            max_iters,
            memory,
            grad_tol,
        },
    )
}

/// Minimizes with a fused value-and-gradient callback.
pub fn lbfgs_minimize_fused<E>(mut eval: E, x0: &[f64], opts: &LbfgsOptions) -> LbfgsResult
where
    E: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let memory = opts.memory.max(1);
    let mut x = x0.to_vec();
    let (mut fx, mut gx) = eval(&x);
    let mut trace = vec![fx];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut converged = false;
    let mut line_search_failed = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        if inf_norm(&gx) < opts.grad_tol {
            converged = true;
            break;
        }

        let mut p = two_loop_direction(&gx, &history);
        let mut dphi0 = dot(&gx, &p);
        if !(dphi0 < 0.0) {
            // not a descent direction; drop the history and steepest-descend
            history.clear();
            p = gx.iter().map(|g| -g).collect();
            dphi0 = dot(&gx, &p);
            if !(dphi0 < 0.0) {
                break;
            }
        }

        match wolfe_line_search(&mut eval, &x, &p, fx, dphi0) {
            Some((alpha, x_new, f_new, g_new)) => {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&gx).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                let s_norm = dot(&s, &s).sqrt();
                let y_norm = dot(&y, &y).sqrt();
                // curvature safeguard: skip updates that would break positive
                // definiteness of the implicit Hessian approximation
                if sy > 1e-10 * s_norm * y_norm {
                    if history.len() == memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                x = x_new;
                fx = f_new;
                gx = g_new;
                trace.push(fx);
                iterations += 1;
                let _ = alpha;
            }
            None => {
                line_search_failed = true;
                break;
            }
        }
    }

    if !converged && !line_search_failed && inf_norm(&gx) < opts.grad_tol {
        converged = true;
    }

    debug_assert!(n == x.len());
    LbfgsResult {
        grad_norm: inf_norm(&gx),
        x,
        f: fx,
        iterations,
        converged,
        line_search_failed,
        f_trace: trace,
    }
}

fn two_loop_direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    if history.is_empty() {
        for v in q.iter_mut() {
            *v = -*v;
        }
        return q;
    }
    let m = history.len();
    let mut alphas = vec![0.0; m];
    for (idx, (s, y, rho)) in history.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[idx] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    let (s_last, y_last, _) = history.back().expect("nonempty history");
    let gamma = dot(s_last, y_last) / dot(y_last, y_last);
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for (idx, (s, y, rho)) in history.iter().enumerate() {
        let beta = rho * dot(y, &q);
        let coeff = alphas[idx] - beta;
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += coeff * si;
        }
    }
    for v in q.iter_mut() {
        *v = -*v;
    }
    q
}

struct Probe {
    alpha: f64,
    f: f64,
    dphi: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

/// Strong Wolfe line search (bracket + zoom); returns the accepted step.
fn wolfe_line_search<E>(
    eval: &mut E,
    x: &[f64],
    p: &[f64],
    f0: f64,
    dphi0: f64,
) -> Option<(f64, Vec<f64>, f64, Vec<f64>)>
where
    E: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut probe = |alpha: f64| -> Probe {
        let xa: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi + alpha * pi).collect();
        let (f, g) = eval(&xa);
        let dphi = dot(&g, p);
        Probe { alpha, f, dphi, x: xa, g }
    };

    let mut prev = Probe {
        alpha: 0.0,
        f: f0,
        dphi: dphi0,
        x: x.to_vec(),
        g: Vec::new(),
    };
    let mut alpha = 1.0;

    for i in 0..MAX_BRACKET {
        let cur = probe(alpha);
        let armijo_violated = cur.f > f0 + C1 * cur.alpha * dphi0 || !cur.f.is_finite();
        if armijo_violated || (i > 0 && cur.f >= prev.f) {
            return zoom(&mut probe, f0, dphi0, prev, cur);
        }
        if cur.dphi.abs() <= -C2 * dphi0 {
            return Some((cur.alpha, cur.x, cur.f, cur.g));
        }
        if cur.dphi >= 0.0 {
            return zoom(&mut probe, f0, dphi0, cur, prev);
        }
        if cur.alpha >= ALPHA_MAX {
            // sufficient decrease keeps holding along an unbounded direction
            return Some((cur.alpha, cur.x, cur.f, cur.g));
        }
        alpha = (cur.alpha * 2.0).min(ALPHA_MAX);
        prev = cur;
    }
    backtracking_armijo(&mut probe, f0, dphi0)
}

fn zoom<P>(
    probe: &mut P,
    f0: f64,
    dphi0: f64,
    mut lo: Probe,
    mut hi: Probe,
) -> Option<(f64, Vec<f64>, f64, Vec<f64>)>
where
    P: FnMut(f64) -> Probe,
{
    for _ in 0..MAX_ZOOM {
        let width = (hi.alpha - lo.alpha).abs();
        if width < 1e-16 * lo.alpha.abs().max(1.0) {
            break;
        }
        let mut a = cubic_minimizer(&lo, &hi);
        // safeguard: keep strictly inside the bracket
        let (amin, amax) = if lo.alpha < hi.alpha {
            (lo.alpha, hi.alpha)
        } else {
            (hi.alpha, lo.alpha)
        };
        let margin = 0.1 * width;
        if !a.is_finite() || a <= amin + margin || a >= amax - margin {
            a = 0.5 * (amin + amax);
        }
        let cur = probe(a);
        if cur.f > f0 + C1 * cur.alpha * dphi0 || cur.f >= lo.f || !cur.f.is_finite() {
            hi = cur;
        } else {
            if cur.dphi.abs() <= -C2 * dphi0 {
                return Some((cur.alpha, cur.x, cur.f, cur.g));
            }
            if cur.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                hi = std::mem::replace(&mut lo, cur);
            } else {
                lo = cur;
            }
        }
    }
    // no strong Wolfe point isolated; settle for sufficient decrease
    if lo.alpha > 0.0 && lo.f <= f0 + C1 * lo.alpha * dphi0 && lo.f.is_finite() {
        return Some((lo.alpha, lo.x, lo.f, lo.g));
    }
    backtracking_armijo(probe, f0, dphi0)
}

fn cubic_minimizer(a: &Probe, b: &Probe) -> f64 {
    let d1 = a.dphi + b.dphi - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.dphi * b.dphi;
    if disc < 0.0 {
        return f64::NAN;
    }
    let d2 = disc.sqrt() * (b.alpha - a.alpha).signum();
    b.alpha - (b.alpha - a.alpha) * (b.dphi + d2 - d1) / (b.dphi - a.dphi + 2.0 * d2)
}

fn backtracking_armijo<P>(
    probe: &mut P,
    f0: f64,
    dphi0: f64,
) -> Option<(f64, Vec<f64>, f64, Vec<f64>)>
where
    P: FnMut(f64) -> Probe,
{
    let mut alpha = 1.0;
    for _ in 0..60 {
        let cur = probe(alpha);
        if cur.f.is_finite() && cur.f <= f0 + C1 * alpha * dphi0 {
            return Some((cur.alpha, cur.x, cur.f, cur.g));
        }
        alpha *= 0.5;
    }
    None
}
