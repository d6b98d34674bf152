//! Conditional-gradient (Frank-Wolfe) maximization of the dual.
//!
//! The feasible set is a product of per-(i,k) boxes and triangles, so the
//! linear oracle is closed-form and the exact line search needs only two
//! quadratic-form evaluations per step. Iteration starts from zero, which
//! is always feasible, and stops when the relative Frank-Wolfe gap drops
//! below the configured tolerance. Everything is deterministic: ties in the
//! oracle break toward zero, and no randomness is involved anywhere.

use std::time::Instant;

use crate::dual::{DualGradient, DualProblem, DualVariables, TrainConfig};
use crate::error::{Error, Result};

/// Diagnostics of one solver run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Number of iterations entered (each evaluates one gradient).
    pub iterations: usize,
    pub final_objective: f64,
    /// Absolute Frank-Wolfe gap at the last iterate.
    pub final_gap: f64,
    /// Gap per iteration, in order.
    pub gap_history: Vec<f64>,
    /// Objective per iteration, in order (non-decreasing up to rounding).
    pub objective_history: Vec<f64>,
    pub converged: bool,
    pub wall_time: f64,
}

impl SolveReport {
    /// Render `iteration objective gap` lines every `stride` iterations
    /// (plus the last). Stride 0 disables output.
    pub fn render_log(&self, stride: usize) -> String {
        let mut out = String::new();
        if stride == 0 {
            return out;
        }
        let last = self.gap_history.len().saturating_sub(1);
        for (it, (obj, gap)) in self
            .objective_history
            .iter()
            .zip(&self.gap_history)
            .enumerate()
        {
            if it % stride == 0 || it == last {
                out.push_str(&format!("iter {it:>6}  objective {obj:.9e}  gap {gap:.9e}\n"));
            }
        }
        out
    }
}

/// Linear maximization oracle: the vertex of the feasible polytope that
/// maximizes `<grad, vertex>`, chosen independently per (i, k).
///
/// Box entries go to their upper bound on strictly positive gradient and to
/// zero otherwise. The `(beta_plus, beta_minus)` triangle picks the best of
/// its vertices `(0,0)`, `(D,0)`, `(0,D)`, breaking ties in that order.
pub fn lmo(p: &DualProblem, grad: &DualGradient) -> DualVariables {
    let (n, q) = grad.alpha.shape();
    let mut vertex = DualVariables::zeros(n, q);
    let d = p.beta_bound();
    for k in 0..q {
        for i in 0..n {
            if grad.alpha[(i, k)] > 0.0 {
                vertex.alpha[(i, k)] = p.alpha_bound()[(i, k)];
            }
            if grad.alpha_star[(i, k)] > 0.0 {
                vertex.alpha_star[(i, k)] = p.alpha_star_bound()[(i, k)];
            }
            if d > 0.0 {
                let plus = d * grad.beta_plus[(i, k)];
                let minus = d * grad.beta_minus[(i, k)];
                if plus > 0.0 && plus >= minus {
                    vertex.beta_plus[(i, k)] = d;
                } else if minus > 0.0 {
                    vertex.beta_minus[(i, k)] = d;
                }
            }
        }
    }
    vertex
}

fn step_size(a: f64, b: f64) -> f64 {
    if b < -1e-15 {
        (a / -b).clamp(0.0, 1.0)
    } else if a > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Exact line search along the segment from `v` to vertex `s`.
///
/// With `d = s - v`, `a = <grad(v), d>` and `b = d' H d`, the objective
/// along the segment is `f(v) + a g + b g^2 / 2`; the maximizer over
/// `[0, 1]` is `a / (-b)` clamped when the segment is strictly curved, and
/// the far end whenever the objective is (numerically) linear and improving.
pub fn exact_line_search(p: &DualProblem, v: &DualVariables, s: &DualVariables) -> f64 {
    let grad = p.gradient(v);
    let d = v.direction_to(s);
    let a = grad.dot(&d);
    let b = p.direction_curvature(&d);
    step_size(a, b)
}

/// Frank-Wolfe gap `<grad(v), s - v>`: an upper bound on the suboptimality
/// of `v` when `s` is the linear-oracle vertex at `v`.
pub fn fw_gap(p: &DualProblem, v: &DualVariables, s: &DualVariables) -> f64 {
    p.gradient(v).dot(&v.direction_to(s))
}

/// Per-iteration snapshot passed to [`solve_observed`] observers.
pub struct IterationInfo<'a> {
    pub iteration: usize,
    pub variables: &'a DualVariables,
    pub objective: f64,
    pub gap: f64,
}

/// Maximize the dual; see [`solve_observed`].
pub fn solve(p: &DualProblem, cfg: &TrainConfig) -> Result<(DualVariables, SolveReport)> {
    solve_observed(p, cfg, |_| {})
}

/// Maximize the dual starting from zero, invoking `observer` after every
/// iteration (including the final one). Returns the final iterate, which is
/// feasible by construction, and a [`SolveReport`].
///
/// The smoothed coefficients `s = K g`, `s* = K* g*` are carried across
/// iterations as convex combinations and recomputed from scratch every 100
/// iterations to wash out drift.
pub fn solve_observed(
    p: &DualProblem,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&IterationInfo),
) -> Result<(DualVariables, SolveReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let n = p.n();
    let q = p.q();

    let mut v = DualVariables::zeros(n, q);
    let (mut g, mut g_star) = p.g_vars(&v);
    let (mut s, mut s_star) = p.smoothed(&g, &g_star);
    let mut objective = p.objective_from_parts(&v, &g, &g_star, &s, &s_star);

    let mut gap_history = Vec::new();
    let mut objective_history = Vec::new();
    let mut converged = false;
    let mut final_gap = 0.0;
    let mut iterations = 0;

    for it in 1..=cfg.max_iter {
        iterations = it;
        let grad = p.gradient_from_smoothed(&s, &s_star);
        let vertex = lmo(p, &grad);
        let direction = v.direction_to(&vertex);
        let gap = grad.dot(&direction);

        if !objective.is_finite() || !gap.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite objective or gap at iteration {it} (malformed Gram matrix?)"
            )));
        }

        objective_history.push(objective);
        gap_history.push(gap);
        final_gap = gap;
        observer(&IterationInfo {
            iteration: it,
            variables: &v,
            objective,
            gap,
        });

        if gap <= cfg.tol * objective.abs().max(1.0) {
            converged = true;
            break;
        }

        // Direction curvature; the same products also update the carried
        // g and s.
        let (gd, gd_star) = p.g_vars(&direction);
        let (sd, sd_star) = p.smoothed(&gd, &gd_star);
        let b = -(gd.dot(&sd) + gd_star.dot(&sd_star));
        let gamma = step_size(gap, b);

        v.step_toward(&vertex, gamma);
        g += gd.scale(gamma);
        g_star += gd_star.scale(gamma);
        s += sd.scale(gamma);
        s_star += sd_star.scale(gamma);
        objective += gamma * gap + 0.5 * gamma * gamma * b;

        if it % 100 == 0 {
            let (fg, fg_star) = p.g_vars(&v);
            g = fg;
            g_star = fg_star;
            let (fs, fs_star) = p.smoothed(&g, &g_star);
            s = fs;
            s_star = fs_star;
            objective = p.objective_from_parts(&v, &g, &g_star, &s, &s_star);
        }
    }

    let final_objective = p.objective(&v);
    if !final_objective.is_finite() {
        return Err(Error::Numerical("non-finite final objective".into()));
    }
    let report = SolveReport {
        iterations,
        final_objective,
        final_gap,
        gap_history,
        objective_history,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((v, report))
}
