//! Independent reference solver and brute-force checks for the dual.
//!
//! Projected gradient ascent with a fixed small step, sharing nothing with
//! the conditional-gradient solver beyond the problem's objective
//! definition. Intended for tiny test instances only; a paranoid mode
//! re-derives even the gradient by central finite differences.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Instance, LabelSet, MultiLabelDataset};
use crate::dual::{DualProblem, DualVariables, TrainConfig};
use crate::kernel::{compute_gram, KernelSpec};

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// Fixed ascent step; `None` picks `1e-2 / L` with `L` the largest
    /// absolute Gram row sum.
    pub step: Option<f64>,
    pub iters: usize,
    pub seed: u64,
    /// Recompute the ascent gradient by finite differences instead of the
    /// analytic formula. Very slow; tiny problems only.
    pub paranoid: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            step: None,
            iters: 200_000,
            seed: 0,
            paranoid: false,
        }
    }
}

/// Euclidean-style projection onto the feasible set, applied per (i, k):
/// clamp both alpha blocks into their boxes; clamp the beta pair to be
/// nonnegative and, if its sum still exceeds `D`, project onto the face
/// `beta_plus + beta_minus = D` and re-clamp onto the segment ends.
pub fn project_feasible(p: &DualProblem, raw: &DualVariables) -> DualVariables {
    let (n, q) = raw.alpha.shape();
    let mut v = raw.clone();
    let d = p.beta_bound();
    for k in 0..q {
        for i in 0..n {
            v.alpha[(i, k)] = v.alpha[(i, k)].clamp(0.0, p.alpha_bound()[(i, k)]);
            v.alpha_star[(i, k)] = v.alpha_star[(i, k)].clamp(0.0, p.alpha_star_bound()[(i, k)]);
            let mut bp = v.beta_plus[(i, k)].max(0.0);
            let mut bm = v.beta_minus[(i, k)].max(0.0);
            if bp + bm > d {
                let over = 0.5 * (bp + bm - d);
                bp -= over;
                bm -= over;
                if bp < 0.0 {
                    bp = 0.0;
                    bm = d;
                } else if bm < 0.0 {
                    bm = 0.0;
                    bp = d;
                }
            }
            v.beta_plus[(i, k)] = bp;
            v.beta_minus[(i, k)] = bm;
        }
    }
    v
}

/// Central finite-difference gradient of the dual objective.
pub fn fd_gradient(p: &DualProblem, v: &DualVariables, step: f64) -> DualVariables {
    let (n, q) = v.alpha.shape();
    let mut grad = DualVariables::zeros(n, q);
    let mut probe = v.clone();
    let blocks: [(fn(&mut DualVariables) -> &mut DMatrix<f64>, fn(&mut DualVariables) -> &mut DMatrix<f64>); 4] = [
        (|w| &mut w.alpha, |g| &mut g.alpha),
        (|w| &mut w.alpha_star, |g| &mut g.alpha_star),
        (|w| &mut w.beta_plus, |g| &mut g.beta_plus),
        (|w| &mut w.beta_minus, |g| &mut g.beta_minus),
    ];
    for (var_block, grad_block) in blocks {
        for idx in 0..n * q {
            let original = var_block(&mut probe)[idx];
            var_block(&mut probe)[idx] = original + step;
            let plus = p.objective(&probe);
            var_block(&mut probe)[idx] = original - step;
            let minus = p.objective(&probe);
            var_block(&mut probe)[idx] = original;
            grad_block(&mut grad)[idx] = (plus - minus) / (2.0 * step);
        }
    }
    grad
}

fn gram_inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Result of a projected-gradient run.
pub struct PgResult {
    pub variables: DualVariables,
    pub objective: f64,
    /// Objective recorded every 1000 iterations (plus the last).
    pub checkpoints: Vec<f64>,
}

/// Projected gradient ascent from zero with a fixed step; returns the best
/// feasible iterate seen.
pub fn pg_solve(p: &DualProblem, cfg: &OracleConfig) -> (DualVariables, f64) {
    let res = pg_solve_full(p, cfg);
    (res.variables, res.objective)
}

pub fn pg_solve_full(p: &DualProblem, cfg: &OracleConfig) -> PgResult {
    let mut lipschitz = gram_inf_norm(&p.gram().k);
    if let Some(ks) = &p.gram().k_star {
        lipschitz = lipschitz.max(gram_inf_norm(ks));
    }
    let step = cfg.step.unwrap_or(1e-2 / lipschitz.max(1e-12));

    let mut v = DualVariables::zeros(p.n(), p.q());
    let mut best = v.clone();
    let mut best_obj = p.objective(&v);
    let mut checkpoints = Vec::new();

    for it in 0..cfg.iters {
        let grad = if cfg.paranoid {
            fd_gradient(p, &v, 1e-6)
        } else {
            p.gradient(&v)
        };
        let mut next = v.clone();
        next.alpha += grad.alpha.scale(step);
        next.alpha_star += grad.alpha_star.scale(step);
        next.beta_plus += grad.beta_plus.scale(step);
        next.beta_minus += grad.beta_minus.scale(step);
        v = project_feasible(p, &next);

        let obj = p.objective(&v);
        if obj > best_obj {
            best_obj = obj;
            best = v.clone();
        }
        if it % 1000 == 0 {
            checkpoints.push(obj);
        }
    }
    checkpoints.push(best_obj);
    PgResult {
        variables: best,
        objective: best_obj,
        checkpoints,
    }
}

/// Seeded random full-variant problem in the acceptance-test regime:
/// `n` in 3..=6, `q` in 2..=3, `d = 3`, `C`, `C*`, `D` drawn from
/// `{0.5, 1, 2}`, linear or rbf kernels.
pub fn random_problem(seed: u64) -> DualProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=6usize);
    let q = rng.random_range(2..=3usize);
    let d = 3usize;

    let mut instances = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x_star: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let present: Vec<usize> = (0..q).filter(|_| rng.random_range(0..2) == 1).collect();
        instances.push(Instance::new(
            x,
            Some(x_star),
            LabelSet::new(q, present).unwrap(),
        ));
    }
    let ds = MultiLabelDataset::new(instances, q).unwrap();

    let choices = [0.5, 1.0, 2.0];
    let cfg = TrainConfig {
        c: choices[rng.random_range(0..3)],
        c_star: choices[rng.random_range(0..3)],
        d: choices[rng.random_range(0..3)],
        ..TrainConfig::default()
    };
    let spec = if seed % 2 == 0 {
        KernelSpec::linear()
    } else {
        KernelSpec::rbf(0.7)
    };
    let spec_star = if seed % 3 == 0 {
        KernelSpec::rbf(0.4)
    } else {
        KernelSpec::linear()
    };
    let gram = compute_gram(&ds, &spec, Some(&spec_star)).unwrap();
    let labels: Vec<LabelSet> = ds.instances().iter().map(|i| i.labels().clone()).collect();
    DualProblem::new(gram, &labels, cfg).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_is_identity_on_feasible_points() {
        let p = random_problem(20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let v = p.random_feasible(&mut rng);
            let projected = project_feasible(&p, &v);
            assert_eq!(projected, v);
        }
    }

    #[test]
    fn projection_clamps_alpha_overshoot() {
        let p = random_problem(21);
        let mut v = DualVariables::zeros(p.n(), p.q());
        // pick an entry with a positive bound
        let mut target = None;
        'outer: for i in 0..p.n() {
            for k in 0..p.q() {
                if p.alpha_bound()[(i, k)] > 0.0 {
                    target = Some((i, k));
                    break 'outer;
                }
            }
        }
        let (i, k) = target.expect("problem has no active alpha entries");
        v.alpha[(i, k)] = 2.0 * p.alpha_bound()[(i, k)];
        let projected = project_feasible(&p, &v);
        assert_eq!(projected.alpha[(i, k)], p.alpha_bound()[(i, k)]);
    }

    #[test]
    fn projection_symmetric_beta_overflow_hits_face_midpoint() {
        let p = random_problem(22);
        let d = p.beta_bound();
        assert!(d > 0.0);
        let mut v = DualVariables::zeros(p.n(), p.q());
        v.beta_plus[(0, 0)] = d;
        v.beta_minus[(0, 0)] = d;
        let projected = project_feasible(&p, &v);
        assert!((projected.beta_plus[(0, 0)] - d / 2.0).abs() < 1e-15);
        assert!((projected.beta_minus[(0, 0)] - d / 2.0).abs() < 1e-15);
    }

    #[test]
    fn projection_idempotent_and_nonexpansive() {
        let p = random_problem(23);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let anchor = p.random_feasible(&mut rng);
        for _ in 0..100 {
            let mut raw = DualVariables::zeros(p.n(), p.q());
            for m in [
                &mut raw.alpha,
                &mut raw.alpha_star,
                &mut raw.beta_plus,
                &mut raw.beta_minus,
            ] {
                m.apply(|v| *v = rng.random_range(-2.0..2.0));
            }
            let once = project_feasible(&p, &raw);
            let twice = project_feasible(&p, &once);
            assert_eq!(once, twice, "projection not idempotent");
            assert!(p.max_infeasibility(&once) <= 1e-12);

            let dist =
                |a: &DualVariables, b: &DualVariables| a.direction_to(b).dot(&a.direction_to(b));
            assert!(dist(&once, &anchor) <= dist(&raw, &anchor) + 1e-12);
        }
    }

    #[test]
    fn pg_returns_zero_on_pinned_problem() {
        // All-degenerate label sets with D = 0 leave no free variables.
        let mut instances = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..3 {
            let x: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let labels = if i % 2 == 0 {
                LabelSet::empty(2)
            } else {
                LabelSet::new(2, [0, 1]).unwrap()
            };
            instances.push(Instance::new(x.clone(), Some(x), labels));
        }
        let ds = MultiLabelDataset::new(instances, 2).unwrap();
        let gram = compute_gram(&ds, &KernelSpec::linear(), Some(&KernelSpec::linear())).unwrap();
        let labels: Vec<LabelSet> = ds.instances().iter().map(|i| i.labels().clone()).collect();
        let cfg = TrainConfig {
            d: 0.0,
            ..TrainConfig::default()
        };
        let p = DualProblem::new(gram, &labels, cfg).unwrap();
        let (v, obj) = pg_solve(
            &p,
            &OracleConfig {
                iters: 100,
                ..OracleConfig::default()
            },
        );
        assert_eq!(obj, 0.0);
        assert!(v.alpha.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pg_checkpoints_monotone() {
        let p = random_problem(24);
        let res = pg_solve_full(
            &p,
            &OracleConfig {
                iters: 20_000,
                ..OracleConfig::default()
            },
        );
        for w in res.checkpoints.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "checkpoint decreased: {w:?}");
        }
        assert!(p.max_infeasibility(&res.variables) <= 1e-12);
    }

    #[test]
    fn paranoid_mode_agrees_with_analytic_mode() {
        let p = random_problem(25);
        let normal = pg_solve(
            &p,
            &OracleConfig {
                iters: 2_000,
                ..OracleConfig::default()
            },
        );
        let paranoid = pg_solve(
            &p,
            &OracleConfig {
                iters: 2_000,
                paranoid: true,
                ..OracleConfig::default()
            },
        );
        let denom = normal.1.abs().max(1.0);
        assert!((normal.1 - paranoid.1).abs() / denom < 1e-6);
    }
}
