//! The dual quadratic program: variable layout, coefficient algebra,
//! objective value, and gradient.
//!
//! For every (instance, label) pair the dual carries four multipliers:
//! `alpha` (ranking, available space), `alpha_star` (ranking, privileged
//! space) and the pair `beta_plus`/`beta_minus` (the two sides of the
//! similarity constraint). Writing `E_ik` for the signed pair-sum
//! coefficient and `B = beta_plus - beta_minus`, the expansion coefficients
//! of the two score functions are
//!
//! ```text
//! g_ik      = alpha_ik      * E_ik - B_ik
//! g_star_ik = alpha_star_ik * E_ik + B_ik
//! ```
//!
//! and the objective to maximize is
//!
//! ```text
//! -1/2 sum_k (g_k' K g_k + g*_k' K* g*_k)
//!   + sum_{i,k} M_ik (alpha_ik + alpha_star_ik)
//!   - epsilon * sum_{i,k} (beta_plus_ik + beta_minus_ik)
//! ```
//!
//! with `K`, `K*` bias-augmented Gram matrices. Bias absorption replaces
//! the equality constraints `sum_i g_ik = sum_i g*_ik = 0` that a free bias
//! would impose, so the feasible set is a product of per-(i,k) boxes
//! (`alpha` in `[0, C/(|Y_i||Ybar_i|)]`, similarly `alpha_star`) and
//! triangles (`beta_plus, beta_minus >= 0`, `beta_plus + beta_minus <= D`).
//! Instances with empty or full label sets have no ranking pairs; their
//! `alpha` multipliers are pinned to zero while their `beta` pair stays
//! free.

use nalgebra::DMatrix;
use rand::Rng;

use crate::data::LabelSet;
use crate::error::{Error, Result};
use crate::kernel::GramPair;

/// Solver configuration selecting which constraint families are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Independent per-label hinge classifiers ("SVM").
    BinaryRelevance,
    /// Ranking constraints only, no privileged terms ("SVM+ML").
    RankingOnly,
    /// Per-label hinge plus privileged similarity coupling ("SVM+PI").
    SimilarityOnly,
    /// Ranking constraints plus privileged similarity coupling ("Ours").
    Full,
}

impl Variant {
    pub fn tag(&self) -> &'static str {
        match self {
            Variant::BinaryRelevance => "br",
            Variant::RankingOnly => "ml",
            Variant::SimilarityOnly => "pi",
            Variant::Full => "full",
        }
    }

    /// Column header used in ablation tables.
    pub fn table_name(&self) -> &'static str {
        match self {
            Variant::BinaryRelevance => "SVM",
            Variant::RankingOnly => "SVM+ML",
            Variant::SimilarityOnly => "SVM+PI",
            Variant::Full => "Ours",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "br" | "binary_relevance" => Ok(Variant::BinaryRelevance),
            "ml" | "ranking_only" => Ok(Variant::RankingOnly),
            "pi" | "similarity_only" => Ok(Variant::SimilarityOnly),
            "full" => Ok(Variant::Full),
            other => Err(Error::InvalidParam(format!("unknown variant '{other}'"))),
        }
    }

    /// Does training require privileged features?
    pub fn uses_privileged(&self) -> bool {
        matches!(self, Variant::SimilarityOnly | Variant::Full)
    }

    /// Ranking constraints (vs per-label hinge)?
    pub fn uses_ranking(&self) -> bool {
        matches!(self, Variant::RankingOnly | Variant::Full)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Weight of the available-space slack term.
    pub c: f64,
    /// Weight of the privileged-space slack term.
    pub c_star: f64,
    /// Weight of the similarity slack term; bounds `beta_plus + beta_minus`.
    pub d: f64,
    /// Similarity tolerance inside `|f - f*| <= eta + epsilon`.
    pub epsilon: f64,
    /// Relative duality-gap stopping tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            c_star: 1.0,
            d: 1.0,
            epsilon: 0.1,
            tol: 1e-5,
            max_iter: 10_000,
            variant: Variant::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::InvalidParam(format!("C must be positive, got {}", self.c)));
        }
        if !(self.c_star > 0.0) {
            return Err(Error::InvalidParam(format!(
                "Cstar must be positive, got {}",
                self.c_star
            )));
        }
        if !(self.d >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "D must be nonnegative, got {}",
                self.d
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParam(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParam("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// The four dual multiplier blocks, each an `n x q` matrix.
///
/// The same layout doubles as the container for gradients and search
/// directions, whose entries may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVariables {
    pub alpha: DMatrix<f64>,
    pub alpha_star: DMatrix<f64>,
    pub beta_plus: DMatrix<f64>,
    pub beta_minus: DMatrix<f64>,
}

impl DualVariables {
    pub fn zeros(n: usize, q: usize) -> Self {
        DualVariables {
            alpha: DMatrix::zeros(n, q),
            alpha_star: DMatrix::zeros(n, q),
            beta_plus: DMatrix::zeros(n, q),
            beta_minus: DMatrix::zeros(n, q),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.alpha.shape()
    }

    /// Inner product over all four blocks.
    pub fn dot(&self, other: &DualVariables) -> f64 {
        self.alpha.dot(&other.alpha)
            + self.alpha_star.dot(&other.alpha_star)
            + self.beta_plus.dot(&other.beta_plus)
            + self.beta_minus.dot(&other.beta_minus)
    }

    /// Block-wise `other - self`.
    pub fn direction_to(&self, other: &DualVariables) -> DualVariables {
        DualVariables {
            alpha: &other.alpha - &self.alpha,
            alpha_star: &other.alpha_star - &self.alpha_star,
            beta_plus: &other.beta_plus - &self.beta_plus,
            beta_minus: &other.beta_minus - &self.beta_minus,
        }
    }

    /// Convex step `self <- self + gamma * (vertex - self)`.
    pub fn step_toward(&mut self, vertex: &DualVariables, gamma: f64) {
        let blend = |cur: &mut DMatrix<f64>, v: &DMatrix<f64>| {
            cur.zip_apply(v, |c, t| *c += gamma * (t - *c));
        };
        blend(&mut self.alpha, &vertex.alpha);
        blend(&mut self.alpha_star, &vertex.alpha_star);
        blend(&mut self.beta_plus, &vertex.beta_plus);
        blend(&mut self.beta_minus, &vertex.beta_minus);
    }

    pub fn is_finite(&self) -> bool {
        [&self.alpha, &self.alpha_star, &self.beta_plus, &self.beta_minus]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
    }
}

/// Gradient of the dual objective; same block layout as the variables.
pub type DualGradient = DualVariables;

/// Signed indicator of label `k` within ranking pair `(j, l)`:
/// `+1` when `k` is the pair's present label, `-1` when it is the absent
/// label, `0` otherwise.
pub fn e_coeff(j: usize, l: usize, k: usize) -> i32 {
    if k == j {
        1
    } else if k == l {
        -1
    } else {
        0
    }
}

/// Sum of [`e_coeff`] over all ranking pairs of an instance, in closed form:
/// `|Ybar|` for present `k`, `-|Y|` for absent `k`, and `0` when the
/// instance has no ranking pairs at all.
pub fn e_sum(labels: &LabelSet, k: usize) -> i64 {
    let y = labels.len();
    let ybar = labels.absent_len();
    if y == 0 || ybar == 0 {
        return 0;
    }
    if labels.contains(k) {
        ybar as i64
    } else {
        -(y as i64)
    }
}

/// Assembled dual QP for one training run.
#[derive(Debug, Clone)]
pub struct DualProblem {
    gram: GramPair,
    config: TrainConfig,
    labels: Vec<LabelSet>,
    n: usize,
    q: usize,
    /// Linear objective coefficient per (i, k).
    m: DMatrix<f64>,
    /// Multiplier of `alpha` inside `g` per (i, k): the pair-sum `E_ik`
    /// for ranking variants, the label sign for hinge variants.
    alpha_coeff: DMatrix<f64>,
    alpha_bound: DMatrix<f64>,
    alpha_star_bound: DMatrix<f64>,
    has_priv: bool,
    has_beta: bool,
}

impl DualProblem {
    pub fn new(gram: GramPair, labels: &[LabelSet], config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let n = gram.k.nrows();
        if labels.len() != n {
            return Err(Error::Data(format!(
                "gram is {n}x{n} but {} label sets were given",
                labels.len()
            )));
        }
        if n == 0 {
            return Err(Error::Data("empty problem".into()));
        }
        let q = labels[0].q();
        if labels.iter().any(|l| l.q() != q) {
            return Err(Error::Data("inconsistent label universe".into()));
        }

        let variant = config.variant;
        let has_priv = variant.uses_privileged();
        let has_beta = variant.uses_privileged();
        if has_priv && gram.k_star.is_none() {
            return Err(Error::Data(format!(
                "variant '{variant}' requires a privileged Gram matrix"
            )));
        }

        let mut m = DMatrix::zeros(n, q);
        let mut alpha_coeff = DMatrix::zeros(n, q);
        let mut alpha_bound = DMatrix::zeros(n, q);
        let mut alpha_star_bound = DMatrix::zeros(n, q);
        for i in 0..n {
            let li = &labels[i];
            let y = li.len();
            let ybar = li.absent_len();
            for k in 0..q {
                if variant.uses_ranking() {
                    m[(i, k)] = if li.contains(k) { y as f64 } else { ybar as f64 };
                    alpha_coeff[(i, k)] = e_sum(li, k) as f64;
                    // Degenerate instances (no ranking pairs) keep their
                    // multipliers pinned at zero: the box bound
                    // C/(|Y||Ybar|) is undefined there.
                    let bound = if y == 0 || ybar == 0 {
                        0.0
                    } else {
                        1.0 / (y as f64 * ybar as f64)
                    };
                    alpha_bound[(i, k)] = config.c * bound;
                    if has_priv {
                        alpha_star_bound[(i, k)] = config.c_star * bound;
                    }
                } else {
                    m[(i, k)] = 1.0;
                    alpha_coeff[(i, k)] = if li.contains(k) { 1.0 } else { -1.0 };
                    alpha_bound[(i, k)] = config.c;
                    if has_priv {
                        alpha_star_bound[(i, k)] = config.c_star;
                    }
                }
            }
        }

        Ok(DualProblem {
            gram,
            config,
            labels: labels.to_vec(),
            n,
            q,
            m,
            alpha_coeff,
            alpha_bound,
            alpha_star_bound,
            has_priv,
            has_beta,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn gram(&self) -> &GramPair {
        &self.gram
    }

    pub fn labels(&self) -> &[LabelSet] {
        &self.labels
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn alpha_coeff(&self) -> &DMatrix<f64> {
        &self.alpha_coeff
    }

    pub fn alpha_bound(&self) -> &DMatrix<f64> {
        &self.alpha_bound
    }

    pub fn alpha_star_bound(&self) -> &DMatrix<f64> {
        &self.alpha_star_bound
    }

    pub fn has_privileged(&self) -> bool {
        self.has_priv
    }

    pub fn has_beta(&self) -> bool {
        self.has_beta
    }

    /// Upper bound for `beta_plus + beta_minus`; zero when the variant has
    /// no similarity coupling.
    pub fn beta_bound(&self) -> f64 {
        if self.has_beta {
            self.config.d
        } else {
            0.0
        }
    }

    /// Expansion coefficients `g` (available) and `g_star` (privileged),
    /// both `n x q`. Linear in the variables.
    pub fn g_vars(&self, v: &DualVariables) -> (DMatrix<f64>, DMatrix<f64>) {
        let b = &v.beta_plus - &v.beta_minus;
        let g = v.alpha.component_mul(&self.alpha_coeff) - &b;
        let g_star = if self.has_priv {
            v.alpha_star.component_mul(&self.alpha_coeff) + b
        } else {
            DMatrix::zeros(self.n, self.q)
        };
        (g, g_star)
    }

    /// Kernel-smoothed coefficients `s = K g`, `s* = K* g*`.
    pub fn smoothed(&self, g: &DMatrix<f64>, g_star: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let s = &self.gram.k * g;
        let s_star = match (&self.gram.k_star, self.has_priv) {
            (Some(ks), true) => ks * g_star,
            _ => DMatrix::zeros(self.n, self.q),
        };
        (s, s_star)
    }

    /// Dual objective value at `v`.
    pub fn objective(&self, v: &DualVariables) -> f64 {
        let (g, g_star) = self.g_vars(v);
        let (s, s_star) = self.smoothed(&g, &g_star);
        self.objective_from_parts(v, &g, &g_star, &s, &s_star)
    }

    /// Objective from precomputed `g`, `g*`, `s`, `s*`.
    pub fn objective_from_parts(
        &self,
        v: &DualVariables,
        g: &DMatrix<f64>,
        g_star: &DMatrix<f64>,
        s: &DMatrix<f64>,
        s_star: &DMatrix<f64>,
    ) -> f64 {
        let quad = -0.5 * (g.dot(s) + g_star.dot(s_star));
        let linear = self.m.dot(&v.alpha) + self.m.dot(&v.alpha_star);
        let eps_term = self.config.epsilon * (v.beta_plus.sum() + v.beta_minus.sum());
        quad + linear - eps_term
    }

    /// Gradient of the dual objective at `v`.
    pub fn gradient(&self, v: &DualVariables) -> DualGradient {
        let (g, g_star) = self.g_vars(v);
        let (s, s_star) = self.smoothed(&g, &g_star);
        self.gradient_from_smoothed(&s, &s_star)
    }

    /// Gradient from precomputed `s`, `s*`. With `E` the alpha coefficient
    /// matrix and `eps` the similarity tolerance:
    ///
    /// ```text
    /// d/d alpha      = M - E .* s
    /// d/d alpha_star = M - E .* s*
    /// d/d beta_plus  =  (s - s*) - eps
    /// d/d beta_minus = -(s - s*) - eps
    /// ```
    pub fn gradient_from_smoothed(&self, s: &DMatrix<f64>, s_star: &DMatrix<f64>) -> DualGradient {
        let eps = self.config.epsilon;
        let alpha = &self.m - self.alpha_coeff.component_mul(s);
        let alpha_star = &self.m - self.alpha_coeff.component_mul(s_star);
        let diff = s - s_star;
        let beta_plus = diff.map(|v| v - eps);
        let beta_minus = diff.map(|v| -v - eps);
        DualVariables {
            alpha,
            alpha_star,
            beta_plus,
            beta_minus,
        }
    }

    /// Curvature `d' H d` of the objective along a direction, computed as
    /// two quadratic-form evaluations. Nonpositive for PSD Gram matrices.
    pub fn direction_curvature(&self, d: &DualVariables) -> f64 {
        let (gd, gd_star) = self.g_vars(d);
        let (sd, sd_star) = self.smoothed(&gd, &gd_star);
        -(gd.dot(&sd) + gd_star.dot(&sd_star))
    }

    /// Largest constraint violation of `v` (0 when feasible).
    pub fn max_infeasibility(&self, v: &DualVariables) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for k in 0..self.q {
                let a = v.alpha[(i, k)];
                worst = worst.max(-a).max(a - self.alpha_bound[(i, k)]);
                let astar = v.alpha_star[(i, k)];
                worst = worst.max(-astar).max(astar - self.alpha_star_bound[(i, k)]);
                let bp = v.beta_plus[(i, k)];
                let bm = v.beta_minus[(i, k)];
                worst = worst.max(-bp).max(-bm).max(bp + bm - self.beta_bound());
            }
        }
        worst
    }

    /// Uniform draw from the feasible set (test utility).
    pub fn random_feasible(&self, rng: &mut impl Rng) -> DualVariables {
        let mut v = DualVariables::zeros(self.n, self.q);
        let d_bound = self.beta_bound();
        for i in 0..self.n {
            for k in 0..self.q {
                v.alpha[(i, k)] = rng.random_range(0.0..=1.0) * self.alpha_bound[(i, k)];
                v.alpha_star[(i, k)] =
                    rng.random_range(0.0..=1.0) * self.alpha_star_bound[(i, k)];
                if d_bound > 0.0 {
                    let bp = rng.random_range(0.0..=1.0) * d_bound;
                    let bm = rng.random_range(0.0..=1.0) * (d_bound - bp);
                    v.beta_plus[(i, k)] = bp;
                    v.beta_minus[(i, k)] = bm;
                }
            }
        }
        v
    }
}
