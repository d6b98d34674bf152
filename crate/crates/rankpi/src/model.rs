//! Trained models: decision values, label-size prediction, final label
//! assignment, training orchestration for all four variants, primal slack
//! diagnostics, and persistence.
//!
//! A trained model keeps only available-space quantities: the dual
//! expansion coefficients `g` per label, the retained training feature
//! rows, the available-space kernel spec, and the label-size regressor.
//! Privileged data shapes `g` during training but is never stored.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::{LabelSet, MultiLabelDataset};
use crate::dual::{DualProblem, TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::kernel::{compute_gram, kernel_eval, GramPair, KernelSpec};
use crate::solver::{solve, SolveReport};

/// Ridge penalty used for the label-size regressor.
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;

/// Support rows are kept when any of their `g` entries exceeds this.
const SUPPORT_THRESHOLD: f64 = 1e-10;

const MODEL_MAGIC: &str = "rankpi-model v1";

/// Ridge regressor mapping available features to the number of present
/// labels, with an unpenalized intercept. Predictions are rounded half-up
/// and clamped into `[1, q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSizePredictor {
    /// `d` feature weights followed by the intercept.
    weights: Vec<f64>,
    ridge_lambda: f64,
    q: usize,
}

/// Fit the label-size regressor by solving the normal equations
/// `(X'X + lambda I) w = X'y` with the intercept column unpenalized.
pub fn train_size_predictor(
    features: &DMatrix<f64>,
    counts: &[f64],
    lambda: f64,
    q: usize,
) -> Result<LabelSizePredictor> {
    let n = features.nrows();
    let d = features.ncols();
    if n == 0 {
        return Err(Error::Data("size predictor: empty training set".into()));
    }
    if counts.len() != n {
        return Err(Error::Data(format!(
            "size predictor: {n} feature rows vs {} counts",
            counts.len()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParam("ridge lambda must be positive".into()));
    }

    // Augmented design [X 1].
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j < d { features[(i, j)] } else { 1.0 });
    let mut normal = design.transpose() * &design;
    for j in 0..d {
        normal[(j, j)] += lambda;
    }
    let target = DVector::from_row_slice(counts);
    let rhs = design.transpose() * target;
    let solution = normal
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .or_else(|| normal.lu().solve(&rhs))
        .ok_or_else(|| Error::Numerical("size predictor normal equations singular".into()))?;

    Ok(LabelSizePredictor {
        weights: solution.iter().copied().collect(),
        ridge_lambda: lambda,
        q,
    })
}

impl LabelSizePredictor {
    /// Raw regression output before rounding.
    pub fn raw(&self, x: &[f64]) -> Result<f64> {
        let d = self.weights.len() - 1;
        if x.len() != d {
            return Err(Error::Data(format!(
                "size predictor dimension mismatch: expected {d}, got {}",
                x.len()
            )));
        }
        let mut out = self.weights[d];
        for (w, v) in self.weights[..d].iter().zip(x) {
            out += w * v;
        }
        Ok(out)
    }

    /// Predicted label-set size: round half-up, clamp into `[1, q]`.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(clamp_size(self.raw(x)?, self.q))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }
}

fn clamp_size(raw: f64, q: usize) -> usize {
    let rounded = (raw + 0.5).floor();
    if rounded < 1.0 {
        1
    } else if rounded > q as f64 {
        q
    } else {
        rounded as usize
    }
}

/// Training-set slack diagnostics evaluated at the recovered solution.
///
/// Ranking slacks measure how far each (present, absent) pair is from the
/// unit margin; similarity slacks measure how far the two score functions
/// drift beyond the epsilon tolerance. The primal objective combines the
/// regularizers `1/2 g' K g` with the weighted slack sums; it is a
/// diagnostic bridge to the primal formulation, not a solver quantity.
#[derive(Debug, Clone)]
pub struct SlackReport {
    /// `max(0, 1 - (f_j - f_l))` over every ranking pair, available space.
    pub ranking: Vec<f64>,
    /// Same in the privileged space; empty without privileged training.
    pub ranking_star: Vec<f64>,
    /// `max(0, |f_k - f*_k| - epsilon)` per (instance, label); empty
    /// without privileged training.
    pub similarity: Vec<f64>,
    pub primal_objective: f64,
}

impl SlackReport {
    pub fn max_ranking(&self) -> f64 {
        self.ranking.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean_ranking(&self) -> f64 {
        if self.ranking.is_empty() {
            0.0
        } else {
            self.ranking.iter().sum::<f64>() / self.ranking.len() as f64
        }
    }

    pub fn max_similarity(&self) -> f64 {
        self.similarity.iter().cloned().fold(0.0, f64::max)
    }

    pub fn render_summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "ranking slacks: {} (max {:.6}, mean {:.6})",
            self.ranking.len(),
            self.max_ranking(),
            self.mean_ranking()
        );
        if !self.similarity.is_empty() {
            let _ = writeln!(
                out,
                "similarity slacks: {} (max {:.6})",
                self.similarity.len(),
                self.max_similarity()
            );
        }
        let _ = writeln!(out, "primal objective: {:.9e}", self.primal_objective);
        out
    }
}

/// Kernelized multi-label ranking model over available features.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    /// Dual expansion coefficients, one row per retained support vector.
    g: DMatrix<f64>,
    /// Retained training rows (available features), aligned with `g`.
    support_features: DMatrix<f64>,
    kernel_spec: KernelSpec,
    q: usize,
    size_predictor: LabelSizePredictor,
    variant: Variant,
    train_config: TrainConfig,
}

impl TrainedModel {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn d(&self) -> usize {
        self.support_features.ncols()
    }

    pub fn n_support(&self) -> usize {
        self.support_features.nrows()
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn kernel_spec(&self) -> &KernelSpec {
        &self.kernel_spec
    }

    pub fn size_predictor(&self) -> &LabelSizePredictor {
        &self.size_predictor
    }

    /// Hyperparameters the model was trained with (provenance only; not
    /// persisted in model files).
    pub fn train_config(&self) -> &TrainConfig {
        &self.train_config
    }

    /// Per-label scores `f_k(x) = sum_i g_ik k(x_i, x)`.
    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d() {
            return Err(Error::Data(format!(
                "decision_values dimension mismatch: expected {}, got {}",
                self.d(),
                x.len()
            )));
        }
        let mut scores = vec![0.0; self.q];
        for i in 0..self.n_support() {
            let row: Vec<f64> = self.support_features.row(i).iter().copied().collect();
            let kv = kernel_eval(&self.kernel_spec, &row, x)?;
            for (k, score) in scores.iter_mut().enumerate() {
                *score += self.g[(i, k)] * kv;
            }
        }
        Ok(scores)
    }

    /// Predicted label set: the top-psi labels by decision value, with
    /// psi from the size predictor and ties broken toward lower indices.
    pub fn predict(&self, x: &[f64]) -> Result<LabelSet> {
        let scores = self.decision_values(x)?;
        let psi = self.size_predictor.predict(x)?;
        Ok(top_labels(&scores, psi))
    }

    /// Predict every instance of a dataset from its available features.
    pub fn predict_dataset(&self, ds: &MultiLabelDataset) -> Result<Vec<LabelSet>> {
        ds.instances()
            .iter()
            .map(|inst| self.predict(inst.x()))
            .collect()
    }
}

/// Select the `psi` highest-scoring labels (ties toward lower index).
fn top_labels(scores: &[f64], psi: usize) -> LabelSet {
    let q = scores.len();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    LabelSet::new(q, order.into_iter().take(psi.min(q))).expect("indices in range")
}

/// Everything produced by one training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub solve: SolveReport,
    pub slacks: SlackReport,
}

fn merge_reports(avail: SolveReport, privileged: SolveReport) -> SolveReport {
    let mut gap_history = avail.gap_history;
    gap_history.extend(privileged.gap_history);
    let mut objective_history = avail.objective_history;
    objective_history.extend(privileged.objective_history);
    SolveReport {
        iterations: avail.iterations + privileged.iterations,
        final_objective: avail.final_objective + privileged.final_objective,
        final_gap: avail.final_gap.max(privileged.final_gap),
        gap_history,
        objective_history,
        converged: avail.converged && privileged.converged,
        wall_time: avail.wall_time + privileged.wall_time,
    }
}

/// Train a model on a dataset.
///
/// Solver non-convergence is reported through the returned
/// [`SolveReport`], not as an error. Requesting a privileged variant on a
/// dataset without privileged features is an error.
///
/// With `D = 0` the similarity multipliers are pinned and the dual splits
/// into independent available/privileged blocks; they are solved
/// separately, which makes the available-side solution identical to the
/// corresponding unprivileged variant's.
pub fn train(
    ds: &MultiLabelDataset,
    cfg: &TrainConfig,
    kernel_avail: &KernelSpec,
    kernel_priv: Option<&KernelSpec>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    kernel_avail.validate()?;
    let variant = cfg.variant;
    if variant.uses_privileged() && !ds.has_privileged() {
        return Err(Error::Data(format!(
            "variant '{variant}' requires privileged features, but the dataset has none"
        )));
    }

    let priv_spec = if variant.uses_privileged() {
        Some(kernel_priv.copied().unwrap_or_else(KernelSpec::linear))
    } else {
        None
    };
    let gram = compute_gram(ds, kernel_avail, priv_spec.as_ref())?;
    let labels: Vec<LabelSet> = ds.instances().iter().map(|i| i.labels().clone()).collect();

    let (g, g_star, report) = if variant.uses_privileged() && cfg.d == 0.0 {
        solve_decoupled(&gram, &labels, cfg)?
    } else {
        let problem = DualProblem::new(gram.clone(), &labels, *cfg)?;
        let (v, report) = solve(&problem, cfg)?;
        let (g, g_star) = problem.g_vars(&v);
        (g, g_star, report)
    };

    let slacks = compute_slacks(ds, &gram, &g, &g_star, cfg);

    let support: Vec<usize> = (0..ds.n())
        .filter(|&i| (0..ds.q()).any(|k| g[(i, k)].abs() > SUPPORT_THRESHOLD))
        .collect();
    let sv_g = DMatrix::from_fn(support.len(), ds.q(), |r, k| g[(support[r], k)]);
    let sv_x = DMatrix::from_fn(support.len(), ds.d(), |r, j| {
        ds.instance(support[r]).x()[j]
    });

    let size_predictor = train_size_predictor(
        &ds.features(),
        &ds.label_counts(),
        DEFAULT_RIDGE_LAMBDA,
        ds.q(),
    )?;

    let model = TrainedModel {
        g: sv_g,
        support_features: sv_x,
        kernel_spec: *kernel_avail,
        q: ds.q(),
        size_predictor,
        variant,
        train_config: *cfg,
    };
    Ok(TrainOutcome {
        model,
        solve: report,
        slacks,
    })
}

/// Solve the two independent blocks that remain when `D = 0`.
fn solve_decoupled(
    gram: &GramPair,
    labels: &[LabelSet],
    cfg: &TrainConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>, SolveReport)> {
    let reduced = match cfg.variant {
        Variant::Full => Variant::RankingOnly,
        Variant::SimilarityOnly => Variant::BinaryRelevance,
        v => v,
    };
    let avail_gram = GramPair {
        k: gram.k.clone(),
        k_star: None,
        spec: gram.spec,
        spec_star: None,
    };
    let avail_cfg = TrainConfig {
        variant: reduced,
        d: 0.0,
        ..*cfg
    };
    let avail_problem = DualProblem::new(avail_gram, labels, avail_cfg)?;
    let (va, ra) = solve(&avail_problem, &avail_cfg)?;
    let (g, _) = avail_problem.g_vars(&va);

    let priv_gram = GramPair {
        k: gram.k_star.clone().expect("privileged variant has K*"),
        k_star: None,
        spec: gram.spec_star.expect("privileged variant has spec*"),
        spec_star: None,
    };
    let priv_cfg = TrainConfig {
        variant: reduced,
        c: cfg.c_star,
        d: 0.0,
        ..*cfg
    };
    let priv_problem = DualProblem::new(priv_gram, labels, priv_cfg)?;
    let (vp, rp) = solve(&priv_problem, &priv_cfg)?;
    let (g_star, _) = priv_problem.g_vars(&vp);

    Ok((g, g_star, merge_reports(ra, rp)))
}

fn compute_slacks(
    ds: &MultiLabelDataset,
    gram: &GramPair,
    g: &DMatrix<f64>,
    g_star: &DMatrix<f64>,
    cfg: &TrainConfig,
) -> SlackReport {
    let f = &gram.k * g;
    let f_star = gram.k_star.as_ref().map(|ks| ks * g_star);

    let mut ranking = Vec::new();
    let mut ranking_star = Vec::new();
    let mut weighted = 0.0;
    let mut weighted_star = 0.0;
    for i in 0..ds.n() {
        let labels = ds.labels(i);
        let pairs = ds.ranking_pairs(i);
        if pairs.is_empty() {
            continue;
        }
        let weight = 1.0 / (labels.len() as f64 * labels.absent_len() as f64);
        for p in &pairs {
            let slack = (1.0 - (f[(i, p.j)] - f[(i, p.l)])).max(0.0);
            ranking.push(slack);
            weighted += weight * slack;
            if let Some(fs) = &f_star {
                let slack_star = (1.0 - (fs[(i, p.j)] - fs[(i, p.l)])).max(0.0);
                ranking_star.push(slack_star);
                weighted_star += weight * slack_star;
            }
        }
    }

    let mut similarity = Vec::new();
    let mut similarity_sum = 0.0;
    if let Some(fs) = &f_star {
        for i in 0..ds.n() {
            for k in 0..ds.q() {
                let eta = ((f[(i, k)] - fs[(i, k)]).abs() - cfg.epsilon).max(0.0);
                similarity.push(eta);
                similarity_sum += eta;
            }
        }
    }

    let mut primal = 0.5 * g.dot(&f) + cfg.c * weighted;
    if let Some(fs) = &f_star {
        primal += 0.5 * g_star.dot(fs) + cfg.c_star * weighted_star + cfg.d * similarity_sum;
    }

    SlackReport {
        ranking,
        ranking_star,
        similarity,
        primal_objective: primal,
    }
}

/// FNV-1a 64-bit hash of a byte string; used as the model-file checksum.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn push_floats(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        let _ = write!(out, " {v:.16e}");
    }
}

/// Serialize a model to its line-oriented text form.
pub fn format_model(model: &TrainedModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_MAGIC}");
    let _ = writeln!(out, "variant {}", model.variant.tag());
    let _ = writeln!(out, "q {}", model.q);
    let _ = writeln!(out, "{}", model.kernel_spec.format_line("avail"));
    let mut sp = String::new();
    let _ = write!(sp, "size_predictor {:.16e}", model.size_predictor.ridge_lambda);
    push_floats(&mut sp, model.size_predictor.weights.iter().copied());
    let _ = writeln!(out, "{sp}");
    let _ = writeln!(out, "sv {} {}", model.n_support(), model.d());
    for i in 0..model.n_support() {
        let mut line = String::from("row");
        push_floats(&mut line, model.support_features.row(i).iter().copied());
        line.push_str(" g");
        push_floats(&mut line, model.g.row(i).iter().copied());
        let _ = writeln!(out, "{line}");
    }
    let checksum = fnv1a64(out.as_bytes());
    let _ = writeln!(out, "end {checksum:016x}");
    out
}

/// Write a model file (decimal text, 17 significant digits per float;
/// decision values survive a round trip to well below 1e-12).
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, format_model(model))?;
    Ok(())
}

fn parse_floats(
    tokens: &mut std::str::SplitWhitespace,
    count: usize,
    what: &str,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::Model(format!("truncated {what}")))?;
        out.push(
            tok.parse()
                .map_err(|_| Error::Model(format!("malformed float '{tok}' in {what}")))?,
        );
    }
    Ok(out)
}

/// Parse a model from its text form. See [`load_model`].
pub fn parse_model(text: &str) -> Result<TrainedModel> {
    // Verify the checksum first: it covers everything before the final
    // `end` line.
    let end_pos = text
        .trim_end_matches('\n')
        .rfind("\nend ")
        .map(|p| p + 1)
        .or_else(|| text.starts_with("end ").then_some(0))
        .ok_or_else(|| Error::Model("truncated model file (missing end line)".into()))?;
    let body = &text[..end_pos];
    let end_line = text[end_pos..].trim_end();
    let stored = end_line
        .strip_prefix("end ")
        .ok_or_else(|| Error::Model("truncated model file (missing end line)".into()))?;
    let stored: u64 = u64::from_str_radix(stored.trim(), 16)
        .map_err(|_| Error::Model("malformed checksum".into()))?;
    let actual = fnv1a64(body.as_bytes());
    if stored != actual {
        return Err(Error::Model(format!(
            "checksum failure: stored {stored:016x}, computed {actual:016x}"
        )));
    }

    let mut lines = body.lines();
    let magic = lines
        .next()
        .ok_or_else(|| Error::Model("unrecognized model file".into()))?;
    if magic != MODEL_MAGIC {
        if magic.starts_with("rankpi-model") {
            return Err(Error::Model(format!(
                "model version mismatch: expected '{MODEL_MAGIC}', found '{magic}'"
            )));
        }
        return Err(Error::Model("unrecognized model file".into()));
    }

    let mut expect = |prefix: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Model(format!("truncated model file (missing {prefix})")))?;
        line.strip_prefix(prefix)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| Error::Model(format!("expected '{prefix}...' line, found '{line}'")))
    };

    let variant =
        Variant::parse(&expect("variant ")?).map_err(|e| Error::Model(e.to_string()))?;
    let q: usize = expect("q ")?
        .parse()
        .map_err(|_| Error::Model("malformed q line".into()))?;

    let kernel_body = expect("kernel ")?;
    let (space, kernel_spec) = KernelSpec::parse_line(&kernel_body)?;
    if space != "avail" {
        return Err(Error::Model(format!(
            "expected available-space kernel, found '{space}'"
        )));
    }

    let sp_line = expect("size_predictor ")?;
    let mut sp_tokens = sp_line.split_whitespace();
    let lambda: f64 = sp_tokens
        .next()
        .ok_or_else(|| Error::Model("truncated size_predictor line".into()))?
        .parse()
        .map_err(|_| Error::Model("malformed size_predictor lambda".into()))?;
    let weights: Vec<f64> = sp_tokens
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Model(format!("malformed size_predictor weight '{t}'")))
        })
        .collect::<Result<_>>()?;
    if weights.is_empty() {
        return Err(Error::Model("size_predictor has no weights".into()));
    }

    let sv_line = expect("sv ")?;
    let mut sv_tokens = sv_line.split_whitespace();
    let count: usize = sv_tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Model("malformed sv line".into()))?;
    let d: usize = sv_tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Model("malformed sv line".into()))?;
    if weights.len() != d + 1 {
        return Err(Error::Model(format!(
            "size_predictor has {} weights, expected {}",
            weights.len(),
            d + 1
        )));
    }

    let mut support = DMatrix::zeros(count, d);
    let mut g = DMatrix::zeros(count, q);
    for r in 0..count {
        let line = lines.next().ok_or_else(|| {
            Error::Model(format!("truncated model file ({count} rows expected)"))
        })?;
        let rest = line
            .strip_prefix("row")
            .ok_or_else(|| Error::Model(format!("expected 'row ...' line, found '{line}'")))?;
        let mut tokens = rest.split_whitespace();
        let features = parse_floats(&mut tokens, d, "support row")?;
        match tokens.next() {
            Some("g") => {}
            _ => return Err(Error::Model("support row missing 'g' separator".into())),
        }
        let coeffs = parse_floats(&mut tokens, q, "support row coefficients")?;
        if tokens.next().is_some() {
            return Err(Error::Model("trailing tokens on support row".into()));
        }
        for j in 0..d {
            support[(r, j)] = features[j];
        }
        for k in 0..q {
            g[(r, k)] = coeffs[k];
        }
    }
    if lines.next().is_some() {
        return Err(Error::Model("unexpected content after support rows".into()));
    }

    Ok(TrainedModel {
        g,
        support_features: support,
        kernel_spec,
        q,
        size_predictor: LabelSizePredictor {
            weights,
            ridge_lambda: lambda,
            q,
        },
        variant,
        // Hyperparameters are not part of the file format; only the
        // variant tag is retained.
        train_config: TrainConfig {
            variant,
            ..TrainConfig::default()
        },
    })
}

/// Load a model file written by [`save_model`].
pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}
