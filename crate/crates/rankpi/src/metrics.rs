//! Example-based multi-label metrics and per-label F-measure.
//!
//! Example-based accuracy is the Jaccard overlap `|Y ∩ Z| / |Y ∪ Z|`,
//! example-based F-measure the Dice overlap `2|Y ∩ Z| / (|Y| + |Z|)`, and
//! subset accuracy the exact-match indicator; all three are averaged over
//! instances. When both sets are empty the overlap metrics count as 1, and
//! a label that is never true and never predicted scores a per-label F of 1
//! (the usual vacuous-case conventions).

use std::fmt::Write as _;

use crate::data::LabelSet;
use crate::error::{Error, Result};

/// Aggregated evaluation results over a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub example_accuracy: f64,
    pub example_fmeasure: f64,
    pub subset_accuracy: f64,
    pub per_label_f: Vec<f64>,
    pub n_eval: usize,
}

/// Per-example accuracy (Jaccard), F-measure (Dice) and subset indicator.
pub fn example_metrics(truth: &LabelSet, pred: &LabelSet) -> (f64, f64, f64) {
    debug_assert_eq!(truth.q(), pred.q());
    let inter = truth.intersection_len(pred) as f64;
    let union = truth.union_len(pred) as f64;
    let size_sum = (truth.len() + pred.len()) as f64;
    let accuracy = if union == 0.0 { 1.0 } else { inter / union };
    let fmeasure = if size_sum == 0.0 {
        1.0
    } else {
        2.0 * inter / size_sum
    };
    let subset = if truth == pred { 1.0 } else { 0.0 };
    (accuracy, fmeasure, subset)
}

/// Binary F1 of label `k` over the whole evaluation set.
pub fn per_label_f(truths: &[LabelSet], preds: &[LabelSet], k: usize) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fnn = 0usize;
    for (t, p) in truths.iter().zip(preds) {
        match (t.contains(k), p.contains(k)) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fnn += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fnn == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fnn as f64)
    }
}

/// Mean example-based metrics plus the per-label F vector.
pub fn evaluate(truths: &[LabelSet], preds: &[LabelSet]) -> Result<EvaluationReport> {
    if truths.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    if truths.len() != preds.len() {
        return Err(Error::Data(format!(
            "evaluation length mismatch: {} truths vs {} predictions",
            truths.len(),
            preds.len()
        )));
    }
    let q = truths[0].q();
    for (i, (t, p)) in truths.iter().zip(preds).enumerate() {
        if t.q() != q || p.q() != q {
            return Err(Error::Data(format!(
                "instance {i}: label universe mismatch ({} / {} vs {q})",
                t.q(),
                p.q()
            )));
        }
    }

    let n = truths.len() as f64;
    let mut acc = 0.0;
    let mut f = 0.0;
    let mut subset = 0.0;
    for (t, p) in truths.iter().zip(preds) {
        let (a, fm, s) = example_metrics(t, p);
        acc += a;
        f += fm;
        subset += s;
    }
    let per_label = (0..q).map(|k| per_label_f(truths, preds, k)).collect();
    Ok(EvaluationReport {
        example_accuracy: acc / n,
        example_fmeasure: f / n,
        subset_accuracy: subset / n,
        per_label_f: per_label,
        n_eval: truths.len(),
    })
}

impl EvaluationReport {
    /// Aligned human-readable table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<26}{:>10}", "metric", "value");
        let _ = writeln!(out, "{:<26}{:>10.4}", "example-based accuracy", self.example_accuracy);
        let _ = writeln!(out, "{:<26}{:>10.4}", "example-based F-measure", self.example_fmeasure);
        let _ = writeln!(out, "{:<26}{:>10.4}", "subset accuracy", self.subset_accuracy);
        let _ = writeln!(out, "{:<26}{:>10}", "instances", self.n_eval);
        out
    }

    /// Machine-readable `metric=value` block (full precision).
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "example_accuracy={:.16e}", self.example_accuracy);
        let _ = writeln!(out, "example_fmeasure={:.16e}", self.example_fmeasure);
        let _ = writeln!(out, "subset_accuracy={:.16e}", self.subset_accuracy);
        let _ = writeln!(out, "n_eval={}", self.n_eval);
        out
    }

    /// Per-label F-measure table with optional label names.
    pub fn render_per_label(&self, names: Option<&[String]>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12}{:>10}", "label", "F-measure");
        for (k, f) in self.per_label_f.iter().enumerate() {
            let name = names
                .and_then(|n| n.get(k).cloned())
                .unwrap_or_else(|| k.to_string());
            let _ = writeln!(out, "{name:<12}{f:>10.4}");
        }
        let avg = self.per_label_f.iter().sum::<f64>() / self.per_label_f.len().max(1) as f64;
        let _ = writeln!(out, "{:<12}{avg:>10.4}", "Avg.");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ls(q: usize, v: &[usize]) -> LabelSet {
        LabelSet::new(q, v.iter().copied()).unwrap()
    }

    #[test]
    fn example_metrics_partial_overlap() {
        let (a, f, s) = example_metrics(&ls(3, &[0, 1]), &ls(3, &[1, 2]));
        assert!((a - 1.0 / 3.0).abs() < 1e-15);
        assert!((f - 0.5).abs() < 1e-15);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn example_metrics_identity() {
        let (a, f, s) = example_metrics(&ls(3, &[0, 2]), &ls(3, &[0, 2]));
        assert_eq!((a, f, s), (1.0, 1.0, 1.0));
    }

    #[test]
    fn example_metrics_disjoint() {
        let (a, f, s) = example_metrics(&ls(2, &[0]), &ls(2, &[1]));
        assert_eq!((a, f, s), (0.0, 0.0, 0.0));
    }

    #[test]
    fn example_metrics_both_empty() {
        let (a, f, s) = example_metrics(&ls(3, &[]), &ls(3, &[]));
        assert_eq!((a, f, s), (1.0, 1.0, 1.0));
    }

    #[test]
    fn per_label_f_perfect() {
        let truths = vec![ls(3, &[0, 1]), ls(3, &[2])];
        for k in 0..3 {
            assert_eq!(per_label_f(&truths, &truths, k), 1.0);
        }
    }

    #[test]
    fn per_label_f_vacuous_label() {
        let truths = vec![ls(3, &[0]), ls(3, &[0])];
        let preds = vec![ls(3, &[0]), ls(3, &[0])];
        // label 2 never true, never predicted
        assert_eq!(per_label_f(&truths, &preds, 2), 1.0);
    }

    #[test]
    fn per_label_f_mixed() {
        // TP=1, FP=1, FN=0 for label 0
        let truths = vec![ls(2, &[0]), ls(2, &[1])];
        let preds = vec![ls(2, &[0]), ls(2, &[0, 1])];
        assert!((per_label_f(&truths, &preds, 0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn evaluate_single_perfect_instance() {
        let t = vec![ls(3, &[0, 1])];
        let report = evaluate(&t, &t).unwrap();
        assert_eq!(report.example_accuracy, 1.0);
        assert_eq!(report.example_fmeasure, 1.0);
        assert_eq!(report.subset_accuracy, 1.0);
    }

    #[test]
    fn evaluate_mean_of_perfect_and_disjoint() {
        let truths = vec![ls(2, &[0]), ls(2, &[0])];
        let preds = vec![ls(2, &[0]), ls(2, &[1])];
        let report = evaluate(&truths, &preds).unwrap();
        assert_eq!(report.example_accuracy, 0.5);
        assert_eq!(report.example_fmeasure, 0.5);
        assert_eq!(report.subset_accuracy, 0.5);
    }

    #[test]
    fn evaluate_rejects_empty_and_mismatch() {
        assert!(evaluate(&[], &[]).is_err());
        let t = vec![ls(2, &[0])];
        let p = vec![ls(2, &[0]), ls(2, &[1])];
        assert!(evaluate(&t, &p).is_err());
    }

    #[test]
    fn evaluate_matches_naive_resummation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let q = 5;
        let random_set = |rng: &mut rand_chacha::ChaCha8Rng| {
            let v: Vec<usize> = (0..q).filter(|_| rng.random_range(0..2) == 1).collect();
            ls(q, &v)
        };
        let truths: Vec<LabelSet> = (0..50).map(|_| random_set(&mut rng)).collect();
        let preds: Vec<LabelSet> = (0..50).map(|_| random_set(&mut rng)).collect();
        let report = evaluate(&truths, &preds).unwrap();

        // independent oracle: accumulate per instance without reusing evaluate
        let mut sums = (0.0, 0.0, 0.0);
        for (t, p) in truths.iter().zip(&preds) {
            let inter = t.iter().filter(|&k| p.contains(k)).count() as f64;
            let union = (t.len() + p.len()) as f64 - inter;
            sums.0 += if union == 0.0 { 1.0 } else { inter / union };
            sums.1 += if t.len() + p.len() == 0 {
                1.0
            } else {
                2.0 * inter / (t.len() + p.len()) as f64
            };
            sums.2 += if t == p { 1.0 } else { 0.0 };
        }
        assert!((report.example_accuracy - sums.0 / 50.0).abs() < 1e-12);
        assert!((report.example_fmeasure - sums.1 / 50.0).abs() < 1e-12);
        assert!((report.subset_accuracy - sums.2 / 50.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_permutation_invariant() {
        let truths = vec![ls(3, &[0]), ls(3, &[1, 2]), ls(3, &[])];
        let preds = vec![ls(3, &[0, 1]), ls(3, &[2]), ls(3, &[1])];
        let fwd = evaluate(&truths, &preds).unwrap();
        let rev_t: Vec<_> = truths.iter().rev().cloned().collect();
        let rev_p: Vec<_> = preds.iter().rev().cloned().collect();
        let rev = evaluate(&rev_t, &rev_p).unwrap();
        assert_eq!(fwd, rev);
    }

    proptest! {
        #[test]
        fn subset_accuracy_f_ordering(
            t in proptest::collection::vec(0usize..6, 0..6),
            p in proptest::collection::vec(0usize..6, 0..6),
        ) {
            let truth = ls(6, &t);
            let pred = ls(6, &p);
            let (a, f, s) = example_metrics(&truth, &pred);
            prop_assert!(s <= a + 1e-15);
            prop_assert!(a <= f + 1e-15);
            for v in [a, f, s] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
