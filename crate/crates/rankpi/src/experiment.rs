//! Ablation runs and hyperparameter grid search.
//!
//! The ablation trains the four variants with a shared configuration and
//! evaluates each on held-out data using available features only. Grid
//! search is exhaustive over user-supplied hyperparameter lists with
//! seeded instance-level k-fold cross-validation, selected by example-based
//! F-measure. Cells are independent and run in parallel; results are
//! assembled in a fixed order so output stays deterministic.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{LabelSet, MultiLabelDataset};
use crate::dual::{TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::metrics::{evaluate, EvaluationReport};
use crate::model::{train, TrainOutcome};

pub const ABLATION_VARIANTS: [Variant; 4] = [
    Variant::BinaryRelevance,
    Variant::RankingOnly,
    Variant::SimilarityOnly,
    Variant::Full,
];

/// One ablation column: the variant, its evaluation, and its training run.
#[derive(Debug)]
pub struct AblationCell {
    pub variant: Variant,
    pub report: EvaluationReport,
    pub outcome: TrainOutcome,
}

#[derive(Debug)]
pub struct AblationTable {
    pub cells: Vec<AblationCell>,
    pub run_name: String,
}

/// Train all four variants with a shared config and evaluate them on the
/// test set against the given truths.
pub fn run_ablation(
    train_ds: &MultiLabelDataset,
    test_ds: &MultiLabelDataset,
    truths: &[LabelSet],
    base: &TrainConfig,
    kernel_avail: &KernelSpec,
    kernel_priv: Option<&KernelSpec>,
    run_name: &str,
) -> Result<AblationTable> {
    if !train_ds.has_privileged() {
        let needing: Vec<&str> = ABLATION_VARIANTS
            .iter()
            .filter(|v| v.uses_privileged())
            .map(|v| v.tag())
            .collect();
        return Err(Error::Data(format!(
            "ablation requires privileged training features for variants: {}",
            needing.join(", ")
        )));
    }
    if truths.len() != test_ds.n() {
        return Err(Error::Data(format!(
            "ablation: {} test instances vs {} truth label sets",
            test_ds.n(),
            truths.len()
        )));
    }

    let cells: Result<Vec<AblationCell>> = ABLATION_VARIANTS
        .par_iter()
        .map(|&variant| {
            let cfg = TrainConfig { variant, ..*base };
            let outcome = train(train_ds, &cfg, kernel_avail, kernel_priv)?;
            let preds = outcome.model.predict_dataset(test_ds)?;
            let report = evaluate(truths, &preds)?;
            Ok(AblationCell {
                variant,
                report,
                outcome,
            })
        })
        .collect();
    Ok(AblationTable {
        cells: cells?,
        run_name: run_name.to_string(),
    })
}

impl AblationTable {
    /// Table with one column per variant; cells are
    /// `accuracy\F-measure\subset-accuracy`.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<16}", "Run");
        for cell in &self.cells {
            let _ = write!(out, "{:>22}", cell.variant.table_name());
        }
        out.push('\n');
        let _ = write!(out, "{:<16}", self.run_name);
        for cell in &self.cells {
            let r = &cell.report;
            let text = format!(
                "{:.4}\\{:.4}\\{:.4}",
                r.example_accuracy, r.example_fmeasure, r.subset_accuracy
            );
            let _ = write!(out, "{text:>22}");
        }
        out.push('\n');
        out
    }

    /// Machine-readable `variant.metric=value` block for every column.
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        for cell in &self.cells {
            for line in cell.report.render_kv().lines() {
                let _ = writeln!(out, "{}.{line}", cell.variant.tag());
            }
        }
        out
    }

    pub fn cell(&self, variant: Variant) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.variant == variant)
    }
}

/// Exhaustive grid over hyperparameter lists.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub c: Vec<f64>,
    pub c_star: Vec<f64>,
    pub d: Vec<f64>,
    pub gamma: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub c: f64,
    pub c_star: f64,
    pub d: f64,
    pub gamma: f64,
    /// Mean example-based F-measure over held-out folds.
    pub mean_f: f64,
}

pub struct GridResult {
    pub cells: Vec<GridCell>,
    pub best: usize,
}

/// Seeded instance-level fold assignment: a shuffled index vector cut into
/// `folds` contiguous chunks (sizes differing by at most one).
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut out = Vec::with_capacity(folds);
    let base = n / folds;
    let extra = n % folds;
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(indices[start..start + len].to_vec());
        start += len;
    }
    out
}

fn apply_gamma(spec: &KernelSpec, gamma: f64) -> KernelSpec {
    let mut out = *spec;
    out.gamma = gamma;
    out
}

/// Cross-validated exhaustive search; the winning cell maximizes mean
/// example-based F-measure (first listed wins ties).
pub fn grid_search(
    ds: &MultiLabelDataset,
    base: &TrainConfig,
    kernel_avail: &KernelSpec,
    kernel_priv: Option<&KernelSpec>,
    grid: &GridSpec,
) -> Result<GridResult> {
    if grid.folds < 2 {
        return Err(Error::InvalidParam("grid search needs at least 2 folds".into()));
    }
    if grid.folds > ds.n() {
        return Err(Error::InvalidParam(format!(
            "grid search: {} folds but only {} instances",
            grid.folds,
            ds.n()
        )));
    }
    if grid.c.is_empty() || grid.c_star.is_empty() || grid.d.is_empty() || grid.gamma.is_empty() {
        return Err(Error::InvalidParam("grid search: empty parameter list".into()));
    }

    let folds = fold_assignment(ds.n(), grid.folds, grid.seed);
    let splits: Vec<(MultiLabelDataset, MultiLabelDataset, Vec<LabelSet>)> = folds
        .iter()
        .map(|held| {
            let train_idx: Vec<usize> = (0..ds.n()).filter(|i| !held.contains(i)).collect();
            let train_ds = ds.subset(&train_idx)?;
            let held_ds = ds.subset(held)?;
            let truths: Vec<LabelSet> =
                held.iter().map(|&i| ds.labels(i).clone()).collect();
            Ok((train_ds, held_ds, truths))
        })
        .collect::<Result<_>>()?;

    let mut combos = Vec::new();
    for &c in &grid.c {
        for &c_star in &grid.c_star {
            for &d in &grid.d {
                for &gamma in &grid.gamma {
                    combos.push((c, c_star, d, gamma));
                }
            }
        }
    }

    let cells: Result<Vec<GridCell>> = combos
        .par_iter()
        .map(|&(c, c_star, d, gamma)| {
            let cfg = TrainConfig {
                c,
                c_star,
                d,
                ..*base
            };
            let ka = apply_gamma(kernel_avail, gamma);
            let kp = kernel_priv.map(|s| apply_gamma(s, gamma));

            // Pool held-out predictions across folds; the mean over
            // instances equals the fold-size weighted mean.
            let mut truths = Vec::new();
            let mut preds = Vec::new();
            for (train_ds, held_ds, held_truths) in &splits {
                let outcome = train(train_ds, &cfg, &ka, kp.as_ref())?;
                preds.extend(outcome.model.predict_dataset(held_ds)?);
                truths.extend(held_truths.iter().cloned());
            }
            let report = evaluate(&truths, &preds)?;
            Ok(GridCell {
                c,
                c_star,
                d,
                gamma,
                mean_f: report.example_fmeasure,
            })
        })
        .collect();
    let cells = cells?;

    let mut best = 0;
    for (i, cell) in cells.iter().enumerate() {
        if cell.mean_f > cells[best].mean_f {
            best = i;
        }
    }
    Ok(GridResult { cells, best })
}

impl GridResult {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>10}{:>10}{:>10}{:>12}{:>12}",
            "C", "Cstar", "D", "gamma", "mean F"
        );
        for cell in &self.cells {
            let _ = writeln!(
                out,
                "{:>10.4}{:>10.4}{:>10.4}{:>12.6}{:>12.6}",
                cell.c, cell.c_star, cell.d, cell.gamma, cell.mean_f
            );
        }
        let b = &self.cells[self.best];
        let _ = writeln!(
            out,
            "best C={} Cstar={} D={} gamma={} mean_f={:.16e}",
            b.c, b.c_star, b.d, b.gamma, b.mean_f
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthParams};

    fn synth_pair() -> (MultiLabelDataset, MultiLabelDataset, Vec<LabelSet>) {
        let ds = generate(&SynthParams {
            seed: 11,
            n: 40,
            q: 3,
            d: 4,
            sigma: 0.8,
            sigma_star: 0.1,
            labels_per_instance: 1,
        })
        .unwrap();
        let train_ds = ds.subset(&(0..25).collect::<Vec<_>>()).unwrap();
        let test_ds = ds.subset(&(25..40).collect::<Vec<_>>()).unwrap();
        let truths: Vec<LabelSet> = (25..40).map(|i| ds.labels(i).clone()).collect();
        (train_ds, test_ds, truths)
    }

    #[test]
    fn ablation_trains_all_four_variants() {
        let (train_ds, test_ds, truths) = synth_pair();
        let cfg = TrainConfig {
            max_iter: 500,
            ..TrainConfig::default()
        };
        let table = run_ablation(
            &train_ds,
            &test_ds,
            &truths,
            &cfg,
            &KernelSpec::linear(),
            Some(&KernelSpec::linear()),
            "synth",
        )
        .unwrap();
        assert_eq!(table.cells.len(), 4);
        let rendered = table.render_table();
        for name in ["SVM", "SVM+ML", "SVM+PI", "Ours"] {
            assert!(rendered.contains(name), "missing column {name}");
        }
        for cell in &table.cells {
            assert!(cell.report.example_fmeasure >= 0.0);
            assert!(cell.report.example_fmeasure <= 1.0);
        }
    }

    #[test]
    fn ablation_without_privileged_features_names_variants() {
        let (train_ds, test_ds, truths) = synth_pair();
        // Strip privileged features.
        let stripped: Vec<crate::data::Instance> = train_ds
            .instances()
            .iter()
            .map(|i| crate::data::Instance::new(i.x().to_vec(), None, i.labels().clone()))
            .collect();
        let bare = MultiLabelDataset::new(stripped, train_ds.q()).unwrap();
        let err = run_ablation(
            &bare,
            &test_ds,
            &truths,
            &TrainConfig::default(),
            &KernelSpec::linear(),
            None,
            "synth",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("pi") && msg.contains("full"), "{msg}");
    }

    #[test]
    fn d_zero_ablation_full_equals_ranking_only() {
        let (train_ds, test_ds, truths) = synth_pair();
        let cfg = TrainConfig {
            d: 0.0,
            max_iter: 500,
            ..TrainConfig::default()
        };
        let table = run_ablation(
            &train_ds,
            &test_ds,
            &truths,
            &cfg,
            &KernelSpec::linear(),
            Some(&KernelSpec::linear()),
            "synth",
        )
        .unwrap();
        let full = table.cell(Variant::Full).unwrap();
        let ml = table.cell(Variant::RankingOnly).unwrap();
        assert!(
            (full.report.example_fmeasure - ml.report.example_fmeasure).abs() < 1e-6
        );
        assert!(
            (full.report.example_accuracy - ml.report.example_accuracy).abs() < 1e-6
        );
    }

    #[test]
    fn fold_assignment_partitions_instances() {
        let folds = fold_assignment(23, 5, 7);
        assert_eq!(folds.len(), 5);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for f in &folds {
            assert!(f.len() == 4 || f.len() == 5);
        }
        // seeded: same seed, same folds
        assert_eq!(folds, fold_assignment(23, 5, 7));
        assert_ne!(folds, fold_assignment(23, 5, 8));
    }

    #[test]
    fn grid_search_selects_a_cell() {
        let (train_ds, _, _) = synth_pair();
        let grid = GridSpec {
            c: vec![0.5, 2.0],
            c_star: vec![1.0],
            d: vec![0.5],
            gamma: vec![1.0],
            folds: 3,
            seed: 5,
        };
        let cfg = TrainConfig {
            max_iter: 300,
            ..TrainConfig::default()
        };
        let result = grid_search(
            &train_ds,
            &cfg,
            &KernelSpec::linear(),
            Some(&KernelSpec::linear()),
            &grid,
        )
        .unwrap();
        assert_eq!(result.cells.len(), 2);
        assert!(result.best < 2);
        let best = &result.cells[result.best];
        for cell in &result.cells {
            assert!(best.mean_f >= cell.mean_f);
        }
        // deterministic
        let again = grid_search(
            &train_ds,
            &cfg,
            &KernelSpec::linear(),
            Some(&KernelSpec::linear()),
            &grid,
        )
        .unwrap();
        assert_eq!(result.best, again.best);
        for (a, b) in result.cells.iter().zip(&again.cells) {
            assert_eq!(a.mean_f, b.mean_f);
        }
    }
}
