//! Kernel functions and bias-augmented Gram matrices.
//!
//! Biases are absorbed into the feature map by augmenting every kernel value
//! with `+1` (`augment_bias`), which lets the dual drop its equality
//! constraints. Available and privileged feature spaces carry independent
//! kernel specs since they are typically different modalities.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::MultiLabelDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Linear,
    Rbf,
    Polynomial,
}

impl KernelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
            KernelKind::Polynomial => "poly",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(KernelKind::Linear),
            "rbf" => Ok(KernelKind::Rbf),
            "poly" | "polynomial" => Ok(KernelKind::Polynomial),
            other => Err(Error::InvalidParam(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Kernel function parameters for one feature space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// RBF width / polynomial scale. Must be positive.
    pub gamma: f64,
    /// Polynomial degree. Must be at least 1.
    pub degree: u32,
    /// Polynomial offset.
    pub coef0: f64,
    /// Add `+1` to every kernel value (bias absorption).
    pub augment_bias: bool,
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec {
            kind: KernelKind::Linear,
            gamma: 1.0,
            degree: 1,
            coef0: 0.0,
            augment_bias: true,
        }
    }

    pub fn rbf(gamma: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Rbf,
            gamma,
            degree: 1,
            coef0: 0.0,
            augment_bias: true,
        }
    }

    /// Polynomial kernel; defaults are degree 2, coef0 1, gamma 1.
    pub fn polynomial(gamma: f64, degree: u32, coef0: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Polynomial,
            gamma,
            degree,
            coef0,
            augment_bias: true,
        }
    }

    pub fn with_bias(mut self, augment_bias: bool) -> Self {
        self.augment_bias = augment_bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParam(format!(
                "kernel gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.degree < 1 {
            return Err(Error::InvalidParam("kernel degree must be >= 1".into()));
        }
        Ok(())
    }

    fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let base = match self.kind {
            KernelKind::Linear => dot(a, b),
            KernelKind::Rbf => {
                let mut dist2 = 0.0;
                for (&x, &y) in a.iter().zip(b) {
                    let diff = x - y;
                    dist2 += diff * diff;
                }
                (-self.gamma * dist2).exp()
            }
            KernelKind::Polynomial => (self.gamma * dot(a, b) + self.coef0).powi(self.degree as i32),
        };
        if self.augment_bias {
            base + 1.0
        } else {
            base
        }
    }

    /// Serialized form used inside model files:
    /// `kernel <space> <kind> gamma=<g> degree=<d> coef0=<c> bias=<0|1>`.
    pub fn format_line(&self, space: &str) -> String {
        format!(
            "kernel {space} {} gamma={:.16e} degree={} coef0={:.16e} bias={}",
            self.kind.as_str(),
            self.gamma,
            self.degree,
            self.coef0,
            u8::from(self.augment_bias)
        )
    }

    /// Parse the body of a `kernel` line (everything after the keyword).
    /// Returns the space tag and the spec.
    pub fn parse_line(body: &str) -> Result<(String, KernelSpec)> {
        let bad = || Error::Model(format!("malformed kernel line: '{body}'"));
        let mut parts = body.split_whitespace();
        let space = parts.next().ok_or_else(bad)?.to_string();
        let kind = KernelKind::parse(parts.next().ok_or_else(bad)?)
            .map_err(|_| bad())?;
        let mut spec = KernelSpec {
            kind,
            gamma: 1.0,
            degree: 1,
            coef0: 0.0,
            augment_bias: true,
        };
        for kv in parts {
            let (key, val) = kv.split_once('=').ok_or_else(bad)?;
            match key {
                "gamma" => spec.gamma = val.parse().map_err(|_| bad())?,
                "degree" => spec.degree = val.parse().map_err(|_| bad())?,
                "coef0" => spec.coef0 = val.parse().map_err(|_| bad())?,
                "bias" => spec.augment_bias = val == "1",
                _ => return Err(bad()),
            }
        }
        Ok((space, spec))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Evaluate a kernel on two feature vectors.
pub fn kernel_eval(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Data(format!(
            "kernel dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(spec.eval_unchecked(a, b))
}

/// Precomputed Gram matrices for the two feature spaces.
#[derive(Debug, Clone)]
pub struct GramPair {
    pub k: DMatrix<f64>,
    pub k_star: Option<DMatrix<f64>>,
    pub spec: KernelSpec,
    pub spec_star: Option<KernelSpec>,
}

fn gram_matrix(rows: &[&[f64]], spec: &KernelSpec) -> DMatrix<f64> {
    let n = rows.len();
    let mut entries: Vec<Vec<f64>> = Vec::with_capacity(n);
    (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|h| spec.eval_unchecked(rows[i], rows[h])).collect())
        .collect_into_vec(&mut entries);
    let raw = DMatrix::from_fn(n, n, |i, h| entries[i][h]);
    // Symmetrize to wash out rounding asymmetry in rbf/poly evaluation.
    let mut sym = raw.clone();
    sym += raw.transpose();
    sym *= 0.5;
    sym
}

/// Compute the bias-augmented Gram matrices for a dataset.
///
/// The privileged Gram is built when `spec_priv` is given; requesting it on
/// a dataset with `d_star = 0` is an error.
pub fn compute_gram(
    ds: &MultiLabelDataset,
    spec_avail: &KernelSpec,
    spec_priv: Option<&KernelSpec>,
) -> Result<GramPair> {
    spec_avail.validate()?;
    let avail_rows: Vec<&[f64]> = ds.instances().iter().map(|inst| inst.x()).collect();
    let k = gram_matrix(&avail_rows, spec_avail);

    let (k_star, spec_star) = match spec_priv {
        Some(spec) => {
            spec.validate()?;
            if !ds.has_privileged() {
                return Err(Error::Data(
                    "privileged Gram requested but dataset has d_star = 0".into(),
                ));
            }
            let rows: Vec<&[f64]> = ds
                .instances()
                .iter()
                .map(|inst| inst.x_star().unwrap())
                .collect();
            (Some(gram_matrix(&rows, spec)), Some(*spec))
        }
        None => (None, None),
    };

    Ok(GramPair {
        k,
        k_star,
        spec: *spec_avail,
        spec_star,
    })
}

const MEDIAN_PAIR_BUDGET: usize = 1000;
const MEDIAN_SAMPLING_SEED: u64 = 0x6d65645f67616d6d; // arbitrary fixed seed

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Default RBF bandwidth: inverse median pairwise squared distance.
///
/// All pairs are used when there are at most 1000 of them; otherwise 1000
/// pairs are sampled with a fixed seed so the heuristic stays deterministic.
/// Returns 1.0 when the median distance is zero.
pub fn median_gamma(rows: &[Vec<f64>]) -> Result<f64> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Data(
            "median heuristic needs at least 2 instances".into(),
        ));
    }
    let total_pairs = n * (n - 1) / 2;
    let mut dists = Vec::new();
    if total_pairs <= MEDIAN_PAIR_BUDGET {
        for i in 0..n {
            for h in (i + 1)..n {
                dists.push(squared_distance(&rows[i], &rows[h]));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(MEDIAN_SAMPLING_SEED);
        while dists.len() < MEDIAN_PAIR_BUDGET {
            let i = rng.random_range(0..n);
            let h = rng.random_range(0..n);
            if i != h {
                dists.push(squared_distance(&rows[i], &rows[h]));
            }
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if median == 0.0 {
        Ok(1.0)
    } else {
        Ok(1.0 / median)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Instance, LabelSet};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn tiny_dataset(xs: Vec<Vec<f64>>, xs_star: Option<Vec<Vec<f64>>>) -> MultiLabelDataset {
        let n = xs.len();
        let instances = (0..n)
            .map(|i| {
                Instance::new(
                    xs[i].clone(),
                    xs_star.as_ref().map(|m| m[i].clone()),
                    LabelSet::new(2, [i % 2]).unwrap(),
                )
            })
            .collect();
        MultiLabelDataset::new(instances, 2).unwrap()
    }

    #[test]
    fn linear_no_bias_is_dot_product() {
        let spec = KernelSpec::linear().with_bias(false);
        assert_eq!(kernel_eval(&spec, &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn rbf_same_point() {
        let no_bias = KernelSpec::rbf(3.7).with_bias(false);
        let with_bias = KernelSpec::rbf(3.7);
        let x = [0.4, -2.0, 1.0];
        assert_eq!(kernel_eval(&no_bias, &x, &x).unwrap(), 1.0);
        assert_eq!(kernel_eval(&with_bias, &x, &x).unwrap(), 2.0);
    }

    #[test]
    fn linear_with_bias() {
        let spec = KernelSpec::linear();
        assert_eq!(kernel_eval(&spec, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 12.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let spec = KernelSpec::linear();
        assert!(kernel_eval(&spec, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gram_single_instance_linear_bias() {
        let ds = tiny_dataset(vec![vec![2.0], vec![2.0]], None);
        let gram = compute_gram(&ds, &KernelSpec::linear(), None).unwrap();
        assert_eq!(gram.k[(0, 0)], 5.0);
        // identical instances: all entries equal
        assert_eq!(gram.k[(0, 1)], 5.0);
        assert_eq!(gram.k[(1, 1)], 5.0);
    }

    #[test]
    fn privileged_gram_without_data_is_error() {
        let ds = tiny_dataset(vec![vec![1.0], vec![2.0]], None);
        let err = compute_gram(&ds, &KernelSpec::linear(), Some(&KernelSpec::linear()));
        assert!(err.is_err());
    }

    #[test]
    fn gram_matches_entrywise_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let ds = tiny_dataset(xs.clone(), Some(xs.clone()));
        for spec in [
            KernelSpec::linear(),
            KernelSpec::rbf(0.7),
            KernelSpec::polynomial(1.0, 2, 1.0),
        ] {
            let gram = compute_gram(&ds, &spec, Some(&spec)).unwrap();
            for i in 0..5 {
                for h in 0..5 {
                    let direct = kernel_eval(&spec, &xs[i], &xs[h]).unwrap();
                    assert!(
                        (gram.k[(i, h)] - direct).abs() < 1e-12,
                        "entry ({i},{h}) differs"
                    );
                    let ks = gram.k_star.as_ref().unwrap();
                    assert!((ks[(i, h)] - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn median_gamma_single_pair() {
        let rows = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        assert_eq!(median_gamma(&rows).unwrap(), 0.25);
    }

    #[test]
    fn median_gamma_degenerate_points() {
        let rows = vec![vec![1.0], vec![1.0], vec![1.0]];
        assert_eq!(median_gamma(&rows).unwrap(), 1.0);
    }

    #[test]
    fn median_gamma_needs_two_instances() {
        assert!(median_gamma(&[vec![1.0]]).is_err());
    }

    #[test]
    fn median_gamma_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        // independent oracle: enumerate all pairs, take the median
        let mut dists = Vec::new();
        for i in 0..rows.len() {
            for h in (i + 1)..rows.len() {
                dists.push(squared_distance(&rows[i], &rows[h]));
            }
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = dists.len();
        let median = if m % 2 == 1 {
            dists[m / 2]
        } else {
            0.5 * (dists[m / 2 - 1] + dists[m / 2])
        };
        assert!((median_gamma(&rows).unwrap() - 1.0 / median).abs() < 1e-15);
    }

    #[test]
    fn gram_is_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let xs: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let ds = tiny_dataset(xs, None);
        for spec in [KernelSpec::linear(), KernelSpec::rbf(0.5)] {
            let gram = compute_gram(&ds, &spec, None).unwrap();
            let eig = gram.k.symmetric_eigenvalues();
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-8, "min eigenvalue {min} for {:?}", spec.kind);
        }
    }

    #[test]
    fn kernel_line_round_trip() {
        let spec = KernelSpec::polynomial(0.5, 3, -1.25).with_bias(false);
        let line = spec.format_line("avail");
        let body = line.strip_prefix("kernel ").unwrap();
        let (space, parsed) = KernelSpec::parse_line(body).unwrap();
        assert_eq!(space, "avail");
        assert_eq!(parsed, spec);
    }

    proptest! {
        #[test]
        fn kernel_eval_symmetric(
            a in proptest::collection::vec(-5.0f64..5.0, 4),
            b in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            for spec in [KernelSpec::linear(), KernelSpec::rbf(0.3), KernelSpec::polynomial(0.8, 2, 1.0)] {
                let ab = kernel_eval(&spec, &a, &b).unwrap();
                let ba = kernel_eval(&spec, &b, &a).unwrap();
                prop_assert!((ab - ba).abs() <= 1e-12);
            }
        }
    }
}
