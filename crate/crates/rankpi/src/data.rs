//! Dataset representation and the sparse multi-label text format.
//!
//! One instance per line:
//!
//! ```text
//! lab1,lab2,...,labK idx1:val1 idx2:val2 ...
//! ```
//!
//! Labels are comma-separated non-negative integers with no spaces; an empty
//! label field is written as a leading space before the features. Feature
//! indices are 1-based and strictly increasing within a line; values are
//! decimal floats. Privileged files use the same format without the label
//! field. Lines starting with `#` are comments. Files are UTF-8 with `\n`
//! line endings.
//!
//! Features are stored densely after ingestion; the label universe is
//! inferred as `max label index + 1` unless an explicit override is given.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Set of present labels out of a universe of `q` labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    present: BTreeSet<usize>,
    q: usize,
}

impl LabelSet {
    pub fn new(q: usize, present: impl IntoIterator<Item = usize>) -> Result<Self> {
        let present: BTreeSet<usize> = present.into_iter().collect();
        if let Some(&max) = present.iter().next_back() {
            if max >= q {
                return Err(Error::Data(format!(
                    "label index {max} out of range for q={q}"
                )));
            }
        }
        Ok(LabelSet { present, q })
    }

    pub fn empty(q: usize) -> Self {
        LabelSet {
            present: BTreeSet::new(),
            q,
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Number of present labels, `|Y|`.
    pub fn len(&self) -> usize {
        self.present.len()
    }

    /// Number of absent labels, `|Ybar| = q - |Y|`.
    pub fn absent_len(&self) -> usize {
        self.q - self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.present.contains(&k)
    }

    /// Present labels in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.present.iter().copied()
    }

    /// Absent labels (the complement) in increasing order.
    pub fn absent(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.q).filter(move |k| !self.present.contains(k))
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.present.iter().copied().collect()
    }

    pub fn intersection_len(&self, other: &LabelSet) -> usize {
        self.present.intersection(&other.present).count()
    }

    pub fn union_len(&self, other: &LabelSet) -> usize {
        self.present.union(&other.present).count()
    }
}

/// One training or test instance: available features, optional privileged
/// features, and the label set.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    x: Vec<f64>,
    x_star: Option<Vec<f64>>,
    labels: LabelSet,
}

impl Instance {
    pub fn new(x: Vec<f64>, x_star: Option<Vec<f64>>, labels: LabelSet) -> Self {
        Instance { x, x_star, labels }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_star(&self) -> Option<&[f64]> {
        self.x_star.as_deref()
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }
}

/// Aligned available/privileged multi-label dataset.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub struct MultiLabelDataset {
    instances: Vec<Instance>,
    q: usize,
    d: usize,
    d_star: usize,
}

/// One ranking constraint index: present label `j` must outscore absent
/// label `l` for instance `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankingPair {
    pub i: usize,
    pub j: usize,
    pub l: usize,
}

impl MultiLabelDataset {
    pub fn new(instances: Vec<Instance>, q: usize) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Data("dataset has no instances".into()));
        }
        if q < 2 {
            return Err(Error::Data(format!(
                "label universe must contain at least 2 labels, got q={q}"
            )));
        }
        let d = instances[0].x.len();
        if d == 0 {
            return Err(Error::Data("available features are empty".into()));
        }
        let d_star = instances[0].x_star.as_ref().map_or(0, Vec::len);
        for (i, inst) in instances.iter().enumerate() {
            if inst.x.len() != d {
                return Err(Error::Data(format!(
                    "instance {i}: available dimension {} != {d}",
                    inst.x.len()
                )));
            }
            let ds = inst.x_star.as_ref().map_or(0, Vec::len);
            if ds != d_star {
                return Err(Error::Data(format!(
                    "instance {i}: privileged dimension {ds} != {d_star}"
                )));
            }
            if inst.labels.q() != q {
                return Err(Error::Data(format!(
                    "instance {i}: label universe {} != {q}",
                    inst.labels.q()
                )));
            }
        }
        Ok(MultiLabelDataset {
            instances,
            q,
            d,
            d_star,
        })
    }

    pub fn n(&self) -> usize {
        self.instances.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Privileged dimension; 0 when no privileged features were loaded.
    pub fn d_star(&self) -> usize {
        self.d_star
    }

    pub fn has_privileged(&self) -> bool {
        self.d_star > 0
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn instance(&self, i: usize) -> &Instance {
        &self.instances[i]
    }

    pub fn labels(&self, i: usize) -> &LabelSet {
        &self.instances[i].labels
    }

    /// Available features as an `n x d` matrix (row per instance).
    pub fn features(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.d, |i, j| self.instances[i].x[j])
    }

    /// Privileged features as an `n x d_star` matrix, if present.
    pub fn privileged_features(&self) -> Option<DMatrix<f64>> {
        if self.d_star == 0 {
            return None;
        }
        Some(DMatrix::from_fn(self.n(), self.d_star, |i, j| {
            self.instances[i].x_star.as_ref().unwrap()[j]
        }))
    }

    /// Present-label counts `|Y_i|` as floats (regression targets).
    pub fn label_counts(&self) -> Vec<f64> {
        self.instances
            .iter()
            .map(|inst| inst.labels.len() as f64)
            .collect()
    }

    /// All `(j, l)` ranking pairs for instance `i` in lexicographic order.
    ///
    /// Empty when the instance has no present or no absent labels; such
    /// instances contribute no ranking constraints.
    pub fn ranking_pairs(&self, i: usize) -> Vec<RankingPair> {
        let labels = &self.instances[i].labels;
        let mut pairs = Vec::with_capacity(labels.len() * labels.absent_len());
        for j in labels.iter() {
            for l in labels.absent() {
                pairs.push(RankingPair { i, j, l });
            }
        }
        pairs
    }

    /// New dataset holding the selected instances (in the given order).
    /// `q`, `d` and `d_star` are preserved even if the subset does not
    /// exercise them fully.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let instances: Vec<Instance> = indices
            .iter()
            .map(|&i| self.instances[i].clone())
            .collect();
        MultiLabelDataset::new(instances, self.q)
    }
}

struct ParsedLine {
    labels: Vec<usize>,
    features: Vec<(usize, f64)>,
}

fn parse_feature_list(
    path: &str,
    lineno: usize,
    tokens: &str,
    out: &mut Vec<(usize, f64)>,
) -> Result<()> {
    let mut prev = 0usize;
    for tok in tokens.split_whitespace() {
        let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| {
            Error::parse(path, lineno, format!("malformed feature token '{tok}'"))
        })?;
        let idx: usize = idx_str.parse().map_err(|_| {
            Error::parse(path, lineno, format!("malformed feature index '{idx_str}'"))
        })?;
        if idx == 0 {
            return Err(Error::parse(path, lineno, "feature indices are 1-based"));
        }
        if idx <= prev {
            return Err(Error::parse(
                path,
                lineno,
                format!("feature index non-increasing: {idx} after {prev}"),
            ));
        }
        let val: f64 = val_str.parse().map_err(|_| {
            Error::parse(path, lineno, format!("malformed feature value '{val_str}'"))
        })?;
        out.push((idx, val));
        prev = idx;
    }
    Ok(())
}

fn parse_labeled_line(path: &str, lineno: usize, line: &str) -> Result<ParsedLine> {
    let (label_field, feature_field) = if let Some(rest) = line.strip_prefix(' ') {
        // Empty label field: the line starts with the separating space.
        ("", rest)
    } else {
        match line.split_once(' ') {
            Some((l, f)) => (l, f),
            None => (line, ""),
        }
    };
    if label_field.is_empty() && feature_field.is_empty() {
        return Err(Error::parse(path, lineno, "malformed line (empty)"));
    }
    let mut labels = Vec::new();
    if !label_field.is_empty() {
        for tok in label_field.split(',') {
            let val: i64 = tok.parse().map_err(|_| {
                Error::parse(path, lineno, format!("malformed label '{tok}'"))
            })?;
            if val < 0 {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("label index negative: {val}"),
                ));
            }
            labels.push(val as usize);
        }
    }
    let mut features = Vec::new();
    parse_feature_list(path, lineno, feature_field, &mut features)?;
    Ok(ParsedLine { labels, features })
}

fn read_content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.to_string()))
        .filter(|(_, l)| !l.starts_with('#'))
        .collect())
}

fn densify(features: &[(usize, f64)], d: usize) -> Vec<f64> {
    let mut x = vec![0.0; d];
    for &(idx, val) in features {
        x[idx - 1] = val;
    }
    x
}

/// Load a dataset from an available-features file and an optional aligned
/// privileged-features file.
///
/// The label universe is inferred as `max label index + 1` unless
/// `q_override` is given. Without a privileged file the dataset has
/// `d_star = 0` and is usable only by variants that ignore privileged
/// features.
pub fn load_dataset(
    available_path: &Path,
    privileged_path: Option<&Path>,
    q_override: Option<usize>,
) -> Result<MultiLabelDataset> {
    let apath = available_path.display().to_string();
    let mut rows = Vec::new();
    for (lineno, line) in read_content_lines(available_path)? {
        rows.push(parse_labeled_line(&apath, lineno, &line)?);
    }

    let priv_rows = match privileged_path {
        Some(p) => {
            let ppath = p.display().to_string();
            let mut out = Vec::new();
            for (lineno, line) in read_content_lines(p)? {
                let mut features = Vec::new();
                parse_feature_list(&ppath, lineno, &line, &mut features)?;
                out.push(features);
            }
            if out.len() != rows.len() {
                return Err(Error::Data(format!(
                    "aligned file length mismatch: available has {} instances, privileged has {}",
                    rows.len(),
                    out.len()
                )));
            }
            Some(out)
        }
        None => None,
    };

    if rows.is_empty() {
        return Err(Error::Data(format!("{apath}: dataset has no instances")));
    }

    let max_label = rows
        .iter()
        .flat_map(|r| r.labels.iter().copied())
        .max()
        .map(|m| m + 1)
        .unwrap_or(0);
    let q = match q_override {
        Some(q) => {
            if q < max_label {
                return Err(Error::Data(format!(
                    "q override {q} smaller than max label index + 1 = {max_label}"
                )));
            }
            q
        }
        None => max_label,
    };

    let d = rows
        .iter()
        .flat_map(|r| r.features.iter().map(|&(idx, _)| idx))
        .max()
        .unwrap_or(0);
    if d == 0 {
        return Err(Error::Data(format!("{apath}: no features found")));
    }
    let d_star = priv_rows
        .as_ref()
        .map(|rows| {
            rows.iter()
                .flat_map(|r| r.iter().map(|&(idx, _)| idx))
                .max()
                .unwrap_or(0)
        })
        .unwrap_or(0);

    let mut instances = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let labels = LabelSet::new(q, row.labels.iter().copied())?;
        let x = densify(&row.features, d);
        let x_star = priv_rows.as_ref().map(|rows| densify(&rows[i], d_star));
        instances.push(Instance::new(x, x_star, labels));
    }
    MultiLabelDataset::new(instances, q)
}

fn push_float(buf: &mut String, v: f64) {
    // 17 significant digits: lossless f64 round trip through decimal text.
    let _ = write!(buf, "{v:.16e}");
}

fn format_features(buf: &mut String, x: &[f64]) {
    for (j, &v) in x.iter().enumerate() {
        if v != 0.0 {
            let _ = write!(buf, " {}:", j + 1);
            push_float(buf, v);
        }
    }
}

/// Serialize the available side of a dataset in the sparse text format.
pub fn format_available(ds: &MultiLabelDataset) -> String {
    let mut buf = String::new();
    for inst in ds.instances() {
        let labels: Vec<String> = inst.labels().iter().map(|k| k.to_string()).collect();
        buf.push_str(&labels.join(","));
        format_features(&mut buf, inst.x());
        buf.push('\n');
    }
    buf
}

/// Serialize the privileged side (no label field), if the dataset has one.
pub fn format_privileged(ds: &MultiLabelDataset) -> Option<String> {
    if !ds.has_privileged() {
        return None;
    }
    let mut buf = String::new();
    for inst in ds.instances() {
        let mut line = String::new();
        format_features(&mut line, inst.x_star().unwrap());
        // format_features emits a leading separator space; drop it here
        // since privileged lines carry no label field.
        buf.push_str(line.trim_start());
        buf.push('\n');
    }
    Some(buf)
}

/// Write a dataset back to disk in the ingestion format.
pub fn write_dataset(
    ds: &MultiLabelDataset,
    available_path: &Path,
    privileged_path: Option<&Path>,
) -> Result<()> {
    std::fs::write(available_path, format_available(ds))?;
    if let Some(p) = privileged_path {
        let body = format_privileged(ds).ok_or_else(|| {
            Error::Data("privileged output requested but dataset has d_star = 0".into())
        })?;
        std::fs::write(p, body)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_documented_format() {
        let f = write_tmp("0,2 1:0.5 3:-1.0\n");
        let ds = load_dataset(f.path(), None, Some(3)).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.q(), 3);
        assert_eq!(ds.d(), 3);
        assert_eq!(ds.instance(0).x(), &[0.5, 0.0, -1.0]);
        assert_eq!(ds.labels(0).to_vec(), vec![0, 2]);
    }

    #[test]
    fn infers_label_universe() {
        let f = write_tmp("0 1:1.0\n4 1:2.0\n");
        let ds = load_dataset(f.path(), None, None).unwrap();
        assert_eq!(ds.q(), 5);
    }

    #[test]
    fn empty_label_field_and_comments() {
        let f = write_tmp("# header comment\n0,1 1:1.0\n 1:2.0 2:3.0\n");
        let ds = load_dataset(f.path(), None, None).unwrap();
        assert_eq!(ds.n(), 2);
        assert!(ds.labels(1).is_empty());
        assert_eq!(ds.instance(1).x(), &[2.0, 3.0]);
    }

    #[test]
    fn line_count_mismatch_is_an_error() {
        let avail = write_tmp("0 1:1.0\n1 1:2.0\n");
        let privf = write_tmp("1:1.0\n");
        let err = load_dataset(avail.path(), Some(privf.path()), None).unwrap_err();
        assert!(err.to_string().contains("aligned file length mismatch"));
    }

    #[test]
    fn missing_privileged_file_means_d_star_zero() {
        let f = write_tmp("0 1:1.0\n1 1:2.0\n");
        let ds = load_dataset(f.path(), None, None).unwrap();
        assert_eq!(ds.d_star(), 0);
        assert!(!ds.has_privileged());
    }

    #[test]
    fn negative_label_reports_line() {
        let f = write_tmp("0 1:1.0\n-2 1:2.0\n");
        let err = load_dataset(f.path(), None, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":2:"), "missing line number: {msg}");
        assert!(msg.contains("label index negative"));
    }

    #[test]
    fn non_increasing_feature_index_reports_line() {
        let f = write_tmp("0 2:1.0 2:2.0\n");
        let err = load_dataset(f.path(), None, None).unwrap_err();
        assert!(err.to_string().contains("non-increasing"));
    }

    #[test]
    fn malformed_feature_token_reports_line() {
        let f = write_tmp("0 1:1.0\n1 oops\n");
        let err = load_dataset(f.path(), None, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":2:"), "missing line number: {msg}");
        assert!(msg.contains("malformed"));
    }

    #[test]
    fn ranking_pairs_cartesian_product() {
        let f = write_tmp("0,1 1:1.0\n 1:1.0\n0,1,2 1:1.0\n");
        let ds = load_dataset(f.path(), None, Some(3)).unwrap();
        let pairs = ds.ranking_pairs(0);
        assert_eq!(
            pairs,
            vec![RankingPair { i: 0, j: 0, l: 2 }, RankingPair { i: 0, j: 1, l: 2 }]
        );
        assert!(ds.ranking_pairs(1).is_empty());
        assert!(ds.ranking_pairs(2).is_empty());
    }

    #[test]
    fn q_override_must_cover_labels() {
        let f = write_tmp("0,4 1:1.0\n");
        assert!(load_dataset(f.path(), None, Some(3)).is_err());
    }

    fn arb_dataset() -> impl Strategy<Value = MultiLabelDataset> {
        (2usize..6, 1usize..5, 1usize..8).prop_flat_map(|(q, d, n)| {
            let inst = (
                proptest::collection::vec(0.01f64..10.0, d),
                proptest::collection::vec(0.01f64..10.0, d + 1),
                proptest::collection::vec(0usize..q, 0..q),
            );
            proptest::collection::vec(inst, n).prop_map(move |rows| {
                let instances = rows
                    .into_iter()
                    .map(|(x, xs, labels)| {
                        Instance::new(x, Some(xs), LabelSet::new(q, labels).unwrap())
                    })
                    .collect();
                MultiLabelDataset::new(instances, q).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn pair_count_matches_label_counts(ds in arb_dataset()) {
            for i in 0..ds.n() {
                let labels = ds.labels(i);
                let pairs = ds.ranking_pairs(i);
                prop_assert_eq!(pairs.len(), labels.len() * labels.absent_len());
                for p in &pairs {
                    prop_assert!(labels.contains(p.j));
                    prop_assert!(!labels.contains(p.l));
                    prop_assert_ne!(p.j, p.l);
                }
            }
        }

        #[test]
        fn round_trip_through_files(ds in arb_dataset()) {
            let dir = tempfile::tempdir().unwrap();
            let apath = dir.path().join("a.data");
            let ppath = dir.path().join("a.priv");
            write_dataset(&ds, &apath, Some(&ppath)).unwrap();
            let reloaded = load_dataset(&apath, Some(&ppath), Some(ds.q())).unwrap();
            prop_assert_eq!(reloaded.n(), ds.n());
            prop_assert_eq!(reloaded.d(), ds.d());
            prop_assert_eq!(reloaded.d_star(), ds.d_star());
            for i in 0..ds.n() {
                prop_assert_eq!(reloaded.instance(i), ds.instance(i));
            }
        }
    }
}
