//! Shared data model: feature matrices, labeled/unlabeled domains, pseudo-label
//! state, projections and experiment configuration.
//!
//! Matrices store one sample per column. All types are immutable once built;
//! operations that change them return new values.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyMask;

/// Dense `m x n` feature matrix, column `i` is sample `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyMatrix {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        if let Some((idx, _)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let rows = data.nrows();
            return Err(Error::NonFiniteData {
                row: idx % rows,
                col: idx / rows,
            });
        }
        Ok(Self(data))
    }

    /// Builds a matrix from per-sample vectors, which must share a length.
    pub fn from_columns<S: AsRef<[f64]>>(columns: &[S]) -> Result<Self> {
        let n = columns.len();
        let m = columns.first().map_or(0, |c| c.as_ref().len());
        let mut data = Vec::with_capacity(m * n);
        for col in columns {
            let col = col.as_ref();
            if col.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: col.len(),
                });
            }
            data.extend_from_slice(col);
        }
        Self::new(DMatrix::from_vec(m, n, data))
    }

    /// Feature dimension `m`.
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Number of samples `n`.
    pub fn n_samples(&self) -> usize {
        self.0.ncols()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let m = self.dim();
        &self.0.as_slice()[i * m..(i + 1) * m]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Copies the listed columns, in order, into a new matrix.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyMatrix {
                rows: self.dim(),
                cols: 0,
            });
        }
        Ok(Self(self.0.select_columns(indices)))
    }

    /// Concatenates `[self, other]` column-wise.
    pub fn hstack(&self, other: &FeatureMatrix) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let mut data = Vec::with_capacity(self.0.len() + other.0.len());
        data.extend_from_slice(self.0.as_slice());
        data.extend_from_slice(other.0.as_slice());
        Ok(Self(DMatrix::from_vec(
            self.dim(),
            self.n_samples() + other.n_samples(),
            data,
        )))
    }

    /// Multiplies every entry by `factor` (used by scale-invariance checks).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.0 * factor)
    }
}

/// Labeled source domain. Labels are dense class ids in `[0, C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDomain {
    features: FeatureMatrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDomain {
    /// Infers `C` as `max(label) + 1`; every class below it must occur.
    pub fn new(features: FeatureMatrix, labels: Vec<usize>) -> Result<Self> {
        let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        Self::with_classes(features, labels, num_classes)
    }

    pub fn with_classes(
        features: FeatureMatrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.len() != features.n_samples() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: features.n_samples(),
            });
        }
        let mut counts = vec![0usize; num_classes];
        for &l in &labels {
            if l >= num_classes {
                return Err(Error::InvalidConfig(format!(
                    "label {l} outside [0, {num_classes})"
                )));
            }
            counts[l] += 1;
        }
        if let Some(class) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass { class });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    /// Same labels, new features (e.g. after projection).
    pub fn with_features(&self, features: FeatureMatrix) -> Result<Self> {
        Self::with_classes(features, self.labels.clone(), self.num_classes)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledDomain {
    features: FeatureMatrix,
}

impl UnlabeledDomain {
    pub fn new(features: FeatureMatrix) -> Self {
        Self { features }
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn n_samples(&self) -> usize {
        self.features.n_samples()
    }
}

/// Checks that both domains live in the same feature space.
///
/// Finiteness and class coverage are enforced by the constructors; this is the
/// single place that ties the two domains together.
pub fn validate_domains(
    source: LabeledDomain,
    target: UnlabeledDomain,
) -> Result<(LabeledDomain, UnlabeledDomain)> {
    if source.features().dim() != target.features().dim() {
        return Err(Error::DimensionMismatch {
            expected: source.features().dim(),
            found: target.features().dim(),
        });
    }
    Ok((source, target))
}

/// Current target pseudo labels with their confidence partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudoLabelState {
    labels: Vec<usize>,
    high_conf: Vec<usize>,
    low_conf: Vec<usize>,
}

impl PseudoLabelState {
    /// Every sample starts out high-confidence.
    pub fn all_high(labels: Vec<usize>) -> Result<Self> {
        let high = (0..labels.len()).collect();
        Self::from_partition(labels, high, Vec::new())
    }

    pub fn from_partition(
        labels: Vec<usize>,
        mut high_conf: Vec<usize>,
        mut low_conf: Vec<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidPseudoLabels("no target samples".into()));
        }
        high_conf.sort_unstable();
        low_conf.sort_unstable();
        let mut seen = vec![false; n];
        for &i in high_conf.iter().chain(&low_conf) {
            if i >= n {
                return Err(Error::InvalidPseudoLabels(format!(
                    "index {i} out of range for {n} samples"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPseudoLabels(format!(
                    "index {i} appears more than once"
                )));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPseudoLabels(format!(
                "index {missing} is in neither partition"
            )));
        }
        Ok(Self {
            labels,
            high_conf,
            low_conf,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }

    pub fn high_conf(&self) -> &[usize] {
        &self.high_conf
    }

    pub fn low_conf(&self) -> &[usize] {
        &self.low_conf
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    /// `C_y`, the number of distinct pseudo classes.
    pub fn num_distinct(&self) -> usize {
        self.labels.iter().collect::<BTreeSet<_>>().len()
    }

    pub fn high_fraction(&self) -> f64 {
        self.high_conf.len() as f64 / self.labels.len() as f64
    }

    /// High-confidence counts per class id in `[0, num_classes)`.
    pub fn high_counts_per_class(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &i in &self.high_conf {
            if let Some(c) = counts.get_mut(self.labels[i]) {
                *c += 1;
            }
        }
        counts
    }
}

/// Linear map `z = P x` with `P` of shape `k x m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    matrix: DMatrix<f64>,
}

impl Projection {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let (k, m) = matrix.shape();
        if k == 0 || m == 0 {
            return Err(Error::EmptyMatrix { rows: k, cols: m });
        }
        if k > m {
            return Err(Error::InvalidConfig(format!(
                "projection has {k} rows but only {m} input features"
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::EigSolverFailure("non-finite projection".into()));
        }
        if let Some(r) = (0..k).find(|&r| matrix.row(r).iter().all(|&v| v == 0.0)) {
            return Err(Error::EigSolverFailure(format!(
                "projection row {r} is all zero"
            )));
        }
        Ok(Self { matrix })
    }

    /// `k x m` selector of the first `k` coordinates.
    pub fn identity(k: usize, m: usize) -> Result<Self> {
        Self::new(DMatrix::identity(k, m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.dim(),
            });
        }
        FeatureMatrix::new(&self.matrix * x.as_matrix())
    }
}

/// Thresholded cosine-similarity graph of one pseudo class.
#[derive(Clone, Debug)]
pub struct ClassSimilarityGraph {
    pub class_id: usize,
    /// Target indices of the class members, ascending.
    pub member_indices: Vec<usize>,
    /// Pairwise cosine similarity with a zero diagonal.
    pub similarity: DMatrix<f64>,
    pub threshold: f64,
    pub mask: AdjacencyMask,
    pub degrees: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    /// No transform; the plain nearest-neighbour baseline.
    Identity,
    /// Joint distribution adaptation: marginal plus conditional MMD.
    #[default]
    Jda,
    /// Balanced distribution adaptation: `mu` weights conditional vs marginal.
    Bda,
}

impl AdapterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AdapterKind::Identity => "identity",
            AdapterKind::Jda => "jda",
            AdapterKind::Bda => "bda",
        }
    }
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdapterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "nn" => Ok(AdapterKind::Identity),
            "jda" => Ok(AdapterKind::Jda),
            "bda" => Ok(AdapterKind::Bda),
            other => Err(Error::InvalidConfig(format!("unknown adapter `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Trust parameter in `(0, 1)`: similarity percentile used as edge threshold.
    pub rho: f64,
    /// TSRP inner iterations.
    pub inner_iters: usize,
    /// Outer adaptation iterations.
    pub outer_iters: usize,
    pub subspace_dim: usize,
    /// Ridge on the MMD side of the eigenproblem.
    pub lambda: f64,
    /// Conditional weight for the balanced adapter.
    pub mu: f64,
    pub adapter: AdapterKind,
    pub seed: u64,
    /// Run the remedy inner loop after each pseudo-labelling step.
    pub tsrp: bool,
    /// Stop the outer loop once pseudo labels stop changing.
    pub early_stop: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rho: 0.85,
            inner_iters: 3,
            outer_iters: 10,
            subspace_dim: 100,
            lambda: 1.0,
            mu: 0.5,
            adapter: AdapterKind::Jda,
            seed: 0,
            tsrp: true,
            early_stop: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie strictly inside (0, 1), got {}",
                self.rho
            )));
        }
        if self.inner_iters == 0 || self.outer_iters == 0 {
            return Err(Error::InvalidConfig(
                "iteration counts must be positive".into(),
            ));
        }
        if self.subspace_dim == 0 || self.subspace_dim > feature_dim {
            return Err(Error::InvalidConfig(format!(
                "subspace_dim {} must be in [1, {feature_dim}]",
                self.subspace_dim
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda {} must be >= 0",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::InvalidConfig(format!(
                "mu {} must be in [0, 1]",
                self.mu
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(m: usize, n: usize) -> FeatureMatrix {
        FeatureMatrix::new(DMatrix::from_fn(m, n, |i, j| (i + 2 * j) as f64 + 1.0)).unwrap()
    }

    #[test]
    fn validate_accepts_matching_digit_sized_domains() {
        let labels = (0..2000).map(|i| i % 10).collect();
        let source = LabeledDomain::new(matrix(256, 2000), labels).unwrap();
        let target = UnlabeledDomain::new(matrix(256, 1800));
        let (s, t) = validate_domains(source, target).unwrap();
        assert_eq!(s.n_samples(), 2000);
        assert_eq!(t.n_samples(), 1800);
        assert_eq!(s.num_classes(), 10);
    }

    #[test]
    fn validate_rejects_dimension_mismatch() {
        let source = LabeledDomain::new(matrix(4, 3), vec![0, 1, 0]).unwrap();
        let target = UnlabeledDomain::new(matrix(5, 3));
        assert!(matches!(
            validate_domains(source, target),
            Err(Error::DimensionMismatch {
                expected: 4,
                found: 5
            })
        ));
    }

    #[test]
    fn nan_is_rejected() {
        let mut data = DMatrix::from_element(3, 2, 1.0);
        data[(2, 1)] = f64::NAN;
        assert!(matches!(
            FeatureMatrix::new(data),
            Err(Error::NonFiniteData { row: 2, col: 1 })
        ));
    }

    #[test]
    fn missing_source_class_is_rejected() {
        let r = LabeledDomain::with_classes(matrix(2, 3), vec![0, 2, 0], 3);
        assert!(matches!(r, Err(Error::EmptyClass { class: 1 })));
    }

    #[test]
    fn partition_must_be_exact() {
        assert!(PseudoLabelState::from_partition(vec![0, 1, 1], vec![0, 2], vec![1]).is_ok());
        assert!(PseudoLabelState::from_partition(vec![0, 1, 1], vec![0, 1], vec![1]).is_err());
        assert!(PseudoLabelState::from_partition(vec![0, 1, 1], vec![0], vec![1]).is_err());
        assert!(PseudoLabelState::from_partition(vec![0, 1, 1], vec![0, 5], vec![1, 2]).is_err());
    }

    #[test]
    fn projection_preserves_sample_count() {
        let p = Projection::identity(2, 4).unwrap();
        let z = p.apply(&matrix(4, 7)).unwrap();
        assert_eq!((z.dim(), z.n_samples()), (2, 7));
        assert_eq!(z.column(3), &matrix(4, 7).column(3)[..2]);
    }

    #[test]
    fn projection_rejects_zero_row() {
        let mut p = DMatrix::identity(2, 3);
        p[(1, 1)] = 0.0;
        assert!(Projection::new(p).is_err());
    }

    #[test]
    fn config_checks_rho_and_dim() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate(256).is_ok());
        assert!(cfg.validate(50).is_err());
        cfg.rho = 1.0;
        assert!(cfg.validate(256).is_err());
    }

    #[test]
    fn config_parses_from_toml() {
        let cfg: ExperimentConfig =
            toml::from_str("rho = 0.9\nadapter = \"bda\"\nseed = 7").unwrap();
        assert_eq!(cfg.adapter, AdapterKind::Bda);
        assert_eq!(cfg.inner_iters, 3);
        assert_eq!(cfg.seed, 7);
    }
}
