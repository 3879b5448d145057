//! Shared data model: ground truth, score/prediction matrices, sample sets,
//! and the experiment bundle tying them together.
//!
//! All types are immutable after construction. Constructors only reject
//! structurally unrepresentable input (e.g. a ragged matrix); semantic
//! invariants are checked by [`validate_bundle`], which reports every
//! violation instead of aborting on the first.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Per-sample binary membership labels for the target dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    labels: Vec<u8>,
}

impl GroundTruth {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("ground truth labels".into()));
        }
        if let Some(pos) = labels.iter().position(|&l| l > 1) {
            return Err(Error::ShapeMismatch(format!(
                "ground truth label at index {pos} is not in {{0,1}}"
            )));
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_member(&self, idx: usize) -> bool {
        self.labels[idx] == 1
    }

    pub fn n_members(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn n_nonmembers(&self) -> usize {
        self.len() - self.n_members()
    }

    pub fn both_classes_present(&self) -> bool {
        self.n_members() > 0 && self.n_members() < self.len()
    }
}

/// Per-attack matrix of real-valued MIA scores. Rows are attack instances
/// (one per seed), columns are target samples. Higher score = more
/// member-like, uniformly across all attacks.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub attack_name: String,
    n_samples: usize,
    values: Vec<f64>,
    seed_labels: Vec<String>,
}

impl ScoreMatrix {
    pub fn new(
        attack_name: impl Into<String>,
        n_samples: usize,
        values: Vec<f64>,
        seed_labels: Vec<String>,
    ) -> Result<Self> {
        let attack_name = attack_name.into();
        if seed_labels.is_empty() {
            return Err(Error::EmptyInput(format!(
                "score matrix '{attack_name}' has no instances"
            )));
        }
        if values.len() != n_samples * seed_labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "score matrix '{}': {} values, expected {} instances x {} samples",
                attack_name,
                values.len(),
                seed_labels.len(),
                n_samples
            )));
        }
        Ok(Self {
            attack_name,
            n_samples,
            values,
            seed_labels,
        })
    }

    pub fn from_rows(
        attack_name: impl Into<String>,
        rows: Vec<Vec<f64>>,
        seed_labels: Vec<String>,
    ) -> Result<Self> {
        let attack_name = attack_name.into();
        let n_samples = rows.first().map(|r| r.len()).unwrap_or(0);
        if let Some(bad) = rows.iter().position(|r| r.len() != n_samples) {
            return Err(Error::ShapeMismatch(format!(
                "score matrix '{attack_name}': row {bad} has {} values, expected {n_samples}",
                rows[bad].len()
            )));
        }
        let values = rows.into_iter().flatten().collect();
        Self::new(attack_name, n_samples, values, seed_labels)
    }

    pub fn n_instances(&self) -> usize {
        self.seed_labels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn seed_labels(&self) -> &[String] {
        &self.seed_labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_samples.max(1))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Binary membership predictions derived from a [`ScoreMatrix`] by
/// FPR-calibrated thresholding, one row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub attack_name: String,
    n_samples: usize,
    values: Vec<u8>,
    /// Target FPR level the thresholds were calibrated to.
    pub target_fpr: f64,
    /// Exact empirical FPR of each row against the bundle's ground truth.
    pub achieved_fpr: Vec<f64>,
    /// Threshold selected for each row.
    pub thresholds: Vec<f64>,
}

impl PredictionMatrix {
    pub fn new(
        attack_name: impl Into<String>,
        n_samples: usize,
        values: Vec<u8>,
        target_fpr: f64,
        achieved_fpr: Vec<f64>,
        thresholds: Vec<f64>,
    ) -> Result<Self> {
        let attack_name = attack_name.into();
        if n_samples == 0 || !values.len().is_multiple_of(n_samples) {
            return Err(Error::ShapeMismatch(format!(
                "prediction matrix '{}': {} values not divisible into {}-sample rows",
                attack_name,
                values.len(),
                n_samples
            )));
        }
        let n_instances = values.len() / n_samples;
        if achieved_fpr.len() != n_instances || thresholds.len() != n_instances {
            return Err(Error::ShapeMismatch(format!(
                "prediction matrix '{attack_name}': per-instance metadata length mismatch"
            )));
        }
        if let Some(pos) = values.iter().position(|&v| v > 1) {
            return Err(Error::ShapeMismatch(format!(
                "prediction matrix '{attack_name}': non-binary entry at flat index {pos}"
            )));
        }
        Ok(Self {
            attack_name,
            n_samples,
            values,
            target_fpr,
            achieved_fpr,
            thresholds,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.values.len() / self.n_samples
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.values[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.values.chunks(self.n_samples)
    }
}

/// Ordered set of sample indices drawn from a universe of fixed size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    indices: Vec<usize>,
    universe_size: usize,
}

impl SampleSet {
    pub fn new(mut indices: Vec<usize>, universe_size: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= universe_size) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                universe: universe_size,
            });
        }
        Ok(Self {
            indices,
            universe_size,
        })
    }

    pub fn empty(universe_size: usize) -> Self {
        Self {
            indices: Vec::new(),
            universe_size,
        }
    }

    pub fn from_mask(mask: impl Iterator<Item = bool>, universe_size: usize) -> Self {
        let indices = mask
            .take(universe_size)
            .enumerate()
            .filter_map(|(i, m)| m.then_some(i))
            .collect();
        Self {
            indices,
            universe_size,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }

    pub fn is_subset_of(&self, other: &SampleSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    pub fn union(&self, other: &SampleSet) -> Result<SampleSet> {
        self.check_universe(other)?;
        let mut merged = self.indices.clone();
        merged.extend_from_slice(&other.indices);
        SampleSet::new(merged, self.universe_size)
    }

    pub fn intersection(&self, other: &SampleSet) -> Result<SampleSet> {
        self.check_universe(other)?;
        let indices = self
            .indices
            .iter()
            .copied()
            .filter(|&i| other.contains(i))
            .collect();
        Ok(SampleSet {
            indices,
            universe_size: self.universe_size,
        })
    }

    pub fn difference(&self, other: &SampleSet) -> Result<SampleSet> {
        self.check_universe(other)?;
        let indices = self
            .indices
            .iter()
            .copied()
            .filter(|&i| !other.contains(i))
            .collect();
        Ok(SampleSet {
            indices,
            universe_size: self.universe_size,
        })
    }

    pub fn intersection_len(&self, other: &SampleSet) -> usize {
        self.indices.iter().filter(|&&i| other.contains(i)).count()
    }

    pub(crate) fn check_universe(&self, other: &SampleSet) -> Result<()> {
        if self.universe_size != other.universe_size {
            return Err(Error::UniverseMismatch(
                self.universe_size,
                other.universe_size,
            ));
        }
        Ok(())
    }
}

/// A per-sample signal emitted by the (real or simulated) models:
/// either one value per sample or a ragged list per sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl Signal {
    pub fn n_samples(&self) -> usize {
        match self {
            Signal::Vector(v) => v.len(),
            Signal::Matrix(m) => m.len(),
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Signal::Vector(v) => Some(v),
            Signal::Matrix(_) => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&[Vec<f64>]> {
        match self {
            Signal::Matrix(m) => Some(m),
            Signal::Vector(_) => None,
        }
    }

    fn iter_values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            Signal::Vector(v) => Box::new(v.iter().copied()),
            Signal::Matrix(m) => Box::new(m.iter().flatten().copied()),
        }
    }
}

/// Named collection of attacks with their score matrices, ground truth,
/// optional model signals and canary mask.
#[derive(Debug, Clone)]
pub struct ExperimentBundle {
    pub ground_truth: GroundTruth,
    pub attacks: BTreeMap<String, ScoreMatrix>,
    pub signals: BTreeMap<String, Signal>,
    pub canary_mask: Option<Vec<u8>>,
    pub metadata: BTreeMap<String, String>,
}

impl ExperimentBundle {
    pub fn n_samples(&self) -> usize {
        self.ground_truth.len()
    }

    pub fn attack(&self, name: &str) -> Result<&ScoreMatrix> {
        self.attacks
            .get(name)
            .ok_or_else(|| Error::UnknownAttack(name.to_string()))
    }

    pub fn attack_names(&self) -> Vec<String> {
        self.attacks.keys().cloned().collect()
    }
}

/// One invariant violation found by [`validate_bundle`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub type_name: String,
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(type_name: &str, field: &str, message: String) -> Self {
        Self {
            type_name: type_name.into(),
            field: field.into(),
            message,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}: {}", self.type_name, self.field, self.message)
    }
}

/// Result of validating a bundle. Empty `violations` means the bundle is
/// accepted by every downstream operation's shape/finiteness preconditions.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Checks every invariant of the bundle and its parts, reporting all
/// violations. Never aborts; idempotent and side-effect free.
pub fn validate_bundle(bundle: &ExperimentBundle) -> ValidationReport {
    let mut report = ValidationReport::default();
    let gt = &bundle.ground_truth;
    let n = gt.len();

    if !gt.both_classes_present() {
        report.violations.push(Violation::new(
            "GroundTruth",
            "labels",
            "both classes must be present".into(),
        ));
    } else if gt.n_members() != gt.n_nonmembers() {
        report.warnings.push(format!(
            "unbalanced membership prior: {} members vs {} non-members",
            gt.n_members(),
            gt.n_nonmembers()
        ));
    }

    for (name, sm) in &bundle.attacks {
        if sm.n_samples() != n {
            report.violations.push(Violation::new(
                "ScoreMatrix",
                "values",
                format!("length mismatch: gt={}, scores={} (attack '{name}')", n, sm.n_samples()),
            ));
        }
        for (i, row) in sm.rows().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    report.violations.push(Violation::new(
                        "ScoreMatrix",
                        "values",
                        format!("non-finite score in attack '{name}' at row {i}, column {j}"),
                    ));
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for label in sm.seed_labels() {
            if !seen.insert(label) {
                report.violations.push(Violation::new(
                    "ScoreMatrix",
                    "seed_labels",
                    format!("duplicate seed label '{label}' in attack '{name}'"),
                ));
            }
        }
    }

    for (sig_name, sig) in &bundle.signals {
        if sig.n_samples() != n {
            report.violations.push(Violation::new(
                "ExperimentBundle",
                "signals",
                format!(
                    "length mismatch: gt={}, signal '{sig_name}'={}",
                    n,
                    sig.n_samples()
                ),
            ));
        }
        if let Some(pos) = sig.iter_values().position(|v| !v.is_finite()) {
            report.violations.push(Violation::new(
                "ExperimentBundle",
                "signals",
                format!("non-finite value in signal '{sig_name}' at flat position {pos}"),
            ));
        }
    }

    if let Some(mask) = &bundle.canary_mask {
        if mask.len() != n {
            report.violations.push(Violation::new(
                "ExperimentBundle",
                "canary_mask",
                format!("length mismatch: gt={}, canary_mask={}", n, mask.len()),
            ));
        }
        for (i, (&c, &g)) in mask.iter().zip(gt.labels()).enumerate() {
            if c > 1 {
                report.violations.push(Violation::new(
                    "ExperimentBundle",
                    "canary_mask",
                    format!("non-binary canary flag at index {i}"),
                ));
            } else if c == 1 && g == 0 {
                report.violations.push(Violation::new(
                    "ExperimentBundle",
                    "canary_mask",
                    format!("canary flag on non-member at index {i}"),
                ));
            }
        }
    }

    report
}
