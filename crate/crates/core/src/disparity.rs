//! Set algebra over prediction matrices: Jaccard similarity, consistency,
//! coverage, stability, convergence curves over instance count, and
//! method-level similarity / unique-sample extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::threshold_matrix;
use crate::model::{ExperimentBundle, GroundTruth, PredictionMatrix, SampleSet, ScoreMatrix};
use crate::par;

/// Which positives a detected-member set keeps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionMode {
    /// Positives intersected with true members (default).
    #[default]
    TruePositivesOnly,
    /// Every positive prediction, member or not.
    AllPositives,
}

/// Basis set for method-level similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityBasis {
    Coverage,
    Stability,
}

/// |a n b| / |a u b|, with J(empty, empty) = 1: two attacks detecting
/// nothing behave identically.
pub fn jaccard(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    a.check_universe(b)?;
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Indices predicted member by one instance row, optionally restricted to
/// true members.
pub fn detected_members(preds_row: &[u8], gt: &GroundTruth, mode: DetectionMode) -> SampleSet {
    let n = gt.len().min(preds_row.len());
    SampleSet::from_mask(
        (0..n).map(|i| {
            preds_row[i] == 1
                && match mode {
                    DetectionMode::TruePositivesOnly => gt.is_member(i),
                    DetectionMode::AllPositives => true,
                }
        }),
        gt.len(),
    )
}

fn row_sets(pm: &PredictionMatrix, gt: &GroundTruth, mode: DetectionMode) -> Vec<SampleSet> {
    pm.rows().map(|row| detected_members(row, gt, mode)).collect()
}

/// Mean pairwise Jaccard similarity over all instance pairs.
pub fn consistency(pm: &PredictionMatrix, gt: &GroundTruth, mode: DetectionMode) -> Result<f64> {
    let n = pm.n_instances();
    if n < 2 {
        return Err(Error::TooFewInstances {
            required: 2,
            actual: n,
        });
    }
    let sets = row_sets(pm, gt, mode);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let sims = par::map_slice(&pairs, |&(i, j)| jaccard(&sets[i], &sets[j]).unwrap());
    Ok(sims.iter().sum::<f64>() / pairs.len() as f64)
}

/// Union of detected-member sets over all instances.
pub fn coverage_set(
    pm: &PredictionMatrix,
    gt: &GroundTruth,
    mode: DetectionMode,
) -> Result<SampleSet> {
    let sets = row_sets(pm, gt, mode);
    let mut acc = SampleSet::empty(gt.len());
    for s in &sets {
        acc = acc.union(s)?;
    }
    Ok(acc)
}

/// Intersection of detected-member sets over all instances.
pub fn stability_set(
    pm: &PredictionMatrix,
    gt: &GroundTruth,
    mode: DetectionMode,
) -> Result<SampleSet> {
    let mut sets = row_sets(pm, gt, mode).into_iter();
    let mut acc = sets
        .next()
        .ok_or_else(|| Error::EmptyInput("prediction matrix has no instances".into()))?;
    for s in sets {
        acc = acc.intersection(&s)?;
    }
    Ok(acc)
}

/// Metrics of an aggregated (coverage or stability) set at one prefix
/// length. FPR and precision always come from the all-positives
/// aggregation; TPR and set size follow the requested detection mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateStats {
    pub tpr: f64,
    pub fpr: f64,
    pub precision: Option<f64>,
    pub set_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub k: usize,
    pub coverage: AggregateStats,
    pub stability: AggregateStats,
}

/// Coverage/stability metrics for every instance-count prefix 1..=n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCurve {
    pub points: Vec<ConvergencePoint>,
}

fn aggregate_stats(
    mode_set: &SampleSet,
    all_set: &SampleSet,
    gt: &GroundTruth,
) -> AggregateStats {
    let p = gt.n_members() as f64;
    let n = gt.n_nonmembers() as f64;
    let tp_mode = mode_set
        .indices()
        .iter()
        .filter(|&&i| gt.is_member(i))
        .count();
    let tp_all = all_set
        .indices()
        .iter()
        .filter(|&&i| gt.is_member(i))
        .count();
    let fp_all = all_set.len() - tp_all;
    AggregateStats {
        tpr: tp_mode as f64 / p,
        fpr: fp_all as f64 / n,
        precision: if all_set.is_empty() {
            None
        } else {
            Some(tp_all as f64 / all_set.len() as f64)
        },
        set_size: mode_set.len(),
    }
}

/// Coverage/stability at each prefix of `instance_order`.
pub fn convergence_curves(
    pm: &PredictionMatrix,
    gt: &GroundTruth,
    mode: DetectionMode,
    instance_order: &[usize],
) -> Result<ConvergenceCurve> {
    let n = pm.n_instances();
    let mut seen = vec![false; n];
    if instance_order.len() != n
        || instance_order.iter().any(|&i| {
            if i >= n || seen[i] {
                true
            } else {
                seen[i] = true;
                false
            }
        })
    {
        return Err(Error::ShapeMismatch(format!(
            "instance_order must be a permutation of 0..{n}"
        )));
    }

    let mut points = Vec::with_capacity(n);
    let mut cov_mode: Option<SampleSet> = None;
    let mut stab_mode: Option<SampleSet> = None;
    let mut cov_all: Option<SampleSet> = None;
    let mut stab_all: Option<SampleSet> = None;
    for (k, &row_idx) in instance_order.iter().enumerate() {
        let row = pm.row(row_idx);
        let set_mode = detected_members(row, gt, mode);
        let set_all = detected_members(row, gt, DetectionMode::AllPositives);
        cov_mode = Some(match cov_mode {
            None => set_mode.clone(),
            Some(acc) => acc.union(&set_mode)?,
        });
        stab_mode = Some(match stab_mode {
            None => set_mode,
            Some(acc) => acc.intersection(&set_mode)?,
        });
        cov_all = Some(match cov_all {
            None => set_all.clone(),
            Some(acc) => acc.union(&set_all)?,
        });
        stab_all = Some(match stab_all {
            None => set_all,
            Some(acc) => acc.intersection(&set_all)?,
        });
        points.push(ConvergencePoint {
            k: k + 1,
            coverage: aggregate_stats(cov_mode.as_ref().unwrap(), cov_all.as_ref().unwrap(), gt),
            stability: aggregate_stats(
                stab_mode.as_ref().unwrap(),
                stab_all.as_ref().unwrap(),
                gt,
            ),
        });
    }
    Ok(ConvergenceCurve { points })
}

/// Symmetric matrix of Jaccard similarities between attack methods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMatrix {
    pub attack_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub basis: SimilarityBasis,
}

impl SimilarityMatrix {
    /// Mean of the off-diagonal upper-triangle entries.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.attack_names.len();
        if n < 2 {
            return f64::NAN;
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                sum += self.values[i][j];
                count += 1;
            }
        }
        sum / count as f64
    }
}

fn truncated_matrix(sm: &ScoreMatrix, n_instances: usize) -> Result<ScoreMatrix> {
    if sm.n_instances() < n_instances {
        return Err(Error::InsufficientInstances {
            attack: sm.attack_name.clone(),
            required: n_instances,
            actual: sm.n_instances(),
        });
    }
    let rows: Vec<Vec<f64>> = sm.rows().take(n_instances).map(|r| r.to_vec()).collect();
    ScoreMatrix::from_rows(
        sm.attack_name.clone(),
        rows,
        sm.seed_labels()[..n_instances].to_vec(),
    )
}

/// Coverage or stability set of one attack, built from its first
/// `n_instances` rows thresholded per instance at `beta`.
pub fn attack_basis_set(
    bundle: &ExperimentBundle,
    attack: &str,
    basis: SimilarityBasis,
    n_instances: usize,
    beta: f64,
    mode: DetectionMode,
) -> Result<SampleSet> {
    let sm = truncated_matrix(bundle.attack(attack)?, n_instances)?;
    let pm = threshold_matrix(&sm, &bundle.ground_truth, beta)?;
    match basis {
        SimilarityBasis::Coverage => coverage_set(&pm, &bundle.ground_truth, mode),
        SimilarityBasis::Stability => stability_set(&pm, &bundle.ground_truth, mode),
    }
}

/// Pairwise Jaccard similarity of per-attack coverage or stability sets.
pub fn method_similarity(
    bundle: &ExperimentBundle,
    basis: SimilarityBasis,
    n_instances: usize,
    beta: f64,
    mode: DetectionMode,
) -> Result<SimilarityMatrix> {
    let names = bundle.attack_names();
    let sets: Vec<SampleSet> = names
        .iter()
        .map(|name| attack_basis_set(bundle, name, basis, n_instances, beta, mode))
        .collect::<Result<_>>()?;
    let m = names.len();
    let values = par::map_indexed(m, |i| {
        (0..m)
            .map(|j| jaccard(&sets[i], &sets[j]).unwrap())
            .collect::<Vec<f64>>()
    });
    Ok(SimilarityMatrix {
        attack_names: names,
        values,
        basis,
    })
}

/// Members in `attack`'s stability set but in no other attack's stability
/// set.
pub fn unique_samples(
    bundle: &ExperimentBundle,
    attack: &str,
    n_instances: usize,
    beta: f64,
    mode: DetectionMode,
) -> Result<SampleSet> {
    if bundle.attacks.len() < 2 {
        return Err(Error::TooFewInstances {
            required: 2,
            actual: bundle.attacks.len(),
        });
    }
    let own = attack_basis_set(
        bundle,
        attack,
        SimilarityBasis::Stability,
        n_instances,
        beta,
        mode,
    )?;
    let mut others = SampleSet::empty(bundle.n_samples());
    for name in bundle.attacks.keys() {
        if name == attack {
            continue;
        }
        let s = attack_basis_set(
            bundle,
            name,
            SimilarityBasis::Stability,
            n_instances,
            beta,
            mode,
        )?;
        others = others.union(&s)?;
    }
    own.difference(&others)
}

/// Members identified by `attack`'s coverage.
pub fn covered_samples(
    bundle: &ExperimentBundle,
    attack: &str,
    n_instances: usize,
    beta: f64,
    mode: DetectionMode,
) -> Result<SampleSet> {
    attack_basis_set(
        bundle,
        attack,
        SimilarityBasis::Coverage,
        n_instances,
        beta,
        mode,
    )
}
