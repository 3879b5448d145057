//! The three prediction-level ensemble strategies (per-attack conjunction,
//! disjunction, or strict majority over instances, then union across
//! attacks) and their ROC evaluation by sweeping the base-instance FPR.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{apply_curve_threshold, confusion, roc_curve, RocCurve};
use crate::model::{ExperimentBundle, PredictionMatrix};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Stability,
    Coverage,
    Majority,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Stability => "stability",
            Strategy::Coverage => "coverage",
            Strategy::Majority => "majority",
        }
    }
}

/// Configuration of one ensemble evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub strategy: Strategy,
    pub attacks: Vec<String>,
    pub n_instances: usize,
    #[serde(default = "default_fpr_grid")]
    pub fpr_grid: Vec<f64>,
}

/// 100 log-spaced FPR values in [1e-6, 1].
pub fn default_fpr_grid() -> Vec<f64> {
    let n = 100;
    (0..n)
        .map(|i| 10f64.powf(-6.0 + 6.0 * i as f64 / (n - 1) as f64))
        .collect()
}

impl EnsembleSpec {
    /// Checks the spec; returns non-fatal warnings (e.g. even-n majority
    /// voting, where ties resolve to non-member).
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.n_instances == 0 {
            return Err(Error::InvalidConfig("n_instances must be >= 1".into()));
        }
        if self.attacks.is_empty() {
            return Err(Error::InvalidConfig("attack list must be non-empty".into()));
        }
        if self.fpr_grid.is_empty() {
            return Err(Error::InvalidConfig("fpr_grid must be non-empty".into()));
        }
        for w in self.fpr_grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidConfig(
                    "fpr_grid must be strictly increasing".into(),
                ));
            }
        }
        if self.fpr_grid[0] <= 0.0 || *self.fpr_grid.last().unwrap() > 1.0 {
            return Err(Error::InvalidConfig(
                "fpr_grid values must lie in (0, 1]".into(),
            ));
        }
        let mut warnings = Vec::new();
        if self.strategy == Strategy::Majority && self.n_instances.is_multiple_of(2) {
            warnings.push(format!(
                "majority voting over an even instance count ({}) resolves ties to non-member",
                self.n_instances
            ));
        }
        Ok(warnings)
    }
}

/// Per-column conjunction, disjunction, or strict majority over the
/// instance rows of a prediction matrix.
pub fn multi_instance_combine(pm: &PredictionMatrix, strategy: Strategy) -> Vec<u8> {
    let n = pm.n_instances();
    let half = n as f64 / 2.0;
    (0..pm.n_samples())
        .map(|col| {
            let votes = pm.rows().filter(|row| row[col] == 1).count();
            let member = match strategy {
                Strategy::Stability => votes == n,
                Strategy::Coverage => votes > 0,
                Strategy::Majority => (votes as f64) > half,
            };
            u8::from(member)
        })
        .collect()
}

/// Element-wise disjunction over per-attack prediction vectors.
pub fn multi_attack_union(per_attack_preds: &[Vec<u8>]) -> Result<Vec<u8>> {
    let first = per_attack_preds
        .first()
        .ok_or_else(|| Error::EmptyInput("per-attack predictions".into()))?;
    let len = first.len();
    if let Some(bad) = per_attack_preds.iter().position(|p| p.len() != len) {
        return Err(Error::ShapeMismatch(format!(
            "prediction vector {bad} has length {}, expected {len}",
            per_attack_preds[bad].len()
        )));
    }
    Ok((0..len)
        .map(|i| u8::from(per_attack_preds.iter().any(|p| p[i] == 1)))
        .collect())
}

/// One evaluated grid point: base instance-level FPR and the resulting
/// ensemble operating point. `base_beta` is `None` on the appended (0,0)
/// and (1,1) anchors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub base_beta: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

/// Result of an FPR sweep: raw achieved points (sorted by FPR, with
/// anchors) plus the Pareto upper envelope, and trapezoidal AUC over both.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleRoc {
    pub points: Vec<SweepPoint>,
    pub envelope: Vec<SweepPoint>,
    pub auc_raw: f64,
    pub auc_envelope: f64,
    pub warnings: Vec<String>,
}

fn staircase_auc(points: &[SweepPoint]) -> f64 {
    let mut area = 0.0;
    for w in points.windows(2) {
        area += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
    }
    area
}

/// Combined ensemble prediction at a single base FPR level.
pub fn ensemble_predictions(
    bundle: &ExperimentBundle,
    spec: &EnsembleSpec,
    beta: f64,
) -> Result<Vec<u8>> {
    let curves = precompute_curves(bundle, spec)?;
    combine_at_beta(bundle, spec, &curves, beta)
}

struct InstanceCurve<'a> {
    scores: &'a [f64],
    curve: RocCurve,
}

fn precompute_curves<'a>(
    bundle: &'a ExperimentBundle,
    spec: &EnsembleSpec,
) -> Result<Vec<Vec<InstanceCurve<'a>>>> {
    let gt = &bundle.ground_truth;
    spec.attacks
        .iter()
        .map(|name| {
            let sm = bundle.attack(name)?;
            if sm.n_instances() < spec.n_instances {
                return Err(Error::InsufficientInstances {
                    attack: name.clone(),
                    required: spec.n_instances,
                    actual: sm.n_instances(),
                });
            }
            (0..spec.n_instances)
                .map(|i| {
                    let scores = sm.row(i);
                    Ok(InstanceCurve {
                        scores,
                        curve: roc_curve(gt, scores)?,
                    })
                })
                .collect()
        })
        .collect()
}

fn combine_at_beta(
    bundle: &ExperimentBundle,
    spec: &EnsembleSpec,
    curves: &[Vec<InstanceCurve<'_>>],
    beta: f64,
) -> Result<Vec<u8>> {
    let gt = &bundle.ground_truth;
    let n = gt.len();
    let half = spec.n_instances as f64 / 2.0;
    let mut per_attack = Vec::with_capacity(curves.len());
    for attack_curves in curves {
        let mut votes = vec![0usize; n];
        for ic in attack_curves {
            let cal = apply_curve_threshold(&ic.curve, gt, ic.scores, beta);
            for (v, &p) in votes.iter_mut().zip(&cal.predictions) {
                *v += p as usize;
            }
        }
        let combined: Vec<u8> = votes
            .iter()
            .map(|&v| {
                u8::from(match spec.strategy {
                    Strategy::Stability => v == attack_curves.len(),
                    Strategy::Coverage => v > 0,
                    Strategy::Majority => (v as f64) > half,
                })
            })
            .collect();
        per_attack.push(combined);
    }
    multi_attack_union(&per_attack)
}

/// Sweeps the base-instance FPR over the grid, recording the ensemble's
/// exact empirical (FPR, TPR) at each point.
pub fn ensemble_roc_sweep(bundle: &ExperimentBundle, spec: &EnsembleSpec) -> Result<EnsembleRoc> {
    let warnings = spec.validate()?;
    let gt = &bundle.ground_truth;
    let curves = precompute_curves(bundle, spec)?;

    let evaluated: Vec<Result<SweepPoint>> = par::map_slice(&spec.fpr_grid, |&beta| {
        let preds = combine_at_beta(bundle, spec, &curves, beta)?;
        let c = confusion(gt, &preds)?;
        Ok(SweepPoint {
            base_beta: Some(beta),
            fpr: c.fp as f64 / gt.n_nonmembers() as f64,
            tpr: c.tp as f64 / gt.n_members() as f64,
        })
    });
    let mut points: Vec<SweepPoint> = evaluated.into_iter().collect::<Result<_>>()?;
    points.push(SweepPoint {
        base_beta: None,
        fpr: 0.0,
        tpr: 0.0,
    });
    points.push(SweepPoint {
        base_beta: None,
        fpr: 1.0,
        tpr: 1.0,
    });
    points.sort_by(|a, b| {
        a.fpr
            .partial_cmp(&b.fpr)
            .unwrap()
            .then(a.tpr.partial_cmp(&b.tpr).unwrap())
    });

    // Pareto upper envelope: keep strictly increasing TPR as FPR grows
    let mut envelope: Vec<SweepPoint> = Vec::new();
    for group in chunk_by_fpr(&points) {
        let best = group.last().unwrap(); // max tpr at this fpr
        match envelope.last() {
            Some(prev) if best.tpr <= prev.tpr && best.fpr > prev.fpr => continue,
            _ => {}
        }
        envelope.push(best.clone());
    }

    let auc_raw = staircase_auc(&points);
    // the envelope may end before fpr = 1 (trailing points with no TPR
    // gain are dropped); extend at the last TPR so the area covers [0, 1]
    let auc_envelope = staircase_auc(&envelope)
        + envelope
            .last()
            .map_or(0.0, |p| (1.0 - p.fpr) * p.tpr);
    Ok(EnsembleRoc {
        points,
        envelope,
        auc_raw,
        auc_envelope,
        warnings,
    })
}

fn chunk_by_fpr(points: &[SweepPoint]) -> Vec<&[SweepPoint]> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=points.len() {
        if i == points.len() || points[i].fpr != points[start].fpr {
            groups.push(&points[start..i]);
            start = i;
        }
    }
    groups
}

impl EnsembleRoc {
    /// Largest envelope TPR achieved at FPR <= `fpr` (step-function
    /// readout; conservative between achieved points).
    pub fn tpr_at_fpr(&self, fpr: f64) -> f64 {
        self.envelope
            .iter()
            .filter(|p| p.fpr <= fpr)
            .map(|p| p.tpr)
            .fold(0.0, f64::max)
    }

    /// Best (TPR + TNR)/2 over the raw sweep points.
    pub fn best_balanced_accuracy(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p.tpr + 1.0 - p.fpr) / 2.0)
            .fold(0.0, f64::max)
    }
}
