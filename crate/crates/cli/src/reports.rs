//! Report builders. Reports are serialized through a float-normalization
//! pass (12 significant digits) so repeated runs are byte-identical and
//! platform noise below that precision never leaks into the output.

use std::collections::BTreeMap;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

use mia_core::disparity::{
    consistency, convergence_curves, covered_samples, method_similarity, unique_samples,
    ConvergencePoint, DetectionMode, SimilarityBasis, SimilarityMatrix,
};
use mia_core::ensemble::{ensemble_roc_sweep, EnsembleSpec, Strategy, SweepPoint};
use mia_core::metrics::{auc, roc_curve, threshold_matrix};
use mia_core::ExperimentBundle;

fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap()
}

fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if !n.is_i64() && !n.is_u64() {
                    if let Some(rounded) = serde_json::Number::from_f64(sig12(f)) {
                        *n = rounded;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Serializes with sorted keys and normalized floats, trailing newline.
pub fn to_deterministic_json<T: Serialize>(report: &T) -> Result<String> {
    let mut value = serde_json::to_value(report)?;
    round_floats(&mut value);
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

#[derive(Debug, Serialize)]
pub struct AttackBetaReport {
    pub beta: f64,
    /// Mean pairwise Jaccard of per-instance detections; absent with a
    /// single instance.
    pub consistency: Option<f64>,
    pub convergence: Vec<ConvergencePoint>,
    pub unique_count: Option<usize>,
    pub covered_count: usize,
}

#[derive(Debug, Serialize)]
pub struct AttackReport {
    pub auc_per_instance: Vec<f64>,
    pub per_beta: Vec<AttackBetaReport>,
}

#[derive(Debug, Serialize)]
pub struct SimilarityEntry {
    pub beta: f64,
    pub basis: SimilarityBasis,
    pub matrix: SimilarityMatrix,
    pub mean_off_diagonal: f64,
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub n_samples: usize,
    pub n_members: usize,
    pub n_instances: usize,
    pub mode: DetectionMode,
    pub betas: Vec<f64>,
    pub attacks: BTreeMap<String, AttackReport>,
    pub similarity: Vec<SimilarityEntry>,
}

pub fn build_analysis(
    bundle: &ExperimentBundle,
    betas: &[f64],
    n_instances: usize,
    mode: DetectionMode,
) -> Result<AnalysisReport> {
    let gt = &bundle.ground_truth;
    let multi_attack = bundle.attacks.len() >= 2;
    let mut attacks = BTreeMap::new();
    for (name, sm) in &bundle.attacks {
        if sm.n_instances() < n_instances {
            anyhow::bail!(
                "attack '{name}' has {} instances, requested {n_instances}",
                sm.n_instances()
            );
        }
        let auc_per_instance: Vec<f64> = (0..n_instances)
            .map(|i| Ok(auc(&roc_curve(gt, sm.row(i))?)))
            .collect::<Result<_>>()?;
        let mut per_beta = Vec::new();
        for &beta in betas {
            let truncated = mia_core::ScoreMatrix::from_rows(
                name.clone(),
                (0..n_instances).map(|i| sm.row(i).to_vec()).collect(),
                sm.seed_labels()[..n_instances].to_vec(),
            )?;
            let pm = threshold_matrix(&truncated, gt, beta)?;
            let cons = if n_instances >= 2 {
                Some(consistency(&pm, gt, mode)?)
            } else {
                None
            };
            let order: Vec<usize> = (0..n_instances).collect();
            let curve = convergence_curves(&pm, gt, mode, &order)?;
            let unique_count = if multi_attack {
                Some(unique_samples(bundle, name, n_instances, beta, mode)?.len())
            } else {
                None
            };
            let covered_count = covered_samples(bundle, name, n_instances, beta, mode)?.len();
            per_beta.push(AttackBetaReport {
                beta,
                consistency: cons,
                convergence: curve.points,
                unique_count,
                covered_count,
            });
        }
        attacks.insert(
            name.clone(),
            AttackReport {
                auc_per_instance,
                per_beta,
            },
        );
    }

    let mut similarity = Vec::new();
    if multi_attack {
        for &beta in betas {
            for basis in [SimilarityBasis::Coverage, SimilarityBasis::Stability] {
                let matrix = method_similarity(bundle, basis, n_instances, beta, mode)?;
                similarity.push(SimilarityEntry {
                    beta,
                    basis,
                    mean_off_diagonal: matrix.mean_off_diagonal(),
                    matrix,
                });
            }
        }
    }

    Ok(AnalysisReport {
        n_samples: bundle.n_samples(),
        n_members: gt.n_members(),
        n_instances,
        mode,
        betas: betas.to_vec(),
        attacks,
        similarity,
    })
}

/// `attack,beta,k` rows of the coverage/stability convergence metrics.
pub fn convergence_csv(report: &AnalysisReport) -> String {
    let mut out = String::from(
        "attack,beta,k,coverage_tpr,coverage_fpr,coverage_precision,coverage_size,\
         stability_tpr,stability_fpr,stability_precision,stability_size\n",
    );
    let opt = |p: Option<f64>| p.map_or(String::new(), |v| sig12(v).to_string());
    for (name, attack) in &report.attacks {
        for per_beta in &attack.per_beta {
            for p in &per_beta.convergence {
                out.push_str(&format!(
                    "{name},{},{},{},{},{},{},{},{},{},{}\n",
                    sig12(per_beta.beta),
                    p.k,
                    sig12(p.coverage.tpr),
                    sig12(p.coverage.fpr),
                    opt(p.coverage.precision),
                    p.coverage.set_size,
                    sig12(p.stability.tpr),
                    sig12(p.stability.fpr),
                    opt(p.stability.precision),
                    p.stability.set_size,
                ));
            }
        }
    }
    out
}

/// Pairwise method-similarity rows (upper triangle, diagonal excluded).
pub fn similarity_csv(report: &AnalysisReport) -> String {
    let mut out = String::from("basis,beta,attack_a,attack_b,jaccard\n");
    for entry in &report.similarity {
        let names = &entry.matrix.attack_names;
        let basis = match entry.basis {
            SimilarityBasis::Coverage => "coverage",
            SimilarityBasis::Stability => "stability",
        };
        for i in 0..names.len() {
            for j in (i + 1)..names.len() {
                out.push_str(&format!(
                    "{basis},{},{},{},{}\n",
                    sig12(entry.beta),
                    names[i],
                    names[j],
                    sig12(entry.matrix.values[i][j]),
                ));
            }
        }
    }
    out
}

pub fn consistency_csv(report: &AnalysisReport) -> String {
    let mut out = String::from("attack,beta,consistency\n");
    for (name, attack) in &report.attacks {
        for per_beta in &attack.per_beta {
            if let Some(c) = per_beta.consistency {
                out.push_str(&format!("{name},{},{}\n", sig12(per_beta.beta), sig12(c)));
            }
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct EnsembleReport {
    pub strategy: Strategy,
    pub attacks: Vec<String>,
    pub n_instances: usize,
    pub points: Vec<SweepPoint>,
    pub envelope: Vec<SweepPoint>,
    pub auc_raw: f64,
    pub auc_envelope: f64,
    pub best_balanced_accuracy: f64,
    /// Envelope TPR readouts at fixed FPR levels (step readout).
    pub tpr_at_fpr: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

pub fn build_ensemble(bundle: &ExperimentBundle, spec: &EnsembleSpec) -> Result<EnsembleReport> {
    let roc = ensemble_roc_sweep(bundle, spec)?;
    let mut tpr_at = BTreeMap::new();
    for (label, fpr) in [("0.001", 1e-3), ("0.01", 1e-2), ("0.1", 1e-1)] {
        tpr_at.insert(label.to_string(), roc.tpr_at_fpr(fpr));
    }
    Ok(EnsembleReport {
        strategy: spec.strategy,
        attacks: spec.attacks.clone(),
        n_instances: spec.n_instances,
        best_balanced_accuracy: roc.best_balanced_accuracy(),
        tpr_at_fpr: tpr_at,
        points: roc.points,
        envelope: roc.envelope,
        auc_raw: roc.auc_raw,
        auc_envelope: roc.auc_envelope,
        warnings: roc.warnings,
    })
}

pub fn sweep_csv(reports: &[EnsembleReport]) -> String {
    let mut out = String::from("strategy,base_beta,fpr,tpr,on_envelope\n");
    for report in reports {
        for p in &report.points {
            let on_env = report
                .envelope
                .iter()
                .any(|e| e.fpr == p.fpr && e.tpr == p.tpr && e.base_beta == p.base_beta);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                strategy_name(report.strategy),
                p.base_beta.map_or(String::new(), |b| sig12(b).to_string()),
                sig12(p.fpr),
                sig12(p.tpr),
                on_env,
            ));
        }
    }
    out
}

pub fn ensemble_summary_csv(reports: &[EnsembleReport]) -> String {
    let mut out =
        String::from("strategy,auc_envelope,auc_raw,best_balanced_accuracy,tpr_at_0.001,tpr_at_0.01,tpr_at_0.1\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            strategy_name(r.strategy),
            sig12(r.auc_envelope),
            sig12(r.auc_raw),
            sig12(r.best_balanced_accuracy),
            sig12(r.tpr_at_fpr["0.001"]),
            sig12(r.tpr_at_fpr["0.01"]),
            sig12(r.tpr_at_fpr["0.1"]),
        ));
    }
    out
}

fn strategy_name(s: Strategy) -> &'static str {
    s.name()
}
