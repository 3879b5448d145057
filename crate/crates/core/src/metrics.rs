//! ROC construction, FPR-calibrated thresholding, and scalar metrics.
//!
//! The prediction rule is uniform everywhere: a sample is predicted member
//! iff its score >= the threshold.

use crate::error::{Error, Result};
use crate::model::{GroundTruth, PredictionMatrix, ScoreMatrix};
use crate::par;

/// ROC curve with one point per distinct score value, prepended with the
/// (0,0) point at the +inf sentinel threshold (max score + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub fprs: Vec<f64>,
    pub tprs: Vec<f64>,
    pub thresholds: Vec<f64>,
}

fn check_inputs(gt: &GroundTruth, scores: &[f64]) -> Result<()> {
    if scores.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "gt has {} samples, scores has {}",
            gt.len(),
            scores.len()
        )));
    }
    if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score at index {pos}")));
    }
    if !gt.both_classes_present() {
        return Err(Error::DegenerateGroundTruth);
    }
    Ok(())
}

pub fn roc_curve(gt: &GroundTruth, scores: &[f64]) -> Result<RocCurve> {
    check_inputs(gt, scores)?;
    let p = gt.n_members() as f64;
    let n = gt.n_nonmembers() as f64;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let max_score = scores[order[0]];
    let mut fprs = vec![0.0];
    let mut tprs = vec![0.0];
    let mut thresholds = vec![max_score + 1.0];

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        // samples sharing a score flip together
        while i < order.len() && scores[order[i]] == value {
            if gt.is_member(order[i]) {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let fpr = fp as f64 / n;
        let tpr = tp as f64 / p;
        if fpr == *fprs.last().unwrap() && tpr == *tprs.last().unwrap() {
            continue;
        }
        fprs.push(fpr);
        tprs.push(tpr);
        thresholds.push(value);
    }
    Ok(RocCurve {
        fprs,
        tprs,
        thresholds,
    })
}

/// Index of the ROC point minimizing |fpr - beta|. Ties across distinct
/// FPR values go to the lower-FPR side; within one FPR value the
/// highest-TPR point wins, so the selected threshold admits every
/// prediction that is free at that FPR level.
pub fn roc_index_for_beta(curve: &RocCurve, beta: f64) -> usize {
    let mut best = 0;
    let mut best_dist = (curve.fprs[0] - beta).abs();
    for (i, &fpr) in curve.fprs.iter().enumerate().skip(1) {
        let d = (fpr - beta).abs();
        if d < best_dist || (d == best_dist && fpr == curve.fprs[best]) {
            best = i;
            best_dist = d;
        }
    }
    best
}

/// Output of [`adjust_fpr`]: calibrated predictions with their exact
/// empirical FPR and the threshold that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FprCalibrated {
    pub predictions: Vec<u8>,
    pub achieved_fpr: f64,
    pub threshold: f64,
}

/// FPR-based thresholding: pick the ROC threshold whose FPR is closest to
/// `beta` and predict member iff score >= threshold.
pub fn adjust_fpr(gt: &GroundTruth, scores: &[f64], beta: f64) -> Result<FprCalibrated> {
    let curve = roc_curve(gt, scores)?;
    Ok(apply_curve_threshold(&curve, gt, scores, beta))
}

/// Same as [`adjust_fpr`] but reusing an already-built ROC curve for
/// `scores`, so sweeps over many beta values sort only once.
pub fn apply_curve_threshold(
    curve: &RocCurve,
    gt: &GroundTruth,
    scores: &[f64],
    beta: f64,
) -> FprCalibrated {
    let threshold = curve.thresholds[roc_index_for_beta(curve, beta)];
    let predictions: Vec<u8> = scores
        .iter()
        .map(|&s| u8::from(s >= threshold))
        .collect();
    let fp = predictions
        .iter()
        .zip(gt.labels())
        .filter(|&(&pr, &g)| pr == 1 && g == 0)
        .count();
    FprCalibrated {
        predictions,
        achieved_fpr: fp as f64 / gt.n_nonmembers() as f64,
        threshold,
    }
}

/// Trapezoidal area under the ROC curve.
pub fn auc(curve: &RocCurve) -> f64 {
    let mut area = 0.0;
    for i in 1..curve.fprs.len() {
        area += (curve.fprs[i] - curve.fprs[i - 1]) * (curve.tprs[i] + curve.tprs[i - 1]) / 2.0;
    }
    area
}

pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(gt: &GroundTruth, preds: &[u8]) -> Result<Confusion> {
    if preds.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "gt has {} samples, predictions has {}",
            gt.len(),
            preds.len()
        )));
    }
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&pr, &g) in preds.iter().zip(gt.labels()) {
        match (pr, g) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// (TPR + TNR) / 2.
pub fn balanced_accuracy(gt: &GroundTruth, preds: &[u8]) -> Result<f64> {
    if !gt.both_classes_present() {
        return Err(Error::DegenerateGroundTruth);
    }
    let c = confusion(gt, preds)?;
    let tpr = c.tp as f64 / (c.tp + c.fn_) as f64;
    let tnr = c.tn as f64 / (c.tn + c.fp) as f64;
    Ok((tpr + tnr) / 2.0)
}

/// TPR of the beta-calibrated predictions.
pub fn tpr_at_fpr(gt: &GroundTruth, scores: &[f64], beta: f64) -> Result<f64> {
    let cal = adjust_fpr(gt, scores, beta)?;
    let c = confusion(gt, &cal.predictions)?;
    Ok(c.tp as f64 / (c.tp + c.fn_) as f64)
}

/// TP/(TP+FP); `None` when nothing is predicted positive.
pub fn precision(gt: &GroundTruth, preds: &[u8]) -> Result<Option<f64>> {
    let c = confusion(gt, preds)?;
    if c.tp + c.fp == 0 {
        return Ok(None);
    }
    Ok(Some(c.tp as f64 / (c.tp + c.fp) as f64))
}

/// Thresholds every instance row of a score matrix at the same target FPR.
pub fn threshold_matrix(
    sm: &ScoreMatrix,
    gt: &GroundTruth,
    beta: f64,
) -> Result<PredictionMatrix> {
    let rows: Vec<&[f64]> = sm.rows().collect();
    let calibrated: Vec<Result<FprCalibrated>> =
        par::map_slice(&rows, |row| adjust_fpr(gt, row, beta));
    let mut values = Vec::with_capacity(sm.n_instances() * sm.n_samples());
    let mut achieved = Vec::with_capacity(sm.n_instances());
    let mut thresholds = Vec::with_capacity(sm.n_instances());
    for cal in calibrated {
        let cal = cal?;
        values.extend_from_slice(&cal.predictions);
        achieved.push(cal.achieved_fpr);
        thresholds.push(cal.threshold);
    }
    PredictionMatrix::new(
        sm.attack_name.clone(),
        sm.n_samples(),
        values,
        beta,
        achieved,
        thresholds,
    )
}
