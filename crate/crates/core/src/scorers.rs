//! Analytic MIA score combiners: they turn ingested model signals (losses,
//! confidences) into score rows. All scores follow the uniform orientation
//! "higher = more likely member"; loss-based scorers therefore emit
//! 1 - normalized loss.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{ExperimentBundle, ScoreMatrix, Signal};
use crate::rng::stream_rng;

/// Model signals a scorer may consume. Vectors are per target sample;
/// ragged arrays hold one entry per shadow model.
#[derive(Debug, Clone, Default)]
pub struct SignalSet {
    pub target_loss: Vec<f64>,
    pub shadow_loss: Option<Vec<f64>>,
    pub shadow_in_losses: Option<Vec<Vec<f64>>>,
    pub shadow_out_losses: Option<Vec<Vec<f64>>>,
    pub shadow_confidences: Option<Vec<Vec<f64>>>,
    pub target_confidence: Option<Vec<f64>>,
}

impl SignalSet {
    /// Pulls the conventionally named signals out of a bundle.
    pub fn from_bundle(bundle: &ExperimentBundle) -> Result<Self> {
        let vector = |name: &str| -> Result<Option<Vec<f64>>> {
            match bundle.signals.get(name) {
                None => Ok(None),
                Some(Signal::Vector(v)) => Ok(Some(v.clone())),
                Some(Signal::Matrix(_)) => Err(Error::ShapeMismatch(format!(
                    "signal '{name}' must be a per-sample vector"
                ))),
            }
        };
        let matrix = |name: &str| -> Result<Option<Vec<Vec<f64>>>> {
            match bundle.signals.get(name) {
                None => Ok(None),
                Some(Signal::Matrix(m)) => Ok(Some(m.clone())),
                Some(Signal::Vector(v)) => {
                    Ok(Some(v.iter().map(|&x| vec![x]).collect()))
                }
            }
        };
        Ok(SignalSet {
            target_loss: vector("target_loss")?
                .ok_or_else(|| Error::MissingSignal("target_loss".into()))?,
            shadow_loss: vector("shadow_loss")?,
            shadow_in_losses: matrix("shadow_in_losses")?,
            shadow_out_losses: matrix("shadow_out_losses")?,
            shadow_confidences: matrix("shadow_confidences")?,
            target_confidence: vector("target_confidence")?,
        })
    }
}

/// Min-max normalization over the evaluated batch; a degenerate all-equal
/// batch maps to 0.5 everywhere.
fn minmax_normalize(values: &[f64]) -> (Vec<f64>, impl Fn(f64) -> f64) {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let map = move |x: f64| {
        if range == 0.0 {
            0.5
        } else {
            (x - min) / range
        }
    };
    (values.iter().map(|&v| map(v)).collect(), map)
}

/// Scores plus the normalized global threshold of the LOSS attack.
#[derive(Debug, Clone, PartialEq)]
pub struct LossScore {
    pub scores: Vec<f64>,
    /// Mean target loss mapped through the same normalization as the
    /// scores, so `score > threshold` reproduces `loss < mean loss`.
    pub threshold: f64,
    pub raw_threshold: f64,
}

impl LossScore {
    /// Member predictions with the strict-inequality global-threshold rule.
    pub fn member_predictions(&self) -> Vec<u8> {
        self.scores
            .iter()
            .map(|&s| u8::from(s > self.threshold))
            .collect()
    }
}

/// score = 1 - minmax(target loss); threshold = mean loss under the same
/// normalization.
pub fn loss_scorer(signals: &SignalSet) -> Result<LossScore> {
    let losses = &signals.target_loss;
    if losses.is_empty() {
        return Err(Error::EmptyInput("target_loss".into()));
    }
    let (norm, map) = minmax_normalize(losses);
    let raw_threshold = losses.iter().sum::<f64>() / losses.len() as f64;
    Ok(LossScore {
        scores: norm.iter().map(|&v| 1.0 - v).collect(),
        threshold: 1.0 - map(raw_threshold),
        raw_threshold,
    })
}

/// Difficulty-calibrated score: 1 - minmax(target loss - shadow loss).
pub fn calibration_scorer(signals: &SignalSet) -> Result<Vec<f64>> {
    let shadow = signals
        .shadow_loss
        .as_ref()
        .ok_or_else(|| Error::MissingSignal("shadow_loss".into()))?;
    if shadow.len() != signals.target_loss.len() {
        return Err(Error::ShapeMismatch(format!(
            "target_loss has {} samples, shadow_loss has {}",
            signals.target_loss.len(),
            shadow.len()
        )));
    }
    let calibrated: Vec<f64> = signals
        .target_loss
        .iter()
        .zip(shadow)
        .map(|(&t, &s)| t - s)
        .collect();
    let (norm, _) = minmax_normalize(&calibrated);
    Ok(norm.iter().map(|&v| 1.0 - v).collect())
}

/// Picks the accuracy-maximizing threshold among 1,000 evenly spaced
/// candidates over the auxiliary score range; ties go to the smallest.
pub fn calibration_threshold(scores_aux: &[f64], gt_aux: &[u8]) -> Result<f64> {
    if scores_aux.is_empty() || scores_aux.len() != gt_aux.len() {
        return Err(Error::ShapeMismatch(format!(
            "aux scores ({}) and labels ({}) must be equal-length and non-empty",
            scores_aux.len(),
            gt_aux.len()
        )));
    }
    let min = scores_aux.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = scores_aux.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(min);
    }
    let n = scores_aux.len() as f64;
    let mut best_tau = min;
    let mut best_acc = -1.0;
    for i in 0..1000 {
        let tau = min + (max - min) * i as f64 / 999.0;
        let correct = scores_aux
            .iter()
            .zip(gt_aux)
            .filter(|&(&s, &g)| u8::from(s >= tau) == g)
            .count();
        let acc = correct as f64 / n;
        if acc > best_acc {
            best_acc = acc;
            best_tau = tau;
        }
    }
    Ok(best_tau)
}

/// Variance estimation mode for the likelihood-ratio scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceMode {
    /// Per-sample Gaussians on each side; needs >= 2 entries per side.
    PerSample,
    /// Per-sample means with one pooled standard deviation per side.
    Global,
}

const SIGMA_FLOOR: f64 = 1e-8;

fn normal_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln() - 0.5 * z * z
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Log likelihood ratio of the target loss under Gaussians fitted to the
/// per-sample in/out shadow losses.
pub fn lira_scorer(signals: &SignalSet, mode: VarianceMode) -> Result<Vec<f64>> {
    let ins = signals
        .shadow_in_losses
        .as_ref()
        .ok_or_else(|| Error::MissingSignal("shadow_in_losses".into()))?;
    let outs = signals
        .shadow_out_losses
        .as_ref()
        .ok_or_else(|| Error::MissingSignal("shadow_out_losses".into()))?;
    let n = signals.target_loss.len();
    if ins.len() != n || outs.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "shadow in/out losses must have {n} samples"
        )));
    }
    let min_entries = match mode {
        VarianceMode::PerSample => 2,
        VarianceMode::Global => 1,
    };
    for (idx, (i, o)) in ins.iter().zip(outs).enumerate() {
        if i.len() < min_entries || o.len() < min_entries {
            return Err(Error::ShapeMismatch(format!(
                "sample {idx}: need >= {min_entries} shadow losses per side"
            )));
        }
    }

    let mu_in: Vec<f64> = ins.iter().map(|v| mean(v)).collect();
    let mu_out: Vec<f64> = outs.iter().map(|v| mean(v)).collect();

    let sigmas = |rows: &[Vec<f64>], mus: &[f64]| -> Vec<f64> {
        match mode {
            VarianceMode::PerSample => rows
                .iter()
                .zip(mus)
                .map(|(v, &m)| {
                    let var =
                        v.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
                    var.sqrt().max(SIGMA_FLOOR)
                })
                .collect(),
            VarianceMode::Global => {
                let ss: f64 = rows
                    .iter()
                    .zip(mus)
                    .map(|(v, &m)| v.iter().map(|&x| (x - m) * (x - m)).sum::<f64>())
                    .sum();
                let dof: usize = rows.iter().map(|v| v.len() - 1).sum();
                let pooled = if dof > 0 { (ss / dof as f64).sqrt() } else { 0.0 };
                vec![pooled.max(SIGMA_FLOOR); rows.len()]
            }
        }
    };
    let sigma_in = sigmas(ins, &mu_in);
    let sigma_out = sigmas(outs, &mu_out);

    Ok((0..n)
        .map(|i| {
            let x = signals.target_loss[i];
            normal_logpdf(x, mu_in[i], sigma_in[i]) - normal_logpdf(x, mu_out[i], sigma_out[i])
        })
        .collect())
}

/// Fraction of shadow models whose confidence on the sample does not
/// exceed the target model's confidence.
pub fn reference_scorer(signals: &SignalSet) -> Result<Vec<f64>> {
    let target = signals
        .target_confidence
        .as_ref()
        .ok_or_else(|| Error::MissingSignal("target_confidence".into()))?;
    let shadows = signals
        .shadow_confidences
        .as_ref()
        .ok_or_else(|| Error::MissingSignal("shadow_confidences".into()))?;
    if shadows.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "target_confidence has {} samples, shadow_confidences has {}",
            target.len(),
            shadows.len()
        )));
    }
    target
        .iter()
        .zip(shadows)
        .enumerate()
        .map(|(idx, (&t, confs))| {
            if confs.is_empty() {
                return Err(Error::EmptyInput(format!(
                    "shadow_confidences for sample {idx}"
                )));
            }
            let hits = confs.iter().filter(|&&c| t >= c).count();
            Ok(hits as f64 / confs.len() as f64)
        })
        .collect()
}

/// Which analytic scorer to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    Loss,
    Calibration,
    Lira(VarianceMode),
    Reference,
}

impl ScorerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScorerKind::Loss => "loss",
            ScorerKind::Calibration => "calibration",
            ScorerKind::Lira(_) => "lira",
            ScorerKind::Reference => "reference",
        }
    }

    /// Scorers runnable with the signals at hand.
    pub fn available(signals: &SignalSet) -> Vec<ScorerKind> {
        let mut kinds = vec![ScorerKind::Loss];
        if signals.shadow_loss.is_some() {
            kinds.push(ScorerKind::Calibration);
        }
        if signals.shadow_in_losses.is_some() && signals.shadow_out_losses.is_some() {
            kinds.push(ScorerKind::Lira(VarianceMode::PerSample));
        }
        if signals.target_confidence.is_some() && signals.shadow_confidences.is_some() {
            kinds.push(ScorerKind::Reference);
        }
        kinds
    }
}

fn run_scorer(signals: &SignalSet, kind: ScorerKind) -> Result<Vec<f64>> {
    match kind {
        ScorerKind::Loss => Ok(loss_scorer(signals)?.scores),
        ScorerKind::Calibration => calibration_scorer(signals),
        ScorerKind::Lira(mode) => lira_scorer(signals, mode),
        ScorerKind::Reference => reference_scorer(signals),
    }
}

/// Builds a multi-instance score matrix for one scorer. Instance-level
/// randomness stands in for shadow-training randomness: each instance
/// perturbs the shadow-side signals with fresh Gaussian noise of the given
/// sigma (target-side signals stay fixed). Sigma 0 makes all instances
/// identical.
pub fn build_score_matrix(
    signals: &SignalSet,
    kind: ScorerKind,
    n_instances: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<ScoreMatrix> {
    if n_instances == 0 {
        return Err(Error::InvalidConfig("n_instances must be >= 1".into()));
    }
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(Error::InvalidConfig("noise_sigma must be >= 0".into()));
    }
    let mut rows = Vec::with_capacity(n_instances);
    let mut seed_labels = Vec::with_capacity(n_instances);
    for i in 0..n_instances {
        let perturbed = if noise_sigma == 0.0 {
            signals.clone()
        } else {
            let mut rng = stream_rng(seed, &format!("scorer/{}/instance/{i}", kind.name()));
            let noise = Normal::new(0.0, noise_sigma).unwrap();
            let mut s = signals.clone();
            let mut jitter_loss = |v: &mut f64| *v = (*v + noise.sample(&mut rng)).max(0.0);
            if let Some(sl) = &mut s.shadow_loss {
                sl.iter_mut().for_each(&mut jitter_loss);
            }
            if let Some(m) = &mut s.shadow_in_losses {
                m.iter_mut().flatten().for_each(&mut jitter_loss);
            }
            if let Some(m) = &mut s.shadow_out_losses {
                m.iter_mut().flatten().for_each(&mut jitter_loss);
            }
            if let Some(m) = &mut s.shadow_confidences {
                for v in m.iter_mut().flatten() {
                    *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
            // burn one value so streams stay distinct even for no-op kinds
            let _: f64 = rng.gen();
            s
        };
        rows.push(run_scorer(&perturbed, kind)?);
        seed_labels.push(format!("seed-{i}"));
    }
    ScoreMatrix::from_rows(kind.name(), rows, seed_labels)
}
