//! Deterministic synthetic experiment generator. A Gaussian latent space
//! with linear per-attack projections expresses both disparity axes:
//! instance noise drives consistency, direction angle drives method-level
//! similarity. Canaries are members with an extra memorization shift.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExperimentBundle, GroundTruth, ScoreMatrix, Signal};
use crate::par;
use crate::rng::stream_rng;

fn default_member_fraction() -> f64 {
    0.5
}
fn default_n_shadow_models() -> usize {
    4
}
fn default_shadow_noise_sigma() -> f64 {
    0.25
}

/// Generator configuration. `seed` fully determines the output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_samples: usize,
    #[serde(default = "default_member_fraction")]
    pub member_fraction: f64,
    pub latent_dim: usize,
    pub n_attacks: usize,
    /// Total angular spread of the attack directions, in degrees; the
    /// directions are evenly spaced in [-spread/2, +spread/2] around the
    /// member-signal axis. Ignored when `directions` is given.
    #[serde(default)]
    pub angle_spread_degrees: f64,
    /// Explicit unit direction vectors, one per attack (optional).
    #[serde(default)]
    pub directions: Option<Vec<Vec<f64>>>,
    pub member_signal_strength: f64,
    pub instance_noise_sigma: f64,
    pub n_instances: usize,
    #[serde(default)]
    pub canary_fraction: f64,
    #[serde(default)]
    pub canary_strength: f64,
    #[serde(default = "default_n_shadow_models")]
    pub n_shadow_models: usize,
    /// Noise on the emitted shadow-model signal redraws.
    #[serde(default = "default_shadow_noise_sigma")]
    pub shadow_noise_sigma: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.n_samples < 2 {
            return fail("n_samples must be >= 2");
        }
        if !(0.0..=1.0).contains(&self.member_fraction) {
            return fail("member_fraction must be in [0,1]");
        }
        if self.latent_dim < 1 {
            return fail("latent_dim must be >= 1");
        }
        if self.n_attacks < 1 || self.n_instances < 1 {
            return fail("n_attacks and n_instances must be >= 1");
        }
        if self.member_signal_strength < 0.0
            || self.instance_noise_sigma < 0.0
            || self.canary_strength < 0.0
            || self.shadow_noise_sigma < 0.0
        {
            return fail("strengths and sigmas must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.canary_fraction) {
            return fail("canary_fraction must be in [0,1]");
        }
        if self.n_shadow_models < 1 {
            return fail("n_shadow_models must be >= 1");
        }
        if let Some(dirs) = &self.directions {
            if dirs.len() != self.n_attacks {
                return fail("directions must have one vector per attack");
            }
            for d in dirs {
                if d.len() != self.latent_dim {
                    return fail("direction dimensionality must equal latent_dim");
                }
                let norm: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return fail("directions must be unit-norm");
                }
            }
        } else if self.angle_spread_degrees != 0.0 && self.latent_dim < 2 {
            return fail("angle spread needs latent_dim >= 2");
        }
        Ok(())
    }

    /// Resolved unit direction per attack.
    pub fn resolve_directions(&self) -> Vec<Vec<f64>> {
        if let Some(dirs) = &self.directions {
            return dirs.clone();
        }
        let m = self.n_attacks;
        let spread = self.angle_spread_degrees.to_radians();
        (0..m)
            .map(|k| {
                let theta = if m == 1 {
                    0.0
                } else {
                    -spread / 2.0 + spread * k as f64 / (m - 1) as f64
                };
                let mut w = vec![0.0; self.latent_dim];
                w[0] = theta.cos();
                if self.latent_dim > 1 {
                    w[1] = theta.sin();
                }
                w
            })
            .collect()
    }
}

fn softplus(x: f64) -> f64 {
    // numerically stable log(1 + e^x)
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Generates a fully reproducible synthetic bundle from the config.
pub fn generate(config: &SimConfig) -> Result<ExperimentBundle> {
    config.validate()?;
    let n = config.n_samples;
    let d = config.latent_dim;
    let n_members = (n as f64 * config.member_fraction).round() as usize;
    let n_canaries = (n_members as f64 * config.canary_fraction).round() as usize;

    let labels: Vec<u8> = (0..n).map(|i| u8::from(i < n_members)).collect();
    let ground_truth = GroundTruth::new(labels)?;
    let canary_mask: Vec<u8> = (0..n).map(|i| u8::from(i < n_canaries)).collect();

    // member-signal axis
    let mut u = vec![0.0; d];
    u[0] = 1.0;

    // latent draws, then the membership/canary shift along u
    let mut latent_rng = stream_rng(config.seed, "latent");
    let raw_latent: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| StandardNormal.sample(&mut latent_rng))
                .collect()
        })
        .collect();
    let shift = |i: usize| -> f64 {
        if canary_mask[i] == 1 {
            config.member_signal_strength + config.canary_strength
        } else if ground_truth.is_member(i) {
            config.member_signal_strength
        } else {
            0.0
        }
    };
    let latent: Vec<Vec<f64>> = raw_latent
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let s = shift(i);
            z.iter().zip(&u).map(|(&zi, &ui)| zi + s * ui).collect()
        })
        .collect();

    let directions = config.resolve_directions();

    // per-(attack, instance) scores from isolated sub-streams
    let m = config.n_attacks;
    let rows: Vec<Vec<f64>> = par::map_indexed(m * config.n_instances, |flat| {
        let k = flat / config.n_instances;
        let i = flat % config.n_instances;
        let mut rng = stream_rng(config.seed, &format!("attack/{k}/instance/{i}"));
        latent
            .iter()
            .map(|v| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                dot(&directions[k], v) + config.instance_noise_sigma * noise
            })
            .collect()
    });
    let mut attacks = std::collections::BTreeMap::new();
    for k in 0..m {
        let attack_rows = rows[k * config.n_instances..(k + 1) * config.n_instances].to_vec();
        let seed_labels = (0..config.n_instances).map(|i| format!("seed-{i}")).collect();
        let name = format!("attack-{k}");
        attacks.insert(
            name.clone(),
            ScoreMatrix::from_rows(name, attack_rows, seed_labels)?,
        );
    }

    // signal vectors consistent with the score model, so scorers can run.
    // base = the sample's difficulty (un-memorized signal); in-models and
    // the target (for members) add the memorization boost.
    let w0 = &directions[0];
    let boost_scale = dot(w0, &u);
    let base: Vec<f64> = raw_latent.iter().map(|z| dot(w0, z)).collect();
    let boost: Vec<f64> = (0..n).map(|i| shift(i) * boost_scale).collect();
    let target_signal: Vec<f64> = (0..n)
        .map(|i| base[i] + if ground_truth.is_member(i) { boost[i] } else { 0.0 })
        .collect();

    let mut sig_rng = stream_rng(config.seed, "signals");
    let mut noisy = |x: f64| -> f64 {
        let e: f64 = StandardNormal.sample(&mut sig_rng);
        x + config.shadow_noise_sigma * e
    };
    let shadow_loss: Vec<f64> = base.iter().map(|&b| softplus(-noisy(b))).collect();
    let shadow_in_losses: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..config.n_shadow_models)
                .map(|_| softplus(-noisy(base[i] + boost[i])))
                .collect()
        })
        .collect();
    let shadow_out_losses: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..config.n_shadow_models)
                .map(|_| softplus(-noisy(base[i])))
                .collect()
        })
        .collect();
    let shadow_confidences: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..config.n_shadow_models)
                .map(|_| sigmoid(noisy(base[i])))
                .collect()
        })
        .collect();

    let mut signals = std::collections::BTreeMap::new();
    signals.insert(
        "target_loss".to_string(),
        Signal::Vector(target_signal.iter().map(|&s| softplus(-s)).collect()),
    );
    signals.insert(
        "target_confidence".to_string(),
        Signal::Vector(target_signal.iter().map(|&s| sigmoid(s)).collect()),
    );
    signals.insert("shadow_loss".to_string(), Signal::Vector(shadow_loss));
    signals.insert(
        "shadow_in_losses".to_string(),
        Signal::Matrix(shadow_in_losses),
    );
    signals.insert(
        "shadow_out_losses".to_string(),
        Signal::Matrix(shadow_out_losses),
    );
    signals.insert(
        "shadow_confidences".to_string(),
        Signal::Matrix(shadow_confidences),
    );

    let mut metadata = std::collections::BTreeMap::new();
    metadata.insert("generator".to_string(), "simulator".to_string());
    metadata.insert("seed".to_string(), config.seed.to_string());
    metadata.insert(
        "instance_noise_sigma".to_string(),
        config.instance_noise_sigma.to_string(),
    );
    metadata.insert("n_members".to_string(), n_members.to_string());

    Ok(ExperimentBundle {
        ground_truth,
        attacks,
        signals,
        canary_mask: if n_canaries > 0 {
            Some(canary_mask)
        } else {
            None
        },
        metadata,
    })
}
