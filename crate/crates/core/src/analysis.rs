//! Empirical-analysis tools: PCA of logit matrices via power iteration,
//! confidence margins, Gaussian KDE with Silverman bandwidth, and the
//! cost-performance Pareto frontier.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

const PCA_TOLERANCE: f64 = 1e-10;
const PCA_MAX_ITERATIONS: usize = 1000;

/// Output of [`pca_project`].
#[derive(Debug, Clone, Serialize)]
pub struct Pca {
    /// Per-sample coordinates in the top-k component space (n x k).
    pub projections: Vec<Vec<f64>>,
    /// Eigenvalue / covariance-trace ratios, one per component.
    pub explained_ratios: Vec<f64>,
    /// The components themselves (k x n_features).
    pub components: Vec<Vec<f64>>,
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Top-k PCA by power iteration with deflation. Columns are mean-centered
/// first; the sign convention makes each component's largest-magnitude
/// loading positive.
pub fn pca_project(data: &[Vec<f64>], k: usize) -> Result<Pca> {
    let n = data.len();
    if k < 1 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if n <= k {
        return Err(Error::ShapeMismatch(format!(
            "need more samples ({n}) than components ({k})"
        )));
    }
    let c = data[0].len();
    if data.iter().any(|row| row.len() != c) {
        return Err(Error::ShapeMismatch("ragged data matrix".into()));
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("data matrix".into()));
    }

    let means: Vec<f64> = (0..c)
        .map(|j| data.iter().map(|row| row[j]).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = data
        .iter()
        .map(|row| row.iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect();

    // covariance (c x c)
    let mut cov = vec![vec![0.0; c]; c];
    for row in &centered {
        for i in 0..c {
            for j in i..c {
                cov[i][j] += row[i] * row[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    #[allow(clippy::needless_range_loop)] // symmetric fill across rows
    for i in 0..c {
        for j in i..c {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    let trace: f64 = (0..c).map(|i| cov[i][i]).sum();

    let mut components = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut deflated = cov;
    for _ in 0..k {
        // deterministic start vector with unequal entries
        let mut b: Vec<f64> = (0..c).map(|i| 1.0 / (i + 1) as f64).collect();
        let b_norm = norm(&b);
        b.iter_mut().for_each(|x| *x /= b_norm);

        let mut converged = false;
        for _ in 0..PCA_MAX_ITERATIONS {
            let mut next = mat_vec(&deflated, &b);
            let next_norm = norm(&next);
            if next_norm == 0.0 {
                // zero eigenvalue; any unit vector in the null space works
                converged = true;
                break;
            }
            next.iter_mut().for_each(|x| *x /= next_norm);
            let delta = next
                .iter()
                .zip(&b)
                .map(|(a, x)| (a - x).abs())
                .fold(0.0, f64::max);
            b = next;
            if delta < PCA_TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                iterations: PCA_MAX_ITERATIONS,
            });
        }
        let cb = mat_vec(&deflated, &b);
        let lambda: f64 = b.iter().zip(&cb).map(|(a, x)| a * x).sum();

        // sign convention
        let (max_idx, _) = b
            .iter()
            .enumerate()
            .fold((0, 0.0), |(bi, bv), (i, &v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bi, bv)
                }
            });
        if b[max_idx] < 0.0 {
            b.iter_mut().for_each(|x| *x = -*x);
        }

        for i in 0..c {
            for j in 0..c {
                deflated[i][j] -= lambda * b[i] * b[j];
            }
        }
        eigenvalues.push(lambda.max(0.0));
        components.push(b);
    }

    let projections = centered
        .iter()
        .map(|row| {
            components
                .iter()
                .map(|comp| row.iter().zip(comp).map(|(a, x)| a * x).sum())
                .collect()
        })
        .collect();
    let explained_ratios = eigenvalues
        .iter()
        .map(|&l| if trace > 0.0 { l / trace } else { 0.0 })
        .collect();
    Ok(Pca {
        projections,
        explained_ratios,
        components,
    })
}

/// Top-1 minus top-2 confidence per row.
pub fn confidence_margin(confidence_vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    confidence_vectors
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() < 2 {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} classes, need >= 2",
                    row.len()
                )));
            }
            let mut top1 = f64::NEG_INFINITY;
            let mut top2 = f64::NEG_INFINITY;
            for &v in row {
                if v > top1 {
                    top2 = top1;
                    top1 = v;
                } else if v > top2 {
                    top2 = v;
                }
            }
            Ok(top1 - top2)
        })
        .collect()
}

/// Silverman bandwidth: 0.9 * min(std, IQR/1.34) * n^(-1/5). Falls back
/// to the standard deviation when the IQR is zero but the spread is not.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::EmptyInput("kde needs >= 2 values".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    if std == 0.0 {
        return Err(Error::DegenerateSample);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |q: f64| -> f64 {
        let pos = q * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 {
        std.min(iqr / 1.34)
    } else {
        std
    };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Gaussian-kernel density estimates at the evaluation points.
pub fn kde(values: &[f64], eval_points: &[f64]) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(values)?;
    let n = values.len() as f64;
    let norm_const = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(eval_points
        .iter()
        .map(|&t| {
            values
                .iter()
                .map(|&v| {
                    let z = (t - v) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm_const
        })
        .collect())
}

/// Shared preparation resources between attacks (e.g. a common pool of
/// shadow models), deducted once per instance when a candidate includes
/// the whole group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharedGroup {
    pub attacks: Vec<String>,
    pub deduction: f64,
}

/// Per-attack preparation cost in GPU-minutes per instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostTable {
    pub costs: BTreeMap<String, f64>,
    #[serde(default)]
    pub shared_groups: Vec<SharedGroup>,
}

impl CostTable {
    pub fn validate(&self) -> Result<()> {
        if let Some((name, _)) = self.costs.iter().find(|(_, &c)| c < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "cost for '{name}' must be >= 0"
            )));
        }
        for group in &self.shared_groups {
            let mut sum = 0.0;
            for a in &group.attacks {
                sum += *self
                    .costs
                    .get(a)
                    .ok_or_else(|| Error::UnknownAttack(a.clone()))?;
            }
            if group.deduction < 0.0 || group.deduction > sum {
                return Err(Error::InvalidConfig(format!(
                    "shared deduction {} exceeds group cost {sum}",
                    group.deduction
                )));
            }
        }
        Ok(())
    }

    /// Total cost of running `n_instances` instances of each attack in the
    /// subset, with per-instance shared deductions for fully included
    /// groups.
    pub fn subset_cost(&self, attacks: &[String], n_instances: usize) -> Result<f64> {
        let mut per_instance = 0.0;
        for a in attacks {
            per_instance += *self
                .costs
                .get(a)
                .ok_or_else(|| Error::UnknownAttack(a.clone()))?;
        }
        for group in &self.shared_groups {
            if group.attacks.iter().all(|a| attacks.contains(a)) {
                per_instance -= group.deduction;
            }
        }
        Ok(n_instances as f64 * per_instance)
    }
}

/// A candidate configuration: which attacks, how many instances, and the
/// metric observed for it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub attacks: Vec<String>,
    pub n_instances: usize,
    pub performance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnnotatedCandidate {
    pub attacks: Vec<String>,
    pub n_instances: usize,
    pub performance: f64,
    pub cost: f64,
    pub on_frontier: bool,
}

/// All candidates annotated with their cost, plus the maximal set under
/// (cost down, performance up) dominance. Exact ties stay on the
/// frontier; output is ordered by (cost, -performance).
pub fn cost_pareto(table: &CostTable, candidates: &[Candidate]) -> Result<Vec<AnnotatedCandidate>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidate list".into()));
    }
    table.validate()?;
    let mut annotated: Vec<AnnotatedCandidate> = candidates
        .iter()
        .map(|cand| {
            Ok(AnnotatedCandidate {
                attacks: cand.attacks.clone(),
                n_instances: cand.n_instances,
                performance: cand.performance,
                cost: table.subset_cost(&cand.attacks, cand.n_instances)?,
                on_frontier: false,
            })
        })
        .collect::<Result<_>>()?;
    for i in 0..annotated.len() {
        let dominated = annotated.iter().enumerate().any(|(j, other)| {
            j != i
                && other.cost <= annotated[i].cost
                && other.performance >= annotated[i].performance
                && (other.cost < annotated[i].cost
                    || other.performance > annotated[i].performance)
        });
        annotated[i].on_frontier = !dominated;
    }
    annotated.sort_by(|a, b| {
        a.cost
            .partial_cmp(&b.cost)
            .unwrap()
            .then(b.performance.partial_cmp(&a.performance).unwrap())
            .then(a.attacks.cmp(&b.attacks))
    });
    Ok(annotated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pca_data_on_a_line() {
        let data: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0, 0.0]).collect();
        let pca = pca_project(&data, 1).unwrap();
        assert!((pca.components[0][0].abs() - 1.0).abs() < 1e-9);
        assert!((pca.explained_ratios[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pca_shift_invariant_up_to_sign() {
        let data = vec![
            vec![0.3, 1.2, -0.5],
            vec![1.1, 0.2, 0.7],
            vec![-0.4, 0.9, 1.3],
            vec![0.8, -0.6, 0.1],
            vec![0.0, 0.4, -1.1],
        ];
        let shifted: Vec<Vec<f64>> = data
            .iter()
            .map(|row| row.iter().map(|v| v + 10.0).collect())
            .collect();
        let a = pca_project(&data, 2).unwrap();
        let b = pca_project(&shifted, 2).unwrap();
        for (pa, pb) in a.projections.iter().zip(&b.projections) {
            for (x, y) in pa.iter().zip(pb) {
                assert!((x - y).abs() < 1e-8 || (x + y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pca_explained_ratios_bounded() {
        let data: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let x = i as f64 * 0.37;
                vec![x.sin(), (2.0 * x).cos(), x % 1.0]
            })
            .collect();
        let pca = pca_project(&data, 3).unwrap();
        let sum: f64 = pca.explained_ratios.iter().sum();
        assert!(sum <= 1.0 + 1e-12);
    }

    #[test]
    fn pca_rejects_bad_shapes() {
        assert!(pca_project(&[vec![1.0]], 1).is_err()); // n <= k
        assert!(pca_project(&[vec![1.0], vec![1.0, 2.0], vec![1.0]], 1).is_err());
    }

    #[test]
    fn margin_examples() {
        let m = confidence_margin(&[
            vec![1.0, 0.0, 0.0],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            vec![0.5, 0.3, 0.2],
        ])
        .unwrap();
        assert!((m[0] - 1.0).abs() < 1e-15);
        assert!(m[1].abs() < 1e-15);
        assert!((m[2] - 0.2).abs() < 1e-15);
        assert!(confidence_margin(&[vec![1.0]]).is_err());
    }

    #[test]
    fn kde_symmetric_data_symmetric_density() {
        let values = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let eval: Vec<f64> = vec![-1.5, -0.7, 0.0, 0.7, 1.5];
        let d = kde(&values, &eval).unwrap();
        assert!((d[0] - d[4]).abs() < 1e-9);
        assert!((d[1] - d[3]).abs() < 1e-9);
    }

    #[test]
    fn kde_integrates_to_one() {
        let values = [0.48, 0.5, 0.52, 0.49, 0.51, 0.5, 0.47, 0.53];
        let grid: Vec<f64> = (0..4001).map(|i| -2.0 + i as f64 * 0.001).collect();
        let d = kde(&values, &grid).unwrap();
        let mut integral = 0.0;
        for i in 1..grid.len() {
            integral += (d[i] + d[i - 1]) / 2.0 * 0.001;
        }
        assert!(integral >= 0.99, "integral = {integral}");
        assert!(d.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn kde_two_clusters_two_modes() {
        let mut values = Vec::new();
        for i in 0..20 {
            values.push(0.0 + i as f64 * 0.01);
            values.push(5.0 + i as f64 * 0.01);
        }
        let grid: Vec<f64> = (0..601).map(|i| -1.0 + i as f64 * 0.012).collect();
        let d = kde(&values, &grid).unwrap();
        let mut maxima = 0;
        for i in 1..d.len() - 1 {
            if d[i] > d[i - 1] && d[i] >= d[i + 1] && d[i] > 1e-4 {
                maxima += 1;
            }
        }
        assert!(maxima >= 2, "found {maxima} local maxima");
    }

    #[test]
    fn kde_zero_spread_errors() {
        assert!(matches!(
            kde(&[1.0, 1.0, 1.0], &[1.0]),
            Err(Error::DegenerateSample)
        ));
    }

    #[test]
    fn kde_permutation_invariant() {
        let a = [0.1, 0.9, 0.4, 0.7];
        let b = [0.7, 0.1, 0.9, 0.4];
        let grid = [0.0, 0.5, 1.0];
        assert_eq!(kde(&a, &grid).unwrap(), kde(&b, &grid).unwrap());
    }

    fn paper_cost_table() -> CostTable {
        CostTable {
            costs: [
                ("lira".to_string(), 580.0),
                ("reference".to_string(), 540.0),
                ("losstraj".to_string(), 17.0),
                ("calibration".to_string(), 5.0),
            ]
            .into(),
            shared_groups: vec![SharedGroup {
                attacks: vec!["lira".into(), "reference".into()],
                deduction: 540.0,
            }],
        }
    }

    #[test]
    fn shared_shadow_deduction() {
        let table = paper_cost_table();
        let cost = table
            .subset_cost(&["lira".into(), "reference".into()], 1)
            .unwrap();
        assert_eq!(cost, 580.0);
        // linearity for a single attack
        assert_eq!(table.subset_cost(&["losstraj".into()], 3).unwrap(), 51.0);
    }

    #[test]
    fn frontier_drops_dominated() {
        let table = paper_cost_table();
        let candidates = vec![
            Candidate {
                attacks: vec!["calibration".into()],
                n_instances: 1,
                performance: 0.6,
            },
            Candidate {
                attacks: vec!["losstraj".into()],
                n_instances: 1,
                performance: 0.55, // costlier and worse: dominated
            },
            Candidate {
                attacks: vec!["lira".into()],
                n_instances: 1,
                performance: 0.8,
            },
        ];
        let annotated = cost_pareto(&table, &candidates).unwrap();
        let frontier: Vec<_> = annotated.iter().filter(|c| c.on_frontier).collect();
        assert_eq!(frontier.len(), 2);
        for a in &annotated {
            for b in &annotated {
                if a.on_frontier && b.on_frontier {
                    let dominates = b.cost <= a.cost
                        && b.performance >= a.performance
                        && (b.cost < a.cost || b.performance > a.performance);
                    assert!(!dominates);
                }
            }
        }
    }
}
