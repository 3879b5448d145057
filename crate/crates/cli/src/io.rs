//! On-disk bundle format: a JSON manifest referencing CSV files, all
//! paths relative to the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use mia_core::{ExperimentBundle, GroundTruth, ScoreMatrix, Signal};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct AttackRef {
    pub name: String,
    pub scores: String,
    pub seed_labels: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub n_samples: usize,
    pub ground_truth: String,
    pub attacks: Vec<AttackRef>,
    #[serde(default)]
    pub signals: BTreeMap<String, String>,
    #[serde(default)]
    pub canary_mask: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// Writes bytes to a sibling temp file, then renames into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn parse_cell(raw: &str, file: &Path, row: usize, col: usize) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        anyhow!(
            "{}: non-numeric value '{raw}' at row {row}, col {col}",
            file.display()
        )
    })
}

fn parse_binary_cell(raw: &str, file: &Path, row: usize, col: usize) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => bail!(
            "{}: expected 0 or 1, got '{other}' at row {row}, col {col}",
            file.display()
        ),
    }
}

/// Single-column 0/1 CSV with the given header.
pub fn read_binary_column(path: &Path, header: &str) -> Result<Vec<u8>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.len() != 1 || headers.get(0) != Some(header) {
        bail!("{}: expected single column '{header}'", path.display());
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        out.push(parse_binary_cell(record.get(0).unwrap_or(""), path, i + 1, 1)?);
    }
    Ok(out)
}

pub fn write_binary_column(path: &Path, header: &str, values: &[u8]) -> Result<()> {
    let mut buf = String::from(header);
    buf.push('\n');
    for v in values {
        buf.push_str(&v.to_string());
        buf.push('\n');
    }
    atomic_write(path, buf.as_bytes())
}

/// Score matrix CSV: header `sample_0..sample_{n-1}`, one row per instance.
pub fn read_score_matrix(path: &Path, name: &str, seed_labels: Vec<String>) -> Result<ScoreMatrix> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let n_cols = reader.headers()?.len();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != n_cols {
            bail!(
                "{}: row {} has {} columns, expected {n_cols}",
                path.display(),
                i + 1,
                record.len()
            );
        }
        let row: Vec<f64> = record
            .iter()
            .enumerate()
            .map(|(j, cell)| parse_cell(cell, path, i + 1, j + 1))
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Ok(ScoreMatrix::from_rows(name, rows, seed_labels)?)
}

pub fn write_score_matrix(path: &Path, sm: &ScoreMatrix) -> Result<()> {
    let mut buf = (0..sm.n_samples())
        .map(|j| format!("sample_{j}"))
        .collect::<Vec<_>>()
        .join(",");
    buf.push('\n');
    for row in sm.rows() {
        buf.push_str(
            &row.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        buf.push('\n');
    }
    atomic_write(path, buf.as_bytes())
}

/// Signal CSV: a single `value` column per sample, or `shadow_*` columns
/// for one row per sample across shadow models.
pub fn read_signal(path: &Path) -> Result<Signal> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let is_vector = headers.len() == 1 && headers.get(0) == Some("value");
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row: Vec<f64> = record
            .iter()
            .enumerate()
            .map(|(j, cell)| parse_cell(cell, path, i + 1, j + 1))
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if is_vector {
        Ok(Signal::Vector(rows.into_iter().map(|r| r[0]).collect()))
    } else {
        Ok(Signal::Matrix(rows))
    }
}

pub fn write_signal(path: &Path, signal: &Signal) -> Result<()> {
    let mut buf = String::new();
    match signal {
        Signal::Vector(values) => {
            buf.push_str("value\n");
            for v in values {
                buf.push_str(&v.to_string());
                buf.push('\n');
            }
        }
        Signal::Matrix(rows) => {
            let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
            buf.push_str(
                &(0..width)
                    .map(|j| format!("shadow_{j}"))
                    .collect::<Vec<_>>()
                    .join(","),
            );
            buf.push('\n');
            for row in rows {
                buf.push_str(
                    &row.iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                );
                buf.push('\n');
            }
        }
    }
    atomic_write(path, buf.as_bytes())
}

/// Reads and fully validates a bundle from its manifest.
pub fn ingest(manifest_path: &Path) -> Result<ExperimentBundle> {
    let text = fs::read_to_string(manifest_path)
        .with_context(|| format!("reading manifest {}", manifest_path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .with_context(|| format!("parsing manifest {}", manifest_path.display()))?;
    if manifest.version != MANIFEST_VERSION {
        bail!(
            "unsupported manifest version {} (expected {MANIFEST_VERSION})",
            manifest.version
        );
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |rel: &str| -> PathBuf { base.join(rel) };

    let gt_labels = read_binary_column(&resolve(&manifest.ground_truth), "member")?;
    let ground_truth = GroundTruth::new(gt_labels)?;

    let mut attacks = BTreeMap::new();
    for a in &manifest.attacks {
        let sm = read_score_matrix(&resolve(&a.scores), &a.name, a.seed_labels.clone())?;
        if attacks.insert(a.name.clone(), sm).is_some() {
            bail!("duplicate attack name '{}'", a.name);
        }
    }

    let mut signals = BTreeMap::new();
    for (name, rel) in &manifest.signals {
        signals.insert(name.clone(), read_signal(&resolve(rel))?);
    }

    let canary_mask = manifest
        .canary_mask
        .as_ref()
        .map(|rel| read_binary_column(&resolve(rel), "canary"))
        .transpose()?;

    let bundle = ExperimentBundle {
        ground_truth,
        attacks,
        signals,
        canary_mask,
        metadata: manifest.metadata,
    };
    if bundle.n_samples() != manifest.n_samples {
        bail!(
            "manifest declares {} samples but files contain {}",
            manifest.n_samples,
            bundle.n_samples()
        );
    }
    let report = mia_core::validate_bundle(&bundle);
    if !report.is_valid() {
        let lines: Vec<String> = report
            .violations
            .iter()
            .map(|v| format!("  {} {}: {}", v.type_name, v.field, v.message))
            .collect();
        bail!("bundle validation failed:\n{}", lines.join("\n"));
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(bundle)
}

/// Writes a bundle plus its manifest into `dir`.
pub fn emit(bundle: &ExperimentBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_binary_column(&dir.join("ground_truth.csv"), "member", bundle.ground_truth.labels())?;

    let mut attacks = Vec::new();
    for (name, sm) in &bundle.attacks {
        let file = format!("scores_{name}.csv");
        write_score_matrix(&dir.join(&file), sm)?;
        attacks.push(AttackRef {
            name: name.clone(),
            scores: file,
            seed_labels: sm.seed_labels().to_vec(),
        });
    }

    let mut signals = BTreeMap::new();
    for (name, signal) in &bundle.signals {
        let file = format!("signal_{name}.csv");
        write_signal(&dir.join(&file), signal)?;
        signals.insert(name.clone(), file);
    }

    let canary_mask = match &bundle.canary_mask {
        Some(mask) => {
            write_binary_column(&dir.join("canary_mask.csv"), "canary", mask)?;
            Some("canary_mask.csv".to_string())
        }
        None => None,
    };

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        n_samples: bundle.n_samples(),
        ground_truth: "ground_truth.csv".to_string(),
        attacks,
        signals,
        canary_mask,
        metadata: bundle.metadata.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    atomic_write(&dir.join("manifest.json"), json.as_bytes())?;
    Ok(())
}
