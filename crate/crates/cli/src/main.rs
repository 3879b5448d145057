//! `mia`: disparity analysis of membership-inference attack score
//! matrices from the command line. Exit codes: 0 success, 1 invalid
//! input or failed validation, 2 usage error.

mod io;
mod reports;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mia_core::analysis::{cost_pareto, Candidate, CostTable};
use mia_core::disparity::DetectionMode;
use mia_core::ensemble::{default_fpr_grid, EnsembleSpec, Strategy};
use mia_core::scorers::{build_score_matrix, ScorerKind, SignalSet};
use mia_core::simulator::{generate, SimConfig};

use crate::io::{atomic_write, emit, ingest};
use crate::reports::{
    build_analysis, build_ensemble, consistency_csv, convergence_csv, ensemble_summary_csv,
    similarity_csv, sweep_csv, to_deterministic_json,
};

#[derive(Parser)]
#[command(name = "mia", version, about = "Membership-inference attack disparity analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Detected members are positives intersected with ground truth.
    TpOnly,
    /// Detected members are all positive predictions.
    All,
}

impl From<ModeArg> for DetectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::TpOnly => DetectionMode::TruePositivesOnly,
            ModeArg::All => DetectionMode::AllPositives,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Stability,
    Coverage,
    Majority,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Stability => Strategy::Stability,
            StrategyArg::Coverage => Strategy::Coverage,
            StrategyArg::Majority => Strategy::Majority,
        }
    }
}

#[derive(Clone, Debug)]
struct FprList(Vec<f64>);

#[derive(Clone, Debug)]
struct Grid(Vec<f64>);

fn parse_fpr_list(raw: &str) -> Result<FprList, String> {
    let values: Vec<f64> = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}")))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err("empty list".into());
    }
    for &v in &values {
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("{v} is outside [0, 1]"));
        }
    }
    Ok(FprList(values))
}

/// `lo,hi,count`: `count` log-spaced values from lo to hi inclusive.
fn parse_grid(raw: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 3 {
        return Err("expected lo,hi,count".into());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|e| format!("lo: {e}"))?;
    let hi: f64 = parts[1].trim().parse().map_err(|e| format!("hi: {e}"))?;
    let count: usize = parts[2].trim().parse().map_err(|e| format!("count: {e}"))?;
    if !(lo > 0.0 && hi <= 1.0 && lo < hi) {
        return Err("need 0 < lo < hi <= 1".into());
    }
    if count < 2 {
        return Err("count must be >= 2".into());
    }
    let (l0, l1) = (lo.log10(), hi.log10());
    Ok(Grid(
        (0..count)
            .map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / (count - 1) as f64))
            .collect(),
    ))
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON generator configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Instances to derive per scorer.
    #[arg(long, default_value_t = 1)]
    instances: usize,
    /// Instance-level noise on shadow signals; defaults to the bundle's
    /// recorded instance_noise_sigma, else 0.
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated target FPR levels.
    #[arg(long, value_parser = parse_fpr_list, default_value = "0.001,0.01,0.1")]
    fpr: FprList,
    /// Instances per attack; defaults to the smallest available count.
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::TpOnly)]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
    /// Also render SVG charts of the curve data.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Single strategy to evaluate; all three when omitted.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Comma-separated attack names; all attacks when omitted.
    #[arg(long, value_delimiter = ',')]
    attacks: Option<Vec<String>>,
    #[arg(long)]
    instances: Option<usize>,
    /// Base-FPR sweep grid as lo,hi,count (log-spaced).
    #[arg(long, value_parser = parse_grid)]
    grid: Option<Grid>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct CostArgs {
    /// JSON cost table (per-attack costs and shared groups).
    #[arg(long)]
    costs: PathBuf,
    /// CSV of candidates: attacks (joined with '+'), n_instances, performance.
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bundle from a configuration file.
    Simulate(SimulateArgs),
    /// Derive scorer-based attacks from a bundle's model signals.
    Score(ScoreArgs),
    /// Consistency, convergence, similarity, and unique-sample analysis.
    Analyze(AnalyzeArgs),
    /// Sweep and report the prediction-level ensemble ROC.
    Ensemble(EnsembleArgs),
    /// Cost-performance frontier over candidate attack subsets.
    Cost(CostArgs),
    /// Validate a bundle and print any violations.
    Validate(ValidateArgs),
}

fn ensure_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn default_instances(
    bundle: &mia_core::ExperimentBundle,
    attacks: &[String],
    requested: Option<usize>,
) -> Result<usize> {
    if let Some(n) = requested {
        return Ok(n);
    }
    let min = attacks
        .iter()
        .map(|name| Ok(bundle.attack(name)?.n_instances()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min()
        .unwrap_or(0);
    if min == 0 {
        bail!("bundle has no attacks");
    }
    Ok(min)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: SimConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let bundle = generate(&config)?;
    ensure_out(&args.out)?;
    emit(&bundle, &args.out)?;
    println!(
        "wrote bundle: {} samples, {} attacks -> {}",
        bundle.n_samples(),
        bundle.attacks.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let mut bundle = ingest(&args.manifest)?;
    let signals = SignalSet::from_bundle(&bundle)?;
    let sigma = match args.noise_sigma {
        Some(s) => s,
        None => bundle
            .metadata
            .get("instance_noise_sigma")
            .map(|s| s.parse::<f64>())
            .transpose()
            .context("metadata instance_noise_sigma is not a number")?
            .unwrap_or(0.0),
    };
    let kinds = ScorerKind::available(&signals);
    if kinds.is_empty() {
        bail!("bundle carries no signals usable by any scorer");
    }
    for kind in kinds {
        let sm = build_score_matrix(&signals, kind, args.instances, sigma, args.seed)?;
        let name = kind.name().to_string();
        if bundle.attacks.contains_key(&name) {
            bail!("attack name '{name}' already present in the bundle");
        }
        println!("derived attack '{name}' ({} instances)", args.instances);
        bundle.attacks.insert(name, sm);
    }
    ensure_out(&args.out)?;
    emit(&bundle, &args.out)?;
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let bundle = ingest(&args.manifest)?;
    let attacks = bundle.attack_names();
    let n_instances = default_instances(&bundle, &attacks, args.instances)?;
    let report = build_analysis(&bundle, &args.fpr.0, n_instances, args.mode.into())?;
    ensure_out(&args.out)?;
    atomic_write(
        &args.out.join("report.json"),
        to_deterministic_json(&report)?.as_bytes(),
    )?;
    atomic_write(
        &args.out.join("convergence.csv"),
        convergence_csv(&report).as_bytes(),
    )?;
    atomic_write(
        &args.out.join("similarity.csv"),
        similarity_csv(&report).as_bytes(),
    )?;
    atomic_write(
        &args.out.join("consistency.csv"),
        consistency_csv(&report).as_bytes(),
    )?;
    if args.svg {
        let mut series = Vec::new();
        for (name, attack) in &report.attacks {
            for per_beta in &attack.per_beta {
                series.push(svg::Series {
                    label: format!("{name}@{}", per_beta.beta),
                    points: per_beta
                        .convergence
                        .iter()
                        .map(|p| (p.k as f64, p.coverage.tpr))
                        .collect(),
                });
            }
        }
        let chart = svg::line_chart("coverage TPR vs instances", "instances", "TPR", &series);
        atomic_write(&args.out.join("convergence.svg"), chart.as_bytes())?;
    }
    println!("wrote analysis -> {}", args.out.display());
    Ok(())
}

fn cmd_ensemble(args: &EnsembleArgs) -> Result<()> {
    let bundle = ingest(&args.manifest)?;
    let attacks = match &args.attacks {
        Some(list) => list.clone(),
        None => bundle.attack_names(),
    };
    for name in &attacks {
        bundle.attack(name)?;
    }
    let n_instances = default_instances(&bundle, &attacks, args.instances)?;
    let grid = args
        .grid
        .clone()
        .map(|g| g.0)
        .unwrap_or_else(default_fpr_grid);
    let strategies: Vec<Strategy> = match args.strategy {
        Some(s) => vec![s.into()],
        None => vec![Strategy::Stability, Strategy::Majority, Strategy::Coverage],
    };

    ensure_out(&args.out)?;
    let mut ensemble_reports = Vec::new();
    for strategy in strategies {
        let spec = EnsembleSpec {
            strategy,
            attacks: attacks.clone(),
            n_instances,
            fpr_grid: grid.clone(),
        };
        let report = build_ensemble(&bundle, &spec)?;
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        atomic_write(
            &args.out.join(format!("report_{}.json", strategy.name())),
            to_deterministic_json(&report)?.as_bytes(),
        )?;
        ensemble_reports.push(report);
    }
    atomic_write(
        &args.out.join("sweep.csv"),
        sweep_csv(&ensemble_reports).as_bytes(),
    )?;
    atomic_write(
        &args.out.join("summary.csv"),
        ensemble_summary_csv(&ensemble_reports).as_bytes(),
    )?;
    if args.svg {
        let series: Vec<svg::Series> = ensemble_reports
            .iter()
            .map(|r| svg::Series {
                label: r.strategy.name().to_string(),
                points: r.envelope.iter().map(|p| (p.fpr, p.tpr)).collect(),
            })
            .collect();
        let chart = svg::line_chart("ensemble ROC envelope", "FPR", "TPR", &series);
        atomic_write(&args.out.join("roc.svg"), chart.as_bytes())?;
    }
    println!("wrote ensemble reports -> {}", args.out.display());
    Ok(())
}

fn cmd_cost(args: &CostArgs) -> Result<()> {
    let text = fs::read_to_string(&args.costs)
        .with_context(|| format!("reading {}", args.costs.display()))?;
    let table: CostTable =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.costs.display()))?;

    let mut reader = csv::Reader::from_path(&args.candidates)
        .with_context(|| format!("opening {}", args.candidates.display()))?;
    let headers = reader.headers()?.clone();
    let expected = ["attacks", "n_instances", "performance"];
    if headers.iter().collect::<Vec<_>>() != expected {
        bail!(
            "{}: expected header {}",
            args.candidates.display(),
            expected.join(",")
        );
    }
    let mut candidates = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let attacks: Vec<String> = record
            .get(0)
            .unwrap_or("")
            .split('+')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let n_instances: usize = record
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .with_context(|| format!("row {row}: bad n_instances"))?;
        let performance: f64 = record
            .get(2)
            .unwrap_or("")
            .trim()
            .parse()
            .with_context(|| format!("row {row}: bad performance"))?;
        candidates.push(Candidate {
            attacks,
            n_instances,
            performance,
        });
    }

    let annotated = cost_pareto(&table, &candidates)?;
    ensure_out(&args.out)?;
    atomic_write(
        &args.out.join("frontier.json"),
        to_deterministic_json(&annotated)?.as_bytes(),
    )?;
    let mut csv_out = String::from("attacks,n_instances,performance,cost,on_frontier\n");
    for c in &annotated {
        csv_out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.attacks.join("+"),
            c.n_instances,
            c.performance,
            c.cost,
            c.on_frontier
        ));
    }
    atomic_write(&args.out.join("frontier.csv"), csv_out.as_bytes())?;
    println!(
        "{} candidates, {} on the frontier -> {}",
        annotated.len(),
        annotated.iter().filter(|c| c.on_frontier).count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let bundle = ingest(&args.manifest)?;
    println!(
        "ok: {} samples ({} members), {} attacks, {} signals",
        bundle.n_samples(),
        bundle.ground_truth.n_members(),
        bundle.attacks.len(),
        bundle.signals.len()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Score(args) => cmd_score(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Ensemble(args) => cmd_ensemble(args),
        Command::Cost(args) => cmd_cost(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
