//! Command-line front end.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info, warn};

use crate::case::{build_scenario_sequence_with, scale_loads, BusId, LoadScaling};
use crate::circuit::CircuitAssembly;
use crate::error::{Error, Result};
use crate::matpower::parse_matpower_case;
use crate::multi_period::{run_baseline_with_jobs, run_multi_period, Mode};
use crate::oracle::{min_support_bruteforce, restricted_feasibility_check};
use crate::report::{config_hash, write_metrics, write_plot_data, Figure, ReportDocument, RunMetadata};
use crate::solver::SolverConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "blackout-lens", version, about = "Sparse infeasibility diagnosis for collapsed power-grid scenarios")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sparse diagnosis over a load-factor sweep and write a report.
    Diagnose(DiagnoseArgs),
    /// Derive persistency tables from a report.
    Metrics(MetricsArgs),
    /// Emit one long-format plot series from a report.
    PlotData(PlotDataArgs),
    /// Exhaustive minimum-support search on a tiny case.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    MultiPeriod,
    Baseline,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SingleModeArg {
    MultiPeriod,
    Baseline,
}

impl From<SingleModeArg> for Mode {
    fn from(m: SingleModeArg) -> Mode {
        match m {
            SingleModeArg::MultiPeriod => Mode::MultiPeriod,
            SingleModeArg::Baseline => Mode::BaselineSingleScenario,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FigureArg {
    Trajectory,
    SetPersistency,
    SparsityCompare,
    Runtime,
}

impl From<FigureArg> for Figure {
    fn from(f: FigureArg) -> Figure {
        match f {
            FigureArg::Trajectory => Figure::Trajectory,
            FigureArg::SetPersistency => Figure::SetPersistency,
            FigureArg::SparsityCompare => Figure::SparsityCompare,
            FigureArg::Runtime => Figure::Runtime,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct SolverArgs {
    /// Residual tolerance (infinity norm).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Relative threshold of the weight update rule.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub c_high: Option<f64>,
    #[arg(long)]
    pub c_low: Option<f64>,
    /// Support threshold on |n_i|.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

impl SolverArgs {
    pub fn config(&self) -> Result<SolverConfig> {
        let mut c = SolverConfig::default();
        if let Some(v) = self.tol {
            c.tol_residual = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.c_high {
            c.c_high = v;
        }
        if let Some(v) = self.c_low {
            c.c_low = v;
        }
        if let Some(v) = self.epsilon {
            c.epsilon_support = v;
        }
        if let Some(v) = self.max_iters {
            c.max_iters = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, clap::Args)]
pub struct DiagnoseArgs {
    /// MATPOWER case file.
    #[arg(long)]
    pub case: PathBuf,
    /// `start:stop:step` (inclusive) or a comma-separated list.
    #[arg(long)]
    pub factors: String,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: ModeArg,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Output formats; the JSON report is always written.
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["json", "csv"])]
    pub format: Vec<Format>,
    /// Worker threads for the baseline sweep.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV of `bus,factor` rows; listed buses scale by `load_factor·factor`.
    #[arg(long)]
    pub bus_scaling: Option<PathBuf>,
    /// Scale generator active setpoints with the load factor.
    #[arg(long)]
    pub scale_generation: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, clap::Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Defaults to multi-period when present.
    #[arg(long, value_enum)]
    pub mode: Option<SingleModeArg>,
}

#[derive(Debug, clap::Args)]
pub struct PlotDataArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, value_enum)]
    pub figure: FigureArg,
    /// Output file; defaults to `<figure>.csv` next to the report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Mode for single-mode figures; defaults to multi-period when present.
    #[arg(long, value_enum)]
    pub mode: Option<SingleModeArg>,
}

#[derive(Debug, clap::Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub factor: f64,
    #[arg(long, default_value_t = 4)]
    pub max_card: usize,
    /// Also check this comma-separated support instead of only enumerating.
    #[arg(long, value_delimiter = ',')]
    pub support: Option<Vec<u32>>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Parses `start:stop:step` (inclusive of `stop`) or `a,b,c`.
pub fn parse_factors(spec: &str) -> Result<Vec<f64>> {
    let bad = |m: &str| Error::InvalidArgument(format!("factors `{spec}`: {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step"));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0 && step.is_finite()) {
            return Err(bad("step must be positive"));
        }
        if !(start.is_finite() && stop.is_finite()) || stop < start {
            return Err(bad("stop must not precede start"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // Round away the accumulated binary error (3.8 + 0.1·k).
        Ok((0..count)
            .map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9)
            .collect())
    } else {
        spec.split(',').map(num).collect()
    }
}

pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Diagnose(a) => cmd_diagnose(&a),
        Command::Metrics(a) => cmd_metrics(&a).map(|_| EXIT_OK),
        Command::PlotData(a) => cmd_plot_data(&a).map(|_| EXIT_OK),
        Command::Oracle(a) => cmd_oracle(&a).map(|_| EXIT_OK),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            EXIT_FATAL
        }
    }
}

fn read_case(path: &Path) -> Result<crate::case::NetworkCase> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    parse_matpower_case(&text)
}

/// Runs the requested modes and writes `report.json` (plus CSV views).
/// Returns the exit code: 0 when every scenario converged, 2 otherwise.
pub fn cmd_diagnose(a: &DiagnoseArgs) -> Result<i32> {
    let config = a.solver.config()?;
    let factors = parse_factors(&a.factors)?;
    if a.jobs == 0 {
        return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
    }
    let case = read_case(&a.case)?;
    let scaling = LoadScaling {
        bus_factors: match &a.bus_scaling {
            Some(p) => LoadScaling::read_bus_factors(&std::fs::read_to_string(p)?)?,
            None => Default::default(),
        },
        scale_generation: a.scale_generation,
    };
    let seq = build_scenario_sequence_with(&case, &factors, &scaling)?;
    info!("{}: {} buses, {} scenarios", case.name, case.buses.len(), seq.len());

    let mut results = Vec::new();
    if matches!(a.mode, ModeArg::MultiPeriod | ModeArg::Both) {
        results.push(run_multi_period(&seq, &config)?);
    }
    if matches!(a.mode, ModeArg::Baseline | ModeArg::Both) {
        results.push(run_baseline_with_jobs(&seq, &config, a.jobs)?);
    }
    let metadata = RunMetadata {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        case_name: case.name.clone(),
        bus_count: case.buses.len(),
        base_mva: case.base_mva,
        factors: factors.clone(),
        config_hash: config_hash(&case, &factors, &scaling, &config),
        config,
        bus_scaling: scaling.bus_factors.clone(),
        scale_generation: scaling.scale_generation,
    };
    let doc = ReportDocument::build(metadata, &results);
    std::fs::create_dir_all(&a.out)?;
    doc.write(&a.out.join("report.json"))?;
    if a.format.contains(&Format::Csv) {
        for r in &results {
            write_metrics(&doc, Some(r.mode), &a.out.join(r.mode.key()))?;
        }
        for fig in [Figure::Trajectory, Figure::SetPersistency, Figure::Runtime] {
            write_plot_data(&doc, fig, None, &a.out.join(fig.file_name()))?;
        }
        if results.len() == 2 {
            let fig = Figure::SparsityCompare;
            write_plot_data(&doc, fig, None, &a.out.join(fig.file_name()))?;
        }
    }

    let mut complete = true;
    for r in &results {
        if let Some((t, e)) = r.failure() {
            warn!("{}: scenario {t} failed: {e}", r.mode.key());
            complete = false;
        } else if !r.complete() {
            complete = false;
        }
    }
    Ok(if complete { EXIT_OK } else { EXIT_PARTIAL })
}

pub fn cmd_metrics(a: &MetricsArgs) -> Result<()> {
    let doc = ReportDocument::read(&a.report)?;
    write_metrics(&doc, a.mode.map(Mode::from), &a.out)
}

pub fn cmd_plot_data(a: &PlotDataArgs) -> Result<()> {
    let doc = ReportDocument::read(&a.report)?;
    let fig = Figure::from(a.figure);
    let out = a.out.clone().unwrap_or_else(|| {
        a.report
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(fig.file_name())
    });
    write_plot_data(&doc, fig, a.mode.map(Mode::from), &out)
}

pub fn cmd_oracle(a: &OracleArgs) -> Result<()> {
    let config = a.solver.config()?;
    let case = scale_loads(&read_case(&a.case)?, a.factor)?;
    let asm = CircuitAssembly::new(&case)?;
    if let Some(ids) = &a.support {
        let support: BTreeSet<BusId> = ids.iter().map(|&b| BusId(b)).collect();
        let (feasible, n) = restricted_feasibility_check(&asm, &support, &config, None)?;
        let out = serde_json::json!({
            "support": support,
            "feasible": feasible,
            "n_norm": crate::linalg::norm2(&n.0),
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    let result = min_support_bruteforce(&asm, a.max_card, &config)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}
