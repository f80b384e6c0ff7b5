use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ricci_tunnel_cli::{
    compare_baseline, run, CliError, ExperimentConfig, ExperimentKind, RunReport, WORKERS_ENV,
};

#[derive(Parser)]
#[command(
    name = "ricci-tunnel",
    version,
    about = "Tunnel surgery with spectral Ricci lower bounds on warped models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for report.json and CSV files
    #[arg(long)]
    out: Option<PathBuf>,
    /// Named preset: toy, neck, euclidean, sphere, dumbbell, handle, sharpness
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Override numerics.grid
    #[arg(long)]
    grid: Option<usize>,
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    ToyIdentity(Common),
    NeckCheck(Common),
    GreenSolve(Common),
    TunnelBuild(Common),
    DefectScan(Common),
    Lambda1(Common),
    ThresholdScan(Common),
    Asymptotics(Common),
    /// Compare a report against a baseline report
    Compare {
        report: PathBuf,
        baseline: PathBuf,
        #[arg(short, long)]
        quiet: bool,
    },
}

fn default_preset(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::ToyIdentity => "toy",
        ExperimentKind::NeckCheck => "neck",
        ExperimentKind::GreenSolve | ExperimentKind::Lambda1 | ExperimentKind::Asymptotics => {
            "sphere"
        }
        ExperimentKind::TunnelBuild | ExperimentKind::DefectScan => "dumbbell",
        ExperimentKind::ThresholdScan => "sharpness",
    }
}

fn resolve(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, preset) => {
            let mut cfg =
                ExperimentConfig::preset(preset.as_deref().unwrap_or(default_preset(kind)))?;
            cfg.kind = Some(kind);
            cfg
        }
    };
    if let Some(g) = c.grid {
        cfg.numerics.grid = g;
    }
    Ok(cfg)
}

fn print_report(report: &RunReport) {
    for c in &report.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!(
            "{tag} {:<32} value={:<14.6e} threshold={:.3e}",
            c.name, c.value, c.threshold
        );
    }
    for (k, v) in &report.scalars {
        println!("     {k} = {v:.12e}");
    }
    for a in &report.artifacts {
        println!("wrote {a}");
    }
    match report.failing().as_slice() {
        [] => println!("{}: all {} checks passed", report.kind, report.checks.len()),
        failing => println!("{}: failed checks: {}", report.kind, failing.join(", ")),
    }
}

fn configure_workers() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().map_err(|_| {
            CliError::Config(format!("{WORKERS_ENV} = '{v}' is not a worker count"))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    configure_workers()?;
    let (kind, common) = match cli.command {
        Command::Compare {
            report,
            baseline,
            quiet,
        } => {
            let diffs = compare_baseline(&RunReport::load(&report)?, &RunReport::load(&baseline)?)?;
            if !quiet {
                for d in &diffs {
                    println!(
                        "DIFF {}: report={:?} baseline={:?} tol={:e}",
                        d.key, d.report, d.baseline, d.tolerance
                    );
                }
                println!("{} differences", diffs.len());
            }
            return Ok(diffs.is_empty());
        }
        Command::ToyIdentity(c) => (ExperimentKind::ToyIdentity, c),
        Command::NeckCheck(c) => (ExperimentKind::NeckCheck, c),
        Command::GreenSolve(c) => (ExperimentKind::GreenSolve, c),
        Command::TunnelBuild(c) => (ExperimentKind::TunnelBuild, c),
        Command::DefectScan(c) => (ExperimentKind::DefectScan, c),
        Command::Lambda1(c) => (ExperimentKind::Lambda1, c),
        Command::ThresholdScan(c) => (ExperimentKind::ThresholdScan, c),
        Command::Asymptotics(c) => (ExperimentKind::Asymptotics, c),
    };
    let cfg = resolve(kind, &common)?;
    let report = run(kind, &cfg, common.out.as_deref())?;
    if !common.quiet {
        print_report(&report);
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
