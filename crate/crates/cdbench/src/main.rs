use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cdbench::harness::{emit_all, planned_reports, run_scenario, Format, RunOptions, Scenario};
use cdbench::inequalities::Statement;
use cdbench::{BenchError, Result};

/// Numerical test bench for curvature-dimension inequalities.
///
/// Exit status: 0 when every check passes (or the scenario is a
/// falsification run), 1 when a check fails, 2 on errors.
#[derive(Debug, Parser)]
#[command(name = "cdbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Debug, Args)]
struct Global {
    /// Output directory (defaults to the scenario's `output.dir`, then
    /// `cdbench-out/<name>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output formats; repeat or comma-separate. Defaults to the scenario's.
    #[arg(long, global = true, value_delimiter = ',')]
    format: Vec<FormatArg>,
    /// Eigendecomposition cache directory.
    #[arg(long, global = true, env = "CDBENCH_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Multiplies every tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
    /// Adds this to the resolved K and marks the run as a falsification run.
    #[arg(long, global = true, allow_hyphen_values = true)]
    k_shift: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Svg,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
            FormatArg::Svg => Format::Svg,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its reports.
    Check { scenario: PathBuf },
    /// Run a scenario with grids overridden, e.g. `--grid t=0.1,0.2`.
    Sweep {
        scenario: PathBuf,
        #[arg(long = "grid", value_name = "KEY=V1,V2,...", required = true)]
        grids: Vec<String>,
    },
    /// Spectral gap and the Lichnerowicz check only.
    Spectrum { scenario: PathBuf },
    /// Contraction checks only.
    Transport { scenario: PathBuf },
    /// Validate a scenario and print the planned report count.
    Validate { scenario: PathBuf },
}

fn bad(message: String) -> BenchError {
    BenchError::Scenario { stage: "cli", message }
}

/// Replaces a grid in every check that takes it.
fn apply_grid(scn: &mut Scenario, spec: &str) -> Result<()> {
    let (key, values) = spec.split_once('=').ok_or_else(|| bad(format!("grid {spec:?} is not KEY=VALUES")))?;
    let values: Vec<f64> = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| bad(format!("grid {key}: {v:?}: {e}"))))
        .collect::<Result<_>>()?;
    let mut touched = 0;
    for check in &mut scn.checks {
        if !check.statement.grids().contains(&key) {
            continue;
        }
        let grid = match key {
            "t" => &mut check.t,
            "s" => &mut check.s,
            "eps" => &mut check.eps,
            "r" => &mut check.r,
            "r_scale" => &mut check.r_scale,
            "p" => &mut check.p,
            "theta" => &mut check.theta,
            _ => return Err(bad(format!("unknown grid {key:?}"))),
        };
        *grid = values.clone();
        touched += 1;
    }
    if touched == 0 {
        return Err(bad(format!("no check uses the grid {key:?}")));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    let (path, only) = match &cli.command {
        Command::Check { scenario } | Command::Sweep { scenario, .. } | Command::Validate { scenario } => {
            (scenario, None)
        }
        Command::Spectrum { scenario } => (scenario, Some(vec![Statement::Lichnerowicz])),
        Command::Transport { scenario } => {
            (scenario, Some(vec![Statement::ContractionCtp, Statement::ContractionCtpp]))
        }
    };
    let mut scn = Scenario::load(path)?;
    if let Command::Sweep { grids, .. } = &cli.command {
        for spec in grids {
            apply_grid(&mut scn, spec)?;
        }
    }
    if let Some(shift) = g.k_shift {
        scn.curvature.shift += shift;
        scn.falsification = true;
    }
    if let Some(only) = &only {
        scn.checks.retain(|c| only.contains(&c.statement));
    }

    if let Command::Validate { .. } = cli.command {
        let planned = planned_reports(&scn)?;
        println!("{}: valid, {} checks, {planned} planned reports", scn.name, scn.checks.len());
        return Ok(true);
    }

    let opts = RunOptions { cache_dir: g.cache_dir.clone(), jobs: g.jobs, tol_scale: g.tol_scale, only: None };
    let rs = run_scenario(&scn, &opts)?;

    let spectrum = matches!(cli.command, Command::Spectrum { .. });
    if spectrum {
        println!("spectral gap: {:.12}", rs.resolved.spectral_gap);
    }
    let out = g
        .out
        .clone()
        .or_else(|| scn.output.dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("cdbench-out").join(&scn.name));
    let formats: Vec<Format> =
        if g.format.is_empty() { scn.output.formats.clone() } else { g.format.iter().map(|&f| f.into()).collect() };
    let written = emit_all(&rs, &out, &formats)?;

    let s = &rs.summary;
    println!(
        "{}: {} reports, {} passed, {} failed, {} degraded (K = {}, n = {})",
        scn.name, s.total, s.passed, s.failed, s.degraded, rs.resolved.k, rs.resolved.n
    );
    for (name, st) in &s.statements {
        println!(
            "  {name:<18} {:>5}/{:<5} worst margin {:+.3e}{}",
            st.passed,
            st.count,
            st.worst_margin,
            if st.degraded > 0 { format!(" ({} degraded)", st.degraded) } else { String::new() }
        );
    }
    if s.falsification {
        println!("falsification run: gradient/variance violation {}", if s.falsified { "detected" } else { "NOT detected" });
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(s.ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("cdbench: {e}");
            ExitCode::from(2)
        }
    }
}
