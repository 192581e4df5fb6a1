use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bmec_core::problem::restrict;
use bmec_core::scenario::realize_channels;
use bmec_core::{Problem, SchemeTag, SolveOptions, SolveReport, SolveStatus};
use bmec_harness::{emit_csv, load_config, run_sweep, solve, write_csv, Config, SweepOptions};
use clap::{Parser, Subcommand};
use serde_json::json;

/// Weighted sum computation bits maximization for backscatter-assisted
/// wirelessly powered MEC.
///
/// Logging is controlled by BMEC_LOG (off, info, debug; default warn).
#[derive(Parser)]
#[command(name = "bmec", version)]
struct Cli {
    /// Scenario config (JSON). Defaults to the reference instance.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fading seed; overrides the config's sweep seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scaled KKT residual required for an optimal status.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance. Without --seed the channels are path loss only.
    Solve {
        #[arg(long, default_value = "proposed")]
        scheme: SchemeTag,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the config's sweep and write the CSV table.
    Sweep {
        /// Comma-separated schemes; overrides the config.
        #[arg(long, value_delimiter = ',')]
        scheme: Vec<SchemeTag>,
        /// Output CSV; defaults to the config's output path, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record solve times in mean_solve_ms (makes output run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Run the verification suite.
    Verify,
}

const EXIT_USAGE: u8 = 1;
const EXIT_SOLVER: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .parse_filters(&std::env::var("BMEC_LOG").unwrap_or_else(|_| "warn".into()))
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let config = match &cli.config {
        Some(path) => load_config(path).map_err(|e| e.to_string())?,
        None => Config::default(),
    };
    let mut opts = SolveOptions::default();
    if let Some(tol) = cli.tol {
        if !(tol > 0.0) {
            return Err(format!("--tol must be positive, got {tol}"));
        }
        opts.tol = tol;
    }
    if let Some(n) = cli.max_iters {
        opts.max_iters = n;
    }
    match cli.command {
        Command::Solve { scheme, out } => solve_one(&config, cli.seed, scheme, &opts, out.as_deref()),
        Command::Sweep { scheme, out, timing } => {
            let mut spec = config.sweep.clone();
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            if !scheme.is_empty() {
                spec.schemes = scheme;
            }
            let out = out.or(spec.output_path.clone());
            let sweep_opts = SweepOptions {
                solve: opts,
                timing,
            };
            let rows = run_sweep(&spec, &config.scenario, &config.geometry, &sweep_opts)
                .map_err(|e| e.to_string())?;
            match out {
                Some(path) => emit_csv(&rows, &path).map_err(|e| format!("{}: {e}", path.display()))?,
                None => write_csv(&rows, std::io::stdout().lock()).map_err(|e| e.to_string())?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let seed = cli.seed.unwrap_or(config.sweep.seed);
            let checks = bmec_harness::verify::run_verify(&config, seed, &opts);
            let mut all = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                all &= c.passed;
            }
            Ok(if all {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_SOLVER)
            })
        }
    }
}

fn solve_one(
    config: &Config,
    seed: Option<u64>,
    scheme: SchemeTag,
    opts: &SolveOptions<f64>,
    out: Option<&Path>,
) -> Result<ExitCode, String> {
    let scenario = match seed {
        Some(seed) => {
            let gains = realize_channels(&config.geometry, seed).map_err(|e| e.to_string())?;
            config.scenario.with_gains(&gains).map_err(|e| e.to_string())?
        }
        None => config.scenario.clone(),
    };
    let problem = restrict(&scenario, scheme);
    let report = solve(&problem, opts);
    print_report(&report, &problem);
    if let Some(path) = out {
        let doc = serde_json::to_string_pretty(&report_json(&report, &problem)).expect("plain data");
        std::fs::write(path, doc + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(if report.status == SolveStatus::Optimal {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SOLVER)
    })
}

fn print_report(report: &SolveReport, problem: &Problem) {
    let mut o = std::io::stdout().lock();
    let _ = writeln!(o, "scheme        {}", problem.scheme);
    let _ = writeln!(o, "status        {:?}", report.status);
    let _ = writeln!(o, "objective     {:.6e} bits", report.objective);
    let _ = writeln!(o, "kkt residual  {:.3e}", report.kkt_residual);
    let _ = writeln!(o, "iterations    {}", report.iterations);
    if report.status == SolveStatus::Infeasible {
        return;
    }
    let _ = writeln!(
        o,
        "\n{:>3} {:>11} {:>8} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11}",
        "eu", "t_b", "alpha", "t_a", "p", "f", "bc bits", "at bits", "local bits", "slack J"
    );
    for (k, a) in report.allocation.eus.iter().enumerate() {
        let b = &report.per_eu_bits[k];
        let _ = writeln!(
            o,
            "{k:>3} {:>11.4e} {:>8.4} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.3e}",
            a.t_b,
            a.reflection(),
            a.t_a,
            a.power(),
            a.freq,
            b.backcom,
            b.at,
            b.local,
            report.energy_slack[k]
        );
    }
}

fn report_json(report: &SolveReport, problem: &Problem) -> serde_json::Value {
    let eus: Vec<_> = report
        .allocation
        .eus
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let b = &report.per_eu_bits[k];
            json!({
                "t_b": a.t_b,
                "x": a.x,
                "alpha": a.reflection(),
                "t_a": a.t_a,
                "energy": a.energy,
                "power": a.power(),
                "freq": a.freq,
                "exec_time": a.exec_time,
                "bits": { "backcom": b.backcom, "at": b.at, "local": b.local },
                "energy_slack": report.energy_slack[k],
                "theta": report.duals.theta[k],
                "mu": report.duals.mu[k],
            })
        })
        .collect();
    json!({
        "scheme": problem.scheme.name(),
        "status": format!("{:?}", report.status),
        "objective": report.objective,
        "kkt_residual": report.kkt_residual,
        "iterations": report.iterations,
        "time_price": report.duals.vartheta0,
        "eus": eus,
    })
}
