use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use dcda_cli::config::parse_config;
use dcda_cli::sweep::SweepError;
use dcda_cli::{bounds_cmd, exit, exit_code_for, reproduce, runner, sweep};

/// Distributed coordinate dual averaging: run experiments, sweep grids,
/// reproduce presets, and evaluate convergence bounds.
///
/// Exit codes: 0 success, 1 configuration error, 2 numerical divergence,
/// 3 certificate violation, 4 i/o failure.
#[derive(Parser)]
#[command(name = "dcda", version, about, verbatim_doc_comment)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment config; writes a trace CSV and a re-parsable
    /// metadata sidecar next to it.
    Run {
        /// Path to a flat `key = value` config file.
        config: PathBuf,
    },
    /// Run a grid: a base config plus `sweep.<key> = ...` value lists and
    /// a `seeds = ...` list.
    Sweep {
        /// Config file carrying the sweep lines.
        sweepfile: PathBuf,
        /// Output directory; defaults to the sweep file's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in preset (svm, linreg, robust) over a seed list and
    /// write per-variant traces plus a time-to-threshold summary.
    Reproduce {
        /// One of `svm`, `linreg`, `robust`.
        preset: String,
        /// Comma-separated list, e.g. `--seeds 0,1,2`.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Horizon override.
        #[arg(long, default_value_t = dcda::presets::PRESET_DEFAULT_STEPS)]
        steps: usize,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Evaluate the trace-driven certificate and the matching model bound
    /// for a finished run.
    Bounds {
        /// The config (or its sidecar) that produced the trace.
        config: PathBuf,
        /// The trace CSV written by `run`.
        trace: PathBuf,
        /// Output CSV; defaults to the trace name with `.bounds.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_file(path: &PathBuf) -> Result<String, i32> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read {}: {e}", path.display());
        exit::IO
    })
}

fn run_one(config_path: &PathBuf) -> i32 {
    let text = match read_file(config_path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errs) => {
            eprintln!("{}: invalid config", config_path.display());
            eprintln!("{errs}");
            return exit::CONFIG;
        }
    };
    match runner::execute(&mut cfg, config_path) {
        Ok(outcome) => {
            println!("{}", runner::describe(&outcome));
            if let Some(mp) = &outcome.messages_path {
                println!("message log {}", mp.display());
            }
            println!("sidecar {}", outcome.sidecar_path.display());
            exit::OK
        }
        Err(e) => {
            eprintln!("{e}");
            exit_code_for(&e)
        }
    }
}

fn run_sweep(sweepfile: &PathBuf, out: Option<PathBuf>) -> i32 {
    let text = match read_file(sweepfile) {
        Ok(t) => t,
        Err(code) => return code,
    };
    match sweep::run_sweep(&text, sweepfile, out.as_deref()) {
        Ok(outcome) => {
            println!("{} runs complete, summary {}", outcome.runs, outcome.summary_path.display());
            exit::OK
        }
        Err(SweepError::Config(errs)) => {
            eprintln!("{}: invalid sweep", sweepfile.display());
            eprintln!("{errs}");
            exit::CONFIG
        }
        Err(SweepError::Jobs(failures)) => {
            for (desc, err) in &failures {
                eprintln!("[{desc}] {err}");
            }
            exit_code_for(&failures[0].1)
        }
    }
}

fn run_reproduce(preset: &str, seeds: &[u64], steps: usize, out: &PathBuf) -> i32 {
    match reproduce::reproduce(preset, seeds, steps, out) {
        Ok(outcome) => {
            println!(
                "{} traces written, summary {}",
                outcome.trace_paths.len(),
                outcome.summary_path.display()
            );
            exit::OK
        }
        Err(e) => {
            eprintln!("{e}");
            exit_code_for(&e)
        }
    }
}

fn run_bounds(config_path: &PathBuf, trace_path: &PathBuf, out: Option<PathBuf>) -> i32 {
    let text = match read_file(config_path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errs) => {
            eprintln!("{}: invalid config", config_path.display());
            eprintln!("{errs}");
            return exit::CONFIG;
        }
    };
    match bounds_cmd::evaluate(&cfg, trace_path, out) {
        Ok(outcome) => {
            println!(
                "{} rows, final measured {:.6e}, certificate {:.6e}, {} bound {:.6e}, wrote {}",
                outcome.rows,
                outcome.final_measured,
                outcome.final_certificate,
                outcome.model,
                outcome.final_model_bound,
                outcome.out_path.display()
            );
            if outcome.violations > 0 {
                eprintln!(
                    "certificate violated on {} of {} recorded steps; see {}",
                    outcome.violations,
                    outcome.rows,
                    outcome.out_path.display()
                );
                exit::VIOLATION
            } else {
                exit::OK
            }
        }
        Err(e) => {
            eprintln!("{e}");
            exit_code_for(&e)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::from(0);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(exit::CONFIG as u8);
        }
    };
    let code = match &cli.cmd {
        Cmd::Run { config } => run_one(config),
        Cmd::Sweep { sweepfile, out } => run_sweep(sweepfile, out.clone()),
        Cmd::Reproduce { preset, seeds, steps, out } => run_reproduce(preset, seeds, *steps, out),
        Cmd::Bounds { config, trace, out } => run_bounds(config, trace, out.clone()),
    };
    ExitCode::from(code as u8)
}
