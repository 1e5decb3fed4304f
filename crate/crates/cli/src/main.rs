use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use asyncprox_cli::spec::{Engine, TraceFormat};
use asyncprox_cli::{
    cmd_check, cmd_compare, cmd_run, cmd_sweep, CheckKind, RunSpec, SweepAxis, SweepRequest, EXIT_ERROR, EXIT_OK,
};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "asyncprox", version, about = "Asynchronous block iteration with resolvents of strongly monotone operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem/run spec (TOML, or JSON with a .json extension).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    engine: Option<Engine>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    json: bool,
}

impl Common {
    fn load(&self) -> Result<RunSpec> {
        let mut spec = RunSpec::load(&self.spec)?;
        if let Some(seed) = self.seed {
            spec.schedule.seed = seed;
        }
        if let Some(engine) = self.engine {
            spec.solver.engine = engine;
        }
        if let Some(tol) = self.tol {
            spec.solver.tol = tol;
        }
        if let Some(n) = self.max_iter {
            spec.solver.max_iter = n;
        }
        Ok(spec)
    }

    fn print<T: Serialize>(&self, report: &T, human: String) -> Result<()> {
        if self.json {
            println!("{}", serde_json::to_string_pretty(report)?);
        } else {
            println!("{human}");
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the spec; writes the trace and a JSON summary with --out.
    Run {
        #[command(flatten)]
        common: Common,
        /// Trace file; the summary goes next to it as <stem>.summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<TraceFormat>,
    },
    /// Sampled hypothesis checks.
    Check {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of h3, h4, monotone, linear.
        #[arg(long, value_enum, value_delimiter = ',', num_args = 0..)]
        which: Vec<CheckKind>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Write the reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One run per value of a parameter; table as CSV with --out.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', num_args = 0.., allow_negative_numbers = true)]
        values: Vec<f64>,
        /// Interpret c values as multiples of max(min_c, 1e-3).
        #[arg(long)]
        relative: bool,
        /// Run the values concurrently.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Jacobi vs Gauss-Seidel vs the spec's schedule; table as CSV with --out.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { common, out, format } => {
            let mut spec = common.load()?;
            if let Some(out) = out {
                spec.output.trace = Some(out);
            }
            if let Some(format) = format {
                spec.output.format = format;
            }
            let report = cmd_run(&spec)?;
            common.print(&report, report.human())?;
            Ok(report.exit_code())
        }
        Command::Check { common, which, samples, out } => {
            let spec = common.load()?;
            let report = cmd_check(&spec, &which, samples)?;
            if let Some(out) = out {
                std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            }
            common.print(&report, report.human())?;
            Ok(report.exit_code())
        }
        Command::Sweep { common, axis, values, relative, parallel, out } => {
            let spec = common.load()?;
            let report = cmd_sweep(&spec, &SweepRequest { axis, values, relative, parallel })?;
            if let Some(out) = out {
                report.write_csv(&out)?;
            }
            common.print(&report, report.human())?;
            Ok(report.exit_code())
        }
        Command::Compare { common, out } => {
            let spec = common.load()?;
            let report = cmd_compare(&spec)?;
            if let Some(out) = out {
                report.write_csv(&out)?;
            }
            common.print(&report, report.human())?;
            Ok(report.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
