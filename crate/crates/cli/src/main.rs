use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use lnoi_cli::report::Status;
use lnoi_cli::{
    emit_reports, fit_file, load_scenario, run_reproduction, run_sweep, sweep_values, FigureId, FitModel, Override,
    ReproductionSpec,
};
use lnoi_server::{Pacing, Server, ServerConfig, DEFAULT_PORT, QUEUE_CAPACITY};

#[derive(Parser)]
#[command(name = "bench", version, about = "Simulated LNOI switch and detector bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce one figure and check its criteria.
    Run {
        figure: FigureId,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a parameter, e.g. `scenario.duration_s=1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<Override>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit a model to a CSV file and print the result as JSON.
    Fit { model: FitModel, data: PathBuf },
    /// Run a scenario over a range of one parameter and print rates as CSV.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve simulated tag streams over TCP.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Pace tags at wall-clock speed and drop them when a client falls behind.
        #[arg(long)]
        realtime: bool,
        #[arg(long, default_value_t = QUEUE_CAPACITY)]
        queue: usize,
    },
}

/// Writes to stdout; a reader that closed the pipe early is not an error.
fn emit(args: std::fmt::Arguments) {
    let _ = std::io::stdout().lock().write_fmt(args);
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            figure,
            seed,
            overrides,
            out,
        } => {
            let spec = ReproductionSpec {
                figure,
                seed,
                overrides,
                out_dir: out,
            };
            let bundle = run_reproduction(&spec)?;
            let dir = emit_reports(&bundle, &spec.out_dir)?;
            for c in &bundle.summary.criteria {
                let status = match c.status {
                    Status::Pass => "PASS",
                    Status::Fail => "FAIL",
                    Status::Insufficient => "INSUFFICIENT",
                };
                let measured = c.measured.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
                let note = c.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default();
                emit(format_args!("{status:<12} {:<28} {measured} {}{note}\n", c.name, c.unit));
            }
            emit(format_args!("{figure}: {:?} -> {}\n", bundle.summary.status, dir.display()));
            Ok(bundle.passed())
        }
        Command::Fit { model, data } => {
            let r = fit_file(model, &data)?;
            emit(format_args!("{}\n", serde_json::to_string_pretty(&r)?));
            Ok(r.converged)
        }
        Command::Sweep {
            scenario,
            param,
            from,
            to,
            steps,
            out,
        } => {
            let s = load_scenario(&scenario)?;
            let rows = run_sweep(&s, &param, &sweep_values(from, to, steps)?)?;
            let csv = lnoi_cli::sweep::sweep_csv(&rows)?;
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => emit(format_args!("{csv}")),
            }
            Ok(true)
        }
        Command::Serve {
            port,
            bind,
            realtime,
            queue,
        } => {
            let config = ServerConfig {
                pacing: if realtime { Pacing::Realtime } else { Pacing::Simulated },
                queue_capacity: queue,
            };
            let server =
                Server::bind((bind.as_str(), port), config).with_context(|| format!("binding {bind}:{port}"))?;
            eprintln!("listening on {}", server.local_addr()?);
            server.serve()?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
