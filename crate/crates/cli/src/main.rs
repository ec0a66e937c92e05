use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gaze_russ::runtime::{self, GazeSource, RunRecord, Scenario, Server};
use gaze_russ::Error;

/// Gaze-guided robotic ultrasound scanning simulator.
#[derive(Parser, Debug)]
#[command(name = "gaze-russ", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run a scenario headless and print its metrics.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ticks: Option<u64>,
        /// Write the run record (JSON lines) here.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long, value_enum)]
        correction: Option<Switch>,
        /// Scripted gaze CSV (`t,x,y,valid`), overriding the scenario's source.
        #[arg(long)]
        gaze: Option<PathBuf>,
    },
    /// Re-run a record and verify it reproduces bit-exactly.
    Replay { record: PathBuf },
    /// Summarize a record.
    Metrics { record: PathBuf },
    /// Export followed-vessel centroids in world coordinates.
    Reconstruct {
        record: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a live session over TCP.
    Serve {
        scenario: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Switch {
    On,
    Off,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
    MeshPoints,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GAZE_RUSS_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_record(path: &Path) -> Result<RunRecord, Error> {
    RunRecord::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Validation(vec![gaze_russ::ValidationIssue {
            path: path.display().to_string(),
            message: io.to_string(),
        }]),
        other => other,
    })
}

fn load_scenario(path: &Path) -> Result<Scenario, Error> {
    Scenario::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Validation(vec![gaze_russ::ValidationIssue {
            path: path.display().to_string(),
            message: io.to_string(),
        }]),
        other => other,
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn execute(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Run {
            scenario,
            seed,
            ticks,
            record,
            correction,
            gaze,
        } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(s) = seed {
                sc.seed = s;
            }
            if let Some(t) = ticks {
                sc.ticks = t;
            }
            if let Some(c) = correction {
                sc.control.correction = matches!(c, Switch::On);
            }
            if let Some(g) = gaze {
                sc.gaze.source = GazeSource::Scripted { path: g };
            }
            sc.validate()?;
            log::info!("running {} for {} ticks", sc.name, sc.ticks);
            let rec = runtime::run(&sc)?;
            if let Some(path) = record {
                rec.save(&path)?;
            }
            print_json(&runtime::metrics(&rec))
        }
        Cmd::Replay { record } => {
            let rec = load_record(&record)?;
            let again = runtime::replay(&rec)?;
            println!("replay ok: {} ticks reproduced", again.ticks.len());
            Ok(())
        }
        Cmd::Metrics { record } => print_json(&runtime::metrics(&load_record(&record)?)),
        Cmd::Reconstruct {
            record,
            format,
            out,
        } => {
            let recon = runtime::reconstruct(&load_record(&record)?);
            let w = output(out.as_deref())?;
            match format {
                Format::Csv => recon.write_csv(w),
                Format::MeshPoints => recon.write_ply(w),
            }
        }
        Cmd::Serve { scenario, bind } => {
            let sc = load_scenario(&scenario)?;
            let server = Server::bind(&bind, sc)?;
            eprintln!("listening on {}", server.local_addr()?);
            server.run()
        }
    }
}
