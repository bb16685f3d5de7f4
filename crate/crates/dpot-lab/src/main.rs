use clap::{Parser, Subcommand};
use dpot_lab::{emit_report, run_experiment, validate_config, ExperimentConfig, OutputFormat, Report};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dpot", version, about = "Run discrete Schrödinger operator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Override the vertex limit from the config.
    #[arg(long)]
    max_vertices: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a config without running it.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Run a config and write its report.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "DPOT_OUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<OutputFormat>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-emit an existing report.json in another format.
    Report {
        /// Path to a report.json written by `run`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "DPOT_OUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: OutputFormat,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, ExitCode> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", common.config.display());
        ExitCode::from(3)
    })?;
    let mut cfg = validate_config(&text).map_err(|e| {
        eprintln!("config error: {e}");
        ExitCode::from(3)
    })?;
    if let Some(n) = common.max_vertices {
        cfg.max_vertices = n;
    }
    Ok(cfg)
}

fn emit(report: &Report, format: OutputFormat, out: &Path) -> ExitCode {
    match emit_report(report, format, out) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { common } => match load(&common) {
            Ok(cfg) => {
                for (k, v) in &cfg.echo {
                    println!("{k} = {v}");
                }
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { common, out, format, threads } => {
            let cfg = match load(&common) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            }
            let report = match run_experiment(&cfg) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            let dir = out.or_else(|| cfg.output_path.clone()).unwrap_or_else(|| PathBuf::from("."));
            let written = emit(&report, format.unwrap_or(cfg.output_format), &dir);
            if written != ExitCode::SUCCESS {
                return written;
            }
            for a in report.assertions.iter().filter(|a| !a.passed) {
                eprintln!("assertion failed: {} {} {} (actual {:?})", a.metric, a.comparison, a.expected, a.actual);
            }
            for e in &report.errors {
                eprintln!("stage {} failed: {}", e.stage, e.message);
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Command::Report { config, out, format } => {
            let report: Report = match std::fs::read_to_string(&config).map_err(|e| e.to_string()).and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string())) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: cannot load report {}: {e}", config.display());
                    return ExitCode::from(3);
                }
            };
            emit(&report, format, &out.unwrap_or_else(|| PathBuf::from(".")))
        }
    }
}
