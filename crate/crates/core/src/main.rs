use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::Ordering;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use sentinel::app::{render_bench_table, run_bench, run_evaluate, run_monitor, AppError, ExitStatus, MonitorEnv};
use sentinel::audio::SinkKind;
use sentinel::config::AppConfig;
use sentinel::detector::ExecutionMode;
use sentinel::telegram::TransportKind;

#[derive(Parser)]
#[command(name = "sentinel", version, about = "Dual-detector wildlife intrusion monitor")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Watch the configured source and raise alerts.
    Monitor {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["mock", "live"])]
        transport: Option<String>,
        #[arg(long, value_parser = ["null", "command"])]
        audio: Option<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Score predictions against an annotated dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Replay file used instead of the configured detectors.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        iou: Option<f64>,
        #[arg(long)]
        report_json: Option<PathBuf>,
        #[arg(long)]
        report_table: Option<PathBuf>,
    },
    /// Measure per-model and pipeline inference time over a dataset.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        report_json: Option<PathBuf>,
        #[arg(long)]
        report_table: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Confidence threshold override.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_parser = ["sequential", "parallel"])]
    execution: Option<String>,
    /// Also write logs to this file.
    #[arg(long)]
    log_file: Option<PathBuf>,
}

fn load(common: &Common) -> Result<AppConfig, AppError> {
    let mut cfg = AppConfig::load(&common.config).map_err(|e| AppError::Config(e.to_string()))?;
    if let Some(t) = common.threshold {
        cfg.fusion.conf_threshold = t;
    }
    if let Some(m) = &common.execution {
        cfg.run.execution = if m == "parallel" {
            ExecutionMode::Parallel
        } else {
            ExecutionMode::Sequential
        };
    }
    Ok(cfg)
}

fn init_logging(log_file: Option<&PathBuf>) -> Result<(), AppError> {
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"));
    let builder = tracing_subscriber::fmt().with_env_filter(filter);
    match log_file {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| AppError::Config(format!("{}: {e}", p.display())))?;
            builder.with_ansi(false).with_writer(std::sync::Mutex::new(f)).init();
        }
        None => builder.with_writer(std::io::stderr).init(),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Cmd::Monitor {
            common,
            transport,
            audio,
            output_dir,
        } => {
            init_logging(common.log_file.as_ref())?;
            let mut cfg = load(&common)?;
            if let Some(t) = transport {
                cfg.telegram.transport = if t == "live" { TransportKind::Live } else { TransportKind::Mock };
            }
            if let Some(a) = audio {
                cfg.deterrent.sink = if a == "command" { SinkKind::Command } else { SinkKind::Null };
            }
            if let Some(d) = output_dir {
                cfg.run.output_dir = d;
            }
            cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
            let env = MonitorEnv::default();
            let flag = env.shutdown.clone();
            ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst))
                .map_err(|e| AppError::Startup(format!("cannot install signal handler: {e}")))?;
            let s = run_monitor(&cfg, env)?;
            println!(
                "frames {}  alerts {}  commands {}  notices {}  action log {}",
                s.frames,
                s.alerts,
                s.commands,
                s.notices,
                s.action_log.display()
            );
        }
        Cmd::Evaluate {
            common,
            dataset,
            predictions,
            iou,
            report_json,
            report_table,
        } => {
            init_logging(common.log_file.as_ref())?;
            let mut cfg = load(&common)?;
            if let Some(v) = iou {
                cfg.eval.iou_thresh = v;
            }
            if let Some(p) = report_json {
                cfg.eval.report_json = p;
            }
            if let Some(p) = report_table {
                cfg.eval.report_table = p;
            }
            cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
            let out = run_evaluate(&cfg, &dataset, predictions.as_deref())?;
            print!("{}", out.table);
        }
        Cmd::Bench {
            common,
            dataset,
            report_json,
            report_table,
        } => {
            init_logging(common.log_file.as_ref())?;
            let mut cfg = load(&common)?;
            if let Some(p) = report_json {
                cfg.eval.bench_json = p;
            }
            if let Some(p) = report_table {
                cfg.eval.bench_table = p;
            }
            cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
            let report = run_bench(&cfg, &dataset)?;
            print!("{}", render_bench_table(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(ExitStatus::Success as u8),
        Err(e) => {
            eprintln!("sentinel: {e}");
            ExitCode::from(e.status() as u8)
        }
    }
}
