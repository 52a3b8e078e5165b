use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use facecodec::session::SessionError;
use facecodec::sim::{self, SimConfig, SimError};

/// Pose-indexed face codec: simulate, encode, decode and inspect sessions.
#[derive(Parser)]
#[command(name = "facecodec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic session, encode and decode it, write a report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a directory of .png / .raw frames into a .fvc bitstream.
    Encode {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a .fvc bitstream into PNG frames.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Session settings; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Per-class byte totals and bpp, read from message headers only.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Rerun a session under each byte budget and tabulate rate and quality.
    BudgetSweep {
        #[arg(long)]
        config: PathBuf,
        /// Descending list such as `unlimited,1000,500,150`.
        #[arg(long)]
        budgets: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<SimConfig, SimError> {
    let text = fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.to_owned(),
        source,
    })?;
    SimConfig::parse(&text)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    fs::write(path, bytes).map_err(|source| SimError::Io {
        path: path.to_owned(),
        source,
    })
}

fn run(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load_config(&config)?;
            let res = sim::simulate(&cfg, Some(&out))?;
            let r = &res.report;
            println!(
                "frames={} sources={} bpp={} mean_psnr={:.4} mean_ssim={:.6}",
                r.rows.len(),
                r.source_count(),
                r.bpp(),
                r.mean_psnr(),
                r.mean_ssim()
            );
        }
        Command::Encode { frames, config, out } => {
            let cfg = load_config(&config)?;
            let (bytes, stats) = sim::encode_dir(&cfg, &frames)?;
            write(&out, &bytes)?;
            println!("frames={} bytes={}", stats.frames(), bytes.len());
        }
        Command::Decode { input, out, config } => {
            let cfg = config.as_deref().map(load_config).transpose()?;
            let n = sim::decode_file(cfg.as_ref(), &input, &out)?;
            println!("frames={n}");
        }
        Command::Stats { input } => {
            let bytes = fs::read(&input).map_err(|source| SimError::Io { path: input, source })?;
            print!("{}", sim::stream_stats(&bytes)?.render());
        }
        Command::BudgetSweep { config, budgets, out } => {
            let cfg = load_config(&config)?;
            let budgets = sim::parse_budgets(&budgets)?;
            let rows = sim::budget_sweep(&cfg, &budgets)?;
            let csv = sim::sweep_csv(&rows);
            write(&out, csv.as_bytes())?;
            print!("{csv}");
        }
    }
    Ok(())
}

fn error_kind(e: &SimError) -> &'static str {
    match e {
        SimError::Config(_) | SimError::Kv(_) | SimError::Session(SessionError::Config(_)) => "config",
        SimError::Session(_) => "session",
        SimError::Render { .. } | SimError::Vision(_) => "vision",
        SimError::Wire(_) => "wire",
        SimError::Image(_) => "image",
        SimError::Io { .. } => "io",
        SimError::Budget(_) => "budget",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message={:?}", error_kind(&e), e.to_string());
            ExitCode::FAILURE
        }
    }
}
