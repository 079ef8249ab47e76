//! `semlink` command-line front end.
//!
//! Exit codes: 0 on success, 2 when a resource plan is infeasible, 1 on any
//! other error (including a failed audit).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semlink::harness::{
    cmd_audit, cmd_crlb, cmd_train, crlb_csv, run_link, sweep, write_sweep, ExperimentConfig, LinkContext, Scheme,
};
use semlink::{Error, Result};

#[derive(Parser)]
#[command(name = "semlink", version, about = "Hybrid analog semantic / digital DSC link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON). Missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; also seeds codec training.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for every file the command writes.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Directory holding `codec.ckpt` and `ideal.ckpt` from `semlink train`.
    #[arg(long)]
    checkpoints: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.training.seed = seed;
        }
        if let Some(dir) = &self.checkpoints {
            cfg.codec.checkpoint = Some(dir.join("codec.ckpt"));
            cfg.codec.ideal_checkpoint = Some(dir.join("ideal.ckpt"));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the constrained and the full-precision codec.
    Train(Common),
    /// Simulate one frame and write its report and reconstructions.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "da_esemcom")]
        scheme: Scheme,
        #[arg(long, default_value_t = 10.0)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Sweep the SNR grid and write `sweep.csv` plus one SVG per metric.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Restrict the sweep to these schemes (repeatable).
        #[arg(long)]
        scheme: Vec<Scheme>,
    },
    /// Re-derive an allocation plan document and report every check.
    Audit {
        /// Plan JSON as written by `semlink run`.
        plan: PathBuf,
    },
    /// Write the distortion bound per SNR to `crlb.csv`.
    Crlb(Common),
    /// Print the effective configuration as JSON.
    Config(Common),
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.load()?;
            let out = cmd_train(&cfg, &common.out_dir)?;
            if let (Some(first), Some(last)) = (out.history.first(), out.history.last()) {
                eprintln!("loss {:.4} -> {:.4} over {} epochs", first.total, last.total, out.history.len());
            }
            println!("{}", out.codec.display());
            println!("{}", out.ideal.display());
        }
        Command::Run {
            common,
            scheme,
            snr,
            trial,
        } => {
            let mut cfg = common.load()?;
            cfg.schemes = vec![scheme];
            let ctx = LinkContext::build(cfg)?;
            let report = run_link(&ctx, scheme, snr, trial)?;
            let dir = &common.out_dir;
            ensure_dir(dir)?;
            write(&dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            if let Some(plan) = &report.plan {
                write(&dir.join("plan.json"), plan.to_json()?)?;
            }
            report.semantic_image.save_pgm(dir.join("semantic.pgm"))?;
            report.corrected_image.save_pgm(dir.join("corrected.pgm"))?;
            println!(
                "{scheme} at {snr} dB, trial {trial}: PSNR {:.3} -> {:.3} dB, MS-SSIM {:.4} -> {:.4}",
                report.semantic.psnr_db, report.corrected.psnr_db, report.semantic.ms_ssim, report.corrected.ms_ssim
            );
        }
        Command::Sweep { common, scheme } => {
            let mut cfg = common.load()?;
            if !scheme.is_empty() {
                cfg.schemes = scheme;
            }
            let ctx = LinkContext::build(cfg)?;
            let result = sweep(&ctx)?;
            let csv = write_sweep(&result, &common.out_dir)?;
            println!("{}", csv.display());
        }
        Command::Audit { plan } => {
            let text = fs::read_to_string(&plan).map_err(|e| Error::io(&plan, e))?;
            let report = cmd_audit(&text)?;
            println!("{report}");
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Crlb(common) => {
            let mut cfg = common.load()?;
            // the bound needs no side-information calibration
            cfg.schemes.retain(|s| *s != Scheme::DaEsemcom);
            let ctx = LinkContext::build(cfg)?;
            ensure_dir(&common.out_dir)?;
            let path = common.out_dir.join("crlb.csv");
            write(&path, crlb_csv(&cmd_crlb(&ctx)?))?;
            println!("{}", path.display());
        }
        Command::Config(common) => println!("{}", common.load()?.to_json()?),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the generic failure code; 2 means infeasible
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Infeasible { .. }) { 2 } else { 1 })
        }
    }
}
