//! File-producing entry points behind the command-line subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::link::{training_sources, LinkContext};
use super::plot::{render, METRICS};
use super::sweep::SweepResult;
use super::{ExperimentConfig, Scheme};
use crate::alloc::audit::{audit, AuditReport};
use crate::alloc::AllocationPlan;
use crate::codec::checkpoint;
use crate::codec::train::{train_pair, write_loss_csv};
use crate::codec::LossRecord;
use crate::error::{Error, Result};

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Files written by [`cmd_train`].
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub codec: PathBuf,
    pub ideal: PathBuf,
    pub loss_csv: PathBuf,
    pub ideal_loss_csv: PathBuf,
    pub history: Vec<LossRecord>,
}

/// Trains the full-precision and the constrained codec on the training
/// corpus and writes `codec.ckpt`, `ideal.ckpt`, `loss.csv` (constrained
/// codec, one row per epoch) and `ideal_loss.csv` into `out_dir`.
pub fn cmd_train(config: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutputs> {
    config.validate()?;
    ensure_dir(out_dir)?;
    let train = training_sources(config)?;
    let pair = train_pair(&train, config.codec.shape, &config.training)?;
    let out = TrainOutputs {
        codec: out_dir.join("codec.ckpt"),
        ideal: out_dir.join("ideal.ckpt"),
        loss_csv: out_dir.join("loss.csv"),
        ideal_loss_csv: out_dir.join("ideal_loss.csv"),
        history: pair.history.clone(),
    };
    checkpoint::save(&pair.constrained, &out.codec)?;
    checkpoint::save(&pair.ideal, &out.ideal)?;
    let mut csv = Vec::new();
    write_loss_csv(&pair.history, &mut csv).map_err(|e| Error::io(&out.loss_csv, e))?;
    write(&out.loss_csv, csv)?;
    let mut csv = Vec::new();
    write_loss_csv(&pair.ideal_history, &mut csv).map_err(|e| Error::io(&out.ideal_loss_csv, e))?;
    write(&out.ideal_loss_csv, csv)?;
    Ok(out)
}

/// Parses a plan document and re-derives every field from its inputs.
pub fn cmd_audit(plan_json: &str) -> Result<AuditReport> {
    let plan = AllocationPlan::from_json(plan_json)?;
    Ok(audit(&plan))
}

/// Writes `sweep.csv` and one SVG chart per metric into `out_dir`.
pub fn write_sweep(result: &SweepResult, out_dir: &Path) -> Result<PathBuf> {
    ensure_dir(out_dir)?;
    let csv = out_dir.join("sweep.csv");
    write(&csv, result.to_csv())?;
    for (name, metric) in METRICS {
        write(&out_dir.join(format!("sweep_{name}.svg")), render(result, name, metric))?;
    }
    Ok(csv)
}

/// Analog-path distortion bound at one SNR, averaged over the evaluation
/// images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrlbRow {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub bound_transmission: f64,
    pub bound_synonymous: f64,
    pub bound_total: f64,
}

impl CrlbRow {
    pub const CSV_HEADER: &'static str = "scheme,snr_db,bound_transmission,bound_synonymous,bound_total";
}

/// Bound per SNR of the grid for the hybrid and the analog-only plan.
pub fn cmd_crlb(ctx: &LinkContext) -> Result<Vec<CrlbRow>> {
    let mut rows = Vec::new();
    for scheme in [Scheme::DaEsemcom, Scheme::AnalogOnly] {
        for &snr in &ctx.config.snr_db {
            let n = ctx.images.len() as f64;
            let (mut t, mut s) = (0.0, 0.0);
            for i in 0..ctx.images.len() {
                let b = ctx.bound(i, snr, scheme == Scheme::DaEsemcom)?;
                t += b.bound_transmission;
                s += b.bound_synonymous;
            }
            rows.push(CrlbRow {
                scheme,
                snr_db: snr,
                bound_transmission: t / n,
                bound_synonymous: s / n,
                bound_total: (t + s) / n,
            });
        }
    }
    Ok(rows)
}

pub fn crlb_csv(rows: &[CrlbRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{}", CrlbRow::CSV_HEADER).expect("string write");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.scheme, r.snr_db, r.bound_transmission, r.bound_synonymous, r.bound_total
        )
        .expect("string write");
    }
    out
}
