//! SNR sweeps: every scheme at every grid point, aggregated to one CSV row.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::link::{run_link, LinkContext, LinkReport};
use super::Scheme;
use crate::error::Result;
use crate::metrics::QualityReport;

/// Sample mean and standard deviation (`n - 1` denominator, 0 for one sample).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

/// Per-metric statistics of a set of quality reports.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct QualityStats {
    pub mse: Stat,
    pub psnr_db: Stat,
    pub ssim: Stat,
    pub ms_ssim: Stat,
}

impl QualityStats {
    fn of<'a>(reports: impl Iterator<Item = &'a QualityReport> + Clone) -> Self {
        let col = |f: fn(&QualityReport) -> f64| Stat::of(&reports.clone().map(f).collect::<Vec<_>>());
        Self {
            mse: col(|q| q.mse),
            psnr_db: col(|q| q.psnr_db),
            ssim: col(|q| q.ssim),
            ms_ssim: col(|q| q.ms_ssim),
        }
    }

    fn csv(&self) -> String {
        [self.mse, self.psnr_db, self.ssim, self.ms_ssim]
            .iter()
            .map(|s| format!("{},{}", s.mean, s.std))
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub trials: usize,
    /// Analog-path reconstruction.
    pub semantic: QualityStats,
    /// Final output.
    pub corrected: QualityStats,
    /// Empirical analog-path distortion, when the scheme has one.
    pub distortion: Option<Stat>,
    /// Mean distortion bound, when the scheme has one.
    pub bound: Option<f64>,
    pub dsc_converged_fraction: Option<f64>,
    pub digital_dropped_fraction: f64,
    pub audit_failures: usize,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "scheme,snr_db,trials,\
mse_semantic_mean,mse_semantic_std,psnr_semantic_mean,psnr_semantic_std,\
ssim_semantic_mean,ssim_semantic_std,ms_ssim_semantic_mean,ms_ssim_semantic_std,\
mse_mean,mse_std,psnr_mean,psnr_std,ssim_mean,ssim_std,ms_ssim_mean,ms_ssim_std,\
distortion_mean,distortion_std,crlb_bound,dsc_converged_fraction,digital_dropped_fraction,audit_failures";

    pub fn from_reports(scheme: Scheme, snr_db: f64, reports: &[LinkReport]) -> Self {
        let distortions: Vec<_> = reports.iter().filter_map(|r| r.distortion).collect();
        let (distortion, bound) = if distortions.is_empty() {
            (None, None)
        } else {
            let emp: Vec<f64> = distortions.iter().map(|d| d.empirical_total).collect();
            let b: Vec<f64> = distortions.iter().map(|d| d.bound_total).collect();
            (Some(Stat::of(&emp)), Some(Stat::of(&b).mean))
        };
        let blocks: usize = reports.iter().map(|r| r.dsc.blocks).sum();
        let converged: usize = reports.iter().map(|r| r.dsc.converged).sum();
        Self {
            scheme,
            snr_db,
            trials: reports.len(),
            semantic: QualityStats::of(reports.iter().map(|r| &r.semantic)),
            corrected: QualityStats::of(reports.iter().map(|r| &r.corrected)),
            distortion,
            bound,
            dsc_converged_fraction: (blocks > 0).then(|| converged as f64 / blocks as f64),
            digital_dropped_fraction: reports.iter().filter(|r| r.digital_dropped).count() as f64
                / reports.len().max(1) as f64,
            audit_failures: reports.iter().filter(|r| !r.audit_passed).count(),
        }
    }

    pub fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.scheme,
            self.snr_db,
            self.trials,
            self.semantic.csv(),
            self.corrected.csv(),
            opt(self.distortion.map(|d| d.mean)),
            opt(self.distortion.map(|d| d.std)),
            opt(self.bound),
            opt(self.dsc_converged_fraction),
            self.digital_dropped_fraction,
            self.audit_failures
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}", SweepRow::CSV_HEADER).expect("string write");
        for r in &self.rows {
            writeln!(out, "{}", r.csv()).expect("string write");
        }
        out
    }

    pub fn row(&self, scheme: Scheme, snr_db: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.snr_db == snr_db)
    }
}

/// Runs `trials` frames of every configured scheme at every grid SNR. Trials
/// run in parallel; rows come out in (scheme, SNR) config order.
pub fn sweep(ctx: &LinkContext) -> Result<SweepResult> {
    let cfg = &ctx.config;
    let mut rows = Vec::with_capacity(cfg.schemes.len() * cfg.snr_db.len());
    for &scheme in &cfg.schemes {
        for &snr in &cfg.snr_db {
            let reports = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| run_link(ctx, scheme, snr, t))
                .collect::<Result<Vec<_>>>()?;
            rows.push(SweepRow::from_reports(scheme, snr, &reports));
        }
    }
    Ok(SweepResult { rows })
}
