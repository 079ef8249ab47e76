//! Overall distortion of the analog semantic path and its Cramér-Rao lower
//! bound.
//!
//! Distortion splits into a transmission part (transmitted patches, feature
//! error after the channel) and a synonymous part (dropped patches, error of
//! the token stand-in). Both are per-entry means summed over patches, so the
//! totals scale with the patch count but not with the patch length.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bound on the transmission distortion of one patch:
/// `[s(1 + n) + n] / [(1 + n) G]` with semantic noise variance `s`, channel
/// noise variance `n` and input-gradient energy `G`.
pub fn crlb_transmission_term(grad_energy: f64, sigma_sem: f64, sigma_ch: f64) -> Result<f64> {
    if !(grad_energy > 0.0) {
        return Err(Error::arg(format!(
            "gradient energy must be positive, got {grad_energy} (degenerate encoder)"
        )));
    }
    if !(sigma_sem >= 0.0 && sigma_ch >= 0.0) {
        return Err(Error::arg("noise variances must be non-negative"));
    }
    Ok((sigma_sem * (1.0 + sigma_ch) + sigma_ch) / ((1.0 + sigma_ch) * grad_energy))
}

/// Bound on the synonymous distortion of one dropped patch: `s / (L rho^2)`.
///
/// Returns `+inf` when `rho_sq` is zero: such a patch cannot be stood in for.
pub fn crlb_synonymous_term(sigma_sem: f64, patch_len: usize, rho_sq: f64) -> f64 {
    if rho_sq <= 0.0 {
        return f64::INFINITY;
    }
    sigma_sem / (patch_len as f64 * rho_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistortionReport {
    pub empirical_transmission: f64,
    pub empirical_synonymous: f64,
    pub bound_transmission: f64,
    pub bound_synonymous: f64,
    pub bound_total: f64,
    pub empirical_total: f64,
}

impl DistortionReport {
    /// Takes the bound fields from `self` and the empirical fields from `other`.
    pub fn with_empirical(self, other: &DistortionReport) -> DistortionReport {
        DistortionReport {
            empirical_transmission: other.empirical_transmission,
            empirical_synonymous: other.empirical_synonymous,
            empirical_total: other.empirical_total,
            ..self
        }
    }

    pub const CSV_HEADER: &'static str = "run_id,snr_db,transmit_count,empirical_transmission,empirical_synonymous,bound_transmission,bound_synonymous,bound_total,empirical_total";

    pub fn write_csv_row<W: Write>(
        &self,
        out: &mut W,
        run_id: &str,
        snr_db: f64,
        transmit_count: usize,
    ) -> std::io::Result<()> {
        writeln!(
            out,
            "{run_id},{snr_db},{transmit_count},{},{},{},{},{},{}",
            self.empirical_transmission,
            self.empirical_synonymous,
            self.bound_transmission,
            self.bound_synonymous,
            self.bound_total,
            self.empirical_total
        )
    }
}

fn check_partition(patch_count: usize, a: &[usize], b: &[usize]) -> Result<()> {
    let mut seen = vec![false; patch_count];
    for &i in a.iter().chain(b) {
        match seen.get_mut(i) {
            Some(s) if !*s => *s = true,
            Some(_) => return Err(Error::arg(format!("patch {i} appears in both index sets"))),
            None => return Err(Error::dim(format!("patch index {i} out of range {patch_count}"))),
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::dim("index sets do not cover every patch"));
    }
    Ok(())
}

/// Sums the bound over transmitted patches `(index, gradient energy)` and
/// dropped patches `(index, rho^2)`. The index sets must partition
/// `0..patch_count`.
pub fn crlb_overall(
    transmitted: &[(usize, f64)],
    dropped: &[(usize, f64)],
    sigma_sem: f64,
    sigma_ch: f64,
    patch_len: usize,
    patch_count: usize,
) -> Result<DistortionReport> {
    let t_idx: Vec<usize> = transmitted.iter().map(|p| p.0).collect();
    let d_idx: Vec<usize> = dropped.iter().map(|p| p.0).collect();
    check_partition(patch_count, &t_idx, &d_idx)?;
    let mut bound_transmission = 0.0;
    for &(_, g) in transmitted {
        bound_transmission += crlb_transmission_term(g, sigma_sem, sigma_ch)?;
    }
    let bound_synonymous: f64 = dropped
        .iter()
        .map(|&(_, rho)| crlb_synonymous_term(sigma_sem, patch_len, rho))
        .sum();
    Ok(DistortionReport {
        bound_transmission,
        bound_synonymous,
        bound_total: bound_transmission + bound_synonymous,
        ..Default::default()
    })
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::dim(format!("vector lengths {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// Empirical distortion. `encoded[i]` and `received[i]` are the clean and the
/// received features of the i-th transmitted patch; `dropped[j]` and
/// `tokens[j]` a dropped patch and its token.
pub fn empirical_distortion<A, B, C, D>(
    encoded: &[A],
    received: &[B],
    dropped: &[C],
    tokens: &[D],
) -> Result<DistortionReport>
where
    A: AsRef<[f64]>,
    B: AsRef<[f64]>,
    C: AsRef<[f64]>,
    D: AsRef<[f64]>,
{
    if encoded.len() != received.len() || dropped.len() != tokens.len() {
        return Err(Error::dim(format!(
            "{} encoded vs {} received, {} dropped vs {} tokens",
            encoded.len(),
            received.len(),
            dropped.len(),
            tokens.len()
        )));
    }
    let mut empirical_transmission = 0.0;
    for (e, r) in encoded.iter().zip(received) {
        empirical_transmission += mean_sq_diff(e.as_ref(), r.as_ref())?;
    }
    let mut empirical_synonymous = 0.0;
    for (s, t) in dropped.iter().zip(tokens) {
        empirical_synonymous += mean_sq_diff(s.as_ref(), t.as_ref())?;
    }
    Ok(DistortionReport {
        empirical_transmission,
        empirical_synonymous,
        empirical_total: empirical_transmission + empirical_synonymous,
        ..Default::default()
    })
}

/// Bound plus the mean squared patch reconstruction error
/// `(1/I) sum_i |s_i - s_hat_i|^2`.
pub fn training_loss<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    bound: f64,
    sources: &[A],
    reconstructions: &[B],
) -> Result<f64> {
    if sources.len() != reconstructions.len() || sources.is_empty() {
        return Err(Error::dim(format!(
            "{} sources vs {} reconstructions",
            sources.len(),
            reconstructions.len()
        )));
    }
    let mut rec = 0.0;
    for (s, r) in sources.iter().zip(reconstructions) {
        let (s, r) = (s.as_ref(), r.as_ref());
        if s.len() != r.len() {
            return Err(Error::dim("patch length mismatch"));
        }
        rec += s.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(bound + rec / sources.len() as f64)
}
