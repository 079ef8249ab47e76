//! Learned patch-space tokens that stand in for patches the transmitter drops.
//!
//! How well token `t` can replace patch `s` is measured by the fitting
//! coefficient `rho^2 = (sigma_t / sigma_s)^2` clamped to `[0, 1]`, where the
//! sigmas are within-patch standard deviations. A patch goes to the token
//! with the largest `rho^2`; ties go to the token with the smallest mean
//! squared residual. Values within [`RHO_TIE_TOLERANCE`] of the largest count
//! as ties, which also covers the common case of several tokens saturating
//! the clamp at 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::{patch_stats, PatchSource};

/// `rho^2` values this close to the best one are treated as tied. Without
/// the slack, gradient updates that average a token over its patches lower
/// its variance and hand those patches to whichever token is most varied,
/// however far away it is.
pub const RHO_TIE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCodebook {
    pub tokens: Vec<Vec<f64>>,
    /// Within-token population variance, kept in sync with `tokens`.
    pub token_vars: Vec<f64>,
    /// Token index per patch of the last assigned source.
    pub assignment: Vec<usize>,
    /// `rho^2` per patch of the last assigned source.
    pub fit_coeffs: Vec<f64>,
}

impl TokenCodebook {
    pub fn new(tokens: Vec<Vec<f64>>) -> Result<Self> {
        let len = tokens
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::arg("codebook needs at least one token"))?;
        if len == 0 || tokens.iter().any(|t| t.len() != len) {
            return Err(Error::dim("tokens must share a non-zero length"));
        }
        if tokens.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("token values"));
        }
        let mut book = Self {
            tokens,
            token_vars: Vec::new(),
            assignment: Vec::new(),
            fit_coeffs: Vec::new(),
        };
        book.refresh_vars();
        Ok(book)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_len(&self) -> usize {
        self.tokens[0].len()
    }

    /// Recomputes `token_vars` after the token values changed.
    pub fn refresh_vars(&mut self) {
        self.token_vars = self
            .tokens
            .iter()
            .map(|t| patch_stats(t).map(|s| s.variance).unwrap_or(0.0))
            .collect();
    }

    /// Copy of the codebook with `assignment` and `fit_coeffs` filled for
    /// every patch of `source`.
    pub fn assign(&self, source: &PatchSource) -> Result<TokenCodebook> {
        let mut assignment = Vec::with_capacity(source.len());
        let mut fit_coeffs = Vec::with_capacity(source.len());
        for p in source.patches() {
            let (k, rho) = assign_token(p, self)?;
            assignment.push(k);
            fit_coeffs.push(rho);
        }
        Ok(TokenCodebook {
            assignment,
            fit_coeffs,
            ..self.clone()
        })
    }
}

/// `(sigma_t / sigma_s)^2` clamped to `[0, 1]`; a constant patch is fitted
/// perfectly by any token.
pub fn fit_coefficient(token_var: f64, source_var: f64) -> f64 {
    if source_var <= 0.0 {
        return 1.0;
    }
    (token_var / source_var).clamp(0.0, 1.0)
}

fn mean_sq_residual(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Best token for `patch` and its `rho^2`.
pub fn assign_token(patch: &[f64], codebook: &TokenCodebook) -> Result<(usize, f64)> {
    if codebook.is_empty() {
        return Err(Error::arg("empty codebook"));
    }
    if patch.len() != codebook.token_len() {
        return Err(Error::dim(format!(
            "patch length {} vs token length {}",
            patch.len(),
            codebook.token_len()
        )));
    }
    let source_var = patch_stats(patch)?.variance;
    let rhos: Vec<f64> = codebook
        .token_vars
        .iter()
        .map(|&tv| fit_coefficient(tv, source_var))
        .collect();
    let top = rhos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best = (0, f64::NEG_INFINITY, f64::INFINITY);
    for (k, t) in codebook.tokens.iter().enumerate() {
        if rhos[k] < top - RHO_TIE_TOLERANCE {
            continue;
        }
        let resid = mean_sq_residual(patch, t);
        if resid < best.2 || (resid == best.2 && rhos[k] > best.1) {
            best = (k, rhos[k], resid);
        }
    }
    Ok((best.0, best.1))
}

/// Pearson correlation of two equal-length samples.
pub fn sample_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::dim(format!("samples of length {} and {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::arg("correlation of a constant sample"));
    }
    Ok(sab / (saa * sbb).sqrt())
}
