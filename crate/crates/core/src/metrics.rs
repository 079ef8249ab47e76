//! Image fidelity metrics on `[0, 1]` luminance.
//!
//! SSIM uses an 11x11 Gaussian window with sigma 1.5 evaluated only where the
//! window fits inside the image, with the usual stabilizing constants
//! `(0.01 P)^2` and `(0.03 P)^2` for peak `P`. MS-SSIM follows the standard
//! five-scale construction with exponents 0.0448, 0.2856, 0.3001, 0.2363 and
//! 0.1333 (Wang, Simoncelli and Bovik, 2003). Images too small for five
//! scales use as many scales as keep the window inside the coarsest image,
//! with the leading exponents renormalized to sum to one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::ImageGray;

pub const PSNR_CAP_DB: f64 = 100.0;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
}

fn same_dims(a: &ImageGray, b: &ImageGray) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::dim(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

pub fn mse(a: &ImageGray, b: &ImageGray) -> Result<f64> {
    same_dims(a, b)?;
    let n = a.pixels().len() as f64;
    Ok(a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// PSNR from an MSE value; zero error maps to [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
}

pub fn psnr(a: &ImageGray, b: &ImageGray, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::arg("peak must be positive"));
    }
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW - 1) as f64 / 2.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-mode filtering of a row-major `w x h` plane.
fn filter_valid(px: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * px[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM and mean contrast-structure term of one scale.
fn ssim_terms(a: &[f64], b: &[f64], w: usize, h: usize, peak: f64) -> (f64, f64) {
    let k = gaussian_window();
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    };
    let (mu_a, ow, oh) = filter_valid(a, w, h, &k);
    let (mu_b, _, _) = filter_valid(b, w, h, &k);
    let (e_aa, _, _) = filter_valid(&prod(&|x, _| x * x), w, h, &k);
    let (e_bb, _, _) = filter_valid(&prod(&|_, y| y * y), w, h, &k);
    let (e_ab, _, _) = filter_valid(&prod(&|x, y| x * y), w, h, &k);
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..ow * oh {
        let var_a = e_aa[i] - mu_a[i] * mu_a[i];
        let var_b = e_bb[i] - mu_b[i] * mu_b[i];
        let cov = e_ab[i] - mu_a[i] * mu_b[i];
        let c = (2.0 * cov + c2) / (var_a + var_b + c2);
        let l = (2.0 * mu_a[i] * mu_b[i] + c1) / (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1);
        ssim += l * c;
        cs += c;
    }
    let n = (ow * oh) as f64;
    (ssim / n, cs / n)
}

/// Mean single-scale SSIM with peak 1.
pub fn ssim(a: &ImageGray, b: &ImageGray) -> Result<f64> {
    same_dims(a, b)?;
    if a.width() < WINDOW || a.height() < WINDOW {
        return Err(Error::dim(format!("SSIM needs at least {WINDOW}x{WINDOW} pixels")));
    }
    Ok(ssim_terms(a.pixels(), b.pixels(), a.width(), a.height(), 1.0).0)
}

fn downsample(px: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out.push(0.25 * (px[i] + px[i + 1] + px[i + w] + px[i + w + 1]));
        }
    }
    (out, ow, oh)
}

/// Number of scales used for an image whose smaller side is `min_dim`.
pub fn ms_ssim_scales(min_dim: usize) -> usize {
    let mut s = 0;
    let mut d = min_dim;
    while s < MS_SSIM_WEIGHTS.len() && d >= WINDOW {
        s += 1;
        d /= 2;
    }
    s
}

/// Multi-scale SSIM with peak 1. Negative per-scale terms are clipped to
/// zero, so the score lies in `[0, 1]`.
pub fn ms_ssim(a: &ImageGray, b: &ImageGray) -> Result<f64> {
    same_dims(a, b)?;
    let scales = ms_ssim_scales(a.width().min(a.height()));
    if scales == 0 {
        return Err(Error::dim(format!("MS-SSIM needs at least {WINDOW}x{WINDOW} pixels")));
    }
    let wsum: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let (mut pa, mut pb) = (a.pixels().to_vec(), b.pixels().to_vec());
    let (mut w, mut h) = (a.width(), a.height());
    let mut score = 1.0;
    for s in 0..scales {
        let (ss, cs) = ssim_terms(&pa, &pb, w, h, 1.0);
        let term = if s + 1 == scales { ss } else { cs };
        score *= term.max(0.0).powf(MS_SSIM_WEIGHTS[s] / wsum);
        if s + 1 < scales {
            let (na, nw, nh) = downsample(&pa, w, h);
            pb = downsample(&pb, w, h).0;
            pa = na;
            w = nw;
            h = nh;
        }
    }
    Ok(score)
}

pub fn quality(reference: &ImageGray, test: &ImageGray) -> Result<QualityReport> {
    let m = mse(reference, test)?;
    Ok(QualityReport {
        mse: m,
        psnr_db: psnr_from_mse(m, 1.0),
        ssim: ssim(reference, test)?,
        ms_ssim: ms_ssim(reference, test)?,
    })
}
