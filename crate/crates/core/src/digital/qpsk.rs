//! Gray-mapped QPSK with unit symbol energy and exact per-bit LLRs.
//!
//! Bit pair `(b0, b1)` maps to `((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`, so
//! `00` sits at `(1 + j) / sqrt(2)`. The two bits ride on independent
//! quadratures, which makes the per-bit LLR exact and linear:
//! `LLR(b0) = 2 sqrt(2) Re(y conj(h)) / noise_variance`, likewise `Im` for `b1`.

use num_complex::Complex64;

use crate::channel::DEFAULT_H_FLOOR;
use crate::error::{Error, Result};

pub fn qpsk_modulate(bits: &[u8]) -> Result<Vec<Complex64>> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::arg(format!("QPSK needs an even bit count, got {}", bits.len())));
    }
    let a = std::f64::consts::FRAC_1_SQRT_2;
    Ok(bits
        .chunks(2)
        .map(|p| {
            Complex64::new(
                a * (1.0 - 2.0 * (p[0] & 1) as f64),
                a * (1.0 - 2.0 * (p[1] & 1) as f64),
            )
        })
        .collect())
}

/// Per-bit LLRs (positive favours 0) for symbols received through gain `h`
/// with complex noise variance `noise_variance`. A deep fade yields zeros.
pub fn qpsk_demodulate_llr(symbols: &[Complex64], h: Complex64, noise_variance: f64) -> Result<Vec<f64>> {
    if !(noise_variance > 0.0) {
        return Err(Error::arg("noise variance must be positive"));
    }
    if h.norm() <= DEFAULT_H_FLOOR {
        return Ok(vec![0.0; 2 * symbols.len()]);
    }
    let scale = 2.0 * std::f64::consts::SQRT_2 / noise_variance;
    let mut llr = Vec::with_capacity(2 * symbols.len());
    for y in symbols {
        let z = y * h.conj();
        llr.push(scale * z.re);
        llr.push(scale * z.im);
    }
    Ok(llr)
}

pub fn hard_decisions(llr: &[f64]) -> Vec<u8> {
    llr.iter().map(|&v| u8::from(v < 0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::gaussian_q;
    use crate::channel::complex_gaussian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mapping_table() {
        let s = qpsk_modulate(&[0, 0, 1, 0, 0, 1, 1, 1]).unwrap();
        let a = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(s[0], Complex64::new(a, a));
        assert_eq!(s[1], Complex64::new(-a, a));
        assert_eq!(s[2], Complex64::new(a, -a));
        assert_eq!(s[3], Complex64::new(-a, -a));
        assert!(s.iter().all(|v| (v.norm_sqr() - 1.0).abs() < 1e-15));
        assert!(qpsk_modulate(&[0, 1, 1]).is_err());
    }

    #[test]
    fn noiseless_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits: Vec<u8> = (0..200).map(|_| rng.random_range(0..2u8)).collect();
        let h = Complex64::new(0.3, -1.1);
        let y: Vec<Complex64> = qpsk_modulate(&bits).unwrap().iter().map(|s| s * h).collect();
        assert_eq!(hard_decisions(&qpsk_demodulate_llr(&y, h, 0.1).unwrap()), bits);
    }

    #[test]
    fn awgn_ber_matches_closed_form() {
        let ebn0 = 10f64.powf(0.2);
        let sigma2 = 1.0 / (2.0 * ebn0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let bits: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let one = Complex64::new(1.0, 0.0);
        let y: Vec<Complex64> = qpsk_modulate(&bits)
            .unwrap()
            .into_iter()
            .map(|s| s + complex_gaussian(&mut rng, sigma2))
            .collect();
        let dec = hard_decisions(&qpsk_demodulate_llr(&y, one, sigma2).unwrap());
        let ber = dec.iter().zip(&bits).filter(|(a, b)| a != b).count() as f64 / n as f64;
        let theory = gaussian_q((2.0 * ebn0).sqrt());
        assert!((ber - theory).abs() / theory < 0.05, "ber={ber} theory={theory}");
    }

    #[test]
    fn deep_fade_erases() {
        let llr = qpsk_demodulate_llr(&[Complex64::new(1.0, 1.0)], Complex64::new(1e-9, 0.0), 0.1).unwrap();
        assert_eq!(llr, vec![0.0, 0.0]);
    }
}
