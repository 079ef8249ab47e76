//! Distributed source coding: the decoder sees only channel LLRs of the
//! parity bits and a noisy estimate of the information bits (side
//! information), and recovers the information bits by belief propagation.

use super::ldpc::LdpcCode;
use crate::error::{Error, Result};

pub const FLIP_PROB_FLOOR: f64 = 1e-4;
pub const FLIP_PROB_CEIL: f64 = 0.4999;

fn clamp_flip(p: f64) -> f64 {
    if p.is_nan() {
        return FLIP_PROB_CEIL;
    }
    p.clamp(FLIP_PROB_FLOOR, FLIP_PROB_CEIL)
}

/// LLR of a side-information bit `b` that is wrong with probability `p`:
/// `(1 - 2b) ln((1 - p) / p)`.
pub fn side_llr(bit: u8, p: f64) -> f64 {
    let p = clamp_flip(p);
    (1.0 - 2.0 * (bit & 1) as f64) * ((1.0 - p) / p).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideInfoLlr {
    pub bit_estimates: Vec<u8>,
    /// Clamped flip probability per bit.
    pub flip_prob: Vec<f64>,
    pub llr: Vec<f64>,
}

impl SideInfoLlr {
    pub fn new(bit_estimates: Vec<u8>, flip_prob: Vec<f64>) -> Result<Self> {
        if bit_estimates.len() != flip_prob.len() {
            return Err(Error::dim("one flip probability per bit is required"));
        }
        let flip_prob: Vec<f64> = flip_prob.into_iter().map(clamp_flip).collect();
        let llr = bit_estimates
            .iter()
            .zip(&flip_prob)
            .map(|(&b, &p)| side_llr(b, p))
            .collect();
        Ok(Self {
            bit_estimates,
            flip_prob,
            llr,
        })
    }

    /// Same flip probability for every bit.
    pub fn uniform(bit_estimates: Vec<u8>, p: f64) -> Self {
        let n = bit_estimates.len();
        Self::new(bit_estimates, vec![p; n]).expect("lengths agree")
    }

    pub fn len(&self) -> usize {
        self.llr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.llr.is_empty()
    }
}

/// Fraction of positions where `estimate` differs from `reference`, clamped
/// to `[1e-4, 0.4999]`.
pub fn estimate_side_flip_prob(reference: &[u8], estimate: &[u8]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::dim(format!(
            "{} reference bits vs {} estimated",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.is_empty() {
        return Ok(FLIP_PROB_CEIL);
    }
    let flips = reference.iter().zip(estimate).filter(|(a, b)| a != b).count();
    Ok(clamp_flip(flips as f64 / reference.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DscOutput {
    pub info: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

/// Decodes information bits from side information plus parity LLRs.
pub fn dsc_decode(
    parity_llr: &[f64],
    side: &SideInfoLlr,
    code: &LdpcCode,
    max_iters: usize,
) -> Result<DscOutput> {
    if side.len() != code.info_bits() || parity_llr.len() != code.parity_bits() {
        return Err(Error::dim(format!(
            "side info {} / parity {} for a ({}, {}) code",
            side.len(),
            parity_llr.len(),
            code.codeword_len(),
            code.info_bits()
        )));
    }
    let mut llr = side.llr.clone();
    llr.extend_from_slice(parity_llr);
    let out = code.decode(&llr, max_iters)?;
    let mut info = out.codeword;
    info.truncate(code.info_bits());
    Ok(DscOutput {
        info,
        converged: out.converged,
        iterations: out.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0..2u8)).collect()
    }

    #[test]
    fn flip_prob_cases() {
        let a = bits(10_000, 1);
        assert_eq!(estimate_side_flip_prob(&a, &a).unwrap(), 1e-4);
        let neg: Vec<u8> = a.iter().map(|b| 1 - b).collect();
        assert_eq!(estimate_side_flip_prob(&a, &neg).unwrap(), 0.4999);
        let mut b = a.clone();
        for bit in b.iter_mut().take(100) {
            *bit ^= 1;
        }
        assert_eq!(estimate_side_flip_prob(&a, &b).unwrap(), 0.01);
        assert!(estimate_side_flip_prob(&a, &b[..5]).is_err());
    }

    #[test]
    fn llr_sign_follows_estimate() {
        let s = SideInfoLlr::uniform(vec![0, 1, 0], 0.1);
        assert!(s.llr[0] > 0.0 && s.llr[1] < 0.0);
        assert!((s.llr[0] - (0.9f64 / 0.1).ln()).abs() < 1e-15);
        let s = SideInfoLlr::uniform(vec![0], 0.0);
        assert_eq!(s.flip_prob[0], 1e-4);
    }

    #[test]
    fn perfect_side_info_converges_fast() {
        let code = LdpcCode::new(768, 256, 3, 1).unwrap();
        let info = bits(768, 2);
        let parity = code.encode_parity(&info).unwrap();
        let parity_llr: Vec<f64> = parity.iter().map(|&b| side_llr(b, 1e-4)).collect();
        let out = dsc_decode(&parity_llr, &SideInfoLlr::uniform(info.clone(), 0.03), &code, 50).unwrap();
        assert!(out.converged && out.iterations <= 2);
        assert_eq!(out.info, info);
    }

    #[test]
    fn erased_parity_returns_side_info() {
        let code = LdpcCode::new(96, 32, 3, 1).unwrap();
        let info = bits(96, 3);
        let out = dsc_decode(&[0.0; 32], &SideInfoLlr::uniform(info.clone(), 1e-4), &code, 50).unwrap();
        assert_eq!(out.info, info);
    }

    #[test]
    fn corrects_flipped_side_info() {
        let code = LdpcCode::new(768, 256, 3, 1).unwrap();
        let info = bits(768, 4);
        let parity = code.encode_parity(&info).unwrap();
        let parity_llr: Vec<f64> = parity.iter().map(|&b| side_llr(b, 1e-3)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noisy: Vec<u8> = info.iter().map(|&b| b ^ u8::from(rng.random_bool(0.03))).collect();
        let out = dsc_decode(&parity_llr, &SideInfoLlr::uniform(noisy, 0.03), &code, 50).unwrap();
        assert!(out.converged);
        assert_eq!(out.info, info);
    }
}
