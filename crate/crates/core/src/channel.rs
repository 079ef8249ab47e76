//! Rayleigh block-fading AWGN channel, hybrid frame multiplexing and
//! coherent equalization.
//!
//! One fading gain applies to a whole analog patch or a whole digital block.
//! Gains and noise are drawn CN(0, 1) and CN(0, noise_variance) per complex
//! channel use, so each real component of the noise has half the variance.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::alloc::AllocationPlan;
use crate::error::{Error, Result};

/// Gains at or below this magnitude are treated as deep fades.
pub const DEFAULT_H_FLOOR: f64 = 1e-6;

/// `signal_power / 10^(snr_db / 10)`.
pub fn snr_to_noise_variance(snr_db: f64, signal_power: f64) -> Result<f64> {
    if !(signal_power > 0.0) {
        return Err(Error::arg(format!("signal power must be positive, got {signal_power}")));
    }
    Ok(signal_power / 10f64.powf(snr_db / 10.0))
}

/// One draw from CN(0, variance).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// `y = x h + n`, `n` i.i.d. CN(0, noise_variance).
pub fn transmit_analog<R: Rng + ?Sized>(
    x: &[Complex64],
    h: Complex64,
    noise_variance: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    x.iter()
        .map(|&v| {
            let n = if noise_variance > 0.0 {
                complex_gaussian(rng, noise_variance)
            } else {
                Complex64::new(0.0, 0.0)
            };
            v * h + n
        })
        .collect()
}

/// Digital blocks see the same block-constant channel as analog patches.
pub fn transmit_digital<R: Rng + ?Sized>(
    x: &[Complex64],
    h: Complex64,
    noise_variance: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    transmit_analog(x, h, noise_variance, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    pub symbols: Vec<Complex64>,
    /// Noise variance per complex use after division by the gain.
    pub noise_variance: f64,
    /// Deep fade: symbols are zeroed and must not be trusted.
    pub erased: bool,
}

/// Zero-forcing equalization `y / h`, or an erasure when `|h| <= h_floor`.
pub fn equalize(y: &[Complex64], h: Complex64, noise_variance: f64, h_floor: f64) -> Equalized {
    let mag = h.norm();
    if mag <= h_floor {
        return Equalized {
            symbols: vec![Complex64::new(0.0, 0.0); y.len()],
            noise_variance: f64::INFINITY,
            erased: true,
        };
    }
    Equalized {
        symbols: y.iter().map(|v| v / h).collect(),
        noise_variance: noise_variance / (mag * mag),
        erased: false,
    }
}

/// Fading gains and noise level for one frame; noise draws come from a
/// generator seeded from the same seed, so a realization fully fixes the
/// channel output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub analog_gains: Vec<Complex64>,
    pub digital_gains: Vec<Complex64>,
    pub noise_variance: f64,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn draw(analog: usize, digital: usize, noise_variance: f64, seed: u64) -> Result<Self> {
        if !(noise_variance >= 0.0) {
            return Err(Error::arg("noise variance must be non-negative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let digital_gains = (0..digital).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let analog_gains = (0..analog).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        Ok(Self {
            analog_gains,
            digital_gains,
            noise_variance,
            seed,
        })
    }

    /// Unit gains everywhere (AWGN only).
    pub fn unit(analog: usize, digital: usize, noise_variance: f64, seed: u64) -> Self {
        Self {
            analog_gains: vec![Complex64::new(1.0, 0.0); analog],
            digital_gains: vec![Complex64::new(1.0, 0.0); digital],
            noise_variance,
            seed,
        }
    }

    /// Passes every block of `frame` through its gain and fresh noise.
    pub fn apply(&self, frame: &HybridFrame) -> Result<HybridFrame> {
        if frame.analog_blocks.len() != self.analog_gains.len()
            || frame.digital_blocks.len() != self.digital_gains.len()
        {
            return Err(Error::dim(format!(
                "frame has {} analog / {} digital blocks, realization {} / {}",
                frame.analog_blocks.len(),
                frame.digital_blocks.len(),
                self.analog_gains.len(),
                self.digital_gains.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let digital_blocks = frame
            .digital_blocks
            .iter()
            .zip(&self.digital_gains)
            .map(|(b, &h)| transmit_digital(b, h, self.noise_variance, &mut rng))
            .collect();
        let analog_blocks = frame
            .analog_blocks
            .iter()
            .zip(&self.analog_gains)
            .map(|(b, &h)| transmit_analog(b, h, self.noise_variance, &mut rng))
            .collect();
        Ok(HybridFrame {
            digital_blocks,
            analog_blocks,
            metadata: frame.metadata.clone(),
        })
    }
}

/// Side information delivered error-free alongside the frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameMetadata {
    pub patch_count: usize,
    pub transmit_indices: Vec<usize>,
    pub dropped_indices: Vec<usize>,
    /// Token index per dropped patch, in `dropped_indices` order.
    pub token_assignment: Vec<usize>,
    /// Feature norm per transmitted patch.
    pub norms: Vec<f64>,
    /// Scaling factor per transmitted patch.
    pub scaling: Vec<f64>,
}

impl FrameMetadata {
    fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.patch_count];
        for &i in self.transmit_indices.iter().chain(&self.dropped_indices) {
            match seen.get_mut(i) {
                Some(s) if !*s => *s = true,
                _ => return Err(Error::arg(format!("metadata index {i} repeated or out of range"))),
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::arg("metadata index sets do not cover every patch"));
        }
        let q = self.transmit_indices.len();
        if self.norms.len() != q || self.scaling.len() != q {
            return Err(Error::dim("metadata norms/scaling do not match transmitted count"));
        }
        if self.token_assignment.len() != self.dropped_indices.len() {
            return Err(Error::dim("metadata token assignment does not match dropped count"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridFrame {
    pub digital_blocks: Vec<Vec<Complex64>>,
    pub analog_blocks: Vec<Vec<Complex64>>,
    pub metadata: FrameMetadata,
}

impl HybridFrame {
    /// Complex channel uses carrying payload.
    pub fn occupied_uses(&self) -> usize {
        self.digital_blocks.iter().map(Vec::len).sum::<usize>()
            + self.analog_blocks.iter().map(Vec::len).sum::<usize>()
    }

    /// Raw dump: digital blocks then analog blocks, each symbol as two
    /// little-endian f64 values (real, imaginary).
    pub fn write_dump<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for s in self.digital_blocks.iter().chain(&self.analog_blocks).flatten() {
            out.write_all(&s.re.to_le_bytes())?;
            out.write_all(&s.im.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Assembles a frame, checking block counts and lengths against the plan.
pub fn multiplex(
    plan: &AllocationPlan,
    digital: Vec<Vec<Complex64>>,
    analog: Vec<Vec<Complex64>>,
    metadata: FrameMetadata,
) -> Result<HybridFrame> {
    let k = plan.digital.block_count as usize;
    let v = plan.digital.block_symbols as usize;
    let sym = plan.inputs.feature_len / 2;
    if digital.len() != k || digital.iter().any(|b| b.len() != v) {
        return Err(Error::dim(format!("expected {k} digital blocks of {v} symbols")));
    }
    if analog.len() != plan.transmit_count || analog.iter().any(|b| b.len() != sym) {
        return Err(Error::dim(format!(
            "expected {} analog blocks of {sym} symbols",
            plan.transmit_count
        )));
    }
    metadata.validate()?;
    if metadata.transmit_indices != plan.transmit_indices {
        return Err(Error::arg("metadata transmit set differs from the plan"));
    }
    let frame = HybridFrame {
        digital_blocks: digital,
        analog_blocks: analog,
        metadata,
    };
    let budget = plan.inputs.budget.total_bandwidth as usize;
    if frame.occupied_uses() > budget {
        return Err(Error::Infeasible {
            resource: "bandwidth",
            demand: frame.occupied_uses() as f64,
            budget: budget as f64,
            shortfall: (frame.occupied_uses() - budget) as f64,
        });
    }
    Ok(frame)
}

/// Splits a received frame into its sections.
pub fn demultiplex(
    frame: HybridFrame,
) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>, FrameMetadata) {
    (frame.digital_blocks, frame.analog_blocks, frame.metadata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::{plan, BlockSizing, BudgetConfig, DigitalParams, ModulationSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn snr_conversion() {
        assert_eq!(snr_to_noise_variance(0.0, 1.0).unwrap(), 1.0);
        assert!((snr_to_noise_variance(10.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((snr_to_noise_variance(20.0, 2.0).unwrap() - 0.02).abs() < 1e-15);
        assert!(snr_to_noise_variance(0.0, 0.0).is_err());
    }

    #[test]
    fn noiseless_and_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = vec![c(1.0, -2.0), c(0.5, 0.25)];
        assert_eq!(transmit_analog(&x, c(1.0, 0.0), 0.0, &mut rng), x);
        let h = c(0.3, -0.7);
        let y = transmit_digital(&x, h, 0.0, &mut rng);
        assert_eq!(y, x.iter().map(|v| v * h).collect::<Vec<_>>());
        let x2: Vec<Complex64> = x.iter().map(|v| v * 2.0).collect();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let y1 = transmit_analog(&x, h, 0.2, &mut r1);
        let y2 = transmit_analog(&x2, h, 0.2, &mut r2);
        for i in 0..2 {
            let n = y1[i] - x[i] * h;
            assert!(((y2[i] - n) - (y1[i] - n) * 2.0).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_variance_and_whiteness() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let x = vec![c(0.0, 0.0); n];
        let y = transmit_analog(&x, c(1.0, 0.0), 0.3, &mut rng);
        let p = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 0.3).abs() / 0.3 < 0.03, "{p}");
        let lag: f64 = y.windows(2).map(|w| w[0].re * w[1].re).sum::<f64>() / (n as f64 * 0.15);
        assert!(lag.abs() < 0.01, "{lag}");
    }

    #[test]
    fn fading_statistics() {
        let r = ChannelRealization::draw(0, 100_000, 0.0, 3).unwrap();
        let mut p: Vec<f64> = r.digital_gains.iter().map(|h| h.norm_sqr()).collect();
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!((mean - 1.0).abs() < 0.03);
        // Kolmogorov-Smirnov distance against Exp(1)
        p.sort_by(f64::total_cmp);
        let n = p.len() as f64;
        let ks = p
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let cdf = 1.0 - (-v).exp();
                (cdf - i as f64 / n).abs().max((cdf - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "ks={ks}");
        // neighbouring blocks uncorrelated
        let g = &r.digital_gains;
        let corr = g.windows(2).map(|w| (w[0] * w[1].conj()).re).sum::<f64>() / n;
        assert!(corr.abs() < 0.01);
    }

    #[test]
    fn equalize_cases() {
        let x = vec![c(0.1, 0.2), c(-0.4, 0.9)];
        let e = equalize(&x, c(1.0, 0.0), 0.1, DEFAULT_H_FLOOR);
        assert_eq!(e.symbols, x);
        let h = c(-0.2, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = equalize(&transmit_analog(&x, h, 0.0, &mut rng), h, 0.1, DEFAULT_H_FLOOR);
        for (a, b) in e.symbols.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!((e.noise_variance - 0.1 / h.norm_sqr()).abs() < 1e-15);
        assert!(equalize(&x, c(1e-9, 0.0), 0.1, DEFAULT_H_FLOOR).erased);
    }

    fn toy_plan() -> AllocationPlan {
        let budget = BudgetConfig {
            total_power: 2048.0,
            total_bandwidth: 2048,
            error_threshold: 1e-3,
            noise_power: 0.1,
            charge_metadata: false,
        };
        let digital = DigitalParams {
            info_bits: 2048,
            block_info_bits: 256,
            code_rate: 0.75,
            block_symbols: 128,
            modulation: ModulationSpec::QPSK,
            sizing: BlockSizing::BitsPerSymbol,
        };
        let rho: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        plan(&budget, &rho, &[0.01; 16], &digital, 64, 16).unwrap()
    }

    fn toy_frame(p: &AllocationPlan, seed: u64) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>, FrameMetadata) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = (0..p.digital.block_count)
            .map(|_| (0..p.digital.block_symbols).map(|_| complex_gaussian(&mut rng, 1.0)).collect())
            .collect();
        let a = (0..p.transmit_count)
            .map(|_| (0..p.inputs.feature_len / 2).map(|_| complex_gaussian(&mut rng, 1.0)).collect())
            .collect();
        let meta = FrameMetadata {
            patch_count: 16,
            transmit_indices: p.transmit_indices.clone(),
            dropped_indices: p.dropped_indices.clone(),
            token_assignment: vec![0; p.dropped_indices.len()],
            norms: vec![1.0; p.transmit_count],
            scaling: p.scaling.clone(),
        };
        (d, a, meta)
    }

    #[test]
    fn multiplex_round_trip_and_occupancy() {
        let p = toy_plan();
        let (d, a, m) = toy_frame(&p, 4);
        let frame = multiplex(&p, d.clone(), a.clone(), m.clone()).unwrap();
        let expected = p.digital.bandwidth as usize + p.transmit_count * p.inputs.feature_len / 2;
        assert_eq!(frame.occupied_uses(), expected);
        assert_eq!(demultiplex(frame), (d, a, m));
    }

    #[test]
    fn multiplex_rejects_count_mismatch() {
        let p = toy_plan();
        let (mut d, a, m) = toy_frame(&p, 4);
        d.pop();
        assert!(multiplex(&p, d, a, m).is_err());
    }

    #[test]
    fn empty_analog_section() {
        let mut p = toy_plan();
        p.transmit_count = 0;
        p.transmit_indices.clear();
        p.scaling.clear();
        p.dropped_indices = (0..16).collect();
        let (d, _, mut m) = toy_frame(&p, 5);
        m.transmit_indices.clear();
        m.norms.clear();
        m.scaling.clear();
        m.dropped_indices = (0..16).collect();
        m.token_assignment = vec![0; 16];
        let f = multiplex(&p, d, Vec::new(), m).unwrap();
        assert!(f.analog_blocks.is_empty());
    }

    #[test]
    fn realization_is_deterministic() {
        let p = toy_plan();
        let (d, a, m) = toy_frame(&p, 6);
        let frame = multiplex(&p, d, a, m).unwrap();
        let r1 = ChannelRealization::draw(frame.analog_blocks.len(), frame.digital_blocks.len(), 0.1, 77).unwrap();
        let r2 = ChannelRealization::draw(frame.analog_blocks.len(), frame.digital_blocks.len(), 0.1, 77).unwrap();
        let (o1, o2) = (r1.apply(&frame).unwrap(), r2.apply(&frame).unwrap());
        let (mut b1, mut b2) = (Vec::new(), Vec::new());
        o1.write_dump(&mut b1).unwrap();
        o2.write_dump(&mut b2).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(b1.len(), frame.occupied_uses() * 16);
    }
}
