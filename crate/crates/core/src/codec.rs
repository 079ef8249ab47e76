//! Semantic encoder/decoder with finite-constellation feature quantization
//! and token-based stand-ins for dropped patches.
//!
//! Both networks work on one patch at a time: the encoder maps `L` pixels to
//! `F` features in `(-1, 1)`, the decoder maps `F` features back to `L`
//! pixels. A constrained codec snaps features onto a uniform mid-rise
//! constellation before transmission; an ideal codec sends them at full
//! precision. A dropped patch is reconstructed as its assigned token.

pub mod checkpoint;
pub mod mlp;
pub mod tokens;
pub mod train;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::PatchSource;
use mlp::{Activation, Mlp};
pub use tokens::{assign_token, fit_coefficient, sample_correlation, TokenCodebook};
pub use train::{pretrain_ideal, train, LossRecord, TrainingConfig};

/// Default finite-difference step for input gradients.
pub const DEFAULT_FD_STEP: f64 = 1e-3;

/// Named network sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchPreset {
    /// One hidden layer of 64 units.
    Small,
    /// Two hidden layers of 256 units.
    Base,
}

impl ArchPreset {
    pub fn hidden(self) -> &'static [usize] {
        match self {
            ArchPreset::Small => &[64],
            ArchPreset::Base => &[256, 256],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ArchPreset::Small => "small",
            ArchPreset::Base => "base",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            ArchPreset::Small => 0,
            ArchPreset::Base => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ArchPreset::Small),
            1 => Some(ArchPreset::Base),
            _ => None,
        }
    }
}

impl fmt::Display for ArchPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ArchPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(ArchPreset::Small),
            "base" => Ok(ArchPreset::Base),
            other => Err(Error::Config(format!("unknown codec preset {other:?}"))),
        }
    }
}

/// Sizes and constellation of a codec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecShape {
    pub preset: ArchPreset,
    pub patch_len: usize,
    pub feature_len: usize,
    pub constellation_bits: u32,
    /// Constellation spans `[-clip, clip]`.
    pub clip: f64,
    pub token_count: usize,
}

impl Default for CodecShape {
    fn default() -> Self {
        Self {
            preset: ArchPreset::Small,
            patch_len: 64,
            feature_len: 64,
            constellation_bits: 4,
            clip: 1.0,
            token_count: 16,
        }
    }
}

impl CodecShape {
    pub fn validate(&self) -> Result<()> {
        if self.patch_len == 0 {
            return Err(Error::Config("patch length must be positive".into()));
        }
        if self.feature_len == 0 || !self.feature_len.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "feature length must be even and positive, got {}",
                self.feature_len
            )));
        }
        if !(1..=16).contains(&self.constellation_bits) {
            return Err(Error::Config(format!(
                "constellation bits must be in 1..=16, got {}",
                self.constellation_bits
            )));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(Error::Config("constellation clip must be positive".into()));
        }
        if self.token_count == 0 {
            return Err(Error::Config("token count must be positive".into()));
        }
        Ok(())
    }

    fn encoder_dims(&self) -> Vec<usize> {
        let mut d = vec![self.patch_len];
        d.extend_from_slice(self.preset.hidden());
        d.push(self.feature_len);
        d
    }

    fn decoder_dims(&self) -> Vec<usize> {
        let mut d = vec![self.feature_len];
        d.extend_from_slice(self.preset.hidden());
        d.push(self.patch_len);
        d
    }

    fn encoder_activations(&self) -> Vec<Activation> {
        vec![Activation::Tanh; self.preset.hidden().len() + 1]
    }

    fn decoder_activations(&self) -> Vec<Activation> {
        let mut a = vec![Activation::Tanh; self.preset.hidden().len()];
        a.push(Activation::Linear);
        a
    }
}

/// What the decoder receives for one patch.
#[derive(Debug, Clone, PartialEq)]
pub enum PatchInput {
    /// Received feature vector of a transmitted patch.
    Received(Vec<f64>),
    /// Token index of a dropped patch.
    Token(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticCodec {
    shape: CodecShape,
    quantized: bool,
    encoder: Mlp,
    decoder: Mlp,
    codebook: TokenCodebook,
    semantic_noise: f64,
}

impl SemanticCodec {
    /// Randomly initialized codec. Tokens start as mid-gray with small
    /// seeded jitter until [`SemanticCodec::init_tokens`] seeds them from data.
    pub fn new(shape: CodecShape, quantized: bool, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Mlp::random(&shape.encoder_dims(), &shape.encoder_activations(), &mut rng)?;
        let decoder = Mlp::random(&shape.decoder_dims(), &shape.decoder_activations(), &mut rng)?;
        let jitter = Normal::new(0.0, 0.01).expect("constant sigma");
        let tokens = (0..shape.token_count)
            .map(|_| (0..shape.patch_len).map(|_| 0.5 + jitter.sample(&mut rng)).collect())
            .collect();
        Ok(Self {
            shape,
            quantized,
            encoder,
            decoder,
            codebook: TokenCodebook::new(tokens)?,
            semantic_noise: 0.0,
        })
    }

    /// Codec with every parameter zero (tokens included).
    pub fn zeros(shape: CodecShape, quantized: bool) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            shape,
            quantized,
            encoder: Mlp::zeros(&shape.encoder_dims(), &shape.encoder_activations())?,
            decoder: Mlp::zeros(&shape.decoder_dims(), &shape.decoder_activations())?,
            codebook: TokenCodebook::new(vec![vec![0.0; shape.patch_len]; shape.token_count])?,
            semantic_noise: 0.0,
        })
    }

    pub(crate) fn from_parts(
        shape: CodecShape,
        quantized: bool,
        encoder_params: Vec<f64>,
        decoder_params: Vec<f64>,
        tokens: Vec<Vec<f64>>,
        semantic_noise: f64,
    ) -> Result<Self> {
        shape.validate()?;
        if tokens.len() != shape.token_count {
            return Err(Error::Checkpoint(format!(
                "{} tokens for a codebook of {}",
                tokens.len(),
                shape.token_count
            )));
        }
        Ok(Self {
            shape,
            quantized,
            encoder: Mlp::from_params(&shape.encoder_dims(), &shape.encoder_activations(), encoder_params)?,
            decoder: Mlp::from_params(&shape.decoder_dims(), &shape.decoder_activations(), decoder_params)?,
            codebook: TokenCodebook::new(tokens)?,
            semantic_noise,
        })
    }

    /// Replaces the tokens with distinct patches drawn from `dataset`, plus
    /// small jitter so that no token is exactly constant.
    pub fn init_tokens(&mut self, dataset: &[PatchSource], seed: u64) -> Result<()> {
        let all: Vec<&Vec<f64>> = dataset.iter().flat_map(|s| s.patches()).collect();
        if all.is_empty() {
            return Err(Error::arg("empty dataset"));
        }
        if all[0].len() != self.shape.patch_len {
            return Err(Error::dim("dataset patch length differs from the codec"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = Normal::new(0.0, 0.01).expect("constant sigma");
        let picks = rand::seq::index::sample(&mut rng, all.len(), self.shape.token_count.min(all.len()));
        let mut tokens: Vec<Vec<f64>> = picks
            .iter()
            .map(|i| all[i].iter().map(|v| v + jitter.sample(&mut rng)).collect())
            .collect();
        while tokens.len() < self.shape.token_count {
            let i = rng.random_range(0..all.len());
            tokens.push(all[i].iter().map(|v| v + jitter.sample(&mut rng)).collect());
        }
        self.codebook = TokenCodebook::new(tokens)?;
        Ok(())
    }

    pub fn shape(&self) -> &CodecShape {
        &self.shape
    }

    pub fn feature_len(&self) -> usize {
        self.shape.feature_len
    }

    pub fn patch_len(&self) -> usize {
        self.shape.patch_len
    }

    /// Whether features are snapped to the constellation before sending.
    pub fn is_quantized(&self) -> bool {
        self.quantized
    }

    /// Same parameters with quantization switched on or off.
    pub fn with_quantization(mut self, quantized: bool) -> Self {
        self.quantized = quantized;
        self
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn codebook(&self) -> &TokenCodebook {
        &self.codebook
    }

    /// Last semantic-noise variance estimated during training.
    pub fn semantic_noise(&self) -> f64 {
        self.semantic_noise
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Mlp, &mut Mlp, &mut TokenCodebook) {
        (&mut self.encoder, &mut self.decoder, &mut self.codebook)
    }

    pub(crate) fn set_semantic_noise(&mut self, v: f64) {
        self.semantic_noise = v;
    }

    fn check_patch(&self, patch: &[f64]) -> Result<()> {
        if patch.len() != self.shape.patch_len {
            return Err(Error::dim(format!(
                "codec expects patches of {} values, got {}",
                self.shape.patch_len,
                patch.len()
            )));
        }
        Ok(())
    }

    /// Full-precision features of one patch.
    pub fn encode(&self, patch: &[f64]) -> Result<Vec<f64>> {
        self.check_patch(patch)?;
        self.encoder.forward(patch)
    }

    /// Features as sent: quantized for a constrained codec, unchanged for an
    /// ideal one.
    pub fn encode_symbols(&self, patch: &[f64]) -> Result<Vec<f64>> {
        let f = self.encode(patch)?;
        if self.quantized {
            quantize_constellation(&f, self.shape.constellation_bits, self.shape.clip)
        } else {
            Ok(f)
        }
    }

    pub fn decode_feature(&self, feature: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.shape.feature_len {
            return Err(Error::dim(format!(
                "decoder expects {} features, got {}",
                self.shape.feature_len,
                feature.len()
            )));
        }
        self.decoder.forward(feature)
    }

    /// Reconstructs every patch from its received features or its token.
    pub fn decode(&self, inputs: &[PatchInput]) -> Result<Vec<Vec<f64>>> {
        inputs
            .iter()
            .map(|inp| match inp {
                PatchInput::Received(f) => self.decode_feature(f),
                PatchInput::Token(k) => self
                    .codebook
                    .tokens
                    .get(*k)
                    .cloned()
                    .ok_or_else(|| Error::arg(format!("token {k} outside a codebook of {}", self.codebook.len()))),
            })
            .collect()
    }

    pub fn assign_token(&self, patch: &[f64]) -> Result<(usize, f64)> {
        assign_token(patch, &self.codebook)
    }

    /// Squared input-Jacobian norm of the encoder at `patch` by central
    /// finite differences with step `step`.
    pub fn input_gradient_energy(&self, patch: &[f64], step: f64) -> Result<f64> {
        self.check_patch(patch)?;
        finite_difference_energy(|x| self.encoder.forward(x), patch, step)
    }

    /// Same quantity computed exactly by tangent propagation.
    pub fn exact_gradient_energy(&self, patch: &[f64]) -> Result<f64> {
        self.check_patch(patch)?;
        self.encoder.jacobian_energy(patch)
    }
}

/// `sum_l sum_f (d f_f / d x_l)^2` by central differences.
pub fn finite_difference_energy<F>(f: F, x: &[f64], step: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(step > 0.0) {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    let mut probe = x.to_vec();
    let mut energy = 0.0;
    for l in 0..x.len() {
        probe[l] = x[l] + step;
        let up = f(&probe)?;
        probe[l] = x[l] - step;
        let down = f(&probe)?;
        probe[l] = x[l];
        if up.len() != down.len() {
            return Err(Error::dim("function output length changed"));
        }
        energy += up
            .iter()
            .zip(&down)
            .map(|(u, d)| {
                let g = (u - d) / (2.0 * step);
                g * g
            })
            .sum::<f64>();
    }
    if !energy.is_finite() {
        return Err(Error::NonFinite("gradient energy"));
    }
    Ok(energy)
}

/// Snaps each value to the nearest of `2^bits` mid-rise levels spanning
/// `[-clip, clip]`; values outside the span go to the outermost level.
pub fn quantize_constellation(feature: &[f64], bits: u32, clip: f64) -> Result<Vec<f64>> {
    if bits == 0 || bits > 16 {
        return Err(Error::arg(format!("constellation bits must be in 1..=16, got {bits}")));
    }
    if !(clip > 0.0) {
        return Err(Error::arg("constellation clip must be positive"));
    }
    let levels = 1u32 << bits;
    let step = 2.0 * clip / levels as f64;
    feature
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                return Err(Error::NonFinite("feature value"));
            }
            let idx = ((v + clip) / step).floor().clamp(0.0, (levels - 1) as f64);
            Ok(-clip + (idx + 0.5) * step)
        })
        .collect()
}

/// Pairs consecutive features into complex symbols and scales them so the
/// block energy is `(F / 2) * gain`.
pub fn analog_map(feature: &[f64], gain: f64) -> Result<Vec<Complex64>> {
    if feature.is_empty() || !feature.len().is_multiple_of(2) {
        return Err(Error::dim(format!("feature length {} is not even", feature.len())));
    }
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::arg(format!("scaling factor must be positive, got {gain}")));
    }
    let norm = l2_norm(feature);
    if norm == 0.0 {
        return Err(Error::arg("cannot map a zero feature vector"));
    }
    let scale = ((feature.len() / 2) as f64 * gain).sqrt() / norm;
    Ok(feature
        .chunks(2)
        .map(|p| Complex64::new(p[0] * scale, p[1] * scale))
        .collect())
}

/// Inverse of [`analog_map`] given the original feature norm.
pub fn analog_unmap(symbols: &[Complex64], gain: f64, norm: f64) -> Result<Vec<f64>> {
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::arg(format!("scaling factor must be positive, got {gain}")));
    }
    if symbols.is_empty() {
        return Ok(Vec::new());
    }
    let scale = norm / (symbols.len() as f64 * gain).sqrt();
    Ok(symbols.iter().flat_map(|s| [s.re * scale, s.im * scale]).collect())
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Linear MMSE shrink of a noisy feature whose entries carry
/// `signal_power` on average and `noise_variance` additive noise.
pub fn lmmse_shrink(feature: &[f64], signal_power: f64, noise_variance: f64) -> Vec<f64> {
    let denom = signal_power + noise_variance;
    if !(denom > 0.0) || !denom.is_finite() {
        return vec![0.0; feature.len()];
    }
    let a = signal_power / denom;
    feature.iter().map(|v| a * v).collect()
}

/// Maximum-likelihood variance of zero-mean semantic noise samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticNoiseEstimate {
    pub variance: f64,
    pub sample_count: usize,
}

impl SemanticNoiseEstimate {
    pub fn from_residuals<I: IntoIterator<Item = f64>>(residuals: I) -> Result<Self> {
        let (mut sum, mut n) = (0.0, 0usize);
        for r in residuals {
            sum += r * r;
            n += 1;
        }
        if n == 0 {
            return Err(Error::arg("no semantic noise samples"));
        }
        if !sum.is_finite() {
            return Err(Error::NonFinite("semantic noise residuals"));
        }
        Ok(Self {
            variance: sum / n as f64,
            sample_count: n,
        })
    }
}

/// Estimates the semantic-noise variance from the residuals between the
/// ideal encoder's features and the constrained encoder's sent features over
/// every patch of `batch`.
pub fn estimate_semantic_noise(
    ideal: &SemanticCodec,
    constrained: &SemanticCodec,
    batch: &[PatchSource],
) -> Result<SemanticNoiseEstimate> {
    if ideal.feature_len() != constrained.feature_len() {
        return Err(Error::dim("codecs differ in feature length"));
    }
    let mut residuals = Vec::new();
    for src in batch {
        for p in src.patches() {
            let a = ideal.encode(p)?;
            let b = constrained.encode_symbols(p)?;
            residuals.extend(a.iter().zip(&b).map(|(x, y)| x - y));
        }
    }
    SemanticNoiseEstimate::from_residuals(residuals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand_distr::StandardNormal;

    fn tiny() -> CodecShape {
        CodecShape {
            patch_len: 4,
            feature_len: 4,
            token_count: 2,
            ..CodecShape::default()
        }
    }

    #[test]
    fn zero_codec_encodes_zero() {
        let c = SemanticCodec::zeros(tiny(), false).unwrap();
        assert_eq!(c.encode(&[0.0; 4]).unwrap(), vec![0.0; 4]);
        assert!(c.encode(&[0.0; 3]).is_err());
    }

    #[test]
    fn encode_matches_hand_forward_pass() {
        let c = SemanticCodec::new(tiny(), false, 7).unwrap();
        let x = [0.2, 0.9, 0.4, 0.1];
        // independent evaluation: 4 -> 64 tanh -> 4 tanh, weights row-major then bias
        let p = c.encoder().params();
        let (h, mut off) = (64, 0);
        let mut hidden = vec![0.0; h];
        for (j, hv) in hidden.iter_mut().enumerate() {
            let mut z = p[off + 4 * h + j];
            for i in 0..4 {
                z += p[off + j * 4 + i] * x[i];
            }
            *hv = z.tanh();
        }
        off += 4 * h + h;
        let mut out = [0.0; 4];
        for (j, o) in out.iter_mut().enumerate() {
            let mut z = p[off + h * 4 + j];
            for i in 0..h {
                z += p[off + j * h + i] * hidden[i];
            }
            *o = z.tanh();
        }
        let got = c.encode(&x).unwrap();
        for (a, b) in got.iter().zip(&out) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(c.encode(&x).unwrap(), got);
    }

    #[test]
    fn one_bit_constellation() {
        let q = quantize_constellation(&[-0.9, -0.1, 0.0, 0.3, 5.0], 1, 1.0).unwrap();
        assert_eq!(q, vec![-0.5, -0.5, 0.5, 0.5, 0.5]);
        assert_eq!(quantize_constellation(&[-0.8125], 4, 1.0).unwrap(), vec![-0.8125]);
        assert!(quantize_constellation(&[f64::NAN], 4, 1.0).is_err());
        assert!(quantize_constellation(&[0.1], 0, 1.0).is_err());
    }

    #[test]
    fn analog_map_examples() {
        let x = analog_map(&[3.0, 4.0], 1.0).unwrap();
        assert!((x[0].norm() - 1.0).abs() < 1e-15);
        assert!((x[0].arg() - 4f64.atan2(3.0)).abs() < 1e-15);
        let a = analog_map(&[1.0, -2.0, 0.5, 3.0], 1.0).unwrap();
        let b = analog_map(&[1.0, -2.0, 0.5, 3.0], 4.0).unwrap();
        let pa: f64 = a.iter().map(|s| s.norm_sqr()).sum();
        let pb: f64 = b.iter().map(|s| s.norm_sqr()).sum();
        assert!((pb / pa - 4.0).abs() < 1e-12);
        assert!(analog_map(&[0.0, 0.0], 1.0).is_err());
        assert!(analog_map(&[1.0, 0.0], 0.0).is_err());
        let z = analog_unmap(&[Complex64::new(0.0, 0.0); 2], 2.0, 3.0).unwrap();
        assert_eq!(z, vec![0.0; 4]);
    }

    #[test]
    fn noiseless_analog_round_trip_preserves_decode() {
        let c = SemanticCodec::new(tiny(), true, 3).unwrap();
        let patch = [0.3, 0.7, 0.1, 0.5];
        let f = c.encode_symbols(&patch).unwrap();
        let norm = l2_norm(&f);
        let back = analog_unmap(&analog_map(&f, 0.8).unwrap(), 0.8, norm).unwrap();
        let a = c.decode(&[PatchInput::Received(f)]).unwrap();
        let b = c.decode(&[PatchInput::Received(back)]).unwrap();
        for (x, y) in a[0].iter().zip(&b[0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_is_per_patch() {
        let c = SemanticCodec::new(tiny(), false, 5).unwrap();
        let f1 = vec![0.1, -0.2, 0.3, 0.4];
        let f2 = vec![-0.5, 0.2, 0.0, 0.9];
        let a = c
            .decode(&[PatchInput::Received(f1.clone()), PatchInput::Received(f2.clone()), PatchInput::Token(1)])
            .unwrap();
        let b = c.decode(&[PatchInput::Received(f2), PatchInput::Received(f1)]).unwrap();
        assert_eq!(a[0], b[1]);
        assert_eq!(a[1], b[0]);
        assert_eq!(a[2], c.codebook().tokens[1]);
        assert!(c.decode(&[PatchInput::Token(9)]).is_err());
    }

    #[test]
    fn gradient_energy_of_linear_maps() {
        let x = [0.3, -0.2, 0.9, 0.05, 0.4];
        let id = finite_difference_energy(|v| Ok(v.to_vec()), &x, DEFAULT_FD_STEP).unwrap();
        assert!((id - 5.0).abs() < 1e-9);
        let twice = finite_difference_energy(|v| Ok(v.iter().map(|a| 2.0 * a).collect()), &x, DEFAULT_FD_STEP).unwrap();
        assert!((twice - 20.0).abs() < 1e-9);
    }

    #[test]
    fn finite_differences_match_affine_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::random(&[8, 6], &[Activation::Linear], &mut rng).unwrap();
        let analytic: f64 = net.params()[..48].iter().map(|w| w * w).sum();
        let x: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
        let fd = finite_difference_energy(|v| net.forward(v), &x, DEFAULT_FD_STEP).unwrap();
        assert!((fd - analytic).abs() / analytic < 1e-4);
    }

    #[test]
    fn codec_finite_differences_match_exact_energy() {
        let c = SemanticCodec::new(CodecShape::default(), false, 1).unwrap();
        let patch: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin() * 0.5 + 0.5).collect();
        let fd = c.input_gradient_energy(&patch, DEFAULT_FD_STEP).unwrap();
        let exact = c.exact_gradient_energy(&patch).unwrap();
        assert!((fd - exact).abs() / exact < 1e-4, "{fd} vs {exact}");
    }

    #[test]
    fn semantic_noise_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r: Vec<f64> = (0..20_000).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 0.3 * z }).collect();
        let e = SemanticNoiseEstimate::from_residuals(r.iter().copied()).unwrap();
        assert!((e.variance - 0.09).abs() / 0.09 < 0.05);
        let d = SemanticNoiseEstimate::from_residuals(r.iter().map(|v| 2.0 * v)).unwrap();
        assert!((d.variance / e.variance - 4.0).abs() < 1e-12);
        assert!(SemanticNoiseEstimate::from_residuals(std::iter::empty()).is_err());

        let c = SemanticCodec::new(tiny(), false, 2).unwrap();
        let src = PatchSource::from_patches(vec![vec![0.1, 0.2, 0.3, 0.4]], None).unwrap();
        assert_eq!(estimate_semantic_noise(&c, &c, std::slice::from_ref(&src)).unwrap().variance, 0.0);
        let q = c.clone().with_quantization(true);
        assert!(estimate_semantic_noise(&c, &q, &[src]).unwrap().variance > 0.0);
    }

    #[test]
    fn preset_parsing() {
        assert_eq!("base".parse::<ArchPreset>().unwrap(), ArchPreset::Base);
        assert!("huge".parse::<ArchPreset>().is_err());
        assert_eq!(serde_json::to_string(&ArchPreset::Small).unwrap(), "\"small\"");
    }

    proptest! {
        #[test]
        fn quantizer_idempotent_and_bounded(
            v in proptest::collection::vec(-1.5f64..1.5, 1..16),
            bits in 1u32..8,
        ) {
            let q = quantize_constellation(&v, bits, 1.0).unwrap();
            prop_assert_eq!(&quantize_constellation(&q, bits, 1.0).unwrap(), &q);
            let half_step = 1.0 / (1u32 << bits) as f64;
            for (a, b) in v.iter().zip(&q) {
                if a.abs() <= 1.0 {
                    prop_assert!((a - b).abs() <= half_step + 1e-12);
                }
            }
        }

        #[test]
        fn analog_power_contract(
            f in proptest::collection::vec(-3.0f64..3.0, 1..8),
            gain in 0.01f64..10.0,
        ) {
            let mut f = f;
            if f.len() % 2 == 1 { f.push(0.5); }
            f[0] += 4.0;
            let x = analog_map(&f, gain).unwrap();
            let p: f64 = x.iter().map(|s| s.norm_sqr()).sum();
            prop_assert!((p - (f.len() / 2) as f64 * gain).abs() < 1e-12 * (1.0 + p));
            let back = analog_unmap(&x, gain, l2_norm(&f)).unwrap();
            for (a, b) in back.iter().zip(&f) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
