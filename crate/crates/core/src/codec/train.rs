//! Codec training.
//!
//! [`pretrain_ideal`] fits a full-precision codec on every patch with a plain
//! reconstruction loss. [`train`] then fits a constrained codec: each image
//! has a random subset of patches dropped (replaced by tokens), the remaining
//! features are quantized (straight-through gradient), sent over a simulated
//! block-fading link and decoded. The loss per image is the distortion bound
//! plus `(1/I) sum_i |s_i - s_hat_i|^2`. The semantic-noise variance in the
//! bound is re-estimated on every batch from the residuals between the ideal
//! and the constrained features.
//!
//! Per-image forward/backward passes run in parallel; their gradients are
//! summed in batch order so results do not depend on the thread count.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::Adam;
use super::{assign_token, fit_coefficient, quantize_constellation, CodecShape, SemanticCodec};
use crate::channel::complex_gaussian;
use crate::crlb::crlb_transmission_term;
use crate::error::{Error, Result};
use crate::source::PatchSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Fraction of patches dropped per image.
    pub masking_ratio: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub train_snr_db: f64,
    /// Images per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Transmitted patches per batch on which the gradient-energy part of the
    /// bound is evaluated and differentiated; the batch total is scaled up
    /// from this sample.
    pub gradient_patches: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            masking_ratio: 0.7,
            epochs: 100,
            learning_rate: 1e-3,
            train_snr_db: 10.0,
            batch_size: 8,
            seed: 0,
            gradient_patches: 4,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.masking_ratio) {
            return Err(Error::Config(format!("masking ratio {} outside [0, 1]", self.masking_ratio)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !self.train_snr_db.is_finite() {
            return Err(Error::Config("training SNR must be finite".into()));
        }
        if self.batch_size == 0 || self.gradient_patches == 0 {
            return Err(Error::Config("batch size and gradient patches must be positive".into()));
        }
        Ok(())
    }

    fn noise_variance(&self) -> f64 {
        10f64.powf(-self.train_snr_db / 10.0)
    }
}

/// Epoch-averaged loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    pub bound: f64,
    pub reconstruction: f64,
    pub total: f64,
    /// Pooled semantic-noise estimate of the epoch.
    pub semantic_noise: f64,
}

impl LossRecord {
    pub const CSV_HEADER: &'static str = "epoch,bound,reconstruction,total";
}

pub fn write_loss_csv<W: Write>(records: &[LossRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", LossRecord::CSV_HEADER)?;
    for r in records {
        writeln!(out, "{},{},{},{}", r.epoch, r.bound, r.reconstruction, r.total)?;
    }
    Ok(())
}

/// Ideal and constrained codecs with their loss histories.
#[derive(Debug, Clone)]
pub struct TrainedCodecs {
    pub ideal: SemanticCodec,
    pub constrained: SemanticCodec,
    pub ideal_history: Vec<LossRecord>,
    pub history: Vec<LossRecord>,
}

/// Simulated analog link used during training: one CN(0, 1) gain for the
/// whole feature vector, AWGN at `noise_variance` relative to the mean symbol
/// power, zero-forcing, then an LMMSE shrink. Returns the received features
/// and the shrink factor.
pub fn simulate_training_link<R: Rng + ?Sized>(sent: &[f64], noise_variance: f64, rng: &mut R) -> (Vec<f64>, f64) {
    let power = sent.iter().map(|v| v * v).sum::<f64>() / sent.len() as f64;
    let h2 = complex_gaussian(rng, 1.0).norm_sqr();
    if power == 0.0 || noise_variance == 0.0 {
        return (sent.to_vec(), 1.0);
    }
    let v = if h2 > 0.0 { power * noise_variance / h2 } else { f64::INFINITY };
    let shrink = power / (power + v);
    let sd = v.sqrt();
    let received = sent
        .iter()
        .map(|&x| {
            let n: f64 = StandardNormal.sample(rng);
            if shrink == 0.0 {
                0.0
            } else {
                shrink * (x + sd * n)
            }
        })
        .collect();
    (received, shrink)
}

fn dropped_count(masking_ratio: f64, patches: usize) -> usize {
    ((masking_ratio * patches as f64).round() as usize).min(patches)
}

fn split_mask<R: Rng + ?Sized>(patches: usize, masking_ratio: f64, rng: &mut R) -> Vec<bool> {
    let mut dropped = vec![false; patches];
    for i in rand::seq::index::sample(rng, patches, dropped_count(masking_ratio, patches)) {
        dropped[i] = true;
    }
    dropped
}

fn sent_features(codec: &SemanticCodec, feature: &[f64]) -> Result<Vec<f64>> {
    if codec.is_quantized() {
        quantize_constellation(feature, codec.shape().constellation_bits, codec.shape().clip)
    } else {
        Ok(feature.to_vec())
    }
}

struct ImageStep {
    enc: Vec<f64>,
    dec: Vec<f64>,
    tok: Vec<f64>,
    /// Encoder gradient of this image's squared semantic-noise residuals.
    resid_grad: Vec<f64>,
    reconstruction: f64,
    resid_sq: f64,
    resid_count: usize,
    transmitted: Vec<usize>,
    /// (token, source variance) per dropped patch.
    dropped: Vec<(usize, f64)>,
}

fn image_step(
    codec: &SemanticCodec,
    ideal: Option<&SemanticCodec>,
    src: &PatchSource,
    masking_ratio: f64,
    noise_variance: f64,
    seed: u64,
) -> Result<ImageStep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = src.len();
    let l = codec.patch_len();
    let mask = split_mask(n, masking_ratio, &mut rng);
    let mut step = ImageStep {
        enc: vec![0.0; codec.encoder().params().len()],
        dec: vec![0.0; codec.decoder().params().len()],
        tok: vec![0.0; codec.codebook().len() * l],
        resid_grad: Vec::new(),
        reconstruction: 0.0,
        resid_sq: 0.0,
        resid_count: 0,
        transmitted: Vec::new(),
        dropped: Vec::new(),
    };
    let inv_i = 1.0 / n as f64;
    for (i, s) in src.patches().iter().enumerate() {
        if mask[i] {
            let (k, _) = assign_token(s, codec.codebook())?;
            let t = &codec.codebook().tokens[k];
            for (j, (sv, tv)) in s.iter().zip(t).enumerate() {
                let e = sv - tv;
                step.reconstruction += e * e * inv_i;
                step.tok[k * l + j] -= 2.0 * e * inv_i;
            }
            step.dropped.push((k, src.stats()[i].variance));
            continue;
        }
        step.transmitted.push(i);
        let enc_trace = codec.encoder().forward_trace(s)?;
        let feature = enc_trace.last().expect("output layer");
        let sent = sent_features(codec, feature)?;
        if let Some(ideal) = ideal {
            let reference = ideal.encode(s)?;
            let diff: Vec<f64> = reference.iter().zip(&sent).map(|(a, b)| a - b).collect();
            step.resid_sq += diff.iter().map(|d| d * d).sum::<f64>();
            step.resid_count += sent.len();
            if step.resid_grad.is_empty() {
                step.resid_grad = vec![0.0; step.enc.len()];
            }
            let g: Vec<f64> = diff.iter().map(|d| -2.0 * d).collect();
            codec.encoder().backward(&enc_trace, &g, &mut step.resid_grad);
        }
        let (received, shrink) = simulate_training_link(&sent, noise_variance, &mut rng);
        let dec_trace = codec.decoder().forward_trace(&received)?;
        let out = dec_trace.last().expect("output layer");
        let grad_out: Vec<f64> = s
            .iter()
            .zip(out)
            .map(|(sv, ov)| {
                let e = sv - ov;
                step.reconstruction += e * e * inv_i;
                -2.0 * e * inv_i
            })
            .collect();
        let grad_received = codec.decoder().backward(&dec_trace, &grad_out, &mut step.dec);
        // straight-through quantizer, noise scale held fixed
        let grad_feature: Vec<f64> = grad_received.iter().map(|g| g * shrink).collect();
        codec.encoder().backward(&enc_trace, &grad_feature, &mut step.enc);
    }
    Ok(step)
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

struct Objective<'a> {
    ideal: Option<&'a SemanticCodec>,
    masking_ratio: f64,
    with_bound: bool,
    stream: u64,
}

fn run_epochs(
    codec: &mut SemanticCodec,
    dataset: &[PatchSource],
    config: &TrainingConfig,
    objective: Objective<'_>,
) -> Result<Vec<LossRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(objective.stream);
    let noise_variance = config.noise_variance();
    let l = codec.patch_len();
    let mut opt_enc = Adam::new(codec.encoder().params().len(), config.learning_rate);
    let mut opt_dec = Adam::new(codec.decoder().params().len(), config.learning_rate);
    let mut opt_tok = Adam::new(codec.codebook().len() * l, config.learning_rate);
    let mut semantic_noise = codec.semantic_noise();
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut bound_sum, mut rec_sum) = (0.0, 0.0);
        let (mut epoch_resid, mut epoch_count) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let seeds: Vec<u64> = batch.iter().map(|_| rng.random()).collect();
            let steps = batch
                .par_iter()
                .zip(&seeds)
                .map(|(&i, &seed)| {
                    image_step(codec, objective.ideal, &dataset[i], objective.masking_ratio, noise_variance, seed)
                })
                .collect::<Result<Vec<_>>>()?;
            let b = batch.len() as f64;
            let mut g_enc = vec![0.0; codec.encoder().params().len()];
            let mut g_dec = vec![0.0; codec.decoder().params().len()];
            let mut g_tok = vec![0.0; codec.codebook().len() * l];
            let mut g_resid = vec![0.0; g_enc.len()];
            let (mut resid, mut count, mut rec) = (0.0, 0usize, 0.0);
            for s in &steps {
                add_into(&mut g_enc, &s.enc);
                add_into(&mut g_dec, &s.dec);
                add_into(&mut g_tok, &s.tok);
                if !s.resid_grad.is_empty() {
                    add_into(&mut g_resid, &s.resid_grad);
                }
                resid += s.resid_sq;
                count += s.resid_count;
                rec += s.reconstruction;
            }
            if count > 0 {
                semantic_noise = resid / count as f64;
            }
            epoch_resid += resid;
            epoch_count += count;

            let mut bound = 0.0;
            if objective.with_bound {
                let (syn, syn_slope) = synonymous_bound(codec, &steps, semantic_noise, &mut g_tok);
                let (tx, tx_slope) = transmission_bound(
                    codec,
                    dataset,
                    batch,
                    &steps,
                    semantic_noise,
                    noise_variance,
                    config,
                    &mut rng,
                    &mut g_enc,
                )?;
                bound = syn + tx;
                // the noise estimate is a function of the encoder too
                if count > 0 {
                    let scale = (syn_slope + tx_slope) / count as f64;
                    for (a, b) in g_enc.iter_mut().zip(&g_resid) {
                        *a += scale * b;
                    }
                }
            }
            let total = (bound + rec) / b;
            if !total.is_finite() {
                return Err(Error::Diverged { epoch, loss: total });
            }
            bound_sum += bound;
            rec_sum += rec;

            for g in g_enc.iter_mut().chain(&mut g_dec).chain(&mut g_tok) {
                *g /= b;
            }
            let (enc, dec, book) = codec.parts_mut();
            opt_enc.update(enc.params_mut(), &g_enc);
            opt_dec.update(dec.params_mut(), &g_dec);
            if objective.masking_ratio > 0.0 {
                let mut flat: Vec<f64> = book.tokens.iter().flatten().copied().collect();
                opt_tok.update(&mut flat, &g_tok);
                for (t, chunk) in book.tokens.iter_mut().zip(flat.chunks(l)) {
                    t.copy_from_slice(chunk);
                }
                book.refresh_vars();
            }
        }
        let n = dataset.len() as f64;
        let record = LossRecord {
            epoch,
            bound: bound_sum / n,
            reconstruction: rec_sum / n,
            total: (bound_sum + rec_sum) / n,
            semantic_noise: if epoch_count > 0 { epoch_resid / epoch_count as f64 } else { semantic_noise },
        };
        if !record.total.is_finite() || codec.encoder().params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch, loss: record.total });
        }
        codec.set_semantic_noise(record.semantic_noise);
        history.push(record);
    }
    Ok(history)
}

/// Token bound `s / (L rho^2)` summed over the batch's dropped patches, and
/// its derivative in the noise variance `s`; adds the token gradient.
fn synonymous_bound(codec: &SemanticCodec, steps: &[ImageStep], semantic_noise: f64, g_tok: &mut [f64]) -> (f64, f64) {
    let l = codec.patch_len();
    let lf = l as f64;
    let book = codec.codebook();
    let (mut total, mut slope) = (0.0, 0.0);
    for &(k, source_var) in steps.iter().flat_map(|s| &s.dropped) {
        let tv = book.token_vars[k];
        let rho = fit_coefficient(tv, source_var);
        if rho <= 0.0 {
            return (f64::INFINITY, 0.0);
        }
        total += semantic_noise / (lf * rho);
        slope += 1.0 / (lf * rho);
        if rho < 1.0 && source_var > 0.0 {
            // d/d tv of s * var_s / (L tv), then d tv / d t_j = 2 (t_j - mean) / L
            let d_tv = -semantic_noise * source_var / (lf * tv * tv);
            let t = &book.tokens[k];
            let mean = t.iter().sum::<f64>() / lf;
            for (j, v) in t.iter().enumerate() {
                g_tok[k * l + j] += d_tv * 2.0 * (v - mean) / lf;
            }
        }
    }
    (total, slope)
}

/// Gradient-energy bound summed over the batch's transmitted patches,
/// estimated from a random sample of them, and its derivative in the noise
/// variance; adds the encoder gradient through the gradient energy.
#[allow(clippy::too_many_arguments)]
fn transmission_bound(
    codec: &SemanticCodec,
    dataset: &[PatchSource],
    batch: &[usize],
    steps: &[ImageStep],
    semantic_noise: f64,
    noise_variance: f64,
    config: &TrainingConfig,
    rng: &mut ChaCha8Rng,
    g_enc: &mut [f64],
) -> Result<(f64, f64)> {
    let candidates: Vec<(usize, usize)> = batch
        .iter()
        .zip(steps)
        .flat_map(|(&img, s)| s.transmitted.iter().map(move |&p| (img, p)))
        .collect();
    if candidates.is_empty() {
        return Ok((0.0, 0.0));
    }
    let take = config.gradient_patches.min(candidates.len());
    let picks: Vec<(usize, usize)> = rand::seq::index::sample(rng, candidates.len(), take)
        .iter()
        .map(|i| candidates[i])
        .collect();
    let weight = candidates.len() as f64 / take as f64;
    let parts = picks
        .par_iter()
        .map(|&(img, p)| {
            let mut g = vec![0.0; g_enc.len()];
            let energy = codec.encoder().jacobian_energy_grad(dataset[img].patch(p), 1.0, &mut g)?;
            let term = crlb_transmission_term(energy, semantic_noise, noise_variance)?;
            Ok((term, energy, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut total, mut slope) = (0.0, 0.0);
    for (term, energy, g) in parts {
        total += weight * term;
        slope += weight / energy;
        let scale = -weight * term / energy;
        for (a, b) in g_enc.iter_mut().zip(&g) {
            *a += scale * b;
        }
    }
    Ok((total, slope))
}

fn check_dataset(dataset: &[PatchSource], shape: &CodecShape) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::arg("empty training set"));
    }
    if let Some(s) = dataset.iter().find(|s| s.patch_len() != shape.patch_len) {
        return Err(Error::dim(format!(
            "training patch length {} vs codec {}",
            s.patch_len(),
            shape.patch_len
        )));
    }
    Ok(())
}

/// Fits the full-precision codec: no masking, no quantization,
/// reconstruction loss only, same simulated link as [`train`].
pub fn pretrain_ideal(
    dataset: &[PatchSource],
    shape: CodecShape,
    config: &TrainingConfig,
) -> Result<(SemanticCodec, Vec<LossRecord>)> {
    config.validate()?;
    check_dataset(dataset, &shape)?;
    let mut codec = SemanticCodec::new(shape, false, config.seed)?;
    codec.init_tokens(dataset, config.seed.wrapping_add(1))?;
    let history = run_epochs(
        &mut codec,
        dataset,
        config,
        Objective {
            ideal: None,
            masking_ratio: 0.0,
            with_bound: false,
            stream: 1,
        },
    )?;
    Ok((codec, history))
}

/// Trains `codec` against the full objective, using `ideal` as the
/// semantic-noise reference. Zero epochs return `codec` unchanged.
pub fn train(
    codec: SemanticCodec,
    ideal: &SemanticCodec,
    dataset: &[PatchSource],
    config: &TrainingConfig,
) -> Result<(SemanticCodec, Vec<LossRecord>)> {
    config.validate()?;
    check_dataset(dataset, codec.shape())?;
    if ideal.feature_len() != codec.feature_len() || ideal.patch_len() != codec.patch_len() {
        return Err(Error::dim("ideal and constrained codecs differ in shape"));
    }
    let mut codec = codec;
    let history = run_epochs(
        &mut codec,
        dataset,
        config,
        Objective {
            ideal: Some(ideal),
            masking_ratio: config.masking_ratio,
            with_bound: true,
            stream: 2,
        },
    )?;
    Ok((codec, history))
}

/// Pretrains the ideal codec, then trains a quantized copy of it.
pub fn train_pair(dataset: &[PatchSource], shape: CodecShape, config: &TrainingConfig) -> Result<TrainedCodecs> {
    let (ideal, ideal_history) = pretrain_ideal(dataset, shape, config)?;
    let start = ideal.clone().with_quantization(true);
    let (constrained, history) = train(start, &ideal, dataset, config)?;
    Ok(TrainedCodecs {
        ideal,
        constrained,
        ideal_history,
        history,
    })
}

/// Per-pixel MSE of `codec` on `dataset` through the simulated training link,
/// dropping `masking_ratio` of the patches of each image at random.
pub fn held_out_mse(
    codec: &SemanticCodec,
    dataset: &[PatchSource],
    masking_ratio: f64,
    snr_db: f64,
    seed: u64,
) -> Result<f64> {
    check_dataset(dataset, codec.shape())?;
    let noise_variance = 10f64.powf(-snr_db / 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut count) = (0.0, 0usize);
    for src in dataset {
        let mask = split_mask(src.len(), masking_ratio, &mut rng);
        for (s, &dropped) in src.patches().iter().zip(&mask) {
            let rec = if dropped {
                let (k, _) = codec.assign_token(s)?;
                codec.codebook().tokens[k].clone()
            } else {
                let sent = codec.encode_symbols(s)?;
                let (received, _) = simulate_training_link(&sent, noise_variance, &mut rng);
                codec.decode_feature(&received)?
            };
            sum += s.iter().zip(&rec).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            count += s.len();
        }
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::corpus::toy_corpus;
    use crate::source::patchify;

    fn corpus(n: usize, seed: u64) -> Vec<PatchSource> {
        toy_corpus(n, 16, seed).iter().map(|im| patchify(im, 4).unwrap()).collect()
    }

    fn shape() -> CodecShape {
        CodecShape {
            patch_len: 16,
            feature_len: 16,
            token_count: 4,
            ..CodecShape::default()
        }
    }

    fn config(epochs: usize) -> TrainingConfig {
        TrainingConfig {
            epochs,
            batch_size: 4,
            seed: 5,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn zero_epochs_is_identity() {
        let data = corpus(4, 1);
        let c = SemanticCodec::new(shape(), true, 1).unwrap();
        let (out, hist) = train(c.clone(), &c, &data, &config(0)).unwrap();
        assert_eq!(out, c);
        assert!(hist.is_empty());
    }

    #[test]
    fn no_masking_means_no_token_bound() {
        let data = corpus(4, 2);
        let c = SemanticCodec::new(shape(), true, 1).unwrap();
        let codec = c.clone();
        let steps: Vec<ImageStep> = data
            .iter()
            .map(|s| image_step(&codec, Some(&c), s, 0.0, 0.1, 3).unwrap())
            .collect();
        let mut g = vec![0.0; 4 * 16];
        assert_eq!(synonymous_bound(&codec, &steps, 0.5, &mut g), (0.0, 0.0));
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let data = corpus(16, 3);
        let cfg = config(30);
        let a = train_pair(&data, shape(), &cfg).unwrap();
        assert_eq!(a.history.len(), 30);
        assert!(a.history.last().unwrap().total < a.history[0].total);
        assert!(a.ideal_history.last().unwrap().total < a.ideal_history[0].total);
        let b = train_pair(&data, shape(), &cfg).unwrap();
        assert_eq!(a.constrained, b.constrained);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn ideal_reference_gives_zero_noise_when_identical() {
        let data = corpus(2, 4);
        let c = SemanticCodec::new(shape(), false, 2).unwrap();
        let s = image_step(&c, Some(&c), &data[0], 0.5, 0.1, 1).unwrap();
        assert_eq!(s.resid_sq, 0.0);
        assert!(s.resid_count > 0);
    }

    #[test]
    fn loss_csv_layout() {
        let recs = vec![LossRecord {
            epoch: 1,
            bound: 0.5,
            reconstruction: 1.0,
            total: 1.5,
            semantic_noise: 0.0,
        }];
        let mut out = Vec::new();
        write_loss_csv(&recs, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "epoch,bound,reconstruction,total\n1,0.5,1,1.5\n");
    }

    #[test]
    fn link_simulation_shrinks_toward_zero_at_low_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = vec![0.5; 8];
        let (y, a) = simulate_training_link(&x, 0.0, &mut rng);
        assert_eq!((y, a), (x.clone(), 1.0));
        let (_, a) = simulate_training_link(&x, 100.0, &mut rng);
        assert!(a < 0.5);
    }
}
