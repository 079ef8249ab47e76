//! One frame end to end.
//!
//! Hybrid scheme: patchify, plan, encode and map the selected patches, bit-map
//! the whole image and send only LDPC parity, multiplex, fade, equalize,
//! decode the analog reconstruction `s_hat`, bit-map `s_hat` as side
//! information for the parity decoder and rebuild the corrected output
//! `s_bar`. A patch whose code blocks did not all converge keeps its `s_hat`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{trial_seed, ExperimentConfig, InfeasiblePolicy, Reconstruction, Scheme};
use crate::alloc::audit::audit;
use crate::alloc::{parity_bits_per_block, plan, AllocationPlan, DigitalParams};
use crate::channel::{equalize, multiplex, ChannelRealization, FrameMetadata, HybridFrame, DEFAULT_H_FLOOR};
use crate::codec::checkpoint;
use crate::codec::train::train_pair;
use crate::codec::{analog_map, analog_unmap, l2_norm, lmmse_shrink, SemanticCodec, TokenCodebook, DEFAULT_FD_STEP};
use crate::crlb::{crlb_synonymous_term, crlb_transmission_term, empirical_distortion, DistortionReport};
use crate::digital::dsc::FLIP_PROB_FLOOR;
use crate::digital::quant::{bit_unmap_patch, bit_unmap_patch_with_side};
use crate::digital::{
    bit_map, dsc_decode, hard_decisions, qpsk_demodulate_llr, qpsk_modulate, LdpcCode, QuantizerSpec, SideInfoLlr,
};
use crate::error::{Error, Result};
use crate::metrics::{quality, QualityReport};
use crate::source::{depatchify_clamped, patchify, ImageGray, PatchSource};

/// Salt that keeps calibration channels apart from evaluation channels.
const CALIBRATION_SALT: u64 = 0x5eed_ca1b;

/// Side-information flip probabilities per bit position within a patch,
/// measured separately for transmitted and token-replaced patches at each
/// calibration SNR.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SideInfoTable {
    pub snr_db: Vec<f64>,
    pub transmitted: Vec<Vec<f64>>,
    pub dropped: Vec<Vec<f64>>,
}

impl SideInfoTable {
    /// Probabilities at `snr_db`, linearly interpolated between calibration
    /// points and held constant beyond the ends.
    pub fn at(&self, snr_db: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.snr_db.len();
        if n == 0 {
            return Err(Error::arg("side-information table is empty"));
        }
        let hi = self.snr_db.partition_point(|&s| s < snr_db);
        if hi == 0 {
            return Ok((self.transmitted[0].clone(), self.dropped[0].clone()));
        }
        if hi == n {
            return Ok((self.transmitted[n - 1].clone(), self.dropped[n - 1].clone()));
        }
        let lo = hi - 1;
        let w = (snr_db - self.snr_db[lo]) / (self.snr_db[hi] - self.snr_db[lo]);
        let lerp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect();
        Ok((
            lerp(&self.transmitted[lo], &self.transmitted[hi]),
            lerp(&self.dropped[lo], &self.dropped[hi]),
        ))
    }
}

/// Parity-decoder outcome of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DscStats {
    pub blocks: usize,
    pub converged: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReport {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub trial: u64,
    pub seed: u64,
    pub image_index: usize,
    /// Analog-path reconstruction against the source.
    pub semantic: QualityReport,
    /// Final output against the source.
    pub corrected: QualityReport,
    pub distortion: Option<DistortionReport>,
    pub plan: Option<AllocationPlan>,
    pub audit_passed: bool,
    /// The digital part did not fit the budget and was left out.
    pub digital_dropped: bool,
    pub dsc: DscStats,
    #[serde(skip)]
    pub semantic_image: ImageGray,
    #[serde(skip)]
    pub corrected_image: ImageGray,
}

/// Everything a run needs that does not change between trials.
#[derive(Debug, Clone)]
pub struct LinkContext {
    pub config: ExperimentConfig,
    pub images: Vec<ImageGray>,
    pub codec: SemanticCodec,
    pub ideal: Option<SemanticCodec>,
    pub quantizer: QuantizerSpec,
    pub baseline_quantizer: QuantizerSpec,
    pub dsc_code: LdpcCode,
    pub baseline_code: LdpcCode,
    pub side_info: SideInfoTable,
    /// Encoder input-gradient energy per evaluation image and patch.
    pub gradient_energy: Vec<Vec<f64>>,
}

/// Analog part of a hybrid frame plus the received parity LLRs.
struct FrameOutcome {
    plan: AllocationPlan,
    digital_dropped: bool,
    s_hat: Vec<Vec<f64>>,
    transmitted: Vec<bool>,
    distortion: Option<DistortionReport>,
    parity_llr: Vec<f64>,
}

fn clamp_unit(p: Vec<f64>) -> Vec<f64> {
    p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

fn symbol_blocks(symbols: Vec<Complex64>, count: usize, len: usize) -> Vec<Vec<Complex64>> {
    let mut padded = symbols;
    padded.resize(count * len, Complex64::new(0.0, 0.0));
    padded.chunks(len).map(<[Complex64]>::to_vec).collect()
}

fn demodulate(blocks: &[Vec<Complex64>], gains: &[Complex64], amplitude: f64, noise: f64, keep: usize) -> Result<Vec<f64>> {
    let mut llr = Vec::with_capacity(2 * blocks.iter().map(Vec::len).sum::<usize>());
    for (b, &h) in blocks.iter().zip(gains) {
        llr.extend(qpsk_demodulate_llr(b, h * amplitude, noise)?);
    }
    llr.truncate(keep);
    Ok(llr)
}

impl LinkContext {
    /// Loads the evaluation images and the codecs named by `config`, training
    /// them when no checkpoint is given.
    pub fn build(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (codec, ideal) = match &config.codec.checkpoint {
            Some(path) => {
                let codec = checkpoint::load(path)?;
                let ideal = config.codec.ideal_checkpoint.as_ref().map(checkpoint::load).transpose()?;
                (codec, ideal)
            }
            None => {
                let train = training_sources(&config)?;
                let pair = train_pair(&train, config.codec.shape, &config.training)?;
                (pair.constrained, Some(pair.ideal))
            }
        };
        Self::with_codecs(config, codec, ideal)
    }

    /// Fits the quantizers, builds the LDPC codes and calibrates the side
    /// information for already trained codecs.
    pub fn with_codecs(config: ExperimentConfig, codec: SemanticCodec, ideal: Option<SemanticCodec>) -> Result<Self> {
        config.validate()?;
        let l = config.patch_edge * config.patch_edge;
        for c in std::iter::once(&codec).chain(ideal.as_ref()) {
            if c.patch_len() != l {
                return Err(Error::Config(format!(
                    "codec patch length {} does not match the {}-pixel patch edge",
                    c.patch_len(),
                    config.patch_edge
                )));
            }
        }
        let images = config.corpus.load()?;
        let train = training_sources(&config)?;
        let fit = |bits| {
            QuantizerSpec::fit(
                train.iter().flat_map(|s| s.patches().iter().map(Vec::as_slice)),
                config.patch_edge,
                bits,
                config.digital.clip_percentile,
            )
        };
        let mut quantizer = fit(config.digital.bits_per_coefficient)?.with_mid_tread(config.digital.mid_tread);
        if let Some(bands) = config.digital.bands {
            quantizer = quantizer.with_band_count(bands)?;
        }
        let baseline_quantizer = fit(config.baseline.bits_per_coefficient)?;
        let d = &config.digital;
        let dsc_code = LdpcCode::standard(
            d.block_info_bits as usize,
            parity_bits_per_block(d.block_info_bits, d.code_rate) as usize,
            d.ldpc_seed,
        )?;
        let b = &config.baseline;
        let baseline_code = LdpcCode::standard(b.info_bits, b.parity_bits, d.ldpc_seed.wrapping_add(1))?;
        let gradient_energy = images
            .par_iter()
            .map(|im| {
                let src = patchify(im, config.patch_edge)?;
                src.patches()
                    .iter()
                    .map(|p| codec.input_gradient_energy(p, DEFAULT_FD_STEP))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ctx = Self {
            config,
            images,
            codec,
            ideal,
            quantizer,
            baseline_quantizer,
            dsc_code,
            baseline_code,
            side_info: SideInfoTable::default(),
            gradient_energy,
        };
        if ctx.config.schemes.contains(&Scheme::DaEsemcom) {
            ctx.side_info = ctx.calibrate()?;
        }
        Ok(ctx)
    }

    /// Measures how often `bit_map(s_hat)` disagrees with `bit_map(s)` on
    /// the calibration images at every SNR of the grid.
    pub fn calibrate(&self) -> Result<SideInfoTable> {
        let images = self.config.calibration_corpus.load()?;
        let sources = images
            .iter()
            .map(|im| patchify(im, self.config.patch_edge))
            .collect::<Result<Vec<_>>>()?;
        let mut grid = self.config.snr_db.clone();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let stride = self.quantizer.patch_stride();
        let mut table = SideInfoTable::default();
        for &snr in &grid {
            let counts = (0..self.config.digital.calibration_trials.max(1))
                .into_par_iter()
                .map(|c| {
                    let src = &sources[c % sources.len()];
                    let seed = trial_seed(self.config.seed ^ CALIBRATION_SALT, snr, c as u64);
                    let out = self.hybrid_frame(src, snr, seed, true, None)?;
                    let truth = bit_map(src, &self.quantizer)?;
                    let guess = bit_map(&src.with_patches(out.s_hat)?, &self.quantizer)?;
                    // flips and totals per position, transmitted then dropped
                    let mut n = vec![0usize; 4 * stride];
                    for (p, tx) in out.transmitted.iter().enumerate() {
                        let base = if *tx { 0 } else { 2 * stride };
                        for j in 0..stride {
                            let k = p * stride + j;
                            n[base + j] += usize::from(truth[k] != guess[k]);
                            n[base + stride + j] += 1;
                        }
                    }
                    Ok(n)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total = vec![0usize; 4 * stride];
            for n in &counts {
                for (t, v) in total.iter_mut().zip(n) {
                    *t += v;
                }
            }
            let rate = |base: usize| -> Vec<f64> {
                (0..stride)
                    .map(|j| (total[base + j] as f64 + 0.5) / (total[base + stride + j] as f64 + 1.0))
                    .collect()
            };
            table.snr_db.push(snr);
            table.transmitted.push(rate(0));
            table.dropped.push(rate(2 * stride));
        }
        Ok(table)
    }

    /// Token assignment and allocation plan of one frame, falling back to an
    /// analog-only plan when the digital part does not fit and the policy
    /// allows it. Also returns the noise power at `snr_db`.
    fn plan_frame(
        &self,
        src: &PatchSource,
        snr_db: f64,
        digital: bool,
    ) -> Result<(AllocationPlan, bool, TokenCodebook, f64)> {
        let cfg = &self.config;
        let codec = &self.codec;
        let budget = cfg.budget.at_snr(snr_db)?;
        let book = codec.codebook().assign(src)?;
        let variances: Vec<f64> = src.stats().iter().map(|s| s.variance).collect();
        let modulation = cfg.modulation()?;
        let make_plan = |info_bits| {
            let params = DigitalParams {
                info_bits,
                block_info_bits: cfg.digital.block_info_bits,
                code_rate: cfg.digital.code_rate,
                block_symbols: cfg.digital.block_symbols,
                modulation,
                sizing: Default::default(),
            };
            plan(&budget, &book.fit_coeffs, &variances, &params, codec.feature_len(), codec.codebook().len())
        };
        let info_bits = if digital { (src.len() * self.quantizer.patch_stride()) as u64 } else { 0 };
        let (plan, dropped) = match make_plan(info_bits) {
            Ok(p) => (p, false),
            Err(Error::Infeasible { .. }) if digital && cfg.on_infeasible == InfeasiblePolicy::AnalogOnly => {
                (make_plan(0)?, true)
            }
            Err(e) => return Err(e),
        };
        Ok((plan, dropped, book, budget.noise_power))
    }

    /// Distortion bound of the analog path for evaluation image
    /// `image_index` at `snr_db`; needs no channel draw.
    pub fn bound(&self, image_index: usize, snr_db: f64, digital: bool) -> Result<DistortionReport> {
        let src = patchify(&self.images[image_index], self.config.patch_edge)?;
        let (plan, _, book, noise) = self.plan_frame(&src, snr_db, digital)?;
        self.bound_report(&src, &plan, &book.fit_coeffs, &self.gradient_energy[image_index], noise)
    }

    /// Plans, transmits and receives one hybrid frame. With `digital` off the
    /// frame carries only analog blocks and the whole budget goes to them.
    fn hybrid_frame(
        &self,
        src: &PatchSource,
        snr_db: f64,
        seed: u64,
        digital: bool,
        gradient_energy: Option<&[f64]>,
    ) -> Result<FrameOutcome> {
        let codec = &self.codec;
        let (plan, digital_dropped, book, noise) = self.plan_frame(src, snr_db, digital)?;

        // analog transmitter
        let half = codec.feature_len() / 2;
        let energies = plan.patch_energies();
        let mut analog = Vec::with_capacity(plan.transmit_count);
        let mut norms = Vec::with_capacity(plan.transmit_count);
        for (&i, &e) in plan.transmit_indices.iter().zip(&energies) {
            let f = codec.encode_symbols(src.patch(i))?;
            norms.push(l2_norm(&f));
            analog.push(analog_map(&f, e / half as f64)?);
        }
        let metadata = FrameMetadata {
            patch_count: src.len(),
            transmit_indices: plan.transmit_indices.clone(),
            dropped_indices: plan.dropped_indices.clone(),
            token_assignment: plan.dropped_indices.iter().map(|&i| book.assignment[i]).collect(),
            norms: norms.clone(),
            scaling: plan.scaling.clone(),
        };

        // digital transmitter: parity only
        let k = plan.digital.block_count as usize;
        let v = plan.digital.block_symbols as usize;
        let parity_total = plan.digital.parity_bits as usize;
        let amplitude = if parity_total > 0 { (2.0 * plan.digital.power / parity_total as f64).sqrt() } else { 0.0 };
        let mut digital_blocks = Vec::new();
        if k > 0 {
            let n = self.dsc_code.info_bits();
            let mut bits = bit_map(src, &self.quantizer)?;
            bits.resize(bits.len().div_ceil(n) * n, 0);
            let mut parity = Vec::with_capacity(parity_total);
            for block in bits.chunks(n) {
                parity.extend(self.dsc_code.encode_parity(block)?);
            }
            let symbols = qpsk_modulate(&parity)?.into_iter().map(|s| s * amplitude).collect();
            digital_blocks = symbol_blocks(symbols, k, v);
        }

        let frame = multiplex(&plan, digital_blocks, analog, metadata)?;
        let channel = ChannelRealization::draw(plan.transmit_count, k, noise, seed)?;
        let received: HybridFrame = channel.apply(&frame)?;

        // analog receiver
        let mut inputs: Vec<Option<Vec<f64>>> = vec![None; src.len()];
        for (j, &i) in plan.transmit_indices.iter().enumerate() {
            let gain = energies[j] / half as f64;
            let eq = equalize(&received.analog_blocks[j], channel.analog_gains[j], noise, DEFAULT_H_FLOOR);
            let feature = if eq.erased {
                vec![0.0; codec.feature_len()]
            } else {
                let raw = analog_unmap(&eq.symbols, gain, norms[j])?;
                let scale_sq = norms[j] * norms[j] / (half as f64 * gain);
                let signal = norms[j] * norms[j] / codec.feature_len() as f64;
                lmmse_shrink(&raw, signal, scale_sq * eq.noise_variance / 2.0)
            };
            inputs[i] = Some(codec.decode_feature(&feature)?);
        }
        let mut transmitted = vec![false; src.len()];
        let mut s_hat = Vec::with_capacity(src.len());
        for (i, rec) in inputs.into_iter().enumerate() {
            transmitted[i] = rec.is_some();
            let patch = match rec {
                Some(p) => p,
                None => codec.codebook().tokens[book.assignment[i]].clone(),
            };
            s_hat.push(clamp_unit(patch));
        }

        let distortion = match gradient_energy {
            Some(g) => Some(self.distortion(src, &plan, &book.fit_coeffs, &s_hat, g, noise)?),
            None => None,
        };
        let parity_llr = if k > 0 {
            demodulate(&received.digital_blocks, &channel.digital_gains, amplitude, noise, parity_total)?
        } else {
            Vec::new()
        };
        Ok(FrameOutcome {
            plan,
            digital_dropped,
            s_hat,
            transmitted,
            distortion,
            parity_llr,
        })
    }

    /// Bound on the analog-path distortion, with the per-patch channel noise
    /// taken at the nominal (unfaded) link SNR.
    fn bound_report(
        &self,
        src: &PatchSource,
        plan: &AllocationPlan,
        rho_sq: &[f64],
        gradient_energy: &[f64],
        noise: f64,
    ) -> Result<DistortionReport> {
        let half = self.codec.feature_len() as f64 / 2.0;
        let sem = self.codec.semantic_noise();
        let mut bound_transmission = 0.0;
        for (&i, e) in plan.transmit_indices.iter().zip(plan.patch_energies()) {
            bound_transmission += crlb_transmission_term(gradient_energy[i], sem, noise * half / e)?;
        }
        let bound_synonymous: f64 = plan
            .dropped_indices
            .iter()
            .map(|&i| crlb_synonymous_term(sem, src.patch_len(), rho_sq[i]))
            .sum();
        Ok(DistortionReport {
            bound_transmission,
            bound_synonymous,
            bound_total: bound_transmission + bound_synonymous,
            ..Default::default()
        })
    }

    /// Empirical patch-domain distortion of `s_hat` next to its bound.
    fn distortion(
        &self,
        src: &PatchSource,
        plan: &AllocationPlan,
        rho_sq: &[f64],
        s_hat: &[Vec<f64>],
        gradient_energy: &[f64],
        noise: f64,
    ) -> Result<DistortionReport> {
        let bound = self.bound_report(src, plan, rho_sq, gradient_energy, noise)?;
        let pick = |idx: &[usize], from: &[Vec<f64>]| idx.iter().map(|&i| from[i].clone()).collect::<Vec<_>>();
        let orig = src.patches();
        let (tx, dr) = (&plan.transmit_indices, &plan.dropped_indices);
        let empirical = empirical_distortion(&pick(tx, orig), &pick(tx, s_hat), &pick(dr, orig), &pick(dr, s_hat))?;
        Ok(bound.with_empirical(&empirical))
    }

    /// Decodes the parity against `bit_map(s_hat)` and rebuilds every patch
    /// whose blocks all converged.
    fn correct(
        &self,
        src: &PatchSource,
        out: &FrameOutcome,
        snr_db: f64,
    ) -> Result<(Vec<Vec<f64>>, DscStats)> {
        let n = self.dsc_code.info_bits();
        let m = self.dsc_code.parity_bits();
        let stride = self.quantizer.patch_stride();
        let (p_tx, p_drop) = self.side_info.at(snr_db)?;
        let mut side = bit_map(&src.with_patches(out.s_hat.clone())?, &self.quantizer)?;
        let real_bits = side.len();
        side.resize(real_bits.div_ceil(n) * n, 0);
        let flip: Vec<f64> = (0..side.len())
            .map(|k| {
                if k >= real_bits {
                    return FLIP_PROB_FLOOR;
                }
                let table = if out.transmitted[k / stride] { &p_tx } else { &p_drop };
                table[k % stride]
            })
            .collect();
        let decoded = side
            .chunks(n)
            .zip(flip.chunks(n))
            .zip(out.parity_llr.chunks(m))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|((bits, p), parity)| {
                let info = SideInfoLlr::new(bits.to_vec(), p.to_vec())?;
                dsc_decode(parity, &info, &self.dsc_code, self.config.digital.max_iters)
            })
            .collect::<Result<Vec<_>>>()?;
        let stats = DscStats {
            blocks: decoded.len(),
            converged: decoded.iter().filter(|d| d.converged).count(),
            iterations: decoded.iter().map(|d| d.iterations).sum(),
        };
        let bits: Vec<u8> = decoded.iter().flat_map(|d| d.info.iter().copied()).collect();
        let mut s_bar = Vec::with_capacity(src.len());
        for p in 0..src.len() {
            let (lo, hi) = (p * stride, (p + 1) * stride);
            let ok = (lo / n..=(hi - 1) / n).all(|b| decoded[b].converged);
            s_bar.push(match (ok, self.config.digital.reconstruction) {
                (false, _) => out.s_hat[p].clone(),
                (true, Reconstruction::BinCenter) => bit_unmap_patch(&bits[lo..hi], &self.quantizer)?,
                // each step projects onto a convex set holding the source
                (true, Reconstruction::SideClamp) => bit_unmap_patch_with_side(&bits[lo..hi], &self.quantizer, &out.s_hat[p])?
                    .into_iter()
                    .map(|v| v.clamp(0.0, 1.0))
                    .collect(),
            });
        }
        Ok((s_bar, stats))
    }

    /// Digital-only baseline: systematic codewords over the whole budget,
    /// hard decisions wherever a codeword fails.
    fn baseline(&self, src: &PatchSource, snr_db: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
        let cfg = &self.config;
        let code = &self.baseline_code;
        let noise = cfg.budget.noise_power(snr_db)?;
        let k = code.info_bits();
        let mut bits = bit_map(src, &self.baseline_quantizer)?;
        let real_bits = bits.len();
        bits.resize(real_bits.div_ceil(k) * k, 0);
        let mut coded = Vec::with_capacity(bits.len() / k * code.codeword_len());
        for block in bits.chunks(k) {
            coded.extend(code.encode(block)?);
        }
        let symbol_count = coded.len() / 2;
        if symbol_count as u64 > cfg.budget.total_bandwidth {
            return Err(Error::Infeasible {
                resource: "bandwidth",
                demand: symbol_count as f64,
                budget: cfg.budget.total_bandwidth as f64,
                shortfall: (symbol_count as u64 - cfg.budget.total_bandwidth) as f64,
            });
        }
        let amplitude = (cfg.budget.total_power / symbol_count as f64).sqrt();
        let v = cfg.digital.block_symbols as usize;
        let blocks_n = symbol_count.div_ceil(v);
        let symbols = qpsk_modulate(&coded)?.into_iter().map(|s| s * amplitude).collect();
        let frame = HybridFrame {
            digital_blocks: symbol_blocks(symbols, blocks_n, v),
            analog_blocks: Vec::new(),
            metadata: FrameMetadata::default(),
        };
        let channel = ChannelRealization::draw(0, blocks_n, noise, seed)?;
        let received = channel.apply(&frame)?;
        let llr = demodulate(&received.digital_blocks, &channel.digital_gains, amplitude, noise, coded.len())?;
        let mut out = Vec::with_capacity(bits.len());
        for cw in llr.chunks(code.codeword_len()) {
            let bp = code.decode(cw, cfg.digital.max_iters)?;
            if bp.converged {
                out.extend_from_slice(&bp.codeword[..k]);
            } else {
                out.extend(hard_decisions(&cw[..k]));
            }
        }
        let stride = self.baseline_quantizer.patch_stride();
        out[..real_bits].chunks(stride).map(|b| bit_unmap_patch(b, &self.baseline_quantizer)).collect()
    }
}

pub(crate) fn training_sources(config: &ExperimentConfig) -> Result<Vec<PatchSource>> {
    config
        .train_corpus
        .load()?
        .iter()
        .map(|im| patchify(im, config.patch_edge))
        .collect()
}

fn image_of(src: &PatchSource, patches: Vec<Vec<f64>>) -> Result<ImageGray> {
    depatchify_clamped(&src.with_patches(patches)?)
}

/// Runs trial `trial` of `scheme` at `snr_db`. The image is
/// `trial mod corpus size`; the channel seed comes from [`trial_seed`].
pub fn run_link(ctx: &LinkContext, scheme: Scheme, snr_db: f64, trial: u64) -> Result<LinkReport> {
    let image_index = (trial % ctx.images.len() as u64) as usize;
    let image = &ctx.images[image_index];
    let src = patchify(image, ctx.config.patch_edge)?;
    let seed = trial_seed(ctx.config.seed, snr_db, trial);
    let energies = Some(ctx.gradient_energy[image_index].as_slice());
    let mut distortion = None;
    let mut frame_plan = None;
    let mut audit_passed = true;
    let mut digital_dropped = false;
    let mut dsc = DscStats::default();
    let (s_hat, s_bar) = match scheme {
        Scheme::DaEsemcom | Scheme::AnalogOnly => {
            let digital = scheme == Scheme::DaEsemcom;
            let out = ctx.hybrid_frame(&src, snr_db, seed, digital, energies)?;
            let s_bar = if out.plan.digital.block_count > 0 {
                let (s_bar, stats) = ctx.correct(&src, &out, snr_db)?;
                dsc = stats;
                s_bar
            } else {
                out.s_hat.clone()
            };
            audit_passed = audit(&out.plan).passed();
            digital_dropped = out.digital_dropped;
            distortion = out.distortion;
            frame_plan = Some(out.plan);
            (out.s_hat, s_bar)
        }
        Scheme::DigitalOnlyBaseline => {
            let rec = ctx.baseline(&src, snr_db, seed)?;
            (rec.clone(), rec)
        }
        Scheme::IdealSemantic => {
            let ideal = ctx
                .ideal
                .as_ref()
                .ok_or_else(|| Error::Config("ideal_semantic needs a full-precision codec checkpoint".into()))?;
            let rec = src
                .patches()
                .iter()
                .map(|p| Ok(clamp_unit(ideal.decode_feature(&ideal.encode(p)?)?)))
                .collect::<Result<Vec<_>>>()?;
            (rec.clone(), rec)
        }
    };
    let semantic_image = image_of(&src, s_hat)?;
    let corrected_image = image_of(&src, s_bar)?;
    Ok(LinkReport {
        scheme,
        snr_db,
        trial,
        seed,
        image_index,
        semantic: quality(image, &semantic_image)?,
        corrected: quality(image, &corrected_image)?,
        distortion,
        plan: frame_plan,
        audit_passed,
        digital_dropped,
        dsc,
        semantic_image,
        corrected_image,
    })
}
