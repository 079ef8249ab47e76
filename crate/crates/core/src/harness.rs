//! Config-driven experiment runner: end-to-end link simulation, SNR sweeps,
//! baselines and output files.
//!
//! A run is fully determined by an [`ExperimentConfig`] and its master seed.
//! Every trial draws its channel from a seed derived from the master seed,
//! the SNR and the trial index, so the same trial sees the same fades and
//! noise under every scheme.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alloc::{BudgetConfig, ModulationSpec};
use crate::channel::snr_to_noise_variance;
use crate::codec::{CodecShape, TrainingConfig};
use crate::error::{Error, Result};
use crate::source::corpus::toy_corpus;
use crate::source::{load_image, ImageGray};

pub mod commands;
pub mod link;
pub mod plot;
pub mod sweep;

pub use commands::{cmd_audit, cmd_crlb, cmd_train, crlb_csv, write_sweep, CrlbRow, TrainOutputs};
pub use link::{run_link, DscStats, LinkContext, LinkReport, SideInfoTable};
pub use sweep::{sweep, SweepResult, SweepRow};

/// Transmission scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Analog semantic features plus DSC parity bits.
    DaEsemcom,
    /// Analog semantic features only; the whole budget goes to them.
    AnalogOnly,
    /// Separate source/channel coding stand-in: finer DCT quantization,
    /// full LDPC codewords and QPSK, no semantic path.
    DigitalOnlyBaseline,
    /// Full-precision codec, every patch sent, features delivered without
    /// noise.
    IdealSemantic,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::DaEsemcom,
        Scheme::AnalogOnly,
        Scheme::DigitalOnlyBaseline,
        Scheme::IdealSemantic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::DaEsemcom => "da_esemcom",
            Scheme::AnalogOnly => "analog_only",
            Scheme::DigitalOnlyBaseline => "digital_only_baseline",
            Scheme::IdealSemantic => "ideal_semantic",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

/// Where images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusSpec {
    /// Seeded synthetic scenes.
    Toy { count: usize, size: usize, seed: u64 },
    /// Every `.pgm` file of a directory, in file-name order.
    Directory { path: PathBuf },
}

impl CorpusSpec {
    pub fn load(&self) -> Result<Vec<ImageGray>> {
        let images = match self {
            CorpusSpec::Toy { count, size, seed } => toy_corpus(*count, *size, *seed),
            CorpusSpec::Directory { path } => {
                let mut files: Vec<PathBuf> = fs::read_dir(path)
                    .map_err(|e| Error::io(path, e))?
                    .filter_map(|entry| entry.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
                    .collect();
                files.sort();
                files.iter().map(load_image).collect::<Result<Vec<_>>>()?
            }
        };
        if images.is_empty() {
            return Err(Error::Config("corpus is empty".into()));
        }
        Ok(images)
    }
}

/// Codec geometry and where trained weights come from. Without checkpoints
/// the codecs are trained in process from `train_corpus`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecSpec {
    pub shape: CodecShape,
    /// Constrained (quantized) codec.
    pub checkpoint: Option<PathBuf>,
    /// Full-precision codec, needed by `ideal_semantic`.
    pub ideal_checkpoint: Option<PathBuf>,
}

/// Frame budget; the noise power follows from the SNR of each run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetSpec {
    /// Energy per frame.
    pub total_power: f64,
    /// Complex channel uses per frame.
    pub total_bandwidth: u64,
    /// Target QPSK symbol error probability of the digital part.
    pub error_threshold: f64,
    pub charge_metadata: bool,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        Self {
            total_power: 4096.0,
            total_bandwidth: 4096,
            error_threshold: 0.1,
            charge_metadata: true,
        }
    }
}

impl BudgetSpec {
    /// Mean energy per channel use if the whole budget were spread evenly.
    pub fn energy_per_use(&self) -> f64 {
        self.total_power / self.total_bandwidth as f64
    }

    /// Noise power per complex use at `snr_db` relative to
    /// [`BudgetSpec::energy_per_use`].
    pub fn noise_power(&self, snr_db: f64) -> Result<f64> {
        snr_to_noise_variance(snr_db, self.energy_per_use())
    }

    pub fn at_snr(&self, snr_db: f64) -> Result<BudgetConfig> {
        let budget = BudgetConfig {
            total_power: self.total_power,
            total_bandwidth: self.total_bandwidth,
            error_threshold: self.error_threshold,
            noise_power: self.noise_power(snr_db)?,
            charge_metadata: self.charge_metadata,
        };
        budget.validate()?;
        Ok(budget)
    }
}

/// Digital branch of the hybrid scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DigitalSpec {
    pub bits_per_coefficient: u32,
    /// Information bits per LDPC block.
    pub block_info_bits: u64,
    /// Parity bits per block are `block_info_bits * code_rate`.
    pub code_rate: f64,
    /// Complex symbols per fading block.
    pub block_symbols: u64,
    pub ldpc_seed: u64,
    pub max_iters: usize,
    /// Quantile of the centered DCT magnitudes used as the band clip.
    pub clip_percentile: f64,
    /// Frames per SNR used to measure side-information flip rates.
    pub calibration_trials: usize,
    /// Leading zigzag bands carried by the digital layer; `None` carries all.
    pub bands: Option<usize>,
    /// Center one quantizer bin on each band mean.
    pub mid_tread: bool,
    pub reconstruction: Reconstruction,
}

/// How a patch is rebuilt from successfully decoded bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reconstruction {
    /// Bin centers; uncarried bands take the band mean.
    BinCenter,
    /// Side-information coefficients clamped into the decoded bins.
    #[default]
    SideClamp,
}

impl Default for DigitalSpec {
    fn default() -> Self {
        Self {
            bits_per_coefficient: 3,
            block_info_bits: 256,
            code_rate: 0.875,
            block_symbols: 512,
            ldpc_seed: 17,
            max_iters: 50,
            clip_percentile: 0.995,
            calibration_trials: 32,
            bands: Some(3),
            mid_tread: true,
            reconstruction: Reconstruction::SideClamp,
        }
    }
}

/// Digital-only baseline: systematic LDPC codewords of
/// `info_bits + parity_bits` bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSpec {
    pub bits_per_coefficient: u32,
    pub info_bits: usize,
    pub parity_bits: usize,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self {
            bits_per_coefficient: 6,
            info_bits: 768,
            parity_bits: 256,
        }
    }
}

/// What to do when the digital part alone does not fit the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    /// Send the frame without its digital part.
    #[default]
    AnalogOnly,
    /// Fail the run.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Evaluation images.
    pub corpus: CorpusSpec,
    /// Images the codecs and the quantizer are fitted on.
    pub train_corpus: CorpusSpec,
    /// Images used to measure side-information reliability.
    pub calibration_corpus: CorpusSpec,
    pub patch_edge: usize,
    pub codec: CodecSpec,
    pub training: TrainingConfig,
    pub budget: BudgetSpec,
    /// Constellation order of the digital part (2, 4 or 16).
    pub modulation_order: u32,
    pub digital: DigitalSpec,
    pub baseline: BaselineSpec,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub seed: u64,
    pub on_infeasible: InfeasiblePolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSpec::Toy {
                count: 16,
                size: 32,
                seed: 999,
            },
            train_corpus: CorpusSpec::Toy {
                count: 64,
                size: 32,
                seed: 1,
            },
            calibration_corpus: CorpusSpec::Toy {
                count: 8,
                size: 32,
                seed: 4242,
            },
            patch_edge: 8,
            codec: CodecSpec::default(),
            training: TrainingConfig::default(),
            budget: BudgetSpec::default(),
            modulation_order: 4,
            digital: DigitalSpec::default(),
            baseline: BaselineSpec::default(),
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 200,
            schemes: Scheme::ALL.to_vec(),
            seed: 0,
            on_infeasible: InfeasiblePolicy::AnalogOnly,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn modulation(&self) -> Result<ModulationSpec> {
        ModulationSpec::new(self.modulation_order)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR grid must be non-empty and finite".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        if self.patch_edge == 0 || self.patch_edge * self.patch_edge != self.codec.shape.patch_len {
            return Err(Error::Config(format!(
                "patch edge {} does not match codec patch length {}",
                self.patch_edge, self.codec.shape.patch_len
            )));
        }
        self.codec.shape.validate()?;
        self.training.validate()?;
        self.budget.at_snr(0.0).map_err(|e| Error::Config(e.to_string()))?;
        self.modulation().map_err(|e| Error::Config(e.to_string()))?;
        let d = &self.digital;
        if d.block_info_bits == 0 || d.block_symbols == 0 || !(d.code_rate > 0.0 && d.code_rate < 1.0) {
            return Err(Error::Config("digital block sizes and code rate are out of range".into()));
        }
        let parity = d.block_info_bits as f64 * d.code_rate;
        if parity.fract() != 0.0 || !(parity as u64).is_multiple_of(2) {
            return Err(Error::Config(format!(
                "parity bits per block ({parity}) must be an even integer"
            )));
        }
        if !(1..=16).contains(&d.bits_per_coefficient) || !(1..=16).contains(&self.baseline.bits_per_coefficient) {
            return Err(Error::Config("bits per coefficient must be in 1..=16".into()));
        }
        if d.bands.is_some_and(|b| b == 0 || b > self.patch_edge * self.patch_edge) {
            return Err(Error::Config("digital band count must lie in 1..=L".into()));
        }
        if !(d.clip_percentile > 0.0 && d.clip_percentile <= 1.0) {
            return Err(Error::Config("clip percentile must lie in (0, 1]".into()));
        }
        let b = &self.baseline;
        if b.info_bits == 0 || b.parity_bits == 0 || !(b.info_bits + b.parity_bits).is_multiple_of(2) {
            return Err(Error::Config("baseline codeword must be non-empty with an even length".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent per-trial seeds.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Channel seed of trial `trial` at `snr_db`; shared by every scheme.
pub fn trial_seed(master: u64, snr_db: f64, trial: u64) -> u64 {
    mix64(mix64(mix64(master) ^ snr_db.to_bits()) ^ trial)
}
