//! Power and bandwidth planning for the hybrid frame.
//!
//! The digital DSC part is sized first (bits, blocks, channel uses and the
//! energy needed to hit the symbol-error target), and the analog part takes
//! what remains: a source count that fits the leftover channel uses and
//! per-patch scaling factors that exhaust the leftover energy.
//!
//! Units: `total_power` is an energy budget per frame, expressed in the same
//! unit as `noise_power` times channel uses. Bandwidth is counted in complex
//! channel uses per frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod audit;

/// `Q(x)`, the Gaussian tail probability.
pub fn gaussian_q(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of [`gaussian_q`] on `(0, 1)`, by Newton steps kept inside a
/// shrinking bisection bracket.
pub fn gaussian_q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::arg(format!("Q^-1 needs p in (0, 1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    let mut x = 0.0f64;
    for _ in 0..200 {
        let f = gaussian_q(x) - p;
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = std_normal_pdf(x);
        let mut next = if d > 0.0 { x + f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Modulation order and its bit load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ModulationSpec {
    order: u32,
}

impl ModulationSpec {
    pub const BPSK: Self = Self { order: 2 };
    pub const QPSK: Self = Self { order: 4 };
    pub const QAM16: Self = Self { order: 16 };

    pub fn new(order: u32) -> Result<Self> {
        match order {
            2 | 4 | 16 => Ok(Self { order }),
            _ => Err(Error::arg(format!("unsupported modulation order {order}"))),
        }
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.order.trailing_zeros()
    }

    pub fn label(&self) -> &'static str {
        match self.order {
            2 => "BPSK",
            4 => "QPSK",
            _ => "16QAM",
        }
    }

    fn error_prefactor(&self) -> f64 {
        2.0 * (1.0 - 1.0 / self.order as f64)
    }

    fn snr_factor(&self) -> f64 {
        let phi = self.order as f64;
        6.0 * phi.log2() / (phi * phi - 1.0)
    }
}

impl TryFrom<u32> for ModulationSpec {
    type Error = Error;
    fn try_from(order: u32) -> Result<Self> {
        Self::new(order)
    }
}

impl From<ModulationSpec> for u32 {
    fn from(m: ModulationSpec) -> u32 {
        m.order
    }
}

/// Symbol error probability for average bit energy `b_avg` over noise power `n`.
pub fn symbol_error_prob(b_avg: f64, n: f64, modulation: ModulationSpec) -> Result<f64> {
    if !(n > 0.0) {
        return Err(Error::arg(format!("noise power must be positive, got {n}")));
    }
    if !(b_avg >= 0.0) {
        return Err(Error::arg(format!("bit energy must be non-negative, got {b_avg}")));
    }
    Ok(modulation.error_prefactor() * gaussian_q((modulation.snr_factor() * b_avg / n).sqrt()))
}

/// Bit energy at which [`symbol_error_prob`] equals `eps_th`.
///
/// This is the exact inverse of the error expression: the tail argument is
/// squared before dividing by the SNR factor.
pub fn avg_bit_energy(eps_th: f64, modulation: ModulationSpec, n: f64) -> Result<f64> {
    if !(n > 0.0) {
        return Err(Error::arg(format!("noise power must be positive, got {n}")));
    }
    let ceiling = 0.5 * modulation.error_prefactor();
    if !(eps_th > 0.0 && eps_th <= ceiling) {
        return Err(Error::arg(format!(
            "error threshold {eps_th} outside achievable range (0, {ceiling}]"
        )));
    }
    let arg = gaussian_q_inv(eps_th / modulation.error_prefactor())?;
    Ok(arg * arg * n / modulation.snr_factor())
}

/// How the number of digital blocks is derived from the parity bit count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
#[derive(Default)]
pub enum BlockSizing {
    /// `K = ceil(C / (bits_per_symbol * V))`.
    #[default]
    BitsPerSymbol,
    /// `K = ceil(C * r_mod / (2V))`, kept for comparison only.
    Literal { r_mod: f64 },
}


/// Parity bits per block, rounded up when `N * r_cod` is fractional.
pub fn parity_bits_per_block(block_info_bits: u64, code_rate: f64) -> u64 {
    (block_info_bits as f64 * code_rate - 1e-9).ceil().max(0.0) as u64
}

/// Returns `(C, K, B_d)` for `M` information bits.
pub fn size_digital(
    info_bits: u64,
    block_info_bits: u64,
    code_rate: f64,
    modulation: ModulationSpec,
    block_symbols: u64,
    sizing: BlockSizing,
) -> Result<(u64, u64, u64)> {
    if block_info_bits == 0 || block_symbols == 0 {
        return Err(Error::arg("N and V must be positive"));
    }
    if !(code_rate > 0.0 && code_rate < 1.0) {
        return Err(Error::arg(format!("code rate {code_rate} outside (0, 1)")));
    }
    let blocks = info_bits.div_ceil(block_info_bits);
    let parity = blocks * parity_bits_per_block(block_info_bits, code_rate);
    let k = match sizing {
        BlockSizing::BitsPerSymbol => {
            parity.div_ceil(modulation.bits_per_symbol() as u64 * block_symbols)
        }
        BlockSizing::Literal { r_mod } => {
            (parity as f64 * r_mod / (2.0 * block_symbols as f64) - 1e-12).ceil().max(0.0) as u64
        }
    };
    Ok((parity, k, k * block_symbols))
}

/// Energy for `parity_bits` bits at the error threshold.
pub fn digital_power(
    parity_bits: u64,
    eps_th: f64,
    modulation: ModulationSpec,
    n: f64,
) -> Result<f64> {
    if parity_bits == 0 {
        return Ok(0.0);
    }
    Ok(parity_bits as f64 * avg_bit_energy(eps_th, modulation, n)?)
}

/// Number of patches whose `feature_len` real values fit in `analog_uses`
/// complex channel uses.
pub fn analog_source_count(analog_uses: u64, feature_len: usize) -> u64 {
    if feature_len == 0 {
        return 0;
    }
    2 * analog_uses / feature_len as u64
}

/// `g_i = sqrt(P_a / (sigma_i * sum_j sigma_j))`, so `sum_i g_i^2 sigma_i^2 = P_a`.
pub fn scaling_factors(analog_power: f64, sigmas: &[f64]) -> Result<Vec<f64>> {
    if !(analog_power > 0.0) {
        return Err(Error::arg(format!("analog power must be positive, got {analog_power}")));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::arg(format!("source deviation must be positive, got {s}")));
    }
    let total: f64 = sigmas.iter().sum();
    Ok(sigmas
        .iter()
        .map(|s| (analog_power / (s * total)).sqrt())
        .collect())
}

/// Frame-level resource budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    pub total_power: f64,
    pub total_bandwidth: u64,
    pub error_threshold: f64,
    pub noise_power: f64,
    /// Charge token-index side information against the bandwidth budget.
    #[serde(default = "default_true")]
    pub charge_metadata: bool,
}

fn default_true() -> bool {
    true
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.total_power > 0.0) {
            return Err(Error::arg("total power must be positive"));
        }
        if self.total_bandwidth < 1 {
            return Err(Error::arg("total bandwidth must be at least one channel use"));
        }
        if !(self.error_threshold > 0.0 && self.error_threshold < 1.0) {
            return Err(Error::arg("error threshold must lie in (0, 1)"));
        }
        if !(self.noise_power > 0.0) {
            return Err(Error::arg("noise power must be positive"));
        }
        Ok(())
    }
}

/// Digital-part parameters fed to the planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DigitalParams {
    /// `M`, total information bits produced by the bit mapper.
    pub info_bits: u64,
    /// `N`, information bits per coded block.
    pub block_info_bits: u64,
    /// `r_cod`; parity bits per block are `N * r_cod`.
    pub code_rate: f64,
    /// `V`, complex symbols per transmission block.
    pub block_symbols: u64,
    pub modulation: ModulationSpec,
    #[serde(default)]
    pub sizing: BlockSizing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DigitalPlan {
    pub info_bits_total: u64,
    pub block_info_bits: u64,
    pub code_rate: f64,
    pub parity_bits: u64,
    pub block_symbols: u64,
    pub block_count: u64,
    pub bandwidth: u64,
    pub power: f64,
}

/// Everything the planner consumed, echoed into the plan so it can be audited
/// without access to the original source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanInputs {
    pub budget: BudgetConfig,
    pub digital: DigitalParams,
    pub feature_len: usize,
    pub codebook_size: usize,
    pub rho_sq: Vec<f64>,
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub inputs: PlanInputs,
    pub digital: DigitalPlan,
    pub analog_bandwidth: u64,
    pub analog_power: f64,
    pub metadata_uses: u64,
    pub transmit_count: usize,
    pub transmit_indices: Vec<usize>,
    pub dropped_indices: Vec<usize>,
    pub scaling: Vec<f64>,
}

impl AllocationPlan {
    pub fn patch_count(&self) -> usize {
        self.inputs.rho_sq.len()
    }

    /// Channel uses occupied by the analog section.
    pub fn analog_uses(&self) -> u64 {
        (self.transmit_count * self.inputs.feature_len / 2) as u64
    }

    /// Energy each transmitted patch carries: `g_i^2 sigma_i^2`.
    pub fn patch_energies(&self) -> Vec<f64> {
        self.transmit_indices
            .iter()
            .zip(&self.scaling)
            .map(|(&i, g)| g * g * self.inputs.variances[i])
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn metadata_uses(dropped: usize, codebook_size: usize, modulation: ModulationSpec) -> u64 {
    let bits_per_index = (codebook_size.max(2) as f64).log2().ceil() as u64;
    (dropped as u64 * bits_per_index).div_ceil(modulation.bits_per_symbol() as u64)
}

/// Orders patches for analog transmission: ascending `rho_sq`, then descending
/// variance, then ascending index.
pub fn selection_order(rho_sq: &[f64], variances: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rho_sq.len()).collect();
    order.sort_by(|&a, &b| {
        rho_sq[a]
            .total_cmp(&rho_sq[b])
            .then(variances[b].total_cmp(&variances[a]))
            .then(a.cmp(&b))
    });
    order
}

/// Builds the hybrid-frame plan: digital part first, analog from the remainder.
///
/// `rho_sq[i]` is the token fit of patch `i`; `variances[i]` its variance.
/// Zero-variance patches are never transmitted in analog form.
pub fn plan(
    budget: &BudgetConfig,
    rho_sq: &[f64],
    variances: &[f64],
    digital: &DigitalParams,
    feature_len: usize,
    codebook_size: usize,
) -> Result<AllocationPlan> {
    budget.validate()?;
    if rho_sq.len() != variances.len() {
        return Err(Error::dim(format!(
            "{} fit coefficients for {} patches",
            rho_sq.len(),
            variances.len()
        )));
    }
    if feature_len < 2 || !feature_len.is_multiple_of(2) {
        return Err(Error::arg(format!("feature length {feature_len} must be even and >= 2")));
    }
    let patches = rho_sq.len();

    let (parity, blocks, b_d) = size_digital(
        digital.info_bits,
        digital.block_info_bits,
        digital.code_rate,
        digital.modulation,
        digital.block_symbols,
        digital.sizing,
    )?;
    let p_d = digital_power(parity, budget.error_threshold, digital.modulation, budget.noise_power)?;
    if b_d > budget.total_bandwidth {
        return Err(Error::Infeasible {
            resource: "bandwidth",
            demand: b_d as f64,
            budget: budget.total_bandwidth as f64,
            shortfall: (b_d - budget.total_bandwidth) as f64,
        });
    }
    if p_d > budget.total_power {
        return Err(Error::Infeasible {
            resource: "power",
            demand: p_d,
            budget: budget.total_power,
            shortfall: p_d - budget.total_power,
        });
    }
    let mut p_a = budget.total_power - p_d;
    // keep the sum within budget after rounding
    while p_a > 0.0 && p_a + p_d > budget.total_power {
        p_a = f64::from_bits(p_a.to_bits() - 1);
    }
    let eligible = variances.iter().filter(|&&v| v > 0.0).count();

    // metadata shrinks the analog share, which can only grow the dropped set,
    // so this settles within `patches` rounds
    let mut meta = 0u64;
    let (mut b_a, mut q);
    loop {
        b_a = budget.total_bandwidth - b_d - meta.min(budget.total_bandwidth - b_d);
        q = (analog_source_count(b_a, feature_len) as usize)
            .min(patches)
            .min(eligible);
        if p_a <= 0.0 {
            q = 0;
        }
        let next = if budget.charge_metadata {
            metadata_uses(patches - q, codebook_size, digital.modulation)
        } else {
            0
        };
        if next == meta {
            break;
        }
        meta = next;
    }
    if b_d + meta > budget.total_bandwidth {
        return Err(Error::Infeasible {
            resource: "bandwidth",
            demand: (b_d + meta) as f64,
            budget: budget.total_bandwidth as f64,
            shortfall: (b_d + meta - budget.total_bandwidth) as f64,
        });
    }

    let order: Vec<usize> = selection_order(rho_sq, variances)
        .into_iter()
        .filter(|&i| variances[i] > 0.0)
        .collect();
    let mut transmit: Vec<usize> = order[..q].to_vec();
    transmit.sort_unstable();
    let dropped: Vec<usize> = (0..patches).filter(|i| !transmit.contains(i)).collect();
    let sigmas: Vec<f64> = transmit.iter().map(|&i| variances[i].sqrt()).collect();
    let scaling = if q > 0 {
        scaling_factors(p_a, &sigmas)?
    } else {
        Vec::new()
    };

    Ok(AllocationPlan {
        inputs: PlanInputs {
            budget: *budget,
            digital: *digital,
            feature_len,
            codebook_size,
            rho_sq: rho_sq.to_vec(),
            variances: variances.to_vec(),
        },
        digital: DigitalPlan {
            info_bits_total: digital.info_bits,
            block_info_bits: digital.block_info_bits,
            code_rate: digital.code_rate,
            parity_bits: parity,
            block_symbols: digital.block_symbols,
            block_count: blocks,
            bandwidth: b_d,
            power: p_d,
        },
        analog_bandwidth: b_a,
        analog_power: p_a,
        metadata_uses: meta,
        transmit_count: q,
        transmit_indices: transmit,
        dropped_indices: dropped,
        scaling,
    })
}
