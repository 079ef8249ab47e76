//! Bit mapping: per-patch DCT, zigzag scan and per-band uniform quantization
//! to Gray-coded indices.
//!
//! Each patch contributes `bands * bits_per_coefficient` bits, band by band in
//! zigzag order, most significant bit of each index first. By default every
//! band is carried and the quantizer is mid-rise; a spec may instead carry
//! only a zigzag prefix of the bands and use a mid-tread grid whose middle
//! bin is centered on the band mean.

use serde::{Deserialize, Serialize};

use super::dct::{dct2, idct2, zigzag};
use crate::error::{Error, Result};
use crate::source::{PatchLayout, PatchSource};

/// Smallest clip amplitude a band may receive.
pub const MIN_CLIP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub bits_per_coefficient: u32,
    pub patch_edge: usize,
    /// Clip amplitude per band, zigzag order.
    pub clip: Vec<f64>,
    /// Center of the quantizer range per band, zigzag order.
    pub center: Vec<f64>,
    pub zigzag: Vec<usize>,
    /// Number of leading zigzag bands carried; `None` carries all of them.
    #[serde(default)]
    pub band_count: Option<usize>,
    /// Shift the grid by half a step so one bin is centered on `center`.
    #[serde(default)]
    pub mid_tread: bool,
}

impl QuantizerSpec {
    /// Symmetric spec with the same clip for every band and zero centers.
    pub fn uniform(patch_edge: usize, bits: u32, clip: f64) -> Result<Self> {
        let l = patch_edge * patch_edge;
        Self::new(patch_edge, bits, vec![clip; l], vec![0.0; l])
    }

    pub fn new(patch_edge: usize, bits: u32, clip: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        let l = patch_edge * patch_edge;
        if !(1..=16).contains(&bits) {
            return Err(Error::arg(format!("bits per coefficient {bits} outside 1..=16")));
        }
        if l == 0 || clip.len() != l || center.len() != l {
            return Err(Error::dim(format!("need {l} clip and center values")));
        }
        if clip.iter().any(|c| !(*c > 0.0)) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::arg("clip amplitudes must be positive and centers finite"));
        }
        Ok(Self {
            bits_per_coefficient: bits,
            patch_edge,
            clip,
            center,
            zigzag: zigzag(patch_edge),
            band_count: None,
            mid_tread: false,
        })
    }

    /// Carries only the first `bands` zigzag bands.
    pub fn with_band_count(mut self, bands: usize) -> Result<Self> {
        if bands == 0 || bands > self.zigzag.len() {
            return Err(Error::arg(format!("band count {bands} outside 1..={}", self.zigzag.len())));
        }
        self.band_count = (bands < self.zigzag.len()).then_some(bands);
        Ok(self)
    }

    pub fn with_mid_tread(mut self, mid_tread: bool) -> Self {
        self.mid_tread = mid_tread;
        self
    }

    /// Number of bands that contribute bits.
    pub fn carried_bands(&self) -> usize {
        self.band_count.unwrap_or(self.zigzag.len()).min(self.zigzag.len())
    }

    /// Fits per-band centers (band mean) and clips (the `percentile` quantile
    /// of the centered magnitude, at least [`MIN_CLIP`]) on training patches.
    pub fn fit<'a, I>(patches: I, patch_edge: usize, bits: u32, percentile: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let l = patch_edge * patch_edge;
        let zz = zigzag(patch_edge);
        let mut bands: Vec<Vec<f64>> = vec![Vec::new(); l];
        for p in patches {
            let c = dct2(p)?;
            if c.len() != l {
                return Err(Error::dim("training patch does not match the patch edge"));
            }
            for (band, &pos) in zz.iter().enumerate() {
                bands[band].push(c[pos]);
            }
        }
        if bands[0].is_empty() {
            return Err(Error::arg("no training patches"));
        }
        let mut clip = Vec::with_capacity(l);
        let mut center = Vec::with_capacity(l);
        for vals in &mut bands {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let mut mags: Vec<f64> = vals.iter().map(|v| (v - mean).abs()).collect();
            mags.sort_by(f64::total_cmp);
            let idx = ((mags.len() - 1) as f64 * percentile.clamp(0.0, 1.0)).round() as usize;
            clip.push(mags[idx].max(MIN_CLIP));
            center.push(mean);
        }
        Self::new(patch_edge, bits, clip, center)
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits_per_coefficient
    }

    pub fn step(&self, band: usize) -> f64 {
        2.0 * self.clip[band] / self.levels() as f64
    }

    /// Bits per patch.
    pub fn patch_stride(&self) -> usize {
        self.carried_bands() * self.bits_per_coefficient as usize
    }

    /// Lower edge of bin 0.
    fn origin(&self, band: usize) -> f64 {
        let shift = if self.mid_tread { self.step(band) / 2.0 } else { 0.0 };
        self.center[band] - self.clip[band] - shift
    }

    /// `(band, bit plane)` of bit `pos` within a patch; plane 0 is the most
    /// significant bit.
    pub fn bit_band_plane(&self, pos: usize) -> (usize, usize) {
        let b = self.bits_per_coefficient as usize;
        let within = pos % self.patch_stride();
        (within / b, within % b)
    }

    pub fn quantize_index(&self, band: usize, value: f64) -> u32 {
        let u = (value - self.origin(band)) / self.step(band);
        let top = (self.levels() - 1) as f64;
        if u.is_nan() {
            return 0;
        }
        u.floor().clamp(0.0, top) as u32
    }

    pub fn reconstruct(&self, band: usize, index: u32) -> f64 {
        self.origin(band) + (index as f64 + 0.5) * self.step(band)
    }

    /// Interval of values that quantize to `index`; the outermost bins are
    /// open towards infinity.
    pub fn bin_bounds(&self, band: usize, index: u32) -> (f64, f64) {
        let lo = self.origin(band) + index as f64 * self.step(band);
        let hi = lo + self.step(band);
        let top = self.levels() - 1;
        (
            if index == 0 { f64::NEG_INFINITY } else { lo },
            if index >= top { f64::INFINITY } else { hi },
        )
    }

    fn check_patch_len(&self, len: usize) -> Result<()> {
        if len != self.patch_edge * self.patch_edge {
            return Err(Error::dim(format!(
                "patch length {len} does not match edge {}",
                self.patch_edge
            )));
        }
        Ok(())
    }
}

fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

fn gray_inverse(mut g: u32) -> u32 {
    let mut i = g;
    while g > 1 {
        g >>= 1;
        i ^= g;
    }
    i
}

/// Bits of one patch.
pub fn bit_map_patch(patch: &[f64], spec: &QuantizerSpec, out: &mut Vec<u8>) -> Result<()> {
    spec.check_patch_len(patch.len())?;
    let c = dct2(patch)?;
    let b = spec.bits_per_coefficient;
    for (band, &pos) in spec.zigzag.iter().enumerate().take(spec.carried_bands()) {
        let g = gray(spec.quantize_index(band, c[pos]));
        for k in (0..b).rev() {
            out.push(((g >> k) & 1) as u8);
        }
    }
    Ok(())
}

/// All patches of `source`, concatenated in patch order.
pub fn bit_map(source: &PatchSource, spec: &QuantizerSpec) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(source.len() * spec.patch_stride());
    for p in source.patches() {
        bit_map_patch(p, spec, &mut out)?;
    }
    Ok(out)
}

fn decoded_indices<'a>(bits: &'a [u8], spec: &'a QuantizerSpec) -> Result<impl Iterator<Item = (usize, u32)> + 'a> {
    if bits.len() != spec.patch_stride() {
        return Err(Error::dim(format!(
            "{} bits for a patch stride of {}",
            bits.len(),
            spec.patch_stride()
        )));
    }
    let b = spec.bits_per_coefficient as usize;
    Ok(bits.chunks(b).enumerate().map(|(band, chunk)| {
        let g = chunk.iter().fold(0u32, |acc, &bit| (acc << 1) | (bit & 1) as u32);
        (band, gray_inverse(g))
    }))
}

/// Bin-center reconstruction; bands that are not carried take their center.
pub fn bit_unmap_patch(bits: &[u8], spec: &QuantizerSpec) -> Result<Vec<f64>> {
    let mut c = vec![0.0; spec.patch_edge * spec.patch_edge];
    for (band, &pos) in spec.zigzag.iter().enumerate() {
        c[pos] = spec.center[band];
    }
    for (band, index) in decoded_indices(bits, spec)? {
        c[spec.zigzag[band]] = spec.reconstruct(band, index);
    }
    idct2(&c)
}

/// Reconstruction guided by a side-information patch: every carried DCT
/// coefficient of `side` is clamped into its decoded bin and the remaining
/// coefficients are kept. When the bits are correct this is a projection onto
/// a convex set containing the source, so it is never further from the
/// source than `side`.
pub fn bit_unmap_patch_with_side(bits: &[u8], spec: &QuantizerSpec, side: &[f64]) -> Result<Vec<f64>> {
    spec.check_patch_len(side.len())?;
    let mut c = dct2(side)?;
    for (band, index) in decoded_indices(bits, spec)? {
        let (lo, hi) = spec.bin_bounds(band, index);
        let pos = spec.zigzag[band];
        c[pos] = c[pos].clamp(lo, hi);
    }
    idct2(&c)
}

pub fn bit_unmap(
    bits: &[u8],
    spec: &QuantizerSpec,
    layout: Option<PatchLayout>,
) -> Result<PatchSource> {
    let stride = spec.patch_stride();
    if bits.is_empty() || !bits.len().is_multiple_of(stride) {
        return Err(Error::dim(format!(
            "bit length {} is not a multiple of the patch stride {stride}",
            bits.len()
        )));
    }
    let patches = bits
        .chunks(stride)
        .map(|chunk| bit_unmap_patch(chunk, spec))
        .collect::<Result<Vec<_>>>()?;
    PatchSource::from_patches(patches, layout)
}
