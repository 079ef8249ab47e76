//! Source ingestion: grayscale images, patch splitting and per-patch statistics.
//!
//! Patches are ordered row-major over the patch grid, so patch `i` sits at grid
//! row `i / cols` and column `i % cols`. Every index used by the allocator and
//! the hybrid frame refers to this ordering.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub mod corpus;

/// Grayscale image with luminance values in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width * height != pixels.len() {
            return Err(Error::dim(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::arg(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image after clamping every value into `[0, 1]`.
    pub fn from_clamped(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        let pixels = pixels
            .into_iter()
            .map(|p| if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) })
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Writes the image as an 8-bit binary PGM.
    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|p| (p * 255.0).round() as u8));
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads a binary PGM (P5) file, scaling samples into `[0, 1]` by `maxval`.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageGray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<ImageGray> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::MalformedHeader(format!(
            "expected magic P5, found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_header_number(bytes, &mut pos, "width")?;
    let height = parse_header_number(bytes, &mut pos, "height")?;
    let maxval = parse_header_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader("zero image dimension".into()));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::UnsupportedMaxval(maxval as u32));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader("missing raster separator".into()));
    }
    pos += 1;

    let sample_bytes = if maxval == 255 { 1 } else { 2 };
    let expected = width * height * sample_bytes;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::MalformedPayload {
            expected,
            found: payload.len(),
        });
    }
    let scale = maxval as f64;
    let pixels = if sample_bytes == 1 {
        payload[..expected].iter().map(|&b| b as f64 / scale).collect()
    } else {
        payload[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    ImageGray::new(width, height, pixels)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedHeader("unexpected end of header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| {
            Error::MalformedHeader(format!(
                "bad {what} field {:?}",
                String::from_utf8_lossy(tok)
            ))
        })
}

/// Mean and population variance of one patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchStats {
    pub mean: f64,
    pub variance: f64,
}

impl PatchStats {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Placement of patches on the image grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchLayout {
    pub patch_edge: usize,
    pub rows: usize,
    pub cols: usize,
}

/// A source split into `I` equal-length patches with their statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSource {
    patches: Vec<Vec<f64>>,
    patch_len: usize,
    layout: Option<PatchLayout>,
    stats: Vec<PatchStats>,
}

impl PatchSource {
    /// Builds a source from raw patches; statistics are computed here.
    pub fn from_patches(patches: Vec<Vec<f64>>, layout: Option<PatchLayout>) -> Result<Self> {
        let patch_len = patches
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::arg("source needs at least one patch"))?;
        if patches.iter().any(|p| p.len() != patch_len) {
            return Err(Error::dim("patches have unequal lengths"));
        }
        if let Some(l) = layout {
            if l.patch_edge * l.patch_edge != patch_len {
                return Err(Error::dim(format!(
                    "patch edge {} does not match patch length {}",
                    l.patch_edge, patch_len
                )));
            }
        }
        let stats = patches
            .iter()
            .map(|p| patch_stats(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            patches,
            patch_len,
            layout,
            stats,
        })
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    pub fn patches(&self) -> &[Vec<f64>] {
        &self.patches
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.patches[i]
    }

    pub fn stats(&self) -> &[PatchStats] {
        &self.stats
    }

    pub fn layout(&self) -> Option<PatchLayout> {
        self.layout
    }

    /// Same layout, new patch contents (statistics recomputed).
    pub fn with_patches(&self, patches: Vec<Vec<f64>>) -> Result<Self> {
        if patches.len() != self.len() {
            return Err(Error::dim(format!(
                "expected {} patches, got {}",
                self.len(),
                patches.len()
            )));
        }
        Self::from_patches(patches, self.layout)
    }

    /// One patch per CSV row.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        for p in &self.patches {
            let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Splits an image into non-overlapping `patch_edge`-square patches, row-major.
pub fn patchify(image: &ImageGray, patch_edge: usize) -> Result<PatchSource> {
    if patch_edge == 0 || !image.width.is_multiple_of(patch_edge) || !image.height.is_multiple_of(patch_edge) {
        return Err(Error::dim(format!(
            "{}x{} image is not divisible into {}-pixel patches",
            image.width, image.height, patch_edge
        )));
    }
    let rows = image.height / patch_edge;
    let cols = image.width / patch_edge;
    let mut patches = Vec::with_capacity(rows * cols);
    for gr in 0..rows {
        for gc in 0..cols {
            let mut p = Vec::with_capacity(patch_edge * patch_edge);
            for y in 0..patch_edge {
                let row = (gr * patch_edge + y) * image.width + gc * patch_edge;
                p.extend_from_slice(&image.pixels[row..row + patch_edge]);
            }
            patches.push(p);
        }
    }
    PatchSource::from_patches(
        patches,
        Some(PatchLayout {
            patch_edge,
            rows,
            cols,
        }),
    )
}

/// Reassembles an image from its patches. Values are taken as-is; callers that
/// hold reconstructions outside `[0, 1]` should use [`depatchify_clamped`].
pub fn depatchify(source: &PatchSource) -> Result<ImageGray> {
    let (width, height, pixels) = assemble(source)?;
    ImageGray::new(width, height, pixels)
}

/// Like [`depatchify`] but clamps reconstructed values into `[0, 1]`.
pub fn depatchify_clamped(source: &PatchSource) -> Result<ImageGray> {
    let (width, height, pixels) = assemble(source)?;
    ImageGray::from_clamped(width, height, pixels)
}

fn assemble(source: &PatchSource) -> Result<(usize, usize, Vec<f64>)> {
    let layout = source
        .layout
        .ok_or_else(|| Error::dim("source has no grid layout"))?;
    if layout.rows * layout.cols != source.len() {
        return Err(Error::dim(format!(
            "grid {}x{} needs {} patches, source has {}",
            layout.rows,
            layout.cols,
            layout.rows * layout.cols,
            source.len()
        )));
    }
    let e = layout.patch_edge;
    let width = layout.cols * e;
    let height = layout.rows * e;
    let mut pixels = vec![0.0; width * height];
    for (i, p) in source.patches.iter().enumerate() {
        let (gr, gc) = (i / layout.cols, i % layout.cols);
        for y in 0..e {
            let row = (gr * e + y) * width + gc * e;
            pixels[row..row + e].copy_from_slice(&p[y * e..(y + 1) * e]);
        }
    }
    Ok((width, height, pixels))
}

/// Population mean and variance (divisor `L`).
pub fn patch_stats(patch: &[f64]) -> Result<PatchStats> {
    if patch.is_empty() {
        return Err(Error::arg("empty patch"));
    }
    if patch.iter().all(|&v| v == patch[0]) {
        return Ok(PatchStats {
            mean: patch[0],
            variance: 0.0,
        });
    }
    let n = patch.len() as f64;
    let mean = patch.iter().sum::<f64>() / n;
    let variance = patch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(PatchStats { mean, variance })
}

/// Draws `count` Gaussian patches of length `length`; patch `i` has standard
/// deviation `sigmas[i]` around mean `means[i]` (zero when `means` is empty).
pub fn synth_gaussian_source<R: Rng + ?Sized>(
    count: usize,
    length: usize,
    sigmas: &[f64],
    means: &[f64],
    rng: &mut R,
) -> Result<PatchSource> {
    if count == 0 || length == 0 {
        return Err(Error::arg("count and length must be positive"));
    }
    if sigmas.len() != count {
        return Err(Error::dim(format!(
            "{} sigmas for {} patches",
            sigmas.len(),
            count
        )));
    }
    if !means.is_empty() && means.len() != count {
        return Err(Error::dim(format!("{} means for {} patches", means.len(), count)));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(Error::arg(format!("negative or non-finite sigma {s}")));
    }
    let patches = sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let mean = means.get(i).copied().unwrap_or(0.0);
            if sigma == 0.0 {
                vec![mean; length]
            } else {
                let dist = Normal::new(mean, sigma).expect("validated sigma");
                (0..length).map(|_| dist.sample(rng)).collect()
            }
        })
        .collect();
    PatchSource::from_patches(patches, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pgm(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut v = header.as_bytes().to_vec();
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn pgm_scales_by_maxval() {
        let img = parse_pgm(&pgm("P5\n2 2\n255\n", &[0, 255, 128, 64])).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn pgm_all_zero() {
        let img = parse_pgm(&pgm("P5 3 1 255\n", &[0, 0, 0])).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn pgm_with_comment_and_16bit() {
        let img = parse_pgm(&pgm("P5\n# hello\n1 1\n65535\n", &[0xff, 0xff])).unwrap();
        assert_eq!(img.pixels(), &[1.0]);
    }

    #[test]
    fn pgm_truncated_payload() {
        let err = parse_pgm(&pgm("P5\n2 2\n255\n", &[1, 2, 3])).unwrap_err();
        assert!(err.to_string().contains("malformed payload"), "{err}");
    }

    #[test]
    fn pgm_bad_maxval_and_magic() {
        assert!(matches!(
            parse_pgm(&pgm("P5\n1 1\n100\n", &[1])),
            Err(Error::UnsupportedMaxval(100))
        ));
        assert!(matches!(
            parse_pgm(&pgm("P2\n1 1\n255\n", &[1])),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_image("/nonexistent/definitely.pgm"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn patchify_counts() {
        let img = ImageGray::zeros(32, 32);
        let src = patchify(&img, 8).unwrap();
        assert_eq!(src.len(), 16);
        assert_eq!(src.patch_len(), 64);
        assert!(patchify(&ImageGray::zeros(10, 10), 8).is_err());
    }

    #[test]
    fn single_patch_is_the_image() {
        let px: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).collect();
        let img = ImageGray::new(8, 8, px.clone()).unwrap();
        let src = patchify(&img, 8).unwrap();
        assert_eq!(src.len(), 1);
        assert_eq!(src.patch(0), &px[..]);
        assert_eq!(depatchify(&src).unwrap(), img);
    }

    #[test]
    fn row_major_ordering() {
        let px: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        let img = ImageGray::new(4, 4, px).unwrap();
        let src = patchify(&img, 2).unwrap();
        // patch 1 is the top-right 2x2 block
        assert_eq!(src.patch(1), &[2.0 / 16.0, 3.0 / 16.0, 6.0 / 16.0, 7.0 / 16.0]);
        // patch 2 is the bottom-left block
        assert_eq!(src.patch(2)[0], 8.0 / 16.0);
    }

    #[test]
    fn inconsistent_grid_rejected() {
        let patches = vec![vec![0.0; 4]; 15];
        let layout = PatchLayout {
            patch_edge: 2,
            rows: 4,
            cols: 4,
        };
        let src = PatchSource::from_patches(patches, Some(layout)).unwrap();
        assert!(depatchify(&src).is_err());
    }

    #[test]
    fn stats_by_hand() {
        let s = patch_stats(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 1.5);
        assert_eq!(s.variance, 1.25);
        assert_eq!(patch_stats(&[0.3; 10]).unwrap().variance, 0.0);
        assert!(patch_stats(&[]).is_err());
    }

    #[test]
    fn stats_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = Normal::new(0.5, 0.2).unwrap();
        let xs: Vec<f64> = (0..1000).map(|_| d.sample(&mut rng)).collect();
        let v = patch_stats(&xs).unwrap().variance;
        assert!((v - 0.04).abs() / 0.04 < 0.15, "variance {v}");
    }

    #[test]
    fn synth_zero_sigma_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = synth_gaussian_source(3, 5, &[0.0; 3], &[0.1, 0.2, 0.3], &mut rng).unwrap();
        assert!(src.patch(2).iter().all(|&v| v == 0.3));
        assert!(src.stats().iter().all(|s| s.variance == 0.0));
    }

    #[test]
    fn synth_is_deterministic_and_validates() {
        let a = synth_gaussian_source(4, 8, &[1.0; 4], &[], &mut ChaCha8Rng::seed_from_u64(3));
        let b = synth_gaussian_source(4, 8, &[1.0; 4], &[], &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a.unwrap(), b.unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(synth_gaussian_source(1, 8, &[-1.0], &[], &mut rng).is_err());
    }

    #[test]
    fn synth_unit_variance_lln() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let src = synth_gaussian_source(1, 4096, &[1.0], &[], &mut rng).unwrap();
        let v = src.stats()[0].variance;
        assert!((v - 1.0).abs() < 0.05, "variance {v}");
    }

    #[test]
    fn csv_dump_has_one_row_per_patch() {
        let src = patchify(&ImageGray::zeros(16, 8), 4).unwrap();
        let mut buf = Vec::new();
        src.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 8);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 16);
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

        proptest! {
            #[test]
            fn patchify_round_trip(rows in 1usize..5, cols in 1usize..5, edge in 1usize..6, seed: u64) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (w, h) = (cols * edge, rows * edge);
                let px: Vec<f64> = (0..w * h).map(|_| rng.random::<f64>()).collect();
                let img = ImageGray::new(w, h, px).unwrap();
                let back = depatchify(&patchify(&img, edge).unwrap()).unwrap();
                prop_assert_eq!(back, img);
            }

            #[test]
            fn stats_match_two_pass_oracle(xs in proptest::collection::vec(-10.0f64..10.0, 1..200)) {
                // independent oracle: Welford accumulation
                let (mut mean, mut m2) = (0.0f64, 0.0f64);
                for (k, &x) in xs.iter().enumerate() {
                    let d = x - mean;
                    mean += d / (k as f64 + 1.0);
                    m2 += d * (x - mean);
                }
                let var = m2 / xs.len() as f64;
                let s = patch_stats(&xs).unwrap();
                prop_assert!((s.mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
                prop_assert!((s.variance - var).abs() <= 1e-12 * var.abs().max(1e-300) + 1e-13);
            }
        }
    }
}
