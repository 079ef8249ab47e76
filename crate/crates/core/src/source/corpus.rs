//! Seeded synthetic grayscale scenes used as the desk-scale training and
//! evaluation corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ImageGray;

/// Generates `count` square scenes of `size` pixels. Each scene is a shaded
/// background with soft blobs, an occasional hard-edged rectangle, optional
/// stripe texture and mild sensor noise.
pub fn toy_corpus(count: usize, size: usize, seed: u64) -> Vec<ImageGray> {
    (0..count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k as u64 + 1)));
            toy_scene(size, &mut rng)
        })
        .collect()
}

fn toy_scene<R: Rng>(size: usize, rng: &mut R) -> ImageGray {
    let n = size as f64;
    let base = rng.random_range(0.25..0.75);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let slope = rng.random_range(0.0..0.35);
    let (gx, gy) = (slope * angle.cos() / n, slope * angle.sin() / n);

    let blobs: Vec<(f64, f64, f64, f64, f64)> = (0..rng.random_range(1..4))
        .map(|_| {
            (
                rng.random_range(0.0..n),
                rng.random_range(0.0..n),
                rng.random_range(n / 10.0..n / 3.0),
                rng.random_range(n / 10.0..n / 3.0),
                rng.random_range(-0.35..0.35),
            )
        })
        .collect();

    let rect = rng.random_bool(0.6).then(|| {
        let x0 = rng.random_range(0.0..n * 0.7);
        let y0 = rng.random_range(0.0..n * 0.7);
        let w = rng.random_range(n * 0.15..n * 0.5);
        let h = rng.random_range(n * 0.15..n * 0.5);
        (x0, y0, x0 + w, y0 + h, rng.random_range(-0.3..0.3))
    });

    let stripes = rng.random_bool(0.35).then(|| {
        let period = rng.random_range(3.0..9.0);
        let dir = rng.random_range(0.0..std::f64::consts::PI);
        (period, dir, rng.random_range(0.03..0.1))
    });

    let noise = Normal::new(0.0, 0.01).expect("constant sigma");
    let mut px = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut v = base + gx * (fx - n / 2.0) + gy * (fy - n / 2.0);
            for &(cx, cy, rx, ry, amp) in &blobs {
                let d = ((fx - cx) / rx).powi(2) + ((fy - cy) / ry).powi(2);
                v += amp * (-0.5 * d).exp();
            }
            if let Some((x0, y0, x1, y1, amp)) = rect {
                if fx >= x0 && fx < x1 && fy >= y0 && fy < y1 {
                    v += amp;
                }
            }
            if let Some((period, dir, amp)) = stripes {
                let t = fx * dir.cos() + fy * dir.sin();
                v += amp * (std::f64::consts::TAU * t / period).sin();
            }
            v += noise.sample(rng);
            px.push(v);
        }
    }
    ImageGray::from_clamped(size, size, px).expect("sizes agree")
}
