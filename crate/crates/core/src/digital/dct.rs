//! Orthonormal 2-D DCT-II on square patches and the zigzag scan.

use crate::error::{Error, Result};

/// Row `k` holds the `k`-th orthonormal DCT-II basis vector of length `n`.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let alpha = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            m[k * n + i] =
                alpha * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

fn edge_of(len: usize) -> Result<usize> {
    let edge = (len as f64).sqrt().round() as usize;
    if edge == 0 || edge * edge != len {
        return Err(Error::dim(format!("{len} values do not form a square patch")));
    }
    Ok(edge)
}

/// `C X C^T` with both products done as row passes.
fn separable(x: &[f64], n: usize, m: &[f64], transpose: bool) -> Vec<f64> {
    let coef = |a: usize, b: usize| if transpose { m[b * n + a] } else { m[a * n + b] };
    let mut tmp = vec![0.0; n * n];
    for r in 0..n {
        for k in 0..n {
            tmp[r * n + k] = (0..n).map(|i| coef(k, i) * x[r * n + i]).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        for c in 0..n {
            out[k * n + c] = (0..n).map(|r| coef(k, r) * tmp[r * n + c]).sum();
        }
    }
    out
}

/// Forward transform of a row-major square patch; coefficient `(u, v)` sits
/// at `v * edge + u`.
pub fn dct2(patch: &[f64]) -> Result<Vec<f64>> {
    let n = edge_of(patch.len())?;
    Ok(separable(patch, n, &dct_matrix(n), false))
}

pub fn idct2(coefficients: &[f64]) -> Result<Vec<f64>> {
    let n = edge_of(coefficients.len())?;
    Ok(separable(coefficients, n, &dct_matrix(n), true))
}

/// Zigzag scan: `order[j]` is the row-major position of the `j`-th band.
pub fn zigzag(edge: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(edge * edge);
    for s in 0..(2 * edge).saturating_sub(1) {
        let lo = s.saturating_sub(edge - 1);
        let hi = s.min(edge - 1);
        if s % 2 == 0 {
            for r in (lo..=hi).rev() {
                order.push(r * edge + (s - r));
            }
        } else {
            for r in lo..=hi {
                order.push(r * edge + (s - r));
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_dct(x: &[f64], n: usize) -> Vec<f64> {
        let a = |k: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        let pi = std::f64::consts::PI;
        let mut out = vec![0.0; n * n];
        for v in 0..n {
            for u in 0..n {
                let mut s = 0.0;
                for y in 0..n {
                    for x_ in 0..n {
                        s += x[y * n + x_]
                            * (pi * (2 * x_ + 1) as f64 * u as f64 / (2 * n) as f64).cos()
                            * (pi * (2 * y + 1) as f64 * v as f64 / (2 * n) as f64).cos();
                    }
                }
                out[v * n + u] = a(u) * a(v) * s;
            }
        }
        out
    }

    #[test]
    fn constant_patch_has_only_dc() {
        let c = dct2(&[0.7; 64]).unwrap();
        assert!((c[0] - 0.7 * 8.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for edge in [2, 4, 8] {
            let x: Vec<f64> = (0..edge * edge).map(|_| rng.random::<f64>()).collect();
            let c = dct2(&x).unwrap();
            let back = idct2(&c).unwrap();
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9);
            }
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ec: f64 = c.iter().map(|v| v * v).sum();
            assert!((ex - ec).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_naive_summation() {
        let mut impulse = vec![0.0; 64];
        impulse[0] = 1.0;
        let fast = dct2(&impulse).unwrap();
        let slow = naive_dct(&impulse, 8);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
        for (a, b) in dct2(&x).unwrap().iter().zip(&naive_dct(&x, 8)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_square_rejected() {
        assert!(dct2(&[0.0; 10]).is_err());
        assert!(idct2(&[]).is_err());
    }

    #[test]
    fn zigzag_is_a_permutation() {
        assert_eq!(zigzag(3), vec![0, 1, 3, 6, 4, 2, 5, 7, 8]);
        for edge in 1..10 {
            let mut z = zigzag(edge);
            z.sort_unstable();
            assert_eq!(z, (0..edge * edge).collect::<Vec<_>>());
        }
    }
}
