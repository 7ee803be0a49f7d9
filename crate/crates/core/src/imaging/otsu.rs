//! Otsu's threshold: the level maximizing between-class variance of the
//! intensity histogram. Foreground is `intensity > threshold`.

use super::image::{BinaryMask, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OtsuThreshold {
    pub level: u16,
    /// Set when the image holds a single intensity: no split exists and the
    /// foreground is empty.
    pub degenerate: bool,
}

/// Between-class variance for a split is proportional to
/// `D^2 / (n0 * n1)` with `D = s0 * N - S * n0` (`n0`, `s0`: count and sum of
/// the lower class; `N`, `S`: totals). Splits are compared exactly in integer
/// arithmetic, so ties are real ties and go to the lowest level.
pub fn otsu_threshold(image: &GrayImage) -> OtsuThreshold {
    let mut hist = vec![0u64; image.maxval() as usize + 1];
    for &p in image.pixels() {
        hist[p as usize] += 1;
    }
    let total: u64 = image.pixels().len() as u64;
    let sum: u128 = hist.iter().enumerate().map(|(v, &c)| v as u128 * c as u128).sum();
    let lowest = image.pixels().iter().copied().min().unwrap_or(0);

    let mut best: Option<(u16, u128, u64)> = None; // (level, D^2, n0 * n1)
    let (mut n0, mut s0) = (0u64, 0u128);
    for (level, &count) in hist.iter().enumerate() {
        n0 += count;
        s0 += level as u128 * count as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = (s0 * total as u128).abs_diff(sum * n0 as u128);
        let Some(d2) = d.checked_mul(d) else {
            return otsu_threshold_float(&hist, total);
        };
        let denom = n0 * n1;
        let better = match best {
            None => true,
            Some((_, bd2, bden)) => greater_ratio(d2, denom, bd2, bden),
        };
        if better {
            best = Some((level as u16, d2, denom));
        }
    }
    match best {
        Some((level, _, _)) => OtsuThreshold {
            level,
            degenerate: false,
        },
        None => OtsuThreshold {
            level: lowest,
            degenerate: true,
        },
    }
}

/// `a / b > c / d` for `b, d > 0`, via 192-bit cross products.
fn greater_ratio(a: u128, b: u64, c: u128, d: u64) -> bool {
    widening_mul(a, d) > widening_mul(c, b)
}

/// `x * y` as `(high, low)` 128-bit halves.
fn widening_mul(x: u128, y: u64) -> (u128, u128) {
    let lo = (x as u64) as u128 * y as u128;
    let hi = (x >> 64) * y as u128;
    let (low, carry) = lo.overflowing_add(hi << 64);
    ((hi >> 64) + carry as u128, low)
}

/// Fallback for images so large that the exact products overflow.
fn otsu_threshold_float(hist: &[u64], total: u64) -> OtsuThreshold {
    let sum: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let (mut n0, mut s0) = (0u64, 0.0);
    let mut best = (0u16, f64::NEG_INFINITY);
    for (level, &count) in hist.iter().enumerate() {
        n0 += count;
        s0 += level as f64 * count as f64;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = s0 * total as f64 - sum * n0 as f64;
        let score = d * d / (n0 as f64 * n1 as f64);
        if score > best.1 {
            best = (level as u16, score);
        }
    }
    OtsuThreshold {
        level: best.0,
        degenerate: false,
    }
}

/// Pixels strictly above the threshold.
pub fn foreground_mask(image: &GrayImage, threshold: OtsuThreshold) -> BinaryMask {
    let bits = image
        .pixels()
        .iter()
        .map(|&p| !threshold.degenerate && p > threshold.level)
        .collect();
    BinaryMask::from_bits(image.width(), image.height(), bits).expect("same size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation of `w0 * w1 * (mu0 - mu1)^2` from the pixel list for
    /// every candidate level; strict `>` keeps the lowest level on ties.
    fn brute_force(pixels: &[u16], maxval: u16) -> Option<u16> {
        let n = pixels.len() as f64;
        let mut best: Option<(u16, f64)> = None;
        for t in 0..=maxval {
            let (lo, hi): (Vec<f64>, Vec<f64>) = {
                let lo: Vec<f64> = pixels.iter().filter(|&&p| p <= t).map(|&p| p as f64).collect();
                let hi: Vec<f64> = pixels.iter().filter(|&&p| p > t).map(|&p| p as f64).collect();
                (lo, hi)
            };
            if lo.is_empty() || hi.is_empty() {
                continue;
            }
            let (w0, w1) = (lo.len() as f64 / n, hi.len() as f64 / n);
            let mu0 = lo.iter().sum::<f64>() / lo.len() as f64;
            let mu1 = hi.iter().sum::<f64>() / hi.len() as f64;
            let var = w0 * w1 * (mu0 - mu1).powi(2);
            if best.is_none_or(|(_, b)| var > b) {
                best = Some((t, var));
            }
        }
        best.map(|b| b.0)
    }

    #[test]
    fn two_level_image_splits_at_lowest_level() {
        let mut px = vec![0u16; 500];
        px.extend(vec![255u16; 500]);
        let img = GrayImage::new(40, 25, 255, px).unwrap();
        let t = otsu_threshold(&img);
        assert_eq!(
            t,
            OtsuThreshold {
                level: 0,
                degenerate: false
            }
        );
        assert_eq!(brute_force(img.pixels(), 255), Some(0));
        assert_eq!(foreground_mask(&img, t).count(), 500);
    }

    #[test]
    fn constant_image_is_degenerate() {
        let img = GrayImage::filled(8, 8, 255, 77).unwrap();
        let t = otsu_threshold(&img);
        assert!(t.degenerate);
        assert_eq!(t.level, 77);
        assert_eq!(foreground_mask(&img, t).count(), 0);
    }

    #[test]
    fn matches_exhaustive_search_on_random_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let px: Vec<u16> = (0..32 * 32).map(|_| rng.random_range(0..=255)).collect();
            let img = GrayImage::new(32, 32, 255, px).unwrap();
            assert_eq!(Some(otsu_threshold(&img).level), brute_force(img.pixels(), 255));
        }
    }

    #[test]
    fn widening_mul_is_exact() {
        let x = u128::MAX / 3;
        let (hi, lo) = widening_mul(x, 6);
        // x * 6 = 2 * (2^128 - 1) = 2^129 - 2
        assert_eq!((hi, lo), (1, u128::MAX - 1));
    }
}
