use super::grid::RealGrid;
use crate::error::{Error, Result};

/// Normalized 1-D Gaussian taps for an odd kernel size.
pub fn gaussian_kernel(ksize: usize, sigma: f64) -> Result<Vec<f64>> {
    if ksize == 0 || ksize.is_multiple_of(2) {
        return Err(Error::Parameter(format!("ksize must be odd and >= 1, got {ksize}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("sigma must be > 0, got {sigma}")));
    }
    let r = (ksize / 2) as i64;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    Ok(taps)
}

/// Half-sample symmetric reflection (`dcba|abcd|dcba`), any overshoot.
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Separable Gaussian blur with a reflective boundary.
///
/// Each output is accumulated as `g[c] + Σ w_k (g[c+k] - g[c])`, so constants
/// are reproduced exactly and the result does not depend on a global offset
/// beyond rounding.
pub fn gaussian_blur(g: &RealGrid, ksize: usize, sigma: f64) -> Result<RealGrid> {
    let taps = gaussian_kernel(ksize, sigma)?;
    let r = (ksize / 2) as i64;
    let (w, h) = (g.width(), g.height());
    let src = g.data();

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let c = row[x];
            let mut acc = 0.0;
            for (k, &t) in (-r..=r).zip(&taps) {
                acc += t * (row[reflect(x as i64 + k, w)] - c);
            }
            tmp[y * w + x] = c + acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let c = tmp[y * w + x];
            let mut acc = 0.0;
            for (k, &t) in (-r..=r).zip(&taps) {
                acc += t * (tmp[reflect(y as i64 + k, h) * w + x] - c);
            }
            out[y * w + x] = c + acc;
        }
    }
    RealGrid::new(w, h, g.pitch(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reflection_indices() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
    }

    #[test]
    fn constant_is_fixed_point() {
        let g = RealGrid::filled(9, 7, 1.0, 7.0).unwrap();
        for (k, s) in [(1, 0.5), (3, 1.0), (7, 1.5), (15, 4.0)] {
            let b = gaussian_blur(&g, k, s).unwrap();
            assert!(b.data().iter().all(|&v| v == 7.0));
        }
    }

    #[test]
    fn ksize_one_is_identity() {
        let g = RealGrid::from_fn(5, 5, 1.0, |x, y| (x * 3 + y * 7) as f64).unwrap();
        assert_eq!(gaussian_blur(&g, 1, 2.0).unwrap(), g);
    }

    #[test]
    fn delta_center_weight() {
        let mut g = RealGrid::zeros(9, 9, 1.0).unwrap();
        g.set(4, 4, 1.0);
        let b = gaussian_blur(&g, 3, 1.0).unwrap();
        // Hand-evaluated 3-tap kernel: [e^-1/2, 1, e^-1/2] / (1 + 2 e^-1/2).
        let side = (-0.5f64).exp();
        let center_1d = 1.0 / (1.0 + 2.0 * side);
        assert!((b.get(4, 4) - center_1d * center_1d).abs() < 1e-15);
        assert!((b.get(5, 4) - center_1d * side * center_1d).abs() < 1e-15);
    }

    #[test]
    fn even_ksize_rejected() {
        let g = RealGrid::zeros(4, 4, 1.0).unwrap();
        assert!(matches!(gaussian_blur(&g, 4, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(gaussian_blur(&g, 3, 0.0), Err(Error::Parameter(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn preserves_mean(w in 1usize..24, h in 1usize..24, half in 0usize..6, sigma in 0.3f64..4.0,
                          vals in proptest::collection::vec(-5.0f64..5.0, 576)) {
            let g = RealGrid::from_fn(w, h, 1.0, |x, y| vals[(y * 24 + x) % vals.len()] + 10.0).unwrap();
            let b = gaussian_blur(&g, 2 * half + 1, sigma).unwrap();
            let (m0, m1) = (g.mean(), b.mean());
            prop_assert!((m0 - m1).abs() <= 1e-12 * m0.abs());
        }
    }
}
