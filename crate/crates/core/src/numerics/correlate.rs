//! Circular cross-correlation through the spectral product
//! `r = F⁻¹(conj(F(a))·F(b))`, i.e. `r(τ) = Σ_x conj(a(x))·b(x+τ)`.

use num_complex::Complex64;

use super::fft::{Direction, Fft2};
use super::grid::{ComplexGrid, RealGrid};
use crate::error::Result;

/// Boundary handling for correlations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Periodic wrap-around on the grid itself.
    #[default]
    Circular,
    /// Both inputs embedded in a `2W×2H` zero field; the result has that size.
    ZeroPadded,
}

pub fn cross_correlate(a: &ComplexGrid, b: &ComplexGrid) -> Result<ComplexGrid> {
    cross_correlate_with(a, b, Boundary::Circular)
}

pub fn cross_correlate_with(
    a: &ComplexGrid,
    b: &ComplexGrid,
    boundary: Boundary,
) -> Result<ComplexGrid> {
    a.ensure_same_shape(b)?;
    let (a, b) = match boundary {
        Boundary::Circular => (a.clone(), b.clone()),
        Boundary::ZeroPadded => (zero_pad(a)?, zero_pad(b)?),
    };
    let (w, h) = (a.width(), a.height());
    let mut fwd = Fft2::new(w, h, Direction::Forward)?;
    let mut inv = Fft2::new(w, h, Direction::Inverse)?;
    let fa = fwd.apply(&a)?;
    let mut out = fwd.apply(&b)?;
    out.data_mut()
        .iter_mut()
        .zip(fa.data())
        .for_each(|(fb, fa)| *fb *= fa.conj());
    inv.apply_in_place(&mut out)?;
    Ok(out)
}

fn zero_pad(g: &ComplexGrid) -> Result<ComplexGrid> {
    let (w, h) = (g.width(), g.height());
    ComplexGrid::from_fn(2 * w, 2 * h, g.pitch(), |x, y| {
        if x < w && y < h {
            g.get(x, y)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Forward/inverse plan pair for repeated autocorrelations of one grid size.
pub struct Autocorrelator {
    fwd: Fft2,
    inv: Fft2,
    buf: Vec<Complex64>,
}

impl Autocorrelator {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Ok(Self {
            fwd: Fft2::new(width, height, Direction::Forward)?,
            inv: Fft2::new(width, height, Direction::Inverse)?,
            buf: vec![Complex64::new(0.0, 0.0); width * height],
        })
    }

    /// Circular autocorrelation of a real signal after subtracting `offset`.
    /// The result is real up to rounding; the imaginary part is dropped.
    pub fn autocorrelate(&mut self, g: &RealGrid, offset: f64) -> Result<RealGrid> {
        for (b, &v) in self.buf.iter_mut().zip(g.data()) {
            *b = Complex64::new(v - offset, 0.0);
        }
        self.fwd.process(&mut self.buf);
        self.buf
            .iter_mut()
            .for_each(|c| *c = Complex64::new(c.norm_sqr(), 0.0));
        self.inv.process(&mut self.buf);
        let data = self.buf.iter().map(|c| c.re).collect();
        RealGrid::new(g.width(), g.height(), g.pitch(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(w: usize, h: usize, seed: u64) -> ComplexGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexGrid::from_fn(w, h, 1.0, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
        .unwrap()
    }

    /// Brute-force circular correlation, independent of the FFT path.
    fn brute_force(a: &ComplexGrid, b: &ComplexGrid) -> ComplexGrid {
        let (w, h) = (a.width(), a.height());
        ComplexGrid::from_fn(w, h, a.pitch(), |tx, ty| {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    acc += a.get(x, y).conj() * b.get((x + tx) % w, (y + ty) % h);
                }
            }
            acc
        })
        .unwrap()
    }

    #[test]
    fn delta_autocorrelation() {
        let mut d = ComplexGrid::zeros(4, 4, 1.0).unwrap();
        d.set(0, 0, Complex64::new(1.0, 0.0));
        let r = cross_correlate(&d, &d).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expect = if x == 0 && y == 0 { 1.0 } else { 0.0 };
                assert!((r.get(x, y) - Complex64::new(expect, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_autocorrelation() {
        let c = 1.5;
        let g = ComplexGrid::filled(4, 4, 1.0, Complex64::new(c, 0.0)).unwrap();
        let r = cross_correlate(&g, &g).unwrap();
        for v in r.data() {
            assert!((v.re - 16.0 * c * c).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn matches_brute_force_4x4() {
        let a = random_grid(4, 4, 1);
        let b = random_grid(4, 4, 2);
        let fast = cross_correlate(&a, &b).unwrap();
        let slow = brute_force(&a, &b);
        for (x, y) in fast.data().iter().zip(slow.data()) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = random_grid(4, 4, 1);
        let b = random_grid(4, 2, 2);
        assert!(matches!(cross_correlate(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_padding_removes_wraparound() {
        let a = random_grid(3, 3, 5);
        let r = cross_correlate_with(&a, &a, Boundary::ZeroPadded).unwrap();
        assert_eq!((r.width(), r.height()), (6, 6));
        // Lag (2, 0) only pairs columns 0 and 2; no wrapped contribution.
        let mut expect = Complex64::new(0.0, 0.0);
        for y in 0..3 {
            expect += a.get(0, y).conj() * a.get(2, y);
        }
        assert!((r.get(2, 0) - expect).norm() < 1e-12);
    }

    #[test]
    fn real_autocorrelator_matches_generic_route() {
        let g = random_grid(8, 4, 9).re();
        let mut ac = Autocorrelator::new(8, 4).unwrap();
        let fast = ac.autocorrelate(&g, 0.25).unwrap();
        let shifted = ComplexGrid::from_real(&g.map(|v| v - 0.25));
        let slow = brute_force(&shifted, &shifted);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b.re).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn equals_brute_force_on_small_grids(w in 1usize..=8, h in 1usize..=8, seed in any::<u64>()) {
            let a = random_grid(w, h, seed);
            let b = random_grid(w, h, seed ^ 0xABCD);
            let fast = cross_correlate(&a, &b).unwrap();
            let slow = brute_force(&a, &b);
            for (x, y) in fast.data().iter().zip(slow.data()) {
                prop_assert!((x - y).norm() < 1e-10);
            }
        }

        #[test]
        fn autocorrelation_zero_lag_and_hermitian(w in 1usize..=16, h in 1usize..=16, seed in any::<u64>()) {
            let a = random_grid(w, h, seed);
            let r = cross_correlate(&a, &a).unwrap();
            let energy = a.energy();
            prop_assert!((r.get(0, 0).re - energy).abs() <= 1e-10 * energy);
            prop_assert!(r.get(0, 0).im.abs() <= 1e-10 * energy);
            for y in 0..h {
                for x in 0..w {
                    let neg = r.get((w - x) % w, (h - y) % h);
                    prop_assert!((r.get(x, y) - neg.conj()).norm() <= 1e-10 * energy);
                }
            }
        }
    }
}
