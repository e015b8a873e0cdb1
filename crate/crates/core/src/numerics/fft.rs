//! 2-D FFT on row-major complex grids, backed by `rustfft`.
//!
//! Convention: forward unnormalized, inverse scaled by `1/(width*height)`.
//! rustfft handles any length exactly, so non-power-of-two grids are allowed.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::ComplexGrid;
use crate::error::{Axis, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Reusable plan for one grid size and direction. Owned by a single worker.
pub struct Fft2 {
    width: usize,
    height: usize,
    direction: Direction,
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(width: usize, height: usize, direction: Direction) -> Result<Self> {
        if width == 0 {
            return Err(Error::Dimension {
                axis: Axis::Width,
                value: width,
            });
        }
        if height == 0 {
            return Err(Error::Dimension {
                axis: Axis::Height,
                value: height,
            });
        }
        let mut planner = FftPlanner::new();
        let (rows, cols) = match direction {
            Direction::Forward => (planner.plan_fft_forward(width), planner.plan_fft_forward(height)),
            Direction::Inverse => (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height)),
        };
        let scratch_len = rows
            .get_inplace_scratch_len()
            .max(cols.get_inplace_scratch_len());
        Ok(Self {
            width,
            height,
            direction,
            rows,
            cols,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            transposed: vec![Complex64::new(0.0, 0.0); width * height],
        })
    }

    /// Transforms a row-major buffer of `width*height` samples in place.
    pub fn process(&mut self, data: &mut [Complex64]) {
        let (w, h) = (self.width, self.height);
        assert_eq!(data.len(), w * h, "buffer does not match plan size");

        self.rows.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.transposed, w, h);
        self.cols
            .process_with_scratch(&mut self.transposed, &mut self.scratch);
        transpose(&self.transposed, data, h, w);

        if self.direction == Direction::Inverse {
            let norm = 1.0 / (w * h) as f64;
            data.iter_mut().for_each(|v| *v *= norm);
        }
    }

    pub fn apply(&mut self, g: &ComplexGrid) -> Result<ComplexGrid> {
        self.check(g)?;
        let mut out = g.clone();
        self.process(out.data_mut());
        Ok(out)
    }

    pub fn apply_in_place(&mut self, g: &mut ComplexGrid) -> Result<()> {
        self.check(g)?;
        self.process(g.data_mut());
        Ok(())
    }

    fn check(&self, g: &ComplexGrid) -> Result<()> {
        if g.width() != self.width {
            return Err(Error::Dimension {
                axis: Axis::Width,
                value: g.width(),
            });
        }
        if g.height() != self.height {
            return Err(Error::Dimension {
                axis: Axis::Height,
                value: g.height(),
            });
        }
        Ok(())
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], w: usize, h: usize) {
    const BLOCK: usize = 32;
    for yb in (0..h).step_by(BLOCK) {
        for xb in (0..w).step_by(BLOCK) {
            for y in yb..(yb + BLOCK).min(h) {
                for x in xb..(xb + BLOCK).min(w) {
                    dst[x * h + y] = src[y * w + x];
                }
            }
        }
    }
}

/// One-shot 2-D transform.
pub fn fft2(g: &ComplexGrid, direction: Direction) -> Result<ComplexGrid> {
    Fft2::new(g.width(), g.height(), direction)?.apply(g)
}

/// Signed discrete frequency (cycles per meter) of bin `k` on an axis of `n`
/// samples spaced `pitch` apart.
pub fn frequency(k: usize, n: usize, pitch: f64) -> f64 {
    super::grid::signed_lag(k, n) as f64 / (n as f64 * pitch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(w: usize, h: usize, seed: u64) -> ComplexGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexGrid::from_fn(w, h, 1.0, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
        .unwrap()
    }

    /// Direct O(N^2) DFT.
    fn naive_dft(g: &ComplexGrid) -> ComplexGrid {
        let (w, h) = (g.width(), g.height());
        ComplexGrid::from_fn(w, h, g.pitch(), |u, v| {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                    acc += g.get(x, y) * Complex64::from_polar(1.0, phase);
                }
            }
            acc
        })
        .unwrap()
    }

    #[test]
    fn zeros_stay_zero() {
        let g = ComplexGrid::zeros(4, 4, 1.0).unwrap();
        let f = fft2(&g, Direction::Forward).unwrap();
        assert!(f.data().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn delta_transforms_to_ones() {
        let mut g = ComplexGrid::zeros(2, 2, 1.0).unwrap();
        g.set(0, 0, Complex64::new(1.0, 0.0));
        let f = fft2(&g, Direction::Forward).unwrap();
        for c in f.data() {
            assert_eq!(*c, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn round_trip_8x8() {
        let g = random_grid(8, 8, 11);
        let back = fft2(&fft2(&g, Direction::Forward).unwrap(), Direction::Inverse).unwrap();
        let norm: f64 = g.energy().sqrt();
        let err: f64 = g
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err / norm < 1e-12, "relative error {}", err / norm);
    }

    #[test]
    fn matches_naive_dft_non_square() {
        let g = random_grid(6, 5, 3);
        let fast = fft2(&g, Direction::Forward).unwrap();
        let slow = naive_dft(&g);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn rejects_wrong_plan_size() {
        let mut plan = Fft2::new(4, 4, Direction::Forward).unwrap();
        let g = ComplexGrid::zeros(4, 8, 1.0).unwrap();
        match plan.apply(&g) {
            Err(Error::Dimension { axis, value }) => {
                assert_eq!(axis, Axis::Height);
                assert_eq!(value, 8);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn frequencies_follow_fftfreq() {
        assert_eq!(frequency(0, 4, 0.5), 0.0);
        assert_eq!(frequency(1, 4, 0.5), 0.5);
        assert_eq!(frequency(2, 4, 0.5), 1.0);
        assert_eq!(frequency(3, 4, 0.5), -0.5);
    }
}
