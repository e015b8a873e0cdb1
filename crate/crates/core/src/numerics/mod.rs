//! Deterministic 2-D numerics: grids, FFTs, correlations, blur, radial
//! reductions. Everything is double precision and pure; FFT plans and
//! scratch buffers are owned by the caller.

mod blur;
mod correlate;
mod fft;
mod grid;
mod radial;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use correlate::{cross_correlate, cross_correlate_with, Autocorrelator, Boundary};
pub use fft::{fft2, frequency, Direction, Fft2};
pub use grid::{lag_radius, signed_lag, ComplexGrid, GridShape, RealGrid};
pub use radial::{max_lag_radius, radial_profile, radial_profile_with_width, RadialBin};

/// Pairwise (cascade) summation of equally sized vectors, in input order.
///
/// The tree shape depends only on the number of inputs, so the result is
/// reproducible regardless of how the inputs were produced.
pub fn pairwise_sum(mut parts: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    if parts.is_empty() {
        return None;
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pairwise_sum_matches_sequential() {
        let parts: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, 1.0]).collect();
        assert_eq!(pairwise_sum(parts), Some(vec![21.0, 7.0]));
        assert_eq!(pairwise_sum(Vec::new()), None);
    }

    #[test]
    fn parseval_up_to_256() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(w, h) in &[(8usize, 8usize), (64, 32), (256, 256)] {
            let g = ComplexGrid::from_fn(w, h, 1.0, |_, _| {
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            })
            .unwrap();
            let f = fft2(&g, Direction::Forward).unwrap();
            let lhs = g.energy();
            let rhs = f.energy() / (w * h) as f64;
            assert!((lhs - rhs).abs() <= 1e-10 * lhs, "{w}x{h}: {lhs} vs {rhs}");
        }
    }
}
