use crate::error::Result;
use crate::forward::{propagate, PropagationKernel, TransmissionField};
use crate::numerics::{cross_correlate, fft2, Direction};

/// Checks the coherent factorization `F{E⋆E} = |F{S}|²·|H|²` with
/// `E = propagate(S, H)`.
///
/// Returns the larger of two residuals, each normalized by the peak of the
/// predicted quantity: the spectral one (`|F{E}|²` against `|F{S}|²·|H|²`)
/// and the lag-domain one (`E⋆E` from a direct correlation against the
/// inverse transform of the predicted spectrum).
pub fn verify_field_identity(s: &TransmissionField, k: &PropagationKernel) -> Result<f64> {
    let e = propagate(s, k)?;
    let fe = fft2(&e, Direction::Forward)?;
    let fs = fft2(&s.grid, Direction::Forward)?;

    let mut predicted = fs.clone();
    for ((p, f), t) in predicted.data_mut().iter_mut().zip(fs.data()).zip(k.transfer.data()) {
        *p = (f.norm_sqr() * t.norm_sqr()).into();
    }
    let spectral = relative_residual(
        fe.data().iter().map(|v| v.norm_sqr()),
        predicted.data().iter().map(|v| v.re),
    );

    let corr = cross_correlate(&e, &e)?;
    let corr_pred = fft2(&predicted, Direction::Inverse)?;
    let lag = relative_residual_c(corr.data(), corr_pred.data());
    Ok(spectral.max(lag))
}

fn relative_residual(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    let (mut diff, mut peak) = (0.0f64, 0.0f64);
    for (x, y) in a.zip(b) {
        diff = diff.max((x - y).abs());
        peak = peak.max(y.abs());
    }
    if peak > 0.0 {
        diff / peak
    } else {
        diff
    }
}

fn relative_residual_c(a: &[num_complex::Complex64], b: &[num_complex::Complex64]) -> f64 {
    let (mut diff, mut peak) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        diff = diff.max((x - y).norm());
        peak = peak.max(y.norm());
    }
    if peak > 0.0 {
        diff / peak
    } else {
        diff
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{make_kernel, SynthesisMode};
    use crate::numerics::ComplexGrid;
    use crate::scene::OpticalConfig;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_s(n: usize, seed: u64) -> TransmissionField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TransmissionField {
            grid: ComplexGrid::from_fn(n, n, 3.45e-6, |_, _| {
                Complex64::from_polar(rng.random_range(0.0..1.0), rng.random_range(-3.2..3.2))
            })
            .unwrap(),
            mode: SynthesisMode::Multiplicative,
        }
    }

    #[test]
    fn zero_distance() {
        let cfg = OpticalConfig::default().with_grid(32, 32);
        let k = make_kernel(&cfg, 0.0).unwrap();
        assert!(verify_field_identity(&random_s(32, 1), &k).unwrap() <= 1e-12);
    }

    #[test]
    fn random_fields_and_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cfg = OpticalConfig::default().with_grid(64, 64);
        for seed in 0..5 {
            let z = rng.random_range(0.0..5e-3);
            let k = make_kernel(&cfg, z).unwrap();
            assert!(verify_field_identity(&random_s(64, seed), &k).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn uniform_field() {
        let cfg = OpticalConfig::default().with_grid(16, 16);
        let s = TransmissionField::uniform(&cfg, SynthesisMode::Multiplicative).unwrap();
        let k = make_kernel(&cfg, 1e-3).unwrap();
        assert!(verify_field_identity(&s, &k).unwrap() <= 1e-12);
    }
}
