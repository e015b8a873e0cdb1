use holospeck::metrics::{
    noise_calibration_factor, noise_level, uvvis_baseline, UvVisConfig, NOISE_KSIZE, NOISE_SIGMA,
};
use holospeck::numerics::RealGrid;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `noise_level / σ` for white noise with the default 7-tap, σ = 1.5 blur,
/// from the normalized 1-D taps `w`: `√(1 − 2·w₀² + (Σw²)²)`.
const CALIBRATION_7_1_5: f64 = 0.9441193473324935;

fn white(w: usize, h: usize, sigma: f64, seed: u64) -> RealGrid {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma).unwrap();
    RealGrid::from_fn(w, h, 1.0, |_, _| 100.0 + n.sample(&mut r)).unwrap()
}

#[test]
fn calibration_table_matches_closed_form_and_simulation() {
    let f = noise_calibration_factor(NOISE_KSIZE, NOISE_SIGMA).unwrap();
    assert!((f - CALIBRATION_7_1_5).abs() < 1e-12);
    let mut ratios = Vec::new();
    for seed in 0..4 {
        ratios.push(noise_level(&white(512, 512, 2.0, seed), NOISE_KSIZE, NOISE_SIGMA).unwrap() / 2.0);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - CALIBRATION_7_1_5).abs() < 0.005, "simulated factor {mean}");
}

#[test]
fn doubling_noise_doubles_the_estimate() {
    let a = noise_level(&white(256, 256, 1.0, 9), NOISE_KSIZE, NOISE_SIGMA).unwrap();
    let b = noise_level(&white(256, 256, 2.0, 10), NOISE_KSIZE, NOISE_SIGMA).unwrap();
    assert!((b / a - 2.0).abs() < 0.1, "ratio {}", b / a);
}

#[test]
fn estimate_is_monotone_in_noise_amplitude() {
    let base = white(128, 128, 1.0, 1);
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let shape = Normal::new(0.0, 1.0).unwrap();
    let extra: Vec<f64> = (0..base.len()).map(|_| shape.sample(&mut r)).collect();
    let mut last = 0.0;
    for amp in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
        let img = RealGrid::new(
            128,
            128,
            1.0,
            base.data().iter().zip(&extra).map(|(v, e)| v + amp * e).collect(),
        )
        .unwrap();
        let n = noise_level(&img, NOISE_KSIZE, NOISE_SIGMA).unwrap();
        assert!(n >= last, "amplitude {amp}: {n} < {last}");
        last = n;
    }
}

#[test]
fn noisy_uvvis_is_unbiased_below_saturation() {
    let ladder: Vec<f64> = (1..=200).map(|k| 0.01 * k as f64).collect();
    let cfg = UvVisConfig {
        relative_noise: 0.02,
        seed: 3,
        ..UvVisConfig::default()
    };
    let pts = uvvis_baseline(&ladder, &cfg).unwrap();
    assert!(pts.iter().all(|p| !p.saturated));
    let mean_ratio = pts.iter().map(|p| p.c_est.unwrap() / p.c_true).sum::<f64>() / pts.len() as f64;
    // 200 draws at 2% relative noise: σ of the mean is ~0.0014.
    assert!((mean_ratio - 1.0).abs() < 0.005, "{mean_ratio}");
}
