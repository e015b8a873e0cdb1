use rayon::prelude::*;

use super::features::FrameStats;
use crate::error::{Error, Result};
use crate::numerics::{lag_radius, pairwise_sum, Autocorrelator, RealGrid};

/// Ensemble-averaged intensity autocorrelation, zero lag at `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrMap {
    pub grid: RealGrid,
    pub n_frames_averaged: usize,
    pub mean_subtracted: bool,
    /// Each frame's map was divided by that frame's mean intensity.
    pub contrast_normalized: bool,
    pub config_hash: Option<String>,
    /// Pooled intensity statistics of the frames that went in.
    pub frame_stats: FrameStats,
}

impl AutocorrMap {
    pub fn zero_lag(&self) -> f64 {
        self.grid.get(0, 0)
    }

    /// Values at the lags selected by `mask`, in row-major order.
    pub fn masked(&self, mask: &LagMask) -> Vec<f64> {
        mask.indices(self.grid.width(), self.grid.height())
            .into_iter()
            .map(|i| self.grid.data()[i])
            .collect()
    }
}

/// Annulus of lags `r_min <= |τ| <= r_max` (pixels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagMask {
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for LagMask {
    /// The informative lags, 1 to 5 pixels.
    fn default() -> Self {
        Self { r_min: 1.0, r_max: 5.0 }
    }
}

impl LagMask {
    pub fn new(r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_min >= 0.0 && r_max >= r_min && r_max.is_finite()) {
            return Err(Error::Parameter(format!("invalid lag annulus [{r_min}, {r_max}]")));
        }
        Ok(Self { r_min, r_max })
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.r_min && r <= self.r_max
    }

    pub fn indices(&self, width: usize, height: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for y in 0..height {
            for x in 0..width {
                if self.contains(lag_radius(x, y, width, height)) {
                    out.push(y * width + x);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleOptions {
    pub subtract_mean: bool,
    pub contrast_normalize: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            subtract_mean: true,
            contrast_normalize: false,
        }
    }
}

impl EnsembleOptions {
    /// Mean-subtracted and divided by each frame's mean intensity: the
    /// convention used by basis kernels and unmixing.
    pub fn normalized() -> Self {
        Self {
            subtract_mean: true,
            contrast_normalize: true,
        }
    }
}

/// Frames per reduction chunk. Fixed so that the summation tree, and hence
/// every bit of the result, is independent of the thread count.
const CHUNK: usize = 4;

/// `r(τ) = Σ_x (I(x) − Ī)(I(x+τ) − Ī)`, or without the `Ī` when
/// `subtract_mean` is false.
pub fn intensity_autocorr(i: &RealGrid, subtract_mean: bool) -> Result<AutocorrMap> {
    ensemble_autocorr_with(
        std::slice::from_ref(i),
        EnsembleOptions {
            subtract_mean,
            contrast_normalize: false,
        },
    )
}

/// Arithmetic mean of per-frame autocorrelations.
pub fn ensemble_autocorr(frames: &[RealGrid], subtract_mean: bool) -> Result<AutocorrMap> {
    ensemble_autocorr_with(
        frames,
        EnsembleOptions {
            subtract_mean,
            contrast_normalize: false,
        },
    )
}

pub fn ensemble_autocorr_with(frames: &[RealGrid], opts: EnsembleOptions) -> Result<AutocorrMap> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Parameter("ensemble needs at least one frame".into()))?;
    for f in frames {
        f.ensure_same_shape(first)?;
    }
    let (w, h, pitch) = (first.width(), first.height(), first.pitch());
    ensemble_from_generator(frames.len(), w, h, pitch, opts, || Ok(()), |_, k| Ok(frames[k].clone()))
}

/// Ensemble over `n_frames` frames produced on demand by `generate(state, k)`.
///
/// `init` builds per-worker state (FFT plans, propagators). Frames are
/// processed in parallel, reduced in fixed-size chunks in frame order and the
/// chunk sums combined pairwise, so the output is bitwise reproducible.
pub fn ensemble_from_generator<S, I, G>(
    n_frames: usize,
    width: usize,
    height: usize,
    pitch: f64,
    opts: EnsembleOptions,
    init: I,
    generate: G,
) -> Result<AutocorrMap>
where
    I: Fn() -> Result<S> + Sync,
    G: Fn(&mut S, usize) -> Result<RealGrid> + Sync,
{
    if n_frames == 0 {
        return Err(Error::Parameter("ensemble needs at least one frame".into()));
    }
    let n_chunks = n_frames.div_ceil(CHUNK);
    let partials: Vec<(Vec<f64>, Moments)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<(Vec<f64>, Moments)> {
            let mut state = init()?;
            let mut ac = Autocorrelator::new(width, height)?;
            let mut acc = vec![0.0; width * height];
            let mut moments = Moments::default();
            for k in c * CHUNK..((c + 1) * CHUNK).min(n_frames) {
                let frame = generate(&mut state, k)?;
                if frame.width() != width || frame.height() != height {
                    return Err(Error::Shape(format!(
                        "frame {k} is {}x{}, expected {width}x{height}",
                        frame.width(),
                        frame.height()
                    )));
                }
                let mean = frame.mean();
                let m2 = frame.data().iter().map(|v| (v - mean) * (v - mean)).sum();
                moments.merge(Moments {
                    n: frame.len() as f64,
                    mean,
                    m2,
                });
                let offset = if opts.subtract_mean { mean } else { 0.0 };
                let r = ac.autocorrelate(&frame, offset)?;
                let scale = if opts.contrast_normalize && mean > 0.0 { 1.0 / mean } else { 1.0 };
                acc.iter_mut().zip(r.data()).for_each(|(a, v)| *a += v * scale);
            }
            Ok((acc, moments))
        })
        .collect::<Result<_>>()?;
    let mut moments = Moments::default();
    let mut maps = Vec::with_capacity(partials.len());
    for (acc, m) in partials {
        moments.merge(m);
        maps.push(acc);
    }
    let mut sum = pairwise_sum(maps).expect("at least one chunk");
    let inv = 1.0 / n_frames as f64;
    sum.iter_mut().for_each(|v| *v *= inv);
    Ok(AutocorrMap {
        grid: RealGrid::new(width, height, pitch, sum)?,
        n_frames_averaged: n_frames,
        mean_subtracted: opts.subtract_mean,
        contrast_normalized: opts.contrast_normalize,
        config_hash: None,
        frame_stats: FrameStats {
            mean: moments.mean,
            std: (moments.m2 / moments.n).sqrt(),
        },
    })
}

/// Count, mean and sum of squared deviations, merged in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn merge(&mut self, o: Moments) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> RealGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealGrid::from_fn(w, h, 1.0, |_, _| rng.random::<f64>() * 3.0 + 1.0).unwrap()
    }

    #[test]
    fn constant_image_mean_subtracted_is_zero() {
        let g = RealGrid::filled(16, 8, 1.0, 4.5).unwrap();
        let m = intensity_autocorr(&g, true).unwrap();
        assert!(m.grid.data().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(m.n_frames_averaged, 1);
        assert!(m.mean_subtracted);
    }

    #[test]
    fn delta_image_brute_force_4x4() {
        let mut g = RealGrid::filled(4, 4, 1.0, 1.0).unwrap();
        g.set(1, 2, 5.0);
        let m = intensity_autocorr(&g, false).unwrap();
        for ty in 0..4 {
            for tx in 0..4 {
                let mut want = 0.0;
                for y in 0..4 {
                    for x in 0..4 {
                        want += g.get(x, y) * g.get((x + tx) % 4, (y + ty) % 4);
                    }
                }
                assert!((m.grid.get(tx, ty) - want).abs() < 1e-12);
            }
        }
        // 15 ones + one 5: zero lag 15 + 25 = 40, other lags 14 + 2·5 = 24.
        assert!((m.zero_lag() - 40.0).abs() < 1e-12);
        assert!((m.grid.get(1, 0) - 24.0).abs() < 1e-12);
    }

    #[test]
    fn zero_lag_is_sum_of_squared_deviations() {
        let g = noise(12, 10, 3);
        let m = intensity_autocorr(&g, true).unwrap();
        let mu = g.mean();
        let ss: f64 = g.data().iter().map(|v| (v - mu) * (v - mu)).sum();
        assert!((m.zero_lag() - ss).abs() < 1e-10 * ss);
    }

    #[test]
    fn symmetric_and_zero_lag_dominant() {
        let g = noise(16, 12, 9);
        let m = intensity_autocorr(&g, true).unwrap();
        let z = m.zero_lag();
        for y in 0..12 {
            for x in 0..16 {
                let v = m.grid.get(x, y);
                assert!(v <= z + 1e-12);
                let neg = m.grid.get((16 - x) % 16, (12 - y) % 12);
                assert!((v - neg).abs() < 1e-10 * z);
            }
        }
    }

    #[test]
    fn ensemble_examples() {
        let g = noise(8, 8, 1);
        let one = ensemble_autocorr(std::slice::from_ref(&g), true).unwrap();
        assert_eq!(one, intensity_autocorr(&g, true).unwrap());
        let copies = ensemble_autocorr(&vec![g.clone(); 7], true).unwrap();
        for (a, b) in copies.grid.data().iter().zip(one.grid.data()) {
            assert!((a - b).abs() < 1e-12 * one.zero_lag());
        }
        assert_eq!(copies.n_frames_averaged, 7);
        assert!(matches!(ensemble_autocorr(&[], true), Err(Error::Parameter(_))));
    }

    #[test]
    fn ensemble_is_linear_mean_and_matches_sequential() {
        let frames: Vec<RealGrid> = (0..13).map(|s| noise(16, 16, s)).collect();
        let m = ensemble_autocorr(&frames, true).unwrap();
        let mut seq = vec![0.0; 256];
        for f in &frames {
            let r = intensity_autocorr(f, true).unwrap();
            seq.iter_mut().zip(r.grid.data()).for_each(|(a, v)| *a += v);
        }
        for (a, b) in m.grid.data().iter().zip(&seq) {
            assert!((a - b / 13.0).abs() < 1e-12 * m.zero_lag());
        }
        let pooled = FrameStats::from_frames(&frames).unwrap();
        assert!((m.frame_stats.mean - pooled.mean).abs() < 1e-12 * pooled.mean);
        assert!((m.frame_stats.std - pooled.std).abs() < 1e-12 * pooled.std);
    }

    #[test]
    fn ensemble_is_bitwise_reproducible_across_pools() {
        let frames: Vec<RealGrid> = (0..21).map(|s| noise(16, 16, s)).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ensemble_autocorr_with(&frames, EnsembleOptions::normalized()).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn contrast_normalization_divides_by_frame_mean() {
        let g = noise(8, 8, 4);
        let raw = intensity_autocorr(&g, true).unwrap();
        let n = ensemble_autocorr_with(std::slice::from_ref(&g), EnsembleOptions::normalized()).unwrap();
        assert!((n.zero_lag() * g.mean() - raw.zero_lag()).abs() < 1e-10 * raw.zero_lag());
        assert!(n.contrast_normalized);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let frames = vec![noise(8, 8, 1), noise(8, 4, 2)];
        assert!(matches!(ensemble_autocorr(&frames, true), Err(Error::Shape(_))));
    }

    #[test]
    fn lag_mask_annulus() {
        let idx = LagMask::default().indices(16, 16);
        // Integer lags with 1 <= |τ| <= 5.
        let mut want = 0;
        for dy in -8i64..8 {
            for dx in -8i64..8 {
                let r = ((dx * dx + dy * dy) as f64).sqrt();
                if (1.0..=5.0).contains(&r) {
                    want += 1;
                }
            }
        }
        assert_eq!(idx.len(), want);
        assert!(LagMask::new(3.0, 2.0).is_err());
    }
}
