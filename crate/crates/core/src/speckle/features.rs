use super::autocorr::AutocorrMap;
use crate::error::{Error, Result};
use crate::numerics::{lag_radius, RealGrid};

pub const PROFILE_BINS: usize = 32;

/// Pooled intensity statistics of a set of frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStats {
    pub mean: f64,
    pub std: f64,
}

impl FrameStats {
    /// Population mean and standard deviation over every pixel of every frame.
    pub fn from_frames(frames: &[RealGrid]) -> Result<Self> {
        let n: usize = frames.iter().map(|f| f.len()).sum();
        if n == 0 {
            return Err(Error::Parameter("frame statistics need at least one sample".into()));
        }
        let mean = frames.iter().flat_map(|f| f.data()).sum::<f64>() / n as f64;
        let var = frames
            .iter()
            .flat_map(|f| f.data())
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n as f64;
        Ok(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleFeatures {
    /// `σ_I / ⟨I⟩`.
    pub contrast: f64,
    /// Lag (m) where the radial autocorrelation first drops below `1/e` of
    /// its zero-lag value; `None` if it never does or the map is degenerate.
    pub correlation_length: Option<f64>,
    /// Unit-pixel-width radial bins starting at zero lag, divided by the
    /// zero-lag value. Bins past the grid's largest lag are 0.
    pub radial_profile: Vec<f64>,
    pub mean_intensity: f64,
    /// Zero-lag value was not positive; profile and length carry no signal.
    pub degenerate: bool,
}

pub fn extract_features(map: &AutocorrMap, stats: FrameStats) -> Result<SpeckleFeatures> {
    extract_features_with(map, stats, PROFILE_BINS)
}

pub fn extract_features_with(map: &AutocorrMap, stats: FrameStats, n_bins: usize) -> Result<SpeckleFeatures> {
    if !map.mean_subtracted {
        return Err(Error::Parameter("features need a mean-subtracted autocorrelation".into()));
    }
    if n_bins == 0 {
        return Err(Error::Parameter("n_bins must be >= 1".into()));
    }
    let contrast = if stats.mean > 0.0 { stats.std / stats.mean } else { 0.0 };
    let z = map.zero_lag();
    if !(z > 0.0 && z.is_finite()) {
        return Ok(SpeckleFeatures {
            contrast,
            correlation_length: None,
            radial_profile: vec![0.0; n_bins],
            mean_intensity: stats.mean,
            degenerate: true,
        });
    }

    // Unit-width bins [i, i+1); bin 0 holds only the zero lag.
    let (w, h) = (map.grid.width(), map.grid.height());
    let mut sum = vec![0.0; n_bins];
    let mut rad = vec![0.0; n_bins];
    let mut cnt = vec![0usize; n_bins];
    for y in 0..h {
        for x in 0..w {
            let r = lag_radius(x, y, w, h);
            let b = r.floor() as usize;
            if b < n_bins {
                sum[b] += map.grid.get(x, y);
                rad[b] += r;
                cnt[b] += 1;
            }
        }
    }
    let bins: Vec<Option<(f64, f64)>> = (0..n_bins)
        .map(|i| (cnt[i] > 0).then(|| (rad[i] / cnt[i] as f64, sum[i] / cnt[i] as f64 / z)))
        .collect();
    let radial_profile = bins.iter().map(|b| b.map_or(0.0, |(_, v)| v)).collect();

    let threshold = (-1.0f64).exp();
    let mut correlation_length = None;
    let mut prev = (0.0, 1.0);
    for &(r, v) in bins.iter().skip(1).flatten() {
        if v < threshold {
            let t = (prev.1 - threshold) / (prev.1 - v);
            correlation_length = Some((prev.0 + t * (r - prev.0)) * map.grid.pitch());
            break;
        }
        prev = (r, v);
    }

    Ok(SpeckleFeatures {
        contrast,
        correlation_length,
        radial_profile,
        mean_intensity: stats.mean,
        degenerate: false,
    })
}
