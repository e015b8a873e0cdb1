//! Evaluation statistics, the noise quantifier and the Beer–Lambert
//! absorbance baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_blur, gaussian_kernel, RealGrid};

/// Scale factor of the median absolute deviation for normal consistency.
pub const RCV_K: f64 = 1.4826;

pub const NOISE_KSIZE: usize = 7;
pub const NOISE_SIGMA: f64 = 1.5;

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() || y.len() != y_hat.len() {
        return Err(Error::Parameter(format!(
            "metrics need equal non-zero lengths, got {} and {}",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    Ok((y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64).sqrt())
}

/// `1 − SSR/SST`.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    if y.len() < 2 {
        return Err(Error::Parameter("r2 needs at least two samples".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if sst == 0.0 {
        return Err(Error::Degenerate("r2 is undefined for constant targets".into()));
    }
    let ssr: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ssr / sst)
}

/// Median with the midpoint rule for even lengths.
pub fn median(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Parameter("median of an empty set".into()));
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Ok(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Robust coefficient of variation in percent:
/// `100 · k · median(|x − median(x)|) / median(x)`.
pub fn rcv(x: &[f64]) -> Result<f64> {
    let m = median(x)?;
    if m == 0.0 {
        return Err(Error::Degenerate("rcv is undefined for a zero median".into()));
    }
    let dev: Vec<f64> = x.iter().map(|v| (v - m).abs()).collect();
    Ok(100.0 * RCV_K * median(&dev)? / m.abs())
}

/// `100 · max(0, 1 − |ĉ − c*| / c*)`.
pub fn fidelity(c_hat: f64, c_true: f64) -> Result<f64> {
    if !(c_true > 0.0) {
        return Err(Error::Parameter(format!("true abundance must be > 0, got {c_true}")));
    }
    Ok(100.0 * (1.0 - (c_hat - c_true).abs() / c_true).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when the targets are constant.
    pub r2: Option<f64>,
    /// `None` when the median estimate is zero.
    pub rcv_percent: Option<f64>,
    /// Mean fidelity over samples with a positive truth; `None` if none.
    pub fidelity_percent: Option<f64>,
    pub n: usize,
}

impl MetricReport {
    pub fn new(y: &[f64], y_hat: &[f64]) -> Result<Self> {
        let mae = mae(y, y_hat)?;
        let rmse = rmse(y, y_hat)?;
        let r2 = match r2(y, y_hat) {
            Ok(v) => Some(v),
            Err(Error::Degenerate(_)) | Err(Error::Parameter(_)) => None,
            Err(e) => return Err(e),
        };
        let rcv_percent = rcv(y_hat).ok();
        let fids: Vec<f64> = y
            .iter()
            .zip(y_hat)
            .filter(|(t, _)| **t > 0.0)
            .map(|(t, e)| fidelity(*e, *t))
            .collect::<Result<_>>()?;
        let fidelity_percent = (!fids.is_empty()).then(|| fids.iter().sum::<f64>() / fids.len() as f64);
        Ok(Self {
            mae,
            rmse,
            r2,
            rcv_percent,
            fidelity_percent,
            n: y.len(),
        })
    }
}

/// Standard deviation of the high-pass residual `img − blur(img)`.
pub fn noise_level(img: &RealGrid, ksize: usize, sigma: f64) -> Result<f64> {
    let b = gaussian_blur(img, ksize, sigma)?;
    let r: Vec<f64> = img.data().iter().zip(b.data()).map(|(a, c)| a - c).collect();
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    Ok((r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt())
}

/// Ratio `noise_level / σ` for white Gaussian noise of standard deviation σ,
/// away from the borders: `√(1 − 2·w_c + Σ w²)` for the 2-D kernel `w`.
pub fn noise_calibration_factor(ksize: usize, sigma: f64) -> Result<f64> {
    let k = gaussian_kernel(ksize, sigma)?;
    let center = k[ksize / 2];
    let sum_sq_1d: f64 = k.iter().map(|v| v * v).sum();
    Ok((1.0 - 2.0 * center * center + sum_sq_1d * sum_sq_1d).sqrt())
}

/// Noise level converted to an estimate of the white-noise σ.
pub fn calibrated_noise_sigma(img: &RealGrid, ksize: usize, sigma: f64) -> Result<f64> {
    Ok(noise_level(img, ksize, sigma)? / noise_calibration_factor(ksize, sigma)?)
}

/// `A = ε·D·c`.
pub fn beer_lambert_absorbance(epsilon: f64, path_cm: f64, c: f64) -> Result<f64> {
    if epsilon < 0.0 || path_cm < 0.0 || c < 0.0 {
        return Err(Error::Parameter("Beer-Lambert inputs must be >= 0".into()));
    }
    Ok(epsilon * path_cm * c)
}

/// `c = A / (ε·D)`.
pub fn beer_lambert_concentration(absorbance: f64, epsilon: f64, path_cm: f64) -> Result<f64> {
    let ed = epsilon * path_cm;
    if !(ed > 0.0) {
        return Err(Error::Parameter(format!("epsilon·D must be > 0, got {ed}")));
    }
    Ok(absorbance / ed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UvVisPoint {
    pub c_true: f64,
    pub absorbance: f64,
    /// `None` when the reading is at saturation (out of range).
    pub c_est: Option<f64>,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UvVisConfig {
    /// Effective extinction coefficient per (mg/mL · cm).
    pub epsilon: f64,
    pub path_cm: f64,
    pub saturation_a: f64,
    /// Standard deviation of the multiplicative reading noise.
    pub relative_noise: f64,
    pub seed: u64,
}

impl Default for UvVisConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            path_cm: 1.0,
            saturation_a: 3.0,
            relative_noise: 0.0,
            seed: 0,
        }
    }
}

/// Simulated ensemble absorbance readings for a ladder of true abundances:
/// `A = min(ε·D·c·(1 + noise), A_sat)`, inverted with Beer–Lambert below
/// saturation and flagged out-of-range at it.
pub fn uvvis_baseline(ladder: &[f64], cfg: &UvVisConfig) -> Result<Vec<UvVisPoint>> {
    if ladder.is_empty() {
        return Err(Error::Parameter("uvvis ladder is empty".into()));
    }
    if !(cfg.saturation_a > 0.0) {
        return Err(Error::Parameter("saturation absorbance must be > 0".into()));
    }
    if !(cfg.relative_noise >= 0.0) {
        return Err(Error::Parameter("relative noise must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.relative_noise).map_err(|e| Error::Parameter(e.to_string()))?;
    ladder
        .iter()
        .map(|&c| {
            let ideal = beer_lambert_absorbance(cfg.epsilon, cfg.path_cm, c)?;
            let eta = if cfg.relative_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let a = (ideal * (1.0 + eta)).max(0.0);
            let saturated = a >= cfg.saturation_a;
            let absorbance = a.min(cfg.saturation_a);
            let c_est = if saturated {
                None
            } else {
                Some(beer_lambert_concentration(absorbance, cfg.epsilon, cfg.path_cm)?)
            };
            Ok(UvVisPoint {
                c_true: c,
                absorbance,
                c_est,
                saturated,
            })
        })
        .collect()
}

/// Decades spanned by a set of positive values.
pub fn decades(values: &[f64]) -> f64 {
    let pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    if pos.is_empty() {
        return 0.0;
    }
    let lo = pos.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pos.iter().copied().fold(0.0, f64::max);
    (hi / lo).log10()
}
