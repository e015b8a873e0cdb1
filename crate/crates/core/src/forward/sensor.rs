use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RealGrid;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModel {
    /// Counts per unit intensity.
    pub exposure_scale: f64,
    /// Gaussian read noise, counts.
    pub read_noise_sigma: f64,
    pub shot_noise: bool,
    pub bit_depth: u32,
    pub seed: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            exposure_scale: 2000.0,
            read_noise_sigma: 2.0,
            shot_noise: true,
            bit_depth: 12,
            seed: 0,
        }
    }
}

impl SensorModel {
    /// Noise-free, 16-bit, unit gain.
    pub fn ideal() -> Self {
        Self {
            exposure_scale: 1.0,
            read_noise_sigma: 0.0,
            shot_noise: false,
            bit_depth: 16,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exposure_scale > 0.0 && self.exposure_scale.is_finite()) {
            return Err(Error::Parameter(format!(
                "exposure_scale must be > 0, got {}",
                self.exposure_scale
            )));
        }
        if !(self.read_noise_sigma >= 0.0 && self.read_noise_sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "read_noise_sigma must be >= 0, got {}",
                self.read_noise_sigma
            )));
        }
        if !(1..=16).contains(&self.bit_depth) {
            return Err(Error::Parameter(format!("bit_depth must be in 1..=16, got {}", self.bit_depth)));
        }
        Ok(())
    }

    pub fn full_scale(&self) -> f64 {
        ((1u32 << self.bit_depth) - 1) as f64
    }
}

/// Converts an intensity frame to quantized sensor counts.
///
/// Shot noise replaces the mean `exposure_scale·I` by a Poisson draw; read
/// noise is added on top; the sum is clipped to `[0, 2^bits − 1]` and
/// rounded. The stream depends only on `(sensor.seed, frame_index)`.
pub fn capture_frame(i: &RealGrid, sensor: &SensorModel, frame_index: u64) -> Result<RealGrid> {
    sensor.validate()?;
    let mut rng = rng::stream(sensor.seed, &[0x5e_4503, frame_index]);
    let read = Normal::new(0.0, sensor.read_noise_sigma)
        .map_err(|e| Error::Parameter(format!("read noise: {e}")))?;
    let top = sensor.full_scale();
    let mut out = i.clone();
    for v in out.data_mut() {
        let mean = sensor.exposure_scale * v.max(0.0);
        let mut c = if sensor.shot_noise { poisson(mean, &mut rng)? } else { mean };
        if sensor.read_noise_sigma > 0.0 {
            c += read.sample(&mut rng);
        }
        *v = c.clamp(0.0, top).round();
    }
    Ok(out)
}

fn poisson<R: Rng>(mean: f64, rng: &mut R) -> Result<f64> {
    if mean <= 0.0 {
        return Ok(0.0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::Parameter(format!("shot noise mean {mean}: {e}")))?;
    Ok(d.sample(rng))
}
