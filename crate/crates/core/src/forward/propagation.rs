use std::f64::consts::PI;

use num_complex::Complex64;

use super::transmission::{SynthesisMode, TransmissionField};
use crate::error::{Error, Result};
use crate::numerics::{frequency, ComplexGrid, Direction, Fft2, GridShape, RealGrid};
use crate::scene::OpticalConfig;

/// Angular-spectrum transfer function sampled on the grid's frequency raster.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationKernel {
    pub transfer: ComplexGrid,
    pub z: f64,
    pub medium_wavelength: f64,
}

/// `H(f) = exp(j·2π·z·√(1/λ_m² − |f|²))`, zero for evanescent `f`.
pub fn make_kernel(cfg: &OpticalConfig, z: f64) -> Result<PropagationKernel> {
    cfg.validate()?;
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::Parameter(format!("propagation distance must be >= 0, got {z}")));
    }
    let lm = cfg.medium_wavelength();
    let inv_l2 = 1.0 / (lm * lm);
    let (w, h, p) = (cfg.grid_width, cfg.grid_height, cfg.pixel_pitch);
    let transfer = ComplexGrid::from_fn(w, h, p, |x, y| {
        let fx = frequency(x, w, p);
        let fy = frequency(y, h, p);
        let arg = inv_l2 - fx * fx - fy * fy;
        if arg < 0.0 {
            Complex64::new(0.0, 0.0)
        } else if z == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, 2.0 * PI * z * arg.sqrt())
        }
    })?;
    Ok(PropagationKernel {
        transfer,
        z,
        medium_wavelength: lm,
    })
}

/// Forward/inverse plan pair for repeated propagation on one grid size.
pub struct Propagator {
    forward: Fft2,
    inverse: Fft2,
}

impl Propagator {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Ok(Self {
            forward: Fft2::new(width, height, Direction::Forward)?,
            inverse: Fft2::new(width, height, Direction::Inverse)?,
        })
    }

    pub fn for_grid<T: GridShape>(g: &T) -> Result<Self> {
        let (w, h, _) = g.shape();
        Self::new(w, h)
    }

    /// Propagates `field` in place through `kernel`.
    pub fn propagate_in_place(&mut self, field: &mut ComplexGrid, kernel: &PropagationKernel) -> Result<()> {
        field.ensure_same_shape(&kernel.transfer)?;
        self.forward.apply_in_place(field)?;
        field
            .data_mut()
            .iter_mut()
            .zip(kernel.transfer.data())
            .for_each(|(v, t)| *v *= t);
        self.inverse.apply_in_place(field)
    }

    pub fn propagate(&mut self, s: &ComplexGrid, kernel: &PropagationKernel) -> Result<ComplexGrid> {
        let mut out = s.clone();
        self.propagate_in_place(&mut out, kernel)?;
        Ok(out)
    }

    /// Modulate-then-propagate cascade: inter-slice steps use `k_dz`, the
    /// exit field of the last slice is propagated to the sensor with `k_out`.
    pub fn multislice(
        &mut self,
        slices: &[TransmissionField],
        k_dz: &PropagationKernel,
        k_out: &PropagationKernel,
    ) -> Result<ComplexGrid> {
        let (first, rest) = slices
            .split_first()
            .ok_or_else(|| Error::Parameter("multislice needs at least one slice".into()))?;
        for s in slices {
            if s.mode != SynthesisMode::Multiplicative {
                return Err(Error::Parameter("multislice slices must be multiplicative".into()));
            }
            s.grid.ensure_same_shape(&first.grid)?;
        }
        let mut e = first.grid.clone();
        for s in rest {
            self.propagate_in_place(&mut e, k_dz)?;
            e.data_mut().iter_mut().zip(s.grid.data()).for_each(|(v, m)| *v *= m);
        }
        self.propagate_in_place(&mut e, k_out)?;
        Ok(e)
    }
}

/// `E = F⁻¹{F{S}·H}`.
pub fn propagate(s: &TransmissionField, kernel: &PropagationKernel) -> Result<ComplexGrid> {
    s.grid.ensure_same_shape(&kernel.transfer)?;
    Propagator::for_grid(&s.grid)?.propagate(&s.grid, kernel)
}

/// Multislice cascade using `k_dz` for every step, including the last.
pub fn propagate_multislice(slices: &[TransmissionField], k_dz: &PropagationKernel) -> Result<ComplexGrid> {
    propagate_multislice_to(slices, k_dz, k_dz)
}

pub fn propagate_multislice_to(
    slices: &[TransmissionField],
    k_dz: &PropagationKernel,
    k_out: &PropagationKernel,
) -> Result<ComplexGrid> {
    let first = slices
        .first()
        .ok_or_else(|| Error::Parameter("multislice needs at least one slice".into()))?;
    Propagator::for_grid(&first.grid)?.multislice(slices, k_dz, k_out)
}

pub fn intensity(e: &ComplexGrid) -> RealGrid {
    e.map_real(|c| c.norm_sqr())
}
