use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ComplexGrid;
use crate::scene::{OpticalConfig, Particle, Species};

/// How per-particle masks are combined into one transmission field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisMode {
    /// Product of per-particle masks; passive (`|S| <= 1`).
    #[default]
    Multiplicative,
    /// `1 + Σ (mask_i - 1)`: single-scattering superposition.
    AdditiveWeak,
}

impl SynthesisMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SynthesisMode::Multiplicative => "multiplicative",
            SynthesisMode::AdditiveWeak => "additive-weak",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "multiplicative" => Ok(SynthesisMode::Multiplicative),
            "additive-weak" | "additive" => Ok(SynthesisMode::AdditiveWeak),
            other => Err(Error::Parameter(format!("unknown synthesis mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionField {
    pub grid: ComplexGrid,
    pub mode: SynthesisMode,
}

impl TransmissionField {
    pub fn uniform(cfg: &OpticalConfig, mode: SynthesisMode) -> Result<Self> {
        Ok(Self {
            grid: ComplexGrid::filled(
                cfg.grid_width,
                cfg.grid_height,
                cfg.pixel_pitch,
                Complex64::new(1.0, 0.0),
            )?,
            mode,
        })
    }
}

/// Complex exponent per unit thickness: the mask of a slab of thickness `t`
/// is `exp(α·t)` with `α = k·(j·(n_r − n₀) − n_i)`, `k = 2π/λ`.
pub fn thickness_exponent(species: &Species, cfg: &OpticalConfig) -> Complex64 {
    let k = 2.0 * PI / cfg.wavelength;
    Complex64::new(-k * species.n_imag, k * (species.n_real - cfg.medium_index))
}

/// `∫∫_disk (exp(α·ω(ρ)) − 1) dA` for a sphere of radius `r`, with chord
/// thickness `ω(ρ) = 2√(r² − ρ²)`.
///
/// Substituting `u = √(r² − ρ²)` gives `2π ∫₀ʳ u (e^{2αu} − 1) du`.
pub fn disk_integral(alpha: Complex64, r: f64) -> Complex64 {
    let beta = 2.0 * alpha;
    let br = beta * r;
    let inner = if br.norm() < 0.5 {
        // Σ_{k≥1} β^k r^{k+2} / (k! (k+2))
        let mut term = Complex64::new(r * r, 0.0); // β^0 r^2 / 0!
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 1..60 {
            term *= br / k as f64;
            let add = term / (k as f64 + 2.0);
            acc += add;
            if add.norm() <= 1e-18 * acc.norm() {
                break;
            }
        }
        acc
    } else {
        let e = br.exp();
        e * (r / beta - 1.0 / (beta * beta)) + 1.0 / (beta * beta) - r * r / 2.0
    };
    2.0 * PI * inner
}

/// Builds the transmission field for one realization.
///
/// Particles at least one pixel across are rasterized by evaluating the
/// chord mask at pixel centers (periodic wrap at the borders). Smaller
/// particles deposit their area-integrated perturbation
/// [`disk_integral`]` / pitch²` into the pixel containing their center.
pub fn synthesize_transmission(
    particles: &[Particle],
    species: &[Species],
    cfg: &OpticalConfig,
    mode: SynthesisMode,
) -> Result<TransmissionField> {
    let mut field = TransmissionField::uniform(cfg, mode)?;
    let (w, h) = (cfg.grid_width, cfg.grid_height);
    let pitch = cfg.pixel_pitch;
    let extent = w.min(h) as f64 * pitch;
    let alphas: Vec<Complex64> = species.iter().map(|s| thickness_exponent(s, cfg)).collect();
    let data = field.grid.data_mut();

    let mut apply = |idx: usize, mask: Complex64| match mode {
        SynthesisMode::Multiplicative => data[idx] *= mask,
        SynthesisMode::AdditiveWeak => data[idx] += mask - 1.0,
    };

    for p in particles {
        let alpha = *alphas.get(p.population).ok_or_else(|| {
            Error::Parameter(format!("particle references unknown population {}", p.population))
        })?;
        if p.diameter > extent {
            return Err(Error::Geometry(format!(
                "particle diameter {:.3e} m exceeds grid extent {:.3e} m",
                p.diameter, extent
            )));
        }
        let r = 0.5 * p.diameter;
        if p.diameter < pitch {
            let px = (p.x.floor() as usize).min(w - 1);
            let py = (p.y.floor() as usize).min(h - 1);
            let delta = disk_integral(alpha, r) / (pitch * pitch);
            apply(py * w + px, 1.0 + delta);
            continue;
        }
        let r_px = r / pitch;
        let (x0, x1) = ((p.x - r_px).floor() as i64, (p.x + r_px).ceil() as i64);
        let (y0, y1) = ((p.y - r_px).floor() as i64, (p.y + r_px).ceil() as i64);
        for iy in y0..=y1 {
            let dy = (iy as f64 + 0.5 - p.y) * pitch;
            for ix in x0..=x1 {
                let dx = (ix as f64 + 0.5 - p.x) * pitch;
                let rho2 = dx * dx + dy * dy;
                if rho2 > r * r {
                    continue;
                }
                let thickness = 2.0 * (r * r - rho2).sqrt();
                let gx = ix.rem_euclid(w as i64) as usize;
                let gy = iy.rem_euclid(h as i64) as usize;
                apply(gy * w + gx, (alpha * thickness).exp());
            }
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::materials;

    fn cfg() -> OpticalConfig {
        OpticalConfig::default().with_grid(32, 32)
    }

    fn one(x: f64, y: f64, diameter: f64) -> Vec<Particle> {
        vec![Particle {
            x,
            y,
            depth: 0.5,
            diameter,
            population: 0,
        }]
    }

    /// Midpoint-rule quadrature of the disk integral over ρ, independent of
    /// the closed form.
    fn quadrature(alpha: Complex64, r: f64) -> Complex64 {
        let n = 200_000;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let rho = (i as f64 + 0.5) / n as f64 * r;
            let w = 2.0 * (r * r - rho * rho).sqrt();
            acc += ((alpha * w).exp() - 1.0) * 2.0 * PI * rho * (r / n as f64);
        }
        acc
    }

    #[test]
    fn disk_integral_matches_quadrature() {
        let c = cfg();
        for s in [
            materials::tio2("t", 500e-9),
            materials::tio2("t", 200e-9),
            materials::pmma("p", 70e-9),
            materials::gold("g", 100e-9),
        ] {
            let a = thickness_exponent(&s, &c);
            let r = s.diameter / 2.0;
            let exact = disk_integral(a, r);
            let quad = quadrature(a, r);
            assert!((exact - quad).norm() <= 1e-6 * quad.norm(), "{}: {exact} vs {quad}", s.name);
        }
    }

    #[test]
    fn disk_integral_branches_agree() {
        // Evaluate just on either side of the series/closed-form switch.
        let r = 1e-7;
        for scale in [0.4999, 0.5001] {
            let alpha = Complex64::new(-0.3, 1.0).unscale(Complex64::new(-0.3, 1.0).norm()) * (scale / (2.0 * r));
            let a = disk_integral(alpha, r);
            let b = quadrature(alpha, r);
            assert!((a - b).norm() <= 1e-6 * b.norm());
        }
    }

    #[test]
    fn no_particles_gives_unit_field() {
        for mode in [SynthesisMode::Multiplicative, SynthesisMode::AdditiveWeak] {
            let s = synthesize_transmission(&[], &[], &cfg(), mode).unwrap();
            assert!(s.grid.data().iter().all(|&v| v == Complex64::new(1.0, 0.0)));
        }
    }

    #[test]
    fn resolved_particle_center_phase() {
        let c = cfg();
        let d = 10e-6;
        let sp = Species::new("big", 1.5, 0.0, d, 1000.0).unwrap();
        let s = synthesize_transmission(&one(16.5, 16.5, d), &[sp], &c, SynthesisMode::Multiplicative).unwrap();
        let v = s.grid.get(16, 16);
        let phase = 2.0 * PI / c.wavelength * (1.5 - c.medium_index) * d;
        let expect = Complex64::from_polar(1.0, phase);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!((v - expect).norm() < 1e-12);
    }

    #[test]
    fn opaque_limit() {
        let c = cfg();
        let d = 10e-6;
        let sp = Species::new("ink", 1.33, 5.0, d, 1000.0).unwrap();
        let s = synthesize_transmission(&one(16.5, 16.5, d), &[sp], &c, SynthesisMode::Multiplicative).unwrap();
        assert!(s.grid.get(16, 16).norm() < 1e-30);
        assert!(s.grid.get(0, 0) == Complex64::new(1.0, 0.0));
    }

    #[test]
    fn index_matched_particle_is_invisible() {
        let c = cfg();
        let sp = Species::new("ghost", c.medium_index, 0.0, 300e-9, 1000.0).unwrap();
        let big = Species::new("ghost2", c.medium_index, 0.0, 12e-6, 1000.0).unwrap();
        let mut ps = one(3.2, 4.7, 300e-9);
        ps.push(Particle {
            population: 1,
            ..one(20.0, 20.0, 12e-6)[0]
        });
        let s = synthesize_transmission(&ps, &[sp, big], &c, SynthesisMode::AdditiveWeak).unwrap();
        assert!(s.grid.data().iter().all(|v| (v - 1.0).norm() < 1e-15));
    }

    #[test]
    fn oversized_particle_is_a_geometry_error() {
        let c = OpticalConfig::default().with_grid(4, 4);
        let sp = Species::new("huge", 1.5, 0.0, 20e-6, 1000.0).unwrap();
        let err = synthesize_transmission(&one(2.0, 2.0, 20e-6), &[sp], &c, SynthesisMode::Multiplicative);
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn resolved_particle_wraps_periodically() {
        let c = cfg();
        let d = 8e-6;
        let sp = Species::new("edge", 1.6, 0.0, d, 1000.0).unwrap();
        let s = synthesize_transmission(&one(0.2, 0.2, d), &[sp], &c, SynthesisMode::Multiplicative).unwrap();
        assert!((s.grid.get(31, 31) - 1.0).norm() > 1e-3);
    }

    #[test]
    fn subpixel_deposit_is_passive_and_additive_modes_agree_to_first_order() {
        let c = cfg();
        let sp = materials::tio2("t", 500e-9);
        let ps = one(5.3, 7.9, 500e-9);
        let m = synthesize_transmission(&ps, std::slice::from_ref(&sp), &c, SynthesisMode::Multiplicative).unwrap();
        let a = synthesize_transmission(&ps, &[sp], &c, SynthesisMode::AdditiveWeak).unwrap();
        let v = m.grid.get(5, 7);
        assert!(v.norm() <= 1.0 + 1e-12);
        assert!((v - 1.0).norm() > 0.0);
        assert!((v - a.grid.get(5, 7)).norm() < 1e-15);
    }
}
