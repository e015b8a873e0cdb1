//! Optical configuration, particle species and populations, and seeded
//! sampling of particle realizations.
//!
//! Abundances are mass concentrations in mg/mL (numerically equal to kg/m³).
//! They become particle counts through the illuminated volume
//! `(W·pitch)·(H·pitch)·chamber_thickness` and the spherical particle mass.

use std::collections::HashSet;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalConfig {
    /// Vacuum wavelength, m.
    pub wavelength: f64,
    /// Sensor pixel pitch, m.
    pub pixel_pitch: f64,
    pub grid_width: usize,
    pub grid_height: usize,
    /// Distance from the particle plane to the sensor, m.
    pub propagation_distance: f64,
    /// Refractive index of the suspending medium.
    pub medium_index: f64,
    /// Depth of the illuminated sample volume, m.
    pub chamber_thickness: f64,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        Self {
            wavelength: 532e-9,
            pixel_pitch: 3.45e-6,
            grid_width: 256,
            grid_height: 256,
            propagation_distance: 2e-4,
            medium_index: 1.33,
            chamber_thickness: 1e-3,
        }
    }
}

impl OpticalConfig {
    /// Full 2464×2056 sensor with the default optics.
    pub fn full_sensor() -> Self {
        Self {
            grid_width: 2464,
            grid_height: 2056,
            ..Self::default()
        }
    }

    /// 256×256 with a 2 µm sample layer: keeps every species in the weak
    /// (single-scattering) regime up to ~10 mg/mL at tractable particle counts.
    pub fn desk_scale() -> Self {
        Self {
            chamber_thickness: 2e-6,
            ..Self::default()
        }
    }

    pub fn with_grid(mut self, width: usize, height: usize) -> Self {
        self.grid_width = width;
        self.grid_height = height;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength", self.wavelength),
            ("pixel_pitch", self.pixel_pitch),
            ("chamber_thickness", self.chamber_thickness),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.propagation_distance >= 0.0 && self.propagation_distance.is_finite()) {
            return Err(Error::Config(format!(
                "propagation_distance must be >= 0, got {}",
                self.propagation_distance
            )));
        }
        if !(self.medium_index >= 1.0 && self.medium_index.is_finite()) {
            return Err(Error::Config(format!(
                "medium_index must be >= 1, got {}",
                self.medium_index
            )));
        }
        if self.grid_width == 0 || self.grid_height == 0 {
            return Err(Error::Config(format!(
                "grid must be non-empty, got {}x{}",
                self.grid_width, self.grid_height
            )));
        }
        Ok(())
    }

    /// Wavelength inside the medium.
    pub fn medium_wavelength(&self) -> f64 {
        self.wavelength / self.medium_index
    }

    pub fn field_of_view_area(&self) -> f64 {
        (self.grid_width as f64 * self.pixel_pitch) * (self.grid_height as f64 * self.pixel_pitch)
    }

    pub fn illuminated_volume(&self) -> f64 {
        self.field_of_view_area() * self.chamber_thickness
    }

    /// Digest over every field that affects the physics.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"holospeck/optical-config/v1");
        for v in [
            self.wavelength,
            self.pixel_pitch,
            self.propagation_distance,
            self.medium_index,
            self.chamber_thickness,
        ] {
            h.update(v.to_le_bytes());
        }
        h.update((self.grid_width as u64).to_le_bytes());
        h.update((self.grid_height as u64).to_le_bytes());
        hex::encode(&h.finalize()[..16])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub name: String,
    pub n_real: f64,
    pub n_imag: f64,
    /// Nominal diameter, m.
    pub diameter: f64,
    /// kg/m³.
    pub mass_density: f64,
}

impl Species {
    pub fn new(name: impl Into<String>, n_real: f64, n_imag: f64, diameter: f64, mass_density: f64) -> Result<Self> {
        let s = Self {
            name: name.into(),
            n_real,
            n_imag,
            diameter,
            mass_density,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("species name must not be empty".into()));
        }
        let checks = [
            ("n_real", self.n_real > 0.0),
            ("n_imag", self.n_imag >= 0.0),
            ("diameter", self.diameter > 0.0),
            ("mass_density", self.mass_density > 0.0),
        ];
        for (field, ok) in checks {
            if !ok {
                return Err(Error::Config(format!("species '{}': invalid {field}", self.name)));
            }
        }
        if ![self.n_real, self.n_imag, self.diameter, self.mass_density]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Config(format!("species '{}': non-finite field", self.name)));
        }
        Ok(())
    }

    /// Mass of one particle at the nominal diameter, kg.
    pub fn particle_mass(&self) -> f64 {
        self.mass_density * PI / 6.0 * self.diameter.powi(3)
    }
}

/// Nominal optical constants at 532 nm for the materials used in the examples
/// and tests.
pub mod materials {
    use super::Species;

    fn make(name: &str, n_real: f64, n_imag: f64, diameter: f64, density: f64) -> Species {
        Species {
            name: name.to_string(),
            n_real,
            n_imag,
            diameter,
            mass_density: density,
        }
    }

    pub fn tio2(name: &str, diameter: f64) -> Species {
        make(name, 2.6, 0.0, diameter, 4230.0)
    }

    pub fn pmma(name: &str, diameter: f64) -> Species {
        make(name, 1.494, 0.0, diameter, 1180.0)
    }

    pub fn polystyrene(name: &str, diameter: f64) -> Species {
        make(name, 1.598, 0.0, diameter, 1050.0)
    }

    pub fn plga(name: &str, diameter: f64) -> Species {
        make(name, 1.47, 0.0, diameter, 1300.0)
    }

    pub fn gold(name: &str, diameter: f64) -> Species {
        make(name, 0.47, 2.4, diameter, 19_320.0)
    }

    pub fn diamond(name: &str, diameter: f64) -> Species {
        make(name, 2.42, 0.0, diameter, 3510.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub species: Species,
    /// mg/mL.
    pub abundance: f64,
    /// Coefficient of variation of the (log-normal) diameter distribution.
    pub diameter_cv: f64,
}

impl Population {
    pub const DEFAULT_DIAMETER_CV: f64 = 0.05;

    pub fn new(species: Species, abundance: f64) -> Self {
        Self {
            species,
            abundance,
            diameter_cv: Self::DEFAULT_DIAMETER_CV,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.species.validate()?;
        if !(self.abundance >= 0.0 && self.abundance.is_finite()) {
            return Err(Error::Config(format!(
                "population '{}': abundance must be >= 0",
                self.species.name
            )));
        }
        if !(0.0..1.0).contains(&self.diameter_cv) {
            return Err(Error::Config(format!(
                "population '{}': diameter_cv must be in [0, 1)",
                self.species.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: OpticalConfig,
    pub populations: Vec<Population>,
    pub master_seed: u64,
    pub n_frames: usize,
    /// Explicitly particle-free scene.
    pub blank: bool,
}

impl Scene {
    pub fn new(config: OpticalConfig, populations: Vec<Population>, master_seed: u64, n_frames: usize) -> Result<Self> {
        let s = Self {
            config,
            populations,
            master_seed,
            n_frames,
            blank: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn blank(config: OpticalConfig, master_seed: u64, n_frames: usize) -> Result<Self> {
        let s = Self {
            config,
            populations: Vec::new(),
            master_seed,
            n_frames,
            blank: true,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.n_frames == 0 {
            return Err(Error::Config("n_frames must be >= 1".into()));
        }
        if self.blank && !self.populations.is_empty() {
            return Err(Error::Config("a blank scene cannot list populations".into()));
        }
        if !self.blank && self.populations.is_empty() {
            return Err(Error::Config(
                "scene needs at least one population or the blank marker".into(),
            ));
        }
        let mut names = HashSet::new();
        for p in &self.populations {
            p.validate()?;
            if !names.insert(p.species.name.as_str()) {
                return Err(Error::Config(format!("duplicate species name '{}'", p.species.name)));
            }
        }
        Ok(())
    }

    pub fn species(&self) -> Vec<Species> {
        self.populations.iter().map(|p| p.species.clone()).collect()
    }

    pub fn abundance_of(&self, name: &str) -> Option<f64> {
        self.populations
            .iter()
            .find(|p| p.species.name == name)
            .map(|p| p.abundance)
    }
}

/// One sampled particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    /// Center, pixel units; pixel `i` spans `[i, i+1)`.
    pub x: f64,
    pub y: f64,
    /// Fractional depth in the sample layer, `[0, 1)`.
    pub depth: f64,
    /// m.
    pub diameter: f64,
    /// Index into the scene's population list.
    pub population: usize,
}

/// Mean number of particles of `p` in the illuminated volume.
pub fn expected_particle_count(p: &Population, cfg: &OpticalConfig) -> f64 {
    // mg/mL == kg/m³
    p.abundance * cfg.illuminated_volume() / p.species.particle_mass()
}

/// Samples the particles of every population for one frame.
///
/// The stream for population `k` in frame `f` is keyed by
/// `(master_seed, f, k)` only, so frames and populations can be sampled in
/// any order or in parallel.
pub fn sample_realization(scene: &Scene, frame_index: usize) -> Result<Vec<Particle>> {
    if frame_index >= scene.n_frames {
        return Err(Error::Parameter(format!(
            "frame index {frame_index} out of range (n_frames = {})",
            scene.n_frames
        )));
    }
    let mut out = Vec::new();
    for (k, pop) in scene.populations.iter().enumerate() {
        sample_population(pop, k, &scene.config, scene.master_seed, frame_index as u64, &mut out)?;
    }
    Ok(out)
}

pub fn sample_population(
    pop: &Population,
    population_index: usize,
    cfg: &OpticalConfig,
    master_seed: u64,
    frame: u64,
    out: &mut Vec<Particle>,
) -> Result<()> {
    let mean = expected_particle_count(pop, cfg);
    if mean <= 0.0 {
        return Ok(());
    }
    let mut rng = rng::stream(master_seed, &[frame, population_index as u64]);
    let count = Poisson::new(mean)
        .map_err(|e| Error::Parameter(format!("poisson mean {mean}: {e}")))?
        .sample(&mut rng) as usize;

    let d0 = pop.species.diameter;
    let cv = pop.diameter_cv;
    let sizes = if cv > 0.0 {
        let s2 = (1.0 + cv * cv).ln();
        Some(
            LogNormal::new(d0.ln() - 0.5 * s2, s2.sqrt())
                .map_err(|e| Error::Parameter(format!("log-normal diameter: {e}")))?,
        )
    } else {
        None
    };

    let (w, h) = (cfg.grid_width as f64, cfg.grid_height as f64);
    out.reserve(count);
    for _ in 0..count {
        let x = rng.random::<f64>() * w;
        let y = rng.random::<f64>() * h;
        let depth = rng.random::<f64>();
        let diameter = match &sizes {
            Some(d) => d.sample(&mut rng),
            None => d0,
        };
        out.push(Particle {
            x,
            y,
            depth,
            diameter,
            population: population_index,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn species500() -> Species {
        Species::new("ps500", 1.59, 0.0, 500e-9, 1050.0).unwrap()
    }

    #[test]
    fn zero_abundance_gives_zero_count() {
        let p = Population::new(species500(), 0.0);
        assert_eq!(expected_particle_count(&p, &OpticalConfig::default()), 0.0);
    }

    #[test]
    fn count_is_linear_in_abundance() {
        let cfg = OpticalConfig::default();
        let a = expected_particle_count(&Population::new(species500(), 0.3), &cfg);
        let b = expected_particle_count(&Population::new(species500(), 0.6), &cfg);
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn count_hand_evaluation() {
        // 0.25 mg/mL = 0.25 kg/m³; volume (256·3.45e-6)² · 1e-3 m³;
        // particle mass 1050 · π/6 · (500e-9)³ kg.
        let cfg = OpticalConfig::default();
        let p = Population::new(species500(), 0.25);
        let side = 256.0 * 3.45e-6;
        let volume = side * side * 1e-3;
        let mass = 1050.0 * std::f64::consts::PI / 6.0 * 1.25e-19;
        let expect = 0.25 * volume / mass;
        let got = expected_particle_count(&p, &cfg);
        assert!((got - expect).abs() <= 1e-12 * expect);
        // ≈ 2.8377e6 particles.
        assert!((got - 2.837_659e6).abs() < 1.0, "{got}");
    }

    #[test]
    fn validation() {
        assert!(Species::new("x", 1.5, -0.1, 1e-7, 1000.0).is_err());
        assert!(Species::new("", 1.5, 0.0, 1e-7, 1000.0).is_err());
        let mut p = Population::new(species500(), 1.0);
        p.diameter_cv = 1.0;
        assert!(p.validate().is_err());
        let cfg = OpticalConfig::default();
        assert!(Scene::new(cfg.clone(), vec![], 0, 1).is_err());
        assert!(Scene::blank(cfg.clone(), 0, 1).is_ok());
        assert!(Scene::new(cfg.clone(), vec![Population::new(species500(), 1.0)], 0, 0).is_err());
        let dup = vec![Population::new(species500(), 1.0), Population::new(species500(), 2.0)];
        assert!(Scene::new(cfg.clone(), dup, 0, 1).is_err());
        let mut bad = cfg;
        bad.medium_index = 0.9;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_hash_tracks_physics_fields() {
        let a = OpticalConfig::default();
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.propagation_distance *= 1.0 + 1e-12;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), OpticalConfig::desk_scale().config_hash());
    }

    fn small_scene(abundance: f64, seed: u64) -> Scene {
        let cfg = OpticalConfig::default().with_grid(16, 16);
        Scene::new(cfg, vec![Population::new(species500(), abundance)], seed, 4).unwrap()
    }

    #[test]
    fn zero_abundance_realization_is_empty() {
        let s = small_scene(0.0, 1);
        assert!(sample_realization(&s, 0).unwrap().is_empty());
    }

    #[test]
    fn realizations_are_deterministic() {
        let s = small_scene(1e-4, 42);
        let a = sample_realization(&s, 2).unwrap();
        let b = sample_realization(&s, 2).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
        assert_ne!(a, sample_realization(&s, 3).unwrap());
        assert!(sample_realization(&s, 4).is_err());
    }

    #[test]
    fn particles_stay_in_bounds() {
        let s = small_scene(1e-4, 3);
        for p in sample_realization(&s, 0).unwrap() {
            assert!((0.0..16.0).contains(&p.x) && (0.0..16.0).contains(&p.y));
            assert!((0.0..1.0).contains(&p.depth));
            assert!(p.diameter > 0.0);
        }
    }
}
