//! Coherent forward model: transmission synthesis, angular-spectrum
//! propagation, multislice cascade, intensity and sensor capture.

mod propagation;
mod sensor;
mod transmission;

pub use propagation::{
    intensity, make_kernel, propagate, propagate_multislice, propagate_multislice_to, PropagationKernel,
    Propagator,
};
pub use sensor::{capture_frame, SensorModel};
pub use transmission::{disk_integral, synthesize_transmission, thickness_exponent, SynthesisMode, TransmissionField};

use crate::error::{Error, Result};
use crate::numerics::{ComplexGrid, RealGrid};
use crate::scene::{sample_realization, Particle, Scene, Species};

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOptions {
    pub mode: SynthesisMode,
    /// Number of depth slices; 1 is the single-plane model.
    pub slices: usize,
    /// When set, frames are captured and divided by `exposure_scale`, so they
    /// stay in intensity units.
    pub sensor: Option<SensorModel>,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            mode: SynthesisMode::Multiplicative,
            slices: 1,
            sensor: None,
        }
    }
}

/// Per-scene frame generator. Immutable and shareable; each worker owns its
/// own [`Propagator`].
pub struct FrameSimulator {
    scene: Scene,
    species: Vec<Species>,
    options: ForwardOptions,
    k_out: PropagationKernel,
    k_dz: Option<PropagationKernel>,
}

impl FrameSimulator {
    pub fn new(scene: &Scene, options: ForwardOptions) -> Result<Self> {
        scene.validate()?;
        if options.slices == 0 {
            return Err(Error::Parameter("slices must be >= 1".into()));
        }
        if options.slices > 1 && options.mode != SynthesisMode::Multiplicative {
            return Err(Error::Parameter("multislice requires multiplicative synthesis".into()));
        }
        if let Some(s) = &options.sensor {
            s.validate()?;
        }
        let cfg = &scene.config;
        let k_out = make_kernel(cfg, cfg.propagation_distance)?;
        let k_dz = if options.slices > 1 {
            Some(make_kernel(cfg, cfg.chamber_thickness / options.slices as f64)?)
        } else {
            None
        };
        Ok(Self {
            scene: scene.clone(),
            species: scene.species(),
            options,
            k_out,
            k_dz,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn options(&self) -> &ForwardOptions {
        &self.options
    }

    pub fn propagator(&self) -> Result<Propagator> {
        Propagator::new(self.scene.config.grid_width, self.scene.config.grid_height)
    }

    /// Complex field at the sensor for frame `frame_index`.
    pub fn field(&self, frame_index: usize, prop: &mut Propagator) -> Result<ComplexGrid> {
        let particles = sample_realization(&self.scene, frame_index)?;
        self.field_from_particles(&particles, prop)
    }

    pub fn field_from_particles(&self, particles: &[Particle], prop: &mut Propagator) -> Result<ComplexGrid> {
        let cfg = &self.scene.config;
        match &self.k_dz {
            None => {
                let s = synthesize_transmission(particles, &self.species, cfg, self.options.mode)?;
                prop.propagate(&s.grid, &self.k_out)
            }
            Some(k_dz) => {
                let n = self.options.slices;
                let mut groups: Vec<Vec<Particle>> = vec![Vec::new(); n];
                for p in particles {
                    let k = ((p.depth * n as f64) as usize).min(n - 1);
                    groups[k].push(*p);
                }
                let slices = groups
                    .iter()
                    .map(|g| synthesize_transmission(g, &self.species, cfg, SynthesisMode::Multiplicative))
                    .collect::<Result<Vec<_>>>()?;
                prop.multislice(&slices, k_dz, &self.k_out)
            }
        }
    }

    /// Intensity frame (sensor-captured when a sensor is configured).
    pub fn frame(&self, frame_index: usize, prop: &mut Propagator) -> Result<RealGrid> {
        let i = intensity(&self.field(frame_index, prop)?);
        match &self.options.sensor {
            None => Ok(i),
            Some(s) => {
                let mut c = capture_frame(&i, s, frame_index as u64)?;
                c.scale(1.0 / s.exposure_scale);
                Ok(c)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{materials, OpticalConfig, Population};

    fn scene(frames: usize) -> Scene {
        let cfg = OpticalConfig::desk_scale().with_grid(64, 64);
        Scene::new(cfg, vec![Population::new(materials::tio2("t", 500e-9), 1.0)], 3, frames).unwrap()
    }

    #[test]
    fn frames_are_deterministic() {
        let sim = FrameSimulator::new(&scene(4), ForwardOptions::default()).unwrap();
        let mut p = sim.propagator().unwrap();
        let a = sim.frame(2, &mut p).unwrap();
        let b = sim.frame(2, &mut sim.propagator().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sim.frame(3, &mut p).unwrap());
    }

    #[test]
    fn blank_scene_is_uniform() {
        let cfg = OpticalConfig::desk_scale().with_grid(32, 32);
        let sim = FrameSimulator::new(&Scene::blank(cfg, 1, 1).unwrap(), ForwardOptions::default()).unwrap();
        let f = sim.frame(0, &mut sim.propagator().unwrap()).unwrap();
        assert!(f.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn one_slice_option_matches_direct_path() {
        let sc = scene(1);
        let sim = FrameSimulator::new(&sc, ForwardOptions::default()).unwrap();
        let mut p = sim.propagator().unwrap();
        let parts = sample_realization(&sc, 0).unwrap();
        let s = synthesize_transmission(&parts, &sc.species(), &sc.config, SynthesisMode::Multiplicative).unwrap();
        let direct = propagate(&s, &make_kernel(&sc.config, sc.config.propagation_distance).unwrap()).unwrap();
        assert_eq!(sim.field(0, &mut p).unwrap(), direct);
    }

    #[test]
    fn multislice_runs_and_differs() {
        let sc = scene(1);
        let one = FrameSimulator::new(&sc, ForwardOptions::default()).unwrap();
        let four = FrameSimulator::new(
            &sc,
            ForwardOptions {
                slices: 4,
                ..ForwardOptions::default()
            },
        )
        .unwrap();
        let mut p = one.propagator().unwrap();
        let a = one.field(0, &mut p).unwrap();
        let b = four.field(0, &mut p).unwrap();
        assert!(b.energy() <= (64 * 64) as f64 * (1.0 + 1e-12));
        assert_ne!(a, b);
    }

    #[test]
    fn invalid_options() {
        let sc = scene(1);
        let bad = ForwardOptions {
            slices: 2,
            mode: SynthesisMode::AdditiveWeak,
            sensor: None,
        };
        assert!(FrameSimulator::new(&sc, bad).is_err());
        let zero = ForwardOptions {
            slices: 0,
            ..ForwardOptions::default()
        };
        assert!(FrameSimulator::new(&sc, zero).is_err());
    }
}
