//! Intensity autocorrelation statistics, per-species basis kernels and
//! speckle descriptors.

mod autocorr;
mod features;
mod identity;

pub use autocorr::{
    ensemble_autocorr, ensemble_autocorr_with, ensemble_from_generator, intensity_autocorr, AutocorrMap,
    EnsembleOptions, LagMask,
};
pub use features::{extract_features, extract_features_with, FrameStats, SpeckleFeatures, PROFILE_BINS};
pub use identity::verify_field_identity;

use crate::error::{Error, Result};
use crate::forward::{ForwardOptions, FrameSimulator, SynthesisMode};
use crate::rng::derive_seed;
use crate::scene::{OpticalConfig, Population, Scene, Species};

/// Reference abundance at which basis kernels are simulated, mg/mL.
pub const C_REF: f64 = 1.0;

/// Ensemble autocorrelation of a simulated scene, frames generated in
/// parallel and never stored.
pub fn scene_ensemble(scene: &Scene, forward: ForwardOptions, opts: EnsembleOptions) -> Result<AutocorrMap> {
    let sim = FrameSimulator::new(scene, forward)?;
    let cfg = &scene.config;
    let mut map = ensemble_from_generator(
        scene.n_frames,
        cfg.grid_width,
        cfg.grid_height,
        cfg.pixel_pitch,
        opts,
        || sim.propagator(),
        |p, k| sim.frame(k, p),
    )?;
    map.config_hash = Some(cfg.config_hash());
    Ok(map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisOptions {
    pub mode: SynthesisMode,
    pub slices: usize,
    pub ensemble: EnsembleOptions,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self {
            mode: SynthesisMode::Multiplicative,
            slices: 1,
            ensemble: EnsembleOptions::normalized(),
        }
    }
}

/// Unit-abundance ensemble autocorrelation of one species.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisKernel {
    pub species: Species,
    /// Response per mg/mL.
    pub map: AutocorrMap,
    pub n_mc_frames: usize,
    pub config_hash: String,
    pub c_ref: f64,
    pub seed: u64,
}

impl BasisKernel {
    pub fn ensure_compatible(&self, map: &AutocorrMap) -> Result<()> {
        if let Some(h) = &map.config_hash {
            if *h != self.config_hash {
                return Err(Error::Config(format!(
                    "basis '{}' was built for config {} but the measurement uses {}",
                    self.species.name, self.config_hash, h
                )));
            }
        }
        if map.mean_subtracted != self.map.mean_subtracted || map.contrast_normalized != self.map.contrast_normalized {
            return Err(Error::Config(format!(
                "basis '{}' and measurement use different autocorrelation conventions",
                self.species.name
            )));
        }
        map.grid.ensure_same_shape(&self.map.grid)
    }
}

pub fn species_basis(species: &Species, cfg: &OpticalConfig, n_mc_frames: usize, seed: u64) -> Result<BasisKernel> {
    species_basis_with(species, cfg, n_mc_frames, seed, &BasisOptions::default())
}

/// Simulates `n_mc_frames` noise-free frames of `species` alone at
/// [`C_REF`] and stores the ensemble map divided by `C_REF`.
pub fn species_basis_with(
    species: &Species,
    cfg: &OpticalConfig,
    n_mc_frames: usize,
    seed: u64,
    opts: &BasisOptions,
) -> Result<BasisKernel> {
    if n_mc_frames == 0 {
        return Err(Error::Parameter("n_mc_frames must be >= 1".into()));
    }
    species.validate()?;
    // Keyed away from measurement scenes that happen to share the seed.
    let scene_seed = derive_seed(seed, &[0xba515]);
    let scene = Scene::new(
        cfg.clone(),
        vec![Population::new(species.clone(), C_REF)],
        scene_seed,
        n_mc_frames,
    )?;
    let forward = ForwardOptions {
        mode: opts.mode,
        slices: opts.slices,
        sensor: None,
    };
    let mut map = scene_ensemble(&scene, forward, opts.ensemble)?;
    map.grid.scale(1.0 / C_REF);
    Ok(BasisKernel {
        species: species.clone(),
        config_hash: cfg.config_hash(),
        map,
        n_mc_frames,
        c_ref: C_REF,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::materials;

    fn cfg() -> OpticalConfig {
        OpticalConfig::desk_scale().with_grid(64, 64)
    }

    #[test]
    fn basis_is_deterministic() {
        let s = materials::tio2("t500", 500e-9);
        let a = species_basis(&s, &cfg(), 8, 42).unwrap();
        let b = species_basis(&s, &cfg(), 8, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.map, species_basis(&s, &cfg(), 8, 43).unwrap().map);
        assert_eq!(a.config_hash, cfg().config_hash());
    }

    #[test]
    fn index_matched_species_has_null_basis() {
        let c = cfg();
        let s = Species::new("matched", c.medium_index, 0.0, 500e-9, 1000.0).unwrap();
        let b = species_basis(&s, &c, 4, 1).unwrap();
        assert!(b.map.grid.data().iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn incompatible_measurements_rejected() {
        let s = materials::tio2("t500", 500e-9);
        let b = species_basis(&s, &cfg(), 4, 1).unwrap();
        let mut m = b.map.clone();
        assert!(b.ensure_compatible(&m).is_ok());
        m.config_hash = Some("other".into());
        assert!(b.ensure_compatible(&m).is_err());
        let mut m = b.map.clone();
        m.contrast_normalized = false;
        assert!(b.ensure_compatible(&m).is_err());
    }

    #[test]
    fn zero_frames_rejected() {
        let s = materials::tio2("t500", 500e-9);
        assert!(species_basis(&s, &cfg(), 0, 1).is_err());
    }
}
