//! JSON scene description with SI units in the key names.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_json, write_json};
use crate::error::Result;
use crate::scene::{OpticalConfig, Population, Scene, Species};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsFile {
    pub wavelength_m: f64,
    pub pixel_pitch_m: f64,
    pub grid_width_px: usize,
    pub grid_height_px: usize,
    pub propagation_distance_m: f64,
    pub medium_index: f64,
    pub chamber_thickness_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesFile {
    pub name: String,
    pub n_real: f64,
    pub n_imag: f64,
    pub diameter_m: f64,
    pub mass_density_kg_per_m3: f64,
}

fn default_cv() -> f64 {
    Population::DEFAULT_DIAMETER_CV
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationFile {
    pub species: SpeciesFile,
    pub abundance_mg_per_ml: f64,
    #[serde(default = "default_cv")]
    pub diameter_cv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub optics: OpticsFile,
    #[serde(default)]
    pub populations: Vec<PopulationFile>,
    pub master_seed: u64,
    pub n_frames: usize,
    #[serde(default)]
    pub blank: bool,
}

impl From<&OpticalConfig> for OpticsFile {
    fn from(c: &OpticalConfig) -> Self {
        Self {
            wavelength_m: c.wavelength,
            pixel_pitch_m: c.pixel_pitch,
            grid_width_px: c.grid_width,
            grid_height_px: c.grid_height,
            propagation_distance_m: c.propagation_distance,
            medium_index: c.medium_index,
            chamber_thickness_m: c.chamber_thickness,
        }
    }
}

impl From<&OpticsFile> for OpticalConfig {
    fn from(o: &OpticsFile) -> Self {
        Self {
            wavelength: o.wavelength_m,
            pixel_pitch: o.pixel_pitch_m,
            grid_width: o.grid_width_px,
            grid_height: o.grid_height_px,
            propagation_distance: o.propagation_distance_m,
            medium_index: o.medium_index,
            chamber_thickness: o.chamber_thickness_m,
        }
    }
}

impl From<&Species> for SpeciesFile {
    fn from(s: &Species) -> Self {
        Self {
            name: s.name.clone(),
            n_real: s.n_real,
            n_imag: s.n_imag,
            diameter_m: s.diameter,
            mass_density_kg_per_m3: s.mass_density,
        }
    }
}

impl From<&SpeciesFile> for Species {
    fn from(s: &SpeciesFile) -> Self {
        Self {
            name: s.name.clone(),
            n_real: s.n_real,
            n_imag: s.n_imag,
            diameter: s.diameter_m,
            mass_density: s.mass_density_kg_per_m3,
        }
    }
}

impl From<&Scene> for SceneFile {
    fn from(s: &Scene) -> Self {
        Self {
            optics: (&s.config).into(),
            populations: s
                .populations
                .iter()
                .map(|p| PopulationFile {
                    species: (&p.species).into(),
                    abundance_mg_per_ml: p.abundance,
                    diameter_cv: p.diameter_cv,
                })
                .collect(),
            master_seed: s.master_seed,
            n_frames: s.n_frames,
            blank: s.blank,
        }
    }
}

impl SceneFile {
    /// Converts and re-checks every scene invariant.
    pub fn to_scene(&self) -> Result<Scene> {
        let scene = Scene {
            config: (&self.optics).into(),
            populations: self
                .populations
                .iter()
                .map(|p| Population {
                    species: (&p.species).into(),
                    abundance: p.abundance_mg_per_ml,
                    diameter_cv: p.diameter_cv,
                })
                .collect(),
            master_seed: self.master_seed,
            n_frames: self.n_frames,
            blank: self.blank,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Scene> {
        read_json::<SceneFile>(path)?.to_scene()
    }

    pub fn save(scene: &Scene, path: &Path) -> Result<()> {
        write_json(path, &SceneFile::from(scene))
    }

    /// Digest of the canonical (compact, fixed key order) serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("in-memory JSON serialization");
        hex::encode(&Sha256::digest(&bytes)[..16])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::scene::materials;

    fn scene() -> Scene {
        Scene::new(
            OpticalConfig::desk_scale().with_grid(64, 32),
            vec![Population::new(materials::tio2("tio2", 200e-9), 1.5)],
            7,
            16,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let s = scene();
        let f = SceneFile::from(&s);
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"wavelength_m\":5.32e-7"));
        assert!(text.contains("\"abundance_mg_per_ml\":1.5"));
        let back: SceneFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_scene().unwrap(), s);
        assert_eq!(back.hash(), f.hash());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut v = serde_json::to_value(SceneFile::from(&scene())).unwrap();
        v["optics"]["wavelength"] = 1.0.into();
        assert!(serde_json::from_value::<SceneFile>(v).is_err());

        let mut f = SceneFile::from(&scene());
        f.populations[0].abundance_mg_per_ml = -1.0;
        assert!(matches!(f.to_scene(), Err(Error::Config(_))));
        let mut f = SceneFile::from(&scene());
        f.optics.pixel_pitch_m = 0.0;
        assert!(matches!(f.to_scene(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = SceneFile::from(&scene());
        let mut b = a.clone();
        b.master_seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
