use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::experiment::{basis_ref, load_bases_for, BasisRef};
use crate::error::{Error, Result};
use crate::forward::{ForwardOptions, SensorModel, SynthesisMode};
use crate::inversion::{
    nnls_unmix, projection_coefficients, target_distribution, TargetKind, TrainingRow, TrainingSet, UnmixProblem,
};
use crate::io::{read_json, save_basis, save_training_set, write_json, OpticsFile, SceneFile, SpeciesFile};
use crate::rng::derive_seed;
use crate::scene::{OpticalConfig, Population, Scene, Species};
use crate::speckle::{
    extract_features, scene_ensemble, species_basis_with, AutocorrMap, BasisKernel, BasisOptions, LagMask,
    PROFILE_BINS,
};

pub const DATASET_MANIFEST_FORMAT: &str = "holospeck-dataset/1";
pub const DATASET_MANIFEST_FILE: &str = "dataset_manifest.json";
pub const TRAINING_SET_FILE: &str = "training_set.json";

fn default_basis_frames() -> usize {
    64
}

fn default_r_min() -> f64 {
    LagMask::default().r_min
}

fn default_r_max() -> f64 {
    LagMask::default().r_max
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub id: String,
    /// One per species, in spec order.
    pub abundances_mg_per_ml: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub optics: OpticsFile,
    pub species: Vec<SpeciesFile>,
    pub entries: Vec<DatasetEntry>,
    pub frames: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub target: TargetKind,
    #[serde(default)]
    pub mode: SynthesisMode,
    #[serde(default)]
    pub sensor: Option<SensorModel>,
    #[serde(default = "default_r_min")]
    pub lag_r_min_px: f64,
    #[serde(default = "default_r_max")]
    pub lag_r_max_px: f64,
    /// Existing bases, relative to the spec file. When absent they are built
    /// with `basis_frames` frames and `basis_seed` into `<out>/bases`.
    #[serde(default)]
    pub bases_dir: Option<PathBuf>,
    #[serde(default = "default_basis_frames")]
    pub basis_frames: usize,
    #[serde(default)]
    pub basis_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRowRef {
    pub id: String,
    pub seed: u64,
    pub scene_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub tool_version: String,
    /// The spec with `bases_dir` resolved to the directory actually used.
    pub spec: DatasetSpec,
    pub bases: Vec<BasisRef>,
    pub x_features: Vec<String>,
    pub i_features: Vec<String>,
    pub rows: Vec<DatasetRowRef>,
}

#[derive(Debug, Clone)]
pub struct DatasetOutput {
    pub set: TrainingSet,
    pub manifest: DatasetManifest,
    pub manifest_path: PathBuf,
    pub set_path: PathBuf,
}

/// Per-row scene seed, keyed by the experiment id rather than its position.
pub fn entry_seed(master: u64, id: &str) -> u64 {
    let d = Sha256::digest(id.as_bytes());
    derive_seed(master, &[u64::from_le_bytes(d[..8].try_into().unwrap())])
}

pub fn x_feature_names() -> Vec<String> {
    let mut v: Vec<String> = ["contrast", "correlation_length_px", "mean_intensity", "zero_lag"]
        .map(String::from)
        .to_vec();
    v.extend((0..PROFILE_BINS).map(|b| format!("profile_{b}")));
    v
}

pub fn i_feature_names(species: &[String]) -> Vec<String> {
    let mut v: Vec<String> = species.iter().map(|s| format!("nnls_{s}")).collect();
    v.extend(species.iter().map(|s| format!("projection_{s}")));
    v
}

/// Image features `X` and physics-prior features `I` (non-negative unmixing
/// abundances, then per-basis projection coefficients) of one ensemble.
pub fn row_features(map: &AutocorrMap, bases: &[BasisKernel], mask: LagMask) -> Result<(Vec<f64>, Vec<f64>)> {
    let f = extract_features(map, map.frame_stats)?;
    let pitch = map.grid.pitch();
    let mut x = vec![
        f.contrast,
        f.correlation_length.map_or(0.0, |l| l / pitch),
        f.mean_intensity,
        map.zero_lag(),
    ];
    x.extend(f.radial_profile);
    let problem = UnmixProblem::new(map, bases, mask)?;
    let mut i = nnls_unmix(&problem).abundances;
    i.extend(projection_coefficients(&problem));
    Ok((x, i))
}

impl DatasetSpec {
    pub fn config(&self) -> OpticalConfig {
        (&self.optics).into()
    }

    pub fn species_list(&self) -> Vec<Species> {
        self.species.iter().map(Species::from).collect()
    }

    pub fn lag_mask(&self) -> Result<LagMask> {
        LagMask::new(self.lag_r_min_px, self.lag_r_max_px)
    }

    pub fn validate(&self) -> Result<()> {
        self.config().validate()?;
        if self.species.is_empty() {
            return Err(Error::Config("dataset spec lists no species".into()));
        }
        for s in self.species_list() {
            s.validate()?;
        }
        if self.frames == 0 || self.basis_frames == 0 {
            return Err(Error::Config("frames and basis_frames must be >= 1".into()));
        }
        if let Some(s) = &self.sensor {
            s.validate()?;
        }
        self.lag_mask()?;
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Config(format!("duplicate experiment id '{}'", e.id)));
            }
            if e.abundances_mg_per_ml.len() != self.species.len() {
                return Err(Error::Config(format!(
                    "entry '{}' has {} abundances for {} species",
                    e.id,
                    e.abundances_mg_per_ml.len(),
                    self.species.len()
                )));
            }
        }
        Ok(())
    }

    pub fn scene(&self, entry: &DatasetEntry) -> Result<Scene> {
        let cfg = self.config();
        let seed = entry_seed(self.master_seed, &entry.id);
        let pops: Vec<Population> = self
            .species_list()
            .into_iter()
            .zip(&entry.abundances_mg_per_ml)
            .map(|(s, &c)| Population::new(s, c))
            .collect();
        Scene::new(cfg, pops, seed, self.frames)
    }

    /// Simulates one entry and computes its training row.
    pub fn row(&self, entry: &DatasetEntry, bases: &[BasisKernel]) -> Result<TrainingRow> {
        let scene = self.scene(entry)?;
        let forward = ForwardOptions {
            mode: self.mode,
            slices: 1,
            sensor: self.sensor.clone(),
        };
        let map = scene_ensemble(&scene, forward, BasisOptions::default().ensemble)?;
        let (x, i) = row_features(&map, bases, self.lag_mask()?)?;
        Ok(TrainingRow {
            x,
            i,
            t: target_distribution(&entry.abundances_mg_per_ml, self.target),
            c: entry.abundances_mg_per_ml.clone(),
        })
    }
}

/// Loads or builds the spec's bases. Built bases are written to
/// `<out_dir>/bases` and read back, so every row sees the stored precision.
fn prepare_bases(spec: &DatasetSpec, spec_dir: &Path, out_dir: &Path) -> Result<(PathBuf, Vec<BasisKernel>)> {
    let cfg = spec.config();
    let names: Vec<String> = spec.species.iter().map(|s| s.name.clone()).collect();
    let dir = match &spec.bases_dir {
        Some(d) => spec_dir.join(d),
        None => {
            let dir = out_dir.join("bases");
            let opts = BasisOptions {
                mode: spec.mode,
                ..BasisOptions::default()
            };
            for (k, s) in spec.species_list().iter().enumerate() {
                let seed = derive_seed(spec.basis_seed, &[k as u64]);
                save_basis(&dir, &species_basis_with(s, &cfg, spec.basis_frames, seed, &opts)?)?;
            }
            dir
        }
    };
    let bases = load_bases_for(&dir, &names, &cfg.config_hash())?;
    Ok((dir, bases))
}

/// Builds the training set described by the spec at `spec_path`.
pub fn generate_dataset(spec_path: &Path, out_dir: &Path) -> Result<DatasetOutput> {
    let spec: DatasetSpec = read_json(spec_path)?;
    spec.validate()?;
    let spec_dir = spec_path.parent().unwrap_or(Path::new("."));
    let (bases_dir, bases) = prepare_bases(&spec, spec_dir, out_dir)?;
    let names: Vec<String> = spec.species.iter().map(|s| s.name.clone()).collect();
    let rows = spec
        .entries
        .iter()
        .map(|e| {
            let scene = spec.scene(e)?;
            Ok(DatasetRowRef {
                id: e.id.clone(),
                seed: scene.master_seed,
                scene_hash: SceneFile::from(&scene).hash(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        format: DATASET_MANIFEST_FORMAT.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        spec: DatasetSpec {
            bases_dir: Some(bases_dir.clone()),
            ..spec.clone()
        },
        bases: bases.iter().map(|b| basis_ref(&bases_dir, b)).collect::<Result<_>>()?,
        x_features: x_feature_names(),
        i_features: i_feature_names(&names),
        rows,
    };
    let manifest_path = out_dir.join(DATASET_MANIFEST_FILE);
    write_json(&manifest_path, &manifest)?;

    let set = TrainingSet {
        species: names,
        rows: spec
            .entries
            .iter()
            .map(|e| spec.row(e, &bases))
            .collect::<Result<_>>()?,
    };
    if !set.rows.is_empty() {
        set.validate()?;
    }
    let set_path = out_dir.join(TRAINING_SET_FILE);
    save_training_set(&set_path, &set)?;
    Ok(DatasetOutput {
        set,
        manifest,
        manifest_path,
        set_path,
    })
}

/// Recomputes the row `id` from a dataset manifest.
pub fn recompute_row(manifest_path: &Path, id: &str) -> Result<TrainingRow> {
    let m: DatasetManifest = read_json(manifest_path)?;
    if m.format != DATASET_MANIFEST_FORMAT {
        return Err(Error::Config(format!("unsupported dataset manifest '{}'", m.format)));
    }
    let entry = m
        .spec
        .entries
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::Parameter(format!("no entry '{id}' in the manifest")))?;
    let dir = m.spec.bases_dir.clone().unwrap_or_default();
    let names: Vec<String> = m.bases.iter().map(|b| b.species.clone()).collect();
    let bases = load_bases_for(&dir, &names, &m.spec.config().config_hash())?;
    for (b, r) in bases.iter().zip(&m.bases) {
        if basis_ref(&dir, b)? != *r {
            return Err(Error::Config(format!("basis '{}' changed since the manifest was written", r.species)));
        }
    }
    m.spec.row(entry, &bases)
}
