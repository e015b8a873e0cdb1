use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{ForwardOptions, FrameSimulator, SensorModel, SynthesisMode};
use crate::inversion::{nnls_unmix, AbundanceEstimate, UnmixProblem};
use crate::io::{
    basis_paths, load_basis, read_bytes, read_json, save_real_grid, sha256_hex, write_json, write_report, ReportRow,
    SceneFile,
};
use crate::metrics::{fidelity, mae, noise_level, r2, rmse, NOISE_KSIZE, NOISE_SIGMA};
use crate::scene::Scene;
use crate::speckle::{scene_ensemble, AutocorrMap, BasisKernel, EnsembleOptions, LagMask};

pub const MANIFEST_FORMAT: &str = "holospeck-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameOutput {
    #[default]
    None,
    /// Ensemble autocorrelation and the first frame.
    Summary,
    /// Ensemble autocorrelation and every frame.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentOptions {
    pub experiment_id: String,
    pub mode: SynthesisMode,
    pub slices: usize,
    pub sensor: Option<SensorModel>,
    pub lag_r_min_px: f64,
    pub lag_r_max_px: f64,
    /// Bases to unmix against. Empty means the scene's species, or every
    /// basis in the directory for a blank scene.
    pub species: Vec<String>,
    pub frame_output: FrameOutput,
    /// Fill the wall-time column. Off by default so reports reproduce
    /// byte for byte.
    pub record_wall_time: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        let mask = LagMask::default();
        Self {
            experiment_id: "experiment".into(),
            mode: SynthesisMode::Multiplicative,
            slices: 1,
            sensor: None,
            lag_r_min_px: mask.r_min,
            lag_r_max_px: mask.r_max,
            species: Vec::new(),
            frame_output: FrameOutput::None,
            record_wall_time: false,
        }
    }
}

impl ExperimentOptions {
    pub fn lag_mask(&self) -> Result<LagMask> {
        LagMask::new(self.lag_r_min_px, self.lag_r_max_px)
    }

    pub fn forward(&self) -> ForwardOptions {
        ForwardOptions {
            mode: self.mode,
            slices: self.slices,
            sensor: self.sensor.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment_id.trim().is_empty() {
            return Err(Error::Parameter("experiment id must not be empty".into()));
        }
        if self.slices == 0 {
            return Err(Error::Parameter("slices must be >= 1".into()));
        }
        if let Some(s) = &self.sensor {
            s.validate()?;
        }
        self.lag_mask().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisRef {
    pub species: String,
    pub config_hash: String,
    pub seed: u64,
    pub n_mc_frames: usize,
    pub sidecar_sha256: String,
    pub grid_sha256: String,
}

/// Everything needed to rerun an experiment bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub tool_version: String,
    pub scene: SceneFile,
    pub scene_hash: String,
    pub config_hash: String,
    pub bases_dir: PathBuf,
    pub bases: Vec<BasisRef>,
    pub options: ExperimentOptions,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ReportRow>,
    pub estimate: AbundanceEstimate,
    pub map: AutocorrMap,
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub report_path: PathBuf,
}

pub(crate) fn basis_ref(dir: &Path, b: &BasisKernel) -> Result<BasisRef> {
    let (grid, sidecar) = basis_paths(dir, &b.species.name)?;
    Ok(BasisRef {
        species: b.species.name.clone(),
        config_hash: b.config_hash.clone(),
        seed: b.seed,
        n_mc_frames: b.n_mc_frames,
        sidecar_sha256: sha256_hex(&read_bytes(&sidecar)?),
        grid_sha256: sha256_hex(&read_bytes(&grid)?),
    })
}

/// Every basis sidecar in `dir`, sorted by species name.
pub fn list_bases(dir: &Path) -> Result<Vec<String>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == "json") && p.with_extension("fgrd").exists() {
            if let Some(stem) = p.file_stem() {
                names.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Loads the named bases and refuses any built for different optics.
pub fn load_bases_for(dir: &Path, species: &[String], config_hash: &str) -> Result<Vec<BasisKernel>> {
    let mut out: Vec<BasisKernel> = Vec::with_capacity(species.len());
    for name in species {
        if out.iter().any(|b| &b.species.name == name) {
            return Err(Error::Parameter(format!("species '{name}' listed twice")));
        }
        let b = load_basis(dir, name)?;
        if b.config_hash != config_hash {
            return Err(Error::Config(format!(
                "basis '{name}' was built for optical config {} but the scene uses {config_hash}; rebuild it",
                b.config_hash
            )));
        }
        out.push(b);
    }
    Ok(out)
}

fn unmix_species(scene: &Scene, bases_dir: &Path, opts: &ExperimentOptions) -> Result<Vec<String>> {
    let names = if !opts.species.is_empty() {
        opts.species.clone()
    } else if !scene.populations.is_empty() {
        scene.populations.iter().map(|p| p.species.name.clone()).collect()
    } else {
        list_bases(bases_dir)?
    };
    if names.is_empty() {
        return Err(Error::Config(format!("no bases found in {}", bases_dir.display())));
    }
    Ok(names)
}

/// Simulates `scene`, unmixes it against the stored bases and writes
/// `manifest.json` (first), `report.csv` and any requested grids to `out_dir`.
pub fn run_experiment(scene: &Scene, bases_dir: &Path, out_dir: &Path, opts: &ExperimentOptions) -> Result<ExperimentOutput> {
    opts.validate()?;
    scene.validate()?;
    let config_hash = scene.config.config_hash();
    let species = unmix_species(scene, bases_dir, opts)?;
    let bases = load_bases_for(bases_dir, &species, &config_hash)?;
    let scene_file = SceneFile::from(scene);
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        scene_hash: scene_file.hash(),
        scene: scene_file,
        config_hash,
        bases_dir: bases_dir.to_path_buf(),
        bases: bases.iter().map(|b| basis_ref(bases_dir, b)).collect::<Result<_>>()?,
        options: opts.clone(),
    };
    execute(scene, bases, manifest, out_dir)
}

/// Reruns the experiment recorded in `manifest_path`, refusing if any basis
/// file changed since.
pub fn run_from_manifest(manifest_path: &Path, out_dir: &Path) -> Result<ExperimentOutput> {
    let manifest: Manifest = read_json(manifest_path)?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::Config(format!(
            "{}: unsupported manifest format '{}'",
            manifest_path.display(),
            manifest.format
        )));
    }
    manifest.options.validate()?;
    let scene = manifest.scene.to_scene()?;
    if manifest.scene.hash() != manifest.scene_hash {
        return Err(Error::Config("manifest scene does not match its recorded hash".into()));
    }
    let names: Vec<String> = manifest.bases.iter().map(|b| b.species.clone()).collect();
    let bases = load_bases_for(&manifest.bases_dir, &names, &scene.config.config_hash())?;
    for (b, r) in bases.iter().zip(&manifest.bases) {
        if basis_ref(&manifest.bases_dir, b)? != *r {
            return Err(Error::Config(format!(
                "basis '{}' in {} changed since the manifest was written",
                r.species,
                manifest.bases_dir.display()
            )));
        }
    }
    execute(&scene, bases, manifest, out_dir)
}

fn execute(scene: &Scene, bases: Vec<BasisKernel>, manifest: Manifest, out_dir: &Path) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let opts = &manifest.options;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    write_json(&manifest_path, &manifest)?;

    let forward = opts.forward();
    let ensemble = EnsembleOptions {
        subtract_mean: bases[0].map.mean_subtracted,
        contrast_normalize: bases[0].map.contrast_normalized,
    };
    let map = scene_ensemble(scene, forward.clone(), ensemble)?;
    let problem = UnmixProblem::new(&map, &bases, opts.lag_mask()?)?;
    let estimate = nnls_unmix(&problem);
    if !estimate.kkt.passed {
        return Err(Error::NonConvergence(format!(
            "unmixing KKT violation {:e} exceeds {:e}",
            estimate.kkt.max_violation, estimate.kkt.tolerance
        )));
    }

    let gain = opts.sensor.as_ref().map_or(1.0, |s| s.exposure_scale);
    let sim = FrameSimulator::new(scene, forward)?;
    let mut prop = sim.propagator()?;
    let mut first = sim.frame(0, &mut prop)?;
    match opts.frame_output {
        FrameOutput::None => {}
        FrameOutput::Summary => {
            save_real_grid(&map.grid, &out_dir.join("autocorr.fgrd"))?;
            save_real_grid(&first, &out_dir.join("frame_0000.fgrd"))?;
        }
        FrameOutput::All => {
            save_real_grid(&map.grid, &out_dir.join("autocorr.fgrd"))?;
            for k in 0..scene.n_frames {
                let f = if k == 0 { first.clone() } else { sim.frame(k, &mut prop)? };
                save_real_grid(&f, &out_dir.join(format!("frames/frame_{k:04}.fgrd")))?;
            }
        }
    }
    first.scale(gain);
    let noise = noise_level(&first, NOISE_KSIZE, NOISE_SIGMA).ok();

    let truth: Vec<f64> = estimate
        .species
        .iter()
        .map(|s| scene.abundance_of(s).unwrap_or(0.0))
        .collect();
    let mae = mae(&truth, &estimate.abundances)?;
    let rmse = rmse(&truth, &estimate.abundances)?;
    let r2 = if truth.len() >= 2 { r2(&truth, &estimate.abundances).ok() } else { None };
    let wall = opts.record_wall_time.then(|| start.elapsed().as_secs_f64());
    let rows: Vec<ReportRow> = estimate
        .species
        .iter()
        .zip(&truth)
        .zip(&estimate.abundances)
        .map(|((s, &c_true), &c_est)| ReportRow {
            experiment_id: opts.experiment_id.clone(),
            scene_hash: manifest.scene_hash.clone(),
            species: s.clone(),
            c_true,
            c_est,
            fidelity_percent: if c_true > 0.0 { fidelity(c_est, c_true).ok() } else { None },
            mae,
            rmse,
            r2,
            rcv_percent: None,
            noise_level: noise,
            mean_exposure: map.frame_stats.mean * gain,
            frames: scene.n_frames,
            wall_time_s: wall,
        })
        .collect();
    let report_path = out_dir.join(REPORT_FILE);
    write_report(&report_path, &rows)?;
    Ok(ExperimentOutput {
        rows,
        estimate,
        map,
        manifest,
        manifest_path,
        report_path,
    })
}
