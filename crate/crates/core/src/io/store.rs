//! Basis kernels (FGRD map plus JSON sidecar), estimator parameters,
//! training sets and loss traces.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fgrd::{decode_grid, encode_real, StoredGrid};
use super::scene_file::SpeciesFile;
use super::{read_bytes, read_json, sha256_hex, write_atomic, write_json};
use crate::error::{Error, Result};
use crate::inversion::{EstimatorParams, TrainingSet};
use crate::speckle::{AutocorrMap, BasisKernel, FrameStats};

const BASIS_FORMAT: &str = "holospeck-basis/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisMeta {
    pub format: String,
    pub species: SpeciesFile,
    pub c_ref_mg_per_ml: f64,
    pub n_mc_frames: usize,
    pub config_hash: String,
    pub seed: u64,
    pub mean_subtracted: bool,
    pub contrast_normalized: bool,
    pub frame_mean: f64,
    pub frame_std: f64,
    /// File name of the map, relative to the sidecar.
    pub grid_file: String,
    pub grid_sha256: String,
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c));
    if ok {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "species name '{name}' cannot be used as a file name (use letters, digits, '.', '_', '-')"
        )))
    }
}

/// `(map, sidecar)` paths of a species' basis inside `dir`.
pub fn basis_paths(dir: &Path, species: &str) -> Result<(PathBuf, PathBuf)> {
    check_name(species)?;
    Ok((dir.join(format!("{species}.fgrd")), dir.join(format!("{species}.json"))))
}

pub fn save_basis(dir: &Path, b: &BasisKernel) -> Result<()> {
    let (grid_path, meta_path) = basis_paths(dir, &b.species.name)?;
    let bytes = encode_real(&b.map.grid)?;
    let meta = BasisMeta {
        format: BASIS_FORMAT.into(),
        species: (&b.species).into(),
        c_ref_mg_per_ml: b.c_ref,
        n_mc_frames: b.n_mc_frames,
        config_hash: b.config_hash.clone(),
        seed: b.seed,
        mean_subtracted: b.map.mean_subtracted,
        contrast_normalized: b.map.contrast_normalized,
        frame_mean: b.map.frame_stats.mean,
        frame_std: b.map.frame_stats.std,
        grid_file: grid_path.file_name().unwrap().to_string_lossy().into_owned(),
        grid_sha256: sha256_hex(&bytes),
    };
    write_atomic(&grid_path, &bytes)?;
    write_json(&meta_path, &meta)
}

/// Loads `species` from `dir`; a missing sidecar is [`Error::MissingBasis`].
pub fn load_basis(dir: &Path, species: &str) -> Result<BasisKernel> {
    let (_, meta_path) = basis_paths(dir, species)?;
    if !meta_path.exists() {
        return Err(Error::MissingBasis {
            species: species.to_string(),
            path: meta_path,
        });
    }
    let meta: BasisMeta = read_json(&meta_path)?;
    if meta.format != BASIS_FORMAT {
        return Err(Error::Config(format!(
            "{}: unsupported basis format '{}'",
            meta_path.display(),
            meta.format
        )));
    }
    if meta.species.name != species {
        return Err(Error::Config(format!(
            "{}: sidecar describes '{}', not '{species}'",
            meta_path.display(),
            meta.species.name
        )));
    }
    let grid_path = dir.join(&meta.grid_file);
    let bytes = read_bytes(&grid_path)?;
    if sha256_hex(&bytes) != meta.grid_sha256 {
        return Err(Error::Format {
            offset: 0,
            message: format!("{}: content does not match its sidecar digest", grid_path.display()),
        });
    }
    let StoredGrid::Real(grid) = decode_grid(&bytes)? else {
        return Err(Error::Format {
            offset: 16,
            message: format!("{}: basis map must be real", grid_path.display()),
        });
    };
    let species = (&meta.species).into();
    Ok(BasisKernel {
        species,
        map: AutocorrMap {
            grid,
            n_frames_averaged: meta.n_mc_frames,
            mean_subtracted: meta.mean_subtracted,
            contrast_normalized: meta.contrast_normalized,
            config_hash: Some(meta.config_hash.clone()),
            frame_stats: FrameStats {
                mean: meta.frame_mean,
                std: meta.frame_std,
            },
        },
        n_mc_frames: meta.n_mc_frames,
        config_hash: meta.config_hash,
        c_ref: meta.c_ref_mg_per_ml,
        seed: meta.seed,
    })
}

pub fn save_params(path: &Path, p: &EstimatorParams) -> Result<()> {
    p.validate()?;
    write_json(path, p)
}

pub fn load_params(path: &Path) -> Result<EstimatorParams> {
    let p: EstimatorParams = read_json(path)?;
    p.validate()?;
    Ok(p)
}

pub fn save_training_set(path: &Path, set: &TrainingSet) -> Result<()> {
    write_json(path, set)
}

pub fn load_training_set(path: &Path) -> Result<TrainingSet> {
    let s: TrainingSet = read_json(path)?;
    if !s.rows.is_empty() {
        s.validate()?;
    }
    Ok(s)
}

pub fn write_trace(path: &Path, trace: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Format {
        offset: 0,
        message: format!("trace encoding: {e}"),
    };
    w.write_record(["epoch", "loss"]).map_err(err)?;
    for (e, l) in trace {
        w.write_record([e.to_string(), format!("{l:?}")]).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format {
        offset: 0,
        message: format!("trace encoding: {e}"),
    })?;
    write_atomic(path, &bytes)
}

pub fn read_trace(path: &Path) -> Result<Vec<(usize, f64)>> {
    let bytes = read_bytes(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format {
            offset: e.position().map_or(0, |p| p.byte()),
            message: e.to_string(),
        })?;
        let offset = rec.position().map_or(0, |p| p.byte());
        let bad = || Error::Format {
            offset,
            message: format!("{}: malformed trace row", path.display()),
        };
        out.push((
            rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
            rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RealGrid;
    use crate::scene::materials;

    fn kernel() -> BasisKernel {
        let grid = RealGrid::from_fn(8, 8, 3.45e-6, |x, y| (x * 8 + y) as f64 * 0.25).unwrap();
        BasisKernel {
            species: materials::pmma("pmma-200", 200e-9),
            map: AutocorrMap {
                grid,
                n_frames_averaged: 12,
                mean_subtracted: true,
                contrast_normalized: true,
                config_hash: Some("cfg".into()),
                frame_stats: FrameStats { mean: 0.99, std: 0.01 },
            },
            n_mc_frames: 12,
            config_hash: "cfg".into(),
            c_ref: 1.0,
            seed: 42,
        }
    }

    #[test]
    fn basis_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let k = kernel();
        save_basis(dir.path(), &k).unwrap();
        // Grid values are exact in f32 here, so the whole kernel round-trips.
        assert_eq!(load_basis(dir.path(), "pmma-200").unwrap(), k);
    }

    #[test]
    fn missing_and_tampered_bases() {
        let dir = tempfile::tempdir().unwrap();
        match load_basis(dir.path(), "gold") {
            Err(e @ Error::MissingBasis { .. }) => assert!(e.to_string().contains("gold")),
            other => panic!("{other:?}"),
        }
        save_basis(dir.path(), &kernel()).unwrap();
        let p = dir.path().join("pmma-200.fgrd");
        let mut b = std::fs::read(&p).unwrap();
        let n = b.len();
        b[n - 1] ^= 1;
        std::fs::write(&p, b).unwrap();
        assert!(matches!(load_basis(dir.path(), "pmma-200"), Err(Error::Format { .. })));
        assert!(matches!(basis_paths(dir.path(), "../x"), Err(Error::Parameter(_))));
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        let t = vec![(0, 1.5), (1, 0.1 + 0.2), (2, 1e-300)];
        write_trace(&p, &t).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("epoch,loss\n0,1.5\n"));
        assert_eq!(read_trace(&p).unwrap(), t);
    }
}
