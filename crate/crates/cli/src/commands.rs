use std::path::{Path, PathBuf};
use std::time::Instant;

use holospeck::forward::{make_kernel, synthesize_transmission, FrameSimulator, SensorModel, SynthesisMode};
use holospeck::inversion::{
    nnls_unmix, predict, train_stage1, train_stage1_from, train_stage2, AbundanceEstimate, EstimatorParams,
    Optimizer, Stage, TrainConfig, TrainOutcome, UnmixProblem,
};
use holospeck::io::{
    basis_paths, load_basis, load_params, load_real_grid, load_training_set, read_bytes, read_json,
    save_basis, save_params, save_real_grid, write_trace, ReportRow, SceneFile,
};
use holospeck::metrics::{
    calibrated_noise_sigma, decades, fidelity, noise_level, r2, uvvis_baseline, MetricReport, UvVisConfig,
};
use holospeck::pipeline::{
    generate_dataset, list_bases, load_bases_for, run_experiment, run_from_manifest, ExperimentOptions,
    ExperimentOutput, FrameOutput, TRAINING_SET_FILE,
};
use holospeck::rng::derive_seed;
use holospeck::scene::{sample_realization, Scene};
use holospeck::speckle::{
    ensemble_autocorr_with, species_basis_with, verify_field_identity, AutocorrMap, BasisKernel, BasisOptions,
    EnsembleOptions, FrameStats, LagMask,
};
use holospeck::{Error, Result};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::args::{Cli, Command, ForwardArgs, FrameOutputArg, Global, ModeArg, OptimizerArg, SensorArg, SensorArgs, StageArg};
use crate::Outcome;

/// Residual bound for `identity-check`.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
/// Monte-Carlo frames per basis when `--frames` is not given.
pub const DEFAULT_BASIS_FRAMES: usize = 256;

pub fn run(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { scene, forward, sensor } => simulate(g, scene, forward, sensor),
        Command::Basis { scene, species, forward } => basis(g, scene, species, forward),
        Command::Unmix {
            bases,
            scene,
            manifest,
            frame,
            autocorr,
            config,
            species,
            id,
            lag_min,
            lag_max,
            save_frames,
            wall_time,
            forward,
            sensor,
        } => {
            let mask = LagMask::new(*lag_min, *lag_max)?;
            if let Some(m) = manifest {
                return unmix_manifest(g, m);
            }
            let bases = bases
                .as_deref()
                .ok_or_else(|| Error::Parameter("--bases is required unless --manifest is given".into()))?;
            if let Some(s) = scene {
                let scene = load_scene(s, g)?;
                let opts = ExperimentOptions {
                    experiment_id: id.clone(),
                    mode: mode(forward.mode),
                    slices: forward.slices,
                    sensor: sensor_model(sensor, scene.master_seed)?,
                    lag_r_min_px: mask.r_min,
                    lag_r_max_px: mask.r_max,
                    species: species.clone(),
                    frame_output: frame_output(*save_frames),
                    record_wall_time: *wall_time,
                };
                let out = run_experiment(&scene, bases, &g.out, &opts)?;
                return Ok(experiment_outcome("scene", &out));
            }
            unmix_measured(g, bases, frame, autocorr.as_deref(), config.as_deref(), species, mask, *save_frames)
        }
        Command::Train {
            dataset,
            stage,
            config,
            params,
            lr,
            epochs,
            batch_size,
            hidden,
            optimizer,
            squared_qt,
        } => {
            let stage = match stage {
                StageArg::One => Stage::I,
                StageArg::Two => Stage::II,
            };
            let mut cfg = match config {
                Some(p) => read_json::<TrainConfig>(p)?,
                None => TrainConfig::new(stage),
            };
            if let Some(v) = lr {
                cfg.learning_rate = *v;
            }
            if let Some(v) = epochs {
                cfg.epochs = *v;
            }
            if let Some(v) = batch_size {
                cfg.batch_size = *v;
            }
            if let Some(v) = hidden {
                cfg.hidden = *v;
            }
            if let Some(o) = optimizer {
                cfg.optimizer = match o {
                    OptimizerArg::Adam => Optimizer::Adam,
                    OptimizerArg::Sgd => Optimizer::Sgd,
                };
            }
            if *squared_qt {
                cfg.squared_qt = true;
            }
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            train(g, dataset, stage, &cfg, params.as_deref())
        }
        Command::Estimate { features, params } => estimate(features, params),
        Command::Evaluate { truth, pred } => evaluate(truth, pred),
        Command::Noise { image, ksize, sigma } => noise(image, *ksize, *sigma),
        Command::Uvvis {
            ladder,
            epsilon,
            path_cm,
            saturation,
            relative_noise,
            estimates,
        } => {
            let cfg = UvVisConfig {
                epsilon: *epsilon,
                path_cm: *path_cm,
                saturation_a: *saturation,
                relative_noise: *relative_noise,
                seed: g.seed.unwrap_or(0),
            };
            uvvis(ladder, &cfg, estimates)
        }
        Command::Dataset { spec } => dataset(g, spec),
        Command::IdentityCheck {
            scene,
            z,
            frame_index,
            mode: m,
        } => identity_check(g, scene, *z, *frame_index, mode(*m)),
    }
}

fn mode(m: ModeArg) -> SynthesisMode {
    match m {
        ModeArg::Multiplicative => SynthesisMode::Multiplicative,
        ModeArg::AdditiveWeak => SynthesisMode::AdditiveWeak,
    }
}

fn frame_output(f: FrameOutputArg) -> FrameOutput {
    match f {
        FrameOutputArg::None => FrameOutput::None,
        FrameOutputArg::Summary => FrameOutput::Summary,
        FrameOutputArg::All => FrameOutput::All,
    }
}

fn mode_name(m: SynthesisMode) -> &'static str {
    match m {
        SynthesisMode::Multiplicative => "multiplicative",
        SynthesisMode::AdditiveWeak => "additive-weak",
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Scene file with the global `--grid`, `--seed` and `--frames` applied.
fn load_scene(path: &Path, g: &Global) -> Result<Scene> {
    let mut f: SceneFile = read_json(path)?;
    if let Some((w, h)) = g.grid {
        f.optics.grid_width_px = w;
        f.optics.grid_height_px = h;
    }
    if let Some(s) = g.seed {
        f.master_seed = s;
    }
    if let Some(n) = g.frames {
        f.n_frames = n;
    }
    f.to_scene()
}

/// The sensor draws its noise from the scene seed so a scene file fully
/// determines a run.
fn sensor_model(a: &SensorArgs, seed: u64) -> Result<Option<SensorModel>> {
    let mut s = match a.sensor {
        SensorArg::None => {
            if a.exposure.is_some() || a.read_noise.is_some() || a.bit_depth.is_some() || a.no_shot_noise {
                return Err(Error::Parameter("sensor overrides need --sensor default or ideal".into()));
            }
            return Ok(None);
        }
        SensorArg::Default => SensorModel::default(),
        SensorArg::Ideal => SensorModel::ideal(),
    };
    if let Some(v) = a.exposure {
        s.exposure_scale = v;
    }
    if let Some(v) = a.read_noise {
        s.read_noise_sigma = v;
    }
    if let Some(v) = a.bit_depth {
        s.bit_depth = v;
    }
    if a.no_shot_noise {
        s.shot_noise = false;
    }
    s.seed = seed;
    s.validate()?;
    Ok(Some(s))
}

fn simulate(g: &Global, scene_path: &Path, fwd: &ForwardArgs, sensor: &SensorArgs) -> Result<Outcome> {
    let scene = load_scene(scene_path, g)?;
    let opts = holospeck::forward::ForwardOptions {
        mode: mode(fwd.mode),
        slices: fwd.slices,
        sensor: sensor_model(sensor, scene.master_seed)?,
    };
    let sim = FrameSimulator::new(&scene, opts)?;
    let mut prop = sim.propagator()?;
    let dir = g.out.join("frames");
    let mut files = Vec::with_capacity(scene.n_frames);
    let mut sum = 0.0;
    for k in 0..scene.n_frames {
        let f = sim.frame(k, &mut prop)?;
        sum += f.mean();
        let p = dir.join(format!("frame_{k:04}.fgrd"));
        save_real_grid(&f, &p)?;
        files.push(path_str(&p));
    }
    let cfg = &scene.config;
    let mean = if scene.n_frames > 0 { sum / scene.n_frames as f64 } else { 0.0 };
    Ok(Outcome::ok(
        json!({
            "scene_hash": SceneFile::from(&scene).hash(),
            "config_hash": cfg.config_hash(),
            "width": cfg.grid_width,
            "height": cfg.grid_height,
            "n_frames": scene.n_frames,
            "mode": mode_name(mode(fwd.mode)),
            "slices": fwd.slices,
            "mean_intensity": mean,
            "files": files,
        }),
        format!("wrote {} frames to {}", scene.n_frames, dir.display()),
    ))
}

fn basis(g: &Global, scene_path: &Path, only: &[String], fwd: &ForwardArgs) -> Result<Outcome> {
    let scene = load_scene(scene_path, g)?;
    let all = scene.species();
    if all.is_empty() {
        return Err(Error::Parameter("scene lists no species to build bases for".into()));
    }
    for name in only {
        if !all.iter().any(|s| &s.name == name) {
            return Err(Error::Parameter(format!("species '{name}' is not in the scene")));
        }
    }
    let n_mc = g.frames.unwrap_or(DEFAULT_BASIS_FRAMES);
    let master = g.seed.unwrap_or(0);
    let opts = BasisOptions {
        mode: mode(fwd.mode),
        slices: fwd.slices,
        ensemble: EnsembleOptions::normalized(),
    };
    let mut built = Vec::new();
    let mut text = String::new();
    // The seed is keyed by position in the scene so filtering does not
    // change a basis.
    for (k, s) in all.iter().enumerate() {
        if !only.is_empty() && !only.contains(&s.name) {
            continue;
        }
        let seed = derive_seed(master, &[k as u64]);
        let b = species_basis_with(s, &scene.config, n_mc, seed, &opts)?;
        save_basis(&g.out, &b)?;
        let (grid, sidecar) = basis_paths(&g.out, &s.name)?;
        text.push_str(&format!("basis {} -> {}\n", s.name, sidecar.display()));
        built.push(json!({
            "species": s.name,
            "config_hash": b.config_hash,
            "n_mc_frames": n_mc,
            "seed": seed,
            "grid_path": path_str(&grid),
            "sidecar_path": path_str(&sidecar),
        }));
    }
    Ok(Outcome::ok(json!({ "bases": built }), text))
}

fn estimate_json(e: &AbundanceEstimate) -> Value {
    json!({
        "species": e.species,
        "abundances_mg_per_ml": e.abundances,
        "residual_norm": e.residual_norm,
        "iterations": e.iterations,
        "converged": e.converged,
        "rank_deficient": e.rank_deficient,
        "kkt": {
            "max_violation": e.kkt.max_violation,
            "tolerance": e.kkt.tolerance,
            "passed": e.kkt.passed,
        },
    })
}

fn row_json(r: &ReportRow) -> Value {
    json!({
        "experiment_id": r.experiment_id,
        "scene_hash": r.scene_hash,
        "species": r.species,
        "c_true_mg_per_ml": r.c_true,
        "c_est_mg_per_ml": r.c_est,
        "fidelity_percent": r.fidelity_percent,
        "mae": r.mae,
        "rmse": r.rmse,
        "r2": r.r2,
        "rcv_percent": r.rcv_percent,
        "noise_level": r.noise_level,
        "mean_exposure": r.mean_exposure,
        "frames": r.frames,
        "wall_time_s": r.wall_time_s,
    })
}

fn estimate_text(e: &AbundanceEstimate) -> String {
    let mut t: String = e
        .species
        .iter()
        .zip(&e.abundances)
        .map(|(s, c)| format!("{s}: {c:.6} mg/mL\n"))
        .collect();
    t.push_str(&format!("residual {:.3e}, KKT {}", e.residual_norm, if e.kkt.passed { "passed" } else { "FAILED" }));
    t
}

fn experiment_outcome(source: &str, out: &ExperimentOutput) -> Outcome {
    let mut j = estimate_json(&out.estimate);
    j["source"] = json!(source);
    j["n_frames"] = json!(out.map.n_frames_averaged);
    j["rows"] = Value::Array(out.rows.iter().map(row_json).collect());
    j["manifest_path"] = json!(path_str(&out.manifest_path));
    j["report_path"] = json!(path_str(&out.report_path));
    let text = format!("{}\nreport: {}", estimate_text(&out.estimate), out.report_path.display());
    Outcome::ok(j, text)
}

fn unmix_manifest(g: &Global, manifest: &Path) -> Result<Outcome> {
    let out = run_from_manifest(manifest, &g.out)?;
    Ok(experiment_outcome("manifest", &out))
}

#[allow(clippy::too_many_arguments)]
fn unmix_measured(
    g: &Global,
    bases_dir: &Path,
    frames: &[PathBuf],
    autocorr: Option<&Path>,
    config: Option<&Path>,
    species: &[String],
    mask: LagMask,
    save: FrameOutputArg,
) -> Result<Outcome> {
    let config_hash = config
        .map(|p| read_json::<SceneFile>(p).and_then(|f| f.to_scene()))
        .transpose()?
        .map(|s| s.config.config_hash());
    let names = if species.is_empty() { list_bases(bases_dir)? } else { species.to_vec() };
    if names.is_empty() {
        return Err(Error::Config(format!("no bases found in {}", bases_dir.display())));
    }
    let bases: Vec<BasisKernel> = match &config_hash {
        Some(h) => load_bases_for(bases_dir, &names, h)?,
        None => names.iter().map(|n| load_basis(bases_dir, n)).collect::<Result<_>>()?,
    };
    let (source, mut map) = match autocorr {
        Some(p) => {
            let grid = load_real_grid(p)?;
            // Stored maps follow the basis convention; the frame statistics
            // are not recoverable from the map alone.
            let map = AutocorrMap {
                grid,
                n_frames_averaged: 0,
                mean_subtracted: bases[0].map.mean_subtracted,
                contrast_normalized: bases[0].map.contrast_normalized,
                config_hash: None,
                frame_stats: FrameStats { mean: 1.0, std: 0.0 },
            };
            ("autocorr", map)
        }
        None => {
            if frames.is_empty() {
                return Err(Error::Parameter("unmix needs --scene, --manifest, --frame or --autocorr".into()));
            }
            let grids = frames.iter().map(|p| load_real_grid(p)).collect::<Result<Vec<_>>>()?;
            ("frames", ensemble_autocorr_with(&grids, EnsembleOptions::normalized())?)
        }
    };
    map.config_hash = config_hash;
    for b in &bases {
        b.ensure_compatible(&map)?;
    }
    if save != FrameOutputArg::None && source == "frames" {
        save_real_grid(&map.grid, &g.out.join("autocorr.fgrd"))?;
    }
    let est = nnls_unmix(&UnmixProblem::new(&map, &bases, mask)?);
    if !est.kkt.passed {
        return Err(Error::NonConvergence(format!(
            "NNLS KKT check failed (violation {:.3e} > {:.3e})",
            est.kkt.max_violation, est.kkt.tolerance
        )));
    }
    let mut j = estimate_json(&est);
    j["source"] = json!(source);
    j["n_frames"] = json!(map.n_frames_averaged);
    j["rows"] = json!([]);
    j["manifest_path"] = Value::Null;
    j["report_path"] = Value::Null;
    let text = estimate_text(&est);
    let mut o = Outcome::ok(j, text);
    if !est.converged {
        o.text.push_str("\nwarning: bases are rank deficient, the split between them is not unique");
        o.code = 3;
    }
    Ok(o)
}

fn training_set_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(TRAINING_SET_FILE)
    } else {
        p.to_path_buf()
    }
}

fn train(g: &Global, dataset: &Path, stage: Stage, cfg: &TrainConfig, params: Option<&Path>) -> Result<Outcome> {
    let set = load_training_set(&training_set_path(dataset))?;
    let out: TrainOutcome = match stage {
        Stage::I => match params {
            Some(p) => train_stage1_from(&set, load_params(p)?, cfg)?,
            None => train_stage1(&set, cfg)?,
        },
        Stage::II => {
            let p = params.ok_or_else(|| Error::Parameter("stage 2 needs --params from stage 1".into()))?;
            train_stage2(&set, load_params(p)?, cfg)?
        }
    };
    let params_path = g.out.join("params.json");
    let trace_path = g.out.join("trace.csv");
    save_params(&params_path, &out.params)?;
    write_trace(&trace_path, &out.trace)?;
    let pred = predict(&set, &out.params)?;
    let r2s: Vec<Option<f64>> = (0..out.params.n_out)
        .map(|o| {
            let y: Vec<f64> = set.rows.iter().map(|r| r.c[o]).collect();
            let yh: Vec<f64> = pred.iter().map(|c| c[o]).collect();
            r2(&y, &yh).ok()
        })
        .collect();
    let stage_name = if stage == Stage::I { "1" } else { "2" };
    let final_loss = out.trace.last().map_or(out.best_loss, |t| t.1);
    Ok(Outcome::ok(
        json!({
            "stage": stage_name,
            "epochs": cfg.epochs,
            "best_epoch": out.best_epoch,
            "best_loss": out.best_loss,
            "final_loss": final_loss,
            "theta_digest": out.params.theta_digest(),
            "train_r2": r2s,
            "params_path": path_str(&params_path),
            "trace_path": path_str(&trace_path),
        }),
        format!(
            "stage {stage_name}: best loss {:.6e} at epoch {}; params -> {}",
            out.best_loss,
            out.best_epoch,
            params_path.display()
        ),
    ))
}

#[derive(Deserialize)]
struct FeatureRow {
    x: Vec<f64>,
    i: Vec<f64>,
    #[serde(default)]
    c: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct FeatureFile {
    #[serde(default)]
    species: Vec<String>,
    rows: Vec<FeatureRow>,
}

fn estimate(features: &Path, params: &Path) -> Result<Outcome> {
    let f: FeatureFile = read_json(features)?;
    let p: EstimatorParams = load_params(params)?;
    let est = f
        .rows
        .iter()
        .map(|r| holospeck::inversion::estimate(&r.x, &r.i, &p))
        .collect::<Result<Vec<_>>>()?;
    let truth: Option<Vec<f64>> = f
        .rows
        .iter()
        .map(|r| r.c.clone())
        .collect::<Option<Vec<_>>>()
        .map(|v| v.concat());
    let metrics = match truth {
        Some(t) if !t.is_empty() => {
            let flat: Vec<f64> = est.concat();
            if t.len() != flat.len() {
                return Err(Error::Shape(format!("{} truth values for {} estimates", t.len(), flat.len())));
            }
            Some(serde_json::to_value(MetricReport::new(&t, &flat)?).expect("metric report serializes"))
        }
        _ => None,
    };
    let text = format!("{} rows estimated", est.len());
    Ok(Outcome::ok(
        json!({ "species": f.species, "estimates": est, "metrics": metrics }),
        text,
    ))
}

fn flatten_numbers(v: &Value, out: &mut Vec<f64>, what: &str) -> Result<()> {
    match v {
        Value::Number(n) => out.push(n.as_f64().unwrap_or(f64::NAN)),
        Value::Array(a) => {
            for x in a {
                flatten_numbers(x, out, what)?;
            }
        }
        _ => return Err(Error::Parameter(format!("{what}: expected numbers, found {v}"))),
    }
    Ok(())
}

/// A comma-separated list, or a JSON file holding numbers (possibly nested),
/// a training set (its `c` values) or an `estimate` output.
fn read_series(arg: &str, what: &str) -> Result<Vec<f64>> {
    let path = Path::new(arg);
    let mut out = Vec::new();
    if path.exists() {
        let v: Value = serde_json::from_slice(&read_bytes(path)?).map_err(|e| Error::json(path, e))?;
        match &v {
            Value::Object(o) if o.contains_key("estimates") => flatten_numbers(&o["estimates"], &mut out, what)?,
            Value::Object(o) if o.contains_key("rows") => {
                let rows = o["rows"]
                    .as_array()
                    .ok_or_else(|| Error::Parameter(format!("{what}: 'rows' is not an array")))?;
                for r in rows {
                    let c = r.get("c").ok_or_else(|| Error::Parameter(format!("{what}: row without 'c'")))?;
                    flatten_numbers(c, &mut out, what)?;
                }
            }
            _ => flatten_numbers(&v, &mut out, what)?,
        }
    } else {
        for s in arg.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            out.push(
                s.parse()
                    .map_err(|_| Error::Parameter(format!("{what}: '{s}' is neither a number nor a file")))?,
            );
        }
    }
    if out.is_empty() {
        return Err(Error::Parameter(format!("{what} is empty")));
    }
    Ok(out)
}

fn evaluate(truth: &str, pred: &str) -> Result<Outcome> {
    let y = read_series(truth, "--truth")?;
    let yh = read_series(pred, "--pred")?;
    let m = MetricReport::new(&y, &yh)?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
    let text = format!(
        "n {}  mae {:.6}  rmse {:.6}  r2 {}  rcv% {}  fidelity% {}",
        m.n,
        m.mae,
        m.rmse,
        fmt(m.r2),
        fmt(m.rcv_percent),
        fmt(m.fidelity_percent)
    );
    Ok(Outcome::ok(serde_json::to_value(&m).expect("metric report serializes"), text))
}

fn noise(image: &Path, ksize: usize, sigma: f64) -> Result<Outcome> {
    let img = load_real_grid(image)?;
    let level = noise_level(&img, ksize, sigma)?;
    let cal = calibrated_noise_sigma(&img, ksize, sigma)?;
    Ok(Outcome::ok(
        json!({
            "width": img.width(),
            "height": img.height(),
            "ksize": ksize,
            "sigma": sigma,
            "noise_level": level,
            "calibrated_sigma": cal,
        }),
        format!("noise level {level:.6} (white-noise sigma {cal:.6})"),
    ))
}

/// Span in decades of the ladder points whose fidelity reaches this level.
pub const UVVIS_FIDELITY_FLOOR: f64 = 90.0;

fn uvvis(ladder: &[f64], cfg: &UvVisConfig, estimates: &[f64]) -> Result<Outcome> {
    if !estimates.is_empty() && estimates.len() != ladder.len() {
        return Err(Error::Shape(format!(
            "{} pipeline estimates for a ladder of {}",
            estimates.len(),
            ladder.len()
        )));
    }
    let pts = uvvis_baseline(ladder, cfg)?;
    let mut rows = Vec::with_capacity(pts.len());
    let (mut uv_ok, mut pipe_ok) = (Vec::new(), Vec::new());
    for (k, p) in pts.iter().enumerate() {
        let uv_fid = p.c_est.map(|e| fidelity(e, p.c_true)).transpose()?;
        if uv_fid.is_some_and(|f| f >= UVVIS_FIDELITY_FLOOR) {
            uv_ok.push(p.c_true);
        }
        let pipe = estimates.get(k).copied();
        let pipe_fid = pipe.map(|e| fidelity(e, p.c_true)).transpose()?;
        if pipe_fid.is_some_and(|f| f >= UVVIS_FIDELITY_FLOOR) {
            pipe_ok.push(p.c_true);
        }
        rows.push(json!({
            "c_true_mg_per_ml": p.c_true,
            "absorbance": p.absorbance,
            "uvvis_c_est_mg_per_ml": p.c_est,
            "saturated": p.saturated,
            "uvvis_fidelity_percent": uv_fid,
            "pipeline_c_est_mg_per_ml": pipe,
            "pipeline_fidelity_percent": pipe_fid,
        }));
    }
    let saturated = pts.iter().filter(|p| p.saturated).count();
    let uv_dec = decades(&uv_ok);
    let pipe_dec = (!estimates.is_empty()).then(|| decades(&pipe_ok));
    let mut text = format!("uv-vis: {saturated} of {} points saturated, {uv_dec:.2} decades in range", pts.len());
    if let Some(d) = pipe_dec {
        text.push_str(&format!("\npipeline: {d:.2} decades at fidelity >= {UVVIS_FIDELITY_FLOOR}%"));
    }
    Ok(Outcome::ok(
        json!({
            "epsilon": cfg.epsilon,
            "path_cm": cfg.path_cm,
            "saturation_absorbance": cfg.saturation_a,
            "points": rows,
            "saturated_count": saturated,
            "uvvis_decades": uv_dec,
            "pipeline_decades": pipe_dec,
        }),
        text,
    ))
}

fn dataset(g: &Global, spec: &Path) -> Result<Outcome> {
    let out = generate_dataset(spec, &g.out)?;
    Ok(Outcome::ok(
        json!({
            "rows": out.set.rows.len(),
            "species": out.set.species,
            "x_features": out.manifest.x_features,
            "i_features": out.manifest.i_features,
            "set_path": path_str(&out.set_path),
            "manifest_path": path_str(&out.manifest_path),
        }),
        format!("{} rows -> {}", out.set.rows.len(), out.set_path.display()),
    ))
}

fn identity_check(g: &Global, scene_path: &Path, z: Option<f64>, frame: usize, m: SynthesisMode) -> Result<Outcome> {
    let t0 = Instant::now();
    let mut scene = load_scene(scene_path, g)?;
    if let Some(z) = z {
        scene.config.propagation_distance = z;
        scene.config.validate()?;
    }
    let cfg = &scene.config;
    let particles = sample_realization(&scene, frame)?;
    let s = synthesize_transmission(&particles, &scene.species(), cfg, m)?;
    let k = make_kernel(cfg, cfg.propagation_distance)?;
    let residual = verify_field_identity(&s, &k)?;
    let passed = residual <= IDENTITY_TOLERANCE;
    let elapsed = t0.elapsed().as_secs_f64();
    let mut o = Outcome::ok(
        json!({
            "residual": residual,
            "tolerance": IDENTITY_TOLERANCE,
            "passed": passed,
            "width": cfg.grid_width,
            "height": cfg.grid_height,
            "z_m": cfg.propagation_distance,
            "particles": particles.len(),
            "elapsed_s": elapsed,
        }),
        format!(
            "identity residual {residual:.3e} ({}) on {}x{}, {} particles",
            if passed { "ok" } else { "FAILED" },
            cfg.grid_width,
            cfg.grid_height,
            particles.len()
        ),
    );
    if !passed {
        o.code = 3;
    }
    Ok(o)
}
