use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "holospeck",
    version,
    about = "Holographic speckle simulation and species-resolved abundance unmixing"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Master seed; overrides the seed of the scene, basis, training run or
    /// UV-Vis noise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Number of frames (Monte-Carlo frames for `basis`).
    #[arg(long, global = true)]
    pub frames: Option<usize>,
    /// Grid size override, e.g. 256x256.
    #[arg(long, global = true, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Suppress diagnostics on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let p = |v: &str| {
        v.trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| format!("bad grid dimension '{v}'"))
    };
    Ok((p(w)?, p(h)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Multiplicative,
    AdditiveWeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SensorArg {
    /// Noise-free, intensities pass through unchanged.
    None,
    /// 12-bit, 2 counts read noise, shot noise, 2000 counts per unit intensity.
    Default,
    /// Unit gain, 16-bit, noise off.
    Ideal,
}

#[derive(Debug, Clone, Args)]
pub struct ForwardArgs {
    #[arg(long, value_enum, default_value = "multiplicative")]
    pub mode: ModeArg,
    /// Depth slices for the multislice cascade.
    #[arg(long, default_value_t = 1)]
    pub slices: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SensorArgs {
    #[arg(long, value_enum, default_value = "none")]
    pub sensor: SensorArg,
    /// Counts per unit intensity.
    #[arg(long)]
    pub exposure: Option<f64>,
    /// Read-noise standard deviation, counts.
    #[arg(long)]
    pub read_noise: Option<f64>,
    #[arg(long)]
    pub bit_depth: Option<u32>,
    #[arg(long)]
    pub no_shot_noise: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FrameOutputArg {
    None,
    Summary,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    #[value(name = "1", alias = "I")]
    One,
    #[value(name = "2", alias = "II")]
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate frames of a scene and write them as FGRD grids.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        forward: ForwardArgs,
        #[command(flatten)]
        sensor: SensorArgs,
    },
    /// Build unit-abundance basis kernels for the species of a scene file.
    Basis {
        /// Scene file supplying the optics and the species.
        #[arg(long)]
        scene: PathBuf,
        /// Only these species (repeatable; default all).
        #[arg(long = "species")]
        species: Vec<String>,
        #[command(flatten)]
        forward: ForwardArgs,
    },
    /// Estimate abundances from a scene, a manifest, frames or an
    /// autocorrelation map.
    Unmix {
        #[arg(long)]
        bases: Option<PathBuf>,
        /// Simulate this scene and unmix it (writes manifest and report).
        #[arg(long, conflicts_with_all = ["manifest", "frame", "autocorr"])]
        scene: Option<PathBuf>,
        /// Rerun an experiment from its manifest.
        #[arg(long, conflicts_with_all = ["frame", "autocorr"])]
        manifest: Option<PathBuf>,
        /// Intensity frames (FGRD, repeatable).
        #[arg(long, conflicts_with = "autocorr")]
        frame: Vec<PathBuf>,
        /// A precomputed ensemble map (FGRD) in the bases' convention.
        #[arg(long)]
        autocorr: Option<PathBuf>,
        /// Scene file whose optics must match the bases (frames/autocorr input).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Bases to unmix against (repeatable).
        #[arg(long = "species")]
        species: Vec<String>,
        #[arg(long, default_value = "experiment")]
        id: String,
        #[arg(long, default_value_t = 1.0)]
        lag_min: f64,
        #[arg(long, default_value_t = 5.0)]
        lag_max: f64,
        #[arg(long, value_enum, default_value = "none")]
        save_frames: FrameOutputArg,
        /// Fill the wall-time report column (breaks byte reproducibility).
        #[arg(long)]
        wall_time: bool,
        #[command(flatten)]
        forward: ForwardArgs,
        #[command(flatten)]
        sensor: SensorArgs,
    },
    /// Train the estimator (stage 1: encoder and mapper; stage 2: head).
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        stage: StageArg,
        /// Training configuration JSON; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Stage-1 parameters to freeze (stage 2) or start from (stage 1).
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long, value_enum)]
        optimizer: Option<OptimizerArg>,
        /// Squared norm in the quantification loss.
        #[arg(long)]
        squared_qt: bool,
    },
    /// Predict abundances for feature rows.
    Estimate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        params: PathBuf,
    },
    /// MAE, RMSE, R², RCV and fidelity of predictions against truth.
    Evaluate {
        /// Numbers as `1,2,3` or a JSON file (array, nested arrays, or a
        /// training set whose abundances are used).
        #[arg(long)]
        truth: String,
        /// Same forms as `--truth`, or an `estimate --json` output file.
        #[arg(long)]
        pred: String,
    },
    /// Gaussian high-pass noise level of an image.
    Noise {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 7)]
        ksize: usize,
        #[arg(long, default_value_t = 1.5)]
        sigma: f64,
    },
    /// Simulated Beer–Lambert baseline over an abundance ladder.
    Uvvis {
        /// Abundances, mg/mL, e.g. `0.001,0.01,0.1,1,10`.
        #[arg(long, value_delimiter = ',', required = true)]
        ladder: Vec<f64>,
        /// Effective extinction per (mg/mL·cm).
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        path_cm: f64,
        #[arg(long, default_value_t = 3.0)]
        saturation: f64,
        #[arg(long, default_value_t = 0.0)]
        relative_noise: f64,
        /// Pipeline estimates for the same ladder, for the comparison.
        #[arg(long, value_delimiter = ',')]
        estimates: Vec<f64>,
    },
    /// Generate a training set from a dataset spec.
    Dataset {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Check the field-domain correlation identity on a scene realization.
    IdentityCheck {
        #[arg(long)]
        scene: PathBuf,
        /// Propagation distance override, m.
        #[arg(long)]
        z: Option<f64>,
        /// Realization index.
        #[arg(long, default_value_t = 0)]
        frame_index: usize,
        #[arg(long, value_enum, default_value = "multiplicative")]
        mode: ModeArg,
    },
}
