//! End-to-end orchestration: experiments (simulate, unmix, report) and
//! training-set generation, both reproducible from their manifests.

mod dataset;
mod experiment;

pub use dataset::{
    entry_seed, generate_dataset, i_feature_names, recompute_row, row_features, x_feature_names, DatasetEntry,
    DatasetManifest, DatasetOutput, DatasetRowRef, DatasetSpec, DATASET_MANIFEST_FILE, DATASET_MANIFEST_FORMAT,
    TRAINING_SET_FILE,
};
pub use experiment::{
    list_bases, load_bases_for, run_experiment, run_from_manifest, BasisRef, ExperimentOptions, ExperimentOutput,
    FrameOutput, Manifest, MANIFEST_FILE, MANIFEST_FORMAT, REPORT_FILE,
};
