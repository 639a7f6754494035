//! Deterministic multimodal activity simulator: labeled RGB + auxiliary
//! sequences with motion-confusable class pairs.

pub mod auxiliary;
pub mod baseline;
pub mod dataset;
pub mod render;
pub mod script;
pub mod types;

pub use auxiliary::{derive_aux, distance_field, frame_diff_pair};
pub use baseline::{majority_class_accuracy, nearest_centroid_accuracy};
pub use dataset::{
    config_hash, generate_dataset, load_dataset, read_manifest, render_sequence, write_dataset,
    Dataset, DatasetManifest, SplitIds,
};
pub use render::{render_frame, RenderedFrame};
pub use script::{action_stationary, sample_runs, sample_script, Run};
pub use types::{ActivityScriptConfig, AuxMode, DurationRange, SequenceSample};
