//! Skeleton sequences: storage, files, preprocessing, four-stream
//! construction, augmentation, corpus statistics and a synthetic generator.

mod augment;
mod corpus;
mod format;
mod sequence;
mod stats;
mod streams;
mod synth;
pub mod topology;

pub use augment::{augment, rotate_vertical, scale_bones, AugmentConfig};
pub use format::{
    format_sequence, load_sequence, parse_sequence, save_sequence, DatasetManifest, ManifestEntry,
};
pub use sequence::{AgeGroup, SequenceMeta, SkeletonSequence};
pub use stats::{dataset_stats, dataset_stats_by_age, motion_differential, DatasetStats};
pub use streams::{
    evenly_spaced_indices, four_streams, normalize, raw_map, resample_evenly, sample_length,
    spatial_diff, temporal_diff, torso_length, FourStreamInput,
};
pub use corpus::Corpus;
pub use synth::{synth_generate, SynthConfig};
pub use topology::BoneTopology;
