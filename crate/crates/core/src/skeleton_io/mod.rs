//! Skeleton data model, dataset files, window splitting, pretext samples and
//! the synthetic gait generator.

mod dataset;
mod pretext;
mod split;
mod synth;
mod types;

pub use dataset::{
    load_dataset, save_dataset, Dataset, DatasetManifest, IdentityEntry, Role, Split, SplitEntry,
};
pub use pretext::{build_pretext, AuxRule, PretextOutcome, PretextSample, PretextTask};
pub use split::{split_recording, SplitConfig};
pub use synth::{default_gait_params, generate_synthetic, GaitParams, SynthConfig};
pub use types::{Dim, DimensionSlice, Recording, SkeletonFrame, SkeletonSequence};
