//! Voxel grids, patch extraction, dataset manifests and the on-disk volume format.

mod grid;
mod io;
mod manifest;
mod patch;

pub use grid::{volume_fraction, Grid, PhaseMask, VoxelGrid};
pub use io::{read_volume, write_atomic, write_volume, VolumeHeader};
pub use manifest::{
    ingest_diffuse_volumes, split_dataset, split_sizes, DatasetManifest, IngestConfig,
    ManifestEntry, Provenance, Split, DEFAULT_SPLIT_RATIOS,
};
pub use patch::{extract_patches, is_single_phase, PatchSpec, DEFAULT_EMPTY_THRESHOLD};
