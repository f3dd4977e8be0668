//! Clips, manifests, WAV ingestion and the synthetic mini-dataset.

mod manifest;
mod mini;
mod wav;

use std::path::Path;

pub use manifest::{city_from_filename, parse_manifest, parse_manifest_str, Clip, DatasetManifest, Fold, Provenance, SCENES};
pub use mini::{is_eval_clip, make_mini_dataset, synth_clip, MiniConfig, MINI_CITIES};
pub use wav::{read_wav, wav_duration, write_wav};

use crate::error::Result;
use crate::features::{read_cache, write_cache, FeatureMap};

/// Writes `feature` to `path` and reads it back.
pub fn cache_roundtrip(feature: &FeatureMap, path: &Path) -> Result<FeatureMap> {
    write_cache(feature, path)?;
    read_cache(path)
}
