use std::path::Path;

use crate::augmentation::Sample;
use crate::dataset_io::{DatasetManifest, SourceFormat};
use crate::error::{Error, Result};
use crate::imaging::read_image;
use crate::synthetic::{generate_dataset, render_samples};

use super::config::DatasetRef;

/// Both splits of a dataset held in memory at native resolution.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub train_manifest: DatasetManifest,
    pub test_manifest: DatasetManifest,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl LoadedData {
    pub fn source_format(&self) -> SourceFormat {
        self.train_manifest.source_format
    }
}

/// Reads every image a manifest references.
pub fn load_manifest_samples(manifest: &DatasetManifest, base: &Path) -> Result<Vec<Sample>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let path = manifest.resolve(base, e);
            let image = read_image(&path).map_err(|err| Error::Data(format!("{}: {err}", path.display())))?;
            Ok(Sample {
                image,
                label: e.pose,
                sequence_id: e.sequence_id.clone(),
                frame_index: e.frame_index,
                synthetic: e.synthetic,
            })
        })
        .collect()
}

fn manifest_dir(path: &Path) -> &Path {
    path.parent().unwrap_or_else(|| Path::new("."))
}

pub fn load_dataset(dataset: &DatasetRef) -> Result<LoadedData> {
    let data = match dataset {
        DatasetRef::Synthetic { scene, trajectory, seed } => {
            let (train_manifest, test_manifest) = generate_dataset(scene, trajectory, *seed)?;
            LoadedData {
                train: render_samples(&train_manifest, scene, *seed)?,
                test: render_samples(&test_manifest, scene, *seed)?,
                train_manifest,
                test_manifest,
            }
        }
        DatasetRef::Manifests { train, test } => {
            let train_manifest = DatasetManifest::load(train)?;
            let test_manifest = DatasetManifest::load(test)?;
            if train_manifest.source_format != test_manifest.source_format {
                return Err(Error::Data(format!(
                    "train is {} but test is {}",
                    train_manifest.source_format.name(),
                    test_manifest.source_format.name()
                )));
            }
            LoadedData {
                train: load_manifest_samples(&train_manifest, manifest_dir(train))?,
                test: load_manifest_samples(&test_manifest, manifest_dir(test))?,
                train_manifest,
                test_manifest,
            }
        }
    };
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::Data("both splits need at least one frame".into()));
    }
    Ok(data)
}
