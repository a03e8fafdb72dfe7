use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{warn_skipped, DatasetManifest, ManifestEntry, SkippedFrame, SourceFormat, Split};
use crate::error::Result;
use crate::geometry::{Pose, UnitQuaternion};

const HEADER_LINES: usize = 3;

fn trailing_number(path: &str) -> Option<u64> {
    let stem = Path::new(path).file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Reads `dataset_train.txt` or `dataset_test.txt` of a Cambridge Landmarks scene.
///
/// After three header lines every row is `path X Y Z W P Q R`. Quaternions
/// are normalized and canonicalized. Rows with the wrong field count, a
/// degenerate quaternion or a missing image are skipped and reported.
pub fn parse_cambridge(root: &Path, split: Split) -> Result<(DatasetManifest, Vec<SkippedFrame>)> {
    let file_name = match split {
        Split::Train => "dataset_train.txt",
        Split::Test => "dataset_test.txt",
    };
    let list = root.join(file_name);
    let text = fs::read_to_string(&list)?;

    let scene = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cambridge".into());
    let mut manifest = DatasetManifest::new(scene, split, SourceFormat::Cambridge);
    manifest.provenance.insert("split_file".into(), list.display().to_string());

    let mut skipped = Vec::new();
    let mut counters: BTreeMap<String, u64> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(HEADER_LINES) {
        let lineno = i + 1;
        let location = format!("{file_name}:{lineno}");
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 8 {
            skipped.push(SkippedFrame {
                location,
                reason: format!("expected 8 fields, found {}", fields.len()),
            });
            continue;
        }
        let nums: std::result::Result<Vec<f64>, _> = fields[1..].iter().map(|t| t.parse::<f64>()).collect();
        let Ok(nums) = nums else {
            skipped.push(SkippedFrame {
                location,
                reason: "unparseable number".into(),
            });
            continue;
        };
        let pose = UnitQuaternion::normalize([nums[3], nums[4], nums[5], nums[6]])
            .and_then(|q| Pose::new([nums[0], nums[1], nums[2]], q));
        let pose = match pose {
            Ok(p) => p,
            Err(e) => {
                skipped.push(SkippedFrame {
                    location,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let rel = fields[0];
        if !root.join(rel).is_file() {
            skipped.push(SkippedFrame {
                location,
                reason: format!("missing image {rel}"),
            });
            continue;
        }
        let sequence_id = Path::new(rel)
            .parent()
            .map(|p| p.to_string_lossy().into_owned())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| "default".into());
        let counter = counters.entry(sequence_id.clone()).or_insert(0);
        let frame_index = trailing_number(rel).unwrap_or(*counter);
        *counter += 1;
        manifest.entries.push(ManifestEntry {
            sequence_id,
            frame_index,
            path: PathBuf::from(rel),
            pose,
            synthetic: false,
        });
    }
    manifest.sort();
    manifest.provenance.insert("skipped".into(), skipped.len().to_string());
    warn_skipped(&skipped, "Cambridge");
    Ok((manifest, skipped))
}
