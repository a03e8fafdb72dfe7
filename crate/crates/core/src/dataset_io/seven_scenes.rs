use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::{warn_skipped, DatasetManifest, ManifestEntry, SkippedFrame, SourceFormat, Split};
use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Clone, Debug, PartialEq)]
pub struct SevenScenesOptions {
    pub split: Split,
    /// Sequence list (`sequence1`, `sequence2`, ...). Defaults to the
    /// scene's own `TrainSplit.txt` / `TestSplit.txt`; without either, every
    /// `seq-NN` directory is used.
    pub split_file: Option<PathBuf>,
    /// Set when a copy of the dataset stores world-to-camera matrices.
    pub invert_poses: bool,
}

impl Default for SevenScenesOptions {
    fn default() -> Self {
        Self {
            split: Split::Train,
            split_file: None,
            invert_poses: false,
        }
    }
}

fn read_split_file(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path)?;
    let mut seqs = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let digits = line.trim_start_matches(|c: char| !c.is_ascii_digit());
        let n: u32 = digits.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: format!("expected 'sequenceN', got '{line}'"),
        })?;
        seqs.insert(format!("seq-{n:02}"));
    }
    Ok(seqs)
}

fn parse_pose_file(path: &Path) -> std::result::Result<[[f64; 4]; 4], String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number '{t}'")))
        .collect::<std::result::Result<_, _>>()?;
    if values.len() != 16 {
        return Err(format!("expected 16 numbers, found {}", values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite matrix entry".into());
    }
    Ok(std::array::from_fn(|r| std::array::from_fn(|c| values[r * 4 + c])))
}

/// Reads a 7-Scenes scene directory (`seq-NN/frame-NNNNNN.{color.png,pose.txt}`).
///
/// Pose files hold 4×4 camera-to-world matrices. Frames with a missing or
/// malformed pose are skipped, logged and returned in the second element.
pub fn parse_seven_scenes(root: &Path, opts: &SevenScenesOptions) -> Result<(DatasetManifest, Vec<SkippedFrame>)> {
    let default_split = root.join(match opts.split {
        Split::Train => "TrainSplit.txt",
        Split::Test => "TestSplit.txt",
    });
    let split_file = opts
        .split_file
        .clone()
        .or_else(|| default_split.is_file().then_some(default_split));
    let wanted = split_file.as_deref().map(read_split_file).transpose()?;

    let mut seq_dirs: Vec<String> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.starts_with("seq-"))
        .filter(|n| wanted.as_ref().is_none_or(|w| w.contains(n)))
        .collect();
    seq_dirs.sort();

    let scene = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "seven_scenes".into());
    let mut manifest = DatasetManifest::new(scene, opts.split, SourceFormat::SevenScenes);
    manifest.provenance.insert(
        "split_file".into(),
        split_file
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "all sequences".into()),
    );
    manifest
        .provenance
        .insert("pose_convention".into(), if opts.invert_poses { "inverted" } else { "camera_to_world" }.into());

    let mut skipped = Vec::new();
    for seq in &seq_dirs {
        let mut frames: Vec<(u64, String)> = fs::read_dir(root.join(seq))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter_map(|name| {
                let stem = name.strip_suffix(".color.png")?;
                let idx = stem.strip_prefix("frame-")?.parse::<u64>().ok()?;
                Some((idx, stem.to_string()))
            })
            .collect();
        frames.sort();
        for (idx, stem) in frames {
            let pose_path = root.join(seq).join(format!("{stem}.pose.txt"));
            let location = format!("{seq}/{stem}");
            if !pose_path.is_file() {
                skipped.push(SkippedFrame {
                    location,
                    reason: "missing pose file".into(),
                });
                continue;
            }
            let pose = parse_pose_file(&pose_path).and_then(|m| Pose::from_homogeneous(&m).map_err(|e| e.to_string()));
            match pose {
                Ok(pose) => manifest.entries.push(ManifestEntry {
                    sequence_id: seq.clone(),
                    frame_index: idx,
                    path: PathBuf::from(seq).join(format!("{stem}.color.png")),
                    pose: if opts.invert_poses { pose.inverse() } else { pose },
                    synthetic: false,
                }),
                Err(reason) => skipped.push(SkippedFrame { location, reason }),
            }
        }
    }
    manifest.sort();
    manifest.provenance.insert("skipped".into(), skipped.len().to_string());
    warn_skipped(&skipped, "7-Scenes");
    Ok((manifest, skipped))
}
