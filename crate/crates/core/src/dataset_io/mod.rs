//! Dataset manifests, the 7-Scenes and Cambridge Landmarks label readers,
//! and temporal windowing for recurrent heads.
//!
//! # Manifest format
//!
//! ```text
//! POSELAB-MANIFEST 1
//! # name = chess
//! # split = train
//! # source_format = seven_scenes
//! # <provenance key> = <value>
//! seq-01<TAB>0<TAB>seq-01/frame-000000.color.png<TAB>x<TAB>y<TAB>z<TAB>qw<TAB>qx<TAB>qy<TAB>qz<TAB>0
//! ```
//!
//! Sample rows are tab-separated: `sequence_id, frame_index, path, x, y, z,
//! qw, qx, qy, qz, synthetic_flag`. Floats are written with 17 significant
//! digits; relative paths resolve against the manifest's directory.

mod cambridge;
mod seven_scenes;

pub use cambridge::parse_cambridge;
pub use seven_scenes::{parse_seven_scenes, SevenScenesOptions};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Pose, UnitQuaternion};

pub const MANIFEST_MAGIC: &str = "POSELAB-MANIFEST";
pub const MANIFEST_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SourceFormat {
    SevenScenes,
    Cambridge,
    Synthetic,
}

impl SourceFormat {
    pub fn name(&self) -> &'static str {
        match self {
            SourceFormat::SevenScenes => "seven_scenes",
            SourceFormat::Cambridge => "cambridge",
            SourceFormat::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "seven_scenes" => Ok(SourceFormat::SevenScenes),
            "cambridge" => Ok(SourceFormat::Cambridge),
            "synthetic" => Ok(SourceFormat::Synthetic),
            other => Err(Error::Config(format!("unknown source format '{other}'"))),
        }
    }

    /// Whether consecutive entries are consecutive video frames.
    pub fn has_temporal_order(&self) -> bool {
        !matches!(self, SourceFormat::Cambridge)
    }
}

/// Anything that occupies a slot in a recorded sequence.
pub trait Framed {
    fn sequence_id(&self) -> &str;
    fn frame_index(&self) -> u64;
    /// Augmented copies are kept out of temporal windows.
    fn is_synthetic(&self) -> bool;
}

/// One labelled frame referenced by a manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub sequence_id: String,
    pub frame_index: u64,
    pub path: PathBuf,
    pub pose: Pose,
    pub synthetic: bool,
}

impl Framed for ManifestEntry {
    fn sequence_id(&self) -> &str {
        &self.sequence_id
    }

    fn frame_index(&self) -> u64 {
        self.frame_index
    }

    fn is_synthetic(&self) -> bool {
        self.synthetic
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub split: Split,
    pub source_format: SourceFormat,
    /// Free-form provenance: split files, conventions, preprocessing, augmentation.
    pub provenance: BTreeMap<String, String>,
    pub entries: Vec<ManifestEntry>,
}

/// A frame dropped during ingestion, and why.
#[derive(Clone, Debug, PartialEq)]
pub struct SkippedFrame {
    pub location: String,
    pub reason: String,
}

impl fmt::Display for SkippedFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.reason)
    }
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, split: Split, source_format: SourceFormat) -> Self {
        Self {
            name: name.into(),
            split,
            source_format,
            provenance: BTreeMap::new(),
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorts entries by `(sequence_id, frame_index)`.
    pub fn sort(&mut self) {
        self.entries
            .sort_by(|a, b| (&a.sequence_id, a.frame_index).cmp(&(&b.sequence_id, b.frame_index)));
    }

    /// Checks that frame indices increase strictly within every sequence.
    pub fn validate(&self) -> Result<()> {
        let mut last: BTreeMap<&str, u64> = BTreeMap::new();
        for e in &self.entries {
            if let Some(&prev) = last.get(e.sequence_id.as_str()) {
                if e.frame_index <= prev {
                    return Err(Error::Data(format!(
                        "sequence {}: frame {} follows frame {prev}",
                        e.sequence_id, e.frame_index
                    )));
                }
            }
            last.insert(&e.sequence_id, e.frame_index);
        }
        Ok(())
    }

    /// Resolves an entry path against `base` (usually the manifest's directory).
    pub fn resolve(&self, base: &Path, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            base.join(&entry.path)
        }
    }

    /// Fails on the first entry whose image file is missing.
    pub fn check_paths(&self, base: &Path) -> Result<()> {
        for e in &self.entries {
            let p = self.resolve(base, e);
            if !p.is_file() {
                return Err(Error::Data(format!("missing image {}", p.display())));
            }
        }
        Ok(())
    }

    /// Temporal windows over this manifest.
    ///
    /// Cambridge Landmarks streams are subsampled, so windows are refused
    /// unless `force` is set.
    pub fn windows(&self, len: usize, stride: usize, force: bool) -> Result<Vec<SequenceWindow>> {
        if !self.source_format.has_temporal_order() && !force {
            return Err(Error::Config(format!(
                "{} frames carry no precise temporal order; pass force to window them anyway",
                self.source_format.name()
            )));
        }
        sequence_windows(&self.entries, len, stride)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{MANIFEST_MAGIC} {MANIFEST_VERSION}")?;
        writeln!(w, "# name = {}", self.name)?;
        writeln!(w, "# split = {}", self.split.name())?;
        writeln!(w, "# source_format = {}", self.source_format.name())?;
        for (k, v) in &self.provenance {
            writeln!(w, "# {k} = {v}")?;
        }
        for e in &self.entries {
            let [qw, qx, qy, qz] = e.pose.orientation.to_array();
            let [x, y, z] = e.pose.position;
            let path = e.path.to_string_lossy();
            if path.contains('\t') || path.contains('\n') || e.sequence_id.contains('\t') {
                return Err(Error::Data(format!("tab or newline in entry {path}")));
            }
            writeln!(
                w,
                "{}\t{}\t{}\t{x:.16e}\t{y:.16e}\t{z:.16e}\t{qw:.16e}\t{qx:.16e}\t{qy:.16e}\t{qz:.16e}\t{}",
                e.sequence_id,
                e.frame_index,
                path,
                u8::from(e.synthetic)
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(crate::error::open(path)?);
        Self::read_from(reader, path)
    }

    /// Parses the manifest text; `origin` only labels error messages.
    pub fn read_from(reader: impl BufRead, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| parse_err(1, "empty manifest".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MANIFEST_MAGIC) {
            return Err(parse_err(1, format!("not a manifest header: '{header}'")));
        }
        let found = parts.next().unwrap_or("");
        if found != MANIFEST_VERSION {
            return Err(Error::Version {
                expected: MANIFEST_VERSION.into(),
                found: found.into(),
            });
        }

        let mut meta = BTreeMap::new();
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| parse_err(lineno, format!("metadata without '=': '{line}'")))?;
                meta.insert(k.trim().to_string(), v.trim().to_string());
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 11 {
                return Err(parse_err(lineno, format!("expected 11 fields, found {}", fields.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| parse_err(lineno, format!("bad number '{s}': {e}")))
            };
            let frame_index = fields[1]
                .parse::<u64>()
                .map_err(|e| parse_err(lineno, format!("bad frame index '{}': {e}", fields[1])))?;
            let position = [num(fields[3])?, num(fields[4])?, num(fields[5])?];
            let q = [num(fields[6])?, num(fields[7])?, num(fields[8])?, num(fields[9])?];
            let orientation =
                UnitQuaternion::normalize(q).map_err(|e| parse_err(lineno, e.to_string()))?;
            let synthetic = match fields[10] {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(lineno, format!("bad synthetic flag '{other}'"))),
            };
            entries.push(ManifestEntry {
                sequence_id: fields[0].to_string(),
                frame_index,
                path: PathBuf::from(fields[2]),
                pose: Pose::new(position, orientation).map_err(|e| parse_err(lineno, e.to_string()))?,
                synthetic,
            });
        }

        let take = |meta: &mut BTreeMap<String, String>, key: &str| {
            meta.remove(key)
                .ok_or_else(|| parse_err(1, format!("missing metadata '{key}'")))
        };
        let name = take(&mut meta, "name")?;
        let split = Split::parse(&take(&mut meta, "split")?)?;
        let source_format = SourceFormat::parse(&take(&mut meta, "source_format")?)?;
        Ok(Self {
            name,
            split,
            source_format,
            provenance: meta,
            entries,
        })
    }
}

/// Indices of `len` consecutive frames of one sequence; the last is the target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceWindow {
    pub indices: Vec<usize>,
}

impl SequenceWindow {
    pub fn target(&self) -> usize {
        *self.indices.last().expect("windows are never empty")
    }
}

/// Sliding windows of `len` frames advancing by `stride`, per sequence.
///
/// Sequences are taken in order of first appearance and frames ordered by
/// frame index. Synthetic (augmented) items never enter a window, and no
/// window spans two sequences.
pub fn sequence_windows<T: Framed>(items: &[T], len: usize, stride: usize) -> Result<Vec<SequenceWindow>> {
    if len == 0 {
        return Err(Error::Config("window length must be at least 1".into()));
    }
    if stride == 0 {
        return Err(Error::Config("window stride must be at least 1".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate().filter(|(_, it)| !it.is_synthetic()) {
        let seq = item.sequence_id();
        groups
            .entry(seq)
            .or_insert_with(|| {
                order.push(seq);
                Vec::new()
            })
            .push(i);
    }
    let mut windows = Vec::new();
    for seq in order {
        let mut frames = groups.remove(seq).unwrap_or_default();
        frames.sort_by_key(|&i| items[i].frame_index());
        if frames.len() < len {
            continue;
        }
        let mut start = 0;
        while start + len <= frames.len() {
            windows.push(SequenceWindow {
                indices: frames[start..start + len].to_vec(),
            });
            start += stride;
        }
    }
    Ok(windows)
}

pub(crate) fn warn_skipped(skipped: &[SkippedFrame], what: &str) {
    for s in skipped {
        log::warn!("{what}: skipped {s}");
    }
    if !skipped.is_empty() {
        log::warn!("{what}: {} frame(s) skipped in total", skipped.len());
    }
}

#[cfg(test)]
mod tests;
