//! Procedural pinhole renderer over a textured ground plane.
//!
//! The world plane `z = 0` carries smooth multi-octave value noise. A camera
//! (camera-to-world pose, looking along its +z axis, x right, y down) sits
//! above the plane; each pixel ray is intersected with the plane and the
//! texture is read at the hit point. With the principal point at the image
//! center, rolling the camera about its optical axis rotates the picture
//! about the center, which is what makes the renderer a ground truth for the
//! augmentation label rewrite.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augmentation::{mix_seed, Sample};
use crate::dataset_io::{DatasetManifest, ManifestEntry, SourceFormat, Split};
use crate::error::{Error, Result};
use crate::geometry::{angular_distance_deg, Pose, UnitQuaternion};
use crate::imaging::{write_png, Image};
use crate::keyvalue::{self, Pairs};

/// Texture octaves as (wavelength in meters, amplitude).
const OCTAVES: [(f64, f64); 4] = [(3.0, 0.17), (1.1, 0.14), (0.5, 0.10), (0.22, 0.06)];

/// Radial band (in half-widths from the center) over which the border knob
/// ramps texture contrast up.
const BORDER_RAMP: (f64, f64) = (0.55, 0.85);

const GRAY: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub pattern_seed: u64,
    /// Side of the square textured region centered on the world origin;
    /// outside it the plane is flat gray.
    pub plane_extent: f64,
    pub focal: f64,
    /// `(cx, cy)` in pixels; `None` puts it at the image center.
    pub principal_point: Option<[f64; 2]>,
    pub height: usize,
    pub width: usize,
    /// 0 keeps uniform contrast; 1 leaves the image center flat and puts all
    /// texture contrast near the periphery.
    pub border_knob: f64,
    /// Standard deviation of additive uniform sensor noise.
    pub sensor_noise: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            pattern_seed: 1,
            plane_extent: 60.0,
            focal: 110.0,
            principal_point: None,
            height: 72,
            width: 128,
            border_knob: 0.0,
            sensor_noise: 0.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) {
            return Err(Error::Config(format!("focal length must be positive, got {}", self.focal)));
        }
        if self.height < 64 || self.width < 64 {
            return Err(Error::Config(format!(
                "image must be at least 64×64, got {}×{}",
                self.height, self.width
            )));
        }
        if !(0.0..=1.0).contains(&self.border_knob) {
            return Err(Error::Config(format!("border_knob {} outside [0, 1]", self.border_knob)));
        }
        if !(self.plane_extent > 0.0) || !(self.sensor_noise >= 0.0) {
            return Err(Error::Config("plane_extent must be positive and sensor_noise non-negative".into()));
        }
        Ok(())
    }

    pub fn principal(&self) -> [f64; 2] {
        self.principal_point
            .unwrap_or([(self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0])
    }

    pub const KEYS: [&'static str; 8] = [
        "pattern_seed",
        "plane_extent",
        "focal",
        "principal_point",
        "height",
        "width",
        "border_knob",
        "sensor_noise",
    ];

    /// Every field as `key = value` text; `principal_point` is `auto` or `cx cy`.
    pub fn to_pairs(&self) -> Pairs {
        let pp = match self.principal_point {
            Some([cx, cy]) => format!("{cx} {cy}"),
            None => "auto".into(),
        };
        let values = [
            self.pattern_seed.to_string(),
            self.plane_extent.to_string(),
            self.focal.to_string(),
            pp,
            self.height.to_string(),
            self.width.to_string(),
            self.border_knob.to_string(),
            self.sensor_noise.to_string(),
        ];
        Self::KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    /// Overrides fields of `base` from unprefixed keys; unknown keys are rejected.
    pub fn from_pairs(base: &SceneConfig, map: &BTreeMap<String, String>) -> Result<Self> {
        keyvalue::reject_unknown(map, &Self::KEYS, &[])?;
        let mut c = base.clone();
        keyvalue::set(map, "pattern_seed", &mut c.pattern_seed)?;
        keyvalue::set(map, "plane_extent", &mut c.plane_extent)?;
        keyvalue::set(map, "focal", &mut c.focal)?;
        if map.get("principal_point").map(String::as_str) == Some("auto") {
            c.principal_point = None;
        } else if let Some(pp) = keyvalue::get_array::<2>(map, "principal_point")? {
            c.principal_point = Some(pp);
        }
        keyvalue::set(map, "height", &mut c.height)?;
        keyvalue::set(map, "width", &mut c.width)?;
        keyvalue::set(map, "border_knob", &mut c.border_knob)?;
        keyvalue::set(map, "sensor_noise", &mut c.sensor_noise)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryConfig {
    /// Training frames.
    pub length: usize,
    pub test_length: usize,
    /// Meters travelled per training frame.
    pub step: f64,
    /// Heading change per training frame, degrees.
    pub drift_deg: f64,
    /// Share of the test heading range covered by the training range.
    pub overlap: f64,
    /// Camera height above the plane, meters.
    pub altitude: f64,
    /// Tilt of the optical axis away from straight down, degrees.
    pub tilt_deg: f64,
    /// Peak lateral deviation of the path, meters.
    pub sway: f64,
    /// World position of the first frame, before the camera altitude is added.
    pub origin: [f64; 2],
    pub initial_heading_deg: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            length: 200,
            test_length: 100,
            step: 0.02,
            drift_deg: 0.2,
            overlap: 1.0,
            altitude: 2.0,
            tilt_deg: 10.0,
            sway: 0.5,
            origin: [4.0, -3.0],
            initial_heading_deg: 0.0,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::Config("trajectory length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::Config(format!("overlap {} outside [0, 1]", self.overlap)));
        }
        if !(self.altitude > 0.0) || !(self.step >= 0.0) {
            return Err(Error::Config("altitude must be positive and step non-negative".into()));
        }
        if !(self.tilt_deg.abs() < 60.0) {
            return Err(Error::Config(format!("tilt {} too steep", self.tilt_deg)));
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 10] = [
        "length",
        "test_length",
        "step",
        "drift_deg",
        "overlap",
        "altitude",
        "tilt_deg",
        "sway",
        "origin",
        "initial_heading_deg",
    ];

    pub fn to_pairs(&self) -> Pairs {
        let values = [
            self.length.to_string(),
            self.test_length.to_string(),
            self.step.to_string(),
            self.drift_deg.to_string(),
            self.overlap.to_string(),
            self.altitude.to_string(),
            self.tilt_deg.to_string(),
            self.sway.to_string(),
            format!("{} {}", self.origin[0], self.origin[1]),
            self.initial_heading_deg.to_string(),
        ];
        Self::KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    pub fn from_pairs(base: &TrajectoryConfig, map: &BTreeMap<String, String>) -> Result<Self> {
        keyvalue::reject_unknown(map, &Self::KEYS, &[])?;
        let mut c = base.clone();
        keyvalue::set(map, "length", &mut c.length)?;
        keyvalue::set(map, "test_length", &mut c.test_length)?;
        keyvalue::set(map, "step", &mut c.step)?;
        keyvalue::set(map, "drift_deg", &mut c.drift_deg)?;
        keyvalue::set(map, "overlap", &mut c.overlap)?;
        keyvalue::set(map, "altitude", &mut c.altitude)?;
        keyvalue::set(map, "tilt_deg", &mut c.tilt_deg)?;
        keyvalue::set(map, "sway", &mut c.sway)?;
        if let Some(o) = keyvalue::get_array::<2>(map, "origin")? {
            c.origin = o;
        }
        keyvalue::set(map, "initial_heading_deg", &mut c.initial_heading_deg)?;
        c.validate()?;
        Ok(c)
    }

    /// Total heading sweep of the training trajectory.
    pub fn heading_span(&self) -> f64 {
        self.drift_deg * self.length.saturating_sub(1) as f64
    }
}

fn smoothstep(lo: f64, hi: f64, x: f64) -> f64 {
    let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn quintic(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = mix_seed(seed ^ mix_seed(ix as u64 ^ mix_seed(iy as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, u: f64, v: f64) -> f64 {
    let (fu, fv) = (u.floor(), v.floor());
    let (ix, iy) = (fu as i64, fv as i64);
    let (tu, tv) = (quintic(u - fu), quintic(v - fv));
    let a = lattice(seed, ix, iy);
    let b = lattice(seed, ix + 1, iy);
    let c = lattice(seed, ix, iy + 1);
    let d = lattice(seed, ix + 1, iy + 1);
    let top = a + (b - a) * tu;
    let bottom = c + (d - c) * tu;
    top + (bottom - top) * tv
}

/// Texture deviation from gray at plane point `(u, v)` for all channels.
pub fn texture(scene: &SceneConfig, u: f64, v: f64) -> [f64; 3] {
    let half = scene.plane_extent / 2.0;
    if u.abs() > half || v.abs() > half {
        return [0.0; 3];
    }
    let mut out = [0.0; 3];
    for (o, &(wavelength, amp)) in OCTAVES.iter().enumerate() {
        for (ch, slot) in out.iter_mut().enumerate() {
            let seed = mix_seed(scene.pattern_seed ^ ((o * 3 + ch) as u64) << 32);
            *slot += amp * 2.0 * (value_noise(seed, u / wavelength, v / wavelength) - 0.5);
        }
    }
    out
}

/// Where a camera-frame ray meets the plane, if it points downward.
fn plane_hit(pose: &Pose, r: &[[f64; 3]; 3], d_cam: [f64; 3]) -> Option<(f64, f64)> {
    let d = [
        r[0][0] * d_cam[0] + r[0][1] * d_cam[1] + r[0][2] * d_cam[2],
        r[1][0] * d_cam[0] + r[1][1] * d_cam[1] + r[1][2] * d_cam[2],
        r[2][0] * d_cam[0] + r[2][1] * d_cam[1] + r[2][2] * d_cam[2],
    ];
    let p = pose.position;
    if !(d[2] < 0.0) {
        return None;
    }
    let t = -p[2] / d[2];
    Some((p[0] + t * d[0], p[1] + t * d[1]))
}

/// Noise-free render of the plane from `pose`.
pub fn render(pose: &Pose, scene: &SceneConfig) -> Result<Image> {
    scene.validate()?;
    if !(pose.position[2] > 0.0) {
        return Err(Error::Data(format!(
            "camera at height {} is not above the plane",
            pose.position[2]
        )));
    }
    let r = pose.orientation.to_matrix();
    let [cx, cy] = scene.principal();
    let half_width = (scene.width as f64 - 1.0) / 2.0;
    let k = scene.border_knob;
    let mut data = Vec::with_capacity(scene.height * scene.width * 3);
    for row in 0..scene.height {
        for col in 0..scene.width {
            let (dx, dy) = (col as f64 - cx, row as f64 - cy);
            let (u, v) = plane_hit(pose, &r, [dx / scene.focal, dy / scene.focal, 1.0]).ok_or_else(|| {
                Error::Data(format!("pixel ({row}, {col}) looks above the horizon"))
            })?;
            let radius = dx.hypot(dy) / half_width;
            let gain = (1.0 - k) + k * smoothstep(BORDER_RAMP.0, BORDER_RAMP.1, radius);
            let tex = texture(scene, u, v);
            data.extend(tex.iter().map(|t| (GRAY + gain * t).clamp(0.0, 1.0)));
        }
    }
    Image::new(scene.height, scene.width, data)
}

/// [`render`] plus seeded sensor noise when the scene asks for it.
pub fn render_with_noise(pose: &Pose, scene: &SceneConfig, noise_seed: u64) -> Result<Image> {
    let img = render(pose, scene)?;
    if scene.sensor_noise == 0.0 {
        return Ok(img);
    }
    let half_width = scene.sensor_noise * 3f64.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let data = img
        .data()
        .iter()
        .map(|v| (v + rng.gen_range(-half_width..=half_width)).clamp(0.0, 1.0))
        .collect();
    Image::new(img.height(), img.width(), data)
}

/// Camera heading: angle of the camera x axis in the world xy-plane, degrees.
pub fn heading_deg(q: &UnitQuaternion) -> f64 {
    let m = q.to_matrix();
    m[1][0].atan2(m[0][0]).to_degrees()
}

/// Pose at path parameter `tau ∈ [0, 1]` with heading `heading` degrees.
fn pose_at(traj: &TrajectoryConfig, phase: f64, tau: f64, heading: f64) -> Result<Pose> {
    let length = traj.step * traj.length.saturating_sub(1) as f64;
    let x = traj.origin[0] + length * tau;
    let y = traj.origin[1] + traj.sway * ((2.0 * PI * tau + phase).sin() - phase.sin());
    let yaw = UnitQuaternion::from_axis_angle([0.0, 0.0, 1.0], heading)?;
    let down = UnitQuaternion::from_axis_angle([1.0, 0.0, 0.0], 180.0 - traj.tilt_deg)?;
    Pose::new([x, y, traj.altitude], yaw.mul(&down))
}

fn split_seed(seed: u64, split: Split) -> u64 {
    mix_seed(seed ^ if split == Split::Train { 0x7472 } else { 0x7465 })
}

/// Seed of the sensor noise drawn for one frame.
pub fn frame_noise_seed(seed: u64, split: Split, frame_index: u64) -> u64 {
    mix_seed(split_seed(seed, split) ^ frame_index)
}

/// Smallest mean absolute difference accepted between renders of poses a
/// step apart.
pub const INJECTIVITY_FLOOR: f64 = 1e-3;

/// Builds train and test manifests for one scene.
///
/// Training frame `i` of `n` sits at path parameter `i/(n−1)` with heading
/// `h0 + D·i/(n−1)`, `D` the heading span. Test frame `j` of `m` sits at
/// `(j + ½)/m` on the same path with heading `h0 + (1 − overlap)·D +
/// D·(j + ½)/m`, so `overlap = 1` nests the test headings inside the training
/// range and `overlap = 0` moves them entirely past it. The seed sets the
/// phase of the lateral sway and the sensor noise.
///
/// Image paths are `train/frame-NNNNNN.png` and `test/frame-NNNNNN.png`
/// relative to the dataset directory; see [`write_dataset`].
pub fn generate_dataset(
    scene: &SceneConfig,
    traj: &TrajectoryConfig,
    rng_seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    scene.validate()?;
    traj.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let span = traj.heading_span();
    let h0 = traj.initial_heading_deg;

    let build = |split: Split, count: usize| -> Result<DatasetManifest> {
        let mut m = DatasetManifest::new(format!("synthetic-{}", scene.pattern_seed), split, SourceFormat::Synthetic);
        for key_value in provenance(scene, traj, rng_seed) {
            m.provenance.insert(key_value.0, key_value.1);
        }
        let dir = split.name();
        let sequence = if split == Split::Train { "seq-train" } else { "seq-test" };
        for i in 0..count {
            let (tau, heading) = match split {
                Split::Train => {
                    let tau = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
                    (tau, h0 + span * tau)
                }
                Split::Test => {
                    let tau = (i as f64 + 0.5) / count as f64;
                    (tau, h0 + (1.0 - traj.overlap) * span + span * tau)
                }
            };
            m.entries.push(ManifestEntry {
                sequence_id: sequence.into(),
                frame_index: i as u64,
                path: PathBuf::from(format!("{dir}/frame-{i:06}.png")),
                pose: pose_at(traj, phase, tau, heading)?,
                synthetic: false,
            });
        }
        Ok(m)
    };
    let train = build(Split::Train, traj.length)?;
    let test = build(Split::Test, traj.test_length)?;
    check_injectivity(scene, traj, &train)?;
    Ok((train, test))
}

/// Renders a handful of neighboring training frames and fails if any pair
/// is nearly indistinguishable.
fn check_injectivity(scene: &SceneConfig, traj: &TrajectoryConfig, train: &DatasetManifest) -> Result<()> {
    if traj.step == 0.0 && traj.drift_deg == 0.0 {
        return Ok(());
    }
    let n = train.len();
    let probes = 4.min(n.saturating_sub(1));
    for p in 0..probes {
        let i = p * (n - 1) / probes.max(1);
        let a = render(&train.entries[i].pose, scene)?;
        let b = render(&train.entries[i + 1].pose, scene)?;
        let diff = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data().len() as f64;
        if diff <= INJECTIVITY_FLOOR {
            return Err(Error::Data(format!(
                "frames {i} and {} render almost identically (mean difference {diff:e})",
                i + 1
            )));
        }
    }
    Ok(())
}

fn provenance(scene: &SceneConfig, traj: &TrajectoryConfig, seed: u64) -> Pairs {
    let mut out: Pairs = scene.to_pairs().into_iter().map(|(k, v)| (format!("scene.{k}"), v)).collect();
    out.extend(traj.to_pairs().into_iter().map(|(k, v)| (format!("trajectory.{k}"), v)));
    out.push(("seed".into(), seed.to_string()));
    out
}

/// Renders every manifest frame into memory.
pub fn render_samples(manifest: &DatasetManifest, scene: &SceneConfig, rng_seed: u64) -> Result<Vec<Sample>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            Ok(Sample {
                image: render_with_noise(&e.pose, scene, frame_noise_seed(rng_seed, manifest.split, e.frame_index))?,
                label: e.pose,
                sequence_id: e.sequence_id.clone(),
                frame_index: e.frame_index,
                synthetic: false,
            })
        })
        .collect()
}

/// Generates a dataset and writes it under `dir`: PNG frames plus
/// `train.manifest` and `test.manifest`. Returns the two manifest paths.
pub fn write_dataset(
    dir: &Path,
    scene: &SceneConfig,
    traj: &TrajectoryConfig,
    rng_seed: u64,
) -> Result<(PathBuf, PathBuf)> {
    let (train, test) = generate_dataset(scene, traj, rng_seed)?;
    let mut paths = Vec::new();
    for m in [&train, &test] {
        fs::create_dir_all(dir.join(m.split.name()))?;
        for s in render_samples(m, scene, rng_seed)? {
            write_png(&s.image, &dir.join(format!("{}/frame-{:06}.png", m.split.name(), s.frame_index)))?;
        }
        let path = dir.join(format!("{}.manifest", m.split.name()));
        m.save(&path)?;
        paths.push(path);
    }
    let test_path = paths.pop().expect("two manifests");
    Ok((paths.pop().expect("two manifests"), test_path))
}

/// Diagonal of the bounding box of a manifest's positions.
pub fn trajectory_extent(manifest: &DatasetManifest) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for e in &manifest.entries {
        for k in 0..3 {
            lo[k] = lo[k].min(e.pose.position[k]);
            hi[k] = hi[k].max(e.pose.position[k]);
        }
    }
    if manifest.is_empty() {
        return 0.0;
    }
    (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
}

/// Largest angular distance from any test orientation to its nearest
/// training orientation.
pub fn orientation_gap_deg(train: &DatasetManifest, test: &DatasetManifest) -> f64 {
    test.entries
        .iter()
        .map(|t| {
            train
                .entries
                .iter()
                .map(|r| angular_distance_deg(&r.pose.orientation, &t.pose.orientation))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}
