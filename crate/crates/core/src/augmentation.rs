//! Epoch-doubling in-plane rotation augmentation.
//!
//! Every epoch each training frame is joined by one copy rotated by a fresh
//! angle drawn uniformly from `[lo, hi]`. The image is rotated about its
//! center and the label orientation is rolled about the optical axis by the
//! same angle; the position is copied bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset_io::Framed;
use crate::error::{Error, Result};
use crate::geometry::{apply_roll_augmentation, Pose};
use crate::imaging::{rotate_image, Image};

/// Largest rotation [`augment_sample`] accepts.
pub const MAX_AUGMENT_DEG: f64 = 20.0;

/// Default angle range in degrees.
pub const DEFAULT_RANGE: (f64, f64) = (-20.0, 20.0);

/// A labelled frame held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub label: Pose,
    pub sequence_id: String,
    pub frame_index: u64,
    /// Set on augmented copies, which never enter temporal windows.
    pub synthetic: bool,
}

impl Framed for Sample {
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

/// Rotates the image by `theta_deg` and rewrites the label to match.
pub fn augment_sample(s: &Sample, theta_deg: f64) -> Result<Sample> {
    if !(theta_deg.abs() <= MAX_AUGMENT_DEG) {
        return Err(Error::invalid(
            "augment_sample",
            format!("|theta| = {theta_deg} exceeds {MAX_AUGMENT_DEG}°"),
        ));
    }
    Ok(Sample {
        image: rotate_image(&s.image, theta_deg)?,
        label: apply_roll_augmentation(&s.label, theta_deg),
        sequence_id: s.sequence_id.clone(),
        frame_index: s.frame_index,
        synthetic: true,
    })
}

/// SplitMix64 finalizer, used to derive independent per-item seeds.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the augmentation angle of `sample_index` in `epoch`.
pub fn sample_seed(base_seed: u64, epoch: u64, sample_index: u64) -> u64 {
    mix_seed(mix_seed(mix_seed(base_seed) ^ epoch) ^ sample_index)
}

/// The angle drawn for one sample in one epoch.
pub fn draw_theta(range: (f64, f64), base_seed: u64, epoch: u64, sample_index: u64) -> f64 {
    let (lo, hi) = range;
    if lo == hi {
        return lo;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(base_seed, epoch, sample_index));
    rng.gen_range(lo..=hi)
}

/// Doubles `dataset`: each original is followed by one rotated copy.
///
/// Angles are drawn independently per sample from `range` with seeds derived
/// from `(base_seed, epoch, sample index)`, so every epoch sees new angles
/// and reruns see the same ones.
pub fn augment_epoch(dataset: &[Sample], range: (f64, f64), base_seed: u64, epoch: u64) -> Result<Vec<Sample>> {
    let (lo, hi) = range;
    if !(lo <= hi) {
        return Err(Error::invalid("augment_epoch", format!("empty range [{lo}, {hi}]")));
    }
    let mut out = Vec::with_capacity(dataset.len() * 2);
    for (i, s) in dataset.iter().enumerate() {
        let theta = draw_theta(range, base_seed, epoch, i as u64);
        out.push(s.clone());
        out.push(augment_sample(s, theta)?);
    }
    Ok(out)
}
