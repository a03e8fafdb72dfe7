//! RGB images and the preprocessing pipelines that turn camera frames into
//! 224×224 network inputs.
//!
//! Pixel coordinates use half-pixel centers: output pixel `i` of a resize
//! samples the input at `(i + 0.5)·scale − 0.5`.

mod codec;

pub use codec::{read_image, read_png, read_raw, write_png, write_raw};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Side length of every network input.
pub const NETWORK_INPUT: usize = 224;

/// Short side after the aspect-preserving resize of the crop pipelines.
pub const SHORT_SIDE: usize = 256;

pub const CHANNELS: usize = 3;

/// Row-major `height × width × 3` image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image", format!("empty image {height}×{width}")));
        }
        if data.len() != height * width * CHANNELS {
            return Err(Error::invalid(
                "image",
                format!("{height}×{width}×3 needs {} values, got {}", height * width * CHANNELS, data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("image", format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && (0.0..=1.0).contains(&value));
        Self {
            height,
            width,
            data: vec![value; height * width * CHANNELS],
        }
    }

    /// Builds an image from `f(row, col) -> rgb`, clamping into `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        assert!(height > 0 && width > 0);
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for r in 0..height {
            for c in 0..width {
                data.extend(f(r, c).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * CHANNELS + channel]
    }

    pub fn channel_means(&self) -> [f64; 3] {
        let mut sum = [0.0; 3];
        for px in self.data.chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                sum[c] += px[c];
            }
        }
        let n = (self.height * self.width) as f64;
        sum.map(|s| s / n)
    }

    /// Copies the `h × w` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || top + h > self.height || left + w > self.width {
            return Err(Error::invalid(
                "crop",
                format!("window {h}×{w} at ({top}, {left}) exceeds {}×{}", self.height, self.width),
            ));
        }
        let mut data = Vec::with_capacity(h * w * CHANNELS);
        for r in top..top + h {
            let start = (r * self.width + left) * CHANNELS;
            data.extend_from_slice(&self.data[start..start + w * CHANNELS]);
        }
        Ok(Self { height: h, width: w, data })
    }

    /// Bilinear sample at fractional pixel coordinates inside the image.
    fn sample(&self, y: f64, x: f64, out: &mut [f64]) {
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let fy = y - y0 as f64;
        let fx = x - x0 as f64;
        for (c, o) in out.iter_mut().enumerate() {
            let top = self.get(y0, x0, c) * (1.0 - fx) + self.get(y0, x1, c) * fx;
            let bottom = self.get(y1, x0, c) * (1.0 - fx) + self.get(y1, x1, c) * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
    }

    /// Network input: `[3 × H × W]` tensor with the per-image mean removed.
    pub fn to_network_tensor(&self) -> Tensor {
        let mean = self.data.iter().sum::<f64>() / self.data.len() as f64;
        let plane = self.height * self.width;
        let mut chw = vec![0.0; self.data.len()];
        for (i, px) in self.data.chunks_exact(CHANNELS).enumerate() {
            for c in 0..CHANNELS {
                chw[c * plane + i] = px[c] - mean;
            }
        }
        Tensor::new(vec![CHANNELS, self.height, self.width], chw).expect("consistent image tensor")
    }
}

/// Source coordinate of output index `i` under half-pixel-center mapping,
/// clamped to the valid sample range.
fn source_coord(i: usize, in_len: usize, out_len: usize) -> f64 {
    let scale = in_len as f64 / out_len as f64;
    ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64)
}

/// Bilinear resize with half-pixel centers.
pub fn resize_bilinear(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("resize_bilinear", format!("target {out_h}×{out_w}")));
    }
    let ys: Vec<f64> = (0..out_h).map(|i| source_coord(i, img.height, out_h)).collect();
    let xs: Vec<f64> = (0..out_w).map(|i| source_coord(i, img.width, out_w)).collect();
    let mut data = vec![0.0; out_h * out_w * CHANNELS];
    for (r, &y) in ys.iter().enumerate() {
        for (c, &x) in xs.iter().enumerate() {
            let at = (r * out_w + c) * CHANNELS;
            img.sample(y, x, &mut data[at..at + CHANNELS]);
        }
    }
    // convex weights keep values in range up to rounding
    data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(Image {
        height: out_h,
        width: out_w,
        data,
    })
}

/// Sizes and offsets of the aspect-preserving resize plus centered crop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropPlan {
    pub resized_h: usize,
    pub resized_w: usize,
    pub top: usize,
    pub left: usize,
}

impl CropPlan {
    /// Short side to 256 (long side rounded to nearest, ties away from zero),
    /// then a centered 224×224 window.
    pub fn centered(height: usize, width: usize) -> Self {
        let (resized_h, resized_w) = short_side_resize(height, width);
        Self {
            resized_h,
            resized_w,
            top: (resized_h - NETWORK_INPUT) / 2,
            left: (resized_w - NETWORK_INPUT) / 2,
        }
    }

    /// Largest valid top and left offsets of a 224×224 window.
    pub fn max_offsets(&self) -> (usize, usize) {
        (self.resized_h - NETWORK_INPUT, self.resized_w - NETWORK_INPUT)
    }
}

fn short_side_resize(height: usize, width: usize) -> (usize, usize) {
    let short = height.min(width) as f64;
    let scale = SHORT_SIDE as f64 / short;
    let scaled = |len: usize| {
        if len as f64 == short {
            SHORT_SIDE
        } else {
            (len as f64 * scale).round() as usize
        }
    };
    (scaled(height), scaled(width))
}

/// Resize the short side to 256 and cut the centered 224×224 window.
pub fn centered_crop_pipeline(img: &Image) -> Result<Image> {
    let plan = CropPlan::centered(img.height, img.width);
    let resized = resize_bilinear(img, plan.resized_h, plan.resized_w)?;
    resized.crop(plan.top, plan.left, NETWORK_INPUT, NETWORK_INPUT)
}

/// Squash the whole field of view into 224×224, ignoring aspect ratio.
pub fn whole_fov_resize(img: &Image) -> Result<Image> {
    resize_bilinear(img, NETWORK_INPUT, NETWORK_INPUT)
}

/// Uniform top-left offsets for a 224×224 window, deterministic in the seed.
pub fn random_crop_offsets(plan: &CropPlan, rng_seed: u64) -> (usize, usize) {
    let (max_top, max_left) = plan.max_offsets();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (rng.gen_range(0..=max_top), rng.gen_range(0..=max_left))
}

/// Resize the short side to 256 and cut a random 224×224 window.
pub fn random_crop_pipeline(img: &Image, rng_seed: u64) -> Result<Image> {
    let plan = CropPlan::centered(img.height, img.width);
    let resized = resize_bilinear(img, plan.resized_h, plan.resized_w)?;
    let (top, left) = random_crop_offsets(&plan, rng_seed);
    resized.crop(top, left, NETWORK_INPUT, NETWORK_INPUT)
}

/// Rotates the content by `theta_deg` degrees about the image center.
///
/// Output pixel `p` samples the input at `c + R(θ)(p − c)`, where `R` is the
/// standard rotation matrix acting on `(col, row)` offsets; on screen (rows
/// growing downward) positive angles turn the content counterclockwise.
/// Samples that fall outside the input take the per-channel image mean.
pub fn rotate_image(img: &Image, theta_deg: f64) -> Result<Image> {
    if !(theta_deg.abs() <= 45.0) {
        return Err(Error::invalid("rotate_image", format!("|theta| = {theta_deg} exceeds 45°")));
    }
    if theta_deg == 0.0 {
        return Ok(img.clone());
    }
    let fill = img.channel_means();
    let (s, c) = theta_deg.to_radians().sin_cos();
    let cy = (img.height as f64 - 1.0) / 2.0;
    let cx = (img.width as f64 - 1.0) / 2.0;
    let max_y = (img.height - 1) as f64;
    let max_x = (img.width - 1) as f64;
    let mut data = vec![0.0; img.data.len()];
    for r in 0..img.height {
        let dy = r as f64 - cy;
        for col in 0..img.width {
            let dx = col as f64 - cx;
            let sx = cx + c * dx - s * dy;
            let sy = cy + s * dx + c * dy;
            let at = (r * img.width + col) * CHANNELS;
            let out = &mut data[at..at + CHANNELS];
            if (0.0..=max_x).contains(&sx) && (0.0..=max_y).contains(&sy) {
                img.sample(sy, sx, out);
            } else {
                out.copy_from_slice(&fill);
            }
        }
    }
    Ok(Image {
        height: img.height,
        width: img.width,
        data,
    })
}

/// Mean absolute difference over pixels within `radius_fraction` of the
/// inscribed circle, all channels. Both images must share a size.
pub fn interior_mean_abs_diff(a: &Image, b: &Image, radius_fraction: f64) -> Result<f64> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::shape(
            "interior_mean_abs_diff",
            &[a.height, a.width],
            &[b.height, b.width],
        ));
    }
    let cy = (a.height as f64 - 1.0) / 2.0;
    let cx = (a.width as f64 - 1.0) / 2.0;
    let radius = radius_fraction * cy.min(cx);
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in 0..a.height {
        for c in 0..a.width {
            if (r as f64 - cy).hypot(c as f64 - cx) <= radius {
                let at = (r * a.width + c) * CHANNELS;
                for k in at..at + CHANNELS {
                    sum += (a.data[k] - b.data[k]).abs();
                }
                n += CHANNELS;
            }
        }
    }
    if n == 0 {
        return Err(Error::invalid("interior_mean_abs_diff", "empty interior"));
    }
    Ok(sum / n as f64)
}

/// How a frame becomes a 224×224 network input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preprocessing {
    CenteredCrop,
    WholeFov,
    RandomCrop,
}

impl Preprocessing {
    pub fn name(&self) -> &'static str {
        match self {
            Preprocessing::CenteredCrop => "centered_crop",
            Preprocessing::WholeFov => "whole_fov",
            Preprocessing::RandomCrop => "random_crop",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "centered_crop" => Ok(Preprocessing::CenteredCrop),
            "whole_fov" => Ok(Preprocessing::WholeFov),
            "random_crop" => Ok(Preprocessing::RandomCrop),
            other => Err(Error::Config(format!("unknown preprocessing '{other}'"))),
        }
    }

    /// Runs the pipeline. `rng_seed` only matters for [`Preprocessing::RandomCrop`].
    pub fn apply(&self, img: &Image, rng_seed: u64) -> Result<Image> {
        match self {
            Preprocessing::CenteredCrop => centered_crop_pipeline(img),
            Preprocessing::WholeFov => whole_fov_resize(img),
            Preprocessing::RandomCrop => random_crop_pipeline(img, rng_seed),
        }
    }
}
