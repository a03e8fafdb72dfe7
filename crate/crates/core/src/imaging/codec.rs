//! PNG and raw fixture codecs.
//!
//! The raw format is an ASCII header line `"<height> <width>\n"` followed by
//! `height·width·3` bytes of row-major RGB.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Image, CHANNELS};
use crate::error::{Error, Result};

fn to_bytes(img: &Image) -> Vec<u8> {
    img.data().iter().map(|v| (v * 255.0).round() as u8).collect()
}

fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Image> {
    Image::new(height, width, bytes.iter().map(|&b| b as f64 / 255.0).collect())
}

/// Decodes an 8-bit PNG; values are divided by 255.
pub fn read_png(path: &Path) -> Result<Image> {
    let rgb = image::open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    from_bytes(h as usize, w as usize, rgb.as_raw())
}

pub fn write_png(img: &Image, path: &Path) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, to_bytes(img))
        .expect("buffer sized from image");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<Image> {
    let mut reader = BufReader::new(crate::error::open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let parse_err = |reason: String| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        reason,
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| parse_err(format!("bad dimension '{t}': {e}"))))
        .collect::<Result<_>>()?;
    let [height, width] = dims[..] else {
        return Err(parse_err(format!("expected 'height width', got '{}'", header.trim())));
    };
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != height * width * CHANNELS {
        return Err(Error::Data(format!(
            "{}: expected {} pixel bytes, found {}",
            path.display(),
            height * width * CHANNELS,
            bytes.len()
        )));
    }
    from_bytes(height, width, &bytes)
}

pub fn write_raw(img: &Image, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{} {}", img.height(), img.width())?;
    f.write_all(&to_bytes(img))?;
    Ok(())
}

/// Picks the codec from the file extension (`.raw` or anything `image` decodes).
pub fn read_image(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("raw") => read_raw(path),
        _ => read_png(path),
    }
}
