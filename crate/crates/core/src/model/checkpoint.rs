//! Textual checkpoint format.
//!
//! ```text
//! POSELAB-CHECKPOINT 1
//! # backbone.stages = 8:3:1:2,16:3:1:2
//! # ...                                   (config echo, one key per line)
//! param conv0.w 8x3x3x3 216
//! 3fb2f1a9fbe76c8b bfa3d70a3d70a3d7 ...  (IEEE-754 bits, 8 words per line)
//! param conv0.b 8 8
//! ...
//! end
//! ```
//!
//! Values are stored as raw bit patterns so a save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{layout, Model, ModelConfig, ModelParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "POSELAB-CHECKPOINT";
pub const CHECKPOINT_VERSION: &str = "1";

const WORDS_PER_LINE: usize = 8;

/// Writes `model` with its configuration plus `extra` echo lines.
pub fn write_checkpoint(w: &mut impl Write, model: &Model, extra: &[(String, String)]) -> Result<()> {
    writeln!(w, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
    let mut echo: BTreeMap<String, String> = extra.iter().cloned().collect();
    echo.extend(model.config.to_pairs());
    for (k, v) in &echo {
        writeln!(w, "# {k} = {v}")?;
    }
    for (name, t) in model.params.iter() {
        let shape = t.shape().iter().map(usize::to_string).collect::<Vec<_>>().join("x");
        let shape = if shape.is_empty() { "scalar".to_string() } else { shape };
        writeln!(w, "param {name} {shape} {}", t.len())?;
        for chunk in t.data().chunks(WORDS_PER_LINE) {
            let words: Vec<String> = chunk.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
            writeln!(w, "{}", words.join(" "))?;
        }
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn save_checkpoint(path: &Path, model: &Model, extra: &[(String, String)]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_checkpoint(&mut w, model, extra)?;
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint; returns the model and the full config echo.
pub fn read_checkpoint(reader: impl BufRead, origin: &Path) -> Result<(Model, BTreeMap<String, String>)> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let err = |line: usize, reason: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        reason,
    };

    let (_, header) = lines.next().ok_or_else(|| err(1, "empty checkpoint".into()))?;
    let header = header?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(CHECKPOINT_MAGIC) {
        return Err(err(1, format!("expected '{CHECKPOINT_MAGIC}' header")));
    }
    let found = parts.next().unwrap_or("").to_string();
    if found != CHECKPOINT_VERSION {
        return Err(Error::Version {
            expected: CHECKPOINT_VERSION.into(),
            found,
        });
    }

    let mut echo = BTreeMap::new();
    let mut params = ModelParams::new();
    let mut finished = false;
    while let Some((no, line)) = lines.next() {
        let line = line?;
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| err(no, "echo line without '='".into()))?;
            echo.insert(k.trim().to_string(), v.trim().to_string());
            continue;
        }
        if line.trim() == "end" {
            finished = true;
            break;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "param" {
            return Err(err(no, format!("expected 'param <name> <shape> <count>', got '{line}'")));
        }
        let shape: Vec<usize> = if fields[2] == "scalar" {
            Vec::new()
        } else {
            fields[2]
                .split('x')
                .map(|d| d.parse().map_err(|_| err(no, format!("bad shape '{}'", fields[2]))))
                .collect::<Result<_>>()?
        };
        let count: usize = fields[3].parse().map_err(|_| err(no, format!("bad count '{}'", fields[3])))?;
        let mut data = Vec::with_capacity(count);
        while data.len() < count {
            let (no, line) = lines.next().ok_or_else(|| err(no, format!("truncated parameter {}", fields[1])))?;
            for word in line?.split_whitespace() {
                let bits = u64::from_str_radix(word, 16).map_err(|_| err(no, format!("bad word '{word}'")))?;
                data.push(f64::from_bits(bits));
            }
        }
        if data.len() != count {
            return Err(err(no, format!("parameter {} has {} values, expected {count}", fields[1], data.len())));
        }
        let tensor = Tensor::new(shape, data).map_err(|e| err(no, e.to_string()))?;
        params.push(fields[1], tensor).map_err(|e| err(no, e.to_string()))?;
    }
    if !finished {
        return Err(err(0, "missing 'end' line".into()));
    }

    let config = ModelConfig::from_pairs(&ModelConfig::default(), &echo)?;
    for (name, shape) in layout(&config)? {
        match params.get(&name) {
            Some(t) if t.shape() == shape.as_slice() => {}
            Some(t) => {
                return Err(Error::Data(format!(
                    "parameter {name} has shape {:?}, config needs {shape:?}",
                    t.shape()
                )))
            }
            None => return Err(Error::Data(format!("checkpoint lacks parameter {name}"))),
        }
    }
    Ok((Model { config, params }, echo))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, BTreeMap<String, String>)> {
    read_checkpoint(BufReader::new(crate::error::open(path)?), path)
}
