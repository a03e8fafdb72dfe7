use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One backbone stage: convolution ("same" padding), ReLU, then a
/// non-overlapping max-pool when `pool > 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvStage {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pool: usize,
}

impl ConvStage {
    pub const fn new(out_channels: usize, kernel: usize, stride: usize, pool: usize) -> Self {
        Self {
            out_channels,
            kernel,
            stride,
            pool,
        }
    }
}

/// Output channels of the four inception branches and their reductions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InceptionConfig {
    pub b1: usize,
    pub b3_reduce: usize,
    pub b3: usize,
    pub b5_reduce: usize,
    pub b5: usize,
    pub pool_proj: usize,
}

impl InceptionConfig {
    /// Every branch and reduction `width` channels wide.
    pub const fn uniform(width: usize) -> Self {
        Self {
            b1: width,
            b3_reduce: width,
            b3: width,
            b5_reduce: width,
            b5: width,
            pool_proj: width,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.b1 + self.b3 + self.b5 + self.pool_proj
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackboneConfig {
    pub input_channels: usize,
    /// Side of the square network input.
    pub input_size: usize,
    /// Average-pooling factor applied to the input before the first stage.
    pub input_pool: usize,
    pub stages: Vec<ConvStage>,
    pub inception: Option<InceptionConfig>,
}

impl Default for BackboneConfig {
    /// Four 3×3 stages of 16, 32, 64 and 64 channels, each followed by a
    /// 2×2 max-pool, on the full 224×224 input.
    fn default() -> Self {
        Self {
            input_channels: 3,
            input_size: 224,
            input_pool: 1,
            stages: vec![
                ConvStage::new(16, 3, 1, 2),
                ConvStage::new(32, 3, 1, 2),
                ConvStage::new(64, 3, 1, 2),
                ConvStage::new(64, 3, 1, 2),
            ],
            inception: None,
        }
    }
}

impl BackboneConfig {
    /// A laptop-sized variant: the input is average-pooled 4× to 56×56 and
    /// three narrow stages bring it to 16×7×7.
    pub fn desk() -> Self {
        Self {
            input_pool: 4,
            stages: vec![
                ConvStage::new(8, 3, 1, 2),
                ConvStage::new(16, 3, 1, 2),
                ConvStage::new(16, 3, 1, 2),
            ],
            ..Self::default()
        }
    }

    pub fn pooled_size(&self) -> usize {
        self.input_size / self.input_pool.max(1)
    }

    /// `(channels, side)` after every stage and the inception block.
    fn output_geometry(&self) -> Result<(usize, usize)> {
        if self.input_channels == 0 || self.input_size == 0 || self.input_pool == 0 {
            return Err(Error::Config("backbone sizes must be positive".into()));
        }
        if !self.input_size.is_multiple_of(self.input_pool) {
            return Err(Error::Config(format!(
                "input_pool {} does not divide input_size {}",
                self.input_pool, self.input_size
            )));
        }
        let mut side = self.pooled_size();
        let mut channels = self.input_channels;
        for (i, s) in self.stages.iter().enumerate() {
            if s.out_channels == 0 || s.kernel == 0 || s.kernel % 2 == 0 || s.stride == 0 || s.pool == 0 {
                return Err(Error::Config(format!("stage {i}: {s:?} needs positive sizes and an odd kernel")));
            }
            let pad = s.kernel / 2;
            side = (side + 2 * pad - s.kernel) / s.stride + 1;
            if side < s.pool {
                return Err(Error::Config(format!("stage {i}: {side}×{side} map is smaller than pool {}", s.pool)));
            }
            side = (side - s.pool) / s.pool + 1;
            channels = s.out_channels;
        }
        if let Some(inc) = &self.inception {
            if side < 5 {
                return Err(Error::Config(format!("inception block needs at least 5×5, got {side}×{side}")));
            }
            if [inc.b1, inc.b3_reduce, inc.b3, inc.b5_reduce, inc.b5, inc.pool_proj].contains(&0) {
                return Err(Error::Config("inception branch widths must be positive".into()));
            }
            channels = inc.out_channels();
        }
        Ok((channels, side))
    }

    /// Length of the flattened feature vector.
    pub fn feature_dim(&self) -> Result<usize> {
        let (c, side) = self.output_geometry()?;
        Ok(c * side * side)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeadKind {
    Fc,
    Lstm,
}

impl HeadKind {
    pub fn name(&self) -> &'static str {
        match self {
            HeadKind::Fc => "fc",
            HeadKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fc" => Ok(HeadKind::Fc),
            "lstm" => Ok(HeadKind::Lstm),
            other => Err(Error::Config(format!("unknown head '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub fc_hidden: usize,
    pub lstm_units: usize,
    /// Frames per window; always 1 for the FC head.
    pub sequence_length: usize,
    /// Stacked LSTM layers per cell.
    pub lstm_layers: usize,
    /// One LSTM stack feeding both output layers instead of twin cells.
    pub shared_lstm: bool,
}

impl HeadConfig {
    pub fn fc() -> Self {
        Self {
            kind: HeadKind::Fc,
            fc_hidden: 2048,
            lstm_units: 64,
            sequence_length: 1,
            lstm_layers: 1,
            shared_lstm: false,
        }
    }

    pub fn lstm(sequence_length: usize) -> Self {
        Self {
            kind: HeadKind::Lstm,
            sequence_length,
            ..Self::fc()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sequence_length == 0 {
            return Err(Error::Config("sequence_length must be positive".into()));
        }
        match self.kind {
            HeadKind::Fc if self.sequence_length != 1 => Err(Error::Config(format!(
                "the fc head takes single frames, got sequence_length {}",
                self.sequence_length
            ))),
            HeadKind::Fc if self.fc_hidden == 0 => Err(Error::Config("fc_hidden must be positive".into())),
            HeadKind::Lstm if self.lstm_units == 0 || self.lstm_layers == 0 => {
                Err(Error::Config("lstm_units and lstm_layers must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self::fc()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
}

fn parse_num(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected true or false, got '{other}'"))),
    }
}

fn parse_fields(key: &str, spec: &str, n: usize) -> Result<Vec<usize>> {
    let fields: Vec<usize> = spec.split(':').map(|f| parse_num(key, f)).collect::<Result<_>>()?;
    if fields.len() != n {
        return Err(Error::Config(format!("{key}: expected {n} ':'-separated numbers in '{spec}'")));
    }
    Ok(fields)
}

/// Keys understood by [`ModelConfig::from_pairs`].
pub const MODEL_KEYS: [&str; 10] = [
    "backbone.input_size",
    "backbone.input_pool",
    "backbone.stages",
    "backbone.inception",
    "head.kind",
    "head.fc_hidden",
    "head.lstm_units",
    "head.sequence_length",
    "head.lstm_layers",
    "head.shared_lstm",
];

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        self.backbone.feature_dim().map(|_| ())
    }

    /// `key = value` echo, the inverse of [`from_pairs`](Self::from_pairs).
    ///
    /// Stages are written `channels:kernel:stride:pool` joined by commas and
    /// the inception block as `b1:b3_reduce:b3:b5_reduce:b5:pool_proj` or `none`.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let bb = &self.backbone;
        let stages = bb
            .stages
            .iter()
            .map(|s| format!("{}:{}:{}:{}", s.out_channels, s.kernel, s.stride, s.pool))
            .collect::<Vec<_>>()
            .join(",");
        let inception = match &bb.inception {
            None => "none".to_string(),
            Some(i) => format!("{}:{}:{}:{}:{}:{}", i.b1, i.b3_reduce, i.b3, i.b5_reduce, i.b5, i.pool_proj),
        };
        let h = &self.head;
        [
            ("backbone.input_size", bb.input_size.to_string()),
            ("backbone.input_pool", bb.input_pool.to_string()),
            ("backbone.stages", stages),
            ("backbone.inception", inception),
            ("head.kind", h.kind.name().to_string()),
            ("head.fc_hidden", h.fc_hidden.to_string()),
            ("head.lstm_units", h.lstm_units.to_string()),
            ("head.sequence_length", h.sequence_length.to_string()),
            ("head.lstm_layers", h.lstm_layers.to_string()),
            ("head.shared_lstm", h.shared_lstm.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Reads the model keys out of a config map, starting from `base` for
    /// anything absent. Other keys are ignored.
    pub fn from_pairs(base: &ModelConfig, pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = base.clone();
        for (key, value) in pairs {
            let v = value.trim();
            match key.as_str() {
                "backbone.input_size" => c.backbone.input_size = parse_num(key, v)?,
                "backbone.input_pool" => c.backbone.input_pool = parse_num(key, v)?,
                "backbone.stages" => {
                    c.backbone.stages = if v.is_empty() {
                        Vec::new()
                    } else {
                        v.split(',')
                            .map(|s| {
                                let f = parse_fields(key, s.trim(), 4)?;
                                Ok(ConvStage::new(f[0], f[1], f[2], f[3]))
                            })
                            .collect::<Result<_>>()?
                    }
                }
                "backbone.inception" => {
                    c.backbone.inception = if v == "none" {
                        None
                    } else {
                        let f = parse_fields(key, v, 6)?;
                        Some(InceptionConfig {
                            b1: f[0],
                            b3_reduce: f[1],
                            b3: f[2],
                            b5_reduce: f[3],
                            b5: f[4],
                            pool_proj: f[5],
                        })
                    }
                }
                "head.kind" => c.head.kind = HeadKind::parse(v)?,
                "head.fc_hidden" => c.head.fc_hidden = parse_num(key, v)?,
                "head.lstm_units" => c.head.lstm_units = parse_num(key, v)?,
                "head.sequence_length" => c.head.sequence_length = parse_num(key, v)?,
                "head.lstm_layers" => c.head.lstm_layers = parse_num(key, v)?,
                "head.shared_lstm" => c.head.shared_lstm = parse_bool(key, v)?,
                _ => {}
            }
        }
        c.validate()?;
        Ok(c)
    }
}
