//! The pose regression network: a small convolutional backbone with an
//! optional inception block, followed by either a fully connected head or
//! twin LSTM cells. Both heads end in a 3-unit position layer and a 4-unit
//! orientation layer.
//!
//! Parameters live in a [`ModelParams`] table keyed by name. A forward pass
//! binds the table to a [`Tape`] (one trainable leaf per tensor) and looks
//! layers up through the resulting [`Bound`].

mod checkpoint;
mod config;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{BackboneConfig, ConvStage, HeadConfig, HeadKind, InceptionConfig, ModelConfig, MODEL_KEYS};

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Named learnable tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid("ModelParams::push", format!("duplicate parameter '{name}'")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Number of scalar weights and biases.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data().iter().all(|v| v.is_finite()))
    }

    /// Registers every tensor as a trainable leaf of `tape`.
    pub fn bind<'a>(&'a self, tape: &mut Tape) -> Bound<'a> {
        let vars = self.tensors.iter().map(|t| tape.param(t.clone())).collect();
        Bound { params: self, vars }
    }

    /// Same as [`bind`](Self::bind) but as constants: nothing receives gradients.
    pub fn bind_frozen<'a>(&'a self, tape: &mut Tape) -> Bound<'a> {
        let vars = self.tensors.iter().map(|t| tape.constant(t.clone())).collect();
        Bound { params: self, vars }
    }

    /// Pairs the table with vars already on a tape, one per tensor in order.
    pub fn bind_vars(&self, vars: Vec<Var>) -> Result<Bound<'_>> {
        if vars.len() != self.tensors.len() {
            return Err(Error::invalid(
                "ModelParams::bind_vars",
                format!("{} vars for {} parameters", vars.len(), self.tensors.len()),
            ));
        }
        Ok(Bound { params: self, vars })
    }
}

/// A parameter table bound to a tape.
pub struct Bound<'a> {
    params: &'a ModelParams,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.params
            .position(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::invalid("Bound::var", format!("no parameter named '{name}'")))
    }

    /// Vars in table order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Shapes of every parameter a configuration needs, in table order.
pub fn layout(config: &ModelConfig) -> Result<Vec<(String, Vec<usize>)>> {
    config.validate()?;
    let mut out = Vec::new();
    let mut channels = config.backbone.input_channels;
    for (i, s) in config.backbone.stages.iter().enumerate() {
        out.push((format!("conv{i}.w"), vec![s.out_channels, channels, s.kernel, s.kernel]));
        out.push((format!("conv{i}.b"), vec![s.out_channels]));
        channels = s.out_channels;
    }
    if let Some(inc) = &config.backbone.inception {
        let conv = |name: &str, co: usize, ci: usize, k: usize| {
            [
                (format!("inception.{name}.w"), vec![co, ci, k, k]),
                (format!("inception.{name}.b"), vec![co]),
            ]
        };
        out.extend(conv("b1", inc.b1, channels, 1));
        out.extend(conv("b3_reduce", inc.b3_reduce, channels, 1));
        out.extend(conv("b3", inc.b3, inc.b3_reduce, 3));
        out.extend(conv("b5_reduce", inc.b5_reduce, channels, 1));
        out.extend(conv("b5", inc.b5, inc.b5_reduce, 5));
        out.extend(conv("pool_proj", inc.pool_proj, channels, 1));
    }
    let feature_dim = config.backbone.feature_dim()?;
    let head = &config.head;
    let top_dim = match head.kind {
        HeadKind::Fc => {
            out.push(("fc.w".into(), vec![head.fc_hidden, feature_dim]));
            out.push(("fc.b".into(), vec![head.fc_hidden]));
            head.fc_hidden
        }
        HeadKind::Lstm => {
            let u = head.lstm_units;
            let stacks: &[&str] = if head.shared_lstm { &["lstm"] } else { &["lstm_x", "lstm_q"] };
            for stack in stacks {
                for l in 0..head.lstm_layers {
                    let input = if l == 0 { feature_dim } else { u };
                    out.push((format!("{stack}.l{l}.w"), vec![4 * u, input + u]));
                    out.push((format!("{stack}.l{l}.b"), vec![4 * u]));
                }
            }
            u
        }
    };
    out.push(("out_x.w".into(), vec![3, top_dim]));
    out.push(("out_x.b".into(), vec![3]));
    out.push(("out_q.w".into(), vec![4, top_dim]));
    out.push(("out_q.b".into(), vec![4]));
    Ok(out)
}

/// Number of scalar weights and biases of a configuration.
pub fn param_count(config: &ModelConfig) -> Result<usize> {
    Ok(layout(config)?.iter().map(|(_, s)| s.iter().product::<usize>()).sum())
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape has no zero dims")
}

/// Initial parameters: ReLU layers get He-uniform weights, LSTM and output
/// layers get `U[−k, k]` with `k = 1/√fan_in`; biases start at zero except
/// the LSTM forget gates, which start at one.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::new();
    for (name, shape) in layout(config)? {
        let tensor = if name.ends_with(".b") {
            let mut t = Tensor::zeros(&shape);
            if name.starts_with("lstm") {
                let u = shape[0] / 4;
                t.data_mut()[u..2 * u].fill(1.0);
            }
            t
        } else {
            let fan_in: usize = shape[1..].iter().product();
            let relu_layer = name.starts_with("conv") || name.starts_with("inception") || name.starts_with("fc.");
            let bound = if relu_layer {
                (6.0 / fan_in as f64).sqrt()
            } else {
                1.0 / (fan_in as f64).sqrt()
            };
            uniform(&mut rng, &shape, bound)
        };
        params.push(name, tensor)?;
    }
    Ok(params)
}

/// Convolution with "same" padding for odd kernels, bias and ReLU.
fn conv_relu(tape: &mut Tape, input: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
    let k = tape.value(w).shape()[2];
    let y = tape.conv2d(input, w, Some(b), stride, k / 2)?;
    tape.relu(y)
}

/// The four-branch inception block. Input `[C×H×W]`, output
/// `[(b1 + b3 + b5 + pool_proj)×H×W]`.
pub fn inception_block_forward(tape: &mut Tape, bound: &Bound, input: Var) -> Result<Var> {
    let shape = tape.value(input).shape().to_vec();
    if shape.len() != 3 || shape[1] < 5 || shape[2] < 5 {
        return Err(Error::invalid(
            "inception_block_forward",
            format!("needs C×H×W with H, W ≥ 5, got {shape:?}"),
        ));
    }
    let p = |n: &str| bound.var(&format!("inception.{n}"));
    let b1 = conv_relu(tape, input, p("b1.w")?, p("b1.b")?, 1)?;
    let r3 = conv_relu(tape, input, p("b3_reduce.w")?, p("b3_reduce.b")?, 1)?;
    let b3 = conv_relu(tape, r3, p("b3.w")?, p("b3.b")?, 1)?;
    let r5 = conv_relu(tape, input, p("b5_reduce.w")?, p("b5_reduce.b")?, 1)?;
    let b5 = conv_relu(tape, r5, p("b5.w")?, p("b5.b")?, 1)?;
    let pooled = tape.max_pool2d(input, 3, 1, 1)?;
    let pp = conv_relu(tape, pooled, p("pool_proj.w")?, p("pool_proj.b")?, 1)?;
    tape.concat(&[b1, b3, b5, pp], 0)
}

/// One LSTM step for a batch: `input[I×B]`, `h, c[U×B]`, weights
/// `w[4U×(I+U)]` over `[input; h]`, bias `b[4U]` in gate order i, f, g, o.
pub fn lstm_cell_step(tape: &mut Tape, w: Var, b: Var, input: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let u = tape.value(h).shape()[0];
    if tape.value(w).shape()[0] != 4 * u || tape.value(c).shape() != tape.value(h).shape() {
        return Err(Error::shape("lstm_cell_step", tape.value(w).shape(), tape.value(h).shape()));
    }
    let xh = tape.concat(&[input, h], 0)?;
    let z = tape.linear(xh, w, b)?;
    let gate = |tape: &mut Tape, k: usize| tape.slice(z, 0, k * u, u);
    let i = gate(tape, 0)?;
    let i = tape.sigmoid(i)?;
    let f = gate(tape, 1)?;
    let f = tape.sigmoid(f)?;
    let g = gate(tape, 2)?;
    let g = tape.tanh(g)?;
    let o = gate(tape, 3)?;
    let o = tape.sigmoid(o)?;
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next)?;
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}

/// A model: configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params })
    }

    /// Applies the configured input pooling outside any tape. The result is
    /// what [`backbone_forward_pooled`](Self::backbone_forward_pooled) expects.
    pub fn pool_input(&self, image: &Tensor) -> Result<Tensor> {
        let bb = &self.config.backbone;
        let want = [bb.input_channels, bb.input_size, bb.input_size];
        if image.shape() != want {
            return Err(Error::shape("backbone input", image.shape(), &want));
        }
        if bb.input_pool == 1 {
            return Ok(image.clone());
        }
        let mut tape = Tape::new();
        let x = tape.constant(image.clone());
        let y = tape.avg_pool2d(x, bb.input_pool, bb.input_pool)?;
        Ok(tape.value(y).clone())
    }

    /// Feature vector `[feature_dim]` of a full-size `[3×S×S]` input.
    pub fn backbone_forward(&self, tape: &mut Tape, bound: &Bound, image: Var) -> Result<Var> {
        let bb = &self.config.backbone;
        let want = [bb.input_channels, bb.input_size, bb.input_size];
        if tape.value(image).shape() != want {
            return Err(Error::shape("backbone input", tape.value(image).shape(), &want));
        }
        let x = if bb.input_pool > 1 {
            tape.avg_pool2d(image, bb.input_pool, bb.input_pool)?
        } else {
            image
        };
        self.backbone_forward_pooled(tape, bound, x)
    }

    /// Feature vector of an input already passed through [`pool_input`](Self::pool_input).
    pub fn backbone_forward_pooled(&self, tape: &mut Tape, bound: &Bound, input: Var) -> Result<Var> {
        let bb = &self.config.backbone;
        let side = bb.pooled_size();
        let want = [bb.input_channels, side, side];
        if tape.value(input).shape() != want {
            return Err(Error::shape("backbone pooled input", tape.value(input).shape(), &want));
        }
        let mut x = input;
        for (i, s) in bb.stages.iter().enumerate() {
            x = conv_relu(tape, x, bound.var(&format!("conv{i}.w"))?, bound.var(&format!("conv{i}.b"))?, s.stride)?;
            if s.pool > 1 {
                x = tape.max_pool2d(x, s.pool, s.pool, 0)?;
            }
        }
        if bb.inception.is_some() {
            x = inception_block_forward(tape, bound, x)?;
        }
        let n = tape.value(x).len();
        tape.reshape(x, &[n])
    }

    /// FC head on a feature batch `[F×B]`; returns `x[3×B]`, `q[4×B]`.
    pub fn fc_head_forward(&self, tape: &mut Tape, bound: &Bound, features: Var) -> Result<(Var, Var)> {
        let hidden = tape.linear(features, bound.var("fc.w")?, bound.var("fc.b")?)?;
        let hidden = tape.relu(hidden)?;
        self.outputs(tape, bound, hidden, hidden)
    }

    fn outputs(&self, tape: &mut Tape, bound: &Bound, hx: Var, hq: Var) -> Result<(Var, Var)> {
        let x = tape.linear(hx, bound.var("out_x.w")?, bound.var("out_x.b")?)?;
        let q = tape.linear(hq, bound.var("out_q.w")?, bound.var("out_q.b")?)?;
        Ok((x, q))
    }

    /// LSTM head over a sequence of feature batches, oldest first, each
    /// `[F×B]`. State starts at zero; the final hidden states feed the
    /// output layers.
    pub fn lstm_head_forward(&self, tape: &mut Tape, bound: &Bound, sequence: &[Var]) -> Result<(Var, Var)> {
        let head = &self.config.head;
        if sequence.len() != head.sequence_length {
            return Err(Error::invalid(
                "lstm_head_forward",
                format!("expected {} frames, got {}", head.sequence_length, sequence.len()),
            ));
        }
        let batch = tape.value(sequence[0]).shape()[1];
        let run = |tape: &mut Tape, stack: &str| -> Result<Var> {
            let u = head.lstm_units;
            let mut h = Vec::new();
            let mut c = Vec::new();
            for _ in 0..head.lstm_layers {
                h.push(tape.constant(Tensor::zeros(&[u, batch])));
                c.push(tape.constant(Tensor::zeros(&[u, batch])));
            }
            for &frame in sequence {
                let mut input = frame;
                for l in 0..head.lstm_layers {
                    let w = bound.var(&format!("{stack}.l{l}.w"))?;
                    let b = bound.var(&format!("{stack}.l{l}.b"))?;
                    (h[l], c[l]) = lstm_cell_step(tape, w, b, input, h[l], c[l])?;
                    input = h[l];
                }
            }
            Ok(h[head.lstm_layers - 1])
        };
        if head.shared_lstm {
            let h = run(tape, "lstm")?;
            self.outputs(tape, bound, h, h)
        } else {
            let hx = run(tape, "lstm_x")?;
            let hq = run(tape, "lstm_q")?;
            self.outputs(tape, bound, hx, hq)
        }
    }

    /// Full forward pass for a batch of windows of pooled inputs.
    ///
    /// Every window must hold `sequence_length` indices into `inputs`; the
    /// backbone runs once per distinct input. Returns `x[3×B]`, `q[4×B]`.
    pub fn forward_windows(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &[&Tensor],
        windows: &[Vec<usize>],
    ) -> Result<(Var, Var)> {
        if windows.is_empty() {
            return Err(Error::invalid("forward_windows", "empty batch"));
        }
        let len = self.config.head.sequence_length;
        if let Some(w) = windows.iter().find(|w| w.len() != len) {
            return Err(Error::invalid(
                "forward_windows",
                format!("window of {} frames, head expects {len}", w.len()),
            ));
        }
        let mut feature_of: HashMap<usize, usize> = HashMap::new();
        let mut columns = Vec::new();
        for &i in windows.iter().flatten() {
            if feature_of.contains_key(&i) {
                continue;
            }
            let input = inputs
                .get(i)
                .ok_or_else(|| Error::invalid("forward_windows", format!("index {i} out of range")))?;
            let x = tape.constant((*input).clone());
            let f = self.backbone_forward_pooled(tape, bound, x)?;
            let n = tape.value(f).len();
            feature_of.insert(i, columns.len());
            columns.push(tape.reshape(f, &[n, 1])?);
        }
        let all = tape.concat(&columns, 1)?;
        let gather = |tape: &mut Tape, t: usize| -> Result<Var> {
            let cols: Vec<Var> = windows
                .iter()
                .map(|w| tape.slice(all, 1, feature_of[&w[t]], 1))
                .collect::<Result<_>>()?;
            if cols.len() == 1 {
                Ok(cols[0])
            } else {
                tape.concat(&cols, 1)
            }
        };
        match self.config.head.kind {
            HeadKind::Fc => {
                let f = gather(tape, 0)?;
                self.fc_head_forward(tape, bound, f)
            }
            HeadKind::Lstm => {
                let seq: Vec<Var> = (0..len).map(|t| gather(tape, t)).collect::<Result<_>>()?;
                self.lstm_head_forward(tape, bound, &seq)
            }
        }
    }

    /// Raw predictions `(x, q)` for one window of pooled inputs.
    pub fn predict(&self, window: &[&Tensor]) -> Result<([f64; 3], [f64; 4])> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let indices: Vec<usize> = (0..window.len()).collect();
        let (x, q) = self.forward_windows(&mut tape, &bound, window, &[indices])?;
        let (xv, qv) = (tape.value(x).data(), tape.value(q).data());
        Ok(([xv[0], xv[1], xv[2]], [qv[0], qv[1], qv[2], qv[3]]))
    }

    /// Backbone features of one pooled input.
    pub fn features(&self, pooled: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let x = tape.constant(pooled.clone());
        let f = self.backbone_forward_pooled(&mut tape, &bound, x)?;
        Ok(tape.value(f).data().to_vec())
    }
}

/// Cosine similarity of two feature vectors.
pub fn feature_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("feature_similarity", &[a.len()], &[b.len()]));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("feature_similarity", "zero feature vector"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
