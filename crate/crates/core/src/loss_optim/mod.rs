//! Pose losses, the Adam optimizer and the training step.
//!
//! Both losses use plain (unsquared) Euclidean norms of the residuals:
//!
//! * fixed:    `‖x − x'‖ + β‖q − q'‖`
//! * adaptive: `‖x − x'‖·e^(−s_x) + s_x + ‖q − q'‖·e^(−s_q) + s_q`
//!
//! with `s_x`, `s_q` learned alongside the network. Batched predictions are
//! `[3×B]` and `[4×B]`; the loss is the mean over the B columns.

mod adam;
mod log;

pub use adam::{AdamConfig, AdamState};
pub use log::{StepLog, StepMetrics, LOG_HEADER};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::model::{Model, ModelParams};

/// Parameter names of the two adaptive-loss scalars.
pub const S_X: &str = "loss.s_x";
pub const S_Q: &str = "loss.s_q";

pub const DEFAULT_BETA: f64 = 500.0;
pub const DEFAULT_BATCH: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    FixedBeta(f64),
    Adaptive,
}

impl LossKind {
    /// `adaptive` or `fixed_beta(<β>)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "adaptive" {
            return Ok(LossKind::Adaptive);
        }
        if s == "fixed_beta" {
            return Ok(LossKind::FixedBeta(DEFAULT_BETA));
        }
        let beta = s
            .strip_prefix("fixed_beta(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|b| b.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::Config(format!("unknown loss '{s}'")))?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        Ok(LossKind::FixedBeta(beta))
    }

    pub fn name(&self) -> String {
        match self {
            LossKind::Adaptive => "adaptive".into(),
            LossKind::FixedBeta(b) => format!("fixed_beta({b})"),
        }
    }
}

/// Initial values of the adaptive-loss scalars.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveLossState {
    pub s_x: f64,
    pub s_q: f64,
}

impl Default for AdaptiveLossState {
    fn default() -> Self {
        Self { s_x: 0.0, s_q: -3.0 }
    }
}

impl AdaptiveLossState {
    /// Adds the two scalars to a parameter table so the optimizer trains them.
    pub fn attach(&self, params: &mut ModelParams) -> Result<()> {
        if !(self.s_x.is_finite() && self.s_q.is_finite()) {
            return Err(Error::Numerical(format!("adaptive loss state {self:?} is not finite")));
        }
        params.push(S_X, Tensor::scalar(self.s_x))?;
        params.push(S_Q, Tensor::scalar(self.s_q))
    }

    /// Current values held in a parameter table, if attached.
    pub fn read(params: &ModelParams) -> Option<Self> {
        Some(Self {
            s_x: params.get(S_X)?.data()[0],
            s_q: params.get(S_Q)?.data()[0],
        })
    }
}

fn check_finite(tape: &Tape, vars: &[Var], op: &str) -> Result<()> {
    for &v in vars {
        if tape.value(v).data().iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("{op}: non-finite input")));
        }
    }
    Ok(())
}

/// Mean over columns of the residual norms `‖a_j − b_j‖`.
fn mean_residual_norm(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let shape = tape.value(a).shape().to_vec();
    if shape != tape.value(b).shape() {
        return Err(Error::shape("loss residual", &shape, tape.value(b).shape()));
    }
    let d = tape.sub(a, b)?;
    match shape.as_slice() {
        [_] => tape.l2norm(d),
        [_, 1] => tape.l2norm(d),
        [_, n] => {
            let mut total: Option<Var> = None;
            for j in 0..*n {
                let col = tape.slice(d, 1, j, 1)?;
                let norm = tape.l2norm(col)?;
                total = Some(match total {
                    Some(t) => tape.add(t, norm)?,
                    None => norm,
                });
            }
            tape.scale(total.expect("batch is non-empty"), 1.0 / *n as f64)
        }
        _ => Err(Error::invalid("loss", format!("expected a vector or [D×B] batch, got {shape:?}"))),
    }
}

/// `‖x − x'‖ + β‖q − q'‖`, averaged over the batch.
pub fn fixed_beta_loss(tape: &mut Tape, x: Var, x_pred: Var, q: Var, q_pred: Var, beta: f64) -> Result<Var> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("fixed_beta_loss", format!("beta must be positive, got {beta}")));
    }
    check_finite(tape, &[x, x_pred, q, q_pred], "fixed_beta_loss")?;
    let ex = mean_residual_norm(tape, x, x_pred)?;
    let eq = mean_residual_norm(tape, q, q_pred)?;
    let weighted = tape.scale(eq, beta)?;
    tape.add(ex, weighted)
}

/// `‖x − x'‖·e^(−s_x) + s_x + ‖q − q'‖·e^(−s_q) + s_q`, averaged over the batch.
pub fn adaptive_loss(tape: &mut Tape, x: Var, x_pred: Var, q: Var, q_pred: Var, s_x: Var, s_q: Var) -> Result<Var> {
    check_finite(tape, &[x, x_pred, q, q_pred, s_x, s_q], "adaptive_loss")?;
    let ex = mean_residual_norm(tape, x, x_pred)?;
    let eq = mean_residual_norm(tape, q, q_pred)?;
    let term = |tape: &mut Tape, e: Var, s: Var| -> Result<Var> {
        let neg = tape.scale(s, -1.0)?;
        let w = tape.exp(neg)?;
        let weighted = tape.mul(e, w)?;
        tape.add(weighted, s)
    };
    let tx = term(tape, ex, s_x)?;
    let tq = term(tape, eq, s_q)?;
    tape.add(tx, tq)
}

/// Applies the configured loss to batched predictions.
pub fn pose_loss(
    tape: &mut Tape,
    model: &Model,
    kind: LossKind,
    vars: &[Var],
    targets: (Var, Var),
    preds: (Var, Var),
) -> Result<Var> {
    let (x, q) = targets;
    let (xp, qp) = preds;
    match kind {
        LossKind::FixedBeta(beta) => fixed_beta_loss(tape, x, xp, q, qp, beta),
        LossKind::Adaptive => {
            let find = |name: &str| {
                model
                    .params
                    .position(name)
                    .map(|i| vars[i])
                    .ok_or_else(|| Error::invalid("pose_loss", format!("adaptive loss needs parameter {name}")))
            };
            adaptive_loss(tape, x, xp, q, qp, find(S_X)?, find(S_Q)?)
        }
    }
}

/// Stacks target poses into `[3×B]` position and `[4×B]` orientation tensors.
pub fn target_tensors(targets: &[Pose]) -> Result<(Tensor, Tensor)> {
    if targets.is_empty() {
        return Err(Error::invalid("target_tensors", "empty batch"));
    }
    let b = targets.len();
    let mut xs = vec![0.0; 3 * b];
    let mut qs = vec![0.0; 4 * b];
    for (j, p) in targets.iter().enumerate() {
        for k in 0..3 {
            xs[k * b + j] = p.position[k];
        }
        for (k, v) in p.orientation.to_array().into_iter().enumerate() {
            qs[k * b + j] = v;
        }
    }
    Ok((Tensor::new(vec![3, b], xs)?, Tensor::new(vec![4, b], qs)?))
}

/// One optimization step on a batch.
///
/// `inputs` are pooled network inputs, `windows` index into them (one per
/// batch item, `sequence_length` long) and `targets` hold each window's
/// label. The mean loss is back-propagated once and Adam updates every
/// parameter, the adaptive-loss scalars included. On any failure the model
/// and optimizer are left untouched.
pub fn training_step(
    model: &mut Model,
    inputs: &[&Tensor],
    windows: &[Vec<usize>],
    targets: &[Pose],
    loss: LossKind,
    optimizer: &mut AdamState,
) -> Result<StepMetrics> {
    if windows.is_empty() || windows.len() != targets.len() {
        return Err(Error::invalid(
            "training_step",
            format!("{} windows for {} targets", windows.len(), targets.len()),
        ));
    }
    let (loss_value, grads) = {
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let preds = model.forward_windows(&mut tape, &bound, inputs, windows)?;
        let (tx, tq) = target_tensors(targets)?;
        let tx = tape.constant(tx);
        let tq = tape.constant(tq);
        let vars = bound.vars().to_vec();
        let l = pose_loss(&mut tape, model, loss, &vars, (tx, tq), preds)?;
        let value = tape.value(l).data()[0];
        if !value.is_finite() {
            return Err(Error::Numerical(format!("loss is {value}")));
        }
        tape.backward(l)?;
        let grads: Vec<Vec<f64>> = vars
            .iter()
            .zip(model.params.tensors())
            .map(|(&v, t)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
            .collect();
        (value, grads)
    };
    let grad_norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    optimizer.step(model.params.tensors_mut(), &grads)?;
    let s = AdaptiveLossState::read(&model.params);
    Ok(StepMetrics {
        loss: loss_value,
        s_x: s.map(|s| s.s_x),
        s_q: s.map(|s| s.s_q),
        grad_norm,
    })
}
