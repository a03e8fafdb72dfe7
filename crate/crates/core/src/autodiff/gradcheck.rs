use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compares tape gradients of `f` with central finite differences.
///
/// `f` receives a fresh tape and one trainable leaf per entry of `params`
/// and must return a scalar. The result is the maximum over all parameter
/// entries of `|analytic − numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("grad_check", format!("step must be positive, got {step}")));
    }
    for (p, t) in params.iter().enumerate() {
        if let Some(index) = t.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { param: p, index });
        }
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, t)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out)
            .item()
            .ok_or_else(|| Error::invalid("grad_check", "function output is not scalar"))
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst: f64 = 0.0;
    for (p, param) in params.iter().enumerate() {
        for (j, &original) in param.data().iter().enumerate() {
            work[p].data_mut()[j] = original + step;
            let plus = eval(&work)?;
            work[p].data_mut()[j] = original - step;
            let minus = eval(&work)?;
            work[p].data_mut()[j] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite { param: p, index: j });
            }
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[p][j];
            if !a.is_finite() {
                return Err(Error::NonFinite { param: p, index: j });
            }
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst)
}
