//! Central finite-difference gradient oracle.

use super::{Graph, Precision, Tensor, TensorId};
use crate::error::{Error, Result};

/// Agreement between analytic and numeric gradients for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub index: usize,
    pub numel: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub params: Vec<ParamCheck>,
    pub step: f64,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Gradients smaller than this in magnitude are compared in absolute terms.
/// Central differences of an O(1) loss at `h = 1e-5` carry roughly 1e-10 of
/// rounding noise, so relative errors of smaller gradients measure roundoff.
pub const GRAD_FLOOR: f64 = 1e-5;

/// Checks every element of every tensor in `params` against
/// `(f(x + h) - f(x - h)) / 2h`.
///
/// `build` must record a scalar loss from the parameter ids it is given.
/// The relative error of an element is `|a - n| / max(|a|, |n|, GRAD_FLOOR)`.
pub fn gradcheck<F>(build: F, params: &[Tensor], step: f64, tolerance: f64) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph, &[TensorId]) -> Result<TensorId>,
{
    if step.is_nan() || tolerance.is_nan() || step <= 0.0 || tolerance <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gradcheck: step {step} and tolerance {tolerance} must be positive"
        )));
    }
    let eval = |values: &[Tensor], with_grad: bool| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new(Precision::F64);
        let ids: Vec<TensorId> = values.iter().map(|t| g.param(t.clone())).collect();
        let loss = build(&mut g, &ids)?;
        let value = g
            .value(loss)
            .item()
            .ok_or_else(|| Error::NonScalarRoot(g.shape(loss).to_vec()))?;
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "gradcheck" });
        }
        let mut grads = Vec::new();
        if with_grad {
            g.backward(loss)?;
            for (id, t) in ids.iter().zip(values) {
                grads.push(g.grad(*id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]));
            }
        }
        Ok((value, grads))
    };

    let (_, analytic) = eval(params, true)?;
    let mut work: Vec<Tensor> = params.to_vec();
    let mut checks = Vec::with_capacity(params.len());
    for (pi, grad) in analytic.iter().enumerate() {
        let mut max_abs: f64 = 0.0;
        let mut max_rel: f64 = 0.0;
        for e in 0..params[pi].numel() {
            let orig = params[pi].data()[e];
            work[pi].data_mut()[e] = orig + step;
            let (plus, _) = eval(&work, false)?;
            work[pi].data_mut()[e] = orig - step;
            let (minus, _) = eval(&work, false)?;
            work[pi].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = grad[e];
            if !a.is_finite() || !numeric.is_finite() {
                return Err(Error::NonFinite { op: "gradcheck" });
            }
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        checks.push(ParamCheck {
            index: pi,
            numel: params[pi].numel(),
            max_abs_error: max_abs,
            max_rel_error: max_rel,
        });
    }
    let max_rel_error = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        params: checks,
        step,
        tolerance,
        max_rel_error,
        passed: max_rel_error < tolerance,
    })
}
