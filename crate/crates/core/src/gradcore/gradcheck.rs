//! Central-difference gradient checking.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(1, |analytic|)` over all coordinates.
    pub max_rel_error: f64,
    /// Input index and flat coordinate of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

/// Checks a scalar function of a single tensor. Returns the maximum
/// relative error as defined on [`GradCheckReport::max_rel_error`].
pub fn grad_check<F>(f: F, point: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let report = grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(point), h)?;
    Ok(report.max_rel_error)
}

/// Checks a scalar function of several tensors at once.
pub fn grad_check_many<F>(f: F, points: &[Tensor], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::Contract(format!("finite-difference step {h} not in (0, 1e-2]")));
    }

    let evaluate = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.constant(v.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let out = tape.value(out);
        if out.len() != 1 {
            return Err(Error::Contract("grad_check needs a scalar-valued function".into()));
        }
        let v = out.item();
        if !v.is_finite() {
            return Err(Error::NonFinite("function value at a perturbed point".into()));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = points.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| tape.grad(v).expect("trainable leaves always hold a gradient"))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let mut work: Vec<Tensor> = points.to_vec();
    for (pi, point) in points.iter().enumerate() {
        for ci in 0..point.len() {
            let orig = point.data()[ci];
            work[pi].data_mut()[ci] = orig + h;
            let up = evaluate(&work)?;
            work[pi].data_mut()[ci] = orig - h;
            let down = evaluate(&work)?;
            work[pi].data_mut()[ci] = orig;

            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi].data()[ci];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((pi, ci));
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}
