use crate::error::{Error, Result};

use super::tape::{NodeId, Tape};
use super::tensor::Tensor;

/// Compare the analytic gradient of `f` with central finite differences.
///
/// `f` rebuilds the scalar-valued graph from scratch on the tape it is
/// given, using the provided leaf id for `x`; any other tensors it closes
/// over are re-registered internally on each call. Returns the maximum over
/// coordinates of `|analytic - numeric| / max(1, |analytic|)`.
///
/// `eps` must lie in `(0, 1e-2]`; the loss must stay finite at every
/// probed point.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::input("grad_check", format!("eps {} outside (0, 1e-2]", eps)));
    }
    if !x.requires_grad() {
        return Err(Error::input("grad_check", "probe tensor must require gradients"));
    }

    let eval = |tape_fn: &F| -> Result<f64> {
        let mut tape = Tape::new();
        let xid = tape.leaf(x)?;
        let loss = tape_fn(&mut tape, xid)?;
        let (r, c) = tape.dims(loss);
        if r * c != 1 {
            return Err(Error::input("grad_check", format!("loss must be scalar, got {}x{}", r, c)));
        }
        let v = tape.value(loss)[0];
        if !v.is_finite() {
            return Err(Error::non_finite("grad_check loss"));
        }
        Ok(v)
    };

    // Analytic pass.
    x.zero_grad();
    {
        let mut tape = Tape::new();
        let xid = tape.leaf(x)?;
        let loss = f(&mut tape, xid)?;
        tape.backward(loss)?;
    }
    let analytic = x
        .grad()
        .ok_or_else(|| Error::input("grad_check", "no gradient accumulated for probe tensor"))?;
    x.zero_grad();

    let mut max_rel = 0.0_f64;
    for i in 0..analytic.len() {
        x.with_data_mut(|d| d[i] += eps);
        let plus = eval(&f)?;
        x.with_data_mut(|d| d[i] -= 2.0 * eps);
        let minus = eval(&f)?;
        x.with_data_mut(|d| d[i] += eps);
        let numeric = (plus - minus) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

/// Run [`grad_check`] against every tensor in `params`, rebuilding the
/// same graph each time, and return the worst relative error. The graph
/// builder receives the tape and must register whatever leaves it needs
/// itself; the probed tensor is identified by pointer, so `build` should
/// use the shared handles from `params`.
pub fn grad_check_params<F>(params: &[(&str, Tensor)], build: F, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape) -> Result<NodeId>,
{
    let mut worst = 0.0_f64;
    for (name, t) in params {
        let err = grad_check(|tape, _| build(tape), t, eps).map_err(|e| {
            Error::input("grad_check_params", format!("{}: {}", name, e))
        })?;
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}
