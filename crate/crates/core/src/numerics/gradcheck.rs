use libm::fabs;

use super::{BoundParams, ParameterSet, Tape, Var};
use crate::error::{Error, Result};

/// Compares reverse-mode gradients against central finite differences.
///
/// `build` records a scalar loss on a fresh tape from bound parameters. The
/// return value is `max |g_ad - g_fd| / max(1, |g_fd|)` over every scalar
/// parameter.
pub fn finite_difference_check<F>(params: &ParameterSet, h: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::Invalid(alloc::format!("step must be positive, got {h}")));
    }
    let eval = |p: &ParameterSet| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let loss = build(&mut tape, &bound)?;
        let v = tape.value(loss).data()[0];
        if !v.is_finite() {
            return Err(Error::NonFinite("finite-difference objective"));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = build(&mut tape, &bound)?;
    if !tape.value(loss).data()[0].is_finite() {
        return Err(Error::NonFinite("finite-difference objective"));
    }
    let grads = bound.gradients(&tape, &tape.backward(loss)?);

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (name, analytic) in grads.iter() {
        for j in 0..analytic.len() {
            let original = params.get(name).expect("same layout").data()[j];
            probe.get_mut(name).expect("same layout").data_mut()[j] = original + h;
            let up = eval(&probe)?;
            probe.get_mut(name).expect("same layout").data_mut()[j] = original - h;
            let down = eval(&probe)?;
            probe.get_mut(name).expect("same layout").data_mut()[j] = original;
            let fd = (up - down) / (2.0 * h);
            let err = fabs(analytic.data()[j] - fd) / fabs(fd).max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
