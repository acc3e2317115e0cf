//! Central-difference gradient checking.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compares the tape gradient of `f` at `point` against central differences.
///
/// Returns `max_i |analytic_i − numeric_i| / max(1, |numeric_i|)`.
pub fn grad_check<F>(f: F, point: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let value = |p: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(p.clone());
        let out = f(&mut tape, x)?;
        tape.value(out).item()
    };
    let gradient = |p: &Tensor| -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.leaf(p.clone());
        let out = f(&mut tape, x)?;
        Ok(tape.backward(out)?.wrt(x))
    };
    grad_check_with(value, gradient, point, h)
}

/// Same comparison for an arbitrary value/gradient pair.
pub fn grad_check_with<V, G>(value: V, gradient: G, point: &Tensor, h: f64) -> Result<f64>
where
    V: Fn(&Tensor) -> Result<f64>,
    G: Fn(&Tensor) -> Result<Tensor>,
{
    let analytic = gradient(point)?;
    if analytic.shape() != point.shape() {
        return Err(Error::shape(format!(
            "gradient shape {:?} does not match point shape {:?}",
            analytic.shape(),
            point.shape()
        )));
    }
    let mut probe = point.clone();
    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let orig = point.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = value(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = value(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
