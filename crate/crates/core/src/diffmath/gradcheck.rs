use super::{DiffValue, Matrix, Tape};
use crate::error::{invalid, Error, Result};

/// Compares reverse-mode gradients against central differences.
///
/// `f` receives one leaf per entry of `params` (in order) and must return a
/// 1×1 value. Returns the maximum over all parameter entries of
/// `|analytic − numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, params: &[(&str, Matrix)], h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[DiffValue<'t>]) -> Result<DiffValue<'t>>,
{
    if h <= 0.0 {
        return Err(invalid(format!("grad_check: step must be positive, got {h}")));
    }
    let eval = |values: &[Matrix]| -> Result<f64> {
        let tape = Tape::new();
        let leaves: Vec<DiffValue<'_>> = values.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = f(&tape, &leaves)?;
        let v = out.value();
        if v.shape() != (1, 1) {
            return Err(Error::NotScalar(v.shape()));
        }
        Ok(v[(0, 0)])
    };

    let tape = Tape::new();
    let leaves: Vec<DiffValue<'_>> = params.iter().map(|(_, m)| tape.leaf(m.clone())).collect();
    let loss = f(&tape, &leaves)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Matrix> = leaves.iter().map(|&l| grads.wrt(l)).collect();

    let mut values: Vec<Matrix> = params.iter().map(|(_, m)| m.clone()).collect();
    let mut worst: f64 = 0.0;
    for (p, (name, _)) in params.iter().enumerate() {
        if !analytic[p].is_finite() {
            return Err(Error::NonFinite(format!("parameter `{name}`")));
        }
        for k in 0..values[p].len() {
            let orig = values[p].data()[k];
            values[p].data_mut()[k] = orig + h;
            let plus = eval(&values)?;
            values[p].data_mut()[k] = orig - h;
            let minus = eval(&values)?;
            values[p].data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("parameter `{name}`")));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let err = (analytic[p].data()[k] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
