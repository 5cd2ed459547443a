use ndarray::Array2;

use crate::error::{RefcalError, Result};
use crate::losses::nll_loss;

/// Search bracket for the temperature.
pub const TEMPERATURE_BRACKET: (f64, f64) = (0.05, 20.0);
/// Golden-section stopping width in log-temperature.
pub const TEMPERATURE_TOL: f64 = 1e-4;

pub fn nll_at_temperature(logits: &Array2<f64>, labels: &[usize], temperature: f64) -> Result<f64> {
    Ok(nll_loss(&(logits / temperature), labels, false)?.value)
}

/// Fits a single temperature on held-out logits by golden-section search of
/// the negative log-likelihood over log-temperature. Never returns a
/// temperature whose NLL is worse than at `T = 1`.
pub fn fit_temperature(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() == 0 {
        return Err(RefcalError::EmptyValidation);
    }
    let f = |u: f64| nll_at_temperature(logits, labels, u.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (TEMPERATURE_BRACKET.0.ln(), TEMPERATURE_BRACKET.1.ln());
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while hi - lo > TEMPERATURE_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let best = ((lo + hi) / 2.0).exp();
    if nll_at_temperature(logits, labels, best)? <= nll_at_temperature(logits, labels, 1.0)? {
        Ok(best)
    } else {
        Ok(1.0)
    }
}
