//! Power-metric based LoS/NLoS mode discrimination.

use crate::error::{Error, Result};
use crate::types::ModeProbabilities;

/// Parameters of the sigmoid `p_nlos = 1 / (a + b·exp(c − pm))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidParams {
    pub a: f64,
    pub b: f64,
    /// Power metric at the sigmoid centre (dB).
    pub c: f64,
}

impl Default for SigmoidParams {
    /// Curve fitted to power-metric data from a controlled LoS/NLoS campaign.
    fn default() -> Self {
        Self {
            a: 1.068,
            b: 1.013,
            c: 6.934,
        }
    }
}

impl SigmoidParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::NonFinite("sigmoid parameters"));
        }
        if a < 1.0 {
            return Err(Error::InvalidParameter("sigmoid a must be >= 1"));
        }
        if b <= 0.0 {
            return Err(Error::InvalidParameter("sigmoid b must be > 0"));
        }
        Ok(Self { a, b, c })
    }
}

/// Soft mode probabilities from the fitted sigmoid. The NLoS probability
/// saturates at `1/a`, not at 1.
pub fn nlos_probability(pm: f64, params: &SigmoidParams) -> Result<ModeProbabilities> {
    if !pm.is_finite() {
        return Err(Error::NonFinite("power metric"));
    }
    let p = 1.0 / (params.a + params.b * libm::exp(params.c - pm));
    ModeProbabilities::from_nlos(p.clamp(0.0, 1.0))
}

/// Hard classification: LoS strictly below `threshold`, NLoS at or above it.
pub fn deterministic_mode(pm: f64, threshold: f64) -> Result<ModeProbabilities> {
    if !pm.is_finite() || !threshold.is_finite() {
        return Err(Error::NonFinite("power metric or threshold"));
    }
    Ok(if pm < threshold {
        ModeProbabilities::LOS
    } else {
        ModeProbabilities::NLOS
    })
}
