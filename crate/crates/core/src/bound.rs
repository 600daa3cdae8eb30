//! Rank-one ω-parameterized covariance bound shared by the LoS, NLoS and
//! compact NLoS updates.
//!
//! All three updates have the form
//!
//! ```text
//! u(ω) = P Hᵢᵀ/ω + γ(ω)·C        K(ω) = u/S(ω)        P̄(ω) = P/ω − u uᵀ/S(ω)
//! ```
//!
//! with γ = 1 for the full NLoS update and γ = 1/ω for the compact one (C = 0
//! for LoS). The matrix determinant lemma gives
//! `log det P̄(ω) = log det P − n·ln ω + ln(S − q) − ln S` with
//! `q = uᵀ(ωP⁻¹)u`, so the ω search runs on scalars only.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::omega::{optimize_omega, OmegaSearch};

/// Smallest innovation variance accepted as positive.
pub const MIN_INNOVATION_VAR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BiasScaling {
    /// Bias block kept outside the ω scaling (full NLoS update).
    Fixed,
    /// Own state and bias scaled together by 1/ω (compact update).
    WithState,
}

#[derive(Debug, Clone)]
pub(crate) struct RankOneBound {
    p: DMatrix<f64>,
    ph: DVector<f64>,
    c: DVector<f64>,
    /// Hᵢ P Hᵢᵀ
    a: f64,
    /// Hⱼ Pⱼ Hⱼᵀ
    b: f64,
    r: f64,
    /// Hᵢ Cⁱⁱ
    hic: f64,
    /// Bias contribution to S that is not `2 Hᵢ Cⁱⁱ` (i.e. `2 Hⱼ Cʲⁱ + B`, or `B` when compact).
    bias_rest: f64,
    /// Cⁱⁱᵀ P⁻¹ Cⁱⁱ
    cpc: f64,
    logdet_p: f64,
    scaling: BiasScaling,
}

impl RankOneBound {
    pub(crate) fn new(
        p: &DMatrix<f64>,
        h_i: &DVector<f64>,
        b: f64,
        r: f64,
        c: Option<&DVector<f64>>,
        bias_rest: f64,
        scaling: BiasScaling,
    ) -> Result<Self> {
        let n = p.nrows();
        if h_i.len() != n {
            return Err(Error::DimensionMismatch {
                what: "range jacobian",
                expected: n,
                found: h_i.len(),
            });
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter("measurement variance must be positive"));
        }
        let chol = p
            .clone()
            .cholesky()
            .ok_or(Error::Numerical("prior covariance is not positive definite"))?;
        let logdet_p = 2.0 * chol.l().diagonal().iter().map(|d| libm::log(*d)).sum::<f64>();
        if !logdet_p.is_finite() {
            return Err(Error::Numerical("prior covariance is singular"));
        }
        let ph = p * h_i;
        let a = h_i.dot(&ph);
        let c = match c {
            Some(c) if c.len() != n => {
                return Err(Error::DimensionMismatch {
                    what: "state-bias cross-covariance",
                    expected: n,
                    found: c.len(),
                })
            }
            Some(c) => c.clone(),
            None => DVector::zeros(n),
        };
        let hic = h_i.dot(&c);
        let cpc = if c.iter().all(|v| *v == 0.0) {
            0.0
        } else {
            c.dot(&chol.solve(&c))
        };
        Ok(Self {
            p: p.clone(),
            ph,
            c,
            a,
            b,
            r,
            hic,
            bias_rest,
            cpc,
            logdet_p,
            scaling,
        })
    }

    fn gamma(&self, w: f64) -> f64 {
        match self.scaling {
            BiasScaling::Fixed => 1.0,
            BiasScaling::WithState => 1.0 / w,
        }
    }

    pub(crate) fn innovation_var(&self, w: f64) -> f64 {
        let g = self.gamma(w);
        self.a / w + self.b / (1.0 - w) + self.r + g * (2.0 * self.hic + self.bias_rest)
    }

    /// `S − uᵀ(ωP⁻¹)u`, arranged to avoid cancellation of the `Hᵢ P Hᵢᵀ/ω` terms.
    fn residual_var(&self, w: f64) -> f64 {
        let g = self.gamma(w);
        self.b / (1.0 - w) + self.r + g * self.bias_rest - w * g * g * self.cpc
    }

    /// `log det P̄(ω)`, or `+∞` where the bound is not positive definite.
    pub(crate) fn log_det(&self, w: f64) -> f64 {
        let s = self.innovation_var(w);
        let rest = self.residual_var(w);
        if !(s > MIN_INNOVATION_VAR && rest > 0.0) {
            return f64::INFINITY;
        }
        let n = self.p.nrows() as f64;
        self.logdet_p - n * libm::log(w) + libm::log(rest) - libm::log(s)
    }

    /// Gain, bound covariance and innovation variance at ω.
    pub(crate) fn evaluate(&self, w: f64) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
        let s = self.innovation_var(w);
        if !(s > MIN_INNOVATION_VAR) || !s.is_finite() {
            return Err(Error::Numerical("innovation variance is not positive"));
        }
        let u = &self.ph / w + &self.c * self.gamma(w);
        let k = &u / s;
        let p_bar = &self.p / w - (&u * u.transpose()) / s;
        Ok((k, p_bar, s))
    }

    /// Interior minimizer of `log det P̄`, or `1.0` (leave the prior untouched)
    /// when no interior ω strictly improves on the prior.
    pub(crate) fn choose_omega(&self, search: &OmegaSearch) -> Result<f64> {
        let w = optimize_omega(|w| self.log_det(w), search)?;
        if self.log_det(w) < self.logdet_p {
            Ok(w)
        } else {
            Ok(1.0)
        }
    }
}
