//! Loosely coupled LoS relative-range update.
//!
//! The unknown cross-covariance between the two agents is replaced by the
//! block-diagonal bound `diag(Pᵢ/ω, Pⱼ/(1−ω))`. The gain minimizes the trace
//! of the resulting bound, and ω minimizes its log-determinant.

use nalgebra::{DMatrix, DVector};

use crate::bound::{BiasScaling, RankOneBound};
use crate::error::{Error, Result};
use crate::imm::gaussian_likelihood;
use crate::omega::OmegaSearch;
use crate::types::{Belief, Covariance, UpdateOutcome};

/// Minimum estimated distance for which the range model is linearized (m).
pub const MIN_RANGE_DISTANCE: f64 = 1e-6;

/// The other end of a range measurement.
#[derive(Debug, Clone, Copy)]
pub enum RangeTarget<'a> {
    Agent(&'a Belief),
    Beacon([f64; 2]),
}

/// First-order expansion of `h(xᵢ, xⱼ) = ‖pᵢ − pⱼ‖` about the estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeJacobians {
    /// ∂h/∂xᵢ as a column vector.
    pub h_i: DVector<f64>,
    /// ∂h/∂xⱼ as a column vector (length 2 for a beacon).
    pub h_j: DVector<f64>,
    /// Predicted range at the estimates (m).
    pub z_hat: f64,
}

/// Linearize the range model at the current estimates.
pub fn range_linearize(bel_i: &Belief, target: RangeTarget<'_>) -> Result<RangeJacobians> {
    let pi = bel_i
        .position()
        .ok_or(Error::InvalidParameter("state has no planar position"))?;
    let (pj, n_j) = match target {
        RangeTarget::Agent(bel_j) => (
            bel_j
                .position()
                .ok_or(Error::InvalidParameter("target state has no planar position"))?,
            bel_j.dim(),
        ),
        RangeTarget::Beacon(pos) => (pos, 2),
    };
    let dx = pi[0] - pj[0];
    let dy = pi[1] - pj[1];
    let d = libm::hypot(dx, dy);
    if !(d >= MIN_RANGE_DISTANCE) {
        return Err(Error::DegenerateGeometry { distance: d });
    }
    let mut h_i = DVector::zeros(bel_i.dim());
    h_i[0] = dx / d;
    h_i[1] = dy / d;
    let mut h_j = DVector::zeros(n_j);
    h_j[0] = -dx / d;
    h_j[1] = -dy / d;
    Ok(RangeJacobians { h_i, h_j, z_hat: d })
}

fn target_spread(p_j: &DMatrix<f64>, h_j: &DVector<f64>) -> Result<f64> {
    if p_j.nrows() != h_j.len() || !p_j.is_square() {
        return Err(Error::DimensionMismatch {
            what: "target covariance",
            expected: h_j.len(),
            found: p_j.nrows(),
        });
    }
    Ok(h_j.dot(&(p_j * h_j)))
}

/// Bound covariance `P̄(ω)` of the LoS update for a given ω.
///
/// At `ω = 1` the prior is returned unchanged.
pub fn los_bound_covariance(
    p_i: &Covariance,
    p_j: &Covariance,
    jac: &RangeJacobians,
    r: f64,
    omega: f64,
) -> Result<Covariance> {
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::InvalidParameter("omega outside (0, 1]"));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParameter("measurement variance must be positive"));
    }
    if omega == 1.0 {
        return Ok(p_i.clone());
    }
    let b = target_spread(p_j.matrix(), &jac.h_j)?;
    let bound = RankOneBound::new(p_i.matrix(), &jac.h_i, b, r, None, 0.0, BiasScaling::Fixed)?;
    let (_, p_bar, _) = bound.evaluate(omega)?;
    Covariance::new(p_bar)
}

/// LoS update against an already linearized range model.
pub fn los_update(
    prior: &Belief,
    p_j: &Covariance,
    jac: &RangeJacobians,
    z: f64,
    r: f64,
    search: &OmegaSearch,
) -> Result<UpdateOutcome> {
    if !z.is_finite() {
        return Err(Error::NonFinite("range"));
    }
    let b = target_spread(p_j.matrix(), &jac.h_j)?;
    let bound = RankOneBound::new(prior.p.matrix(), &jac.h_i, b, r, None, 0.0, BiasScaling::Fixed)?;
    let omega = bound.choose_omega(search)?;
    let innovation = z - jac.z_hat;
    finish(prior, &bound, omega, innovation, search)
}

/// LoS correction of agent i's belief with a range to agent j.
pub fn los_correct(
    bel_i: &Belief,
    bel_j: &Belief,
    z: f64,
    r: f64,
    search: &OmegaSearch,
) -> Result<UpdateOutcome> {
    let jac = range_linearize(bel_i, RangeTarget::Agent(bel_j))?;
    los_update(bel_i, &bel_j.p, &jac, z, r, search)
}

/// Build the outcome at the chosen ω. At `ω = 1` the prior is kept, and the
/// likelihood is evaluated with the innovation variance at the upper end of
/// the search interval (the exact limit diverges).
pub(crate) fn finish(
    prior: &Belief,
    bound: &RankOneBound,
    omega: f64,
    innovation: f64,
    search: &OmegaSearch,
) -> Result<UpdateOutcome> {
    if omega >= 1.0 {
        let s = bound.innovation_var(search.hi);
        if !(s > crate::bound::MIN_INNOVATION_VAR) || !s.is_finite() {
            return Err(Error::Numerical("innovation variance is not positive"));
        }
        return Ok(UpdateOutcome {
            belief: prior.clone(),
            omega_star: 1.0,
            gain: DVector::zeros(prior.dim()),
            innovation,
            innovation_var: s,
            likelihood: gaussian_likelihood(innovation, s)?,
        });
    }
    let (k, p_bar, s) = bound.evaluate(omega)?;
    let x = prior.x_hat.corrected(&(&k * innovation))?;
    Ok(UpdateOutcome {
        belief: Belief::new(x, Covariance::new(p_bar)?, prior.stamp)?,
        omega_star: omega,
        gain: k,
        innovation,
        innovation_var: s,
        likelihood: gaussian_likelihood(innovation, s)?,
    })
}
