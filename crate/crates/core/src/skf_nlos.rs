//! NLoS range updates with the measurement bias carried as a Schmidt
//! (consider) state.
//!
//! The bias estimate `b̂` and its second moment `B` are never corrected; only
//! their correlation with the agent state, the book of `C^{il}` terms, evolves.

use nalgebra::{DMatrix, DVector};

use crate::bound::{BiasScaling, RankOneBound, MIN_INNOVATION_VAR};
use crate::dmv_los::{finish, range_linearize, RangeJacobians, RangeTarget};
use crate::error::{Error, Result};
use crate::imm::gaussian_likelihood;
use crate::omega::OmegaSearch;
use crate::types::{Belief, BiasBook, BiasModel, Covariance, UpdateOutcome};

/// Propagate every state-bias cross-covariance through the motion Jacobian.
pub fn predict_bias(book: &BiasBook, f: &DMatrix<f64>) -> Result<BiasBook> {
    if f.nrows() != book.dim() || f.ncols() != book.dim() {
        return Err(Error::DimensionMismatch {
            what: "motion jacobian",
            expected: book.dim(),
            found: f.nrows(),
        });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("motion jacobian"));
    }
    Ok(book.map(|_, c| f * c))
}

/// Output of a full NLoS update.
#[derive(Debug, Clone, PartialEq)]
pub struct NlosOutcome {
    pub outcome: UpdateOutcome,
    pub book: BiasBook,
    /// Cross-covariance entries of the target's book that were absent and taken as zero.
    pub missing_cross_terms: usize,
}

fn check_target_entry(c: &DVector<f64>, n_j: usize) -> Result<()> {
    if c.len() != n_j {
        return Err(Error::DimensionMismatch {
            what: "target bias book",
            expected: n_j,
            found: c.len(),
        });
    }
    Ok(())
}

/// `(I − K Hᵢ) c`
fn project(c: &DVector<f64>, k: &DVector<f64>, h_i: &DVector<f64>) -> DVector<f64> {
    c - k * h_i.dot(c)
}

/// NLoS update against an already linearized range model.
///
/// `book_j` is the bias book transmitted by the target agent; `None` (or
/// missing keys) is treated as zero and counted.
#[allow(clippy::too_many_arguments)]
pub fn nlos_update(
    prior: &Belief,
    p_j: &Covariance,
    jac: &RangeJacobians,
    bias: &BiasModel,
    book_i: &BiasBook,
    book_j: Option<&BiasBook>,
    z: f64,
    r: f64,
    search: &OmegaSearch,
) -> Result<NlosOutcome> {
    if !z.is_finite() {
        return Err(Error::NonFinite("range"));
    }
    if book_i.dim() != prior.dim() {
        return Err(Error::DimensionMismatch {
            what: "own bias book",
            expected: prior.dim(),
            found: book_i.dim(),
        });
    }
    let n_j = jac.h_j.len();
    if p_j.dim() != n_j {
        return Err(Error::DimensionMismatch {
            what: "target covariance",
            expected: n_j,
            found: p_j.dim(),
        });
    }
    let owner = book_i.owner;
    let mut missing = 0;
    let mut target_entry = |l| match book_j.and_then(|b| b.get(l)) {
        Some(c) => {
            check_target_entry(c, n_j)?;
            Ok(c.clone())
        }
        None => {
            missing += 1;
            Ok(DVector::zeros(n_j))
        }
    };

    let c_ii = book_i.own();
    let c_ji = target_entry(owner)?;
    let hjc_ji = jac.h_j.dot(&c_ji);
    let b = jac.h_j.dot(&(p_j.matrix() * &jac.h_j));
    let bound = RankOneBound::new(
        prior.p.matrix(),
        &jac.h_i,
        b,
        r,
        Some(&c_ii),
        2.0 * hjc_ji + bias.b_var,
        BiasScaling::Fixed,
    )?;
    let omega = bound.choose_omega(search)?;
    let innovation = z - (jac.z_hat + bias.b_hat);
    let outcome = finish(prior, &bound, omega, innovation, search)?;

    let k = &outcome.gain;
    let mut book = book_i.clone();
    for l in book_i.keys().collect::<alloc::vec::Vec<_>>() {
        let c_il = book_i.get_or_zero(l);
        let updated = if l == owner {
            project(&c_il, k, &jac.h_i) - k * hjc_ji - k * bias.b_var
        } else {
            let c_jl = target_entry(l)?;
            project(&c_il, k, &jac.h_i) - k * jac.h_j.dot(&c_jl)
        };
        book.set(l, updated)?;
    }
    Ok(NlosOutcome {
        outcome,
        book,
        missing_cross_terms: missing,
    })
}

/// NLoS correction of agent i with a range to agent j, using agent j's
/// transmitted bias book.
#[allow(clippy::too_many_arguments)]
pub fn nlos_correct(
    bel_i: &Belief,
    bel_j: &Belief,
    bias: &BiasModel,
    book_i: &BiasBook,
    book_j: Option<&BiasBook>,
    z: f64,
    r: f64,
    search: &OmegaSearch,
) -> Result<NlosOutcome> {
    let jac = range_linearize(bel_i, RangeTarget::Agent(bel_j))?;
    nlos_update(bel_i, &bel_j.p, &jac, bias, book_i, book_j, z, r, search)
}

/// Compact NLoS update: the own `(state, bias)` block is scaled by `1/ω` as a
/// whole, so neither the inter-agent cross-covariance nor the target's bias
/// book is needed. Only `C^{ii}` is maintained.
#[allow(clippy::too_many_arguments)]
pub fn nlos_update_compact(
    prior: &Belief,
    p_j: &Covariance,
    jac: &RangeJacobians,
    bias: &BiasModel,
    c_ii: &DVector<f64>,
    z: f64,
    r: f64,
    search: &OmegaSearch,
) -> Result<(UpdateOutcome, DVector<f64>)> {
    if !z.is_finite() {
        return Err(Error::NonFinite("range"));
    }
    if p_j.dim() != jac.h_j.len() {
        return Err(Error::DimensionMismatch {
            what: "target covariance",
            expected: jac.h_j.len(),
            found: p_j.dim(),
        });
    }
    let b = jac.h_j.dot(&(p_j.matrix() * &jac.h_j));
    let bound = RankOneBound::new(
        prior.p.matrix(),
        &jac.h_i,
        b,
        r,
        Some(c_ii),
        bias.b_var,
        BiasScaling::WithState,
    )?;
    let omega = bound.choose_omega(search)?;
    let innovation = z - (jac.z_hat + bias.b_hat);
    let outcome = finish(prior, &bound, omega, innovation, search)?;
    let k = &outcome.gain;
    let c_next = (project(c_ii, k, &jac.h_i) - k * bias.b_var) / outcome.omega_star;
    Ok((outcome, c_next))
}

pub fn nlos_correct_compact(
    bel_i: &Belief,
    bel_j: &Belief,
    bias: &BiasModel,
    c_ii: &DVector<f64>,
    z: f64,
    r: f64,
    search: &OmegaSearch,
) -> Result<(UpdateOutcome, DVector<f64>)> {
    let jac = range_linearize(bel_i, RangeTarget::Agent(bel_j))?;
    nlos_update_compact(bel_i, &bel_j.p, &jac, bias, c_ii, z, r, search)
}

fn scalar_innovation_var(s: f64) -> Result<f64> {
    if s > MIN_INNOVATION_VAR && s.is_finite() {
        Ok(s)
    } else {
        Err(Error::Numerical("innovation variance is not positive"))
    }
}

/// Standard first-order update against a beacon at a known position, with
/// the covariance in Joseph form.
pub fn beacon_los_update(prior: &Belief, jac: &RangeJacobians, z: f64, r: f64) -> Result<UpdateOutcome> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter("measurement variance must be positive"));
    }
    let p = prior.p.matrix();
    let ph = p * &jac.h_i;
    let s = scalar_innovation_var(jac.h_i.dot(&ph) + r)?;
    let k = &ph / s;
    let innovation = z - jac.z_hat;
    let n = prior.dim();
    let i_kh = DMatrix::identity(n, n) - &k * jac.h_i.transpose();
    let p_next = &i_kh * p * i_kh.transpose() + (&k * k.transpose()) * r;
    let x = prior.x_hat.corrected(&(&k * innovation))?;
    Ok(UpdateOutcome {
        belief: Belief::new(x, Covariance::new(p_next)?, prior.stamp)?,
        omega_star: 1.0,
        gain: k,
        innovation,
        innovation_var: s,
        likelihood: gaussian_likelihood(innovation, s)?,
    })
}

pub fn beacon_los_correct(bel_i: &Belief, beacon: [f64; 2], z: f64, r: f64) -> Result<UpdateOutcome> {
    let jac = range_linearize(bel_i, RangeTarget::Beacon(beacon))?;
    beacon_los_update(bel_i, &jac, z, r)
}

/// Schmidt update against a beacon; only `C^{ii}` changes.
pub fn beacon_nlos_update(
    prior: &Belief,
    jac: &RangeJacobians,
    bias: &BiasModel,
    c_ii: &DVector<f64>,
    z: f64,
    r: f64,
) -> Result<(UpdateOutcome, DVector<f64>)> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter("measurement variance must be positive"));
    }
    if c_ii.len() != prior.dim() {
        return Err(Error::DimensionMismatch {
            what: "state-bias cross-covariance",
            expected: prior.dim(),
            found: c_ii.len(),
        });
    }
    let p = prior.p.matrix();
    let u = p * &jac.h_i + c_ii;
    let s = scalar_innovation_var(jac.h_i.dot(&(p * &jac.h_i)) + 2.0 * jac.h_i.dot(c_ii) + bias.b_var + r)?;
    let k = &u / s;
    let innovation = z - (jac.z_hat + bias.b_hat);
    let p_next = p - (&u * u.transpose()) / s;
    let c_next = project(c_ii, &k, &jac.h_i) - &k * bias.b_var;
    let x = prior.x_hat.corrected(&(&k * innovation))?;
    Ok((
        UpdateOutcome {
            belief: Belief::new(x, Covariance::new(p_next)?, prior.stamp)?,
            omega_star: 1.0,
            gain: k,
            innovation,
            innovation_var: s,
            likelihood: gaussian_likelihood(innovation, s)?,
        },
        c_next,
    ))
}

pub fn beacon_nlos_correct(
    bel_i: &Belief,
    bias: &BiasModel,
    c_ii: &DVector<f64>,
    beacon: [f64; 2],
    z: f64,
    r: f64,
) -> Result<(UpdateOutcome, DVector<f64>)> {
    let jac = range_linearize(bel_i, RangeTarget::Beacon(beacon))?;
    beacon_nlos_update(bel_i, &jac, bias, c_ii, z, r)
}
