//! Two-mode (LoS/NLoS) interacting-multiple-model correction.
//!
//! Mode probabilities come from the discriminator and do not depend on the
//! modal history, so the mixing and mode-conditioned propagation stages of a
//! general IMM cycle reduce to identity: both mode-matched updates start from
//! the same propagated belief. What remains per measurement is
//! update-both, evolve probabilities, and moment-match.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DVector;

use crate::dmv_los::{los_update, range_linearize, RangeJacobians, RangeTarget};
use crate::error::{Error, Result};
use crate::omega::OmegaSearch;
use crate::skf_nlos::{beacon_los_update, beacon_nlos_update, nlos_update, nlos_update_compact};
use crate::types::{Belief, BiasBook, BiasModel, Covariance, ModeProbabilities, NodeId, UpdateOutcome};

/// Denominators below this are treated as likelihood underflow.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// Scalar Gaussian density of an innovation with variance `s`.
pub fn gaussian_likelihood(innovation: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Numerical("innovation variance is not positive"));
    }
    if !innovation.is_finite() {
        return Err(Error::NonFinite("innovation"));
    }
    Ok(libm::exp(-innovation * innovation / (2.0 * s)) / libm::sqrt(2.0 * PI * s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEvolution {
    pub posterior: ModeProbabilities,
    /// Set when both weighted likelihoods underflowed and the prior was kept.
    pub underflow: bool,
}

/// Bayes update of the mode probabilities with the mode-matched likelihoods.
pub fn evolve_mode_probabilities(
    prior: ModeProbabilities,
    likelihood_los: f64,
    likelihood_nlos: f64,
) -> Result<ModeEvolution> {
    if !(likelihood_los >= 0.0 && likelihood_nlos >= 0.0) {
        return Err(Error::InvalidParameter("likelihoods must be non-negative"));
    }
    let w_los = likelihood_los * prior.p_los;
    let w_nlos = likelihood_nlos * prior.p_nlos;
    let total = w_los + w_nlos;
    if !(total >= LIKELIHOOD_FLOOR) || !total.is_finite() {
        return Ok(ModeEvolution {
            posterior: prior,
            underflow: true,
        });
    }
    Ok(ModeEvolution {
        posterior: ModeProbabilities::normalized(w_los, w_nlos)?,
        underflow: false,
    })
}

/// Moment-matched mixture of the two mode-conditioned beliefs.
///
/// Returns the combined belief and the spread-of-means term
/// `Σ wₙ (x̂ₙ − x̂)(x̂ₙ − x̂)ᵀ`.
pub fn combine(
    out_los: &UpdateOutcome,
    out_nlos: &UpdateOutcome,
    posterior: ModeProbabilities,
) -> Result<(Belief, Covariance)> {
    let n = out_los.belief.dim();
    if out_nlos.belief.dim() != n {
        return Err(Error::DimensionMismatch {
            what: "mode-conditioned beliefs",
            expected: n,
            found: out_nlos.belief.dim(),
        });
    }
    if posterior.p_nlos == 0.0 {
        return Ok((out_los.belief.clone(), Covariance::zeros(n)));
    }
    if posterior.p_los == 0.0 {
        return Ok((out_nlos.belief.clone(), Covariance::zeros(n)));
    }
    let x_los = &out_los.belief.x_hat;
    let x_nlos = &out_nlos.belief.x_hat;
    // Offsets are taken with the heading difference wrapped.
    let los_to_nlos = x_los.error_from(x_nlos);
    let x = x_los.corrected(&(&los_to_nlos * posterior.p_nlos))?;
    let d_los = x.error_from(x_los);
    let d_nlos = x.error_from(x_nlos);
    let spread = (&d_los * d_los.transpose()) * posterior.p_los + (&d_nlos * d_nlos.transpose()) * posterior.p_nlos;
    let p = out_los.belief.p.matrix() * posterior.p_los + out_nlos.belief.p.matrix() * posterior.p_nlos + &spread;
    Ok((
        Belief::new(x, Covariance::new(p)?, out_los.belief.stamp)?,
        Covariance::new(spread)?,
    ))
}

/// How mode-conditioned bias books are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombineRule {
    /// `C⁺ = p_nlos · C⁺_nlos`.
    #[default]
    PaperLiteral,
    /// `C⁺ = p_los · C_los + p_nlos · C⁺_nlos`.
    Mixture,
}

pub fn combine_bias_book(
    book_los: &BiasBook,
    book_nlos: &BiasBook,
    posterior: ModeProbabilities,
    rule: CombineRule,
) -> BiasBook {
    match rule {
        CombineRule::PaperLiteral => book_nlos.map(|_, c| c * posterior.p_nlos),
        CombineRule::Mixture => book_nlos.map(|l, c| {
            let c_los = book_los.get_or_zero(l);
            c_los * posterior.p_los + c * posterior.p_nlos
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImmConfig {
    pub combine_rule: CombineRule,
    /// Use the compact NLoS update (no bias book exchange).
    pub compact: bool,
    pub search: OmegaSearch,
}

impl Default for ImmConfig {
    fn default() -> Self {
        Self {
            combine_rule: CombineRule::PaperLiteral,
            compact: false,
            search: OmegaSearch::default(),
        }
    }
}

/// The other node of a range measurement, as seen by the observer.
#[derive(Debug, Clone, Copy)]
pub enum ImmTarget<'a> {
    Agent {
        id: NodeId,
        belief: &'a Belief,
        /// Bias book transmitted by the target; needed only by the full NLoS update.
        book: Option<&'a BiasBook>,
    },
    Beacon {
        id: NodeId,
        position: [f64; 2],
    },
}

impl ImmTarget<'_> {
    pub fn id(&self) -> NodeId {
        match self {
            ImmTarget::Agent { id, .. } | ImmTarget::Beacon { id, .. } => *id,
        }
    }

    fn range_target(&self) -> RangeTarget<'_> {
        match self {
            ImmTarget::Agent { belief, .. } => RangeTarget::Agent(belief),
            ImmTarget::Beacon { position, .. } => RangeTarget::Beacon(*position),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Los,
    Nlos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImmDiagnostics {
    pub prior_modes: ModeProbabilities,
    pub posterior_modes: ModeProbabilities,
    pub los: Option<UpdateOutcome>,
    pub nlos: Option<UpdateOutcome>,
    pub spread: Covariance,
    pub likelihood_underflow: bool,
    /// Mode whose branch failed numerically and was dropped.
    pub failed_branch: Option<Mode>,
    pub missing_cross_terms: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImmStep {
    pub belief: Belief,
    pub book: BiasBook,
    pub diagnostics: ImmDiagnostics,
}

fn los_branch(
    prior: &Belief,
    book: &BiasBook,
    target: &ImmTarget<'_>,
    jac: &RangeJacobians,
    z: f64,
    r: f64,
    search: &OmegaSearch,
) -> Result<(UpdateOutcome, BiasBook)> {
    let out = match target {
        ImmTarget::Agent { belief, .. } => los_update(prior, &belief.p, jac, z, r, search)?,
        ImmTarget::Beacon { .. } => beacon_los_update(prior, jac, z, r)?,
    };
    // The LoS exchange carries no bias book, so only the own-state projection applies.
    let k = &out.gain;
    let projected = book.map(|_, c| c - k * jac.h_i.dot(c));
    Ok((out, projected))
}

#[allow(clippy::too_many_arguments)]
fn nlos_branch(
    prior: &Belief,
    bias: &BiasModel,
    book: &BiasBook,
    target: &ImmTarget<'_>,
    jac: &RangeJacobians,
    z: f64,
    r: f64,
    config: &ImmConfig,
) -> Result<(UpdateOutcome, BiasBook, usize)> {
    let with_own = |c: DVector<f64>| -> Result<BiasBook> {
        let mut b = book.clone();
        b.set(book.owner, c)?;
        Ok(b)
    };
    match target {
        ImmTarget::Agent { belief, book: book_j, .. } => {
            if config.compact {
                let (out, c) =
                    nlos_update_compact(prior, &belief.p, jac, bias, &book.own(), z, r, &config.search)?;
                Ok((out, with_own(c)?, 0))
            } else {
                let res = nlos_update(prior, &belief.p, jac, bias, book, *book_j, z, r, &config.search)?;
                Ok((res.outcome, res.book, res.missing_cross_terms))
            }
        }
        ImmTarget::Beacon { .. } => {
            let (out, c) = beacon_nlos_update(prior, jac, bias, &book.own(), z, r)?;
            Ok((out, with_own(c)?, 0))
        }
    }
}

/// One IMM correction of agent i's belief with a single range measurement.
///
/// Modes with zero prior probability are not evaluated, so certain modes give
/// exactly the corresponding single-mode update. If one evaluated branch fails
/// numerically, the other takes full weight.
#[allow(clippy::too_many_arguments)]
pub fn process_measurement(
    prior: &Belief,
    bias: &BiasModel,
    book: &BiasBook,
    target: &ImmTarget<'_>,
    z: f64,
    modes: ModeProbabilities,
    r: f64,
    config: &ImmConfig,
) -> Result<ImmStep> {
    if !modes.is_normalized() {
        return Err(Error::InvalidParameter("mode probabilities are not normalized"));
    }
    let jac = range_linearize(prior, target.range_target())?;
    let n = prior.dim();

    let los = (modes.p_los > 0.0).then(|| los_branch(prior, book, target, &jac, z, r, &config.search));
    let nlos = (modes.p_nlos > 0.0).then(|| nlos_branch(prior, bias, book, target, &jac, z, r, config));

    let mut diag = ImmDiagnostics {
        prior_modes: modes,
        posterior_modes: modes,
        los: None,
        nlos: None,
        spread: Covariance::zeros(n),
        likelihood_underflow: false,
        failed_branch: None,
        missing_cross_terms: 0,
    };

    match (los, nlos) {
        (Some(Ok((l, l_book))), Some(Ok((m, m_book, missing)))) => {
            let evo = evolve_mode_probabilities(modes, l.likelihood, m.likelihood)?;
            let (belief, spread) = combine(&l, &m, evo.posterior)?;
            let book = combine_bias_book(&l_book, &m_book, evo.posterior, config.combine_rule);
            diag.posterior_modes = evo.posterior;
            diag.likelihood_underflow = evo.underflow;
            diag.spread = spread;
            diag.missing_cross_terms = missing;
            diag.los = Some(l);
            diag.nlos = Some(m);
            Ok(ImmStep {
                belief,
                book,
                diagnostics: diag,
            })
        }
        (Some(Ok((l, l_book))), failed) => {
            if let Some(Err(_)) = failed {
                diag.failed_branch = Some(Mode::Nlos);
            }
            diag.posterior_modes = ModeProbabilities::LOS;
            let book = combine_bias_book(&l_book, book, ModeProbabilities::LOS, config.combine_rule);
            let belief = l.belief.clone();
            diag.los = Some(l);
            Ok(ImmStep {
                belief,
                book,
                diagnostics: diag,
            })
        }
        (failed, Some(Ok((m, m_book, missing)))) => {
            if let Some(Err(_)) = failed {
                diag.failed_branch = Some(Mode::Los);
            }
            diag.posterior_modes = ModeProbabilities::NLOS;
            diag.missing_cross_terms = missing;
            let book = combine_bias_book(book, &m_book, ModeProbabilities::NLOS, config.combine_rule);
            let belief = m.belief.clone();
            diag.nlos = Some(m);
            Ok(ImmStep {
                belief,
                book,
                diagnostics: diag,
            })
        }
        (Some(Err(e)), _) | (_, Some(Err(e))) => Err(e),
        (None, None) => Err(Error::InvalidParameter("mode probabilities are not normalized")),
    }
}

/// A measurement queued for sequential processing.
#[derive(Debug, Clone, Copy)]
pub struct SequentialItem<'a> {
    pub z: f64,
    pub stamp: u64,
    pub target: ImmTarget<'a>,
    pub modes: ModeProbabilities,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialOutcome {
    pub belief: Belief,
    pub book: BiasBook,
    /// Per-measurement result in processing order (ascending target id).
    pub steps: Vec<(NodeId, Result<ImmDiagnostics>)>,
}

/// Process concurrent measurements one after another, each starting from the
/// belief produced by the previous one. Items are ordered by ascending target
/// id; a failing item is skipped.
pub fn sequential_update(
    prior: &Belief,
    bias: &BiasModel,
    book: &BiasBook,
    items: &[SequentialItem<'_>],
    r: f64,
    config: &ImmConfig,
) -> Result<SequentialOutcome> {
    if let Some(first) = items.first() {
        if items.iter().any(|it| it.stamp != first.stamp) {
            return Err(Error::InvalidParameter("sequential measurements must share a stamp"));
        }
    }
    let mut order: Vec<&SequentialItem<'_>> = items.iter().collect();
    order.sort_by_key(|it| it.target.id());

    let mut belief = prior.clone();
    let mut current_book = book.clone();
    let mut steps = Vec::with_capacity(order.len());
    for item in order {
        match process_measurement(&belief, bias, &current_book, &item.target, item.z, item.modes, r, config) {
            Ok(step) => {
                belief = step.belief;
                current_book = step.book;
                steps.push((item.target.id(), Ok(step.diagnostics)));
            }
            Err(e) => steps.push((item.target.id(), Err(e))),
        }
    }
    Ok(SequentialOutcome {
        belief,
        book: current_book,
        steps,
    })
}
