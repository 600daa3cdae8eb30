//! Filtering kernels for cooperative localization with UWB ranging.
//!
//! Each agent runs its own dead reckoning and, whenever it ranges to another
//! node, corrects its belief with a two-mode (LoS/NLoS) interacting multiple
//! model update:
//!
//! - [`dmv_los`]: LoS update that bounds the unknown inter-agent
//!   cross-covariance with an ω-weighted block-diagonal matrix.
//! - [`skf_nlos`]: NLoS update with the range bias as a Schmidt consider
//!   state, plus its compact variant and the beacon updates.
//! - [`imm`]: mode probability evolution, moment matching, sequential
//!   processing of concurrent measurements.
//! - [`discriminator`]: power metric to mode probabilities.
//! - [`motion`] and [`geometry`]: planar unicycle propagation and
//!   line-of-sight tests used by simulators.
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]
// `!(x > 0.0)` checks below reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod bound;
pub mod discriminator;
pub mod dmv_los;
pub mod error;
pub mod geometry;
pub mod imm;
pub mod motion;
pub mod omega;
pub mod skf_nlos;
pub mod types;

pub use bound::MIN_INNOVATION_VAR;
pub use error::{Error, Result};
pub use omega::{optimize_omega, OmegaSearch};
pub use types::{
    is_symmetric_psd, psd_clip_events, wrap_angle, Belief, BiasBook, BiasHandling, BiasModel, Covariance,
    ModeProbabilities, NodeId, NodeKind, RangeMeasurement, StateVector, UpdateOutcome,
};
