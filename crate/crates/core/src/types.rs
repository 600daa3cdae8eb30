//! Domain types shared by the filter modules.
//!
//! All types are plain values. Constructors validate their invariants so the
//! update kernels can assume finite inputs with consistent dimensions.

use alloc::collections::BTreeMap;
use core::f64::consts::PI;
use core::fmt;
use core::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below this are reported as a real PSD violation rather than round-off.
pub const PSD_TOLERANCE: f64 = 1e-9;

static PSD_CLIP_EVENTS: AtomicUsize = AtomicUsize::new(0);

/// Number of covariance constructions that had to clip a negative eigenvalue
/// below `-PSD_TOLERANCE` since process start.
pub fn psd_clip_events() -> usize {
    PSD_CLIP_EVENTS.load(Ordering::Relaxed)
}

/// Identifier of a UWB node (agent or beacon).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Wrap an angle to (-π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = libm::remainder(theta, 2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// State estimate. The first two entries are the planar position; `heading`
/// marks the entry (if any) that holds an angle and is kept wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    entries: DVector<f64>,
    heading: Option<usize>,
}

impl StateVector {
    pub fn new(entries: DVector<f64>) -> Result<Self> {
        Self::with_heading(entries, None)
    }

    pub fn with_heading(mut entries: DVector<f64>, heading: Option<usize>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state vector"));
        }
        if let Some(idx) = heading {
            if idx >= entries.len() {
                return Err(Error::InvalidParameter("heading index out of range"));
            }
            entries[idx] = wrap_angle(entries[idx]);
        }
        Ok(Self { entries, heading })
    }

    /// Planar pose `(x, y, θ)` with θ at index 2.
    pub fn pose(x: f64, y: f64, theta: f64) -> Result<Self> {
        Self::with_heading(DVector::from_vec(alloc::vec![x, y, theta]), Some(2))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.entries
    }

    pub fn heading_index(&self) -> Option<usize> {
        self.heading
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    /// Planar position, if the state carries one.
    pub fn position(&self) -> Option<[f64; 2]> {
        (self.entries.len() >= 2).then(|| [self.entries[0], self.entries[1]])
    }

    /// `self + delta`, re-wrapping the heading entry.
    pub fn corrected(&self, delta: &DVector<f64>) -> Result<Self> {
        if delta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "state correction",
                expected: self.dim(),
                found: delta.len(),
            });
        }
        Self::with_heading(&self.entries + delta, self.heading)
    }

    /// Replace the raw entries, keeping the heading convention.
    pub fn with_entries(&self, entries: DVector<f64>) -> Result<Self> {
        if entries.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "state entries",
                expected: self.dim(),
                found: entries.len(),
            });
        }
        Self::with_heading(entries, self.heading)
    }

    /// Error `truth - self` with the heading difference wrapped.
    pub fn error_from(&self, truth: &StateVector) -> DVector<f64> {
        let mut e = &truth.entries - &self.entries;
        if let Some(idx) = self.heading {
            e[idx] = wrap_angle(e[idx]);
        }
        e
    }
}

/// Symmetric positive semidefinite error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance(DMatrix<f64>);

impl Covariance {
    /// Symmetrize `raw` and clip negative eigenvalues to zero.
    pub fn new(raw: DMatrix<f64>) -> Result<Self> {
        if !raw.is_square() {
            return Err(Error::NotSquare {
                rows: raw.nrows(),
                cols: raw.ncols(),
            });
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance"));
        }
        let sym = (&raw + raw.transpose()) * 0.5;
        if sym.nrows() == 0 {
            return Ok(Self(sym));
        }
        let eig = sym.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min >= 0.0 {
            return Ok(Self(sym));
        }
        if min < -PSD_TOLERANCE {
            PSD_CLIP_EVENTS.fetch_add(1, Ordering::Relaxed);
        }
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let v = &eig.eigenvectors;
        let rebuilt = v * DMatrix::from_diagonal(&clipped) * v.transpose();
        Ok(Self((&rebuilt + rebuilt.transpose()) * 0.5))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }
}

/// Shared PSD check: symmetric within `1e-9` and no eigenvalue below `-1e-9`.
pub fn is_symmetric_psd(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return false;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min() >= -PSD_TOLERANCE * scale
}

/// Local belief `(x̂, P)` of one agent at a time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub x_hat: StateVector,
    pub p: Covariance,
    pub stamp: u64,
}

impl Belief {
    pub fn new(x_hat: StateVector, p: Covariance, stamp: u64) -> Result<Self> {
        if x_hat.dim() != p.dim() {
            return Err(Error::DimensionMismatch {
                what: "belief",
                expected: x_hat.dim(),
                found: p.dim(),
            });
        }
        Ok(Self { x_hat, p, stamp })
    }

    pub fn dim(&self) -> usize {
        self.x_hat.dim()
    }

    pub fn position(&self) -> Option<[f64; 2]> {
        self.x_hat.position()
    }
}

/// How the NLoS bias mean enters the predicted measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasHandling {
    /// `b̂ = 0`, `B = φ̄² + Φ`: the bias second moment absorbs the mean.
    #[default]
    SecondMoment,
    /// `b̂ = φ̄`, `B = Φ`, predicted range is `h + φ̄`.
    MeanSubtracted,
}

/// NLoS range bias of one observing agent, carried as a Schmidt (consider) state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasModel {
    /// Mean of the NLoS bias (m).
    pub phi_bar: f64,
    /// Variance of the NLoS bias (m²).
    pub phi: f64,
    /// Bias estimate (m); never updated by measurements.
    pub b_hat: f64,
    /// Second moment of the bias about `b_hat` (m²).
    pub b_var: f64,
}

impl BiasModel {
    pub fn new(phi_bar: f64, phi: f64, handling: BiasHandling) -> Result<Self> {
        if !phi_bar.is_finite() || !phi.is_finite() {
            return Err(Error::NonFinite("bias parameters"));
        }
        if phi <= 0.0 {
            return Err(Error::InvalidParameter("bias variance must be positive"));
        }
        Ok(match handling {
            BiasHandling::SecondMoment => Self {
                phi_bar,
                phi,
                b_hat: 0.0,
                b_var: phi_bar * phi_bar + phi,
            },
            BiasHandling::MeanSubtracted => Self {
                phi_bar,
                phi,
                b_hat: phi_bar,
                b_var: phi,
            },
        })
    }
}

/// State-bias cross-covariances `C^{il}` held by agent `owner`, keyed by the
/// agent `l` whose measurement bias they correlate with.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasBook {
    pub owner: NodeId,
    dim: usize,
    entries: BTreeMap<NodeId, DVector<f64>>,
}

impl BiasBook {
    /// All-zero book over `agents` (the initial condition `C^{il}(0) = 0`).
    pub fn zeros(owner: NodeId, agents: impl IntoIterator<Item = NodeId>, dim: usize) -> Self {
        let entries = agents
            .into_iter()
            .map(|l| (l, DVector::zeros(dim)))
            .collect();
        Self {
            owner,
            dim,
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, agent: NodeId) -> Option<&DVector<f64>> {
        self.entries.get(&agent)
    }

    /// Entry for `agent`, or zeros when absent.
    pub fn get_or_zero(&self, agent: NodeId) -> DVector<f64> {
        self.entries
            .get(&agent)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.dim))
    }

    pub fn set(&mut self, agent: NodeId, value: DVector<f64>) -> Result<()> {
        if value.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "bias book entry",
                expected: self.dim,
                found: value.len(),
            });
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bias book entry"));
        }
        self.entries.insert(agent, value);
        Ok(())
    }

    /// Own-bias entry `C^{ii}`.
    pub fn own(&self) -> DVector<f64> {
        self.get_or_zero(self.owner)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &DVector<f64>)> {
        self.entries.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Apply `f` to every entry.
    pub fn map(&self, mut f: impl FnMut(NodeId, &DVector<f64>) -> DVector<f64>) -> Self {
        Self {
            owner: self.owner,
            dim: self.dim,
            entries: self.entries.iter().map(|(k, v)| (*k, f(*k, v))).collect(),
        }
    }
}

/// Normalized LoS/NLoS probabilities of a single range measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeProbabilities {
    pub p_los: f64,
    pub p_nlos: f64,
}

impl ModeProbabilities {
    pub const LOS: Self = Self {
        p_los: 1.0,
        p_nlos: 0.0,
    };
    pub const NLOS: Self = Self {
        p_los: 0.0,
        p_nlos: 1.0,
    };

    pub fn from_nlos(p_nlos: f64) -> Result<Self> {
        if !p_nlos.is_finite() {
            return Err(Error::NonFinite("mode probability"));
        }
        if !(0.0..=1.0).contains(&p_nlos) {
            return Err(Error::InvalidParameter("mode probability outside [0, 1]"));
        }
        Ok(Self {
            p_los: 1.0 - p_nlos,
            p_nlos,
        })
    }

    /// Normalize a pair of non-negative weights.
    pub fn normalized(w_los: f64, w_nlos: f64) -> Result<Self> {
        let total = w_los + w_nlos;
        if !(total.is_finite() && total > 0.0 && w_los >= 0.0 && w_nlos >= 0.0) {
            return Err(Error::InvalidParameter("mode weights"));
        }
        // Keep exact 0/1 endpoints so single-mode inputs stay bitwise single-mode.
        if w_nlos == 0.0 {
            return Ok(Self::LOS);
        }
        if w_los == 0.0 {
            return Ok(Self::NLOS);
        }
        Self::from_nlos(w_nlos / total)
    }

    pub fn is_normalized(&self) -> bool {
        (0.0..=1.0).contains(&self.p_los)
            && (0.0..=1.0).contains(&self.p_nlos)
            && libm::fabs(self.p_los + self.p_nlos - 1.0) <= 1e-12
    }
}

/// A single ranging event taken by `observer` towards `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeMeasurement {
    pub observer: NodeId,
    pub target: NodeId,
    /// Measured range (m).
    pub z: f64,
    /// Received-signal power metric (dB).
    pub power_metric: f64,
    pub stamp: u64,
}

impl RangeMeasurement {
    pub fn new(
        observer: NodeId,
        target: NodeId,
        z: f64,
        power_metric: f64,
        stamp: u64,
    ) -> Result<Self> {
        if observer == target {
            return Err(Error::InvalidParameter("observer and target coincide"));
        }
        if !z.is_finite() || !power_metric.is_finite() {
            return Err(Error::NonFinite("range measurement"));
        }
        if z < 0.0 {
            return Err(Error::InvalidParameter("negative range"));
        }
        Ok(Self {
            observer,
            target,
            z,
            power_metric,
            stamp,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Agent,
    Beacon { position: [f64; 2] },
}

/// Result of one mode-conditioned correction.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub belief: Belief,
    /// Chosen split parameter; `1.0` means the measurement was not applied.
    pub omega_star: f64,
    pub gain: DVector<f64>,
    pub innovation: f64,
    pub innovation_var: f64,
    pub likelihood: f64,
}
