//! Planar unicycle dead reckoning.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::{Belief, Covariance, StateVector};

/// Measured forward speed (m/s) and turn rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Odometry {
    pub v: f64,
    pub omega: f64,
}

/// Standard deviations of the odometry noise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdometryNoise {
    pub sigma_v: f64,
    pub sigma_omega: f64,
}

fn pose_entries(x: &DVector<f64>) -> Result<(f64, f64, f64)> {
    if x.len() != 3 {
        return Err(Error::DimensionMismatch {
            what: "unicycle pose",
            expected: 3,
            found: x.len(),
        });
    }
    Ok((x[0], x[1], x[2]))
}

/// `f(x, u)`: one Euler step of the unicycle. The heading is not wrapped here.
pub fn unicycle_step(x: &DVector<f64>, u: Odometry, dt: f64) -> Result<DVector<f64>> {
    let (px, py, th) = pose_entries(x)?;
    let (s, c) = libm::sincos(th);
    Ok(DVector::from_vec(alloc::vec![
        px + u.v * dt * c,
        py + u.v * dt * s,
        th + u.omega * dt,
    ]))
}

/// `∂f/∂x`
pub fn motion_jacobian(x: &DVector<f64>, u: Odometry, dt: f64) -> Result<DMatrix<f64>> {
    let (_, _, th) = pose_entries(x)?;
    let (s, c) = libm::sincos(th);
    let mut f = DMatrix::identity(3, 3);
    f[(0, 2)] = -u.v * dt * s;
    f[(1, 2)] = u.v * dt * c;
    Ok(f)
}

/// `∂f/∂u`
pub fn input_jacobian(x: &DVector<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let (_, _, th) = pose_entries(x)?;
    let (s, c) = libm::sincos(th);
    let mut g = DMatrix::zeros(3, 2);
    g[(0, 0)] = dt * c;
    g[(1, 0)] = dt * s;
    g[(2, 1)] = dt;
    Ok(g)
}

/// Propagate a pose belief with measured odometry:
/// `x̂⁺ = f(x̂, u)`, `P⁺ = F P Fᵀ + G Q Gᵀ`. Returns the new belief (stamp
/// advanced by one) and `F`, which also drives the bias-book propagation.
pub fn propagate_dead_reckoning(
    bel: &Belief,
    u: Odometry,
    noise: OdometryNoise,
    dt: f64,
) -> Result<(Belief, DMatrix<f64>)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter("dt must be positive"));
    }
    if !(u.v.is_finite() && u.omega.is_finite()) {
        return Err(Error::NonFinite("odometry"));
    }
    if !(noise.sigma_v >= 0.0 && noise.sigma_omega >= 0.0) {
        return Err(Error::InvalidParameter("odometry noise must be non-negative"));
    }
    let x = bel.x_hat.as_vector();
    let f = motion_jacobian(x, u, dt)?;
    let g = input_jacobian(x, dt)?;
    let q = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![
        noise.sigma_v * noise.sigma_v,
        noise.sigma_omega * noise.sigma_omega,
    ]));
    let p = &f * bel.p.matrix() * f.transpose() + &g * q * g.transpose();
    let next = StateVector::with_heading(unicycle_step(x, u, dt)?, Some(2))?;
    Ok((Belief::new(next, Covariance::new(p)?, bel.stamp + 1)?, f))
}
