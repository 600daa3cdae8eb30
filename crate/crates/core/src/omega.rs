//! Scalar minimization of the ω objective: a coarse grid to locate the basin,
//! then golden-section refinement inside the bracketing grid cells.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Search interval and resolution for the split parameter ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaSearch {
    pub lo: f64,
    pub hi: f64,
    pub grid_points: usize,
    /// Final bracket width of the golden-section stage.
    pub tolerance: f64,
}

impl Default for OmegaSearch {
    fn default() -> Self {
        Self {
            lo: 1e-3,
            hi: 1.0 - 1e-3,
            grid_points: 64,
            tolerance: 1e-5,
        }
    }
}

impl OmegaSearch {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && 0.0 < self.lo
            && self.lo < self.hi
            && self.hi < 1.0
            && self.grid_points >= 3
            && self.tolerance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("omega search interval"))
        }
    }
}

struct Best {
    omega: f64,
    value: f64,
}

impl Best {
    fn offer(&mut self, omega: f64, value: f64) {
        if value < self.value || (value == self.value && omega < self.omega) {
            self.omega = omega;
            self.value = value;
        }
    }
}

/// Minimize `objective` over `[search.lo, search.hi]`.
///
/// Non-finite objective values are treated as `+∞`. Ties resolve to the
/// smallest ω. Returns `Error::Optimization` if no finite value is found.
pub fn optimize_omega<F>(mut objective: F, search: &OmegaSearch) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    search.validate()?;
    let mut eval = |w: f64| {
        let v = objective(w);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let n = search.grid_points;
    let step = (search.hi - search.lo) / (n - 1) as f64;
    let grid_at = |k: usize| {
        if k == n - 1 {
            search.hi
        } else {
            search.lo + k as f64 * step
        }
    };

    let mut best = Best {
        omega: f64::INFINITY,
        value: f64::INFINITY,
    };
    let mut best_k = 0;
    for k in 0..n {
        let w = grid_at(k);
        let v = eval(w);
        if v < best.value {
            best_k = k;
        }
        best.offer(w, v);
    }
    if !best.value.is_finite() {
        return Err(Error::Optimization);
    }

    let mut a = grid_at(best_k.saturating_sub(1));
    let mut b = grid_at((best_k + 1).min(n - 1));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    best.offer(c, fc);
    best.offer(d, fd);
    while b - a > search.tolerance {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
            best.offer(c, fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
            best.offer(d, fd);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = eval(mid);
    best.offer(mid, fm);

    // Parabolic polish through the final bracket; kept only if it improves.
    let (x0, x1, x2) = (a, mid, b);
    let (f0, f2) = (eval(x0), eval(x2));
    let denom = (x1 - x0) * (fm - f2) - (x1 - x2) * (fm - f0);
    if denom.abs() > 0.0 && f0.is_finite() && f2.is_finite() {
        let numer = (x1 - x0) * (x1 - x0) * (fm - f2) - (x1 - x2) * (x1 - x2) * (fm - f0);
        let v = x1 - 0.5 * numer / denom;
        if v > x0 && v < x2 {
            best.offer(v, eval(v));
        }
    }
    Ok(best.omega)
}
