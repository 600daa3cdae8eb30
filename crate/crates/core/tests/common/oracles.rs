// Straight-line reference implementations of the ω-bounded updates.
//
// They deliberately avoid the library's closed-form objective: the bound is
// built in information form and its log-determinant is taken from the dense
// matrix, or the scalar formulas are written out directly.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

pub const OMEGA_LO: f64 = 1e-3;
pub const OMEGA_HI: f64 = 1.0 - 1e-3;
pub const GRID_STEP: f64 = 1e-5;

/// Dense-grid minimizer of `f` over `[OMEGA_LO, OMEGA_HI]`, polished by a
/// three-point parabola through the best grid point and its neighbours.
///
/// Returns `None` when no interior value is strictly below `at_one` (the
/// objective at ω = 1, i.e. the untouched prior).
pub fn grid_argmin(f: impl Fn(f64) -> f64, at_one: f64) -> Option<f64> {
    let n = ((OMEGA_HI - OMEGA_LO) / GRID_STEP).round() as usize;
    let at = |k: usize| (OMEGA_LO + k as f64 * GRID_STEP).min(OMEGA_HI);
    let mut best_k = 0;
    let mut best = f64::INFINITY;
    for k in 0..=n {
        let v = f(at(k));
        if v < best {
            best = v;
            best_k = k;
        }
    }
    let mut w = at(best_k);
    if best_k > 0 && best_k < n {
        let (w0, w1, w2) = (at(best_k - 1), w, at(best_k + 1));
        let (f0, f1, f2) = (f(w0), best, f(w2));
        let denom = f0 - 2.0 * f1 + f2;
        if denom > 0.0 {
            let cand = w1 + 0.5 * GRID_STEP * (f0 - f2) / denom;
            let fc = f(cand);
            if fc <= best && cand > w0 && cand < w2 {
                w = cand;
                best = fc;
            }
        }
    }
    if best < at_one {
        Some(w)
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct OracleUpdate {
    pub omega: f64,
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub k: DVector<f64>,
    pub s: f64,
    pub innovation: f64,
}

/// Information-form LoS bound:
/// `P̄(ω) = (ω P⁻¹ + (1−ω) hᵀh / (b + (1−ω) R))⁻¹`, with `b = Hⱼ Pⱼ Hⱼᵀ`.
pub fn los_bound_info(p: &DMatrix<f64>, h: &DVector<f64>, b: f64, r: f64, w: f64) -> DMatrix<f64> {
    let p_inv = p.clone().try_inverse().expect("prior must be invertible");
    let info = p_inv * w + (h * h.transpose()) * ((1.0 - w) / (b + (1.0 - w) * r));
    info.try_inverse().expect("information matrix must be invertible")
}

/// LoS update with grid-searched ω. Mean correction uses the information-form
/// gain `P̄ hᵀ / (b/(1−ω) + R)`.
pub fn los_oracle(x: &DVector<f64>, p: &DMatrix<f64>, h: &DVector<f64>, b: f64, r: f64, innovation: f64) -> OracleUpdate {
    let log_det = |w: f64| los_bound_info(p, h, b, r, w).determinant().ln();
    let a = h.dot(&(p * h));
    let s_at = |w: f64| a / w + b / (1.0 - w) + r;
    match grid_argmin(log_det, p.determinant().ln()) {
        Some(w) => {
            let p_bar = los_bound_info(p, h, b, r, w);
            let k = &p_bar * h / (b / (1.0 - w) + r);
            OracleUpdate {
                omega: w,
                x: x + &k * innovation,
                p: p_bar,
                k,
                s: s_at(w),
                innovation,
            }
        }
        None => OracleUpdate {
            omega: 1.0,
            x: x.clone(),
            p: p.clone(),
            k: DVector::zeros(x.len()),
            s: s_at(OMEGA_HI),
            innovation,
        },
    }
}

/// Scalar-state outcome of the NLoS updates.
#[derive(Debug, Clone, Copy)]
pub struct ScalarNlos {
    pub omega: f64,
    pub k: f64,
    pub p: f64,
    pub c_ii: f64,
    pub s: f64,
}

/// Scalar full NLoS update written out term by term.
#[allow(clippy::too_many_arguments)]
pub fn scalar_nlos_oracle(p_i: f64, p_j: f64, h_i: f64, h_j: f64, b_var: f64, c_ii: f64, c_ji: f64, r: f64) -> ScalarNlos {
    let s = |w: f64| h_i * (p_i / w) * h_i + h_j * (p_j / (1.0 - w)) * h_j + 2.0 * h_i * c_ii + 2.0 * h_j * c_ji + b_var + r;
    let gain = |w: f64| ((p_i / w) * h_i + c_ii) / s(w);
    let cov = |w: f64| {
        let u = (p_i / w) * h_i + c_ii;
        p_i / w - u * u / s(w)
    };
    let objective = |w: f64| {
        let v = cov(w);
        if v > 0.0 {
            v.ln()
        } else {
            f64::INFINITY
        }
    };
    match grid_argmin(objective, p_i.ln()) {
        Some(w) => {
            let k = gain(w);
            ScalarNlos {
                omega: w,
                k,
                p: cov(w),
                c_ii: (1.0 - k * h_i) * c_ii - k * h_j * c_ji - k * b_var,
                s: s(w),
            }
        }
        None => ScalarNlos {
            omega: 1.0,
            k: 0.0,
            p: p_i,
            c_ii,
            s: s(OMEGA_HI),
        },
    }
}

/// Scalar compact NLoS update: the own (state, bias) block `[[P, C], [C, B]]`
/// is scaled by `1/ω` as a whole and the target contributes `Pⱼ/(1−ω)`.
#[allow(clippy::too_many_arguments)]
pub fn scalar_compact_oracle(p_i: f64, p_j: f64, h_i: f64, h_j: f64, b_var: f64, c_ii: f64, r: f64) -> ScalarNlos {
    // z = hᵢ xᵢ + hⱼ xⱼ + b + ν, joint prior bound diag([[P, C],[C, B]]/ω, Pⱼ/(1−ω)).
    let s = |w: f64| (h_i * h_i * p_i + 2.0 * h_i * c_ii + b_var) / w + h_j * h_j * p_j / (1.0 - w) + r;
    let cross = |w: f64| (p_i * h_i + c_ii) / w;
    let cov = |w: f64| p_i / w - cross(w) * cross(w) / s(w);
    let objective = |w: f64| {
        let v = cov(w);
        if v > 0.0 {
            v.ln()
        } else {
            f64::INFINITY
        }
    };
    match grid_argmin(objective, p_i.ln()) {
        Some(w) => {
            let k = cross(w) / s(w);
            // Cov(x̃⁺, b̃) = C/ω − K (hᵢ C + B)/ω
            let c_next = c_ii / w - k * (h_i * c_ii + b_var) / w;
            ScalarNlos {
                omega: w,
                k,
                p: cov(w),
                c_ii: c_next,
                s: s(w),
            }
        }
        None => ScalarNlos {
            omega: 1.0,
            k: 0.0,
            p: p_i,
            c_ii,
            s: s(OMEGA_HI),
        },
    }
}

pub fn normal_pdf(x: f64, var: f64) -> f64 {
    (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Plain Kalman update of a scalar-observed state, covariance in standard form.
pub fn kalman(x: &DVector<f64>, p: &DMatrix<f64>, h: &DVector<f64>, r: f64, innovation: f64) -> (DVector<f64>, DMatrix<f64>) {
    let ph = p * h;
    let s = h.dot(&ph) + r;
    let k = &ph / s;
    (x + &k * innovation, p - (&k * ph.transpose()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Full NLoS update on matrices, evaluated directly:
/// `S = Hᵢ(P/ω)Hᵢᵀ + Hⱼ(Pⱼ/(1−ω))Hⱼᵀ + 2HᵢCⁱⁱ + 2HⱼCʲⁱ + B + R`,
/// `K = ((P/ω)Hᵢᵀ + Cⁱⁱ)/S`, `P̄ = P/ω − K S Kᵀ`, ω from the dense determinant.
/// Returns the update and `Cⁱⁱ⁺`.
#[allow(clippy::too_many_arguments)]
pub fn nlos_oracle(
    x: &DVector<f64>,
    p: &DMatrix<f64>,
    h_i: &DVector<f64>,
    b: f64,
    hj_cji: f64,
    b_var: f64,
    c_ii: &DVector<f64>,
    r: f64,
    innovation: f64,
) -> (OracleUpdate, DVector<f64>) {
    let s_at = |w: f64| h_i.dot(&(p * h_i)) / w + b / (1.0 - w) + 2.0 * h_i.dot(c_ii) + 2.0 * hj_cji + b_var + r;
    let u_at = |w: f64| p * h_i / w + c_ii;
    let cov = |w: f64| {
        let u = u_at(w);
        p / w - (&u * u.transpose()) / s_at(w)
    };
    let objective = |w: f64| {
        let d = cov(w).determinant();
        if d > 0.0 {
            d.ln()
        } else {
            f64::INFINITY
        }
    };
    match grid_argmin(objective, p.determinant().ln()) {
        Some(w) => {
            let s = s_at(w);
            let k = u_at(w) / s;
            let c_next = c_ii - &k * h_i.dot(c_ii) - &k * hj_cji - &k * b_var;
            (
                OracleUpdate {
                    omega: w,
                    x: x + &k * innovation,
                    p: cov(w),
                    k,
                    s,
                    innovation,
                },
                c_next,
            )
        }
        None => (
            OracleUpdate {
                omega: 1.0,
                x: x.clone(),
                p: p.clone(),
                k: DVector::zeros(x.len()),
                s: s_at(OMEGA_HI),
                innovation,
            },
            c_ii.clone(),
        ),
    }
}
