//! Reference cases comparing library updates with the oracles. Each returns
//! the largest elementwise deviation over every compared output.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use uwb_coloc_core::dmv_los::{los_bound_covariance, los_correct, RangeJacobians};
use uwb_coloc_core::imm::{process_measurement, sequential_update, ImmConfig, ImmTarget, SequentialItem};
use uwb_coloc_core::skf_nlos::{nlos_correct, nlos_update, nlos_update_compact};
use uwb_coloc_core::{
    optimize_omega, Belief, BiasBook, BiasHandling, BiasModel, Covariance, ModeProbabilities, NodeId, OmegaSearch,
    StateVector,
};

use super::oracles::*;

pub struct CaseResult {
    pub deviation: f64,
    /// `(library ω, oracle ω)` where the case involves a search.
    pub omega: Option<(f64, f64)>,
}

#[derive(Default)]
struct Acc(f64);

impl Acc {
    fn s(&mut self, a: f64, b: f64) {
        let d = (a - b).abs();
        self.0 = if d.is_nan() { f64::INFINITY } else { self.0.max(d) };
    }
    fn v(&mut self, a: &DVector<f64>, b: &DVector<f64>) {
        for (x, y) in a.iter().zip(b.iter()) {
            self.s(*x, *y);
        }
    }
    fn m(&mut self, a: &DMatrix<f64>, b: &DMatrix<f64>) {
        for (x, y) in a.iter().zip(b.iter()) {
            self.s(*x, *y);
        }
    }
}

pub fn belief(x: f64, y: f64, th: f64, p: DMatrix<f64>) -> Belief {
    Belief::new(StateVector::pose(x, y, th).unwrap(), Covariance::new(p).unwrap(), 0).unwrap()
}

/// Scalar range model along the x axis, `Hᵢ = 1`, `Hⱼ = −1`.
fn scalar_jacobians() -> RangeJacobians {
    RangeJacobians {
        h_i: dvector![1.0],
        h_j: dvector![-1.0],
        z_hat: 0.0,
    }
}

fn scalar_belief(p: f64) -> Belief {
    Belief::new(
        StateVector::new(dvector![0.0]).unwrap(),
        Covariance::from_diagonal(&[p]).unwrap(),
        0,
    )
    .unwrap()
}

pub fn los_two_agent_identity_priors() -> CaseResult {
    let bi = belief(0.0, 0.0, 0.0, DMatrix::identity(3, 3));
    let bj = belief(10.0, 0.0, 0.0, DMatrix::identity(3, 3));
    let out = los_correct(&bi, &bj, 10.5, 0.01, &OmegaSearch::default()).unwrap();
    let h = dvector![-1.0, 0.0, 0.0];
    let o = los_oracle(bi.x_hat.as_vector(), bi.p.matrix(), &h, 1.0, 0.01, 0.5);
    let mut acc = Acc::default();
    acc.v(out.belief.x_hat.as_vector(), &o.x);
    acc.m(out.belief.p.matrix(), &o.p);
    acc.s(out.innovation_var, o.s);
    CaseResult {
        deviation: acc.0,
        omega: Some((out.omega_star, o.omega)),
    }
}

pub fn los_two_agent_informative_target() -> CaseResult {
    let p_i = dmatrix![2.0, 0.3, 0.1; 0.3, 1.0, -0.05; 0.1, -0.05, 0.2];
    let bi = belief(0.0, 0.0, 0.1, p_i.clone());
    let bj = belief(10.0, 0.0, 0.0, DMatrix::identity(3, 3) * 0.01);
    let out = los_correct(&bi, &bj, 10.5, 0.01, &OmegaSearch::default()).unwrap();
    let h = dvector![-1.0, 0.0, 0.0];
    let o = los_oracle(bi.x_hat.as_vector(), &p_i, &h, 0.01, 0.01, 0.5);
    let mut acc = Acc::default();
    acc.v(out.belief.x_hat.as_vector(), &o.x);
    acc.m(out.belief.p.matrix(), &o.p);
    acc.v(&out.gain, &o.k);
    acc.s(out.likelihood, normal_pdf(0.5, o.s));
    CaseResult {
        deviation: acc.0,
        omega: Some((out.omega_star, o.omega)),
    }
}

pub fn los_bound_matches_information_form() -> CaseResult {
    let p_i = Covariance::new(dmatrix![2.0, 0.3, 0.1; 0.3, 1.0, -0.05; 0.1, -0.05, 0.2]).unwrap();
    let p_j = Covariance::new(dmatrix![0.5, 0.1, 0.0; 0.1, 0.7, 0.0; 0.0, 0.0, 0.1]).unwrap();
    let jac = RangeJacobians {
        h_i: dvector![0.6, -0.8, 0.0],
        h_j: dvector![-0.6, 0.8, 0.0],
        z_hat: 5.0,
    };
    let b = jac.h_j.dot(&(p_j.matrix() * &jac.h_j));
    let mut acc = Acc::default();
    for w in [0.01, 0.2, 0.5, 0.73, 0.99] {
        let lib = los_bound_covariance(&p_i, &p_j, &jac, 0.04, w).unwrap();
        acc.m(lib.matrix(), &los_bound_info(p_i.matrix(), &jac.h_i, b, 0.04, w));
    }
    CaseResult {
        deviation: acc.0,
        omega: None,
    }
}

/// `P = 1, Pⱼ = 0, R = 1, H = 1`: `P̄(ω) = 1/(1+ω)`, minimized at the upper end.
pub fn scalar_bound_grid_minimizer() -> CaseResult {
    let jac = RangeJacobians {
        h_i: dvector![1.0],
        h_j: dvector![1.0],
        z_hat: 0.0,
    };
    let p = Covariance::identity(1);
    let mut acc = Acc::default();
    let half = los_bound_covariance(&p, &Covariance::zeros(1), &jac, 1.0, 0.5).unwrap();
    acc.s(half.matrix()[(0, 0)], 1.0 / 1.5);
    let objective = |w: f64| (1.0 / (1.0 + w)).ln();
    let grid = grid_argmin(objective, 0.0).unwrap();
    let lib = optimize_omega(objective, &OmegaSearch::default()).unwrap();
    let at = |w: f64| los_bound_covariance(&p, &Covariance::zeros(1), &jac, 1.0, w).unwrap().matrix()[(0, 0)];
    acc.s(at(lib), 1.0 / (1.0 + grid));
    CaseResult {
        deviation: acc.0,
        omega: Some((lib, grid)),
    }
}

pub fn nlos_scalar_case() -> CaseResult {
    let bias = BiasModel::new(0.0, 0.25, BiasHandling::SecondMoment).unwrap();
    let book = BiasBook::zeros(NodeId(1), [NodeId(1), NodeId(2)], 1);
    let out = nlos_update(
        &scalar_belief(1.0),
        &Covariance::from_diagonal(&[1.0]).unwrap(),
        &scalar_jacobians(),
        &bias,
        &book,
        None,
        0.5,
        0.01,
        &OmegaSearch::default(),
    )
    .unwrap();
    let o = scalar_nlos_oracle(1.0, 1.0, 1.0, -1.0, 0.25, 0.0, 0.0, 0.01);
    let mut acc = Acc::default();
    acc.s(out.outcome.gain[0], o.k);
    acc.s(out.outcome.belief.p.matrix()[(0, 0)], o.p);
    acc.s(out.book.own()[0], o.c_ii);
    acc.s(out.outcome.innovation_var, o.s);
    CaseResult {
        deviation: acc.0,
        omega: Some((out.outcome.omega_star, o.omega)),
    }
}

pub fn nlos_scalar_informative_target() -> CaseResult {
    let bias = BiasModel::new(0.0, 0.25, BiasHandling::SecondMoment).unwrap();
    let owner = NodeId(1);
    let mut book_i = BiasBook::zeros(owner, [NodeId(1), NodeId(2)], 1);
    book_i.set(owner, dvector![-0.05]).unwrap();
    let mut book_j = BiasBook::zeros(NodeId(2), [NodeId(1), NodeId(2)], 1);
    book_j.set(owner, dvector![0.02]).unwrap();
    let out = nlos_update(
        &scalar_belief(1.0),
        &Covariance::from_diagonal(&[0.01]).unwrap(),
        &scalar_jacobians(),
        &bias,
        &book_i,
        Some(&book_j),
        0.5,
        0.01,
        &OmegaSearch::default(),
    )
    .unwrap();
    let o = scalar_nlos_oracle(1.0, 0.01, 1.0, -1.0, 0.25, -0.05, 0.02, 0.01);
    let mut acc = Acc::default();
    acc.s(out.outcome.gain[0], o.k);
    acc.s(out.outcome.belief.x_hat.as_vector()[0], 0.5 * o.k);
    acc.s(out.outcome.belief.p.matrix()[(0, 0)], o.p);
    acc.s(out.book.own()[0], o.c_ii);
    acc.s(out.outcome.innovation_var, o.s);
    CaseResult {
        deviation: acc.0,
        omega: Some((out.outcome.omega_star, o.omega)),
    }
}

fn compact(p_j: f64, c_ii: f64) -> CaseResult {
    let bias = BiasModel::new(0.0, 0.25, BiasHandling::SecondMoment).unwrap();
    let (out, c) = nlos_update_compact(
        &scalar_belief(1.0),
        &Covariance::from_diagonal(&[p_j]).unwrap(),
        &scalar_jacobians(),
        &bias,
        &dvector![c_ii],
        0.5,
        0.01,
        &OmegaSearch::default(),
    )
    .unwrap();
    let o = scalar_compact_oracle(1.0, p_j, 1.0, -1.0, 0.25, c_ii, 0.01);
    let mut acc = Acc::default();
    acc.s(out.gain[0], o.k);
    acc.s(out.belief.p.matrix()[(0, 0)], o.p);
    acc.s(c[0], o.c_ii);
    acc.s(out.innovation_var, o.s);
    CaseResult {
        deviation: acc.0,
        omega: Some((out.omega_star, o.omega)),
    }
}

pub fn compact_scalar_case() -> CaseResult {
    compact(1.0, 0.0)
}

pub fn compact_scalar_informative_target() -> CaseResult {
    compact(0.01, -0.05)
}

pub fn nlos_correct_with_third_agent_book() -> CaseResult {
    let p_i = dmatrix![1.0, 0.1, 0.0; 0.1, 1.5, 0.0; 0.0, 0.0, 0.2];
    let bi = belief(0.0, 0.0, 0.0, p_i.clone());
    let bj = belief(3.0, 4.0, 0.0, DMatrix::identity(3, 3) * 0.05);
    let (me, other, third) = (NodeId(1), NodeId(2), NodeId(3));
    let mut book_i = BiasBook::zeros(me, [me, other, third], 3);
    book_i.set(me, dvector![0.02, -0.01, 0.0]).unwrap();
    book_i.set(third, dvector![0.01, 0.03, 0.0]).unwrap();
    let mut book_j = BiasBook::zeros(other, [me, other, third], 3);
    book_j.set(me, dvector![0.01, 0.02, 0.0]).unwrap();
    book_j.set(third, dvector![-0.02, 0.01, 0.0]).unwrap();
    let bias = BiasModel::new(1.0, 0.25, BiasHandling::SecondMoment).unwrap();
    let out = nlos_correct(&bi, &bj, &bias, &book_i, Some(&book_j), 5.9, 0.01, &OmegaSearch::default()).unwrap();

    let h_i = dvector![-0.6, -0.8, 0.0];
    let h_j = -&h_i;
    let b = h_j.dot(&(bj.p.matrix() * &h_j));
    let hj_cji = h_j.dot(book_j.get(me).unwrap());
    let (o, c_ii) = nlos_oracle(bi.x_hat.as_vector(), &p_i, &h_i, b, hj_cji, bias.b_var, &book_i.own(), 0.01, 0.9);
    let mut acc = Acc::default();
    acc.v(out.outcome.belief.x_hat.as_vector(), &o.x);
    acc.m(out.outcome.belief.p.matrix(), &o.p);
    acc.v(&out.book.own(), &c_ii);
    let c_il = book_i.get(third).unwrap();
    let expect = c_il - &o.k * h_i.dot(c_il) - &o.k * h_j.dot(book_j.get(third).unwrap());
    acc.v(out.book.get(third).unwrap(), &expect);
    CaseResult {
        deviation: acc.0,
        omega: Some((out.outcome.omega_star, o.omega)),
    }
}

pub fn imm_half_half_composition() -> CaseResult {
    let p_i = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0; 0.0, 0.0, 0.1];
    let p_j = DMatrix::identity(3, 3) * 0.01;
    let bi = belief(0.0, 0.0, 0.0, p_i.clone());
    let bj = belief(10.0, 0.0, 0.0, p_j);
    let (me, other) = (NodeId(1), NodeId(2));
    let book_i = BiasBook::zeros(me, [me, other], 3);
    let book_j = BiasBook::zeros(other, [me, other], 3);
    let bias = BiasModel::new(1.0, 0.25, BiasHandling::SecondMoment).unwrap();
    let (z, r) = (10.8, 0.01);
    let modes = ModeProbabilities::normalized(0.5, 0.5).unwrap();
    let target = ImmTarget::Agent {
        id: other,
        belief: &bj,
        book: Some(&book_j),
    };
    let step = process_measurement(&bi, &bias, &book_i, &target, z, modes, r, &ImmConfig::default()).unwrap();

    let h = dvector![-1.0, 0.0, 0.0];
    let x0 = bi.x_hat.as_vector();
    let los = los_oracle(x0, &p_i, &h, 0.01, r, 0.8);
    let (nlos, c_nlos) = nlos_oracle(x0, &p_i, &h, 0.01, 0.0, bias.b_var, &DVector::zeros(3), r, 0.8);
    let l_los = normal_pdf(0.8, los.s);
    let l_nlos = normal_pdf(0.8, nlos.s);
    let w_los = 0.5 * l_los / (0.5 * l_los + 0.5 * l_nlos);
    let w_nlos = 1.0 - w_los;
    let x = &los.x * w_los + &nlos.x * w_nlos;
    let d_los = &los.x - &x;
    let d_nlos = &nlos.x - &x;
    let p = (&los.p + &d_los * d_los.transpose()) * w_los + (&nlos.p + &d_nlos * d_nlos.transpose()) * w_nlos;

    let diag = &step.diagnostics;
    let mut acc = Acc::default();
    acc.s(diag.posterior_modes.p_los, w_los);
    acc.s(diag.los.as_ref().unwrap().likelihood, l_los);
    acc.s(diag.nlos.as_ref().unwrap().likelihood, l_nlos);
    acc.v(step.belief.x_hat.as_vector(), &x);
    acc.m(step.belief.p.matrix(), &p);
    acc.v(&step.book.own(), &(c_nlos * w_nlos));
    CaseResult {
        deviation: acc.0,
        omega: Some((diag.los.as_ref().unwrap().omega_star, los.omega)),
    }
}

pub fn sequential_two_beacons() -> CaseResult {
    let p = dmatrix![1.0, 0.3, 0.0; 0.3, 2.0, 0.05; 0.0, 0.05, 0.1];
    let prior = belief(0.2, -0.1, 0.3, p.clone());
    let me = NodeId(1);
    let book = BiasBook::zeros(me, [me], 3);
    let bias = BiasModel::new(1.0, 0.25, BiasHandling::SecondMoment).unwrap();
    let r = 0.01;
    let (b5, b3) = ([10.0, 0.0], [0.0, 10.0]);
    let (z5, z3) = (9.5, 10.4);
    let item = |id: u32, position: [f64; 2], z: f64| SequentialItem {
        z,
        stamp: 0,
        target: ImmTarget::Beacon { id: NodeId(id), position },
        modes: ModeProbabilities::LOS,
    };
    let items = [item(5, b5, z5), item(3, b3, z3)];
    let out = sequential_update(&prior, &bias, &book, &items, r, &ImmConfig::default()).unwrap();

    // Ascending id: beacon 3 first, then beacon 5, each re-linearized.
    let mut x = prior.x_hat.as_vector().clone();
    let mut pp = p;
    for (b, z) in [(b3, z3), (b5, z5)] {
        let (dx, dy) = (x[0] - b[0], x[1] - b[1]);
        let d = (dx * dx + dy * dy).sqrt();
        let h = dvector![dx / d, dy / d, 0.0];
        let (xn, pn) = kalman(&x, &pp, &h, r, z - d);
        x = xn;
        pp = pn;
    }
    let mut acc = Acc::default();
    if out.steps.iter().map(|s| s.0).collect::<Vec<_>>() != [NodeId(3), NodeId(5)] {
        acc.0 = f64::INFINITY;
    }
    acc.v(out.belief.x_hat.as_vector(), &x);
    acc.m(out.belief.p.matrix(), &pp);
    CaseResult {
        deviation: acc.0,
        omega: None,
    }
}

pub type Case = (&'static str, fn() -> CaseResult);

pub const ALL: [Case; 12] = [
    ("los identity priors", los_two_agent_identity_priors),
    ("los informative target", los_two_agent_informative_target),
    ("los bound information form", los_bound_matches_information_form),
    ("scalar bound grid minimizer", scalar_bound_grid_minimizer),
    ("nlos scalar", nlos_scalar_case),
    ("nlos scalar informative", nlos_scalar_informative_target),
    ("compact scalar", compact_scalar_case),
    ("compact scalar informative", compact_scalar_informative_target),
    ("nlos third-agent book", nlos_correct_with_third_agent_book),
    ("imm half/half", imm_half_half_composition),
    ("sequential beacons", sequential_two_beacons),
    ("imm likelihood", imm_likelihood_reference),
];

pub fn imm_likelihood_reference() -> CaseResult {
    let mut acc = Acc::default();
    for (innov, s) in [(2.0, 1.0), (0.0, 1.0 / (2.0 * std::f64::consts::PI)), (0.3, 0.04)] {
        acc.s(uwb_coloc_core::imm::gaussian_likelihood(innov, s).unwrap(), normal_pdf(innov, s));
    }
    CaseResult {
        deviation: acc.0,
        omega: None,
    }
}
