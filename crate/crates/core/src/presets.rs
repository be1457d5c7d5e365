//! Ready-made models whose transforms are known in closed form.

use nalgebra::DMatrix;

use crate::linalg::{flatten_sym, sym_basis, sym_dim};
use crate::model::{AffineModel, Atom, JumpMeasure, StateSpace};

/// Standard one-dimensional Brownian motion on `R`.
pub fn brownian_1d() -> AffineModel {
    let mut m = AffineModel::zero(StateSpace::Canonical { m: 0, n: 1 });
    m.a[(0, 0)] = 1.0;
    m
}

/// The Wishart process `X = WᵀW` for a `k × d` Brownian matrix, on the
/// flattened PSD cone: `b = k·I`, `B = 0`, `a = 0` and
/// `<u, A(x) u> = 4 tr(u x u)`, so that `F(u) = k tr(u)` and `R(u) = 2u²`.
pub fn wishart(d: usize, k: usize) -> AffineModel {
    let n = sym_dim(d);
    let mut m = AffineModel::zero(StateSpace::SymPSD { d });
    m.b = flatten_sym(&(DMatrix::<f64>::identity(d, d) * k as f64));
    let basis: Vec<DMatrix<f64>> = (0..n).map(|j| sym_basis(d, j)).collect();
    for (i, ei) in basis.iter().enumerate() {
        m.big_a[i] = DMatrix::from_fn(n, n, |j, l| 4.0 * (&basis[j] * ei * &basis[l]).trace());
    }
    m
}

/// Deterministic linear flow `dx = (b + Bx) dt` on `[r1, r2]`.
pub fn drift_interval(b: f64, big_b: f64, r1: f64, r2: f64) -> AffineModel {
    let mut m = AffineModel::zero(StateSpace::Interval { r1, r2 });
    m.b[0] = b;
    m.big_b[(0, 0)] = big_b;
    m
}

/// Pure birth chain on `{0, …, k}` with unit jumps at intensity `k − x`.
///
/// The truncation radius sits below the jump size so the unit jump is not
/// compensated and the drift characteristic is 0.
pub fn chain(k: usize) -> AffineModel {
    let mut m = AffineModel::zero(StateSpace::FiniteChain { k });
    m.chi_radius = 0.5;
    m.m_jump = JumpMeasure::new(vec![Atom {
        xi: vec![1.0],
        w: k as f64,
    }]);
    m.big_m_jump[0] = JumpMeasure::new(vec![Atom {
        xi: vec![1.0],
        w: -1.0,
    }]);
    m
}

/// Constant-rate killing with no motion, on `R`.
pub fn pure_killing(rate: f64) -> AffineModel {
    let mut m = AffineModel::zero(StateSpace::Canonical { m: 0, n: 1 });
    m.c_kill = rate;
    m
}

/// Looks up a preset by the names used on the command line.
pub fn by_name(name: &str) -> Option<AffineModel> {
    Some(match name {
        "brownian" => brownian_1d(),
        "wishart1d" => wishart(1, 1),
        "wishart2d" => wishart(2, 1),
        "drift" => drift_interval(1.0, -1.0, 0.0, 1.0),
        "chain" | "chain_k2" => chain(2),
        "killing" => pure_killing(1.0),
        _ => return None,
    })
}

pub const PRESET_NAMES: [&str; 6] = ["brownian", "wishart1d", "wishart2d", "drift", "chain_k2", "killing"];
