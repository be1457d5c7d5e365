//! Explicitly solvable examples used as oracles for the solver and the
//! simulator.
//!
//! * Wishart: `Φ = det(I − 2tu)^{−k/2}`, `ψ = ((I−2tu)^{−1}u + u(I−2tu)^{−1})/2`.
//! * Linear deterministic flow: `ψ = e^{Bt}u`, `Φ = exp(u b (e^{Bt} − 1)/B)`.
//! * Birth chain on `{0,…,k}` with intensity `k − x`: each vacant level fills
//!   independently at rate 1, so with `q(t) = e^{−t} + (1 − e^{−t})e^u`,
//!   `Φ = q^k` and `ψ = u − log q`.
//! * A matrix-exponential oracle for the chain built directly from its
//!   generator.

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{flatten_sym, min_eigenvalue, sym_order, unflatten_sym};
use crate::model::AffineModel;
use crate::presets;

/// Largest t-step used when continuing a complex logarithm along `[0, t]`.
const BRANCH_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WishartSpec {
    pub d: usize,
    pub k: usize,
}

impl WishartSpec {
    pub fn new(d: usize, k: usize) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(Error::InvalidParameter(format!("Wishart needs d, k ≥ 1 (d={d}, k={k})")));
        }
        Ok(Self { d, k })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub k: usize,
}

impl ChainSpec {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("chain needs k ≥ 1".into()));
        }
        Ok(Self { k })
    }
}

fn wrap_angle(mut a: f64) -> f64 {
    while a > PI {
        a -= 2.0 * PI;
    }
    while a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Continuous logarithm of `s ↦ g(s)` at `s = t`, starting from the
/// principal value at `s = 0`, by unwrapping the argument on a grid with
/// spacing at most [`BRANCH_STEP`]. Fails if `|g|` drops below `floor`.
fn continuous_log<G>(t: f64, floor: f64, what: &str, g: G) -> Result<Complex64>
where
    G: Fn(f64) -> Result<Complex64>,
{
    let steps = (t.abs() / BRANCH_STEP).ceil().max(1.0) as usize;
    let mut prev = g(0.0)?;
    if prev.norm() <= floor {
        return Err(Error::Singular(format!("{what} vanishes at t=0")));
    }
    let mut theta = prev.arg();
    for j in 1..=steps {
        let s = t * j as f64 / steps as f64;
        let z = g(s)?;
        if z.norm() <= floor || !z.is_finite() {
            return Err(Error::Singular(format!("{what} vanishes near t={s}")));
        }
        theta += wrap_angle(z.arg() - prev.arg());
        prev = z;
    }
    Ok(Complex64::new(prev.norm().ln(), theta))
}

fn identity_c(d: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(d, d, |i, j| Complex64::new(f64::from(u8::from(i == j)), 0.0))
}

/// Wishart `(Φ(t,u), ψ(t,u))` for a complex symmetric `u`.
pub fn wishart_phi_psi(
    spec: WishartSpec,
    t: f64,
    u: &DMatrix<Complex64>,
) -> Result<(Complex64, DMatrix<Complex64>)> {
    let d = spec.d;
    if u.nrows() != d || u.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "Wishart argument",
            expected: d,
            got: u.nrows(),
        });
    }
    if t == 0.0 {
        return Ok((Complex64::new(1.0, 0.0), u.clone()));
    }
    let neg_re = u.map(|z| -z.re);
    if min_eigenvalue(&neg_re) < -1e-12 {
        warn!("Wishart argument has −Re u not PSD; formula evaluated anyway");
    }
    let id = identity_c(d);
    let lift = |s: f64| -> DMatrix<Complex64> { &id - u * Complex64::new(2.0 * s, 0.0) };
    let log_det = continuous_log(t, 1e-12, "det(I − 2tu)", |s| Ok(lift(s).determinant()))?;
    let phi = (log_det * (-(spec.k as f64) / 2.0)).exp();
    let inv = lift(t)
        .try_inverse()
        .ok_or_else(|| Error::Singular("I − 2tu".into()))?;
    let psi = (&inv * u + u * &inv) * Complex64::new(0.5, 0.0);
    Ok((phi, psi))
}

/// [`wishart_phi_psi`] on flattened coordinates.
pub fn wishart_phi_psi_flat(
    spec: WishartSpec,
    t: f64,
    u: &[Complex64],
) -> Result<(Complex64, Vec<Complex64>)> {
    let d = sym_order(u.len())
        .filter(|&d| d == spec.d)
        .ok_or(Error::DimensionMismatch {
            what: "flattened Wishart argument",
            expected: spec.d * (spec.d + 1) / 2,
            got: u.len(),
        })?;
    let (phi, psi) = wishart_phi_psi(spec, t, &unflatten_sym(u, d))?;
    Ok((phi, flatten_sym(&psi)))
}

/// `E_x[e^{tr(u X_t)}] = Φ(t,u) e^{tr(ψ(t,u) x)}`.
pub fn wishart_transform(
    spec: WishartSpec,
    t: f64,
    u: &DMatrix<Complex64>,
    x: &DMatrix<f64>,
) -> Result<Complex64> {
    if x.nrows() != spec.d || x.ncols() != spec.d {
        return Err(Error::DimensionMismatch {
            what: "Wishart state",
            expected: spec.d,
            got: x.nrows(),
        });
    }
    if min_eigenvalue(x) < -1e-12 {
        return Err(Error::OutsideStateSpace(x.iter().copied().collect()));
    }
    let rank = x.clone().symmetric_eigenvalues().iter().filter(|&&l| l > 1e-10).count();
    if rank > spec.k {
        warn!("initial state has rank {rank} > k = {}; formula evaluated anyway", spec.k);
    }
    let (phi, psi) = wishart_phi_psi(spec, t, u)?;
    let xc = x.map(|v| Complex64::new(v, 0.0));
    Ok(phi * (psi * xc).trace().exp())
}

/// Linear flow `dx = (b + Bx) dt`.
pub fn drift_flow_phi_psi(b: f64, big_b: f64, t: f64, u: Complex64) -> (Complex64, Complex64) {
    if big_b > 0.0 {
        warn!("drift flow expects B ≤ 0, got {big_b}");
    }
    let bt = big_b * t;
    // (e^{Bt} − 1)/B, series-expanded near 0
    let integral = if bt.abs() < 1e-8 {
        t * (1.0 + bt / 2.0 + bt * bt / 6.0)
    } else {
        bt.exp_m1() / big_b
    };
    ((u * b * integral).exp(), u * bt.exp())
}

/// Brownian motion with variance rate `a`: `Φ = e^{t a u²/2}`, `ψ = u`.
pub fn brownian_phi_psi(a: f64, t: f64, u: Complex64) -> (Complex64, Complex64) {
    ((u * u * (0.5 * a * t)).exp(), u)
}

fn chain_q(t: f64, u: Complex64) -> Complex64 {
    let e = (-t).exp();
    e + (-(-t).exp_m1()) * u.exp()
}

/// Birth chain `(Φ(t,u), ψ(t,u))` with continuous branches from `(1, u)`.
pub fn chain_phi_psi(spec: ChainSpec, t: f64, u: Complex64) -> Result<(Complex64, Complex64)> {
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!("negative time {t}")));
    }
    if t == 0.0 {
        return Ok((Complex64::new(1.0, 0.0), u));
    }
    let log_q = continuous_log(t, 1e-14, "q(t)", |s| Ok(chain_q(s, u)))?;
    let phi = chain_q(t, u).powi(spec.k as i32);
    Ok((phi, u - log_q))
}

/// Generator of the birth chain: `Q[j, j+1] = k − j`, `Q[j, j] = −(k − j)`.
pub fn chain_generator(spec: ChainSpec) -> DMatrix<f64> {
    let k = spec.k;
    let mut q = DMatrix::zeros(k + 1, k + 1);
    for j in 0..k {
        let rate = (k - j) as f64;
        q[(j, j + 1)] = rate;
        q[(j, j)] = -rate;
    }
    q
}

/// Matrix exponential by scaling and squaring around a truncated Taylor
/// series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings);
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for j in 1..60 {
        term = &term * &scaled / j as f64;
        sum += &term;
        if term.amax() <= 1e-18 * sum.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `E_x[e^{u X_t}] = Σ_j (e^{tQ})[x, j] e^{u j}` for the birth chain.
pub fn ctmc_oracle_transform(spec: ChainSpec, t: f64, u: Complex64, x: usize) -> Result<Complex64> {
    if x > spec.k {
        return Err(Error::InvalidParameter(format!("state {x} outside 0..={}", spec.k)));
    }
    if t == 0.0 {
        return Ok((u * x as f64).exp());
    }
    let p = expm(&(chain_generator(spec) * t));
    Ok((0..=spec.k).map(|j| p[(x, j)] * (u * j as f64).exp()).sum())
}

/// A closed-form family together with its affine model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    Brownian,
    Wishart(WishartSpec),
    Drift { b: f64, big_b: f64, r1: f64, r2: f64 },
    Chain(ChainSpec),
}

impl ClosedForm {
    pub fn model(&self) -> AffineModel {
        match *self {
            ClosedForm::Brownian => presets::brownian_1d(),
            ClosedForm::Wishart(s) => presets::wishart(s.d, s.k),
            ClosedForm::Drift { b, big_b, r1, r2 } => presets::drift_interval(b, big_b, r1, r2),
            ClosedForm::Chain(s) => presets::chain(s.k),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            ClosedForm::Brownian => "brownian".into(),
            ClosedForm::Wishart(s) => format!("wishart(d={},k={})", s.d, s.k),
            ClosedForm::Drift { .. } => "drift".into(),
            ClosedForm::Chain(s) => format!("chain(k={})", s.k),
        }
    }

    /// `(Φ(t,u), ψ(t,u))` in the model's flat coordinates.
    pub fn phi_psi(&self, t: f64, u: &[Complex64]) -> Result<(Complex64, Vec<Complex64>)> {
        let scalar = |u: &[Complex64]| -> Result<Complex64> {
            if u.len() != 1 {
                return Err(Error::DimensionMismatch {
                    what: "scalar argument",
                    expected: 1,
                    got: u.len(),
                });
            }
            Ok(u[0])
        };
        match *self {
            ClosedForm::Brownian => {
                let (phi, psi) = brownian_phi_psi(1.0, t, scalar(u)?);
                Ok((phi, vec![psi]))
            }
            ClosedForm::Wishart(s) => wishart_phi_psi_flat(s, t, u),
            ClosedForm::Drift { b, big_b, .. } => {
                let (phi, psi) = drift_flow_phi_psi(b, big_b, t, scalar(u)?);
                Ok((phi, vec![psi]))
            }
            ClosedForm::Chain(s) => {
                let (phi, psi) = chain_phi_psi(s, t, scalar(u)?)?;
                Ok((phi, vec![psi]))
            }
        }
    }

    /// `Φ(t,u) e^{<ψ(t,u), x>}`.
    pub fn transform(&self, t: f64, u: &[Complex64], x: &[f64]) -> Result<Complex64> {
        let (phi, psi) = self.phi_psi(t, u)?;
        Ok(phi * crate::linalg::cdot(&psi, x).exp())
    }
}
