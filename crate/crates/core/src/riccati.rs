//! Generalized Riccati equations `∂_t φ = F(ψ)`, `∂_t ψ = R(ψ)` with
//! `φ(0) = 0`, `ψ(0) = u`, where `φ = log Φ`.
//!
//! Integration uses the Dormand–Prince 5(4) pair with a mixed
//! absolute/relative local error test. Between accepted steps the
//! trajectory is interpolated by cubic Hermite polynomials built from the
//! stored slopes.

use log::warn;
use num_complex::Complex64;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{cdot, cnorm};
use crate::model::{AffineModel, StateSpace, MEMBERSHIP_TOL};

/// `‖ψ‖` beyond which a solution is declared to blow up.
pub const BLOW_UP_NORM: f64 = 1e8;
/// Slack on the real-part conditions before a solution counts as having
/// left the bounded-exponential set.
pub const RANGE_MARGIN: f64 = 1e-9;
const MAX_STEPS: usize = 2_000_000;

/// Tolerance used internally by quadrature and finite-difference checks.
pub const FINE_TOL: f64 = 1e-12;

/// One accepted node of a Riccati trajectory, with slopes for dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct GridNode {
    pub t: f64,
    pub phi: Complex64,
    pub psi: Vec<Complex64>,
    pub dphi: Complex64,
    pub dpsi: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveStatus {
    Complete,
    BlowUp { t_star: f64 },
    LeftU { t_star: f64 },
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStatus::Complete => write!(f, "Complete"),
            SolveStatus::BlowUp { t_star } => write!(f, "BlowUp(t_star={t_star})"),
            SolveStatus::LeftU { t_star } => write!(f, "LeftU(t_star={t_star})"),
        }
    }
}

/// A solved trajectory `t ↦ (φ(t,u), ψ(t,u))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSolution {
    pub u0: Vec<Complex64>,
    pub grid: Vec<GridNode>,
    pub status: SolveStatus,
    pub tol: f64,
    pub horizon: f64,
}

impl TransformSolution {
    pub fn last(&self) -> &GridNode {
        self.grid.last().expect("grid always holds the initial node")
    }

    /// Largest time covered by the grid.
    pub fn t_max(&self) -> f64 {
        self.last().t
    }

    pub fn is_complete(&self) -> bool {
        self.status == SolveStatus::Complete
    }

    /// `(φ(t), ψ(t))` by cubic Hermite interpolation, exact at grid nodes.
    pub fn at(&self, t: f64) -> Option<(Complex64, Vec<Complex64>)> {
        if !(0.0..=self.t_max()).contains(&t) {
            return None;
        }
        let idx = self.grid.partition_point(|node| node.t < t);
        let right = &self.grid[idx];
        if right.t == t || idx == 0 {
            return Some((right.phi, right.psi.clone()));
        }
        let left = &self.grid[idx - 1];
        let h = right.t - left.t;
        let s = (t - left.t) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let herm = |y0: Complex64, f0: Complex64, y1: Complex64, f1: Complex64| {
            y0 * h00 + f0 * (h * h10) + y1 * h01 + f1 * (h * h11)
        };
        let phi = herm(left.phi, left.dphi, right.phi, right.dphi);
        let psi = (0..left.psi.len())
            .map(|i| herm(left.psi[i], left.dpsi[i], right.psi[i], right.dpsi[i]))
            .collect();
        Some((phi, psi))
    }

    /// CSV with columns `t, re_phi, im_phi, re_psi_1..n, im_psi_1..n` and a
    /// trailing `# status=...` comment.
    pub fn to_csv(&self) -> String {
        let n = self.u0.len();
        let mut out = String::from("t,re_phi,im_phi");
        for i in 1..=n {
            out.push_str(&format!(",re_psi_{i}"));
        }
        for i in 1..=n {
            out.push_str(&format!(",im_psi_{i}"));
        }
        out.push('\n');
        for node in &self.grid {
            out.push_str(&format!("{},{},{}", node.t, node.phi.re, node.phi.im));
            for z in &node.psi {
                out.push_str(&format!(",{}", z.re));
            }
            for z in &node.psi {
                out.push_str(&format!(",{}", z.im));
            }
            out.push('\n');
        }
        out.push_str(&format!("# status={}\n", self.status));
        out
    }
}

// Dormand–Prince 5(4) coefficients.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

enum Advance {
    Reached { y: Vec<Complex64>, f: Vec<Complex64> },
    Exceeded { t_lo: f64, y_lo: Vec<Complex64>, f_lo: Vec<Complex64>, t_hi: f64 },
    Stalled { t: f64 },
    LeftU { t: f64 },
}

struct Integrator<'a> {
    model: &'a AffineModel,
    tol: f64,
    check_range: bool,
}

impl Integrator<'_> {
    fn rhs(&self, y: &[Complex64], out: &mut [Complex64]) {
        out[0] = self.model.f_raw(&y[1..]);
        self.model.r_raw_into(&y[1..], &mut out[1..]);
    }

    fn exceeded(y: &[Complex64]) -> bool {
        y.iter().any(|z| !z.is_finite()) || cnorm(&y[1..]) > BLOW_UP_NORM || y[0].re < -BLOW_UP_NORM
    }

    fn left_range(&self, y: &[Complex64]) -> bool {
        self.check_range
            && !self
                .model
                .space
                .in_u_margin(&y[1..], RANGE_MARGIN)
                .unwrap_or(false)
    }

    fn scaled_norm(&self, v: &[Complex64], y: &[Complex64]) -> f64 {
        let n = v.len() as f64;
        (v.iter()
            .zip(y)
            .map(|(v, y)| (v.norm() / (self.tol * (1.0 + y.norm()))).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    }

    fn initial_step(&self, y0: &[Complex64], f0: &[Complex64], span: f64) -> f64 {
        let d0 = self.scaled_norm(y0, y0);
        let d1 = self.scaled_norm(f0, y0);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y1: Vec<Complex64> = y0.iter().zip(f0).map(|(y, f)| y + f * h0).collect();
        let mut f1 = vec![Complex64::new(0.0, 0.0); y0.len()];
        self.rhs(&y1, &mut f1);
        let diff: Vec<Complex64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = self.scaled_norm(&diff, y0) / h0;
        let dm = d1.max(d2);
        let h1 = if dm <= 1e-15 || !dm.is_finite() {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dm).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }

    /// Integrates from `(t0, y0)` to `t_end`, pushing accepted nodes into
    /// `record` when given.
    fn advance(
        &self,
        t0: f64,
        y0: Vec<Complex64>,
        f0: Vec<Complex64>,
        t_end: f64,
        h_init: Option<f64>,
        mut record: Option<&mut Vec<GridNode>>,
    ) -> Result<Advance> {
        let dim = y0.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut t = t0;
        let mut y = y0;
        let mut f = f0;
        let mut h = h_init.unwrap_or_else(|| self.initial_step(&y, &f, t_end - t0));
        let mut k = vec![vec![zero; dim]; 7];
        let mut stage = vec![zero; dim];
        let mut y_new = vec![zero; dim];
        let mut err = vec![zero; dim];
        for _ in 0..MAX_STEPS {
            if t >= t_end {
                return Ok(Advance::Reached { y, f });
            }
            let mut last = false;
            if t + h >= t_end - 1e-14 * t_end.abs().max(1.0) {
                h = t_end - t;
                last = true;
            }
            k[0].copy_from_slice(&f);
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        if A[s][j] != 0.0 {
                            acc += kj[i] * (h * A[s][j]);
                        }
                    }
                    stage[i] = acc;
                }
                if s == 6 {
                    y_new.copy_from_slice(&stage);
                }
                self.rhs(&stage, &mut k[s]);
            }
            for i in 0..dim {
                err[i] = (0..7).map(|s| k[s][i] * (h * E[s])).sum();
            }
            let mut e_norm: f64 = 0.0;
            for i in 0..dim {
                let scale = self.tol * (1.0 + y[i].norm().max(y_new[i].norm()));
                e_norm = e_norm.max(err[i].norm() / scale);
            }
            let hmin = 1e-14 * t.abs().max(1.0);
            if !e_norm.is_finite() || e_norm > 1.0 {
                let factor = if e_norm.is_finite() {
                    (0.9 * e_norm.powf(-0.2)).max(0.2)
                } else {
                    0.25
                };
                h *= factor;
                if h < hmin {
                    return Ok(Advance::Stalled { t });
                }
                continue;
            }
            let t_new = if last { t_end } else { t + h };
            if Self::exceeded(&y_new) {
                return Ok(Advance::Exceeded {
                    t_lo: t,
                    y_lo: y,
                    f_lo: f,
                    t_hi: t_new,
                });
            }
            if self.left_range(&y_new) {
                return Ok(Advance::LeftU { t: t_new });
            }
            let growth = if e_norm == 0.0 {
                5.0
            } else {
                (0.9 * e_norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            t = t_new;
            y.copy_from_slice(&y_new);
            f.copy_from_slice(&k[6]);
            if let Some(rec) = record.as_deref_mut() {
                rec.push(GridNode {
                    t,
                    phi: y[0],
                    psi: y[1..].to_vec(),
                    dphi: f[0],
                    dpsi: f[1..].to_vec(),
                });
            }
            if !last {
                h *= growth;
            }
        }
        Err(Error::Numerical(format!(
            "Riccati integration exceeded {MAX_STEPS} steps"
        )))
    }

    /// Brackets the first time the solution exceeds the blow-up threshold.
    fn bracket(
        &self,
        mut lo: f64,
        mut y: Vec<Complex64>,
        mut f: Vec<Complex64>,
        mut hi: f64,
        width: f64,
    ) -> Result<f64> {
        while hi - lo > width {
            let mid = 0.5 * (lo + hi);
            match self.advance(lo, y.clone(), f.clone(), mid, None, None)? {
                Advance::Reached { y: ym, f: fm } => {
                    lo = mid;
                    y = ym;
                    f = fm;
                }
                Advance::Exceeded { t_lo, y_lo, f_lo, t_hi } => {
                    lo = t_lo;
                    y = y_lo;
                    f = f_lo;
                    hi = t_hi.min(mid);
                }
                Advance::Stalled { t } => hi = t.max(lo),
                // range exits past a genuine blow-up are not tracked
                Advance::LeftU { t } => hi = t.max(lo),
            }
            if hi <= lo {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-13..=1e-3).contains(&tol) {
        return Err(Error::InvalidParameter(format!("tol {tol} outside [1e-13, 1e-3]")));
    }
    Ok(())
}

/// Integrates the Riccati system from `ψ(0) = u`, `φ(0) = 0` up to
/// `horizon`, stopping early on blow-up or on leaving the
/// bounded-exponential set.
pub fn solve_riccati(
    model: &AffineModel,
    u: &[Complex64],
    horizon: f64,
    tol: f64,
) -> Result<TransformSolution> {
    check_tol(tol)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon {horizon} must be positive")));
    }
    let n = model.dim();
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            what: "complex argument",
            expected: n,
            got: u.len(),
        });
    }
    let u_ok = model.space.in_u(u)?;
    if !u_ok {
        warn!("initial argument {u:?} is outside the bounded-exponential set");
    }
    let check_range = u_ok
        && matches!(
            model.space,
            StateSpace::Canonical { .. } | StateSpace::SymPSD { .. }
        );
    let integ = Integrator {
        model,
        tol,
        check_range,
    };
    let mut y0 = Vec::with_capacity(n + 1);
    y0.push(Complex64::new(0.0, 0.0));
    y0.extend_from_slice(u);
    let mut f0 = vec![Complex64::new(0.0, 0.0); n + 1];
    integ.rhs(&y0, &mut f0);
    let mut grid = vec![GridNode {
        t: 0.0,
        phi: y0[0],
        psi: u.to_vec(),
        dphi: f0[0],
        dpsi: f0[1..].to_vec(),
    }];
    let status = match integ.advance(0.0, y0, f0, horizon, None, Some(&mut grid))? {
        Advance::Reached { .. } => SolveStatus::Complete,
        Advance::Exceeded { t_lo, y_lo, f_lo, t_hi } => SolveStatus::BlowUp {
            t_star: integ.bracket(t_lo, y_lo, f_lo, t_hi, tol * horizon)?,
        },
        Advance::Stalled { t } => SolveStatus::BlowUp { t_star: t },
        Advance::LeftU { t } => SolveStatus::LeftU { t_star: t },
    };
    Ok(TransformSolution {
        u0: u.to_vec(),
        grid,
        status,
        tol,
        horizon,
    })
}

/// Value of the affine transform, with a marker for mass lost to
/// blow-up (the cemetery contributes 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformValue {
    pub value: Complex64,
    pub killed: bool,
}

/// `E_x[e^{<u, X_t>}] = exp(φ(t,u) + <ψ(t,u), x>)` from the Riccati solution.
pub fn transform(
    model: &AffineModel,
    x: &[f64],
    t: f64,
    u: &[Complex64],
    tol: f64,
) -> Result<TransformValue> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            what: "state",
            expected: model.dim(),
            got: x.len(),
        });
    }
    if !model.space.contains(x, MEMBERSHIP_TOL) {
        return Err(Error::OutsideStateSpace(x.to_vec()));
    }
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time {t} must be nonnegative")));
    }
    if t == 0.0 {
        if u.len() != x.len() {
            return Err(Error::DimensionMismatch {
                what: "complex argument",
                expected: x.len(),
                got: u.len(),
            });
        }
        return Ok(TransformValue {
            value: cdot(u, x).exp(),
            killed: false,
        });
    }
    let sol = solve_riccati(model, u, t, tol)?;
    transform_from(&sol, x, t)
}

/// Evaluates the transform at time `t ≤ horizon` of an existing solution.
pub fn transform_from(sol: &TransformSolution, x: &[f64], t: f64) -> Result<TransformValue> {
    match sol.status {
        SolveStatus::BlowUp { t_star } if t_star <= t || t > sol.t_max() => {
            return Ok(TransformValue {
                value: Complex64::new(0.0, 0.0),
                killed: true,
            })
        }
        SolveStatus::LeftU { t_star } if t > sol.t_max() => return Err(Error::LeftU { t_star }),
        _ => {}
    }
    let (phi, psi) = sol
        .at(t)
        .ok_or_else(|| Error::InvalidParameter(format!("time {t} beyond solved horizon")))?;
    Ok(TransformValue {
        value: (phi + cdot(&psi, x)).exp(),
        killed: false,
    })
}

/// Residuals of `Φ(t+s,u) = Φ(t,u) Φ(s,ψ(t,u))` and
/// `ψ(t+s,u) = ψ(s,ψ(t,u))`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SemiflowResidual {
    pub phi_residual: f64,
    pub psi_residual: f64,
}

fn end_point(
    model: &AffineModel,
    u: &[Complex64],
    t: f64,
    tol: f64,
) -> Result<(Complex64, Vec<Complex64>)> {
    if t == 0.0 {
        return Ok((Complex64::new(0.0, 0.0), u.to_vec()));
    }
    let sol = solve_riccati(model, u, t, tol)?;
    match sol.status {
        SolveStatus::Complete => {
            let last = sol.last();
            Ok((last.phi, last.psi.clone()))
        }
        SolveStatus::BlowUp { t_star } => Err(Error::BlowUp { t_star }),
        SolveStatus::LeftU { t_star } => Err(Error::LeftU { t_star }),
    }
}

pub fn semiflow_residual(
    model: &AffineModel,
    u: &[Complex64],
    t: f64,
    s: f64,
    tol: f64,
) -> Result<SemiflowResidual> {
    check_tol(tol)?;
    if t < 0.0 || s < 0.0 {
        return Err(Error::InvalidParameter("semiflow times must be nonnegative".into()));
    }
    let (phi_ts, psi_ts) = end_point(model, u, t + s, tol)?;
    let (phi_t, psi_t) = end_point(model, u, t, tol)?;
    let (phi_s, psi_s) = end_point(model, &psi_t, s, tol)?;
    let lhs = phi_ts.exp();
    let rhs = (phi_t + phi_s).exp();
    let diff: Vec<Complex64> = psi_ts.iter().zip(&psi_s).map(|(a, b)| a - b).collect();
    Ok(SemiflowResidual {
        phi_residual: (lhs - rhs).norm(),
        psi_residual: cnorm(&diff),
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

const GL_NODES: usize = 32;

/// `(1/η) ∫_0^η Φ(s,u) e^{<ψ(s,u), x>} ds`, the smoothed exponential.
pub fn g_smoothed(model: &AffineModel, u: &[Complex64], eta: f64, x: &[f64]) -> Result<Complex64> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta {eta} must be positive")));
    }
    if !model.space.contains(x, MEMBERSHIP_TOL) {
        return Err(Error::OutsideStateSpace(x.to_vec()));
    }
    let sol = solve_riccati(model, u, eta, FINE_TOL)?;
    match sol.status {
        SolveStatus::Complete => {}
        SolveStatus::BlowUp { t_star } => return Err(Error::BlowUp { t_star }),
        SolveStatus::LeftU { t_star } => return Err(Error::LeftU { t_star }),
    }
    let (nodes, weights) = gauss_legendre(GL_NODES);
    let mut acc = Complex64::new(0.0, 0.0);
    for (z, w) in nodes.iter().zip(&weights) {
        let s = 0.5 * eta * (z + 1.0);
        let (phi, psi) = sol.at(s).expect("quadrature node inside solved range");
        acc += (phi + cdot(&psi, x)).exp() * *w;
    }
    // (1/η)·(η/2)·Σ w f
    Ok(acc * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn wishart_1d_closed_form() {
        let m = presets::wishart(1, 1);
        let sol = solve_riccati(&m, &[c(-1.0, 0.0)], 0.5, 1e-10).unwrap();
        assert!(sol.is_complete());
        let last = sol.last();
        assert_eq!(last.t, 0.5);
        let phi_ref = -0.5 * 2f64.ln();
        assert!((last.phi.re - phi_ref).abs() / phi_ref.abs() < 1e-6);
        assert!((last.psi[0].re + 0.5).abs() / 0.5 < 1e-6);
        assert_eq!(sol.grid[0].t, 0.0);
        assert_eq!(sol.grid[0].phi, c(0.0, 0.0));
        assert_eq!(sol.grid[0].psi, vec![c(-1.0, 0.0)]);
        assert!(sol.grid.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn brownian_constant_psi() {
        let m = presets::brownian_1d();
        let sol = solve_riccati(&m, &[c(0.0, 1.0)], 1.0, 1e-10).unwrap();
        let last = sol.last();
        assert!((last.phi - c(-0.5, 0.0)).norm() < 1e-12);
        assert_eq!(last.psi, vec![c(0.0, 1.0)]);
    }

    #[test]
    fn blow_up_is_bracketed_at_the_pole() {
        let m = presets::wishart(1, 1);
        let u = 2.0;
        let sol = solve_riccati(&m, &[c(u, 0.0)], 1.0, 1e-8).unwrap();
        match sol.status {
            SolveStatus::BlowUp { t_star } => assert!((t_star - 0.5 / u).abs() < 1e-6, "{t_star}"),
            s => panic!("expected blow-up, got {s:?}"),
        }
        let v = transform(&m, &[1.0], 0.5, &[c(u, 0.0)], 1e-8).unwrap();
        assert!(v.killed && v.value == c(0.0, 0.0));
    }

    #[test]
    fn transform_examples() {
        let w = presets::wishart(1, 1);
        let v = transform(&w, &[1.0], 0.5, &[c(-1.0, 0.0)], 1e-10).unwrap();
        assert!((v.value.re - 0.428_881_9).abs() < 1e-7);

        let u = [c(-0.3, 0.7)];
        let v0 = transform(&w, &[2.0], 0.0, &u, 1e-10).unwrap();
        assert_eq!(v0.value, (u[0] * 2.0).exp());

        let d = presets::drift_interval(1.0, -1.0, 0.0, 1.0);
        let v = transform(&d, &[0.0], 2f64.ln(), &[c(1.0, 0.0)], 1e-10).unwrap();
        assert!((v.value.re - 0.5f64.exp()).abs() < 1e-9);
        assert!((v.value.re - 1.648_721_3).abs() < 1e-7);
    }

    #[test]
    fn invalid_arguments() {
        let m = presets::brownian_1d();
        assert!(solve_riccati(&m, &[c(0.0, 1.0)], 1.0, 1e-2).is_err());
        assert!(solve_riccati(&m, &[c(0.0, 1.0)], 0.0, 1e-8).is_err());
        assert!(matches!(
            solve_riccati(&m, &[c(0.0, 1.0), c(0.0, 0.0)], 1.0, 1e-8),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            transform(&presets::wishart(1, 1), &[-1.0], 1.0, &[c(-1.0, 0.0)], 1e-8),
            Err(Error::OutsideStateSpace(_))
        ));
    }

    #[test]
    fn semiflow_examples() {
        let w = presets::wishart(1, 1);
        let r = semiflow_residual(&w, &[c(-1.0, 0.0)], 0.3, 0.4, 1e-10).unwrap();
        assert!(r.phi_residual <= 1e-8 && r.psi_residual <= 1e-8, "{r:?}");
        let r0 = semiflow_residual(&w, &[c(-1.0, 0.5)], 0.3, 0.0, 1e-10).unwrap();
        assert_eq!(r0.phi_residual, 0.0);
        assert_eq!(r0.psi_residual, 0.0);
        let ch = presets::chain(2);
        let r = semiflow_residual(&ch, &[c(-1.0, 0.0)], 0.5, 0.5, 1e-10).unwrap();
        assert!(r.phi_residual <= 1e-8 && r.psi_residual <= 1e-8, "{r:?}");
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(32);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((int - 2.0 / 11.0).abs() < 1e-14);
    }

    fn trapezoid<G: Fn(f64) -> f64>(f: G, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * f(a + i as f64 * h)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn g_smoothed_examples() {
        let bm = presets::brownian_1d();
        let g = g_smoothed(&bm, &[c(0.0, 1.0)], 1.0, &[0.0]).unwrap();
        let exact = (1.0 - (-0.5f64).exp()) / 0.5;
        let trap = trapezoid(|s| (-s / 2.0).exp(), 0.0, 1.0, 20_000);
        assert!((exact - trap).abs() < 1e-8);
        assert!((g.re - exact).abs() / exact < 1e-8 && g.im.abs() < 1e-12);
        assert!((exact - 0.786_938_7).abs() < 1e-7);

        let w = presets::wishart(1, 1);
        let g = g_smoothed(&w, &[c(-1.0, 0.0)], 0.5, &[0.0]).unwrap();
        let exact = 2.0 * (2f64.sqrt() - 1.0);
        let trap = trapezoid(|s| (1.0 + 2.0 * s).powf(-0.5), 0.0, 0.5, 20_000) / 0.5;
        assert!((exact - trap).abs() < 1e-8);
        assert!((g.re - exact).abs() / exact < 1e-8);

        let u = [c(-0.4, 0.9)];
        let g = g_smoothed(&w, &u, 1e-6, &[1.3]).unwrap();
        assert!((g - (u[0] * 1.3).exp()).norm() < 1e-5);
    }

    #[test]
    fn dense_output_tracks_closed_form() {
        let w = presets::wishart(1, 1);
        let sol = solve_riccati(&w, &[c(-1.5, 0.3)], 1.0, 1e-11).unwrap();
        for j in 0..=37 {
            let t = j as f64 / 37.0;
            let (phi, psi) = sol.at(t).unwrap();
            let u = c(-1.5, 0.3);
            let psi_ref = u / (1.0 - 2.0 * t * u);
            let phi_ref = -0.5 * (1.0 - 2.0 * t * u).ln();
            assert!((psi[0] - psi_ref).norm() < 1e-8);
            assert!((phi - phi_ref).norm() < 1e-8);
        }
        assert!(sol.at(1.5).is_none());
    }

    #[test]
    fn csv_layout() {
        let w = presets::wishart(2, 1);
        let u: Vec<Complex64> = [-1.0, 0.0, -0.5].iter().map(|&v| c(v, 0.1)).collect();
        let sol = solve_riccati(&w, &u, 0.2, 1e-8).unwrap();
        let csv = sol.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,re_phi,im_phi,re_psi_1,re_psi_2,re_psi_3,im_psi_1,im_psi_2,im_psi_3"
        );
        assert_eq!(lines.next().unwrap().split(',').count(), 9);
        assert_eq!(csv.lines().last().unwrap(), "# status=Complete");
        assert_eq!(csv.lines().count(), sol.grid.len() + 2);
    }
}
