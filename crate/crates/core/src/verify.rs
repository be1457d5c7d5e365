//! Desk-scale checks of the structural properties of affine transforms:
//! Monte Carlo transform consistency, the martingale property of
//! `Φ(T−t,u) e^{<ψ(T−t,u), X_t>}`, regularity at `t = 0`, the semiflow
//! identity, and agreement of the solver with the closed forms.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::closed_forms::{
    chain_phi_psi, ctmc_oracle_transform, wishart_phi_psi, ChainSpec, ClosedForm, WishartSpec,
};
use crate::error::{Error, Result};
use crate::linalg::{cdot, cnorm, flatten_sym};
use crate::model::{AffineModel, StateSpace};
use crate::riccati::{self, semiflow_residual, solve_riccati, SolveStatus, FINE_TOL, RANGE_MARGIN};
use crate::simulate::{simulate, Scheme, SimConfig};

/// Solver tolerance for reference values.
pub const REFERENCE_TOL: f64 = 1e-10;

/// Mean and componentwise standard errors of complex samples.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Moments {
    mean: Complex64,
    se_re: f64,
    se_im: f64,
}

fn moments(values: &[Complex64]) -> Moments {
    let n = values.len() as f64;
    let mean: Complex64 = values.iter().sum::<Complex64>() / n;
    let (mut v_re, mut v_im) = (0.0, 0.0);
    for v in values {
        v_re += (v.re - mean.re).powi(2);
        v_im += (v.im - mean.im).powi(2);
    }
    let denom = (n - 1.0).max(1.0) * n;
    Moments {
        mean,
        se_re: (v_re / denom).sqrt(),
        se_im: (v_im / denom).sqrt(),
    }
}

/// Absolute slack for round-off in sample means and interpolated references.
pub const NUMERIC_SLACK: f64 = 1e-9;

fn within(diff: Complex64, se_re: f64, se_im: f64, allowance: f64) -> bool {
    let slack = allowance + NUMERIC_SLACK;
    diff.re.abs() <= 3.0 * se_re + slack && diff.im.abs() <= 3.0 * se_im + slack
}

fn z_score(diff: Complex64, se_re: f64, se_im: f64) -> Option<f64> {
    let z = |d: f64, s: f64| {
        if s > 0.0 {
            Some(d.abs() / s)
        } else if d == 0.0 {
            Some(0.0)
        } else {
            None
        }
    };
    Some(z(diff.re, se_re)?.max(z(diff.im, se_im)?))
}

/// Bias allowance used when none is given: zero for schemes that sample the
/// law exactly, `10·dt` for Euler steps with state-dependent coefficients or
/// boundary projection.
pub fn default_bias_allowance(model: &AffineModel, cfg: &SimConfig) -> f64 {
    let exact = cfg.scheme == Scheme::GillespieExact
        || (model.has_constant_coefficients()
            && matches!(model.space, StateSpace::Canonical { m: 0, .. }));
    if exact {
        0.0
    } else {
        10.0 * cfg.dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCReport {
    pub estimate: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub reference: Complex64,
    /// Largest of the real and imaginary z-scores; `null` when a component
    /// has zero standard error and nonzero deviation.
    pub z_score: Option<f64>,
    pub bias_allowance: f64,
    pub pass: bool,
    /// Largest `|e^{<u,X_t>}|` over surviving samples.
    pub max_modulus: f64,
    pub t: f64,
    pub n_paths: usize,
    pub n_failed: usize,
    pub dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

fn require_in_u(model: &AffineModel, u: &[Complex64]) -> Result<()> {
    if model.space.in_u(u)? {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "argument {u:?} is outside the bounded-exponential set"
        )))
    }
}

/// Compares the ensemble mean of `e^{<u,X_t>}` (zero on killed paths) with
/// the solver transform.
pub fn mc_transform_check(
    model: &AffineModel,
    x0: &[f64],
    t: f64,
    u: &[Complex64],
    cfg: &SimConfig,
) -> Result<MCReport> {
    require_in_u(model, u)?;
    let reference = riccati::transform(model, x0, t, u, REFERENCE_TOL)?.value;
    mc_transform_check_against(model, x0, t, u, cfg, reference, None)
}

/// As [`mc_transform_check`] with an explicit reference and, optionally, an
/// explicit bias allowance.
pub fn mc_transform_check_against(
    model: &AffineModel,
    x0: &[f64],
    t: f64,
    u: &[Complex64],
    cfg: &SimConfig,
    reference: Complex64,
    allowance: Option<f64>,
) -> Result<MCReport> {
    require_in_u(model, u)?;
    let run = SimConfig {
        horizon: t,
        ..cfg.clone()
    }
    .end_only();
    let ens = simulate(model, x0, &run)?;
    let last = ens.times.len() - 1;
    let mut max_modulus: f64 = 0.0;
    let samples: Vec<Complex64> = (0..ens.n_paths())
        .map(|p| match ens.state(p, last) {
            Some(x) => {
                let v = cdot(u, x).exp();
                max_modulus = max_modulus.max(v.norm());
                v
            }
            None => Complex64::new(0.0, 0.0),
        })
        .collect();
    let m = moments(&samples);
    let allowance = allowance.unwrap_or_else(|| default_bias_allowance(model, cfg));
    let diff = m.mean - reference;
    let n_failed = ens.n_failed();
    Ok(MCReport {
        estimate: m.mean,
        stderr_re: m.se_re,
        stderr_im: m.se_im,
        reference,
        z_score: z_score(diff, m.se_re, m.se_im),
        bias_allowance: allowance,
        pass: n_failed == 0 && within(diff, m.se_re, m.se_im, allowance),
        max_modulus,
        t,
        n_paths: ens.n_paths(),
        n_failed,
        dt: cfg.dt,
        seed: cfg.seed,
        scheme: cfg.scheme,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub horizon: f64,
    pub grid: Vec<f64>,
    pub means: Vec<Complex64>,
    pub stderr_re: Vec<f64>,
    pub stderr_im: Vec<f64>,
    /// `M_0 = Φ(T,u) e^{<ψ(T,u), x0>}`.
    pub reference: Complex64,
    /// Largest pairwise `|mean_i − mean_j|`.
    pub max_drift: f64,
    pub bias_allowance: f64,
    pub pass: bool,
    pub n_paths: usize,
    pub n_failed: usize,
    pub dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

/// Estimates `E[Φ(T−t_g,u) e^{<ψ(T−t_g,u), X_{t_g}>}]` on `grid_size`
/// equispaced nodes of `[0,T]`. The step `cfg.dt` must divide the node
/// spacing.
pub fn martingale_check(
    model: &AffineModel,
    x0: &[f64],
    horizon: f64,
    u: &[Complex64],
    grid_size: usize,
    cfg: &SimConfig,
) -> Result<MartingaleReport> {
    require_in_u(model, u)?;
    if grid_size < 2 {
        return Err(Error::InvalidParameter("martingale grid needs at least 2 nodes".into()));
    }
    if horizon <= 0.0 || horizon.is_nan() {
        return Err(Error::InvalidParameter(format!("horizon {horizon} must be positive")));
    }
    let sol = solve_riccati(model, u, horizon, REFERENCE_TOL)?;
    match sol.status {
        SolveStatus::Complete => {}
        SolveStatus::BlowUp { t_star } => return Err(Error::BlowUp { t_star }),
        SolveStatus::LeftU { t_star } => return Err(Error::LeftU { t_star }),
    }
    let spacing = horizon / (grid_size - 1) as f64;
    let stride = (spacing / cfg.dt).round();
    if stride < 1.0 || (stride * cfg.dt - spacing).abs() > 1e-9 * horizon {
        return Err(Error::InvalidParameter(format!(
            "dt {} does not divide the node spacing {spacing}",
            cfg.dt
        )));
    }
    let run = SimConfig {
        horizon,
        ..cfg.clone()
    }
    .with_record_stride(stride as usize);
    let ens = simulate(model, x0, &run)?;
    if ens.times.len() != grid_size {
        return Err(Error::Numerical(format!(
            "expected {grid_size} recorded nodes, got {}",
            ens.times.len()
        )));
    }
    let (phi_t, psi_t) = sol.at(horizon).expect("solved up to the horizon");
    let reference = (phi_t + cdot(&psi_t, x0)).exp();

    let mut means = Vec::with_capacity(grid_size);
    let mut se_re = Vec::with_capacity(grid_size);
    let mut se_im = Vec::with_capacity(grid_size);
    for (g, &t) in ens.times.iter().enumerate() {
        let (phi, psi) = sol.at(horizon - t).expect("node inside solved range");
        let samples: Vec<Complex64> = (0..ens.n_paths())
            .map(|p| match ens.state(p, g) {
                Some(x) => (phi + cdot(&psi, x)).exp(),
                None => Complex64::new(0.0, 0.0),
            })
            .collect();
        let m = moments(&samples);
        means.push(m.mean);
        se_re.push(m.se_re);
        se_im.push(m.se_im);
    }

    let allowance = default_bias_allowance(model, cfg);
    let mut pass = ens.n_failed() == 0;
    let mut max_drift: f64 = 0.0;
    for i in 0..grid_size {
        pass &= within(means[i] - reference, se_re[i], se_im[i], allowance);
        for j in i + 1..grid_size {
            let d = means[i] - means[j];
            max_drift = max_drift.max(d.norm());
            pass &= within(d, se_re[i] + se_re[j], se_im[i] + se_im[j], allowance);
        }
    }
    Ok(MartingaleReport {
        horizon,
        grid: ens.times.clone(),
        means,
        stderr_re: se_re,
        stderr_im: se_im,
        reference,
        max_drift,
        bias_allowance: allowance,
        pass,
        n_paths: ens.n_paths(),
        n_failed: ens.n_failed(),
        dt: cfg.dt,
        seed: cfg.seed,
        scheme: cfg.scheme,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub h: f64,
    pub f_err: f64,
    pub r_err: f64,
}

/// Forward-difference errors of `Φ` and `ψ` at `t = 0` against `F(u)` and
/// `R(u)`, relative to `1 + |F(u)|` and `1 + ‖R(u)‖`.
pub fn regularity_fd_check(model: &AffineModel, u: &[Complex64], h: f64) -> Result<RegularityReport> {
    require_in_u(model, u)?;
    if !(1e-6..=1e-2).contains(&h) {
        return Err(Error::InvalidParameter(format!("step {h} outside [1e-6, 1e-2]")));
    }
    let sol = solve_riccati(model, u, h, FINE_TOL)?;
    match sol.status {
        SolveStatus::Complete => {}
        SolveStatus::BlowUp { t_star } => return Err(Error::BlowUp { t_star }),
        SolveStatus::LeftU { t_star } => return Err(Error::LeftU { t_star }),
    }
    let last = sol.last();
    let f = model.eval_f(u)?;
    let r = model.eval_r(u)?;
    let fd_f = (last.phi.exp() - 1.0) / h;
    let diff: Vec<Complex64> = (0..u.len()).map(|i| (last.psi[i] - u[i]) / h - r[i]).collect();
    Ok(RegularityReport {
        h,
        f_err: (fd_f - f).norm() / (1.0 + f.norm()),
        r_err: cnorm(&diff) / (1.0 + cnorm(&r)),
    })
}

/// Errors below this level are treated as exact when checking decay rates.
pub const DECAY_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularitySweep {
    pub u: Vec<Complex64>,
    pub steps: Vec<RegularityReport>,
    /// Every halving shrinks each error above [`DECAY_FLOOR`] by at least
    /// `max_ratio`.
    pub first_order: bool,
    pub final_ok: bool,
    pub pass: bool,
}

/// Runs [`regularity_fd_check`] over decreasing steps and checks the decay.
pub fn regularity_sweep(
    model: &AffineModel,
    u: &[Complex64],
    steps: &[f64],
    max_ratio: f64,
    final_tol: f64,
) -> Result<RegularitySweep> {
    let reports = steps
        .iter()
        .map(|&h| regularity_fd_check(model, u, h))
        .collect::<Result<Vec<_>>>()?;
    let decays = |a: f64, b: f64| a <= DECAY_FLOOR || b <= max_ratio * a;
    let first_order = reports
        .windows(2)
        .all(|w| decays(w[0].f_err, w[1].f_err) && decays(w[0].r_err, w[1].r_err));
    let final_ok = reports
        .last()
        .is_some_and(|r| r.f_err <= final_tol && r.r_err <= final_tol);
    Ok(RegularitySweep {
        u: u.to_vec(),
        steps: reports,
        first_order,
        final_ok,
        pass: first_order && final_ok,
    })
}

/// The closed-form families with the model parameters used throughout the
/// checks.
pub fn closed_form_families() -> Vec<ClosedForm> {
    vec![
        ClosedForm::Brownian,
        ClosedForm::Wishart(WishartSpec { d: 1, k: 1 }),
        ClosedForm::Wishart(WishartSpec { d: 2, k: 1 }),
        ClosedForm::Drift {
            b: 1.0,
            big_b: -1.0,
            r1: 0.0,
            r2: 1.0,
        },
        ClosedForm::Chain(ChainSpec { k: 2 }),
    ]
}

/// Argument used for the regularity sweep of each closed-form family.
pub fn regularity_argument(family: &ClosedForm) -> Vec<Complex64> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    match family {
        ClosedForm::Brownian => vec![c(0.0, 1.0)],
        ClosedForm::Wishart(s) => {
            let u = DMatrix::<f64>::identity(s.d, s.d) * (-0.5 / s.d as f64);
            flatten_sym(&u).into_iter().map(|v| c(v, 0.0)).collect()
        }
        ClosedForm::Drift { .. } => vec![c(1.0, 0.0)],
        ClosedForm::Chain(_) => vec![c(-0.5, 0.0)],
    }
}

/// Random `−v vᵀ`-type element of `−S_d^+` with Frobenius norm in
/// `[0.1, max_norm]`.
pub fn sample_negative_psd(d: usize, max_norm: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let p = &g * g.transpose();
    let norm = p.norm().max(1e-12);
    let target = rng.random_range(0.1..max_norm);
    -p * (target / norm)
}

/// Random element of the bounded-exponential set of `space`, with real and
/// imaginary parts of size at most about `scale`.
pub fn sample_u(space: &StateSpace, scale: f64, rng: &mut impl Rng) -> Vec<Complex64> {
    let mut sym = || rng.random_range(-scale..scale);
    match *space {
        StateSpace::Canonical { m, n } => (0..n)
            .map(|i| {
                let im = sym();
                let re = if i < m { -0.5 * (sym() + scale) } else { 0.0 };
                Complex64::new(re, im)
            })
            .collect(),
        StateSpace::SymPSD { d } => {
            let im = flatten_sym(&DMatrix::from_fn(d, d, |_, _| sym()));
            let re = flatten_sym(&sample_negative_psd(d, scale, rng));
            re.into_iter().zip(im).map(|(r, i)| Complex64::new(r, i)).collect()
        }
        StateSpace::Interval { .. } => vec![Complex64::new(sym(), sym())],
        // |Im u| < π keeps the chain's q(t,u) away from zero
        StateSpace::FiniteChain { .. } => {
            let re = 0.75 * sym() - 0.25 * scale;
            vec![Complex64::new(re, rng.random_range(-2.0..2.0))]
        }
    }
}

/// Largest relative error of the solver's `(Φ, ψ)` against the Wishart
/// closed form over all solver nodes on `[0, horizon]`.
pub fn wishart_reproduction_error(
    spec: WishartSpec,
    u: &DMatrix<f64>,
    horizon: f64,
    tol: f64,
) -> Result<f64> {
    let model = crate::presets::wishart(spec.d, spec.k);
    let uc: Vec<Complex64> = flatten_sym(u).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    let sol = solve_riccati(&model, &uc, horizon, tol)?;
    if !sol.is_complete() {
        return Err(Error::Numerical(format!("Wishart solve ended with {}", sol.status)));
    }
    let ucm = u.map(|v| Complex64::new(v, 0.0));
    let mut worst: f64 = 0.0;
    for node in &sol.grid {
        let (phi, psi) = wishart_phi_psi(spec, node.t, &ucm)?;
        let psi_flat = flatten_sym(&psi);
        let e_phi = (node.phi.exp() - phi).norm() / phi.norm();
        let diff: Vec<Complex64> = node.psi.iter().zip(&psi_flat).map(|(a, b)| a - b).collect();
        let e_psi = cnorm(&diff) / cnorm(&psi_flat).max(f64::MIN_POSITIVE);
        worst = worst.max(e_phi).max(e_psi);
    }
    Ok(worst)
}

/// Central-difference check that the Wishart closed form satisfies
/// `∂_tΦ = kΦ tr ψ` and `∂_tψ = 2ψ²`; returns the larger relative error.
pub fn wishart_closed_form_fd(spec: WishartSpec, t: f64, u: &DMatrix<Complex64>, h: f64) -> Result<f64> {
    let (phi_p, psi_p) = wishart_phi_psi(spec, t + h, u)?;
    let (phi_m, psi_m) = wishart_phi_psi(spec, t - h, u)?;
    let (phi, psi) = wishart_phi_psi(spec, t, u)?;
    let dphi = (phi_p - phi_m) / (2.0 * h);
    let dpsi = (psi_p - psi_m) / Complex64::new(2.0 * h, 0.0);
    let rhs_phi = phi * psi.trace() * spec.k as f64;
    let rhs_psi = &psi * &psi * Complex64::new(2.0, 0.0);
    let e_phi = (dphi - rhs_phi).norm() / rhs_phi.norm().max(f64::MIN_POSITIVE);
    let e_psi = (&dpsi - &rhs_psi).norm() / rhs_psi.norm().max(f64::MIN_POSITIVE);
    Ok(e_phi.max(e_psi))
}

/// Largest `|chain_phi_psi|`-transform error against the matrix-exponential
/// oracle over the given `(t,u)` grid and every state.
pub fn chain_oracle_error(spec: ChainSpec, times: &[f64], us: &[Complex64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &t in times {
        for &u in us {
            let (phi, psi) = chain_phi_psi(spec, t, u)?;
            for x in 0..=spec.k {
                let closed = phi * (psi * x as f64).exp();
                let oracle = ctmc_oracle_transform(spec, t, u, x)?;
                worst = worst.max((closed - oracle).norm());
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemiflowSweep {
    pub samples: usize,
    pub max_phi_residual: f64,
    pub max_psi_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Semiflow residuals at `samples` random `(t, s, u)` with `t, s ∈ [0, 1]`.
pub fn semiflow_sweep(
    model: &AffineModel,
    samples: usize,
    tol: f64,
    rng: &mut impl Rng,
) -> Result<SemiflowSweep> {
    let (mut mp, mut ms): (f64, f64) = (0.0, 0.0);
    for _ in 0..samples {
        let t = rng.random_range(0.0..1.0);
        let s = rng.random_range(0.0..1.0);
        let u = sample_u(&model.space, 1.0, rng);
        let r = semiflow_residual(model, &u, t, s, tol)?;
        mp = mp.max(r.phi_residual);
        ms = ms.max(r.psi_residual);
    }
    Ok(SemiflowSweep {
        samples,
        max_phi_residual: mp,
        max_psi_residual: ms,
        tol,
        pass: mp <= 100.0 * tol && ms <= 100.0 * tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeSweep {
    pub samples: usize,
    pub complete: usize,
    pub violations: usize,
    pub pass: bool,
}

/// Checks that `ψ(t,u)` stays in the bounded-exponential set at every node
/// of every complete solution started from a random `u` in that set.
pub fn range_sweep(
    model: &AffineModel,
    samples: usize,
    horizon: f64,
    tol: f64,
    rng: &mut impl Rng,
) -> Result<RangeSweep> {
    let (mut complete, mut violations) = (0, 0);
    for _ in 0..samples {
        let u = sample_u(&model.space, 2.0, rng);
        let sol = solve_riccati(model, &u, horizon, tol)?;
        if !sol.is_complete() {
            continue;
        }
        complete += 1;
        for node in &sol.grid {
            if !model.space.in_u_margin(&node.psi, RANGE_MARGIN)? {
                violations += 1;
                break;
            }
        }
    }
    Ok(RangeSweep {
        samples,
        complete,
        violations,
        pass: violations == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverAgreement {
    pub samples: usize,
    pub max_abs_error: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Solver transform against the closed form at random `(t, u, x)`.
pub fn closed_form_agreement(
    family: &ClosedForm,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<SolverAgreement> {
    let model = family.model();
    let pts = model.space.validation_grid().points;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let t = rng.random_range(0.05..1.0);
        let u = sample_u(&model.space, 1.0, rng);
        let x = &pts[rng.random_range(0..pts.len())];
        let solver = riccati::transform(&model, x, t, &u, REFERENCE_TOL)?.value;
        let closed = family.transform(t, &u, x)?;
        worst = worst.max((solver - closed).norm());
    }
    let tol = 1e-7;
    Ok(SolverAgreement {
        samples,
        max_abs_error: worst,
        tol,
        pass: worst <= tol,
    })
}

/// One named check in a suite report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteEntry {
    pub name: String,
    pub pass: bool,
    pub report: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub n_paths: usize,
    pub dt: f64,
    pub checks: Vec<SuiteEntry>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    pub n_paths: usize,
    pub dt: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 42,
            n_paths: 10_000,
            dt: 1e-3,
        }
    }
}

pub const SUITES: [&str; 3] = ["closed-forms", "monte-carlo", "all"];

fn entry<T: Serialize>(name: impl Into<String>, pass: bool, report: &T) -> Result<SuiteEntry> {
    Ok(SuiteEntry {
        name: name.into(),
        pass,
        report: serde_json::to_value(report)?,
    })
}

fn closed_form_suite(opts: &SuiteOptions, out: &mut Vec<SuiteEntry>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for d in [1, 2] {
        let spec = WishartSpec { d, k: 1 };
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let u = sample_negative_psd(d, 2.0, &mut rng);
            worst = worst.max(wishart_reproduction_error(spec, &u, 1.0, 1e-10)?);
        }
        let report = serde_json::json!({ "max_rel_error": worst, "tol": 1e-6 });
        out.push(entry(format!("wishart riccati d={d}"), worst <= 1e-6, &report)?);
    }

    let chain = ChainSpec { k: 2 };
    let times = [0.1, 0.5, 1.0, 2.0, 5.0];
    let c = Complex64::new;
    let us = [c(-2.0, 0.0), c(-1.0, 0.0), c(0.5, 0.0), c(0.0, 1.0), c(-1.0, 1.5)];
    let err = chain_oracle_error(chain, &times, &us)?;
    let report = serde_json::json!({ "max_abs_error": err, "tol": 1e-10 });
    out.push(entry("chain oracle", err <= 1e-10, &report)?);

    for family in closed_form_families() {
        let model = family.model();
        let name = family.name();
        let agree = closed_form_agreement(&family, 10, &mut rng)?;
        out.push(entry(format!("solver vs closed form {name}"), agree.pass, &agree)?);
        let sweep = semiflow_sweep(&model, 5, 1e-10, &mut rng)?;
        out.push(entry(format!("semiflow {name}"), sweep.pass, &sweep)?);
        let reg = regularity_sweep(
            &model,
            &regularity_argument(&family),
            &[1e-2, 5e-3, 2.5e-3],
            0.6,
            1e-3,
        )?;
        out.push(entry(format!("regularity {name}"), reg.pass, &reg)?);
        let range = range_sweep(&model, 10, 1.0, 1e-9, &mut rng)?;
        out.push(entry(format!("range {name}"), range.pass, &range)?);
    }

    // g_{u,η} → e^{<u,x>} as η → 0
    let model = crate::presets::wishart(1, 1);
    let u = [c(-1.0, 0.5)];
    let x = [1.0];
    let target = cdot(&u, &x).exp();
    let errs = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&eta| Ok((riccati::g_smoothed(&model, &u, eta, &x)? - target).norm()))
        .collect::<Result<Vec<f64>>>()?;
    let pass = errs.windows(2).all(|w| w[1] < w[0]) && errs[2] <= 1e-2;
    let report = serde_json::json!({ "eta": [1e-1, 1e-2, 1e-3], "errors": errs });
    out.push(entry("smoothed exponential limit", pass, &report)?);
    Ok(())
}

fn monte_carlo_suite(opts: &SuiteOptions, out: &mut Vec<SuiteEntry>) -> Result<()> {
    let c = Complex64::new;
    let euler = SimConfig::new(opts.dt, 1.0, opts.n_paths, opts.seed);
    let exact = euler.clone().with_scheme(Scheme::GillespieExact);
    let brownian = crate::presets::brownian_1d();
    let chain = crate::presets::chain(2);
    let wishart = crate::presets::wishart(1, 1);
    let drift = crate::presets::drift_interval(1.0, -1.0, 0.0, 1.0);
    let chain_spec = ChainSpec { k: 2 };

    let r = mc_transform_check_against(
        &brownian,
        &[0.0],
        1.0,
        &[c(0.0, 1.0)],
        &euler,
        c((-0.5f64).exp(), 0.0),
        None,
    )?;
    out.push(entry("mc transform brownian", r.pass, &r)?);
    let reference = ctmc_oracle_transform(chain_spec, 1.0, c(-1.0, 0.0), 0)?;
    let r = mc_transform_check_against(&chain, &[0.0], 1.0, &[c(-1.0, 0.0)], &exact, reference, None)?;
    out.push(entry("mc transform chain(k=2)", r.pass, &r)?);
    let reference = ClosedForm::Wishart(WishartSpec { d: 1, k: 1 }).transform(0.5, &[c(-1.0, 0.0)], &[1.0])?;
    let r = mc_transform_check_against(&wishart, &[1.0], 0.5, &[c(-1.0, 0.0)], &euler, reference, None)?;
    out.push(entry("mc transform wishart(d=1,k=1)", r.pass, &r)?);

    let cases: [(&str, &AffineModel, f64, f64, Complex64, &SimConfig); 4] = [
        ("brownian", &brownian, 0.0, 1.0, c(0.0, 1.0), &euler),
        ("chain(k=2)", &chain, 0.0, 1.0, c(-1.0, 0.0), &exact),
        ("wishart(d=1,k=1)", &wishart, 1.0, 0.5, c(-1.0, 0.0), &euler),
        ("drift", &drift, 0.0, 1.0, c(1.0, 0.0), &euler),
    ];
    for (name, model, x0, horizon, u, cfg) in cases {
        let r = martingale_check(model, &[x0], horizon, &[u], 5, cfg)?;
        out.push(entry(format!("martingale {name}"), r.pass, &r)?);
    }
    Ok(())
}

/// Runs a named suite; the report carries no timings, so equal options give
/// byte-identical JSON.
pub fn run_suite(name: &str, opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    match name {
        "closed-forms" => closed_form_suite(opts, &mut checks)?,
        "monte-carlo" => monte_carlo_suite(opts, &mut checks)?,
        "all" => {
            closed_form_suite(opts, &mut checks)?;
            monte_carlo_suite(opts, &mut checks)?;
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown suite {other:?}, expected one of {SUITES:?}"
            )))
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport {
        suite: name.to_string(),
        seed: opts.seed,
        n_paths: opts.n_paths,
        dt: opts.dt,
        checks,
        pass,
    })
}
