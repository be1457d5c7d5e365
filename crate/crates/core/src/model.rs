//! Affine parameter sets, state spaces and the Lévy–Khintchine functions.
//!
//! A model carries the admissible-looking parameters `(b, B, a, A, m, M, c, γ)`
//! together with a truncation radius. The functions
//!
//! ```text
//! F(u)   = <u,b> + ½<u,a u> − c + Σ_m w (e^{<u,ξ>} − 1 − <u,χ(ξ)>)
//! R_i(u) = <u,B e_i> + ½<u,A(e_i) u> − γ_i + Σ_{M(e_i)} w (e^{<u,ξ>} − 1 − <u,χ(ξ)>)
//! ```
//!
//! are evaluated exactly, since jump measures are finite atom lists. The
//! pointwise characteristics are `b(x) = b + Bx`, `c(x) = a + A(x)` and
//! `K(x,·) = m + M(x,·)` with killing at rate `c + <γ,x>` kept separately.

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    asymmetry, cdot, cquad, flatten_sym, matrix_from_rows, matrix_to_rows, min_eigenvalue,
    psd_project, sym_dim, unflatten_sym, PSD_TOL,
};

/// Tolerance used when checking that a point belongs to the state space.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// The supported state spaces. `SymPSD` states are flattened symmetric
/// matrices (see [`crate::linalg::flatten_sym`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum StateSpace {
    /// `R_+^m × R^{n−m}`.
    Canonical { m: usize, n: usize },
    /// The cone of positive semidefinite `d × d` matrices.
    SymPSD { d: usize },
    /// The compact interval `[r1, r2]`.
    Interval { r1: f64, r2: f64 },
    /// The lattice `{0, 1, …, k}`.
    FiniteChain { k: usize },
}

/// Sample points and recession directions used to check affine constraints
/// over an unbounded state space.
#[derive(Debug, Clone)]
pub struct ValidationGrid {
    pub points: Vec<Vec<f64>>,
    pub directions: Vec<Vec<f64>>,
}

impl StateSpace {
    /// Number of real coordinates.
    pub fn dim(&self) -> usize {
        match *self {
            StateSpace::Canonical { n, .. } => n,
            StateSpace::SymPSD { d } => sym_dim(d),
            StateSpace::Interval { .. } | StateSpace::FiniteChain { .. } => 1,
        }
    }

    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            StateSpace::Canonical { m, n } => n >= 1 && m <= n,
            StateSpace::SymPSD { d } => d >= 1,
            StateSpace::Interval { r1, r2 } => r1.is_finite() && r2.is_finite() && r1 < r2,
            StateSpace::FiniteChain { k } => k >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("malformed state space {self:?}")))
        }
    }

    fn check_len(&self, len: usize, what: &'static str) -> Result<()> {
        let n = self.dim();
        if len != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                got: len,
            });
        }
        Ok(())
    }

    /// Membership test with slack `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match *self {
            StateSpace::Canonical { m, .. } => x[..m].iter().all(|&v| v >= -tol),
            StateSpace::SymPSD { d } => min_eigenvalue(&unflatten_sym(x, d)) >= -tol,
            StateSpace::Interval { r1, r2 } => x[0] >= r1 - tol && x[0] <= r2 + tol,
            StateSpace::FiniteChain { k } => {
                let r = x[0].round();
                (x[0] - r).abs() <= tol && r >= 0.0 && r <= k as f64
            }
        }
    }

    /// Maps a point back into the state space: clamp for Canonical and
    /// Interval, eigenvalue clipping for SymPSD, nearest level for chains.
    pub fn project(&self, x: &mut [f64]) {
        match *self {
            StateSpace::Canonical { m, .. } => {
                for v in &mut x[..m] {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            StateSpace::SymPSD { d } => {
                let m = unflatten_sym(x, d);
                if min_eigenvalue(&m) < 0.0 {
                    let mut p = psd_project(&m);
                    if min_eigenvalue(&p) < 0.0 {
                        // strict clip for states that sat inside the PSD slack
                        let eig = p.clone().symmetric_eigen();
                        let q = &eig.eigenvectors;
                        p = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0)))
                            * q.transpose();
                        p = (&p + p.transpose()) * 0.5;
                    }
                    x.copy_from_slice(&flatten_sym(&p));
                }
            }
            StateSpace::Interval { r1, r2 } => x[0] = x[0].clamp(r1, r2),
            StateSpace::FiniteChain { k } => x[0] = x[0].round().clamp(0.0, k as f64),
        }
    }

    /// `n + 1` affinely independent points of the space.
    pub fn affine_points(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let unit = |i: usize| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        };
        match *self {
            StateSpace::Canonical { n, .. } => {
                let mut pts = vec![vec![0.0; n]];
                pts.extend((0..n).map(unit));
                pts
            }
            StateSpace::SymPSD { d } => {
                let mut pts = vec![vec![0.0; n]];
                for i in 0..d {
                    for j in i..d {
                        let mut v = DMatrix::<f64>::zeros(d, 1);
                        v[i] = 1.0;
                        v[j] = 1.0;
                        pts.push(flatten_sym(&(&v * v.transpose())));
                    }
                }
                pts
            }
            StateSpace::Interval { r1, r2 } => vec![vec![r1], vec![r2]],
            StateSpace::FiniteChain { k } => vec![vec![0.0], vec![k as f64]],
        }
    }

    /// Points and recession directions over which affine constraints are
    /// checked by [`AffineModel::validate`].
    pub fn validation_grid(&self) -> ValidationGrid {
        let n = self.dim();
        let unit = |i: usize, s: f64| {
            let mut e = vec![0.0; n];
            e[i] = s;
            e
        };
        match *self {
            StateSpace::Canonical { m, n } => {
                let mut directions: Vec<Vec<f64>> = (0..m).map(|i| unit(i, 1.0)).collect();
                for j in m..n {
                    directions.push(unit(j, 1.0));
                    directions.push(unit(j, -1.0));
                }
                let mut points = vec![vec![0.0; n]];
                for dir in &directions {
                    points.push(dir.clone());
                    points.push(dir.iter().map(|v| 10.0 * v).collect());
                }
                ValidationGrid { points, directions }
            }
            StateSpace::SymPSD { d } => {
                let mut directions = Vec::new();
                for i in 0..d {
                    for j in i..d {
                        for s in [1.0, -1.0] {
                            if i == j && s < 0.0 {
                                continue;
                            }
                            let mut v = DMatrix::<f64>::zeros(d, 1);
                            v[i] = 1.0;
                            v[j] += if i == j { 0.0 } else { s };
                            directions.push(flatten_sym(&(&v * v.transpose())));
                        }
                    }
                }
                let mut points = vec![vec![0.0; n]];
                for dir in &directions {
                    points.push(dir.clone());
                    points.push(dir.iter().map(|v| 10.0 * v).collect());
                }
                points.push(flatten_sym(&DMatrix::<f64>::identity(d, d)));
                ValidationGrid { points, directions }
            }
            StateSpace::Interval { r1, r2 } => ValidationGrid {
                points: (0..=10)
                    .map(|i| vec![r1 + (r2 - r1) * i as f64 / 10.0])
                    .collect(),
                directions: Vec::new(),
            },
            StateSpace::FiniteChain { k } => ValidationGrid {
                points: (0..=k).map(|j| vec![j as f64]).collect(),
                directions: Vec::new(),
            },
        }
    }

    /// Whether `x ↦ e^{<u,x>}` is bounded on the space, with slack `margin`
    /// on the real-part sign conditions.
    pub fn in_u_margin(&self, u: &[Complex64], margin: f64) -> Result<bool> {
        self.check_len(u.len(), "complex argument")?;
        Ok(match *self {
            StateSpace::Canonical { m, .. } => {
                u[..m].iter().all(|z| z.re <= margin) && u[m..].iter().all(|z| z.re.abs() <= margin)
            }
            StateSpace::SymPSD { d } => {
                let re: Vec<f64> = u.iter().map(|z| -z.re).collect();
                min_eigenvalue(&unflatten_sym(&re, d)) >= -(margin + PSD_TOL)
            }
            StateSpace::Interval { .. } | StateSpace::FiniteChain { .. } => true,
        })
    }

    /// Membership of `u` in the set of arguments with bounded exponential.
    pub fn in_u(&self, u: &[Complex64]) -> Result<bool> {
        self.in_u_margin(u, 0.0)
    }

    /// `sup_{x∈D} |e^{<u,x>}|`, infinite when `u` is outside the bounded set.
    pub fn sup_abs_exp(&self, u: &[Complex64]) -> Result<f64> {
        if !self.in_u(u)? {
            return Ok(f64::INFINITY);
        }
        Ok(match *self {
            StateSpace::Canonical { .. } | StateSpace::SymPSD { .. } => 1.0,
            StateSpace::Interval { r1, r2 } => (u[0].re * r1).max(u[0].re * r2).exp(),
            StateSpace::FiniteChain { k } => (u[0].re * k as f64).max(0.0).exp(),
        })
    }
}

/// Membership query for the set of bounded exponentials.
pub fn in_u(space: &StateSpace, u: &[Complex64]) -> Result<bool> {
    space.in_u(u)
}

/// One point mass `w · δ_ξ` of a jump measure, `w` per unit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub xi: Vec<f64>,
    pub w: f64,
}

/// Finite jump measure given as a list of weighted atoms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JumpMeasure {
    pub atoms: Vec<Atom>,
}

/// Truncation `χ(ξ) = ξ · 1{‖ξ‖ ≤ radius}`; returns the indicator.
pub fn truncated(xi: &[f64], radius: f64) -> bool {
    xi.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius
}

impl JumpMeasure {
    pub fn new(atoms: Vec<Atom>) -> Self {
        Self { atoms }
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `∫ (e^{<u,ξ>} − 1 − <u,χ(ξ)>) μ(dξ)`.
    pub fn levy_integral(&self, u: &[Complex64], chi_radius: f64) -> Complex64 {
        self.atoms
            .iter()
            .map(|atom| {
                let z = cdot(u, &atom.xi);
                let comp = if truncated(&atom.xi, chi_radius) {
                    z
                } else {
                    Complex64::new(0.0, 0.0)
                };
                atom.w * (z.exp() - 1.0 - comp)
            })
            .sum()
    }

    /// Total mass.
    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }
}

/// Pointwise characteristics at a state `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicsAt {
    /// `b + Bx`.
    pub drift: Vec<f64>,
    /// `psd_project(a + A(x))`.
    pub diffusion: DMatrix<f64>,
    /// `m + M(x,·)`, atoms with equal displacement merged.
    pub jumps: JumpMeasure,
    /// `c + <γ,x>`, clipped at 0.
    pub kill_rate: f64,
}

/// Jump atoms of `m` and `M(e_i)` merged by displacement, so that the
/// weight of each distinct jump is the affine function `w0 + <w_lin, x>`.
#[derive(Debug, Clone)]
pub(crate) struct JumpTable {
    pub xi: Vec<Vec<f64>>,
    pub w0: Vec<f64>,
    pub w_lin: Vec<Vec<f64>>,
    pub in_trunc: Vec<bool>,
}

impl JumpTable {
    pub fn from_model(model: &AffineModel) -> Self {
        let n = model.dim();
        let mut table = JumpTable {
            xi: Vec::new(),
            w0: Vec::new(),
            w_lin: Vec::new(),
            in_trunc: Vec::new(),
        };
        let slot = |table: &mut JumpTable, xi: &[f64]| -> usize {
            if let Some(pos) = table.xi.iter().position(|e| e.as_slice() == xi) {
                return pos;
            }
            table.xi.push(xi.to_vec());
            table.w0.push(0.0);
            table.w_lin.push(vec![0.0; n]);
            table.in_trunc.push(truncated(xi, model.chi_radius));
            table.xi.len() - 1
        };
        for atom in &model.m_jump.atoms {
            let k = slot(&mut table, &atom.xi);
            table.w0[k] += atom.w;
        }
        for (i, measure) in model.big_m_jump.iter().enumerate() {
            for atom in &measure.atoms {
                let k = slot(&mut table, &atom.xi);
                table.w_lin[k][i] += atom.w;
            }
        }
        table
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn weight(&self, k: usize, x: &[f64]) -> f64 {
        self.w0[k] + self.w_lin[k].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn linear_weight(&self, k: usize, dir: &[f64]) -> f64 {
        self.w_lin[k].iter().zip(dir).map(|(a, b)| a * b).sum()
    }
}

/// The affine characteristic parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc", into = "ModelDoc")]
pub struct AffineModel {
    pub space: StateSpace,
    /// Constant drift `b`.
    pub b: Vec<f64>,
    /// Linear drift map, `B(x) = big_b · x`.
    pub big_b: DMatrix<f64>,
    /// Constant diffusion matrix `a`.
    pub a: DMatrix<f64>,
    /// `A(e_i)` for each coordinate `i`.
    pub big_a: Vec<DMatrix<f64>>,
    /// State-independent jump measure `m`.
    pub m_jump: JumpMeasure,
    /// `M(e_i, ·)` for each coordinate `i`; weights may be signed as long
    /// as `K(x,·)` stays nonnegative on the state space.
    pub big_m_jump: Vec<JumpMeasure>,
    pub c_kill: f64,
    pub gamma_kill: Vec<f64>,
    pub chi_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelDoc {
    space: StateSpace,
    #[serde(default)]
    b: Vec<f64>,
    #[serde(rename = "B", default)]
    big_b: Vec<Vec<f64>>,
    #[serde(default)]
    a: Vec<Vec<f64>>,
    #[serde(rename = "A", default)]
    big_a: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    m_jump: Vec<Atom>,
    #[serde(rename = "M_jump", default)]
    big_m_jump: Vec<Vec<Atom>>,
    #[serde(default)]
    c_kill: f64,
    #[serde(default)]
    gamma_kill: Vec<f64>,
    #[serde(default = "default_chi_radius")]
    chi_radius: f64,
}

fn default_chi_radius() -> f64 {
    1.0
}

impl TryFrom<ModelDoc> for AffineModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        doc.space.check()?;
        let n = doc.space.dim();
        let square = |rows: &[Vec<f64>], what: &'static str| -> Result<DMatrix<f64>> {
            if rows.is_empty() {
                return Ok(DMatrix::zeros(n, n));
            }
            let m = matrix_from_rows(rows, what)?;
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got: m.nrows().max(m.ncols()),
                });
            }
            Ok(m)
        };
        let vector = |v: Vec<f64>| if v.is_empty() { vec![0.0; n] } else { v };
        let big_a = if doc.big_a.is_empty() {
            vec![DMatrix::zeros(n, n); n]
        } else {
            doc.big_a
                .iter()
                .map(|m| square(m, "A"))
                .collect::<Result<Vec<_>>>()?
        };
        let big_m_jump = if doc.big_m_jump.is_empty() {
            vec![JumpMeasure::default(); n]
        } else {
            doc.big_m_jump.into_iter().map(JumpMeasure::new).collect()
        };
        let model = AffineModel {
            space: doc.space,
            b: vector(doc.b),
            big_b: square(&doc.big_b, "B")?,
            a: square(&doc.a, "a")?,
            big_a,
            m_jump: JumpMeasure::new(doc.m_jump),
            big_m_jump,
            c_kill: doc.c_kill,
            gamma_kill: vector(doc.gamma_kill),
            chi_radius: doc.chi_radius,
        };
        model.check_dims()?;
        Ok(model)
    }
}

impl From<AffineModel> for ModelDoc {
    fn from(m: AffineModel) -> Self {
        ModelDoc {
            space: m.space,
            b: m.b,
            big_b: matrix_to_rows(&m.big_b),
            a: matrix_to_rows(&m.a),
            big_a: m.big_a.iter().map(matrix_to_rows).collect(),
            m_jump: m.m_jump.atoms,
            big_m_jump: m.big_m_jump.into_iter().map(|j| j.atoms).collect(),
            c_kill: m.c_kill,
            gamma_kill: m.gamma_kill,
            chi_radius: m.chi_radius,
        }
    }
}

/// One named invariant check and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, failures: Vec<String>) {
        self.checks.push(ValidationCheck {
            name: name.to_owned(),
            passed: failures.is_empty(),
            detail: failures.join("; "),
        });
    }

    /// Error summarizing the failed checks, if any.
    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            return Ok(());
        }
        let msg = self
            .failures()
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect::<Vec<_>>()
            .join(" | ");
        Err(Error::InvalidModel(msg))
    }
}

const SLACK: f64 = 1e-12;

impl AffineModel {
    /// A model on `space` with every parameter zero and truncation radius 1.
    pub fn zero(space: StateSpace) -> Self {
        let n = space.dim();
        AffineModel {
            space,
            b: vec![0.0; n],
            big_b: DMatrix::zeros(n, n),
            a: DMatrix::zeros(n, n),
            big_a: vec![DMatrix::zeros(n, n); n],
            m_jump: JumpMeasure::default(),
            big_m_jump: vec![JumpMeasure::default(); n],
            c_kill: 0.0,
            gamma_kill: vec![0.0; n],
            chi_radius: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Shape consistency of every parameter with the state dimension.
    pub fn check_dims(&self) -> Result<()> {
        let n = self.dim();
        let expect = |what: &'static str, got: usize| -> Result<()> {
            if got == n {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got,
                })
            }
        };
        expect("b", self.b.len())?;
        expect("gamma_kill", self.gamma_kill.len())?;
        expect("B rows", self.big_b.nrows())?;
        expect("B cols", self.big_b.ncols())?;
        expect("a rows", self.a.nrows())?;
        expect("a cols", self.a.ncols())?;
        expect("A entries", self.big_a.len())?;
        for m in &self.big_a {
            expect("A(e_i) rows", m.nrows())?;
            expect("A(e_i) cols", m.ncols())?;
        }
        expect("M_jump entries", self.big_m_jump.len())?;
        for atom in self
            .m_jump
            .atoms
            .iter()
            .chain(self.big_m_jump.iter().flat_map(|j| &j.atoms))
        {
            expect("jump displacement", atom.xi.len())?;
        }
        Ok(())
    }

    /// Whether the linear (state-dependent) parts all vanish.
    pub fn has_constant_coefficients(&self) -> bool {
        self.big_b.iter().all(|&v| v == 0.0)
            && self.big_a.iter().all(|m| m.iter().all(|&v| v == 0.0))
            && self.big_m_jump.iter().all(|j| j.atoms.iter().all(|a| a.w == 0.0))
            && self.gamma_kill.iter().all(|&v| v == 0.0)
    }

    fn check_arg(&self, u: &[Complex64]) -> Result<()> {
        self.space.check_len(u.len(), "complex argument")?;
        if !self.space.in_u(u)? {
            warn!("argument {u:?} is outside the bounded-exponential set of {:?}", self.space);
        }
        Ok(())
    }

    /// `F(u)` without argument checks.
    pub(crate) fn f_raw(&self, u: &[Complex64]) -> Complex64 {
        let lin: Complex64 = cdot(u, &self.b);
        lin + 0.5 * cquad(u, &self.a) - self.c_kill + self.m_jump.levy_integral(u, self.chi_radius)
    }

    /// `R(u)` without argument checks, written into `out`.
    pub(crate) fn r_raw_into(&self, u: &[Complex64], out: &mut [Complex64]) {
        for (i, r) in out.iter_mut().enumerate() {
            let col: Complex64 = u
                .iter()
                .enumerate()
                .map(|(j, uj)| uj * self.big_b[(j, i)])
                .sum();
            *r = col + 0.5 * cquad(u, &self.big_a[i]) - self.gamma_kill[i]
                + self.big_m_jump[i].levy_integral(u, self.chi_radius);
        }
    }

    /// Constant Lévy–Khintchine exponent `F(u)`.
    pub fn eval_f(&self, u: &[Complex64]) -> Result<Complex64> {
        self.check_arg(u)?;
        Ok(self.f_raw(u))
    }

    /// Linear Lévy–Khintchine exponent `R(u)`, componentwise.
    pub fn eval_r(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_arg(u)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.r_raw_into(u, &mut out);
        Ok(out)
    }

    /// Unprojected `a + A(x)`.
    pub fn diffusion_raw(&self, x: &[f64]) -> DMatrix<f64> {
        let mut c = self.a.clone();
        for (xi, ai) in x.iter().zip(&self.big_a) {
            if *xi != 0.0 {
                c += ai * *xi;
            }
        }
        c
    }

    /// Unclipped `c + <γ,x>`.
    pub fn kill_rate_raw(&self, x: &[f64]) -> f64 {
        self.c_kill + self.gamma_kill.iter().zip(x).map(|(g, x)| g * x).sum::<f64>()
    }

    /// `b + Bx`.
    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.b[i] + (0..self.dim()).map(|j| self.big_b[(i, j)] * x[j]).sum::<f64>())
            .collect()
    }

    /// Pointwise characteristics `(b(x), c(x), K(x,·), c + <γ,x>)`.
    pub fn characteristics_at(&self, x: &[f64]) -> Result<CharacteristicsAt> {
        self.space.check_len(x.len(), "state")?;
        if !self.space.contains(x, MEMBERSHIP_TOL) {
            return Err(Error::OutsideStateSpace(x.to_vec()));
        }
        let table = JumpTable::from_model(self);
        let atoms = (0..table.len())
            .filter_map(|k| {
                let w = table.weight(k, x);
                (w > 0.0).then(|| Atom {
                    xi: table.xi[k].clone(),
                    w,
                })
            })
            .collect();
        let raw_kill = self.kill_rate_raw(x);
        if raw_kill < -1e-10 {
            warn!("kill rate {raw_kill} at {x:?} clipped to 0");
        }
        Ok(CharacteristicsAt {
            drift: self.drift(x),
            diffusion: psd_project(&self.diffusion_raw(x)),
            jumps: JumpMeasure::new(atoms),
            kill_rate: raw_kill.max(0.0),
        })
    }

    /// Checks the model's well-formedness invariants; never fails, the
    /// report carries the outcome.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if let Err(e) = self.space.check() {
            report.push("state space", vec![e.to_string()]);
            return report;
        }
        report.push("state space", vec![]);
        if let Err(e) = self.check_dims() {
            report.push("dimensions", vec![e.to_string()]);
            return report;
        }
        report.push("dimensions", vec![]);

        let n = self.dim();
        let grid = self.space.validation_grid();

        // affinely independent points
        let pts = self.space.affine_points();
        let mut fails = Vec::new();
        if pts.len() != n + 1 || !pts.iter().all(|p| self.space.contains(p, MEMBERSHIP_TOL)) {
            fails.push(format!("expected {} points in D, got {}", n + 1, pts.len()));
        } else {
            let diffs = DMatrix::from_fn(n, n, |i, j| pts[j + 1][i] - pts[0][i]);
            let rank = diffs.rank(1e-9);
            if rank != n {
                fails.push(format!("difference rank {rank} < {n}"));
            }
        }
        report.push("affinely independent points", fails);

        let mut fails = Vec::new();
        let all_finite = self.b.iter().chain(&self.gamma_kill).all(|v| v.is_finite())
            && self.big_b.iter().chain(self.a.iter()).all(|v| v.is_finite())
            && self.big_a.iter().all(|m| m.iter().all(|v| v.is_finite()))
            && self
                .m_jump
                .atoms
                .iter()
                .chain(self.big_m_jump.iter().flat_map(|j| &j.atoms))
                .all(|a| a.w.is_finite() && a.xi.iter().all(|v| v.is_finite()))
            && self.c_kill.is_finite();
        if !all_finite {
            fails.push("non-finite parameter".to_owned());
        }
        if !(self.chi_radius > 0.0 && self.chi_radius.is_finite()) {
            fails.push(format!("chi_radius {} not positive", self.chi_radius));
        }
        report.push("finite parameters", fails);

        let asym = asymmetry(&self.a);
        report.push(
            "a symmetric",
            if asym > SLACK { vec![format!("asymmetry {asym:e}")] } else { vec![] },
        );
        let lmin = min_eigenvalue(&self.a);
        report.push(
            "a PSD",
            if lmin < -PSD_TOL { vec![format!("min eigenvalue {lmin}")] } else { vec![] },
        );
        let fails = self
            .big_a
            .iter()
            .enumerate()
            .filter(|(_, m)| asymmetry(m) > SLACK)
            .map(|(i, m)| format!("A(e_{i}) asymmetry {:e}", asymmetry(m)))
            .collect();
        report.push("A symmetric", fails);

        let mut fails = Vec::new();
        for p in &grid.points {
            let c = self.diffusion_raw(p);
            let l = min_eigenvalue(&c);
            if l < -PSD_TOL * (1.0 + c.norm()) {
                fails.push(format!("c({p:?}) min eigenvalue {l}"));
            }
        }
        for dir in &grid.directions {
            let lin = self.diffusion_raw(dir) - &self.a;
            let l = min_eigenvalue(&lin);
            if l < -PSD_TOL {
                fails.push(format!("A({dir:?}) min eigenvalue {l}"));
            }
        }
        report.push("diffusion PSD on D", fails);

        let fails = [&self.m_jump]
            .into_iter()
            .chain(&self.big_m_jump)
            .flat_map(|j| &j.atoms)
            .filter(|a| a.xi.iter().all(|&v| v == 0.0))
            .map(|a| format!("atom at 0 with weight {}", a.w))
            .collect();
        report.push("no atom at zero", fails);

        let fails = self
            .m_jump
            .atoms
            .iter()
            .filter(|a| a.w < 0.0)
            .map(|a| format!("m atom {:?} weight {}", a.xi, a.w))
            .collect();
        report.push("m weights nonnegative", fails);

        let table = JumpTable::from_model(self);
        let mut mass_fails = Vec::new();
        let mut support_fails = Vec::new();
        for p in &grid.points {
            for k in 0..table.len() {
                let w = table.weight(k, p);
                if w < -SLACK {
                    mass_fails.push(format!("K({p:?}) weight {w} at {:?}", table.xi[k]));
                } else if w > SLACK {
                    let target: Vec<f64> = p.iter().zip(&table.xi[k]).map(|(a, b)| a + b).collect();
                    if !self.space.contains(&target, MEMBERSHIP_TOL) {
                        support_fails.push(format!("x={p:?} + xi={:?} leaves D", table.xi[k]));
                    }
                }
            }
        }
        for dir in &grid.directions {
            for k in 0..table.len() {
                let w = table.linear_weight(k, dir);
                if w < -SLACK {
                    mass_fails.push(format!("M({dir:?}) weight {w} at {:?}", table.xi[k]));
                }
            }
        }
        report.push("jump mass nonnegative", mass_fails);
        report.push("jump support", support_fails);

        let mut fails = Vec::new();
        if self.c_kill < 0.0 {
            fails.push(format!("c_kill {}", self.c_kill));
        }
        for p in &grid.points {
            let r = self.kill_rate_raw(p);
            if r < -SLACK {
                fails.push(format!("kill rate {r} at {p:?}"));
            }
        }
        for dir in &grid.directions {
            let r = self.kill_rate_raw(dir) - self.c_kill;
            if r < -SLACK {
                fails.push(format!("kill rate decreases along {dir:?}"));
            }
        }
        report.push("kill rate nonnegative", fails);
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn in_u_canonical_sign_pattern() {
        let s = StateSpace::Canonical { m: 1, n: 2 };
        assert!(s.in_u(&[c(-1.0, 0.0), c(0.0, 3.0)]).unwrap());
        assert!(!s.in_u(&[c(0.1, 0.0), c(0.0, 0.0)]).unwrap());
        assert!(!s.in_u(&[c(-1.0, 0.0), c(0.5, 0.0)]).unwrap());
        assert!(s.in_u(&[c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn in_u_sympsd_and_compact() {
        let s = StateSpace::SymPSD { d: 1 };
        assert!(s.in_u(&[c(-1.0, 0.0)]).unwrap());
        assert!(!s.in_u(&[c(1.0, 0.0)]).unwrap());
        let s2 = StateSpace::SymPSD { d: 2 };
        // -u = [[1, 2],[2, 1]] is indefinite
        let u = flatten_sym(&DMatrix::from_row_slice(2, 2, &[-1.0, -2.0, -2.0, -1.0]));
        let u: Vec<_> = u.into_iter().map(|v| c(v, 0.0)).collect();
        assert!(!s2.in_u(&u).unwrap());
        assert!(StateSpace::Interval { r1: 0.0, r2: 1.0 }.in_u(&[c(5.0, 1.0)]).unwrap());
        assert!(StateSpace::FiniteChain { k: 2 }.in_u(&[c(5.0, 1.0)]).unwrap());
    }

    #[test]
    fn eval_f_examples() {
        let bm = presets::brownian_1d();
        assert!((bm.eval_f(&[c(0.0, 1.0)]).unwrap() - c(-0.5, 0.0)).norm() < 1e-15);
        assert!(bm.eval_r(&[c(0.0, 1.0)]).unwrap()[0].norm() < 1e-15);

        let w = presets::wishart(1, 1);
        assert!((w.eval_f(&[c(-1.0, 0.0)]).unwrap() - c(-1.0, 0.0)).norm() < 1e-14);
        assert!((w.eval_r(&[c(-1.0, 0.0)]).unwrap()[0] - c(2.0, 0.0)).norm() < 1e-14);

        let ch = presets::chain(2);
        let e = (-1.0f64).exp();
        // generator of the chain applied to e^{ux}: (k−x)(e^{u}−1)e^{ux}
        assert!((ch.eval_f(&[c(-1.0, 0.0)]).unwrap().re - 2.0 * (e - 1.0)).abs() < 1e-15);
        assert!((ch.eval_r(&[c(-1.0, 0.0)]).unwrap()[0].re + (e - 1.0)).abs() < 1e-15);
        assert!((2.0 * (e - 1.0) + 1.264_241_1).abs() < 1e-7);
    }

    #[test]
    fn chain_generator_oracle_matches_f_and_r() {
        // (Q e^{u·})(x) / e^{ux} = (k−x)(e^u − 1) = F(u) + R(u) x
        let k = 3;
        let model = presets::chain(k);
        let u = [c(-0.7, 0.4)];
        let f = model.eval_f(&u).unwrap();
        let r = model.eval_r(&u).unwrap()[0];
        for x in 0..=k {
            let gen = (k - x) as f64 * (u[0].exp() - 1.0);
            assert!((f + r * x as f64 - gen).norm() < 1e-14);
        }
    }

    #[test]
    fn characteristics_examples() {
        let drift = presets::drift_interval(1.0, -1.0, 0.0, 1.0);
        let ch = drift.characteristics_at(&[0.5]).unwrap();
        assert_eq!(ch.drift, vec![0.5]);
        assert_eq!(ch.diffusion[(0, 0)], 0.0);
        assert!(ch.jumps.is_empty());

        let chain = presets::chain(2);
        let ch = chain.characteristics_at(&[0.0]).unwrap();
        assert_eq!(ch.jumps.atoms, vec![Atom { xi: vec![1.0], w: 2.0 }]);
        assert_eq!(ch.drift, vec![0.0]);
        let top = chain.characteristics_at(&[2.0]).unwrap();
        assert!(top.jumps.is_empty());

        let w = presets::wishart(1, 1);
        let ch = w.characteristics_at(&[1.0]).unwrap();
        assert_eq!(ch.drift, vec![1.0]);
        assert!((ch.diffusion[(0, 0)] - 4.0).abs() < 1e-15);

        assert!(matches!(
            w.characteristics_at(&[-0.5]),
            Err(Error::OutsideStateSpace(_))
        ));
    }

    #[test]
    fn wishart_2d_diffusion_matches_quadratic_variation() {
        // <u, c(x) u> = 4 tr(u x u) for symmetric u
        let model = presets::wishart(2, 1);
        let x = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let u = DMatrix::from_row_slice(2, 2, &[0.3, -0.7, -0.7, 1.1]);
        let ch = model.characteristics_at(&flatten_sym(&x)).unwrap();
        let fu = flatten_sym(&u);
        let q: f64 = (0..3)
            .map(|i| (0..3).map(|j| fu[i] * ch.diffusion[(i, j)] * fu[j]).sum::<f64>())
            .sum();
        assert!((q - 4.0 * (&u * &x * &u).trace()).abs() < 1e-12);
    }

    #[test]
    fn validate_examples() {
        assert!(presets::brownian_1d().validate().passed());
        for m in [
            presets::wishart(1, 1),
            presets::wishart(2, 1),
            presets::wishart(3, 2),
            presets::chain(2),
            presets::drift_interval(1.0, -1.0, 0.0, 1.0),
            presets::pure_killing(1.0),
        ] {
            let r = m.validate();
            assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
        }

        let mut bad = presets::brownian_1d();
        bad.a[(0, 0)] = -1.0;
        let r = bad.validate();
        assert!(!r.passed());
        assert!(!r.check("a PSD").unwrap().passed);

        let mut bad = AffineModel::zero(StateSpace::Canonical { m: 1, n: 1 });
        bad.m_jump = JumpMeasure::new(vec![Atom { xi: vec![-0.5], w: 1.0 }]);
        let r = bad.validate();
        assert!(!r.check("jump support").unwrap().passed);

        let mut bad = AffineModel::zero(StateSpace::Canonical { m: 1, n: 1 });
        bad.c_kill = 1.0;
        bad.gamma_kill = vec![-0.5];
        assert!(!bad.validate().check("kill rate nonnegative").unwrap().passed);

        let mut bad = presets::chain(2);
        bad.big_m_jump[0].atoms[0].w = -2.0;
        assert!(!bad.validate().check("jump mass nonnegative").unwrap().passed);
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let m = presets::chain(3);
        let text = m.to_json().unwrap();
        assert_eq!(AffineModel::from_json(&text).unwrap(), m);

        let bm = AffineModel::from_json(
            r#"{"space": {"kind": "Canonical", "m": 0, "n": 1}, "a": [[1.0]]}"#,
        )
        .unwrap();
        assert_eq!(bm, presets::brownian_1d());

        let bad = AffineModel::from_json(
            r#"{"space": {"kind": "Canonical", "m": 0, "n": 2}, "b": [1.0]}"#,
        );
        assert!(bad.unwrap_err().to_string().contains("dimension mismatch"));
    }

    #[test]
    fn affine_points_are_independent() {
        for s in [
            StateSpace::Canonical { m: 2, n: 3 },
            StateSpace::SymPSD { d: 3 },
            StateSpace::Interval { r1: -1.0, r2: 2.0 },
            StateSpace::FiniteChain { k: 4 },
        ] {
            let pts = s.affine_points();
            assert_eq!(pts.len(), s.dim() + 1);
            assert!(pts.iter().all(|p| s.contains(p, 1e-12)));
        }
    }

    #[test]
    fn projection_lands_in_space() {
        let s = StateSpace::SymPSD { d: 2 };
        let mut x = flatten_sym(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        s.project(&mut x);
        assert!(s.contains(&x, 1e-12));
        let chain = StateSpace::FiniteChain { k: 2 };
        let mut y = [2.7];
        chain.project(&mut y);
        assert_eq!(y, [2.0]);
    }
}
