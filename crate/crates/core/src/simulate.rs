//! Path simulation from the affine characteristics.
//!
//! Each Euler step from a state `x` applies, in order: killing with
//! probability `1 − exp(−(c + <γ,x>) dt)`, Poisson jump counts for every
//! atom of `K(x,·)`, the drift `b(x)` (net of the compensator of truncated
//! jumps) and a Gaussian increment with covariance `c(x) dt`, and finally a
//! projection back onto the state space. On finite chains an exact
//! event-driven scheme is available as well.
//!
//! Every path draws from its own ChaCha stream keyed by `(seed, path index)`,
//! so ensembles are identical regardless of thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::closed_forms::ChainSpec;
use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::model::{AffineModel, JumpTable, StateSpace, MEMBERSHIP_TOL};
use crate::presets;

/// State norm beyond which a path is treated as exploded.
pub const EXPLOSION_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    EulerProject,
    GillespieExact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Record every `record_stride`-th step; the final time is always kept.
    pub record_stride: usize,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            n_paths,
            seed,
            scheme: Scheme::EulerProject,
            record_stride: 1,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    /// Records only the initial and final states.
    pub fn end_only(mut self) -> Self {
        self.record_stride = usize::MAX;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt {} must be positive", self.dt)));
        }
        // horizon 0 is accepted and yields the initial state only
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must be nonnegative",
                self.horizon
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        if self.horizon == 0.0 {
            0
        } else {
            (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
        }
    }

    fn step_time(&self, j: usize) -> f64 {
        if j >= self.n_steps() {
            self.horizon
        } else {
            j as f64 * self.dt
        }
    }

    fn is_recorded(&self, j: usize) -> bool {
        j.is_multiple_of(self.record_stride) || j == self.n_steps()
    }

    /// Recorded times.
    pub fn record_times(&self) -> Vec<f64> {
        (0..=self.n_steps())
            .filter(|&j| self.is_recorded(j))
            .map(|j| self.step_time(j))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KillReason {
    Killing,
    Explosion,
}

/// How a path ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fate {
    Alive,
    Killed { time: f64, reason: KillReason },
    Failed { time: f64, diagnostic: String },
}

/// Seeded collection of sampled trajectories. States at or after a path's
/// kill time are stored as NaN (the cemetery).
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub fates: Vec<Fate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub times: Vec<f64>,
    pub alive: Vec<usize>,
    pub killed: Vec<usize>,
    pub failed: usize,
    /// Mean over surviving paths, `null` when none survive.
    pub mean: Vec<Option<Vec<f64>>>,
    /// Coordinatewise second moment over surviving paths.
    pub second_moment: Vec<Option<Vec<f64>>>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.states.len()
    }

    /// State of `path` at recorded time index `ti`, `None` once killed.
    pub fn state(&self, path: usize, ti: usize) -> Option<&[f64]> {
        let s = &self.states[path][ti * self.dim..(ti + 1) * self.dim];
        (!s.iter().any(|v| v.is_nan())).then_some(s)
    }

    pub fn killed(&self, path: usize) -> bool {
        matches!(self.fates[path], Fate::Killed { .. })
    }

    /// Kill time `T_Δ`, if the path was killed or exploded.
    pub fn kill_time(&self, path: usize) -> Option<f64> {
        match self.fates[path] {
            Fate::Killed { time, .. } => Some(time),
            _ => None,
        }
    }

    pub fn n_failed(&self) -> usize {
        self.fates.iter().filter(|f| matches!(f, Fate::Failed { .. })).count()
    }

    pub fn killed_fraction(&self) -> f64 {
        (0..self.n_paths()).filter(|&p| self.killed(p)).count() as f64 / self.n_paths() as f64
    }

    /// Index of a recorded time, matched to within `1e-12`.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    /// Long-format CSV: `path_id, t, x_1..x_n, killed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path_id,t");
        for i in 1..=self.dim {
            let _ = write!(out, ",x_{i}");
        }
        out.push_str(",killed\n");
        for p in 0..self.n_paths() {
            let kill = self.kill_time(p);
            for (ti, &t) in self.times.iter().enumerate() {
                let _ = write!(out, "{p},{t}");
                for v in &self.states[p][ti * self.dim..(ti + 1) * self.dim] {
                    let _ = write!(out, ",{v}");
                }
                let dead = kill.is_some_and(|k| k <= t);
                let _ = writeln!(out, ",{}", u8::from(dead));
            }
        }
        out
    }

    pub fn summary(&self) -> EnsembleSummary {
        let n = self.dim;
        let mut alive = Vec::new();
        let mut killed = Vec::new();
        let mut mean = Vec::new();
        let mut second = Vec::new();
        for (ti, &t) in self.times.iter().enumerate() {
            let mut count = 0usize;
            let mut s1 = vec![0.0; n];
            let mut s2 = vec![0.0; n];
            for p in 0..self.n_paths() {
                if let Some(x) = self.state(p, ti) {
                    count += 1;
                    for i in 0..n {
                        s1[i] += x[i];
                        s2[i] += x[i] * x[i];
                    }
                }
            }
            alive.push(count);
            killed.push(
                (0..self.n_paths())
                    .filter(|&p| self.kill_time(p).is_some_and(|k| k <= t))
                    .count(),
            );
            if count == 0 {
                mean.push(None);
                second.push(None);
            } else {
                let c = count as f64;
                mean.push(Some(s1.iter().map(|v| v / c).collect()));
                second.push(Some(s2.iter().map(|v| v / c).collect()));
            }
        }
        EnsembleSummary {
            n_paths: self.n_paths(),
            times: self.times.clone(),
            alive,
            killed,
            failed: self.n_failed(),
            mean,
            second_moment: second,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for path `index` of an ensemble seeded by `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index)))
}

struct PathOut {
    states: Vec<f64>,
    fate: Fate,
}

struct Stepper<'a> {
    model: &'a AffineModel,
    cfg: &'a SimConfig,
    table: JumpTable,
    has_diffusion: bool,
}

impl Stepper<'_> {
    fn record(&self, out: &mut Vec<f64>, x: &[f64], j: usize) {
        if self.cfg.is_recorded(j) {
            out.extend_from_slice(x);
        }
    }

    fn fill_dead(&self, out: &mut Vec<f64>, from_step: usize) {
        let n = self.model.dim();
        for j in from_step..=self.cfg.n_steps() {
            if self.cfg.is_recorded(j) {
                out.extend(std::iter::repeat_n(f64::NAN, n));
            }
        }
    }

    fn euler_path(&self, x0: &[f64], rng: &mut ChaCha8Rng) -> PathOut {
        let model = self.model;
        let n = model.dim();
        let steps = self.cfg.n_steps();
        let mut out = Vec::new();
        let mut x = x0.to_vec();
        let mut next = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut drift = vec![0.0; n];
        let mut c = DMatrix::zeros(n, n);
        self.record(&mut out, &x, 0);
        for j in 0..steps {
            let t0 = self.cfg.step_time(j);
            let t1 = self.cfg.step_time(j + 1);
            let dt = t1 - t0;

            let rate = model.kill_rate_raw(&x).max(0.0);
            if rate > 0.0 {
                let p = -(-rate * dt).exp_m1();
                if rng.random::<f64>() < p {
                    self.fill_dead(&mut out, j + 1);
                    return PathOut {
                        states: out,
                        fate: Fate::Killed {
                            time: t1,
                            reason: KillReason::Killing,
                        },
                    };
                }
            }

            for (i, d) in drift.iter_mut().enumerate() {
                *d = model.b[i] + (0..n).map(|l| model.big_b[(i, l)] * x[l]).sum::<f64>();
            }
            next.copy_from_slice(&x);
            for k in 0..self.table.len() {
                let w = self.table.weight(k, &x).max(0.0);
                if w <= 0.0 {
                    continue;
                }
                let xi = &self.table.xi[k];
                if self.table.in_trunc[k] {
                    for i in 0..n {
                        drift[i] -= w * xi[i];
                    }
                }
                let count = match Poisson::new(w * dt) {
                    Ok(dist) => dist.sample(rng),
                    Err(_) => 0.0,
                };
                if count > 0.0 {
                    for i in 0..n {
                        next[i] += count * xi[i];
                    }
                }
            }
            for i in 0..n {
                next[i] += drift[i] * dt;
            }

            if self.has_diffusion {
                c.copy_from(&model.a);
                for (xi, ai) in x.iter().zip(&model.big_a) {
                    if *xi != 0.0 {
                        c.zip_apply(ai, |cv, av| *cv += av * *xi);
                    }
                }
                let sq = dt.sqrt();
                if n == 1 {
                    let g: f64 = rng.sample(StandardNormal);
                    next[0] += c[(0, 0)].max(0.0).sqrt() * sq * g;
                } else {
                    let l = match psd_sqrt(&c) {
                        Ok(l) => l,
                        Err(e) => {
                            self.fill_dead(&mut out, j + 1);
                            return PathOut {
                                states: out,
                                fate: Fate::Failed {
                                    time: t1,
                                    diagnostic: e.to_string(),
                                },
                            };
                        }
                    };
                    for zi in z.iter_mut() {
                        *zi = rng.sample(StandardNormal);
                    }
                    for i in 0..n {
                        let mut acc = 0.0;
                        for (m, zm) in z.iter().enumerate() {
                            acc += l[(i, m)] * zm;
                        }
                        next[i] += acc * sq;
                    }
                }
            }

            if next.iter().any(|v| !v.is_finite()) {
                self.fill_dead(&mut out, j + 1);
                return PathOut {
                    states: out,
                    fate: Fate::Failed {
                        time: t1,
                        diagnostic: format!("non-finite state after step {j}"),
                    },
                };
            }
            model.space.project(&mut next);
            if next.iter().map(|v| v * v).sum::<f64>().sqrt() > EXPLOSION_NORM {
                self.fill_dead(&mut out, j + 1);
                return PathOut {
                    states: out,
                    fate: Fate::Killed {
                        time: t1,
                        reason: KillReason::Explosion,
                    },
                };
            }
            std::mem::swap(&mut x, &mut next);
            self.record(&mut out, &x, j + 1);
        }
        PathOut {
            states: out,
            fate: Fate::Alive,
        }
    }

    fn gillespie_path(&self, x0: &[f64], rng: &mut ChaCha8Rng) -> PathOut {
        let model = self.model;
        let steps = self.cfg.n_steps();
        let mut out = Vec::new();
        let mut x = x0.to_vec();
        let mut t = 0.0;
        let mut j = 0usize; // next grid index to record
        loop {
            let rates: Vec<f64> = (0..self.table.len())
                .map(|k| self.table.weight(k, &x).max(0.0))
                .collect();
            let kill = model.kill_rate_raw(&x).max(0.0);
            let total: f64 = rates.iter().sum::<f64>() + kill;
            let t_event = if total > 0.0 {
                let e: f64 = rng.random::<f64>();
                t - (1.0 - e).ln() / total
            } else {
                f64::INFINITY
            };
            while j <= steps && self.cfg.step_time(j) < t_event {
                self.record(&mut out, &x, j);
                j += 1;
            }
            if j > steps {
                return PathOut {
                    states: out,
                    fate: Fate::Alive,
                };
            }
            t = t_event;
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = None;
            for (k, r) in rates.iter().enumerate() {
                if pick < *r {
                    chosen = Some(k);
                    break;
                }
                pick -= r;
            }
            match chosen {
                Some(k) => {
                    for (xi, d) in x.iter_mut().zip(&self.table.xi[k]) {
                        *xi += d;
                    }
                    model.space.project(&mut x);
                }
                None => {
                    self.fill_dead(&mut out, j);
                    return PathOut {
                        states: out,
                        fate: Fate::Killed {
                            time: t,
                            reason: KillReason::Killing,
                        },
                    };
                }
            }
        }
    }
}

/// Samples `cfg.n_paths` trajectories of `model` from `x0`.
pub fn simulate(model: &AffineModel, x0: &[f64], cfg: &SimConfig) -> Result<PathEnsemble> {
    cfg.check()?;
    model.validate().into_result()?;
    if !model.space.contains(x0, MEMBERSHIP_TOL) {
        return Err(Error::OutsideStateSpace(x0.to_vec()));
    }
    let table = JumpTable::from_model(model);
    let has_diffusion = model.a.iter().any(|&v| v != 0.0)
        || model.big_a.iter().any(|m| m.iter().any(|&v| v != 0.0));
    if cfg.scheme == Scheme::GillespieExact {
        if !matches!(model.space, StateSpace::FiniteChain { .. }) {
            return Err(Error::InvalidParameter(
                "exact event simulation needs a finite-chain state space".into(),
            ));
        }
        let pts = model.space.validation_grid().points;
        let moving = pts.iter().any(|p| {
            let mut drift = model.drift(p);
            for k in 0..table.len() {
                if table.in_trunc[k] {
                    drift[0] -= table.weight(k, p) * table.xi[k][0];
                }
            }
            drift[0].abs() > 1e-12
        });
        if has_diffusion || moving {
            return Err(Error::InvalidParameter(
                "exact event simulation needs a pure-jump model".into(),
            ));
        }
    }
    let mut start = x0.to_vec();
    model.space.project(&mut start);
    let stepper = Stepper {
        model,
        cfg,
        table,
        has_diffusion,
    };
    let outs: Vec<PathOut> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(cfg.seed, p as u64);
            match cfg.scheme {
                Scheme::EulerProject => stepper.euler_path(&start, &mut rng),
                Scheme::GillespieExact => stepper.gillespie_path(&start, &mut rng),
            }
        })
        .collect();
    let mut states = Vec::with_capacity(outs.len());
    let mut fates = Vec::with_capacity(outs.len());
    for o in outs {
        states.push(o.states);
        fates.push(o.fate);
    }
    Ok(PathEnsemble {
        dim: model.dim(),
        times: cfg.record_times(),
        states,
        fates,
    })
}

/// Exact simulation of the birth chain with intensity `k − x`.
pub fn simulate_ctmc(spec: ChainSpec, x0: usize, cfg: &SimConfig) -> Result<PathEnsemble> {
    if x0 > spec.k {
        return Err(Error::InvalidParameter(format!("x0 = {x0} outside 0..={}", spec.k)));
    }
    let cfg = cfg.clone().with_scheme(Scheme::GillespieExact);
    simulate(&presets::chain(spec.k), &[x0 as f64], &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_flow_single_path() {
        let m = presets::drift_interval(1.0, -1.0, 0.0, 1.0);
        let cfg = SimConfig::new(1e-3, 2f64.ln(), 1, 3);
        let ens = simulate(&m, &[0.0], &cfg).unwrap();
        let last = ens.state(0, ens.times.len() - 1).unwrap();
        assert!((last[0] - 0.5).abs() < 5e-3);
        assert_eq!(*ens.times.last().unwrap(), 2f64.ln());
    }

    #[test]
    fn constant_killing_fraction() {
        let m = presets::pure_killing(1.0);
        let n = 100_000;
        let cfg = SimConfig::new(1e-2, 1.0, n, 11).end_only();
        let ens = simulate(&m, &[0.0], &cfg).unwrap();
        let p = 1.0 - (-1.0f64).exp();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((ens.killed_fraction() - p).abs() <= 3.0 * se);
        for path in 0..ens.n_paths() {
            if let Some(t) = ens.kill_time(path) {
                assert!(t <= 1.0 && ens.killed(path));
                assert!(ens.state(path, ens.times.len() - 1).is_none());
            }
        }
    }

    #[test]
    fn same_seed_same_ensemble() {
        let m = presets::brownian_1d();
        let cfg = SimConfig::new(1e-2, 1.0, 200, 99);
        let a = simulate(&m, &[0.0], &cfg).unwrap();
        let b = simulate(&m, &[0.0], &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let c = simulate(&m, &[0.0], &SimConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn ctmc_edge_cases() {
        let cfg = SimConfig::new(0.1, 1.0, 50, 1);
        let ens = simulate_ctmc(ChainSpec::new(1).unwrap(), 1, &cfg).unwrap();
        for p in 0..ens.n_paths() {
            for ti in 0..ens.times.len() {
                assert_eq!(ens.state(p, ti).unwrap(), &[1.0]);
            }
        }
        let cfg0 = SimConfig::new(0.1, 0.0, 20, 1);
        let ens = simulate_ctmc(ChainSpec::new(3).unwrap(), 2, &cfg0).unwrap();
        assert_eq!(ens.times, vec![0.0]);
        assert!((0..20).all(|p| ens.state(p, 0) == Some(&[2.0][..])));
        assert!(simulate_ctmc(ChainSpec::new(3).unwrap(), 4, &cfg).is_err());
    }

    #[test]
    fn ctmc_mean_is_binomial() {
        let n = 100_000;
        let cfg = SimConfig::new(0.05, 1.0, n, 5).end_only();
        let ens = simulate_ctmc(ChainSpec::new(2).unwrap(), 0, &cfg).unwrap();
        let last = ens.times.len() - 1;
        let vals: Vec<f64> = (0..n).map(|p| ens.state(p, last).unwrap()[0]).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let p = 1.0 - (-1.0f64).exp();
        assert!((mean - 2.0 * p).abs() <= 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn euler_chain_stays_on_lattice() {
        let m = presets::chain(3);
        let cfg = SimConfig::new(1e-2, 2.0, 500, 8);
        let ens = simulate(&m, &[0.0], &cfg).unwrap();
        for p in 0..ens.n_paths() {
            for ti in 0..ens.times.len() {
                let x = ens.state(p, ti).unwrap();
                assert!(m.space.contains(x, 0.0));
            }
        }
    }

    #[test]
    fn wishart_2d_paths_stay_psd() {
        let m = presets::wishart(2, 1);
        let x0 = crate::linalg::flatten_sym(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let cfg = SimConfig::new(1e-2, 1.0, 200, 4);
        let ens = simulate(&m, &x0, &cfg).unwrap();
        assert_eq!(ens.n_failed(), 0);
        for p in 0..ens.n_paths() {
            for ti in 0..ens.times.len() {
                assert!(m.space.contains(ens.state(p, ti).unwrap(), 1e-9));
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = presets::wishart(1, 1);
        let cfg = SimConfig::new(1e-2, 1.0, 10, 4);
        assert!(matches!(simulate(&m, &[-1.0], &cfg), Err(Error::OutsideStateSpace(_))));
        assert!(simulate(&m, &[1.0], &SimConfig { dt: 0.0, ..cfg.clone() }).is_err());
        assert!(simulate(&m, &[1.0], &cfg.clone().with_scheme(Scheme::GillespieExact)).is_err());
        let mut bad = presets::brownian_1d();
        bad.a[(0, 0)] = -1.0;
        assert!(matches!(simulate(&bad, &[0.0], &cfg), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn summary_serializes_with_dead_times() {
        let m = presets::pure_killing(50.0);
        let cfg = SimConfig::new(0.1, 1.0, 20, 2);
        let ens = simulate(&m, &[0.0], &cfg).unwrap();
        let s = ens.summary();
        assert_eq!(s.alive[0], 20);
        assert_eq!(*s.killed.last().unwrap(), 20);
        assert!(s.mean.last().unwrap().is_none());
        serde_json::to_string(&s).unwrap();
        let csv = ens.to_csv();
        assert!(csv.starts_with("path_id,t,x_1,killed\n"));
        assert_eq!(csv.lines().count(), 1 + 20 * ens.times.len());
    }

    #[test]
    fn record_stride_grid() {
        let cfg = SimConfig::new(0.1, 1.05, 1, 0).with_record_stride(5);
        let t = cfg.record_times();
        assert_eq!(cfg.n_steps(), 11);
        assert_eq!(t.len(), 4);
        assert_eq!(t[0], 0.0);
        assert!((t[1] - 0.5).abs() < 1e-15 && (t[2] - 1.0).abs() < 1e-15);
        assert_eq!(t[3], 1.05);
    }
}
