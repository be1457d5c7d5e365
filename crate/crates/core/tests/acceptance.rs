//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::time::{Duration, Instant};

use affine_kit::closed_forms::{ctmc_oracle_transform, ChainSpec, WishartSpec};
use affine_kit::linalg::flatten_sym;
use affine_kit::presets;
use affine_kit::riccati::solve_riccati;
use affine_kit::simulate::{simulate, Scheme, SimConfig};
use affine_kit::verify::{
    chain_oracle_error, closed_form_families, martingale_check, mc_transform_check_against,
    range_sweep, regularity_argument, regularity_sweep, run_suite, sample_negative_psd,
    semiflow_sweep, wishart_closed_form_fd, SuiteOptions,
};
use affine_kit::{Complex64, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Independent Wishart oracle for real `u ∈ −S_d^+`, k = 1:
/// `Φ = det(I − 2tu)^{−1/2}`, `ψ = u (I − 2tu)^{−1}`.
fn wishart_oracle(u: &DMatrix<f64>, t: f64) -> (f64, DMatrix<f64>) {
    let d = u.nrows();
    let m = DMatrix::<f64>::identity(d, d) - u * (2.0 * t);
    let phi = m.determinant().powf(-0.5);
    let psi = u * m.try_inverse().expect("I − 2tu is invertible for u ≤ 0");
    (phi, psi)
}

fn c1_wishart_reproduction() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for d in [1, 2] {
        let model = presets::wishart(d, 1);
        for _ in 0..10 {
            let u = sample_negative_psd(d, 2.0, &mut rng);
            let uc: Vec<Complex64> = flatten_sym(&u).into_iter().map(|v| c(v, 0.0)).collect();
            let sol = solve_riccati(&model, &uc, 1.0, 1e-10)?;
            assert!(sol.is_complete());
            for node in &sol.grid {
                let (phi, psi) = wishart_oracle(&u, node.t);
                let psi_flat = flatten_sym(&psi);
                worst = worst.max((node.phi.exp() - phi).norm() / phi.abs());
                let diff: f64 = node
                    .psi
                    .iter()
                    .zip(&psi_flat)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                let scale = psi_flat.iter().map(|v| v * v).sum::<f64>().sqrt();
                worst = worst.max(diff / scale);
            }
        }
    }
    Ok(Outcome {
        pass: worst <= 1e-6,
        detail: format!("max relative error {worst:.2e} (limit 1e-6)"),
    })
}

fn c2_wishart_riccati_fd() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let d = 1 + i % 2;
        let t = rng.random_range(0.05..1.0);
        let re = sample_negative_psd(d, 2.0, &mut rng);
        let im = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let im = (&im + im.transpose()) * 0.5;
        let u = DMatrix::from_fn(d, d, |a, b| c(re[(a, b)], im[(a, b)]));
        worst = worst.max(wishart_closed_form_fd(WishartSpec::new(d, 1)?, t, &u, 1e-4)?);
    }
    Ok(Outcome {
        pass: worst <= 1e-6,
        detail: format!("max relative error {worst:.2e} (limit 1e-6)"),
    })
}

fn c3_semiflow() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tol = 1e-10;
    let mut parts = Vec::new();
    let mut pass = true;
    for family in closed_form_families() {
        let s = semiflow_sweep(&family.model(), 20, tol, &mut rng)?;
        pass &= s.pass;
        parts.push(format!(
            "{} {:.1e}",
            family.name(),
            s.max_phi_residual.max(s.max_psi_residual)
        ));
    }
    Ok(Outcome {
        pass,
        detail: format!("max residuals [{}] (limit {:.0e})", parts.join(", "), 100.0 * tol),
    })
}

fn c4_chain_oracle() -> Result<Outcome> {
    let times = [0.1, 0.5, 1.0, 2.0, 5.0];
    let us = [c(-2.0, 0.0), c(-1.0, 0.0), c(0.5, 0.0), c(0.0, 1.0), c(-0.5, -2.0)];
    let mut worst: f64 = 0.0;
    for k in [1, 2, 5] {
        worst = worst.max(chain_oracle_error(ChainSpec::new(k)?, &times, &us)?);
    }
    Ok(Outcome {
        pass: worst <= 1e-10,
        detail: format!("max abs error {worst:.2e} over k = 1, 2, 5 (limit 1e-10)"),
    })
}

fn c5_monte_carlo() -> Result<Outcome> {
    let n = 100_000;
    let euler = SimConfig::new(1e-3, 1.0, n, 42);
    let exact = euler.clone().with_scheme(Scheme::GillespieExact);
    let chain_ref = ctmc_oracle_transform(ChainSpec::new(2)?, 1.0, c(-1.0, 0.0), 0)?;
    assert!((chain_ref.re - 0.360_508_5).abs() < 1e-7);
    let wishart_ref = 0.5f64.sqrt() * (-0.5f64).exp();
    let reports = [
        (
            "brownian",
            mc_transform_check_against(
                &presets::brownian_1d(),
                &[0.0],
                1.0,
                &[c(0.0, 1.0)],
                &euler,
                c((-0.5f64).exp(), 0.0),
                None,
            )?,
        ),
        (
            "chain",
            mc_transform_check_against(&presets::chain(2), &[0.0], 1.0, &[c(-1.0, 0.0)], &exact, chain_ref, None)?,
        ),
        (
            "wishart",
            mc_transform_check_against(
                &presets::wishart(1, 1),
                &[1.0],
                0.5,
                &[c(-1.0, 0.0)],
                &euler,
                c(wishart_ref, 0.0),
                Some(0.01),
            )?,
        ),
    ];
    let pass = reports.iter().all(|(_, r)| r.pass);
    let detail = reports
        .iter()
        .map(|(name, r)| {
            format!(
                "{name} {:.5} vs {:.5} (z {:.2})",
                r.estimate.re,
                r.reference.re,
                r.z_score.unwrap_or(f64::INFINITY)
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome { pass, detail })
}

fn c6_martingale() -> Result<Outcome> {
    let n = 50_000;
    let brownian = martingale_check(
        &presets::brownian_1d(),
        &[0.0],
        1.0,
        &[c(0.0, 1.0)],
        5,
        &SimConfig::new(1e-3, 1.0, n, 7),
    )?;
    let chain = martingale_check(
        &presets::chain(2),
        &[0.0],
        1.0,
        &[c(-1.0, 0.0)],
        5,
        &SimConfig::new(1e-3, 1.0, n, 8).with_scheme(Scheme::GillespieExact),
    )?;
    let wishart = martingale_check(
        &presets::wishart(1, 1),
        &[1.0],
        0.5,
        &[c(-1.0, 0.0)],
        5,
        &SimConfig::new(1e-3, 0.5, n, 9),
    )?;
    let reports = [("brownian", brownian), ("chain", chain), ("wishart", wishart)];
    let pass = reports.iter().all(|(_, r)| r.pass);
    let detail = reports
        .iter()
        .map(|(name, r)| format!("{name} max drift {:.4}", r.max_drift))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome {
        pass,
        detail: format!("{detail} (seeds 7, 8, 9)"),
    })
}

fn c7_regularity() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for family in closed_form_families() {
        let s = regularity_sweep(
            &family.model(),
            &regularity_argument(&family),
            &[1e-2, 5e-3, 2.5e-3],
            0.6,
            1e-3,
        )?;
        pass &= s.pass;
        let last = s.steps.last().expect("three steps");
        parts.push(format!(
            "{} F {:.1e} R {:.1e}",
            family.name(),
            last.f_err,
            last.r_err
        ));
    }
    Ok(Outcome {
        pass,
        detail: format!("final errors [{}]", parts.join(", ")),
    })
}

fn c8_range() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pass = true;
    let mut complete = 0;
    let mut violations = 0;
    for family in closed_form_families() {
        let s = range_sweep(&family.model(), 50, 2.0, 1e-9, &mut rng)?;
        pass &= s.pass;
        complete += s.complete;
        violations += s.violations;
    }
    Ok(Outcome {
        pass,
        detail: format!("{complete} complete solutions, {violations} leaving the set"),
    })
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

fn c9_determinism() -> Result<Outcome> {
    let sim = || -> Result<String> {
        let chain = simulate(
            &presets::chain(2),
            &[0.0],
            &SimConfig::new(1e-2, 1.0, 1000, 7).with_scheme(Scheme::GillespieExact),
        )?;
        let wishart = simulate(&presets::wishart(2, 1), &[1.0, 0.0, 1.0], &SimConfig::new(1e-2, 1.0, 500, 7))?;
        Ok(chain.to_csv() + &wishart.to_csv())
    };
    let suite = || -> Result<String> {
        let opts = SuiteOptions {
            seed: 42,
            n_paths: 2000,
            dt: 1e-3,
        };
        Ok(serde_json::to_string(&run_suite("all", &opts)?)?)
    };
    let runs = [
        in_pool(1, || sim().and_then(|a| Ok((a, suite()?))))?,
        in_pool(1, || sim().and_then(|a| Ok((a, suite()?))))?,
        in_pool(4, || sim().and_then(|a| Ok((a, suite()?))))?,
    ];
    let pass = runs.iter().all(|r| r == &runs[0]);
    Ok(Outcome {
        pass,
        detail: format!(
            "simulate {} bytes, verify suite {} bytes, identical across 2 runs and threads {{1, 4}}: {pass}",
            runs[0].0.len(),
            runs[0].1.len()
        ),
    })
}

type Criterion = (&'static str, fn() -> Result<Outcome>, Option<Duration>);

fn main() {
    let criteria: [Criterion; 9] = [
        ("Wishart Riccati reproduction", c1_wishart_reproduction, Some(Duration::from_secs(5))),
        ("Wishart closed-form Riccati FD", c2_wishart_riccati_fd, None),
        ("semiflow sweep", c3_semiflow, None),
        ("chain oracle equivalence", c4_chain_oracle, Some(Duration::from_secs(1))),
        ("Monte Carlo transform consistency", c5_monte_carlo, Some(Duration::from_secs(120))),
        ("martingale property", c6_martingale, None),
        ("regularity", c7_regularity, None),
        ("range invariant", c8_range, None),
        ("determinism", c9_determinism, None),
    ];
    let mut failures = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(o) => {
                let in_time = limit.is_none_or(|l| elapsed <= l);
                let timing = match limit {
                    Some(l) => format!("{:.2} s, limit {} s", elapsed.as_secs_f64(), l.as_secs()),
                    None => format!("{:.2} s", elapsed.as_secs_f64()),
                };
                (o.pass && in_time, format!("{} [{timing}]", o.detail))
            }
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!("{} {}. {name}: {detail}", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
