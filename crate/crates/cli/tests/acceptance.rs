//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so every line is printed even
//! when the suite succeeds. Criteria listed in [`KNOWN_FAILURES`] are reported
//! as failing but do not fail the process; any other failure, panic or error
//! exits nonzero.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI};
use std::process::Command;
use std::time::{Duration, Instant};

use boltzkit::collision_operator::{q_apply, slice_moments, QuadConfig};
use boltzkit::geometry::{
    check_cov_identity, fit_remainder_constant, random_triple, weight_expansion, AngularWeight, CovKind, CovQuad,
    GaussianBump,
};
use boltzkit::kernel::{asymptotic_report, select_weights, KernelParams};
use boltzkit::kinetic_solver::{picard_solve, SolverConfig};
use boltzkit::lemma_lab::{
    cancellation_refinement, default_v_stars, fit_moment_constant, modulated_family, symbol_check, verify_interpolation,
    verify_moment_bound, CancellationQuad, InterpolationKind, SymbolKind, SymbolSampleSpec, WeakMomentQuad,
};
use boltzkit::norms::NormLadderConfig;
use boltzkit::phase_field::{maxwellian, DistributionField, HydroBounds, PhaseGrid};
use boltzkit::sampling::{mixture_family, perturbed_equilibrium, rng, MixtureSpread};
use boltzkit::kernel::WeightLadder;
use boltzkit::Result;

/// Criteria that cannot currently be met; the reason is recorded with the
/// project's decision notes.
const KNOWN_FAILURES: &[usize] = &[7];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

/// Angular asymptotics at s = 1/2, γ = 0, b0 = 1.
///
/// Laplace's method at θ = π/2 gives `l·ω_l·2^{l/2} → 16/π`; the bracket is
/// ±10% around that limit.
fn c1() -> Result<Verdict> {
    let t0 = Instant::now();
    let p = KernelParams::new(0.0, 0.5, 1.0)?;
    let ls = [16.0, 32.0, 64.0, 128.0, 256.0];
    let rep = asymptotic_report(&p, &ls)?;
    let limit = 16.0 / PI;
    let (lo, hi) = (0.9 * limit, 1.1 * limit);
    let bracket = rep.omega_scaled.iter().all(|w| (lo..=hi).contains(w));
    let slope = (0.4..=0.6).contains(&rep.lambda_slope);
    let dt = t0.elapsed();
    verdict(
        slope && bracket && within(dt, 10.0),
        format!(
            "slope {:.4} in [0.4, 0.6]; l·ω_l·2^(l/2) in [{:.4}, {:.4}] ⊂ [{lo:.4}, {hi:.4}]; {:.1}s < 10s",
            rep.lambda_slope,
            rep.omega_scaled.iter().copied().fold(f64::INFINITY, f64::min),
            rep.omega_scaled.iter().copied().fold(0.0, f64::max),
            dt.as_secs_f64()
        ),
    )
}

/// Cancellation identity with a unit Gaussian at three kernel choices.
fn c2() -> Result<Verdict> {
    let t0 = Instant::now();
    let bump = GaussianBump {
        amplitude: 1.0,
        center: [0.0; 3],
        temperature: 1.0,
    };
    let vs = default_v_stars(bump.center, 1.0);
    let mut pass = true;
    let mut parts = Vec::new();
    for (g, s) in [(0.0, 0.25), (0.0, 0.5), (1.0, 0.5)] {
        let p = KernelParams::new(g, s, 1.0)?;
        let st = cancellation_refinement(&bump, &vs, &p, &CancellationQuad::default(), 2)?;
        let finest = *st.gaps.last().unwrap_or(&f64::INFINITY);
        pass &= st.decreasing && st.gaps.iter().all(|x| *x <= 1e-3);
        parts.push(format!("({g},{s}) gap {:.2e}→{finest:.2e}", st.gaps[0]));
    }
    let dt = t0.elapsed();
    pass &= within(dt, 120.0);
    verdict(pass, format!("{}; {:.1}s < 120s", parts.join(", "), dt.as_secs_f64()))
}

/// Both reflection identities with H supported on [π/8, π/2].
fn c3() -> Result<Verdict> {
    let t0 = Instant::now();
    let h = AngularWeight::indicator(FRAC_PI_8, FRAC_PI_2);
    let q = CovQuad {
        tol: 1e-4,
        ..CovQuad::default()
    };
    let bumps = [
        GaussianBump {
            amplitude: 1.0,
            center: [0.3, -0.2, 0.1],
            temperature: 1.0,
        },
        GaussianBump {
            amplitude: 2.0,
            center: [-0.5, 0.4, 0.0],
            temperature: 0.5,
        },
    ];
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for b in &bumps {
        for gamma in [0.0, 1.0] {
            for kind in [CovKind::CarlemanCos, CovKind::CarlemanSin] {
                let rep = check_cov_identity(kind, b, [0.5, 0.0, -0.25], &h, gamma, &q)?;
                pass &= rep.pass && rep.rel_discrepancy <= 1e-4;
                worst = worst.max(rep.rel_discrepancy);
            }
        }
    }
    let dt = t0.elapsed();
    pass &= within(dt, 120.0);
    verdict(
        pass,
        format!("worst rel {worst:.2e} ≤ 1e-4 over 8 checks; {:.1}s < 120s", dt.as_secs_f64()),
    )
}

/// Largest moment defects of `q` relative to the matching moment of `|q|`.
fn defects(grid: &PhaseGrid, q: &DistributionField) -> (f64, f64, f64) {
    let sl = q.slice(0);
    let (m, p, e) = slice_moments(grid, sl);
    let abs: Vec<f64> = sl.iter().map(|x| x.abs()).collect();
    let (am, _, ae) = slice_moments(grid, &abs);
    let ap: f64 = sl
        .iter()
        .enumerate()
        .map(|(iv, x)| {
            let v = grid.velocity(iv);
            x.abs() * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
        })
        .sum::<f64>()
        * grid.dv3();
    let pn = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    (m.abs() / am, pn / ap, e.abs() / ae)
}

/// Discrete equilibrium, refinement of the residual and conservation.
fn c4() -> Result<Verdict> {
    let t0 = Instant::now();
    let p = KernelParams::default();
    let base = QuadConfig::default();
    let residual = |nv: usize, cfg: &QuadConfig| -> Result<f64> {
        let grid = PhaseGrid::homogeneous(nv, 6.0)?;
        let mu = maxwellian(grid, 1.0, 1.0, [0.0; 3])?;
        Ok(q_apply(&mu, &mu, &p, cfg)?.max_abs() / mu.max_abs())
    };
    let r24 = residual(24, &base)?;
    let fine = QuadConfig {
        n_theta: 2 * base.n_theta,
        ..base
    };
    let r48 = residual(48, &fine)?;
    let eq_pass = r24 <= 1e-3 && r48 * 2.0 <= r24;

    let grid = PhaseGrid::homogeneous(16, 6.0)?;
    let spread = MixtureSpread::default();
    let gs = mixture_family(grid, 10, 41, &spread)?;
    let fs = mixture_family(grid, 10, 42, &spread)?;
    let mut mass: f64 = 0.0;
    for (g, f) in gs.iter().zip(&fs) {
        mass = mass.max(defects(&grid, &q_apply(g, f, &p, &base)?).0);
    }
    let (mut mom, mut energy): (f64, f64) = (0.0, 0.0);
    for f in &fs {
        let (_, dp, de) = defects(&grid, &q_apply(f, f, &p, &base)?);
        mom = mom.max(dp);
        energy = energy.max(de);
    }
    let cons_pass = mass <= 1e-6 && mom <= 1e-5 && energy <= 1e-5;
    let dt = t0.elapsed();
    verdict(
        eq_pass && cons_pass && within(dt, 1200.0),
        format!(
            "‖Q(μ,μ)‖/‖μ‖ {r24:.2e} (nv 24) → {r48:.2e} (nv 48); mass {mass:.1e}, momentum {mom:.1e}, energy {energy:.1e}; {:.1}s < 1200s",
            dt.as_secs_f64()
        ),
    )
}

/// Single fitted remainder constant, stable under sample doubling and valid
/// on an independent sample.
fn c5() -> Result<Verdict> {
    let mut pass = true;
    let mut parts = Vec::new();
    for l in [5.0, 8.0] {
        let fit = fit_remainder_constant(l, 100_000, 10.0, &mut rng(5))?;
        let doubled = fit_remainder_constant(l, 200_000, 10.0, &mut rng(5))?;
        let change = (doubled.constant - fit.constant).abs() / fit.constant;
        let mut r = rng(55);
        let mut held = true;
        for _ in 0..100_000 {
            let w = weight_expansion(&random_triple(&mut r, 10.0), l)?;
            held &= w.remainder.abs() <= fit.constant * w.envelope;
        }
        pass &= fit.constant.is_finite() && change <= 0.10 && held;
        parts.push(format!(
            "l={l}: C {:.4} → {:.4} ({:.1}%), held-out {}",
            fit.constant,
            doubled.constant,
            100.0 * change,
            if held { "ok" } else { "violated" }
        ));
    }
    verdict(pass, parts.join("; "))
}

/// Moment bound at the selected ℓ₀ with a constant frozen on a calibration family.
fn c6() -> Result<Verdict> {
    let t0 = Instant::now();
    let p = KernelParams::default();
    let hydro = HydroBounds::default();
    let l = select_weights(&p, hydro.m0, hydro.big_m0, 0.125, 0.5)?.0.ell0;
    let grid = PhaseGrid::homogeneous(12, 5.0)?;
    let spread = MixtureSpread::default();
    let family = |a: u64, b: u64| -> Result<Vec<(DistributionField, DistributionField)>> {
        Ok(mixture_family(grid, 16, a, &spread)?
            .into_iter()
            .zip(mixture_family(grid, 16, b, &spread)?)
            .collect())
    };
    let q = WeakMomentQuad::default();
    let c_l = fit_moment_constant(&family(100, 101)?, l, &p, &hydro, &q)?;
    let rep = verify_moment_bound(&family(200, 201)?, l, &p, &hydro, c_l, &q)?;
    verdict(
        rep.pass,
        format!(
            "l = {l}, C_l {c_l:.3}, worst margin {:.3e} on 16 held-out pairs; {:.1}s",
            rep.margin,
            t0.elapsed().as_secs_f64()
        ),
    )
}

/// The three interpolation inequalities and their ε exponents.
fn c7() -> Result<Verdict> {
    let p = KernelParams::default();
    let cfg = NormLadderConfig::new(WeightLadder::from_ell1(7.0, 0.125, &p));
    let grid = PhaseGrid::new(8, 1, 16, 8.0)?;
    let fam = modulated_family(grid, 16, 5)?;
    let mut ineq = true;
    let mut expo = true;
    let mut parts = Vec::new();
    for kind in [
        InterpolationKind::Embedding,
        InterpolationKind::Spatial,
        InterpolationKind::Smallness,
    ] {
        let o = verify_interpolation(&fam, kind, &[0.1, 1.0, 10.0], &p, &cfg)?;
        ineq &= o.all_pass();
        expo &= o.exponent.confirmed;
        let fitted = o
            .exponent
            .fitted_exponent
            .map_or("none".to_string(), |e| format!("{e:.2}"));
        parts.push(format!(
            "{kind:?}: inequality {}, exponent {fitted} vs {:.1}",
            if o.all_pass() { "ok" } else { "violated" },
            o.exponent.expected_exponent
        ));
    }
    verdict(ineq && expo, parts.join("; "))
}

/// Symbol lower bounds, plain and weighted, at γ ∈ {0, 1}.
fn c8() -> Result<Verdict> {
    let mut pass = true;
    let mut parts = Vec::new();
    for g in [0.0, 1.0] {
        let p = KernelParams::new(g, 0.5, 1.0)?;
        for kind in [SymbolKind::Unweighted, SymbolKind::Weighted] {
            let rep = symbol_check(kind, &p, &SymbolSampleSpec::default())?;
            pass &= rep.pass && rep.fitted_constants.values().all(|c| c.is_finite());
            parts.push(format!("γ={g} {kind:?} {}", if rep.pass { "ok" } else { "violated" }));
        }
    }
    verdict(pass, parts.join(", "))
}

/// Homogeneous Picard run from the unit Maxwellian.
fn c9() -> Result<Verdict> {
    let grid = PhaseGrid::homogeneous(16, 5.0)?;
    let mu = maxwellian(grid, 1.0, 1.0, [0.0; 3])?;
    let cfg = SolverConfig {
        dt: 1e-3,
        t_final: 0.1,
        epsilon: 0.0,
        n_picard: 2,
        checkpoint_every: 1,
        ..SolverConfig::default()
    };
    let traj = picard_solve(&mu, &KernelParams::default(), &cfg)?;
    let dev = traj.rows.iter().map(|r| r.rel_dev_initial).fold(0.0, f64::max);
    let margin = traj
        .rows
        .iter()
        .map(|r| r.mass_h_margin.min(r.energy_h_margin).min(r.entropy_h_margin))
        .fold(f64::INFINITY, f64::min);
    let covers = traj.times.last().is_some_and(|t| (t - 0.1).abs() < 1e-9);
    verdict(
        traj.aborted.is_none() && covers && dev <= 1e-3 && margin > 0.0,
        format!(
            "max rel deviation {dev:.2e} ≤ 1e-3, min (H) margin {margin:.3} > 0 over {} rows",
            traj.rows.len()
        ),
    )
}

/// Contraction and positivity of the inhomogeneous Picard run (criteria 10, 11).
fn c10_c11() -> Result<(Verdict, Verdict)> {
    let t0 = Instant::now();
    let grid = PhaseGrid::new(8, 1, 16, 5.0)?;
    let f = perturbed_equilibrium(grid, 0.1, 1)?;
    let cfg = SolverConfig {
        dt: 0.005,
        t_final: 0.05,
        n_picard: 6,
        contraction_tol: 0.0,
        checkpoint_every: 1,
        ..SolverConfig::default()
    };
    let traj = picard_solve(&f, &KernelParams::default(), &cfg)?;
    // d_{n+1}/d_n for n = 2..5 pairs with the newer iterates 3..6.
    let ratios: Vec<(usize, f64)> = traj
        .contraction_ratios()
        .into_iter()
        .filter(|(n, _)| (3..=6).contains(n))
        .collect();
    let contraction = ratios.len() == 4 && ratios.iter().all(|(_, r)| *r <= 0.5);
    let min_f = traj.rows.iter().map(|r| r.min_f).fold(f64::INFINITY, f64::min);
    let secs = t0.elapsed().as_secs_f64();
    let shown: Vec<String> = ratios.iter().map(|(n, r)| format!("n={}: {r:.3}", n - 1)).collect();
    Ok((
        Verdict {
            pass: traj.aborted.is_none() && contraction,
            detail: format!("ratios {} (≤ 0.5); {secs:.1}s", shown.join(", ")),
        },
        Verdict {
            pass: traj.aborted.is_none() && min_f >= -1e-10,
            detail: format!("min f {min_f:.3e} ≥ -1e-10 over {} rows", traj.rows.len()),
        },
    ))
}

/// Byte-identical CLI artifacts across repeated runs and thread counts.
fn c12() -> Result<Verdict> {
    let dir = tempfile::tempdir()?;
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{
  "grid": {"nx": 4, "dx_dims": 1, "nv": 12, "R": 5.0},
  "solver": {"dt": 0.005, "T": 0.01, "n_picard": 2, "checkpoint_every": 1},
  "initial": {"kind": "perturbed", "amplitude": 0.1, "seed": null},
  "epsilons": [0.01, 0.001]
}"#,
    )?;
    let cfg = cfg.to_str().unwrap_or_default().to_string();
    let run = |tag: &str, args: &[&str]| -> Result<Vec<(String, Vec<u8>)>> {
        let out = dir.path().join(tag);
        let st = Command::new(env!("CARGO_BIN_EXE_boltzkit"))
            .args(args)
            .args(["--output-dir", out.to_str().unwrap_or_default()])
            .output()?;
        let mut files = vec![("stdout".to_string(), st.stdout), ("status".into(), vec![st.status.code().unwrap_or(-1) as u8])];
        let mut paths: Vec<_> = std::fs::read_dir(&out)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        paths.sort();
        for p in paths {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            files.push((name, std::fs::read(&p)?));
        }
        Ok(files)
    };
    let mut pass = true;
    let mut parts = Vec::new();
    let cases: [(&str, Vec<&str>); 3] = [
        ("sweep", vec!["sweep", "--config", &cfg, "--seed", "3"]),
        ("constants", vec!["constants", "--l", "2..64"]),
        ("verify", vec!["verify", "symbol-weighted", "--seed", "9"]),
    ];
    for (k, (name, args)) in cases.iter().enumerate() {
        let a = run(&format!("{k}a"), &[args.as_slice(), &["--threads", "1"]].concat())?;
        let b = run(&format!("{k}b"), &[args.as_slice(), &["--threads", "2"]].concat())?;
        let same = a == b && a.len() > 2 && a[1].1 == [0];
        pass &= same;
        parts.push(format!("{name}: {} files {}", a.len() - 2, if same { "identical" } else { "differ" }));
    }
    verdict(pass, parts.join(", "))
}

fn report(n: usize, r: Result<Verdict>, elapsed: Duration, unexpected: &mut Vec<usize>) {
    let (pass, detail) = match r {
        Ok(v) => (v.pass, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let known = KNOWN_FAILURES.contains(&n);
    let tag = match (pass, known) {
        (true, _) => "PASS",
        (false, true) => "FAIL (known)",
        (false, false) => "FAIL",
    };
    println!("criterion {n:>2}: {tag} [{:.1}s] {detail}", elapsed.as_secs_f64());
    if !pass && !known {
        unexpected.push(n);
    }
}

fn main() {
    let mut unexpected = Vec::new();
    let single: [(usize, fn() -> Result<Verdict>); 9] = [
        (1, c1),
        (2, c2),
        (3, c3),
        (4, c4),
        (5, c5),
        (6, c6),
        (7, c7),
        (8, c8),
        (9, c9),
    ];
    for (n, f) in single {
        let t0 = Instant::now();
        let r = f();
        report(n, r, t0.elapsed(), &mut unexpected);
    }
    let t0 = Instant::now();
    match c10_c11() {
        Ok((a, b)) => {
            let dt = t0.elapsed();
            report(10, Ok(a), dt, &mut unexpected);
            report(11, Ok(b), dt, &mut unexpected);
        }
        Err(e) => {
            let dt = t0.elapsed();
            report(10, Err(e), dt, &mut unexpected);
            report(11, verdict(false, "run failed".into()), dt, &mut unexpected);
        }
    }
    let t0 = Instant::now();
    let r = c12();
    report(12, r, t0.elapsed(), &mut unexpected);

    if unexpected.is_empty() {
        println!("acceptance: all criteria met except known failures {KNOWN_FAILURES:?}");
    } else {
        println!("acceptance: unexpected failures {unexpected:?}");
        std::process::exit(1);
    }
}
