//! Resolution and execution of the subcommands.
//!
//! [`prepare`] loads and validates everything a subcommand needs and returns
//! the digested plan together with a deferred job, so `--dry-run` exercises the
//! same validation path as a real run.

use boltzkit::collision_operator::{q_apply, slice_moments, CollisionOperator, QuadConfig};
use boltzkit::geometry::{check_cov_identity, CovKind, GaussianBump};
use boltzkit::kernel::{
    a_gamma_s, angular_constant, asymptotic_report, select_weights, ConstantKind, KernelParams, WeightLadder,
};
use boltzkit::kinetic_solver::{default_epsilons, diagnostics, picard_solve, IterationTrajectory};
use boltzkit::lemma_lab::{
    commutator_threshold, default_v_stars, dilate_combination, fit_moment_constant, modulated_family, symbol_check,
    verify_cancellation, verify_coercivity, verify_commutator, verify_interpolation, verify_moment_bound,
    verify_trilinear, InterpolationKind, SymbolKind,
};
use boltzkit::norms::{triple_norm_x, x_norm, y_norm, z_norm, NormLadderConfig};
use boltzkit::phase_field::{
    check_condition_h, hydro_moments, weighted_l1, weighted_l2_sq, DistributionField, PhaseGrid,
};
use boltzkit::sampling::{mixture_family, MixtureSpread};
use boltzkit::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{self, GeometryConfig, NormsConfig, QevalConfig, RunConfig, VerifyConfig};
use crate::{plan_for, Command, GeometryKind, GlobalArgs, Outcome, Plan, VerifyName};

/// Smallest relative tolerance accepted for the angular constants; below it
/// the panels hit round-off and the adaptive refinement stalls.
pub const MIN_CONSTANT_TOL: f64 = 1e-14;

/// Deferred computation of a prepared subcommand.
pub struct Job(Box<dyn FnOnce() -> Result<Outcome>>);

impl Job {
    fn new(f: impl FnOnce() -> Result<Outcome> + 'static) -> Self {
        Job(Box::new(f))
    }

    pub fn run(self) -> Result<Outcome> {
        (self.0)()
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

/// Expands the `l` grammar: `a..b` gives the powers of two in `[a, b]`, a
/// comma-separated list is taken verbatim.
pub fn parse_l_values(text: &str) -> Result<Vec<f64>> {
    let bad = |m: String| Error::Validation(m);
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(format!("invalid weight order {s:?}")))
    };
    let values = if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if !(a > 0.0 && a <= b && b.is_finite()) {
            return Err(bad(format!("range {text:?} needs 0 < a <= b")));
        }
        let mut out = Vec::new();
        let mut p = 2f64.powi(a.log2().ceil() as i32);
        while p <= b * (1.0 + 1e-12) {
            out.push(p);
            p *= 2.0;
        }
        out
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(bad(format!("range {text:?} contains no power of two")));
    }
    if values.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(bad(format!("weight orders must be positive, got {values:?}")));
    }
    Ok(values)
}

/// Loads, resolves and digests the configuration of `cmd`.
pub fn prepare(cmd: &Command, global: &GlobalArgs) -> Result<(Plan, Job)> {
    let seed = global.seed;
    let cfg_path = global.config.as_deref();
    match cmd {
        Command::Constants(args) => {
            let params = KernelParams::new(args.gamma, args.s, args.b0)?;
            let ls = parse_l_values(&args.l)?;
            if !(args.tol >= MIN_CONSTANT_TOL && args.tol < 1.0) {
                return Err(Error::Validation(format!(
                    "tol must lie in [{MIN_CONSTANT_TOL:e}, 1), got {}",
                    args.tol
                )));
            }
            let plan = plan_for("constants", &json!({"kernel": params, "l_values": ls, "tol": args.tol}), seed)?;
            let tol = args.tol;
            Ok((plan, Job::new(move || constants(params, ls, tol))))
        }
        Command::Weights(args) => {
            let params = KernelParams::new(args.gamma, args.s, args.b0)?;
            let a = args.clone();
            let plan = plan_for("weights", &json!({"kernel": params, "args": a}), seed)?;
            Ok((
                plan,
                Job::new(move || {
                    let (ladder, constraints) = select_weights(&params, a.m0, a.big_m0, a.tilde_c0, a.step)?;
                    Ok(Outcome::passing(vec![json!({
                        "ladder": ladder,
                        "constraints": constraints,
                        "all_hold": constraints.all_hold(&params),
                    })]))
                }),
            ))
        }
        Command::GeometryCheck(args) => {
            let c: GeometryConfig = config::load_or_default(cfg_path)?;
            let kinds = match args.kind {
                GeometryKind::PrePost => vec![CovKind::PrePost],
                GeometryKind::CarlemanCos => vec![CovKind::CarlemanCos],
                GeometryKind::CarlemanSin => vec![CovKind::CarlemanSin],
                GeometryKind::All => vec![CovKind::PrePost, CovKind::CarlemanCos, CovKind::CarlemanSin],
            };
            let plan = plan_for("geometry-check", &json!({"config": c, "kinds": kinds}), seed)?;
            Ok((plan, Job::new(move || geometry(c, kinds))))
        }
        Command::Qeval(args) => {
            let c: QevalConfig = config::load_or_default(cfg_path)?;
            c.kernel.validate()?;
            c.grid.validate()?;
            c.quad.validate()?;
            let study = args.theta_study;
            let plan = plan_for("qeval", &json!({"config": c, "theta_study": study}), seed)?;
            Ok((plan, Job::new(move || qeval(c, study, seed))))
        }
        Command::Norms => {
            let c: NormsConfig = config::load_or_default(cfg_path)?;
            c.kernel.validate()?;
            c.grid.validate()?;
            let ladder = WeightLadder::from_ell1(c.ell1, c.tilde_c0, &c.kernel);
            let mut norm_cfg = NormLadderConfig::new(ladder);
            norm_cfg.sphere_lmax = c.sphere_lmax;
            norm_cfg.validate(&c.grid)?;
            let plan = plan_for("norms", &json!({"config": c, "ladder": ladder}), seed)?;
            Ok((plan, Job::new(move || norms(c, norm_cfg, seed))))
        }
        Command::Verify(args) => {
            let mut c: VerifyConfig = config::load_or_default(cfg_path)?;
            c.kernel.validate()?;
            c.hydro.validate()?;
            c.quad.validate()?;
            c.cancellation.validate()?;
            if c.family_size == 0 {
                return Err(Error::Validation("family_size must be >= 1".into()));
            }
            c.symbol.seed = seed;
            let name = args.name;
            let grid = match c.grid {
                Some(g) => g,
                None => default_verify_grid(name)?,
            };
            grid.validate()?;
            c.grid = Some(grid);
            let label = format!("verify-{}", verify_label(name));
            let plan = plan_for(&label, &json!({"name": name, "config": c}), seed)?;
            Ok((plan, Job::new(move || verify(name, c, grid, seed))))
        }
        Command::Evolve | Command::Sweep => {
            let path = cfg_path;
            let c: RunConfig = config::load_or_default::<RunConfig>(path)?.resolve()?;
            let sweep = matches!(cmd, Command::Sweep);
            let eps = if sweep {
                let e = c.epsilons.clone().unwrap_or_else(default_epsilons);
                if e.is_empty() || e.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                    return Err(Error::Validation(format!("invalid epsilon list {e:?}")));
                }
                e
            } else {
                vec![c.solver.epsilon]
            };
            // Build the datum now so invalid initial fields fail in dry runs too.
            let f_in = c.initial.build(c.grid, seed)?;
            let name = if sweep { "sweep" } else { "evolve" };
            let plan = plan_for(name, &json!({"config": c, "epsilons": eps}), seed)?;
            Ok((plan, Job::new(move || evolve(c, f_in, eps, sweep))))
        }
    }
}

fn verify_label(name: VerifyName) -> String {
    serde_json::to_value(name)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Default grid of each estimate: the lightest grid on which it is resolved.
pub fn default_verify_grid(name: VerifyName) -> Result<PhaseGrid> {
    match name {
        VerifyName::MomentBound => PhaseGrid::homogeneous(12, 5.0),
        VerifyName::Embedding | VerifyName::Spatial | VerifyName::Smallness => PhaseGrid::new(8, 1, 16, 8.0),
        _ => PhaseGrid::homogeneous(16, 6.0),
    }
}

fn constants(params: KernelParams, ls: Vec<f64>, tol: f64) -> Result<Outcome> {
    let mut records = Vec::new();
    for &l in &ls {
        records.push(to_value(&angular_constant(ConstantKind::Lambda, l, &params, tol)?)?);
        if l > 2.0 * params.s {
            records.push(to_value(&angular_constant(ConstantKind::Omega, l, &params, tol)?)?);
        }
    }
    records.push(to_value(&a_gamma_s(&params, tol)?)?);
    let fit_ls: Vec<f64> = ls.iter().copied().filter(|l| *l > 2.0 * params.s).collect();
    if fit_ls.len() >= 2 {
        records.push(json!({"asymptotic_fit": asymptotic_report(&params, &fit_ls)?}));
    }
    Ok(Outcome::passing(records))
}

fn geometry(c: GeometryConfig, kinds: Vec<CovKind>) -> Result<Outcome> {
    let mut out = Outcome::passing(Vec::new());
    for k in kinds {
        let q = if k == CovKind::PrePost { &c.pre_post_quad } else { &c.quad };
        let rep = check_cov_identity(k, &c.test_function, c.fixed, &c.weight, c.gamma, q)?;
        out.pass &= rep.pass;
        out.records.push(to_value(&rep)?);
    }
    Ok(out)
}

/// Conservation defects of `Q` on every spatial node, each relative to the
/// corresponding moment of `|Q|`.
fn conservation_defects(q: &DistributionField) -> (f64, f64, f64) {
    let g = q.grid;
    let (mut dm, mut dp, mut de) = (0.0f64, 0.0f64, 0.0f64);
    for ix in 0..g.n_space() {
        let sl = q.slice(ix);
        let (m, p, e) = slice_moments(&g, sl);
        let abs: Vec<f64> = sl.iter().map(|x| x.abs()).collect();
        let (am, _, ae) = slice_moments(&g, &abs);
        let ap: f64 = sl
            .iter()
            .enumerate()
            .map(|(iv, x)| {
                let v = g.velocity(iv);
                x.abs() * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
            })
            .sum::<f64>()
            * g.dv3();
        let rel = |a: f64, b: f64| if b > 0.0 { a.abs() / b } else { 0.0 };
        dm = dm.max(rel(m, am));
        dp = dp.max(rel(p.iter().map(|x| x * x).sum::<f64>().sqrt(), ap));
        de = de.max(rel(e, ae));
    }
    (dm, dp, de)
}

fn qeval(c: QevalConfig, study: bool, seed: u64) -> Result<Outcome> {
    let f = c.f.build(c.grid, seed)?;
    let g = match &c.g {
        Some(spec) => spec.build(c.grid, seed.wrapping_add(1))?,
        None => f.clone(),
    };
    let op = CollisionOperator::new(&c.grid, &c.kernel, &c.quad)?;
    let q = q_apply(&g, &f, &c.kernel, &c.quad)?;
    let (dm, dp, de) = conservation_defects(&q);
    let mut records = vec![json!({
        "scheme": op.scheme(),
        "sup_q": q.max_abs(),
        "sup_f": f.max_abs(),
        "rel_sup_q": q.max_abs() / f.max_abs().max(f64::MIN_POSITIVE),
        "mass_defect": dm,
        "momentum_defect": dp,
        "energy_defect": de,
    })];
    let mut out_csv = Vec::new();
    if study {
        let (rec, csv) = theta_study(&g, &f, &c.kernel, &c.quad)?;
        records.push(rec);
        out_csv.push(("theta_study.csv".to_string(), csv));
    }
    Ok(Outcome {
        records,
        csv: out_csv,
        pass: true,
    })
}

/// `Q` at `θ_min, θ_min/2, θ_min/4, θ_min/8`, the observed order of the
/// successive differences and the Richardson error estimate of the finest level.
fn theta_study(
    g: &DistributionField,
    f: &DistributionField,
    params: &KernelParams,
    quad: &QuadConfig,
) -> Result<(Value, String)> {
    let mut thetas = Vec::new();
    let mut qs = Vec::new();
    for k in 0..4 {
        let mut cfg = *quad;
        cfg.theta_min = quad.theta_min / 2f64.powi(k);
        thetas.push(cfg.theta_min);
        qs.push(q_apply(g, f, params, &cfg)?);
    }
    let diffs: Vec<f64> = qs
        .windows(2)
        .map(|w| Ok(w[1].axpy(-1.0, &w[0])?.max_abs()))
        .collect::<Result<_>>()?;
    let orders: Vec<f64> = diffs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let p = orders.last().copied().unwrap_or(f64::NAN);
    let richardson = if p.is_finite() && p > 0.0 {
        diffs[2] / (2f64.powf(p) - 1.0)
    } else {
        f64::NAN
    };
    let mut csv = String::from("theta_min,sup_q,sup_diff_to_next\n");
    for (k, (t, q)) in thetas.iter().zip(&qs).enumerate() {
        let d = diffs.get(k).map(|d| format!("{d:.12e}")).unwrap_or_default();
        csv.push_str(&format!("{t:.12e},{:.12e},{d}\n", q.max_abs()));
    }
    let rec = json!({
        "theta_study": {
            "theta_min": thetas,
            "sup_q": qs.iter().map(DistributionField::max_abs).collect::<Vec<_>>(),
            "successive_sup_diff": diffs,
            "observed_orders": orders,
            "richardson_error_estimate": richardson,
        }
    });
    Ok((rec, csv))
}

fn norms(c: NormsConfig, norm_cfg: NormLadderConfig, seed: u64) -> Result<Outcome> {
    let f = c.field.build(c.grid, seed)?;
    let ladder = norm_cfg.ladder;
    let p = &c.kernel;
    let rec = json!({
        "ladder": ladder,
        "x_norm": x_norm(&f, &ladder)?,
        "y_norm": y_norm(&f, p, &norm_cfg)?,
        "z_norm": z_norm(&f, p, &ladder)?,
        "triple_norm": triple_norm_x(&f, p, &norm_cfg)?,
        "l2_ell": weighted_l2_sq(&f, ladder.ell).sqrt(),
        "l1_ell0": weighted_l1(&f, ladder.ell0),
        "condition_h": check_condition_h(&f, &boltzkit::phase_field::HydroBounds::default()),
    });
    Ok(Outcome {
        records: vec![rec],
        csv: vec![("hydro.csv".to_string(), hydro_moments(&f).to_csv())],
        pass: true,
    })
}

type Pairs = Vec<(DistributionField, DistributionField)>;
type Triples = Vec<(DistributionField, DistributionField, DistributionField)>;

/// `(g, f)` pairs: nonnegative mixtures `g` and signed dilate combinations `f`.
fn velocity_pairs(grid: PhaseGrid, n: usize, seed: u64) -> Result<Pairs> {
    let gs = mixture_family(grid, n, seed, &MixtureSpread::default())?;
    Ok(gs
        .into_iter()
        .enumerate()
        .map(|(k, g)| (g, dilate_combination(grid, 3, seed.wrapping_add(1000 + k as u64))))
        .collect())
}

fn velocity_triples(grid: PhaseGrid, n: usize, seed: u64) -> Result<Triples> {
    Ok(velocity_pairs(grid, n, seed)?
        .into_iter()
        .enumerate()
        .map(|(k, (g, f))| {
            let h = dilate_combination(grid, 3, seed.wrapping_add(2000 + k as u64));
            (g, f, h)
        })
        .collect())
}

fn report_outcome<T: Serialize>(rep: &T, pass: bool) -> Result<Outcome> {
    Ok(Outcome {
        records: vec![to_value(rep)?],
        csv: Vec::new(),
        pass,
    })
}

fn verify(name: VerifyName, c: VerifyConfig, grid: PhaseGrid, seed: u64) -> Result<Outcome> {
    let p = c.kernel;
    let n = c.family_size;
    let norm_cfg = NormLadderConfig::new(c.interpolation_ladder());
    match name {
        VerifyName::Cancellation => {
            let b: GaussianBump = c.cancellation_bump;
            let vs = default_v_stars(b.center, b.temperature.sqrt());
            let rep = verify_cancellation(&b, &vs, &p, &c.cancellation)?;
            let pass = rep.pass;
            report_outcome(&rep, pass)
        }
        VerifyName::MomentBound => {
            let l = match c.l {
                Some(l) => l,
                None => select_weights(&p, c.hydro.m0, c.hydro.big_m0, c.tilde_c0, 0.5)?.0.ell0,
            };
            let spread = MixtureSpread::default();
            let family = |a: u64, b: u64| -> Result<Pairs> {
                let gs = mixture_family(grid, n, a, &spread)?;
                let fs = mixture_family(grid, n, b, &spread)?;
                Ok(gs.into_iter().zip(fs).collect())
            };
            // The constant is fitted on a calibration family and frozen
            // before the held-out family is checked.
            let calibration = family(seed.wrapping_add(100), seed.wrapping_add(101))?;
            let c_l = fit_moment_constant(&calibration, l, &p, &c.hydro, &c.moment_quad)?;
            let held_out = family(seed.wrapping_add(200), seed.wrapping_add(201))?;
            let rep = verify_moment_bound(&held_out, l, &p, &c.hydro, c_l, &c.moment_quad)?;
            let pass = rep.pass;
            report_outcome(&rep, pass)
        }
        VerifyName::Coercivity => {
            let rep = verify_coercivity(&velocity_pairs(grid, n, seed)?, &p, &c.hydro, &c.quad, &norm_cfg)?;
            let pass = rep.pass;
            report_outcome(&rep, pass)
        }
        VerifyName::Trilinear => {
            let rep = verify_trilinear(&velocity_triples(grid, n, seed)?, &p, &c.quad, &norm_cfg)?;
            let pass = rep.pass;
            report_outcome(&rep, pass)
        }
        VerifyName::Commutator => {
            let l = c.l.unwrap_or(commutator_threshold(&p) + 0.5);
            let rep = verify_commutator(&velocity_triples(grid, n, seed)?, l, &p, &c.quad)?;
            let pass = rep.pass;
            report_outcome(&rep, pass)
        }
        VerifyName::Embedding | VerifyName::Spatial | VerifyName::Smallness => {
            let kind = match name {
                VerifyName::Embedding => InterpolationKind::Embedding,
                VerifyName::Spatial => InterpolationKind::Spatial,
                _ => InterpolationKind::Smallness,
            };
            let family = modulated_family(grid, n, seed)?;
            let o = verify_interpolation(&family, kind, &c.eps_list, &p, &norm_cfg)?;
            let inequality_pass = o.all_pass();
            let exponent_confirmed = o.exponent.confirmed;
            let rec = json!({
                "outcome": o,
                "inequality_pass": inequality_pass,
                "exponent_confirmed": exponent_confirmed,
                "pass": inequality_pass && exponent_confirmed,
            });
            Ok(Outcome {
                records: vec![rec],
                csv: Vec::new(),
                pass: inequality_pass && exponent_confirmed,
            })
        }
        VerifyName::SymbolUnweighted | VerifyName::SymbolWeighted => {
            let kind = if name == VerifyName::SymbolUnweighted {
                SymbolKind::Unweighted
            } else {
                SymbolKind::Weighted
            };
            let rep = symbol_check(kind, &p, &c.symbol)?;
            let pass = rep.pass;
            report_outcome(&rep, pass)
        }
    }
}

/// Compact summary of one trajectory.
fn trajectory_summary(traj: &IterationTrajectory, epsilon: f64) -> Value {
    let last = traj.iterations();
    let rows = traj.iterate_rows(last);
    let min_f = traj.rows.iter().map(|r| r.min_f).fold(f64::INFINITY, f64::min);
    let h_pass = traj
        .rows
        .iter()
        .all(|r| r.mass_h_margin >= 0.0 && r.energy_h_margin >= 0.0 && r.entropy_h_margin >= 0.0);
    let max_dev = rows.iter().map(|r| r.rel_dev_initial).fold(0.0, f64::max);
    json!({
        "epsilon": epsilon,
        "iterations": last,
        "converged": traj.converged,
        "sup_diffs": traj.sup_diffs,
        "contraction_ratios": traj.contraction_ratios(),
        "min_f": min_f,
        "condition_h_pass": h_pass,
        "max_rel_dev_initial": max_dev,
        "times": traj.times,
    })
}

fn evolve(c: RunConfig, f_in: DistributionField, eps: Vec<f64>, sweep: bool) -> Result<Outcome> {
    let mut out = Outcome::passing(Vec::new());
    let norm_cfg = NormLadderConfig::new(c.solver.ladder);
    for (k, &e) in eps.iter().enumerate() {
        let mut s = c.solver;
        s.epsilon = e;
        let traj = picard_solve(&f_in, &c.kernel, &s)?;
        let mut rec = trajectory_summary(&traj, e);
        if c.diagnostics {
            rec["diagnostics"] = to_value(&diagnostics(&traj, &norm_cfg)?)?;
        }
        out.records.push(rec);
        let name = if sweep {
            format!("trajectory_eps{k}.csv")
        } else {
            "trajectory.csv".to_string()
        };
        out.csv.push((name, traj.to_csv()));
    }
    Ok(out)
}
