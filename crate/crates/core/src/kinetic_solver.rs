//! Time stepping of the regularised linear problem
//! `∂_t f + v·∂_x f + ε⟨v⟩^{s+2γ} f = Q(g, f)` with a frozen coefficient `g`,
//! the Picard iteration `f_{n+1} = Φ(f_n)` built on it, and the diagnostics
//! describing the iterates (moment and energy balls, positivity, the
//! hydrodynamic condition and contraction).
//!
//! One step is operator-split: exact semi-Lagrangian transport on the torus
//! with periodic cubic interpolation, then a collision update in which the
//! loss rate and the regularisation are implicit and the gain is explicit:
//!
//! `f ← (f + dt (Q(g,f) + ν f)) / (1 + dt (ε⟨v⟩^{s+2γ} + ν))`.
//!
//! For the Fourier-side operator `ν` is the constant `mass(g)·Σ_σ W`, so the
//! update conserves mass exactly when `ε = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision_operator::{project_onto_invariants, CollisionOperator, QuadConfig, Scheme};
use crate::error::{invalid, numerical, Result};
use crate::interp::Stencil;
use crate::kernel::{lambda, BigL, KernelParams, WeightLadder, DEFAULT_TILDE_C0};
use crate::norms::{self, NormLadderConfig, MIN_NX_FOR_DERIVATIVES};
use crate::phase_field::{
    bracket_weights, check_condition_h, hydro_moments, weighted_l1, weighted_l2_sq, DistributionField, HydroBounds, PhaseGrid,
};

/// Ordering of the transport and collision sub-steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    /// Transport over `dt`, then collision over `dt`.
    Lie,
    /// Half transport, full collision, half transport.
    Strang,
}

/// Choice of the coefficient `f₀` of the first linear problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialIterate {
    /// `f₀ = c⟨v⟩^{−2ℓ₀}` with `c` matching the total mass of the datum.
    Polynomial,
    /// `f₀ = f_in` at every time.
    Datum,
}

/// Constants weighting the dissipation integrals of the energy functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConstants {
    pub c0: f64,
    pub a0: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        EnergyConstants { c0: 0.05, a0: 0.05 }
    }
}

/// Default regularisation strength `2^{−10}`.
pub const DEFAULT_EPSILON: f64 = 1.0 / 1024.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub epsilon: f64,
    pub n_picard: usize,
    /// Early stop once `sup_t ‖⟨v⟩^{ℓ₁}(f_{n+1} − f_n)‖_{L²}` falls below this.
    pub contraction_tol: f64,
    pub quad: QuadConfig,
    pub ladder: WeightLadder,
    pub hydro: HydroBounds,
    /// Ball radius; `None` picks twice the larger initial functional.
    #[serde(rename = "bigL")]
    pub big_l: Option<BigL>,
    pub splitting: Splitting,
    pub initial_iterate: InitialIterate,
    /// Steps between recorded snapshots (the final time is always recorded).
    pub checkpoint_every: usize,
    /// Reporting threshold for negative values.
    pub positivity_tol: f64,
    /// Abort when `min f < −negativity_abort · max f_in`.
    pub negativity_abort: f64,
    /// Abort when `max |f| > blowup_factor · max f_in`.
    pub blowup_factor: f64,
    pub energy_constants: EnergyConstants,
    /// Truncate the discrete gain at zero inside the collision update.
    pub positive_gain: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let params = KernelParams::default();
        SolverConfig {
            dt: 1e-3,
            t_final: 0.1,
            epsilon: DEFAULT_EPSILON,
            n_picard: 4,
            contraction_tol: 1e-8,
            quad: QuadConfig::default(),
            ladder: WeightLadder::from_ell1(15.5, DEFAULT_TILDE_C0, &params),
            hydro: HydroBounds::default(),
            big_l: None,
            splitting: Splitting::Lie,
            initial_iterate: InitialIterate::Datum,
            checkpoint_every: 10,
            positivity_tol: 1e-10,
            negativity_abort: 1e-2,
            blowup_factor: 1e3,
            energy_constants: EnergyConstants::default(),
            positive_gain: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return invalid(format!("T must be >= dt, got T={} dt={}", self.t_final, self.dt));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return invalid(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if self.n_picard < 1 {
            return invalid("n_picard must be >= 1");
        }
        if !(self.contraction_tol >= 0.0) {
            return invalid(format!("contraction_tol must be >= 0, got {}", self.contraction_tol));
        }
        if self.checkpoint_every < 1 {
            return invalid("checkpoint_every must be >= 1");
        }
        if !(self.positivity_tol >= 0.0 && self.negativity_abort >= 0.0 && self.blowup_factor > 1.0) {
            return invalid("positivity_tol, negativity_abort must be >= 0 and blowup_factor > 1");
        }
        if !(self.energy_constants.c0 > 0.0 && self.energy_constants.a0 > 0.0) {
            return invalid("energy constants must be positive");
        }
        self.quad.validate()?;
        self.hydro.validate()
    }

    /// Number of steps and the step actually used (`T / n_steps`).
    pub fn steps(&self) -> (usize, f64) {
        let n = ((self.t_final / self.dt).round() as usize).max(1);
        (n, self.t_final / n as f64)
    }
}

/// Operator-split stepper with the collision operator built once.
#[derive(Debug)]
pub struct LinearStepper {
    pub grid: PhaseGrid,
    pub params: KernelParams,
    pub cfg: SolverConfig,
    op: CollisionOperator,
    /// `ε⟨v⟩^{s+2γ}` per velocity node.
    regularisation: Vec<f64>,
}

impl LinearStepper {
    pub fn new(grid: &PhaseGrid, params: &KernelParams, cfg: &SolverConfig) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        cfg.validate()?;
        let op = CollisionOperator::new(&grid.velocity_only(), params, &cfg.quad)?;
        let regularisation = bracket_weights(grid, params.s + 2.0 * params.gamma)
            .into_iter()
            .map(|w| cfg.epsilon * w)
            .collect();
        Ok(LinearStepper {
            grid: *grid,
            params: *params,
            cfg: *cfg,
            op,
            regularisation,
        })
    }

    pub fn operator(&self) -> &CollisionOperator {
        &self.op
    }

    /// Largest `|v|·dt` relative to the half period `1/2` of the torus.
    pub fn cfl_ratio(&self, dt: f64) -> f64 {
        let vmax = self.grid.r * 3f64.sqrt();
        vmax * dt / 0.5
    }

    /// `f(x, v) ← f(x − v τ, v)` along every active axis.
    pub fn transport(&self, f: &mut DistributionField, tau: f64) {
        let grid = self.grid;
        if grid.is_homogeneous() || tau == 0.0 {
            return;
        }
        let nx = grid.nx;
        let nv3 = grid.nv3();
        let ns = grid.n_space();
        for axis in 0..grid.dx_dims {
            let stride = nx.pow((grid.dx_dims - 1 - axis) as u32);
            let cols: Vec<Vec<f64>> = (0..nv3)
                .into_par_iter()
                .map(|iv| {
                    let shift = grid.velocity(iv)[axis] * tau * nx as f64;
                    let mut col = vec![0.0; ns];
                    let mut line = vec![0.0; nx];
                    for start in 0..ns {
                        if (start / stride) % nx != 0 {
                            continue;
                        }
                        for (i, l) in line.iter_mut().enumerate() {
                            *l = f.values[(start + i * stride) * nv3 + iv];
                        }
                        for i in 0..nx {
                            col[start + i * stride] = crate::interp::periodic_1d(&line, i as f64 - shift, Stencil::Cubic);
                        }
                    }
                    col
                })
                .collect();
            for (iv, col) in cols.into_iter().enumerate() {
                for (ix, x) in col.into_iter().enumerate() {
                    f.values[ix * nv3 + iv] = x;
                }
            }
        }
    }

    /// Gain and loss rate of `Q(g, ·)` applied to `f` on one slice, with
    /// `Q = gain − ν f`.
    fn gain_and_rate(&self, g: &[f64], f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.op.scheme() == Scheme::Fourier {
            let (gain, nu) = self.op.fourier_gain(g, f)?;
            Ok((gain, vec![nu; f.len()]))
        } else {
            let q = self.op.apply(g, f)?;
            let nu = self.op.loss_coefficient(g)?;
            let gain = q.iter().zip(f).zip(&nu).map(|((q, f), n)| q + n * f).collect();
            Ok((gain, nu))
        }
    }

    /// Collision and regularisation update over `tau` with coefficient `g`.
    ///
    /// With `positive_gain` the discrete gain is truncated at zero (the exact
    /// gain is nonnegative for nonnegative inputs), so the update maps
    /// nonnegative fields to nonnegative fields. The Fourier-side operator
    /// then restores mass by an `f`-weighted correction, which keeps both
    /// properties.
    pub fn collide(&self, f: &mut DistributionField, g: &DistributionField, tau: f64) -> Result<()> {
        f.require_same_grid(g)?;
        let fourier = self.op.scheme() == Scheme::Fourier;
        for ix in 0..self.grid.n_space() {
            let (gs, fs) = (g.slice(ix), f.slice(ix));
            let (mut gain, nu) = self.gain_and_rate(gs, fs)?;
            if self.cfg.positive_gain {
                for x in gain.iter_mut() {
                    *x = x.max(0.0);
                }
            }
            let mut q: Vec<f64> = gain.iter().zip(fs).zip(&nu).map(|((a, b), n)| a - n * b).collect();
            if fourier && self.cfg.quad.project_invariants {
                // Mass only: keeps the update continuous in (g, f).
                project_onto_invariants(&self.grid, &mut q, fs, 1);
            }
            let out: Vec<f64> = fs
                .iter()
                .zip(&q)
                .zip(&nu)
                .zip(&self.regularisation)
                .map(|(((&fv, &qv), &n), &e)| (fv + tau * (qv + n * fv)) / (1.0 + tau * (e + n)))
                .collect();
            f.slice_mut(ix).copy_from_slice(&out);
        }
        Ok(())
    }

    /// One split step of length `dt` with coefficient `g`.
    pub fn step(&self, f: &DistributionField, g: &DistributionField, dt: f64) -> Result<DistributionField> {
        let mut out = f.clone();
        match self.cfg.splitting {
            Splitting::Lie => {
                self.transport(&mut out, dt);
                self.collide(&mut out, g, dt)?;
            }
            Splitting::Strang => {
                self.transport(&mut out, 0.5 * dt);
                self.collide(&mut out, g, dt)?;
                self.transport(&mut out, 0.5 * dt);
            }
        }
        Ok(out)
    }
}

/// One split step of length `cfg.dt` (builds the operator; prefer
/// [`LinearStepper`] in loops).
pub fn linear_step(
    f: &DistributionField,
    g_coeff: &DistributionField,
    params: &KernelParams,
    cfg: &SolverConfig,
) -> Result<DistributionField> {
    f.require_same_grid(g_coeff)?;
    if g_coeff.min() < 0.0 {
        return invalid("the coefficient field must be nonnegative");
    }
    LinearStepper::new(&f.grid, params, cfg)?.step(f, g_coeff, cfg.dt)
}

/// Summary of one iterate at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    /// Iterate index (`n ≥ 1`).
    pub n: usize,
    pub t: f64,
    /// `‖f‖_{X_ℓ}`; `NaN` when third derivatives are unresolved.
    pub x_norm: f64,
    /// `‖⟨v⟩^{ℓ₀} f‖_{L¹_{x,v}}`.
    pub l1_ell0: f64,
    /// `‖⟨v⟩^{ℓ₀+γ} f‖_{L¹_{x,v}}`.
    pub l1_ell0_gamma: f64,
    pub min_f: f64,
    pub mass_h_margin: f64,
    pub energy_h_margin: f64,
    pub entropy_h_margin: f64,
    /// `‖⟨v⟩^{ℓ₁}(f_n − f_{n−1})(t)‖_{L²_{x,v}}`.
    pub diff_ell1: f64,
    /// `‖f_n − f_{n−1}‖_{L²_{x,v}}(t)`.
    pub diff_l2: f64,
    /// `‖⟨D_v⟩^s⟨v⟩^{ℓ₁+γ/2} f(t)‖²_{L²_{x,v}}`.
    pub delta_integrand: f64,
    /// Square root of the time integral of `delta_integrand` up to `t`.
    pub delta_partial: f64,
    /// `‖f(t) − f_in‖_∞ / ‖f_in‖_∞`.
    pub rel_dev_initial: f64,
}

/// The recorded Picard iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationTrajectory {
    pub grid: PhaseGrid,
    pub params: KernelParams,
    pub config: SolverConfig,
    /// Recorded times (shared by every iterate), strictly increasing from 0.
    pub times: Vec<f64>,
    pub rows: Vec<TrajectoryRow>,
    /// `sup_t ‖⟨v⟩^{ℓ₁}(f_n − f_{n−1})‖_{L²}` for `n = 1, 2, …`.
    pub sup_diffs: Vec<f64>,
    /// Moment functional of every iterate, accumulated while stepping.
    pub moment_functional_streaming: Vec<f64>,
    pub converged: bool,
    /// Snapshots of the last iterate at every recorded time.
    #[serde(skip)]
    pub final_snapshots: Vec<DistributionField>,
    pub aborted: Option<String>,
}

impl IterationTrajectory {
    pub fn iterations(&self) -> usize {
        self.sup_diffs.len()
    }

    /// Rows of iterate `n`.
    pub fn iterate_rows(&self, n: usize) -> Vec<TrajectoryRow> {
        self.rows.iter().filter(|r| r.n == n).copied().collect()
    }

    /// Ratios `sup_diffs[n] / sup_diffs[n−1]`, paired with `n+1` (the index of the newer iterate).
    pub fn contraction_ratios(&self) -> Vec<(usize, f64)> {
        self.sup_diffs
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i + 2, w[1] / w[0]))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "n,t,x_norm,l1_ell0,min_f,massH_margin,energyH_margin,entropyH_margin,diff_ell1,delta_partial\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.n,
                r.t,
                r.x_norm,
                r.l1_ell0,
                r.min_f,
                r.mass_h_margin,
                r.energy_h_margin,
                r.entropy_h_margin,
                r.diff_ell1,
                r.delta_partial
            ));
        }
        s
    }
}

/// `c⟨v⟩^{−2ℓ₀}` with the total mass of `f_in`.
pub fn polynomial_iterate(f_in: &DistributionField, ladder: &WeightLadder) -> DistributionField {
    let grid = f_in.grid;
    let w = bracket_weights(&grid, -2.0 * ladder.ell0);
    let base = DistributionField::from_fn(grid, |_, v| crate::bracket_pow(v, -2.0 * ladder.ell0));
    let mass_in: f64 = f_in.values.iter().sum();
    let mass_w: f64 = w.iter().sum::<f64>() * grid.n_space() as f64;
    base.scaled(mass_in / mass_w)
}

/// Moment-functional coefficient `m₀ λ_{ℓ₀} / 4^{1+γ}`.
pub fn moment_coefficient(params: &KernelParams, cfg: &SolverConfig) -> Result<f64> {
    Ok(cfg.hydro.m0 * lambda(cfg.ladder.ell0, params)? / 4f64.powf(1.0 + params.gamma))
}

fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// `sup_t a(t) + c ∫ b dt`.
pub fn moment_functional(times: &[f64], l1_ell0: &[f64], l1_ell0_gamma: &[f64], coefficient: f64) -> f64 {
    let sup = l1_ell0.iter().fold(0.0f64, |m, &x| m.max(x));
    sup + coefficient * trapezoid(times, l1_ell0_gamma)
}

fn x_norm_or_nan(f: &DistributionField, ladder: &WeightLadder) -> Result<f64> {
    if !f.grid.is_homogeneous() && f.grid.nx < MIN_NX_FOR_DERIVATIVES {
        return Ok(f64::NAN);
    }
    norms::x_norm(f, ladder)
}

/// Evolves the Picard chain from `f_in` and records every iterate.
///
/// A numerical abort (blow-up or negativity beyond the configured tolerance)
/// is returned as an error carrying the last diagnostics in its message.
pub fn picard_solve(f_in: &DistributionField, params: &KernelParams, cfg: &SolverConfig) -> Result<IterationTrajectory> {
    let grid = f_in.grid;
    let stepper = LinearStepper::new(&grid, params, cfg)?;
    if f_in.min() < -cfg.positivity_tol * f_in.max_abs() {
        return invalid(format!("initial datum has negative values (min {:.3e})", f_in.min()));
    }
    let h = check_condition_h(f_in, &cfg.hydro);
    if !h.pass {
        return invalid(format!("initial datum violates the hydrodynamic condition: {h:?}"));
    }
    let (n_steps, dt) = cfg.steps();
    let mut record_steps: Vec<usize> = (0..=n_steps).step_by(cfg.checkpoint_every).collect();
    if *record_steps.last().unwrap() != n_steps {
        record_steps.push(n_steps);
    }
    let times: Vec<f64> = record_steps.iter().map(|&k| k as f64 * dt).collect();
    let coeff = moment_coefficient(params, cfg)?;
    let fmax = f_in.max_abs();

    // Coefficient snapshots of the current iterate at the recorded times.
    let mut prev: Vec<DistributionField> = match cfg.initial_iterate {
        InitialIterate::Datum => vec![f_in.clone(); times.len()],
        InitialIterate::Polynomial => vec![polynomial_iterate(f_in, &cfg.ladder); times.len()],
    };
    let mut traj = IterationTrajectory {
        grid,
        params: *params,
        config: *cfg,
        times: times.clone(),
        rows: Vec::new(),
        sup_diffs: Vec::new(),
        moment_functional_streaming: Vec::new(),
        converged: false,
        final_snapshots: Vec::new(),
        aborted: None,
    };

    for n in 1..=cfg.n_picard {
        let mut snaps: Vec<DistributionField> = Vec::with_capacity(times.len());
        let mut f = f_in.clone();
        let mut seg = 0usize;
        let mut delta_acc = 0.0;
        let mut last: Option<(f64, f64)> = None;
        let (mut l1a, mut l1b) = (Vec::new(), Vec::new());
        for k in 0..=n_steps {
            if record_steps.get(snaps.len()) == Some(&k) {
                let j = snaps.len();
                let t = times[j];
                let hr = check_condition_h(&f, &cfg.hydro);
                let diff = f.axpy(-1.0, &prev[j])?;
                let di = norms::delta_integrand(&f, params, &cfg.ladder)?;
                if let Some((t0, d0)) = last {
                    delta_acc += 0.5 * (t - t0) * (d0 + di);
                }
                last = Some((t, di));
                let dev = f.axpy(-1.0, f_in)?.max_abs() / fmax;
                let row = TrajectoryRow {
                    n,
                    t,
                    x_norm: x_norm_or_nan(&f, &cfg.ladder)?,
                    l1_ell0: weighted_l1(&f, cfg.ladder.ell0),
                    l1_ell0_gamma: weighted_l1(&f, cfg.ladder.ell0 + params.gamma),
                    min_f: f.min(),
                    mass_h_margin: hr.mass_margin(),
                    energy_h_margin: hr.energy_margin,
                    entropy_h_margin: hr.entropy_margin,
                    diff_ell1: weighted_l2_sq(&diff, cfg.ladder.ell1).sqrt(),
                    diff_l2: weighted_l2_sq(&diff, 0.0).sqrt(),
                    delta_integrand: di,
                    delta_partial: delta_acc.max(0.0).sqrt(),
                    rel_dev_initial: dev,
                };
                l1a.push(row.l1_ell0);
                l1b.push(row.l1_ell0_gamma);
                traj.rows.push(row);
                snaps.push(f.clone());
            }
            if k == n_steps {
                break;
            }
            // Coefficient at t_k, linear between recorded snapshots.
            let t = k as f64 * dt;
            while seg + 2 < times.len() && times[seg + 1] <= t {
                seg += 1;
            }
            let g = if seg + 1 < times.len() && prev[seg] != prev[seg + 1] {
                let w = ((t - times[seg]) / (times[seg + 1] - times[seg])).clamp(0.0, 1.0);
                prev[seg].scaled(1.0 - w).axpy(w, &prev[seg + 1])?
            } else {
                prev[seg].clone()
            };
            f = stepper.step(&f, &g, dt)?;
            let (mn, mx) = (f.min(), f.max_abs());
            if !mx.is_finite() || mx > cfg.blowup_factor * fmax {
                let msg = format!("iterate {n} blew up at t={:.4e}: max |f| = {mx:.3e}", t + dt);
                traj.aborted = Some(msg.clone());
                return numerical(msg);
            }
            if mn < -cfg.negativity_abort * fmax {
                let msg = format!("iterate {n} lost positivity at t={:.4e}: min f = {mn:.3e}", t + dt);
                traj.aborted = Some(msg.clone());
                return numerical(msg);
            }
        }
        let sup = traj
            .rows
            .iter()
            .filter(|r| r.n == n)
            .fold(0.0f64, |m, r| m.max(r.diff_ell1));
        traj.sup_diffs.push(sup);
        traj.moment_functional_streaming
            .push(moment_functional(&times, &l1a, &l1b, coeff));
        prev = snaps;
        if sup <= cfg.contraction_tol {
            traj.converged = true;
            break;
        }
    }
    traj.final_snapshots = prev;
    Ok(traj)
}

/// Runs the same datum for a list of regularisation strengths.
pub fn epsilon_sweep(
    f_in: &DistributionField,
    params: &KernelParams,
    cfg: &SolverConfig,
    epsilons: &[f64],
) -> Result<Vec<(f64, IterationTrajectory)>> {
    epsilons
        .iter()
        .map(|&e| {
            let mut c = *cfg;
            c.epsilon = e;
            Ok((e, picard_solve(f_in, params, &c)?))
        })
        .collect()
}

/// The default sweep `2^{−6}, …, 2^{−12}`.
pub fn default_epsilons() -> Vec<f64> {
    (6..=12).map(|k| 2f64.powi(-k)).collect()
}

/// Ball membership of a trajectory functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub functional: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionEntry {
    pub n: usize,
    pub sup_diff: f64,
    /// `sup_diff(n) / sup_diff(n−1)`; `None` for the first iterate.
    pub ratio: Option<f64>,
}

/// The six report sections of a finished run (last iterate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub big_l: f64,
    pub moment_ball: Membership,
    /// Streaming value of the same functional (must agree with `moment_ball`).
    pub moment_functional_streaming: f64,
    pub energy_ball: Membership,
    pub positivity_trace: Vec<(f64, f64)>,
    pub positivity_pass: bool,
    /// `(t, mass, energy, entropy)` margins.
    pub condition_h_trace: Vec<(f64, f64, f64, f64)>,
    pub condition_h_pass: bool,
    pub contraction: Vec<ContractionEntry>,
    pub delta: f64,
    pub contraction_tol: f64,
    pub delta_below_tol: bool,
}

/// Membership, positivity, hydrodynamic, contraction and smallness report.
///
/// `L` defaults to twice the larger of `‖⟨v⟩^{ℓ₀} f_in‖_{L¹}` and `‖f_in‖_{X_ℓ}`
/// (at least 1). The energy functional needs the `Y_ℓ` and `Z_ℓ` norms of
/// the stored snapshots, which dominates the cost.
pub fn diagnostics(traj: &IterationTrajectory, norm_cfg: &NormLadderConfig) -> Result<DiagnosticsReport> {
    let cfg = &traj.config;
    let params = &traj.params;
    let n = traj.iterations();
    if n == 0 || traj.final_snapshots.len() != traj.times.len() {
        return invalid("trajectory is incomplete");
    }
    let rows = traj.iterate_rows(n);
    let coeff = moment_coefficient(params, cfg)?;
    let l1a: Vec<f64> = rows.iter().map(|r| r.l1_ell0).collect();
    let l1b: Vec<f64> = rows.iter().map(|r| r.l1_ell0_gamma).collect();
    let m_fun = moment_functional(&traj.times, &l1a, &l1b, coeff);

    let f0 = &traj.final_snapshots[0];
    let resolvable = f0.grid.is_homogeneous() || f0.grid.nx >= MIN_NX_FOR_DERIVATIVES;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut zs = Vec::new();
    if resolvable {
        for f in &traj.final_snapshots {
            xs.push(norms::x_norm(f, &cfg.ladder)?.powi(2));
            ys.push(norms::y_norm(f, params, norm_cfg)?.powi(2));
            zs.push(norms::z_norm(f, params, &cfg.ladder)?.powi(2));
        }
    }
    let e_fun = if resolvable {
        xs.iter().fold(0.0f64, |m, &x| m.max(x))
            + cfg.energy_constants.c0 * trapezoid(&traj.times, &ys)
            + cfg.energy_constants.a0 * trapezoid(&traj.times, &zs)
    } else {
        f64::NAN
    };
    let big_l = match cfg.big_l {
        Some(l) => l.value,
        None => {
            let x0 = if resolvable { xs[0].sqrt() } else { 0.0 };
            (2.0 * l1a[0].max(x0)).max(1.0)
        }
    };
    let positivity_trace: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.min_f)).collect();
    let fmax = f0.max_abs();
    let positivity_pass = positivity_trace.iter().all(|&(_, m)| m >= -cfg.positivity_tol * fmax.max(1.0));
    let condition_h_trace: Vec<(f64, f64, f64, f64)> = rows
        .iter()
        .map(|r| (r.t, r.mass_h_margin, r.energy_h_margin, r.entropy_h_margin))
        .collect();
    let condition_h_pass = condition_h_trace.iter().all(|&(_, a, b, c)| a >= 0.0 && b >= 0.0 && c >= 0.0);
    let contraction = traj
        .sup_diffs
        .iter()
        .enumerate()
        .map(|(i, &d)| ContractionEntry {
            n: i + 1,
            sup_diff: d,
            ratio: if i == 0 { None } else { Some(d / traj.sup_diffs[i - 1]) },
        })
        .collect();
    let delta = rows.last().map(|r| r.delta_partial).unwrap_or(0.0);
    Ok(DiagnosticsReport {
        big_l,
        moment_ball: Membership {
            functional: m_fun,
            bound: big_l,
            pass: m_fun <= big_l,
        },
        moment_functional_streaming: traj.moment_functional_streaming[n - 1],
        energy_ball: Membership {
            functional: e_fun,
            bound: big_l * big_l,
            pass: e_fun <= big_l * big_l,
        },
        positivity_trace,
        positivity_pass,
        condition_h_trace,
        condition_h_pass,
        contraction,
        delta,
        contraction_tol: cfg.contraction_tol,
        delta_below_tol: delta <= cfg.contraction_tol,
    })
}

/// Total mass `∫∫ f dx dv`.
pub fn total_mass(f: &DistributionField) -> f64 {
    hydro_moments(f).mass.iter().sum::<f64>() * f.grid.dx_vol()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_field::maxwellian;

    fn small_cfg() -> SolverConfig {
        SolverConfig {
            dt: 0.01,
            t_final: 0.02,
            n_picard: 1,
            checkpoint_every: 1,
            ..Default::default()
        }
    }

    #[test]
    fn transport_by_one_cell_is_a_shift() {
        let grid = PhaseGrid::new(8, 1, 8, 4.0).unwrap();
        let params = KernelParams::default();
        let cfg = small_cfg();
        let st = LinearStepper::new(&grid, &params, &cfg).unwrap();
        let f = DistributionField::from_fn(grid, |x, v| (1.0 + (2.0 * std::f64::consts::PI * x[0]).sin() * 0.3) * (1.0 + v[0] * v[0]).recip());
        // v₁ = −4 + h·i; pick the node v₁ = 1 (i = 5) and τ with v₁τ = 1/8.
        let tau = 1.0 / 8.0;
        let mut g = f.clone();
        st.transport(&mut g, tau);
        let nv3 = grid.nv3();
        for iv in 0..nv3 {
            if (grid.velocity(iv)[0] - 1.0).abs() > 1e-15 {
                continue;
            }
            for ix in 0..8 {
                let src = (ix + 7) % 8;
                assert!((g.values[ix * nv3 + iv] - f.values[src * nv3 + iv]).abs() < 1e-14);
            }
        }
        assert!((total_mass(&g) - total_mass(&f)).abs() < 1e-12 * total_mass(&f));
    }

    #[test]
    fn maxwellian_is_nearly_stationary() {
        let grid = PhaseGrid::homogeneous(16, 5.0).unwrap();
        let params = KernelParams::default();
        let mut cfg = small_cfg();
        cfg.epsilon = 0.0;
        let mu = maxwellian(grid, 1.0, 1.0, [0.0; 3]).unwrap();
        let out = linear_step(&mu, &mu, &params, &cfg).unwrap();
        let dev = out.axpy(-1.0, &mu).unwrap().max_abs() / mu.max_abs();
        assert!(dev < 1e-4, "{dev}");
        assert!((total_mass(&out) - total_mass(&mu)).abs() < 1e-12);
    }

    #[test]
    fn polynomial_iterate_matches_mass() {
        let grid = PhaseGrid::homogeneous(12, 5.0).unwrap();
        let mu = maxwellian(grid, 1.0, 1.0, [0.0; 3]).unwrap();
        let p = KernelParams::default();
        let f0 = polynomial_iterate(&mu, &WeightLadder::from_ell1(15.5, DEFAULT_TILDE_C0, &p));
        assert!((total_mass(&f0) - total_mass(&mu)).abs() < 1e-12);
    }
}
