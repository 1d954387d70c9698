//! Empirical verification of the identities and functional inequalities
//! that drive the well-posedness argument.
//!
//! Each `verify_*` routine evaluates both sides of one estimate on sampled
//! inputs, fits the existential constants and returns an
//! [`InequalityReport`]. Constants are fitted by a fixed protocol: upper
//! constants take the largest observed ratio times [`UPPER_HEADROOM`], lower
//! constants the smallest observed ratio times [`LOWER_HEADROOM`]. A failed
//! verdict is numerical counter-evidence at the chosen resolution, not a
//! statement about the continuum estimate.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision_operator::{q_inner, QuadConfig};
use crate::error::{invalid, Result};
use crate::geometry::{add, dot, norm, orthonormal_complement, scale, sub, TestFunction, Vec3};
use crate::kernel::{a_gamma_s, lambda, linear_fit, omega, KernelParams};
use crate::norms::{
    bracket_dx, fractional_deriv_v, spatial_multiplier, third_derivatives, triple_norm_x, y_norm, NormLadderConfig,
};
use crate::phase_field::{
    check_condition_h, weighted_l1, weighted_l1_sup_x, weighted_l2_sq, DistributionField, HydroBounds, PhaseGrid,
};
use crate::quadrature::{log_gauss, periodic_nodes, GaussLegendre};
use crate::report::sha256_hex;
use crate::sampling::{latin_hypercube, rng};

/// Headroom multiplying the largest observed ratio of an upper constant.
pub const UPPER_HEADROOM: f64 = 1.05;
/// Headroom multiplying the smallest observed ratio of a lower constant.
pub const LOWER_HEADROOM: f64 = 0.95;
/// Floor keeping fitted constants strictly positive when no sample needs them.
pub const MIN_CONSTANT: f64 = 1e-12;
/// Default size of a sample family.
pub const DEFAULT_FAMILY_SIZE: usize = 32;
/// Default absolute slack of a pass verdict.
pub const DEFAULT_ABS_TOL: f64 = 1e-12;

/// One evaluated sample of an inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMargin {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Machine-checkable outcome of one estimate.
///
/// `lhs`, `rhs` and `margin = rhs − lhs` refer to the worst sample;
/// `pass` holds exactly when `margin ≥ −abs_tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub fitted_constants: BTreeMap<String, f64>,
    pub margin: f64,
    pub pass: bool,
    pub abs_tol: f64,
    pub sample_digest: String,
    pub samples: Vec<SampleMargin>,
    pub notes: Vec<String>,
}

impl InequalityReport {
    /// Builds a report from per-sample margins, keeping the worst one.
    pub fn from_samples(
        name: impl Into<String>,
        samples: Vec<SampleMargin>,
        fitted_constants: BTreeMap<String, f64>,
        abs_tol: f64,
        sample_digest: String,
    ) -> Self {
        let worst = samples
            .iter()
            .min_by(|a, b| a.margin.total_cmp(&b.margin))
            .cloned()
            .unwrap_or(SampleMargin {
                label: "empty".into(),
                lhs: 0.0,
                rhs: 0.0,
                margin: 0.0,
            });
        let pass = worst.margin >= -abs_tol && samples.iter().all(|s| s.margin.is_finite());
        InequalityReport {
            name: name.into(),
            lhs: worst.lhs,
            rhs: worst.rhs,
            fitted_constants,
            margin: worst.margin,
            pass,
            abs_tol,
            sample_digest,
            samples,
            notes: Vec::new(),
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Marks the report failed with an explanation.
    fn fail(mut self, note: impl Into<String>) -> Self {
        self.pass = false;
        self.notes.push(note.into());
        self
    }
}

fn sample(label: impl Into<String>, lhs: f64, rhs: f64) -> SampleMargin {
    SampleMargin {
        label: label.into(),
        lhs,
        rhs,
        margin: rhs - lhs,
    }
}

/// Upper constant from observed ratios: largest ratio times the headroom.
pub fn fit_upper(ratios: impl IntoIterator<Item = f64>) -> f64 {
    let m = ratios.into_iter().filter(|r| r.is_finite()).fold(0.0, f64::max);
    (UPPER_HEADROOM * m).max(MIN_CONSTANT)
}

/// Lower constant from observed ratios: smallest ratio times the headroom.
pub fn fit_lower(ratios: impl IntoIterator<Item = f64>) -> f64 {
    let m = ratios.into_iter().fold(f64::INFINITY, f64::min);
    LOWER_HEADROOM * m
}

/// Hex digest of the node values of a list of fields.
pub fn field_digest<'a>(fields: impl IntoIterator<Item = &'a DistributionField>) -> String {
    let mut bytes = Vec::new();
    for f in fields {
        for n in [f.grid.nx, f.grid.dx_dims, f.grid.nv] {
            bytes.extend((n as u64).to_le_bytes());
        }
        bytes.extend(f.grid.r.to_le_bytes());
        for v in &f.values {
            bytes.extend(v.to_le_bytes());
        }
    }
    sha256_hex(&bytes)[..16].to_string()
}

fn constants(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn require_nonnegative(f: &DistributionField, what: &str) -> Result<()> {
    if f.min() < 0.0 {
        return invalid(format!("{what} must be nonnegative, min = {:e}", f.min()));
    }
    Ok(())
}

fn require_condition_h(g: &DistributionField, hydro: &HydroBounds) -> Result<()> {
    hydro.validate()?;
    let rep = check_condition_h(g, hydro);
    if !rep.pass {
        return invalid(format!("coefficient violates the hydrodynamic bounds: {rep:?}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Cancellation identity
// ---------------------------------------------------------------------------

/// Quadrature for the continuum cancellation identity with `v*` fixed.
///
/// The outer integral over `v` uses spherical coordinates centred at `v*`
/// (Gauss–Legendre in radius and `cos`, uniform azimuth); the inner sphere
/// integral uses Gauss–Legendre in `ln θ` on `[theta_floor, π/2]` and uniform
/// azimuth around `v − v*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CancellationQuad {
    pub n_radial: usize,
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub theta_floor: f64,
    /// Radial extent beyond the bump centre, in units of its length scale.
    pub radial_extent: f64,
    /// Relative gap accepted by [`verify_cancellation`].
    pub tol: f64,
}

impl Default for CancellationQuad {
    fn default() -> Self {
        CancellationQuad {
            n_radial: 24,
            n_polar: 12,
            n_azimuth: 16,
            n_theta: 24,
            n_phi: 12,
            theta_floor: 1e-9,
            radial_extent: 8.0,
            tol: 1e-3,
        }
    }
}

impl CancellationQuad {
    pub fn validate(&self) -> Result<()> {
        let counts = [self.n_radial, self.n_polar, self.n_azimuth, self.n_theta, self.n_phi];
        if counts.iter().any(|&n| n < 2) {
            return invalid(format!("cancellation node counts must be >= 2, got {counts:?}"));
        }
        if !(self.theta_floor > 0.0 && self.theta_floor < 1e-3) {
            return invalid(format!("theta_floor must lie in (0, 1e-3), got {}", self.theta_floor));
        }
        if !(self.radial_extent >= 4.0 && self.tol > 0.0) {
            return invalid("radial_extent must be >= 4 and tol positive");
        }
        Ok(())
    }

    /// Every node count doubled.
    pub fn refined(&self) -> Self {
        CancellationQuad {
            n_radial: 2 * self.n_radial,
            n_polar: 2 * self.n_polar,
            n_azimuth: 2 * self.n_azimuth,
            n_theta: 2 * self.n_theta,
            n_phi: 2 * self.n_phi,
            ..*self
        }
    }
}

/// Outer rule `(v − v*, weight)` over a ball centred at `v*`.
fn ball_rule(radius: f64, n_r: usize, n_pol: usize, n_az: usize) -> Vec<(Vec3, f64)> {
    let (rs, wr) = GaussLegendre::cached(n_r).on_interval(0.0, radius);
    let (cs, wc) = GaussLegendre::cached(n_pol).on_interval(-1.0, 1.0);
    let (phis, wphi) = periodic_nodes(n_az);
    let mut out = Vec::with_capacity(n_r * n_pol * n_az);
    for (r, a) in rs.iter().zip(&wr) {
        for (c, b) in cs.iter().zip(&wc) {
            let st = (1.0 - c * c).max(0.0).sqrt();
            for p in &phis {
                let d = [st * p.cos(), st * p.sin(), *c];
                out.push((scale(d, *r), a * b * wphi * r * r));
            }
        }
    }
    out
}

/// Both sides of the cancellation identity for fixed `v*`:
/// `(∫∫ B (g(v') − g(v)) dσ dv, 2πA_{γ,s} ∫ g(v)|v − v*|^γ dv)`.
pub fn cancellation_sides(
    g: &dyn TestFunction,
    v_star: Vec3,
    params: &KernelParams,
    q: &CancellationQuad,
) -> Result<(f64, f64)> {
    params.validate()?;
    q.validate()?;
    let radius = norm(sub(g.center(), v_star)) + q.radial_extent * g.length_scale();
    let (thetas, tw) = log_gauss(q.theta_floor, FRAC_PI_2, q.n_theta);
    let angular: Vec<(f64, f64, f64)> = thetas
        .iter()
        .zip(&tw)
        .map(|(t, w)| (t.cos(), t.sin(), w * params.angular_density(*t)))
        .collect();
    let (phis, wphi) = periodic_nodes(q.n_phi);
    let azim: Vec<(f64, f64)> = phis.iter().map(|p| (p.cos(), p.sin())).collect();

    let outer = ball_rule(radius, q.n_radial, q.n_polar, q.n_azimuth);
    let parts: Vec<f64> = outer
        .par_iter()
        .map(|&(d, w)| {
            let r = norm(d);
            if r == 0.0 {
                return 0.0;
            }
            let kappa = scale(d, 1.0 / r);
            let (e1, e2) = orthonormal_complement(kappa);
            let v = add(v_star, d);
            let gv = g.eval(v);
            let mut inner = 0.0;
            for &(ct, st, wt) in &angular {
                let mut acc = 0.0;
                for &(cp, sp) in &azim {
                    let sigma = [
                        ct * kappa[0] + st * (cp * e1[0] + sp * e2[0]),
                        ct * kappa[1] + st * (cp * e1[1] + sp * e2[1]),
                        ct * kappa[2] + st * (cp * e1[2] + sp * e2[2]),
                    ];
                    let vp = add(v_star, scale(add(kappa, sigma), 0.5 * r));
                    acc += g.eval(vp) - gv;
                }
                inner += wt * wphi * acc;
            }
            w * params.kinetic(r) * inner
        })
        .collect();
    let lhs: f64 = parts.iter().sum();

    let a = a_gamma_s(params, 1e-12)?.value;
    let rhs_rule = ball_rule(radius, 2 * q.n_radial + 8, 2 * q.n_polar + 4, 2 * q.n_azimuth + 4);
    let conv: f64 = rhs_rule
        .iter()
        .map(|&(d, w)| w * g.eval(add(v_star, d)) * params.kinetic(norm(d)))
        .sum();
    Ok((lhs, 2.0 * PI * a * conv))
}

/// `|lhs/rhs − 1|`, with `0` when both sides vanish.
pub fn relative_gap(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 && rhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        (lhs / rhs - 1.0).abs()
    }
}

/// Representative `v*` sample around a bump centre.
pub fn default_v_stars(center: Vec3, scale_len: f64) -> Vec<Vec3> {
    [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, 1.0, -0.5], [1.5, 0.5, 0.25]]
        .iter()
        .map(|o| add(center, scale(*o, scale_len)))
        .collect()
}

/// Checks the cancellation identity at every `v*`; `margin = tol − gap`.
pub fn verify_cancellation(
    g: &dyn TestFunction,
    v_stars: &[Vec3],
    params: &KernelParams,
    q: &CancellationQuad,
) -> Result<InequalityReport> {
    if v_stars.is_empty() {
        return invalid("cancellation check needs at least one v*");
    }
    let mut samples = Vec::with_capacity(v_stars.len());
    let mut worst = (0.0, 0.0, -1.0);
    for vs in v_stars {
        let (lhs, rhs) = cancellation_sides(g, *vs, params, q)?;
        let gap = relative_gap(lhs, rhs);
        if gap > worst.2 {
            worst = (lhs, rhs, gap);
        }
        samples.push(SampleMargin {
            label: format!("v*={vs:?}"),
            lhs,
            rhs,
            margin: q.tol - gap,
        });
    }
    let a = a_gamma_s(params, 1e-12)?.value;
    let digest = short_hash(&format!("{:?}|{:?}|{:?}", v_stars, params, q));
    let mut rep = InequalityReport::from_samples(
        "cancellation",
        samples,
        constants(&[("two_pi_A", 2.0 * PI * a)]),
        0.0,
        digest,
    );
    rep.lhs = worst.0;
    rep.rhs = worst.1;
    Ok(rep.with_note(format!("largest relative gap {:.3e} against tolerance {:.1e}", worst.2.max(0.0), q.tol)))
}

/// Largest relative gap over `v_stars` at each refinement level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub gaps: Vec<f64>,
    pub decreasing: bool,
}

/// Repeats the cancellation check under successive node doubling.
pub fn cancellation_refinement(
    g: &dyn TestFunction,
    v_stars: &[Vec3],
    params: &KernelParams,
    q: &CancellationQuad,
    levels: usize,
) -> Result<RefinementStudy> {
    let mut gaps = Vec::with_capacity(levels);
    let mut cur = *q;
    for _ in 0..levels {
        let mut worst: f64 = 0.0;
        for vs in v_stars {
            let (l, r) = cancellation_sides(g, *vs, params, &cur)?;
            worst = worst.max(relative_gap(l, r));
        }
        gaps.push(worst);
        cur = cur.refined();
    }
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    Ok(RefinementStudy { gaps, decreasing })
}

fn short_hash(text: &str) -> String {
    sha256_hex(text.as_bytes())[..16].to_string()
}

// ---------------------------------------------------------------------------
// Moment production
// ---------------------------------------------------------------------------

/// Sphere quadrature of the weak-form moment production.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakMomentQuad {
    pub n_theta: usize,
    pub theta_floor: f64,
    /// Azimuth nodes, used only when `l/2` is not an integer.
    pub n_phi: usize,
}

impl Default for WeakMomentQuad {
    fn default() -> Self {
        WeakMomentQuad {
            n_theta: 40,
            theta_floor: 1e-10,
            n_phi: 48,
        }
    }
}

/// `∫∫ Q(g, f) ⟨v⟩^l dx dv` in the pre-post weak form
/// `Σ_{v,v*} g(v*) f(v) |v−v*|^γ ∫ b (⟨v'⟩^l − ⟨v⟩^l) dσ`,
/// with the node values read as a discrete measure and the post-collisional
/// weight evaluated exactly, so no interpolation enters.
///
/// For even integer `l` the azimuthal integral is evaluated in closed form.
pub fn moment_production(
    g: &DistributionField,
    f: &DistributionField,
    l: f64,
    params: &KernelParams,
    q: &WeakMomentQuad,
) -> Result<f64> {
    g.require_same_grid(f)?;
    params.validate()?;
    if !(l >= 0.0 && l.is_finite()) {
        return invalid(format!("moment order must be >= 0, got {l}"));
    }
    let m = 0.5 * l;
    let integer = (m - m.round()).abs() < 1e-12;
    let mi = m.round() as i32;
    let (thetas, tw) = log_gauss(q.theta_floor, FRAC_PI_2, q.n_theta);
    // (cos θ-independent pieces) 1 − cos θ, sin θ, weight·b.
    let ang: Vec<(f64, f64, f64)> = thetas
        .iter()
        .zip(&tw)
        .map(|(t, w)| (2.0 * (0.5 * t).sin().powi(2), t.sin(), w * params.angular_density(*t)))
        .collect();
    // (1/2π)∫cos^{2k}φ dφ · C(M, 2k), k ≥ 1.
    let series: Vec<f64> = if integer {
        (1..=(mi / 2).max(0))
            .map(|k| binomial(mi as u64, 2 * k as u64) * double_factorial_ratio(2 * k as u64))
            .collect()
    } else {
        Vec::new()
    };
    let (phis, _) = periodic_nodes(q.n_phi);
    let cphi: Vec<f64> = phis.iter().map(|p| p.cos()).collect();

    let grid = g.grid;
    let h6 = grid.dv3() * grid.dv3();
    let vel: Vec<Vec3> = (0..grid.nv3()).map(|i| grid.velocity(i)).collect();
    let mut total = 0.0;
    for ix in 0..grid.n_space() {
        let fs = f.slice(ix);
        let gs = g.slice(ix);
        let rows: Vec<f64> = (0..vel.len())
            .into_par_iter()
            .map(|i| {
                if fs[i] == 0.0 {
                    return 0.0;
                }
                let v = vel[i];
                let vv = 1.0 + dot(v, v);
                let vm = vv.powf(m);
                let mut row = 0.0;
                for (j, &gj) in gs.iter().enumerate() {
                    if gj == 0.0 || j == i {
                        continue;
                    }
                    let z = sub(v, vel[j]);
                    let r = norm(z);
                    let c = scale(add(v, vel[j]), 0.5);
                    let ck = dot(c, z) / r;
                    let a1 = r * ck;
                    let cperp2 = (dot(c, c) - ck * ck).max(0.0);
                    let beta = r * cperp2.sqrt();
                    let mut acc = 0.0;
                    for &(omc, st, w) in &ang {
                        let d = if integer {
                            let x = vv - a1 * omc;
                            let head = vm * (mi as f64 * (-a1 * omc / vv).ln_1p()).exp_m1();
                            let qq = (beta * st / x).powi(2);
                            let mut tail = 0.0;
                            for a in series.iter().rev() {
                                tail = (tail + a) * qq;
                            }
                            head + x.powi(mi) * tail
                        } else {
                            let mut s = 0.0;
                            for cp in &cphi {
                                let u = (-a1 * omc + beta * st * cp) / vv;
                                s += (m * u.ln_1p()).exp_m1();
                            }
                            vm * s / cphi.len() as f64
                        };
                        acc += w * d;
                    }
                    row += gj * params.kinetic(r) * acc;
                }
                fs[i] * row
            })
            .collect();
        total += rows.iter().sum::<f64>();
    }
    Ok(2.0 * PI * h6 * grid.dx_vol() * total)
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `(j−1)!!/j!!` for even `j`.
fn double_factorial_ratio(j: u64) -> f64 {
    (1..=j / 2).fold(1.0, |acc, i| acc * (2 * i - 1) as f64 / (2 * i) as f64)
}

/// Terms of the moment bound for one pair `(g, f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentTerms {
    pub lhs: f64,
    /// `−m₀λ_l/4^{γ+1} ‖⟨v⟩^{l+γ}f‖_{L¹}`.
    pub leading: f64,
    /// `2ω_l ‖f‖_{L^∞_xL¹_v} ‖⟨v⟩^{l+γ}g‖_{L¹}`.
    pub omega_term: f64,
    /// Coefficient of `C_l`.
    pub constant_factor: f64,
}

impl MomentTerms {
    pub fn rhs(&self, c_l: f64) -> f64 {
        self.leading + self.omega_term + c_l * self.constant_factor
    }

    /// Smallest `C_l` for which this pair satisfies the bound.
    pub fn needed_constant(&self) -> f64 {
        ((self.lhs - self.leading - self.omega_term) / self.constant_factor).max(0.0)
    }
}

/// Evaluates every term of the moment bound.
pub fn moment_terms(
    f: &DistributionField,
    g: &DistributionField,
    l: f64,
    params: &KernelParams,
    hydro: &HydroBounds,
    q: &WeakMomentQuad,
) -> Result<MomentTerms> {
    if l < 5.0 {
        return invalid(format!("moment bound needs l >= 5, got {l}"));
    }
    require_nonnegative(f, "f")?;
    require_nonnegative(g, "g")?;
    require_condition_h(g, hydro)?;
    let gam = params.gamma;
    let lam = lambda(l, params)?;
    let om = omega(l, params)?;
    let lhs = moment_production(g, f, l, params, q)?;
    let leading = -hydro.m0 * lam / 4f64.powf(gam + 1.0) * weighted_l1(f, l + gam);
    let omega_term = 2.0 * om * weighted_l1_sup_x(f, 0.0) * weighted_l1(g, l + gam);
    let constant_factor = weighted_l1_sup_x(g, 4.0 + gam) * weighted_l1(f, l) + weighted_l1_sup_x(f, 4.0 + gam) * weighted_l1(g, l);
    Ok(MomentTerms {
        lhs,
        leading,
        omega_term,
        constant_factor,
    })
}

/// Fits `C_l` of the moment bound over a calibration family of `(g, f)` pairs.
pub fn fit_moment_constant(
    pairs: &[(DistributionField, DistributionField)],
    l: f64,
    params: &KernelParams,
    hydro: &HydroBounds,
    q: &WeakMomentQuad,
) -> Result<f64> {
    if pairs.is_empty() {
        return invalid("calibration family is empty");
    }
    let terms: Vec<MomentTerms> = pairs
        .iter()
        .map(|(g, f)| moment_terms(f, g, l, params, hydro, q))
        .collect::<Result<_>>()?;
    Ok(fit_upper(terms.iter().map(MomentTerms::needed_constant)))
}

/// Checks the moment bound on each `(g, f)` pair with a frozen `C_l`.
pub fn verify_moment_bound(
    pairs: &[(DistributionField, DistributionField)],
    l: f64,
    params: &KernelParams,
    hydro: &HydroBounds,
    c_l: f64,
    q: &WeakMomentQuad,
) -> Result<InequalityReport> {
    if pairs.is_empty() {
        return invalid("moment bound needs at least one pair");
    }
    if !(c_l > 0.0 && c_l.is_finite()) {
        return invalid(format!("C_l must be positive, got {c_l}"));
    }
    let mut samples = Vec::with_capacity(pairs.len());
    for (k, (g, f)) in pairs.iter().enumerate() {
        let t = moment_terms(f, g, l, params, hydro, q)?;
        samples.push(sample(format!("pair {k}"), t.lhs, t.rhs(c_l)));
    }
    // Relative slack: the terms are of the size of the leading term.
    let scale_ref = samples.iter().map(|s| s.rhs.abs().max(s.lhs.abs())).fold(0.0, f64::max);
    let digest = field_digest(pairs.iter().flat_map(|(g, f)| [g, f]));
    Ok(InequalityReport::from_samples(
        "moment_bound",
        samples,
        constants(&[("C_l", c_l), ("lambda_l", lambda(l, params)?), ("omega_l", omega(l, params)?)]),
        DEFAULT_ABS_TOL * scale_ref.max(1.0),
        digest,
    )
    .with_note(format!("l = {l}")))
}

// ---------------------------------------------------------------------------
// Coercivity, trilinear and commutator bounds
// ---------------------------------------------------------------------------

fn require_homogeneous(f: &DistributionField) -> Result<()> {
    if !f.grid.is_homogeneous() {
        return invalid("velocity-space estimates are evaluated on homogeneous grids");
    }
    Ok(())
}

fn l2(f: &DistributionField, r: f64) -> f64 {
    weighted_l2_sq(f, r).sqrt()
}

fn ds_norm(f: &DistributionField, s: f64, a: f64) -> Result<f64> {
    Ok(weighted_l2_sq(&fractional_deriv_v(f, s, a)?, 0.0).sqrt())
}

/// Ingredients of the coercivity estimate for one `(g, f)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityTerms {
    /// `(−Q(g, f), f)`.
    pub dissipation: f64,
    /// `|||f|||²`.
    pub triple_sq: f64,
    /// `‖⟨v⟩^{s+γ/2} f‖²`.
    pub lower_sq: f64,
}

pub fn coercivity_terms(
    g: &DistributionField,
    f: &DistributionField,
    params: &KernelParams,
    hydro: &HydroBounds,
    quad: &QuadConfig,
    norm_cfg: &NormLadderConfig,
) -> Result<CoercivityTerms> {
    require_homogeneous(g)?;
    require_nonnegative(g, "g")?;
    require_condition_h(g, hydro)?;
    let t = triple_norm_x(f, params, norm_cfg)?;
    Ok(CoercivityTerms {
        dissipation: -q_inner(g, f, f, 0.0, params, quad)?,
        triple_sq: t * t,
        lower_sq: weighted_l2_sq(f, params.s + 0.5 * params.gamma),
    })
}

/// Fits `(c0, C0)` of `(−Q(g,f), f) ≥ c0|||f|||² − C0‖⟨v⟩^{s+γ/2}f‖²`.
///
/// `C0` is the smallest constant (with headroom) for which some positive
/// `c0` works, `C0 = 1.05·max(0, max_i −a_i/w_i)`; `c0` is then the largest
/// admissible value with headroom, `c0 = 0.95·min_i (a_i + C0 w_i)/t_i`.
pub fn fit_coercivity(terms: &[CoercivityTerms]) -> Result<(f64, f64)> {
    if terms.is_empty() {
        return invalid("coercivity fit needs a nonempty family");
    }
    let big_c0 = fit_upper(
        terms
            .iter()
            .filter(|t| t.lower_sq > 0.0)
            .map(|t| (-t.dissipation / t.lower_sq).max(0.0)),
    );
    let c0 = fit_lower(
        terms
            .iter()
            .filter(|t| t.triple_sq > 0.0)
            .map(|t| (t.dissipation + big_c0 * t.lower_sq) / t.triple_sq),
    );
    let c0 = if c0.is_finite() { c0 } else { MIN_CONSTANT };
    Ok((c0, big_c0))
}

/// Checks the coercivity estimate with the given constants.
pub fn coercivity_report(terms: &[CoercivityTerms], c0: f64, big_c0: f64, digest: String) -> InequalityReport {
    let samples = terms
        .iter()
        .enumerate()
        .map(|(k, t)| sample(format!("sample {k}"), c0 * t.triple_sq - big_c0 * t.lower_sq, t.dissipation))
        .collect();
    let scale_ref = terms.iter().map(|t| t.dissipation.abs()).fold(0.0, f64::max);
    let mut rep = InequalityReport::from_samples(
        "coercivity",
        samples,
        constants(&[("c0", c0), ("C0", big_c0)]),
        DEFAULT_ABS_TOL * scale_ref.max(1.0),
        digest,
    );
    if !(c0 > 0.0) {
        rep = rep.fail("fitted c0 is not positive");
    }
    rep
}

/// Fits `(c0, C0)` over a family of pairs and reports the per-sample margins.
pub fn verify_coercivity(
    pairs: &[(DistributionField, DistributionField)],
    params: &KernelParams,
    hydro: &HydroBounds,
    quad: &QuadConfig,
    norm_cfg: &NormLadderConfig,
) -> Result<InequalityReport> {
    if pairs.is_empty() {
        return invalid("coercivity fit needs a nonempty family");
    }
    let terms: Vec<CoercivityTerms> = pairs
        .par_iter()
        .map(|(g, f)| coercivity_terms(g, f, params, hydro, quad, norm_cfg))
        .collect::<Result<_>>()?;
    let (c0, big_c0) = fit_coercivity(&terms)?;
    let digest = field_digest(pairs.iter().flat_map(|(g, f)| [g, f]));
    Ok(coercivity_report(&terms, c0, big_c0, digest))
}

/// Ingredients of the trilinear bound for one triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrilinearTerms {
    /// `|(Q(g, f), h)|`.
    pub lhs: f64,
    /// `‖⟨v⟩^{γ+2s}g‖_{L¹} + ‖g‖_{L²}`.
    pub g_factor: f64,
    /// `|||f||| (|||h||| + ‖⟨v⟩^{s+γ/2}h‖)`.
    pub main_factor: f64,
    /// `‖⟨D_v⟩^s⟨v⟩^{a1}f‖ ‖⟨D_v⟩^s⟨v⟩^{a2}h‖` for each split `a1`.
    pub split_factors: Vec<f64>,
}

/// Weight splits `a1 ∈ {0, (γ+2s)/2, γ+2s}` of the variant bound.
pub fn trilinear_splits(params: &KernelParams) -> Vec<f64> {
    let t = params.gamma + 2.0 * params.s;
    vec![0.0, 0.5 * t, t]
}

pub fn trilinear_terms(
    g: &DistributionField,
    f: &DistributionField,
    h: &DistributionField,
    params: &KernelParams,
    quad: &QuadConfig,
    norm_cfg: &NormLadderConfig,
) -> Result<TrilinearTerms> {
    require_homogeneous(g)?;
    g.require_same_grid(f)?;
    g.require_same_grid(h)?;
    let (gam, s) = (params.gamma, params.s);
    let lhs = q_inner(g, f, h, 0.0, params, quad)?.abs();
    let g_factor = weighted_l1(g, gam + 2.0 * s) + l2(g, 0.0);
    let tf = triple_norm_x(f, params, norm_cfg)?;
    let th = triple_norm_x(h, params, norm_cfg)?;
    let main_factor = tf * (th + l2(h, s + 0.5 * gam));
    let total = gam + 2.0 * s;
    let split_factors = trilinear_splits(params)
        .into_iter()
        .map(|a1| Ok(ds_norm(f, s, a1)? * ds_norm(h, s, total - a1)?))
        .collect::<Result<_>>()?;
    Ok(TrilinearTerms {
        lhs,
        g_factor,
        main_factor,
        split_factors,
    })
}

/// Fits `C1` of the trilinear bound (and one constant per weight split)
/// over the family and reports the main bound.
pub fn verify_trilinear(
    triples: &[(DistributionField, DistributionField, DistributionField)],
    params: &KernelParams,
    quad: &QuadConfig,
    norm_cfg: &NormLadderConfig,
) -> Result<InequalityReport> {
    if triples.is_empty() {
        return invalid("trilinear fit needs a nonempty family");
    }
    let terms: Vec<TrilinearTerms> = triples
        .par_iter()
        .map(|(g, f, h)| trilinear_terms(g, f, h, params, quad, norm_cfg))
        .collect::<Result<_>>()?;
    Ok(trilinear_report(&terms, params, field_digest(triples.iter().flat_map(|(g, f, h)| [g, f, h]))))
}

/// Trilinear report from precomputed terms.
pub fn trilinear_report(terms: &[TrilinearTerms], params: &KernelParams, digest: String) -> InequalityReport {
    let c1 = fit_upper(terms.iter().map(|t| t.lhs / (t.g_factor * t.main_factor)));
    let mut fitted = constants(&[("C1", c1)]);
    for (k, a1) in trilinear_splits(params).into_iter().enumerate() {
        let c = fit_upper(terms.iter().map(|t| t.lhs / (t.g_factor * t.split_factors[k])));
        fitted.insert(format!("C1_split_a1={a1}"), c);
    }
    let samples = terms
        .iter()
        .enumerate()
        .map(|(k, t)| sample(format!("triple {k}"), t.lhs, c1 * t.g_factor * t.main_factor))
        .collect();
    InequalityReport::from_samples("trilinear", samples, fitted, DEFAULT_ABS_TOL, digest)
}

/// Ingredients of the weighted commutator bound for one triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutatorTerms {
    pub lhs: f64,
    /// `2ω_{l−2−γ} ‖f‖_{L¹} ‖⟨v⟩^{l+γ/2}g‖ ‖⟨v⟩^{γ/2}h‖`.
    pub omega_term: f64,
    /// Sum of the three terms multiplying `C_l`.
    pub constant_factor: f64,
}

/// Smallest weight exponent admitted by the commutator estimate.
pub fn commutator_threshold(params: &KernelParams) -> f64 {
    6.5 + params.gamma
}

pub fn commutator_terms(
    g: &DistributionField,
    f: &DistributionField,
    h: &DistributionField,
    l: f64,
    params: &KernelParams,
    quad: &QuadConfig,
) -> Result<CommutatorTerms> {
    if l < commutator_threshold(params) {
        return invalid(format!(
            "commutator estimate needs l >= {}, got {l}",
            commutator_threshold(params)
        ));
    }
    require_homogeneous(g)?;
    let gam = params.gamma;
    let lhs = (q_inner(g, f, h, l, params, quad)? - q_inner(g, &f.weighted(l), h, 0.0, params, quad)?).abs();
    let om = omega(l - 2.0 - gam, params)?;
    let hg = l2(h, 0.5 * gam);
    let omega_term = 2.0 * om * weighted_l1(f, 0.0) * l2(g, l + 0.5 * gam) * hg;
    let constant_factor = l2(g, 6.0 + gam) * hg * ds_norm(f, params.s, l + 0.5 * gam)?
        + l2(f, 6.0 + gam) * l2(g, l + 0.5 * gam) * l2(h, 0.0)
        + l2(f, 6.0 + gam) * l2(g, l) * hg;
    Ok(CommutatorTerms {
        lhs,
        omega_term,
        constant_factor,
    })
}

/// Fits `C_l` of the commutator estimate over the family and reports it.
pub fn verify_commutator(
    triples: &[(DistributionField, DistributionField, DistributionField)],
    l: f64,
    params: &KernelParams,
    quad: &QuadConfig,
) -> Result<InequalityReport> {
    if l < commutator_threshold(params) {
        return invalid(format!(
            "commutator estimate needs l >= {}, got {l}",
            commutator_threshold(params)
        ));
    }
    if triples.is_empty() {
        return invalid("commutator fit needs a nonempty family");
    }
    let terms: Vec<CommutatorTerms> = triples
        .par_iter()
        .map(|(g, f, h)| commutator_terms(g, f, h, l, params, quad))
        .collect::<Result<_>>()?;
    let c_l = fit_upper(terms.iter().map(|t| ((t.lhs - t.omega_term) / t.constant_factor).max(0.0)));
    let samples = terms
        .iter()
        .enumerate()
        .map(|(k, t)| sample(format!("triple {k}"), t.lhs, t.omega_term + c_l * t.constant_factor))
        .collect();
    let digest = field_digest(triples.iter().flat_map(|(g, f, h)| [g, f, h]));
    Ok(InequalityReport::from_samples(
        "commutator",
        samples,
        constants(&[("C_l", c_l), ("omega_l-2-gamma", omega(l - 2.0 - params.gamma, params)?)]),
        DEFAULT_ABS_TOL,
        digest,
    )
    .with_note(format!("l = {l}")))
}

// ---------------------------------------------------------------------------
// Interpolation inequalities
// ---------------------------------------------------------------------------

/// Which interpolation inequality to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationKind {
    /// Weighted L² by the hypoelliptic gain, the triple norm and a weighted L¹ remainder.
    Embedding,
    /// The same trade for third spatial derivatives with the ladder discount.
    Spatial,
    /// Smallness of the weighted `H²_x` part against the `Y_ℓ` norm.
    Smallness,
}

impl InterpolationKind {
    pub fn name(&self) -> &'static str {
        match self {
            InterpolationKind::Embedding => "embedding",
            InterpolationKind::Spatial => "spatial",
            InterpolationKind::Smallness => "smallness",
        }
    }

    /// Exponent `p` of the remainder factor `ε^{−p}`.
    pub fn exponent(&self, params: &KernelParams) -> f64 {
        match self {
            InterpolationKind::Embedding | InterpolationKind::Spatial => (3.0 + 6.0 * params.s) / params.s,
            InterpolationKind::Smallness => 5.0,
        }
    }
}

/// `lhs ≤ ε·eps_part + C ε^{−p}·remainder` for one field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationTerms {
    pub lhs: f64,
    pub eps_part: f64,
    pub remainder: f64,
}

fn h2x_multiplier(k: [f64; 3]) -> rustfft::num_complex::Complex64 {
    let sq = [k[0] * k[0], k[1] * k[1], k[2] * k[2]];
    let second = sq[0] * sq[0] + sq[1] * sq[1] + sq[2] * sq[2] + sq[0] * sq[1] + sq[0] * sq[2] + sq[1] * sq[2];
    rustfft::num_complex::Complex64::new((1.0 + sq[0] + sq[1] + sq[2] + second).sqrt(), 0.0)
}

pub fn interpolation_terms(
    h: &DistributionField,
    which: InterpolationKind,
    params: &KernelParams,
    cfg: &NormLadderConfig,
) -> Result<InterpolationTerms> {
    let (s, gam) = (params.s, params.gamma);
    let shift = gam / (2.0 * (1.0 + 2.0 * s));
    let order = s / (1.0 + 2.0 * s);
    let lad = &cfg.ladder;
    match which {
        InterpolationKind::Embedding => {
            let t = triple_norm_x(h, params, cfg)?;
            Ok(InterpolationTerms {
                lhs: weighted_l2_sq(h, s + 0.5 * gam),
                eps_part: weighted_l2_sq(&bracket_dx(h, order), shift) + t * t,
                remainder: weighted_l1(h, 3.0 + 7.0 * s + 2.0 * gam).powi(2),
            })
        }
        InterpolationKind::Spatial => {
            if !h.grid.is_homogeneous() && h.grid.nx < crate::norms::MIN_NX_FOR_DERIVATIVES {
                return invalid("spatial interpolation needs nx >= 8");
            }
            let tau = lad.ell - 3.0 * lad.rho;
            let mut lhs = 0.0;
            let mut eps_part = 0.0;
            for d in third_derivatives(h)? {
                lhs += weighted_l2_sq(&d, tau + s + 0.5 * gam);
                eps_part += weighted_l2_sq(&bracket_dx(&d, order), tau + shift);
            }
            Ok(InterpolationTerms {
                lhs,
                eps_part,
                remainder: weighted_l2_sq(h, tau + 3.0 * lad.rho),
            })
        }
        InterpolationKind::Smallness => {
            let top = fractional_deriv_v(h, s, lad.ell1 + 2.0 * s + 0.5 * gam)?;
            let lhs = weighted_l2_sq(&spatial_multiplier(&top, h2x_multiplier), 0.0);
            let y = y_norm(h, params, cfg)?;
            let low = fractional_deriv_v(h, s, lad.ell1 + 0.5 * gam)?;
            Ok(InterpolationTerms {
                lhs,
                eps_part: y * y,
                remainder: weighted_l2_sq(&low, 0.0),
            })
        }
    }
}

/// Fitted ε-exponent of an interpolation family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentStudy {
    pub eps: Vec<f64>,
    /// `K(ε) = max_i (lhs_i − ε·eps_part_i)_+ / remainder_i`.
    pub needed: Vec<f64>,
    /// Log-log slope of `K` over the ε with `K > 0`; `None` if fewer than two.
    pub fitted_exponent: Option<f64>,
    pub expected_exponent: f64,
    /// Slope within 15% of `−p`.
    pub confirmed: bool,
}

/// Relative tolerance of the ε-exponent confirmation.
pub const EXPONENT_REL_TOL: f64 = 0.15;

/// Interpolation verdicts: one report per ε sharing one fitted constant, and
/// the ε-exponent regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationOutcome {
    pub kind: InterpolationKind,
    pub constant: f64,
    pub reports: Vec<InequalityReport>,
    pub exponent: ExponentStudy,
}

impl InterpolationOutcome {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

/// Evaluates one interpolation inequality on a family of fields over `eps_list`.
pub fn verify_interpolation(
    family: &[DistributionField],
    which: InterpolationKind,
    eps_list: &[f64],
    params: &KernelParams,
    cfg: &NormLadderConfig,
) -> Result<InterpolationOutcome> {
    if family.is_empty() || eps_list.is_empty() {
        return invalid("interpolation check needs fields and ε values");
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return invalid("ε values must be positive");
    }
    let terms: Vec<InterpolationTerms> = family
        .par_iter()
        .map(|h| interpolation_terms(h, which, params, cfg))
        .collect::<Result<_>>()?;
    interpolation_outcome(&terms, which, eps_list, params, field_digest(family.iter()))
}

/// Fits and reports from precomputed terms.
pub fn interpolation_outcome(
    terms: &[InterpolationTerms],
    which: InterpolationKind,
    eps_list: &[f64],
    params: &KernelParams,
    digest: String,
) -> Result<InterpolationOutcome> {
    let p = which.exponent(params);
    let needed_at = |eps: f64| -> f64 {
        terms
            .iter()
            .map(|t| {
                let excess = t.lhs - eps * t.eps_part;
                if excess <= 0.0 {
                    0.0
                } else if t.remainder > 0.0 {
                    excess / t.remainder
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    };
    let needed: Vec<f64> = eps_list.iter().map(|&e| needed_at(e)).collect();
    let constant = fit_upper(eps_list.iter().zip(&needed).map(|(e, k)| k * e.powf(p)));
    let reports = eps_list
        .iter()
        .map(|&eps| {
            let samples = terms
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    sample(
                        format!("eps={eps} field {k}"),
                        t.lhs,
                        eps * t.eps_part + constant * eps.powf(-p) * t.remainder,
                    )
                })
                .collect();
            let scale_ref = terms.iter().map(|t| t.lhs.abs()).fold(0.0, f64::max);
            InequalityReport::from_samples(
                format!("interpolation_{}", which.name()),
                samples,
                constants(&[("C", constant), ("eps", eps)]),
                DEFAULT_ABS_TOL * scale_ref.max(1.0),
                digest.clone(),
            )
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps_list
        .iter()
        .zip(&needed)
        .filter(|(_, k)| **k > 0.0 && k.is_finite())
        .map(|(e, k)| (e.ln(), k.ln()))
        .unzip();
    let fitted_exponent = if xs.len() >= 2 { Some(linear_fit(&xs, &ys).0) } else { None };
    let confirmed = fitted_exponent.is_some_and(|e| ((e + p) / p).abs() <= EXPONENT_REL_TOL);
    Ok(InterpolationOutcome {
        kind: which,
        constant,
        reports,
        exponent: ExponentStudy {
            eps: eps_list.to_vec(),
            needed,
            fitted_exponent,
            expected_exponent: -p,
            confirmed,
        },
    })
}

// ---------------------------------------------------------------------------
// Symbol inequalities of the hypoelliptic multipliers
// ---------------------------------------------------------------------------

/// Degree-7 smoothstep on `[0, 1]`: `35t⁴ − 84t⁵ + 70t⁶ − 20t⁷`.
fn smoothstep7(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(4) * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))
}

fn smoothstep7_deriv(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    140.0 * t.powi(3) * (1.0 - t).powi(3)
}

/// Cutoff `χ`: equal to 1 on `[−1, 1]`, 0 outside `[−2, 2]`, with a degree-7
/// smoothstep transition in between.
pub fn chi(x: f64) -> f64 {
    1.0 - smoothstep7(x.abs() - 1.0)
}

/// `χ'(x)`.
pub fn chi_deriv(x: f64) -> f64 {
    -x.signum() * smoothstep7_deriv(x.abs() - 1.0)
}

/// Which symbol inequality to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    Unweighted,
    Weighted,
}

/// Sampling of the symbol checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolSampleSpec {
    pub n_samples: usize,
    /// Integer frequencies are drawn from `{1..k_max}³`.
    pub k_max: i64,
    /// `η` ranges over `±eta_scale` times the transition radius.
    pub eta_scale: f64,
    /// Velocities of the weighted check range over `[−v_max, v_max]³`.
    pub v_max: f64,
    pub seed: u64,
    /// Accepted relative change of the fitted constant under sample doubling.
    pub stability_tol: f64,
}

impl Default for SymbolSampleSpec {
    fn default() -> Self {
        SymbolSampleSpec {
            n_samples: 20_000,
            k_max: 64,
            eta_scale: 3.0,
            v_max: 10.0,
            seed: 0,
            stability_tol: 0.1,
        }
    }
}

fn exponents(params: &KernelParams) -> (f64, f64) {
    let d = 1.0 + 2.0 * params.s;
    ((2.0 + 2.0 * params.s) / d, 1.0 / d)
}

fn bracket3(x: [f64; 3]) -> f64 {
    (1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// The unweighted multiplier `φ_k(η) = 2k·η ⟨k⟩^{−a} χ(⟨η⟩⟨k⟩^{−b})` with
/// `a = (2+2s)/(1+2s)`, `b = 1/(1+2s)`.
pub fn phi_symbol(k: [f64; 3], eta: [f64; 3], params: &KernelParams) -> f64 {
    psi_symbol(k, eta, 1.0, params)
}

/// The weighted multiplier `ψ_k = 2w k·η ⟨k⟩^{−a} χ(w⟨η⟩⟨k⟩^{−b})` with
/// `w = ⟨v⟩^{γ/(1+2s)}` supplied by the caller.
pub fn psi_symbol(k: [f64; 3], eta: [f64; 3], w: f64, params: &KernelParams) -> f64 {
    let (a, b) = exponents(params);
    let bk = bracket3(k);
    2.0 * w * dot(k, eta) / bk.powf(a) * chi(w * bracket3(eta) / bk.powf(b))
}

/// `½ Σ_j k_j ∂_{η_j} ψ_k(η)` in closed form; with `w = 1` this is the
/// unweighted expression and for general `w` it equals `½{ψ_k, v·k}`.
pub fn half_bracket(k: [f64; 3], eta: [f64; 3], w: f64, params: &KernelParams) -> f64 {
    let (a, b) = exponents(params);
    let bk = bracket3(k);
    let be = bracket3(eta);
    let r = w * be / bk.powf(b);
    let ke = dot(k, eta);
    w * dot(k, k) / bk.powf(a) * chi(r) + w * w * ke * ke / (bk.powf(a + b) * be) * chi_deriv(r)
}

/// Fitted constant of the symbol lower bound over a sample of size `n`.
fn symbol_constant(kind: SymbolKind, params: &KernelParams, spec: &SymbolSampleSpec, n: usize) -> (f64, f64) {
    let mut r = rng(spec.seed);
    let dims = match kind {
        SymbolKind::Unweighted => 3,
        SymbolKind::Weighted => 6,
    };
    let design = latin_hypercube(&mut r, n, dims);
    let (_, b) = exponents(params);
    let power = 2.0 * params.s / (1.0 + 2.0 * params.s);
    let mut worst: f64 = 0.0;
    let mut min_slack = f64::INFINITY;
    for u in &design {
        let k = [
            r.gen_range(1..=spec.k_max) as f64,
            r.gen_range(1..=spec.k_max) as f64,
            r.gen_range(1..=spec.k_max) as f64,
        ];
        let (v, w) = match kind {
            SymbolKind::Unweighted => ([0.0; 3], 1.0),
            SymbolKind::Weighted => {
                let v = [
                    (2.0 * u[3] - 1.0) * spec.v_max,
                    (2.0 * u[4] - 1.0) * spec.v_max,
                    (2.0 * u[5] - 1.0) * spec.v_max,
                ];
                (v, bracket3(v).powf(params.gamma / (1.0 + 2.0 * params.s)))
            }
        };
        let radius = spec.eta_scale * bracket3(k).powf(b) / w;
        let eta = [
            (2.0 * u[0] - 1.0) * radius,
            (2.0 * u[1] - 1.0) * radius,
            (2.0 * u[2] - 1.0) * radius,
        ];
        let e = half_bracket(k, eta, w, params);
        let target = w * bracket3(k).powf(power);
        let penalty = bracket3(v).powf(params.gamma) * bracket3(eta).powf(2.0 * params.s);
        worst = worst.max((target - e) / penalty);
        min_slack = min_slack.min(e - target);
    }
    (fit_upper([worst]), min_slack)
}

/// Fits `C` in the symbol lower bound on `n` and `2n` samples; passes iff the
/// constant is finite and changes by at most `stability_tol` under doubling.
pub fn symbol_check(kind: SymbolKind, params: &KernelParams, spec: &SymbolSampleSpec) -> Result<InequalityReport> {
    params.validate()?;
    if spec.n_samples < 8 || spec.k_max < 1 || !(spec.eta_scale > 0.0 && spec.v_max >= 0.0) {
        return invalid(format!("invalid symbol sample spec {spec:?}"));
    }
    let (c_n, _) = symbol_constant(kind, params, spec, spec.n_samples);
    let (c_2n, _) = symbol_constant(kind, params, spec, 2 * spec.n_samples);
    let change = (c_2n - c_n).abs() / c_n;
    let name = match kind {
        SymbolKind::Unweighted => "symbol_unweighted",
        SymbolKind::Weighted => "symbol_weighted",
    };
    let samples = vec![sample(
        format!("relative change of C under doubling to {} samples", 2 * spec.n_samples),
        change,
        spec.stability_tol,
    )];
    let mut rep = InequalityReport::from_samples(
        name,
        samples,
        constants(&[("C", c_2n), ("C_half_sample", c_n)]),
        0.0,
        short_hash(&format!("{kind:?}|{params:?}|{spec:?}")),
    );
    if !c_2n.is_finite() {
        rep = rep.fail("fitted constant is not finite");
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Sample families
// ---------------------------------------------------------------------------

/// Signed combination `Σ c_j μ_{T_j}` of centred Maxwellian dilates with
/// coefficients in `[−1, 1]` and temperatures in `[0.5, 1.2]`.
pub fn dilate_combination(grid: PhaseGrid, terms: usize, seed: u64) -> DistributionField {
    let mut r = rng(seed);
    let comps: Vec<(f64, f64)> = (0..terms.max(1))
        .map(|_| (r.gen_range(-1.0..=1.0), r.gen_range(0.5..=1.2)))
        .collect();
    DistributionField::from_fn(grid, |_, v| {
        comps
            .iter()
            .map(|(c, t)| crate::phase_field::maxwellian_value(v, *c, *t, [0.0; 3]))
            .sum()
    })
}

/// `count` signed fields `(mixture − μ)·profile` modulated in space by a
/// seeded low-mode cosine, used to exercise the spatial terms.
pub fn modulated_family(grid: PhaseGrid, count: usize, seed: u64) -> Result<Vec<DistributionField>> {
    let mut r = rng(seed);
    let spread = crate::sampling::MixtureSpread::default();
    (0..count)
        .map(|_| {
            let comps = crate::sampling::random_mixture(&mut r, &spread);
            crate::sampling::check_mixture_fits(&grid, &comps)?;
            let mode = r.gen_range(1..=2) as f64;
            let phase = r.gen_range(0.0..2.0 * PI);
            let amp = r.gen_range(0.2..=0.6);
            Ok(DistributionField::from_fn(grid, |x, v| {
                let base = crate::sampling::mixture_value(v, &comps);
                base * (1.0 + amp * (2.0 * PI * mode * x[0] + phase).cos())
            }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GaussianBump;
    use crate::phase_field::maxwellian;

    #[test]
    fn chi_is_a_smooth_plateau_cutoff() {
        assert_eq!(chi(0.3), 1.0);
        assert_eq!(chi(-1.0), 1.0);
        assert_eq!(chi(2.0), 0.0);
        assert_eq!(chi(5.0), 0.0);
        assert!((chi(1.5) - 0.5).abs() < 1e-15);
        let h = 1e-6;
        for x in [1.2, 1.5, 1.9, -1.3] {
            let fd = (chi(x + h) - chi(x - h)) / (2.0 * h);
            assert!((fd - chi_deriv(x)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn half_bracket_matches_finite_differences() {
        let p = KernelParams::new(1.0, 0.5, 1.0).unwrap();
        let k = [3.0, -2.0, 5.0];
        let eta = [1.1, 0.4, 1.3];
        let w = 1.7;
        let h = 1e-6;
        let mut fd = 0.0;
        for j in 0..3 {
            let mut a = eta;
            let mut b = eta;
            a[j] += h;
            b[j] -= h;
            fd += 0.5 * k[j] * (psi_symbol(k, a, w, &p) - psi_symbol(k, b, w, &p)) / (2.0 * h);
        }
        assert!((fd - half_bracket(k, eta, w, &p)).abs() < 1e-6);
    }

    #[test]
    fn closed_form_moment_matches_azimuth_quadrature() {
        let grid = PhaseGrid::homogeneous(8, 4.0).unwrap();
        let f = maxwellian(grid, 1.0, 1.0, [0.2, 0.0, 0.0]).unwrap();
        let g = maxwellian(grid, 1.0, 0.8, [0.0, -0.3, 0.0]).unwrap();
        let p = KernelParams::default();
        let q = WeakMomentQuad::default();
        let exact = moment_production(&g, &f, 6.0, &p, &q).unwrap();
        let near = moment_production(&g, &f, 6.0 + 1e-9, &p, &q).unwrap();
        assert!(((exact - near) / exact).abs() < 1e-6, "{exact} {near}");
    }

    #[test]
    fn cancellation_of_zero_is_zero() {
        let g = GaussianBump {
            amplitude: 0.0,
            center: [0.0; 3],
            temperature: 1.0,
        };
        let q = CancellationQuad::default();
        let (l, r) = cancellation_sides(&g, [0.0; 3], &KernelParams::default(), &q).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        assert_eq!(relative_gap(l, r), 0.0);
    }

    #[test]
    fn fits_apply_headroom() {
        assert!((fit_upper([1.0, 2.0]) - 2.1).abs() < 1e-12);
        assert!((fit_lower([1.0, 2.0]) - 0.95).abs() < 1e-12);
        assert_eq!(fit_upper([0.0]), MIN_CONSTANT);
    }
}
