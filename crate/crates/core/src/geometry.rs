//! Collision geometry in the σ-representation.
//!
//! Post-collisional velocities are `v' = (v+v*)/2 + |v−v*|σ/2` and
//! `v'* = (v+v*)/2 − |v−v*|σ/2`; the deviation angle is the angle between
//! `κ = (v−v*)/|v−v*|` and `σ`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, numerical, Error, Result};
use crate::quadrature::{periodic_nodes, GaussLegendre};
use crate::{bracket, bracket_pow};

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, c: f64) -> Vec3 {
    [a[0] * c, a[1] * c, a[2] * c]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Orthonormal pair `(e1, e2)` completing the unit vector `k` to a basis.
///
/// The construction is deterministic and satisfies `e1(−k) = −e1(k)`,
/// `e2(−k) = e2(k)`; the discrete collision operator relies on this to pair
/// every quadrature node of `(v, v*)` with one of `(v*, v)`.
pub fn orthonormal_complement(k: Vec3) -> (Vec3, Vec3) {
    let ak = [k[0].abs(), k[1].abs(), k[2].abs()];
    let mut axis = 0;
    if ak[1] < ak[axis] {
        axis = 1;
    }
    if ak[2] < ak[axis] {
        axis = 2;
    }
    let mut a = [0.0; 3];
    a[axis] = 1.0;
    let c = cross(a, k);
    let e1 = scale(c, 1.0 / norm(c));
    let e2 = cross(k, e1);
    (e1, e2)
}

/// A pre-collisional configuration `(v, v*, σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionTriple {
    pub v: Vec3,
    pub v_star: Vec3,
    pub sigma: Vec3,
}

impl CollisionTriple {
    pub fn new(v: Vec3, v_star: Vec3, sigma: Vec3) -> Result<Self> {
        let t = CollisionTriple { v, v_star, sigma };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let n = norm(self.sigma);
        if (n - 1.0).abs() > 1e-12 {
            return invalid(format!("sigma must be a unit vector, |sigma| = {n}"));
        }
        if !(self.v.iter().chain(&self.v_star).all(|x| x.is_finite())) {
            return invalid("velocities must be finite");
        }
        Ok(())
    }
}

/// Post-collisional velocities `(v', v'*)`.
pub fn post_collision(t: &CollisionTriple) -> (Vec3, Vec3) {
    let c = scale(add(t.v, t.v_star), 0.5);
    let r = norm(sub(t.v, t.v_star));
    let d = scale(t.sigma, 0.5 * r);
    (add(c, d), sub(c, d))
}

/// Deviation angle and the orthonormal directions `κ`, `κ⊥`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationFrame {
    pub theta: f64,
    pub kappa: Vec3,
    pub kappa_perp: Vec3,
    /// True when `κ⊥` came from the fallback basis because `σ ∥ κ`.
    pub degenerate: bool,
}

const FRAME_EPS: f64 = 1e-10;

fn frame_parts(t: &CollisionTriple) -> Result<(f64, Vec3, Vec3, f64)> {
    let z = sub(t.v, t.v_star);
    let r = norm(z);
    if r == 0.0 {
        return invalid("deviation angle undefined for v = v*");
    }
    let kappa = scale(z, 1.0 / r);
    let c = dot(kappa, t.sigma).clamp(-1.0, 1.0);
    let p = sub(t.sigma, scale(kappa, c));
    let pn = norm(p);
    Ok((c.acos(), kappa, p, pn))
}

/// Frame with `κ⊥ = (σ − (σ·κ)κ)/|σ − (σ·κ)κ|`; fails when `σ ∥ κ`.
pub fn deviation_frame(t: &CollisionTriple) -> Result<DeviationFrame> {
    let (theta, kappa, p, pn) = frame_parts(t)?;
    if pn < FRAME_EPS {
        return Err(Error::Validation(format!(
            "degenerate deviation frame: sigma parallel to kappa (theta = {theta})"
        )));
    }
    Ok(DeviationFrame {
        theta,
        kappa,
        kappa_perp: scale(p, 1.0 / pn),
        degenerate: false,
    })
}

/// Like [`deviation_frame`] but substitutes a Gram–Schmidt fallback for `κ⊥`
/// when `σ ∥ κ`, flagging the result.
pub fn deviation_frame_or_fallback(t: &CollisionTriple) -> Result<DeviationFrame> {
    let (theta, kappa, p, pn) = frame_parts(t)?;
    if pn >= FRAME_EPS {
        return Ok(DeviationFrame {
            theta,
            kappa,
            kappa_perp: scale(p, 1.0 / pn),
            degenerate: false,
        });
    }
    let (e1, _) = orthonormal_complement(kappa);
    Ok(DeviationFrame {
        theta,
        kappa,
        kappa_perp: e1,
        degenerate: true,
    })
}

/// Principal terms of the expansion of `⟨v'⟩^l` and the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightExpansion {
    /// `⟨v⟩^l cos^l(θ/2)`, `⟨v*⟩^l sin^l(θ/2)` and the first-order cross term.
    pub principal: [f64; 3],
    pub remainder: f64,
    /// Comparison envelope of the remainder (without constant).
    pub envelope: f64,
}

/// Expansion `⟨v'⟩^l = ⟨v⟩^l c^l + ⟨v*⟩^l s^l + l⟨v⟩^{l−2}|v−v*|(v·κ⊥)c^{l−1}s + R_l`
/// with `c = cos(θ/2)`, `s = sin(θ/2)`.
pub fn weight_expansion(t: &CollisionTriple, l: f64) -> Result<WeightExpansion> {
    if !(l >= 5.0) {
        return invalid(format!("weight expansion needs l >= 5, got {l}"));
    }
    t.validate()?;
    let fr = deviation_frame_or_fallback(t)?;
    let (vp, _) = post_collision(t);
    let r = norm(sub(t.v, t.v_star));
    let c = (0.5 * fr.theta).cos();
    let s = (0.5 * fr.theta).sin();
    let bv = bracket(t.v);
    let bs = bracket(t.v_star);
    let t1 = bv.powf(l) * c.powf(l);
    let t2 = bs.powf(l) * s.powf(l);
    let t3 = l * bv.powf(l - 2.0) * r * dot(t.v, fr.kappa_perp) * c.powf(l - 1.0) * s;
    let remainder = bracket_pow(vp, l) - t1 - t2 - t3;
    Ok(WeightExpansion {
        principal: [t1, t2, t3],
        remainder,
        envelope: remainder_envelope(bv, bs, s, l),
    })
}

/// `⟨v⟩⟨v*⟩^{l−1} s^{l−3} + ⟨v⟩^{l−2}⟨v*⟩² s² + ⟨v⟩^{l−4}⟨v*⟩⁴ s²`.
pub fn remainder_envelope(bv: f64, bs: f64, s: f64, l: f64) -> f64 {
    bv * bs.powf(l - 1.0) * s.powf(l - 3.0)
        + bv.powf(l - 2.0) * bs * bs * s * s
        + bv.powf(l - 4.0) * bs.powi(4) * s * s
}

/// Uniformly random unit vector.
pub fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let rho = (1.0 - z * z).sqrt();
    [rho * phi.cos(), rho * phi.sin(), z]
}

/// Random triple with `|v|, |v*| ≤ vmax` and deviation angle in `(0, π/2]`.
pub fn random_triple(rng: &mut ChaCha8Rng, vmax: f64) -> CollisionTriple {
    loop {
        let v = scale(random_unit(rng), vmax * rng.gen::<f64>().cbrt());
        let v_star = scale(random_unit(rng), vmax * rng.gen::<f64>().cbrt());
        let z = sub(v, v_star);
        let r = norm(z);
        if r < 1e-8 {
            continue;
        }
        let kappa = scale(z, 1.0 / r);
        let (e1, e2) = orthonormal_complement(kappa);
        let theta: f64 = rng.gen_range(1e-6..FRAC_PI_2);
        let phi: f64 = rng.gen_range(0.0..2.0 * PI);
        let sigma = add(
            scale(kappa, theta.cos()),
            add(scale(e1, theta.sin() * phi.cos()), scale(e2, theta.sin() * phi.sin())),
        );
        let sn = norm(sigma);
        return CollisionTriple {
            v,
            v_star,
            sigma: scale(sigma, 1.0 / sn),
        };
    }
}

/// Empirical constant of the remainder bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderFit {
    pub l: f64,
    pub samples: usize,
    /// 1.05 × the largest observed ratio `|R_l| / envelope`.
    pub constant: f64,
    pub max_ratio: f64,
}

/// Fits the remainder constant on `samples` random triples.
pub fn fit_remainder_constant(
    l: f64,
    samples: usize,
    vmax: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RemainderFit> {
    let mut max_ratio: f64 = 0.0;
    for _ in 0..samples {
        let t = random_triple(rng, vmax);
        let w = weight_expansion(&t, l)?;
        if w.envelope > 0.0 {
            let ratio = w.remainder.abs() / w.envelope;
            if !ratio.is_finite() {
                return numerical("non-finite remainder ratio");
            }
            max_ratio = max_ratio.max(ratio);
        }
    }
    Ok(RemainderFit {
        l,
        samples,
        constant: 1.05 * max_ratio,
        max_ratio,
    })
}

/// Angular weight `H(θ)` supported on `[lo, hi] ⊂ (0, π/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularWeight {
    pub lo: f64,
    pub hi: f64,
    pub profile: AngularProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularProfile {
    /// `H = 1` on the support.
    Indicator,
    /// `H = cos^p θ` on the support.
    CosPower(f64),
}

impl AngularWeight {
    pub fn indicator(lo: f64, hi: f64) -> Self {
        AngularWeight {
            lo,
            hi,
            profile: AngularProfile::Indicator,
        }
    }

    pub fn value(&self, theta: f64) -> f64 {
        if theta < self.lo || theta > self.hi {
            return 0.0;
        }
        match self.profile {
            AngularProfile::Indicator => 1.0,
            AngularProfile::CosPower(p) => theta.cos().powf(p),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.lo < self.hi && self.hi <= FRAC_PI_2) {
            return invalid(format!(
                "angular weight support [{}, {}] must lie in (0, pi/2]",
                self.lo, self.hi
            ));
        }
        Ok(())
    }
}

/// Sphere quadrature around the pole `k`: Gauss–Legendre in `cos θ` on the
/// support `[lo, hi]` and a uniform rule in `φ`. Returns `(θ, σ, weight)`.
pub fn sphere_rule_around(
    k: Vec3,
    lo: f64,
    hi: f64,
    n_theta: usize,
    n_phi: usize,
) -> Vec<(f64, Vec3, f64)> {
    let (e1, e2) = orthonormal_complement(k);
    let gl = GaussLegendre::cached(n_theta);
    let (cs, ws) = gl.on_interval(hi.cos(), lo.cos());
    let (phis, wphi) = periodic_nodes(n_phi);
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for (c, w) in cs.iter().zip(&ws) {
        let st = (1.0 - c * c).max(0.0).sqrt();
        let theta = c.acos();
        for phi in &phis {
            let sigma = add(
                scale(k, *c),
                add(scale(e1, st * phi.cos()), scale(e2, st * phi.sin())),
            );
            out.push((theta, sigma, w * wphi));
        }
    }
    out
}

/// Smooth scalar test function on `R³` with a known centre and length scale
/// used to place quadrature nodes.
pub trait TestFunction: Sync {
    fn eval(&self, v: Vec3) -> f64;
    fn center(&self) -> Vec3;
    fn length_scale(&self) -> f64;
}

/// Isotropic Gaussian `a·exp(−|v−c|²/(2T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub amplitude: f64,
    pub center: Vec3,
    pub temperature: f64,
}

impl TestFunction for GaussianBump {
    fn eval(&self, v: Vec3) -> f64 {
        let d = sub(v, self.center);
        self.amplitude * (-dot(d, d) / (2.0 * self.temperature)).exp()
    }
    fn center(&self) -> Vec3 {
        self.center
    }
    fn length_scale(&self) -> f64 {
        self.temperature.sqrt()
    }
}

/// Change-of-variable identity to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovKind {
    /// Unit-Jacobian exchange of pre- and post-collisional variables.
    PrePost,
    /// `v*` fixed: `f(v')` traded for `f(v)/cos^{3+γ}(θ/2)`.
    CarlemanCos,
    /// `v` fixed: `f(v')` traded for `f(v*)/sin^{3+γ}(θ/2)`.
    CarlemanSin,
}

/// Resolution of the identity quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovQuad {
    pub n_radial: usize,
    pub n_dir_theta: usize,
    pub n_dir_phi: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    /// Orders of the product rule for the centre of mass (pre/post only).
    pub n_center: usize,
    /// Half-width, in length scales, of the region covering the test function.
    pub reach: f64,
    pub tol: f64,
}

impl Default for CovQuad {
    fn default() -> Self {
        CovQuad {
            n_radial: 48,
            n_dir_theta: 24,
            n_dir_phi: 48,
            n_theta: 16,
            n_phi: 16,
            n_center: 12,
            reach: 8.0,
            tol: 1e-6,
        }
    }
}

impl CovQuad {
    /// Every order doubled.
    pub fn refined(&self) -> Self {
        CovQuad {
            n_radial: 2 * self.n_radial,
            n_dir_theta: 2 * self.n_dir_theta,
            n_dir_phi: 2 * self.n_dir_phi,
            n_theta: 2 * self.n_theta,
            n_phi: 2 * self.n_phi,
            n_center: 2 * self.n_center,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub kind: CovKind,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_discrepancy: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Relative discrepancy with a guarded denominator.
pub fn rel_discrepancy(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn direction_rule(n_theta: usize, n_phi: usize) -> Vec<(Vec3, f64)> {
    let gl = GaussLegendre::cached(n_theta);
    let (phis, wphi) = periodic_nodes(n_phi);
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for (c, w) in gl.nodes.iter().zip(&gl.weights) {
        let st = (1.0 - c * c).sqrt();
        for phi in &phis {
            out.push(([st * phi.cos(), st * phi.sin(), *c], w * wphi));
        }
    }
    out
}

/// `∫ |v−w|^γ f(v) dv` in spherical coordinates about `w`.
fn kinetic_moment(f: &dyn TestFunction, w: Vec3, gamma: f64, q: &CovQuad) -> f64 {
    let rmax = norm(sub(f.center(), w)) + q.reach * f.length_scale();
    let dirs = direction_rule(q.n_dir_theta, q.n_dir_phi);
    let gl = GaussLegendre::cached(q.n_radial);
    let (rs, wr) = gl.on_interval(0.0, rmax);
    let mut acc = 0.0;
    for (r, w_r) in rs.iter().zip(&wr) {
        let rk = if gamma == 0.0 { 1.0 } else { r.powf(gamma) };
        for (d, wd) in &dirs {
            acc += w_r * wd * r * r * rk * f.eval(add(w, scale(*d, *r)));
        }
    }
    acc
}

fn angular_factor(h: &AngularWeight, q: &CovQuad, g: impl Fn(f64) -> f64) -> f64 {
    let gl = GaussLegendre::cached(4 * q.n_theta);
    2.0 * PI * gl.integrate(|t| t.sin() * h.value(t) * g(t), h.lo, h.hi)
}

/// Checks one of the change-of-variable identities by two independent quadratures.
pub fn check_cov_identity(
    kind: CovKind,
    f: &dyn TestFunction,
    fixed: Vec3,
    h: &AngularWeight,
    gamma: f64,
    q: &CovQuad,
) -> Result<IdentityReport> {
    h.validate()?;
    if gamma < 0.0 {
        return invalid("gamma must be >= 0");
    }
    let (lhs, rhs) = match kind {
        CovKind::CarlemanCos => {
            let lhs = carleman_lhs(f, fixed, h, gamma, q, false);
            let p = 3.0 + gamma;
            let ang = angular_factor(h, q, |t| (0.5 * t).cos().powf(-p));
            (lhs, ang * kinetic_moment(f, fixed, gamma, q))
        }
        CovKind::CarlemanSin => {
            let lhs = carleman_lhs(f, fixed, h, gamma, q, true);
            let p = 3.0 + gamma;
            let ang = angular_factor(h, q, |t| (0.5 * t).sin().powf(-p));
            (lhs, ang * kinetic_moment(f, fixed, gamma, q))
        }
        CovKind::PrePost => pre_post_sides(f, fixed, h, gamma, q),
    };
    if !(lhs.is_finite() && rhs.is_finite()) {
        return numerical("identity quadrature produced non-finite values");
    }
    let rel = rel_discrepancy(lhs, rhs);
    Ok(IdentityReport {
        kind,
        lhs,
        rhs,
        rel_discrepancy: rel,
        tol: q.tol,
        pass: rel <= q.tol,
    })
}

/// Direct quadrature of `∫∫ |v−v*|^γ H(θ) f(v') dσ d(v or v*)` with the other
/// velocity fixed. The integration variable is written `fixed ± r ω`.
fn carleman_lhs(
    f: &dyn TestFunction,
    fixed: Vec3,
    h: &AngularWeight,
    gamma: f64,
    q: &CovQuad,
    v_fixed: bool,
) -> f64 {
    let dirs = direction_rule(q.n_dir_theta, q.n_dir_phi);
    let gl_t = GaussLegendre::cached(q.n_theta);
    let (thetas, wts) = gl_t.on_interval(h.lo, h.hi);
    let (phis, wphi) = periodic_nodes(q.n_phi);
    let gl_r = GaussLegendre::cached(q.n_radial);
    let dist = norm(sub(f.center(), fixed)) + q.reach * f.length_scale();
    let mut acc = 0.0;
    for (theta, wt) in thetas.iter().zip(&wts) {
        let hv = h.value(*theta);
        if hv == 0.0 {
            continue;
        }
        let (ct, st) = (theta.cos(), theta.sin());
        // |v' − fixed| = r cos(θ/2) (v* fixed) or r sin(θ/2) (v fixed).
        let shrink = if v_fixed {
            (0.5 * theta).sin()
        } else {
            (0.5 * theta).cos()
        };
        let (rs, wr) = gl_r.on_interval(0.0, dist / shrink);
        for (omega, wd) in &dirs {
            let (e1, e2) = orthonormal_complement(*omega);
            for phi in &phis {
                let sigma = add(
                    scale(*omega, ct),
                    add(scale(e1, st * phi.cos()), scale(e2, st * phi.sin())),
                );
                for (r, w_r) in rs.iter().zip(&wr) {
                    let rk = if gamma == 0.0 { 1.0 } else { r.powf(gamma) };
                    // v* fixed: v = v* + rω, v' = v* + r(ω+σ)/2.
                    // v fixed: v* = v − rω, v' = v + r(σ−ω)/2.
                    let vp = if v_fixed {
                        add(fixed, scale(sub(sigma, *omega), 0.5 * r))
                    } else {
                        add(fixed, scale(add(*omega, sigma), 0.5 * r))
                    };
                    acc += wt * st * wphi * wd * w_r * r * r * rk * hv * f.eval(vp);
                }
            }
        }
    }
    acc
}

/// Both sides of the pre/post exchange identity with a Gaussian observable
/// `ψ` centred at `fixed`:
/// `∫∫∫ B_H f(v')f(v'*) ψ(v) = ∫∫∫ B_H f(v)f(v*) ψ(v')`.
fn pre_post_sides(
    f: &dyn TestFunction,
    fixed: Vec3,
    h: &AngularWeight,
    gamma: f64,
    q: &CovQuad,
) -> (f64, f64) {
    let psi = GaussianBump {
        amplitude: 1.0,
        center: fixed,
        temperature: 1.0,
    };
    let ls = f.length_scale();
    let cen = f.center();
    let gl_c = GaussLegendre::cached(q.n_center);
    let half = 0.5 * q.reach * ls;
    let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
        .map(|d| gl_c.on_interval(cen[d] - half, cen[d] + half))
        .collect();
    let gl_r = GaussLegendre::cached(q.n_radial);
    let (rs, wr) = gl_r.on_interval(0.0, 2.0 * q.reach * ls);
    let dirs = direction_rule(q.n_dir_theta, q.n_dir_phi);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (x, wx) in axes[0].0.iter().zip(&axes[0].1) {
        for (y, wy) in axes[1].0.iter().zip(&axes[1].1) {
            for (z, wz) in axes[2].0.iter().zip(&axes[2].1) {
                let c = [*x, *y, *z];
                let wc = wx * wy * wz;
                for (r, w_r) in rs.iter().zip(&wr) {
                    let rk = if gamma == 0.0 { 1.0 } else { r.powf(gamma) };
                    let base = wc * w_r * r * r * rk;
                    for (kappa, wk) in &dirs {
                        let a = add(c, scale(*kappa, 0.5 * r));
                        let b = sub(c, scale(*kappa, 0.5 * r));
                        let fa_fb = f.eval(a) * f.eval(b);
                        let psi_a = psi.eval(a);
                        for (theta, sigma, ws) in
                            sphere_rule_around(*kappa, h.lo, h.hi, q.n_theta, q.n_phi)
                        {
                            let w = base * wk * ws * h.value(theta);
                            let ap = add(c, scale(sigma, 0.5 * r));
                            let bp = sub(c, scale(sigma, 0.5 * r));
                            lhs += w * f.eval(ap) * f.eval(bp) * psi_a;
                            rhs += w * fa_fb * psi.eval(ap);
                        }
                    }
                }
            }
        }
    }
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_on_collision_example() {
        let t = CollisionTriple::new([1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap();
        let (a, b) = post_collision(&t);
        assert!(norm(sub(a, [0.0, 1.0, 0.0])) < 1e-15);
        assert!(norm(sub(b, [0.0, -1.0, 0.0])) < 1e-15);
        let fr = deviation_frame(&t).unwrap();
        assert!((fr.theta - FRAC_PI_2).abs() < 1e-15);
        assert!(norm(sub(fr.kappa, [1.0, 0.0, 0.0])) < 1e-15);
        assert!(norm(sub(fr.kappa_perp, [0.0, 1.0, 0.0])) < 1e-15);
    }

    #[test]
    fn grazing_identity_collision() {
        let v = [0.3, -1.0, 2.0];
        let w = [1.0, 0.5, -0.5];
        let k = sub(v, w);
        let t = CollisionTriple::new(v, w, scale(k, 1.0 / norm(k))).unwrap();
        let (a, b) = post_collision(&t);
        assert!(norm(sub(a, v)) < 1e-14 && norm(sub(b, w)) < 1e-14);
        assert!(deviation_frame(&t).is_err());
        let e = weight_expansion(&t, 6.0).unwrap();
        assert!((e.principal[0] - bracket_pow(v, 6.0)).abs() < 1e-9);
        assert_eq!(e.principal[1], 0.0);
        assert_eq!(e.principal[2], 0.0);
        assert!(e.remainder.abs() < 1e-9);
    }

    #[test]
    fn complement_parity() {
        let k = [0.48, -0.6, 0.64];
        let (a1, a2) = orthonormal_complement(k);
        let (b1, b2) = orthonormal_complement(scale(k, -1.0));
        assert!(norm(add(a1, b1)) < 1e-15);
        assert!(norm(sub(a2, b2)) < 1e-15);
        assert!(dot(a1, k).abs() < 1e-15 && dot(a2, k).abs() < 1e-15 && dot(a1, a2).abs() < 1e-15);
    }
}
