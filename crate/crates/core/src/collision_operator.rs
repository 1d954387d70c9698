//! Quadrature evaluation of the bilinear collision operator `Q(g, f)`.
//!
//! Two discretizations share one angular rule (Gauss–Legendre in `ln θ` on
//! `[θ_min, π/2]`, uniform periodic nodes in the azimuth around `κ`):
//!
//! * [`Scheme::Conservative`] (default) discretizes the weak form
//!   `∫Q(g,f)φ = ∫∫∫ B g_* f (φ' − φ)`: every event `(v, v*, σ)` on the grid
//!   deposits its post-collisional velocity `v'` onto nodes with Lagrange
//!   weights and removes the same amount at `v`. Mass is conserved exactly,
//!   and for `f = g` momentum and energy are conserved exactly as well
//!   (the azimuthal nodes pair every event with its `v ↔ v*` mirror, and the
//!   tricubic deposit reproduces `1, v, |v|²`). An event is dropped, together
//!   with its mirror, when the deposit stencil of `v'` or `v'_*` leaves the
//!   cube.
//! * [`Scheme::Compensated`] evaluates the strong form
//!   `∫B g'_*(f' − f) + f ∫B (g'_* − g_*)` at each node with interpolated
//!   off-grid values and zero extension; the second integral may be replaced
//!   by the closed-form cancellation convolution. It is pointwise consistent
//!   but not discretely conservative, and serves as an independent oracle.
//!
//! For the conservative scheme the deposit pattern of an event relative to
//! `v` depends only on the grid vector `z = v − v*`, so patterns are built
//! once per `z` and merged across `σ`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::orthonormal_complement;
use crate::interp::{sample_3d, split_coordinate, Stencil};
use crate::kernel::{a_gamma_s, KernelParams};
use crate::phase_field::{bracket_weights, DistributionField, PhaseGrid};
use crate::quadrature::{log_gauss, periodic_nodes};
use crate::spectral::VelocitySpectrum;
use crate::spline::SplineBasis;
use rustfft::num_complex::Complex64;

/// Discretization of the collision integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Fourier-side evaluation for `γ = 0`, conservative scatter otherwise.
    Auto,
    Conservative,
    Compensated,
    /// Fourier-side evaluation; requires `γ = 0`.
    Fourier,
}

/// Treatment of `f(v)∫B(g'_* − g_*)` in the compensated scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compensation {
    /// Same angular quadrature as the first term.
    Quadrature,
    /// Closed-form cancellation convolution `2πA_{γ,s} (|·|^γ ∗ g)`.
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadConfig {
    pub theta_min: f64,
    pub n_theta: usize,
    pub n_phi: usize,
    pub interp: Stencil,
    pub tol: f64,
    pub scheme: Scheme,
    pub compensation: Compensation,
    /// Events with `|f(v) g(v*)| < event_threshold · max|f| · max|g|` are
    /// skipped (both gain and loss, so conservation is unaffected).
    pub event_threshold: f64,
    /// Oversampling `c` of the Fourier-side scheme: the velocity cube is
    /// zero-padded by the factor `⌈c/h⌉`, so the interpolated frequency grid
    /// refines together with the velocity grid.
    pub fourier_oversampling: f64,
    /// Fourier-side scheme only: restore the discrete collision invariants
    /// (mass; plus momentum and energy when `g = f`) by an `f`-weighted
    /// least-squares correction.
    pub project_invariants: bool,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            theta_min: 2f64.powi(-7),
            n_theta: 8,
            n_phi: 8,
            interp: Stencil::QuinticSpline,
            tol: 1e-6,
            scheme: Scheme::Auto,
            compensation: Compensation::Quadrature,
            event_threshold: 1e-13,
            fourier_oversampling: 1.0,
            project_invariants: true,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_min > 0.0 && self.theta_min <= FRAC_PI_8) {
            return invalid(format!(
                "theta_min must lie in (0, pi/8], got {}",
                self.theta_min
            ));
        }
        if self.n_theta < 8 || self.n_phi < 8 {
            return invalid(format!(
                "angular orders must be >= 8, got n_theta={} n_phi={}",
                self.n_theta, self.n_phi
            ));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return invalid(format!("tol must lie in (0,1), got {}", self.tol));
        }
        if !(self.event_threshold >= 0.0 && self.event_threshold < 1e-3) {
            return invalid(format!(
                "event_threshold must lie in [0, 1e-3), got {}",
                self.event_threshold
            ));
        }
        if !(self.fourier_oversampling > 0.0 && self.fourier_oversampling <= 8.0) {
            return invalid(format!(
                "fourier_oversampling must lie in (0, 8], got {}",
                self.fourier_oversampling
            ));
        }
        Ok(())
    }
}

/// Angular nodes: `(cos θ, sin θ, weight)` with the weight
/// `b0 θ^{−1−2s} w_θ · 2π/n_φ`, and azimuth nodes `(cos φ, sin φ)`.
#[derive(Debug, Clone)]
struct AngularRule {
    polar: Vec<(f64, f64, f64)>,
    azimuth: Vec<(f64, f64)>,
}

impl AngularRule {
    fn new(params: &KernelParams, cfg: &QuadConfig) -> Self {
        let (thetas, wt) = log_gauss(cfg.theta_min, FRAC_PI_2, cfg.n_theta);
        let (phis, wp) = periodic_nodes(cfg.n_phi);
        let polar = thetas
            .iter()
            .zip(&wt)
            .map(|(&t, &w)| (t.cos(), t.sin(), params.angular_density(t) * w * wp))
            .collect();
        let azimuth = phis.iter().map(|p| (p.cos(), p.sin())).collect();
        AngularRule { polar, azimuth }
    }

    /// Calls `visit(d', d'_*, w)` for every node, with `d' = v' − v` and
    /// `d'_* = v'_* − v` for the relative vector `z = v − v*`.
    #[inline]
    fn for_each_event(&self, z: [f64; 3], mut visit: impl FnMut([f64; 3], [f64; 3], f64)) {
        let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
        let k = [z[0] / r, z[1] / r, z[2] / r];
        let (e1, e2) = orthonormal_complement(k);
        for &(ct, st, w) in &self.polar {
            for &(cp, sp) in &self.azimuth {
                let mut dp = [0.0; 3];
                let mut ds = [0.0; 3];
                for d in 0..3 {
                    let sigma = k[d] * ct + st * (cp * e1[d] + sp * e2[d]);
                    dp[d] = 0.5 * (-z[d] + r * sigma);
                    ds[d] = 0.5 * (-z[d] - r * sigma);
                }
                visit(dp, ds, w);
            }
        }
    }

    fn total_weight(&self) -> f64 {
        self.polar.iter().map(|p| p.2).sum::<f64>() * self.azimuth.len() as f64
    }
}

/// One event of a pattern kept for the boundary (slow) path.
#[derive(Debug, Clone, Copy)]
struct Event {
    dp: [f64; 3],
    ds: [f64; 3],
    w: f64,
}

/// Merged gain deposits of all angular events for one relative vector `z`.
#[derive(Debug, Clone)]
struct Pattern {
    /// `(flat index offset relative to v, weight)`.
    gain: Vec<(isize, f64)>,
    w_total: f64,
    /// Bounding box of every stencil node (of `v'` and `v'_*`) relative to `v`.
    lo: [i64; 3],
    hi: [i64; 3],
    events: Vec<Event>,
}

/// Evaluator bound to a velocity grid, kernel and quadrature configuration.
#[derive(Debug, Clone)]
pub struct CollisionOperator {
    pub grid: PhaseGrid,
    pub params: KernelParams,
    pub cfg: QuadConfig,
    rule: AngularRule,
    /// `2π A_{γ,s}`, the constant of the cancellation convolution.
    cancellation: f64,
    /// Present for the spline stencils.
    spline: Option<SplineBasis>,
    /// Coefficient padding on each side (0 for local stencils).
    ext: i64,
    /// Side of the deposit/coefficient cube, `nv + 2·ext`.
    nd: i64,
    /// Scheme after resolving [`Scheme::Auto`].
    scheme: Scheme,
    /// Present for the Fourier-side scheme.
    fourier: Option<FourierPart>,
}

/// Transforms and interpolation data of the Fourier-side scheme.
///
/// `f̂` is sampled on a frequency grid `pad` times finer than the one dual
/// to the velocity grid (zero padding of the velocity cube), and `Q̂` is
/// evaluated on the coarse frequency nodes only.
#[derive(Debug, Clone)]
struct FourierPart {
    coarse: VelocitySpectrum,
    fine: VelocitySpectrum,
    spline: Option<SplineBasis>,
    pad: usize,
}

/// Largest side of the padded frequency grid of the Fourier-side scheme.
pub const MAX_FOURIER_SIDE: usize = 256;

/// Zero-padding factor `⌈c/h⌉` (at least 1) of the Fourier-side scheme.
pub fn fourier_padding(grid: &PhaseGrid, oversampling: f64) -> usize {
    ((oversampling / grid.dv()) - 1e-9).ceil().max(1.0) as usize
}

/// Number of fixed work chunks; independent of the thread count so that
/// floating-point reductions are reproducible.
const CHUNKS: usize = 32;

impl CollisionOperator {
    pub fn new(grid: &PhaseGrid, params: &KernelParams, cfg: &QuadConfig) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        cfg.validate()?;
        let a = a_gamma_s(params, 1e-12)?.value;
        let spline = match cfg.interp.spline_degree() {
            Some(p) => Some(SplineBasis::new(p, grid.nv)?),
            None => None,
        };
        let ext = spline.as_ref().map_or(0, |s| s.ext as i64);
        let scheme = match cfg.scheme {
            Scheme::Auto if params.gamma == 0.0 => Scheme::Fourier,
            Scheme::Auto => Scheme::Conservative,
            Scheme::Fourier if params.gamma != 0.0 => {
                return invalid(format!(
                    "the Fourier-side scheme needs gamma = 0, got {}",
                    params.gamma
                ))
            }
            s => s,
        };
        let fourier = if scheme == Scheme::Fourier {
            let pad = fourier_padding(grid, cfg.fourier_oversampling);
            if pad * grid.nv > MAX_FOURIER_SIDE {
                return invalid(format!(
                    "padded frequency grid of side {} exceeds {MAX_FOURIER_SIDE}",
                    pad * grid.nv
                ));
            }
            let fine_grid = PhaseGrid::homogeneous(pad * grid.nv, pad as f64 * grid.r)?;
            let spline = match cfg.interp.spline_degree() {
                Some(p) => Some(SplineBasis::new(p, fine_grid.nv)?),
                None => None,
            };
            Some(FourierPart {
                coarse: VelocitySpectrum::new(grid),
                fine: VelocitySpectrum::new(&fine_grid),
                spline,
                pad,
            })
        } else {
            None
        };
        Ok(CollisionOperator {
            scheme,
            fourier,
            grid: grid.velocity_only(),
            params: *params,
            cfg: *cfg,
            rule: AngularRule::new(params, cfg),
            cancellation: 2.0 * PI * a,
            spline,
            ext,
            nd: grid.nv as i64 + 2 * ext,
        })
    }

    /// The scheme in use (never [`Scheme::Auto`]).
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// `2π A_{γ,s}`.
    pub fn cancellation_constant(&self) -> f64 {
        self.cancellation
    }

    /// Total angular weight `∫_{θ≥θ_min} b dσ` of the quadrature.
    pub fn angular_mass(&self) -> f64 {
        self.rule.total_weight()
    }

    fn nv(&self) -> usize {
        self.grid.nv
    }

    /// `h³ (h|z|)^γ` for a grid vector `z`.
    fn pair_factor(&self, z: [i64; 3]) -> f64 {
        let h = self.grid.dv();
        let r = ((z[0] * z[0] + z[1] * z[1] + z[2] * z[2]) as f64).sqrt() * h;
        h * h * h * self.params.kinetic(r)
    }

    /// All nonzero relative grid vectors, in a fixed order.
    fn relative_vectors(&self) -> Vec<[i64; 3]> {
        let m = self.nv() as i64 - 1;
        let mut out = Vec::with_capacity((2 * m as usize + 1).pow(3));
        for a in -m..=m {
            for b in -m..=m {
                for c in -m..=m {
                    if a != 0 || b != 0 || c != 0 {
                        out.push([a, b, c]);
                    }
                }
            }
        }
        out
    }

    fn build_pattern(&self, z: [i64; 3]) -> Pattern {
        let st = self.cfg.interp;
        let width = st.width() as i64;
        let first = st.first_offset();
        let nd = self.nd;
        let zf = [z[0] as f64, z[1] as f64, z[2] as f64];
        let n_events = self.rule.polar.len() * self.rule.azimuth.len();
        let mut raw: Vec<(i64, f64)> = Vec::with_capacity(n_events * st.width().pow(3));
        let mut events = Vec::with_capacity(n_events);
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        let mut w_total = 0.0;
        let key_base = 4 * nd;
        let key_mul = 8 * nd + 1;
        self.rule.for_each_event(zf, |dp, ds, w| {
            events.push(Event { dp, ds, w });
            w_total += w;
            let mut base = [0i64; 3];
            let mut wts = [[0.0; 6]; 3];
            for d in 0..3 {
                let (b, t) = split_coordinate(dp[d]);
                base[d] = b + first;
                st.weights(t, &mut wts[d]);
                let (bs, _) = split_coordinate(ds[d]);
                lo[d] = lo[d].min(base[d].min(bs + first));
                hi[d] = hi[d].max(base[d].max(bs + first) + width - 1);
            }
            for a in 0..width {
                for b in 0..width {
                    let wab = w * wts[0][a as usize] * wts[1][b as usize];
                    for c in 0..width {
                        let o = [base[0] + a, base[1] + b, base[2] + c];
                        let key = ((o[0] + key_base) * key_mul + (o[1] + key_base)) * key_mul
                            + (o[2] + key_base);
                        raw.push((key, wab * wts[2][c as usize]));
                    }
                }
            }
        });
        raw.sort_unstable_by_key(|e| e.0);
        let mut gain: Vec<(isize, f64)> = Vec::with_capacity(raw.len() / 4);
        let mut last_key = i64::MIN;
        for (key, w) in raw {
            if key == last_key {
                gain.last_mut().expect("nonempty").1 += w;
            } else {
                let oz = key % key_mul - key_base;
                let oy = (key / key_mul) % key_mul - key_base;
                let ox = key / (key_mul * key_mul) - key_base;
                let delta = (ox * nd + oy) * nd + oz;
                gain.push((delta as isize, w));
                last_key = key;
            }
        }
        Pattern {
            gain,
            w_total,
            lo,
            hi,
            events,
        }
    }

    /// Whether the deposit stencil of the point `v + d` (grid units) is
    /// admissible, i.e. lies in the deposit cube.
    #[inline]
    fn stencil_inside(&self, v: [i64; 3], d: [f64; 3]) -> bool {
        let first = self.cfg.interp.first_offset() + self.ext;
        let w = self.cfg.interp.width() as i64;
        (0..3).all(|k| {
            let b = v[k] + d[k].floor() as i64 + first;
            b >= 0 && b + w - 1 < self.nd
        })
    }

    #[inline]
    fn box_inside(&self, v: [i64; 3], lo: [i64; 3], hi: [i64; 3]) -> bool {
        (0..3).all(|k| v[k] + lo[k] + self.ext >= 0 && v[k] + hi[k] + self.ext < self.nd)
    }

    /// Deposits `c` at `v + d` into a deposit-space cube.
    #[inline]
    fn deposit(&self, out: &mut [f64], v: [i64; 3], d: [f64; 3], c: f64) {
        let st = self.cfg.interp;
        let first = st.first_offset() + self.ext;
        let w = st.width();
        let nd = self.nd;
        let mut base = [0i64; 3];
        let mut wts = [[0.0; 6]; 3];
        for k in 0..3 {
            let (b, t) = split_coordinate(d[k]);
            base[k] = v[k] + b + first;
            st.weights(t, &mut wts[k]);
        }
        for a in 0..w {
            for b in 0..w {
                let row = (((base[0] + a as i64) * nd + base[1] + b as i64) * nd + base[2]) as usize;
                let wab = c * wts[0][a] * wts[1][b];
                for cc in 0..w {
                    out[row + cc] += wab * wts[2][cc];
                }
            }
        }
    }

    #[inline]
    fn unflatten(&self, iv: usize) -> [i64; 3] {
        let n = self.nv();
        [(iv / (n * n)) as i64, ((iv / n) % n) as i64, (iv % n) as i64]
    }

    #[inline]
    fn flatten(&self, v: [i64; 3]) -> usize {
        let n = self.nv() as i64;
        ((v[0] * n + v[1]) * n + v[2]) as usize
    }

    /// Index of node `v` in deposit space.
    #[inline]
    fn flatten_d(&self, v: [i64; 3]) -> usize {
        let (e, n) = (self.ext, self.nd);
        (((v[0] + e) * n + v[1] + e) * n + v[2] + e) as usize
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.grid.nv3() {
            return invalid(format!(
                "velocity slice has {} values, grid needs {}",
                x.len(),
                self.grid.nv3()
            ));
        }
        Ok(())
    }

    /// Maps a deposit-space cube to node values.
    fn finish_deposit(&self, d: Vec<f64>) -> Vec<f64> {
        match &self.spline {
            Some(sb) => sb.transpose_3d(&d),
            None => d,
        }
    }

    /// Gain and loss parts of the conservative scheme, `Q = gain − loss`.
    pub fn gain_loss(&self, g: &[f64], f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(g)?;
        self.check_len(f)?;
        let n3 = self.grid.nv3();
        let nd3 = (self.nd * self.nd * self.nd) as usize;
        let fmax = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if fmax == 0.0 || gmax == 0.0 {
            return Ok((vec![0.0; n3], vec![0.0; n3]));
        }
        let thr = self.cfg.event_threshold * fmax * gmax;
        let zs = self.relative_vectors();
        let chunk = zs.len().div_ceil(CHUNKS);
        let parts: Vec<(Vec<f64>, Vec<f64>)> = zs
            .par_chunks(chunk)
            .map(|zc| {
                let mut gain = vec![0.0; nd3];
                let mut loss = vec![0.0; n3];
                for &z in zc {
                    self.scatter_z(g, f, z, thr, &mut gain, &mut loss);
                }
                (gain, loss)
            })
            .collect();
        let mut gain = vec![0.0; nd3];
        let mut loss = vec![0.0; n3];
        for (gp, lp) in parts {
            for (a, b) in gain.iter_mut().zip(&gp) {
                *a += b;
            }
            for (a, b) in loss.iter_mut().zip(&lp) {
                *a += b;
            }
        }
        Ok((self.finish_deposit(gain), loss))
    }

    fn scatter_z(&self, g: &[f64], f: &[f64], z: [i64; 3], thr: f64, gain: &mut [f64], loss: &mut [f64]) {
        let nv = self.nv() as i64;
        let lo_v = [z[0].max(0), z[1].max(0), z[2].max(0)];
        let hi_v = [nv.min(nv + z[0]), nv.min(nv + z[1]), nv.min(nv + z[2])];
        let dz = self.flatten_delta(z);
        let mut pattern: Option<Pattern> = None;
        let kz = self.pair_factor(z);
        for a in lo_v[0]..hi_v[0] {
            for b in lo_v[1]..hi_v[1] {
                for c in lo_v[2]..hi_v[2] {
                    let iv = self.flatten([a, b, c]);
                    let fv = f[iv];
                    if fv == 0.0 {
                        continue;
                    }
                    let p = fv * g[(iv as isize - dz) as usize];
                    if p == 0.0 || p.abs() < thr {
                        continue;
                    }
                    let pat = pattern.get_or_insert_with(|| self.build_pattern(z));
                    let cval = p * kz;
                    let v = [a, b, c];
                    if self.box_inside(v, pat.lo, pat.hi) {
                        let id = self.flatten_d(v) as isize;
                        for &(d, w) in &pat.gain {
                            gain[(id + d) as usize] += cval * w;
                        }
                        loss[iv] += cval * pat.w_total;
                    } else {
                        for e in &pat.events {
                            if self.stencil_inside(v, e.dp) && self.stencil_inside(v, e.ds) {
                                self.deposit(gain, v, e.dp, cval * e.w);
                                loss[iv] += cval * e.w;
                            }
                        }
                    }
                }
            }
        }
    }

    fn flatten_delta(&self, z: [i64; 3]) -> isize {
        let n = self.nv() as i64;
        ((z[0] * n + z[1]) * n + z[2]) as isize
    }

    /// Loss coefficient `ν(v) = Σ_{v*} g(v*) h³|v−v*|^γ Σ_σ W` over the events
    /// the conservative scheme keeps at `v` (independent of `f`).
    pub fn loss_coefficient(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_len(g)?;
        let n3 = self.grid.nv3();
        let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gmax == 0.0 {
            return Ok(vec![0.0; n3]);
        }
        let thr = self.cfg.event_threshold * gmax;
        let nv = self.nv() as i64;
        let zs = self.relative_vectors();
        let chunk = zs.len().div_ceil(CHUNKS);
        let parts: Vec<Vec<f64>> = zs
            .par_chunks(chunk)
            .map(|zc| {
                let mut nu = vec![0.0; n3];
                for &z in zc {
                    let lo_v = [z[0].max(0), z[1].max(0), z[2].max(0)];
                    let hi_v = [nv.min(nv + z[0]), nv.min(nv + z[1]), nv.min(nv + z[2])];
                    let dz = self.flatten_delta(z);
                    let kz = self.pair_factor(z);
                    let mut pattern: Option<Pattern> = None;
                    for a in lo_v[0]..hi_v[0] {
                        for b in lo_v[1]..hi_v[1] {
                            for c in lo_v[2]..hi_v[2] {
                                let iv = self.flatten([a, b, c]);
                                let gs = g[(iv as isize - dz) as usize];
                                if gs == 0.0 || gs.abs() < thr {
                                    continue;
                                }
                                let pat = pattern.get_or_insert_with(|| self.build_pattern(z));
                                let v = [a, b, c];
                                let w = if self.box_inside(v, pat.lo, pat.hi) {
                                    pat.w_total
                                } else {
                                    pat.events
                                        .iter()
                                        .filter(|e| self.stencil_inside(v, e.dp) && self.stencil_inside(v, e.ds))
                                        .map(|e| e.w)
                                        .sum()
                                };
                                nu[iv] += gs * kz * w;
                            }
                        }
                    }
                }
                nu
            })
            .collect();
        let mut nu = vec![0.0; n3];
        for p in parts {
            for (a, b) in nu.iter_mut().zip(&p) {
                *a += b;
            }
        }
        Ok(nu)
    }

    /// `Q(g, f)` on one velocity slice with the configured scheme.
    ///
    /// With the Fourier-side scheme and `project_invariants`, mass is
    /// restored always and momentum and energy too when `g` and `f` are the
    /// same slice (see [`apply_projected`](Self::apply_projected)).
    pub fn apply(&self, g: &[f64], f: &[f64]) -> Result<Vec<f64>> {
        let n_inv = if g == f { 5 } else { 1 };
        self.apply_projected(g, f, n_inv)
    }

    /// `Q(g, f)` restoring the first `n_inv ∈ {1, 5}` collision invariants
    /// (`1, v, |v|²`) when the Fourier-side scheme projects.
    ///
    /// Iterative methods that pass nearly equal `g` and `f` should fix
    /// `n_inv` so that the result depends continuously on its inputs.
    pub fn apply_projected(&self, g: &[f64], f: &[f64], n_inv: usize) -> Result<Vec<f64>> {
        if n_inv != 1 && n_inv != 5 {
            return invalid(format!("invariant count must be 1 or 5, got {n_inv}"));
        }
        match self.scheme {
            Scheme::Fourier => {
                let (gain, nu) = self.fourier_gain(g, f)?;
                let mut q: Vec<f64> = gain.iter().zip(f).map(|(a, b)| a - nu * b).collect();
                if self.cfg.project_invariants {
                    project_onto_invariants(&self.grid, &mut q, f, n_inv);
                }
                Ok(q)
            }
            Scheme::Conservative | Scheme::Auto => {
                let (gain, loss) = self.gain_loss(g, f)?;
                Ok(gain.iter().zip(&loss).map(|(a, b)| a - b).collect())
            }
            Scheme::Compensated => {
                self.check_len(g)?;
                self.check_len(f)?;
                let conv = match self.cfg.compensation {
                    Compensation::ClosedForm => Some(cancellation_slice(&self.grid, &self.params, self.cancellation, g)),
                    Compensation::Quadrature => None,
                };
                let (gc, fc) = (self.sampler(g), self.sampler(f));
                let n3 = self.grid.nv3();
                let out: Vec<f64> = (0..n3)
                    .into_par_iter()
                    .map(|iv| self.compensated_at(g, f, &gc, &fc, iv, conv.as_ref().map(|c| c[iv])))
                    .collect();
                Ok(out)
            }
        }
    }

    /// `Q(g, f)` at the single node `iv` with the configured scheme.
    ///
    /// For the conservative scheme with a spline stencil the deposit is
    /// nonlocal, so the full slice is evaluated.
    pub fn apply_at(&self, g: &[f64], f: &[f64], iv: usize) -> Result<f64> {
        self.check_len(g)?;
        self.check_len(f)?;
        if iv >= self.grid.nv3() {
            return invalid(format!("node index {iv} out of range"));
        }
        Ok(match self.scheme {
            Scheme::Fourier => self.apply(g, f)?[iv],
            Scheme::Conservative | Scheme::Auto => {
                if self.spline.is_some() {
                    self.apply(g, f)?[iv]
                } else {
                    self.conservative_at(g, f, iv)
                }
            }
            Scheme::Compensated => {
                let conv = match self.cfg.compensation {
                    Compensation::ClosedForm => Some(self.convolution_at(g, iv)),
                    Compensation::Quadrature => None,
                };
                let (gc, fc) = (self.sampler(g), self.sampler(f));
                self.compensated_at(g, f, &gc, &fc, iv, conv)
            }
        })
    }

    /// Fourier-side gain and the (constant) loss rate for `γ = 0`:
    /// `Q̂(ξ) = Σ_σ W [ĝ(ξ⁻) f̂(ξ⁺) − ĝ(0) f̂(ξ)]`, `ξ^± = (ξ ± |ξ|σ)/2`.
    ///
    /// Returns the gain on the velocity nodes and `ν = ĝ(0) Σ_σ W`, so that
    /// `Q = gain − ν f`.
    pub fn fourier_gain(&self, g: &[f64], f: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_len(g)?;
        self.check_len(f)?;
        let fp = match &self.fourier {
            Some(fp) => fp,
            None => return invalid("operator was not built for the Fourier-side scheme"),
        };
        let n = self.nv();
        let nf = fp.pad * n;
        let gh = fp.fine.forward(&self.zero_pad(g, fp.pad));
        let fh = fp.fine.forward(&self.zero_pad(f, fp.pad));
        let mass_g = g.iter().sum::<f64>() * self.grid.dv3();
        let w_total = self.rule.total_weight();
        let nu = mass_g * w_total;
        let (gc, fc) = (fp.complex_sampler(&gh), fp.complex_sampler(&fh));
        let centre = ((nf / 2) * nf + nf / 2) * nf + nf / 2;
        let zero = (gh[centre], fh[centre]);
        let half = (n / 2) as f64;
        let padf = fp.pad as f64;
        let fine_half = (nf / 2) as f64;
        let n3 = self.grid.nv3();
        let gain_hat: Vec<Complex64> = (0..n3)
            .into_par_iter()
            .map(|ic| {
                let c = self.unflatten(ic);
                // Frequency in fine-grid units.
                let xi = [
                    (c[0] as f64 - half) * padf,
                    (c[1] as f64 - half) * padf,
                    (c[2] as f64 - half) * padf,
                ];
                if xi == [0.0; 3] {
                    return zero.0 * zero.1 * w_total;
                }
                let cf = [xi[0] + fine_half, xi[1] + fine_half, xi[2] + fine_half];
                let mut acc = Complex64::new(0.0, 0.0);
                self.rule.for_each_event(xi, |dp, ds, w| {
                    let xp = [cf[0] + dp[0], cf[1] + dp[1], cf[2] + dp[2]];
                    let xm = [cf[0] + ds[0], cf[1] + ds[1], cf[2] + ds[2]];
                    acc += fp.sample(self.cfg.interp, &gc, xm) * fp.sample(self.cfg.interp, &fc, xp) * w;
                });
                acc
            })
            .collect();
        let (gain, _) = fp.coarse.inverse(&gain_hat);
        Ok((gain, nu))
    }

    /// Embeds a slice into the centre of a cube `pad` times larger.
    fn zero_pad(&self, x: &[f64], pad: usize) -> Vec<f64> {
        let n = self.nv();
        if pad == 1 {
            return x.to_vec();
        }
        let nf = pad * n;
        let off = (nf - n) / 2;
        let mut out = vec![0.0; nf * nf * nf];
        for i in 0..n {
            for j in 0..n {
                let src = (i * n + j) * n;
                let dst = ((i + off) * nf + j + off) * nf + off;
                out[dst..dst + n].copy_from_slice(&x[src..src + n]);
            }
        }
        out
    }

    fn convolution_at(&self, g: &[f64], iv: usize) -> f64 {
        let v = self.unflatten(iv);
        let mut acc = 0.0;
        for (js, &gs) in g.iter().enumerate() {
            if gs == 0.0 {
                continue;
            }
            let w = self.unflatten(js);
            acc += gs * self.pair_factor([v[0] - w[0], v[1] - w[1], v[2] - w[2]]);
        }
        self.cancellation * acc
    }

    /// Values used for off-grid sampling: the field itself for local
    /// stencils, its B-spline coefficients for spline stencils.
    fn sampler(&self, x: &[f64]) -> Vec<f64> {
        match &self.spline {
            Some(sb) => sb.prefilter_3d(x),
            None => x.to_vec(),
        }
    }

    /// Off-grid value at grid coordinate `x`, zero outside the cube.
    #[inline]
    fn sample(&self, coeffs: &[f64], x: [f64; 3]) -> f64 {
        let top = self.nv() as f64 - 1.0;
        if self.spline.is_some() {
            if x.iter().any(|&c| c < 0.0 || c > top) {
                return 0.0;
            }
            let e = self.ext as f64;
            sample_3d(coeffs, self.nd as usize, [x[0] + e, x[1] + e, x[2] + e], self.cfg.interp)
        } else {
            sample_3d(coeffs, self.nv(), x, self.cfg.interp)
        }
    }

    /// Strong-form compensated quadrature at one node.
    fn compensated_at(&self, g: &[f64], f: &[f64], gc: &[f64], fc: &[f64], iv: usize, conv: Option<f64>) -> f64 {
        let v = self.unflatten(iv);
        let vf = [v[0] as f64, v[1] as f64, v[2] as f64];
        let fv = f[iv];
        let mut acc = 0.0;
        for (js, &gs) in g.iter().enumerate() {
            if js == iv {
                continue;
            }
            let w = self.unflatten(js);
            let z = [v[0] - w[0], v[1] - w[1], v[2] - w[2]];
            let kz = self.pair_factor(z);
            let zf = [z[0] as f64, z[1] as f64, z[2] as f64];
            let mut inner = 0.0;
            self.rule.for_each_event(zf, |dp, ds, wt| {
                let xp = [vf[0] + dp[0], vf[1] + dp[1], vf[2] + dp[2]];
                let xs = [vf[0] + ds[0], vf[1] + ds[1], vf[2] + ds[2]];
                let gps = self.sample(gc, xs);
                let fp = self.sample(fc, xp);
                let mut term = gps * (fp - fv);
                if conv.is_none() {
                    term += fv * (gps - gs);
                }
                inner += wt * term;
            });
            acc += kz * inner;
        }
        match conv {
            Some(c) => acc + fv * c,
            None => acc,
        }
    }

    /// Conservative scheme at one node (local stencils only): collects every
    /// event whose deposit stencil covers `iv`, plus the loss at `iv`.
    fn conservative_at(&self, g: &[f64], f: &[f64], iv: usize) -> f64 {
        let fmax = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if fmax == 0.0 || gmax == 0.0 {
            return 0.0;
        }
        let thr = self.cfg.event_threshold * fmax * gmax;
        let st = self.cfg.interp;
        let width = st.width() as i64;
        let first = st.first_offset();
        let nv = self.nv() as i64;
        let j = self.unflatten(iv);
        let in_grid = |x: [i64; 3]| (0..3).all(|k| x[k] >= 0 && x[k] < nv);
        let mut gain = 0.0;
        let mut loss = 0.0;
        for z in self.relative_vectors() {
            let kz = self.pair_factor(z);
            let zf = [z[0] as f64, z[1] as f64, z[2] as f64];
            let js = [j[0] - z[0], j[1] - z[1], j[2] - z[2]];
            let loss_pair = if in_grid(js) {
                let p = f[iv] * g[self.flatten(js)];
                if p != 0.0 && p.abs() >= thr {
                    Some(p * kz)
                } else {
                    None
                }
            } else {
                None
            };
            self.rule.for_each_event(zf, |dp, ds, w| {
                if let Some(c) = loss_pair {
                    if self.stencil_inside(j, dp) && self.stencil_inside(j, ds) {
                        loss += c * w;
                    }
                }
                let mut base = [0i64; 3];
                let mut wts = [[0.0; 6]; 3];
                for k in 0..3 {
                    let (b, t) = split_coordinate(dp[k]);
                    base[k] = b + first;
                    st.weights(t, &mut wts[k]);
                }
                for a in 0..width {
                    for b in 0..width {
                        for c in 0..width {
                            let v = [j[0] - base[0] - a, j[1] - base[1] - b, j[2] - base[2] - c];
                            let vs = [v[0] - z[0], v[1] - z[1], v[2] - z[2]];
                            if !in_grid(v) || !in_grid(vs) {
                                continue;
                            }
                            let p = f[self.flatten(v)] * g[self.flatten(vs)];
                            if p == 0.0 || p.abs() < thr {
                                continue;
                            }
                            if !(self.stencil_inside(v, dp) && self.stencil_inside(v, ds)) {
                                continue;
                            }
                            gain += p
                                * kz
                                * w
                                * wts[0][a as usize]
                                * wts[1][b as usize]
                                * wts[2][c as usize];
                        }
                    }
                }
            });
        }
        gain - loss
    }
}

impl FourierPart {
    fn complex_sampler(&self, x: &[Complex64]) -> Vec<Complex64> {
        match &self.spline {
            Some(sb) => {
                let re: Vec<f64> = x.iter().map(|z| z.re).collect();
                let im: Vec<f64> = x.iter().map(|z| z.im).collect();
                let (cr, ci) = (sb.prefilter_3d(&re), sb.prefilter_3d(&im));
                cr.into_iter().zip(ci).map(|(a, b)| Complex64::new(a, b)).collect()
            }
            None => x.to_vec(),
        }
    }

    /// Interpolated transform at fine-grid coordinate `x`, zero outside the cube.
    #[inline]
    fn sample(&self, st: Stencil, coeffs: &[Complex64], x: [f64; 3]) -> Complex64 {
        let nf = self.fine.grid.nv;
        let top = nf as f64 - 1.0;
        let (n, x) = match &self.spline {
            Some(sb) => {
                if x.iter().any(|&c| c < 0.0 || c > top) {
                    return Complex64::new(0.0, 0.0);
                }
                let e = sb.ext as f64;
                ((nf + 2 * sb.ext) as i64, [x[0] + e, x[1] + e, x[2] + e])
            }
            None => (nf as i64, x),
        };
        let w = st.width();
        let first = st.first_offset();
        let mut wts = [[0.0; 6]; 3];
        let mut base = [0i64; 3];
        for d in 0..3 {
            let (b, t) = split_coordinate(x[d]);
            base[d] = b + first;
            st.weights(t, &mut wts[d]);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..w {
            let i = base[0] + a as i64;
            if i < 0 || i >= n {
                continue;
            }
            for b in 0..w {
                let j = base[1] + b as i64;
                if j < 0 || j >= n {
                    continue;
                }
                let wab = wts[0][a] * wts[1][b];
                let row = ((i * n + j) * n) as usize;
                for c in 0..w {
                    let k = base[2] + c as i64;
                    if k < 0 || k >= n {
                        continue;
                    }
                    acc += coeffs[row + k as usize] * (wab * wts[2][c]);
                }
            }
        }
        acc
    }
}

/// Removes from `q` the `|f|`-weighted least-squares correction
/// `δ = |f| Σ_a λ_a φ_a` that makes `h³Σ q φ_a = 0` for the first `n_inv`
/// of `φ = (1, v₁, v₂, v₃, |v|²)`.
pub fn project_onto_invariants(grid: &PhaseGrid, q: &mut [f64], f: &[f64], n_inv: usize) {
    let n_inv = n_inv.clamp(1, 5);
    let phi = |v: [f64; 3]| [1.0, v[0], v[1], v[2], v[0] * v[0] + v[1] * v[1] + v[2] * v[2]];
    let mut m = vec![0.0; n_inv * n_inv];
    let mut r = vec![0.0; n_inv];
    for (iv, (&qv, &fv)) in q.iter().zip(f).enumerate() {
        let p = phi(grid.velocity(iv));
        let w = fv.abs();
        for a in 0..n_inv {
            r[a] += qv * p[a];
            for b in 0..n_inv {
                m[a * n_inv + b] += w * p[a] * p[b];
            }
        }
    }
    let lambda = match crate::spline::solve_dense(m, n_inv, r, 1) {
        Ok(l) => l,
        Err(_) => return,
    };
    for (iv, (qv, &fv)) in q.iter_mut().zip(f).enumerate() {
        let p = phi(grid.velocity(iv));
        let c: f64 = (0..n_inv).map(|a| lambda[a] * p[a]).sum();
        *qv -= fv.abs() * c;
    }
}

/// `2πA · h³ Σ_{v*} g(v*) |v − v*|^γ` on one slice.
fn cancellation_slice(grid: &PhaseGrid, params: &KernelParams, constant: f64, g: &[f64]) -> Vec<f64> {
    let nv = grid.nv as i64;
    let h = grid.dv();
    let h3 = grid.dv3();
    let n3 = grid.nv3();
    if params.gamma == 0.0 {
        let mass: f64 = g.iter().sum::<f64>() * h3;
        return vec![constant * mass; n3];
    }
    // Kernel table over relative offsets.
    let m = 2 * nv - 1;
    let mut table = vec![0.0; (m * m * m) as usize];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let r = (((a - nv + 1).pow(2) + (b - nv + 1).pow(2) + (c - nv + 1).pow(2)) as f64).sqrt() * h;
                table[((a * m + b) * m + c) as usize] = params.kinetic(r);
            }
        }
    }
    let nz: Vec<(usize, f64)> = g.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, x)| (i, *x)).collect();
    (0..n3)
        .into_par_iter()
        .map(|iv| {
            let v = [(iv / (grid.nv * grid.nv)) as i64, ((iv / grid.nv) % grid.nv) as i64, (iv % grid.nv) as i64];
            let mut acc = 0.0;
            for &(js, gs) in &nz {
                let w = [(js / (grid.nv * grid.nv)) as i64, ((js / grid.nv) % grid.nv) as i64, (js % grid.nv) as i64];
                let idx = (((v[0] - w[0] + nv - 1) * m + (v[1] - w[1] + nv - 1)) * m + (v[2] - w[2] + nv - 1)) as usize;
                acc += gs * table[idx];
            }
            constant * h3 * acc
        })
        .collect()
}

/// `Q(g, f)` at every phase-space node.
pub fn q_apply(
    g: &DistributionField,
    f: &DistributionField,
    params: &KernelParams,
    cfg: &QuadConfig,
) -> Result<DistributionField> {
    g.require_same_grid(f)?;
    let op = CollisionOperator::new(&g.grid, params, cfg)?;
    let mut out = DistributionField::zeros(g.grid);
    for ix in 0..g.grid.n_space() {
        let q = op.apply(g.slice(ix), f.slice(ix))?;
        out.slice_mut(ix).copy_from_slice(&q);
    }
    Ok(out)
}

/// `v ↦ 2πA_{γ,s} ∫ g(v*)|v − v*|^γ dv*` per spatial node (direct double sum).
pub fn cancellation_convolution(g: &DistributionField, params: &KernelParams) -> Result<DistributionField> {
    g.grid.validate()?;
    params.validate()?;
    let constant = 2.0 * PI * a_gamma_s(params, 1e-12)?.value;
    let mut out = DistributionField::zeros(g.grid);
    for ix in 0..g.grid.n_space() {
        let c = cancellation_slice(&g.grid, params, constant, g.slice(ix));
        out.slice_mut(ix).copy_from_slice(&c);
    }
    Ok(out)
}

/// `(⟨v⟩^l Q(g, f), h)` over phase space.
pub fn q_inner(
    g: &DistributionField,
    f: &DistributionField,
    h: &DistributionField,
    l: f64,
    params: &KernelParams,
    cfg: &QuadConfig,
) -> Result<f64> {
    g.require_same_grid(h)?;
    if !(l >= 0.0 && l.is_finite()) {
        return invalid(format!("weight exponent must be >= 0, got {l}"));
    }
    let q = q_apply(g, f, params, cfg)?;
    Ok(weighted_pairing(&q, h, l))
}

/// `∫∫ ⟨v⟩^l a b dx dv` for fields on a common grid.
pub fn weighted_pairing(a: &DistributionField, b: &DistributionField, l: f64) -> f64 {
    let w = bracket_weights(&a.grid, l);
    let n3 = a.grid.nv3();
    let s: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .enumerate()
        .map(|(i, (x, y))| w[i % n3] * x * y)
        .sum();
    s * a.grid.dv3() * a.grid.dx_vol()
}

/// Velocity moments `(∫Q, ∫Q v, ∫Q |v|²)` of a slice.
pub fn slice_moments(grid: &PhaseGrid, q: &[f64]) -> (f64, [f64; 3], f64) {
    let h3 = grid.dv3();
    let mut m = 0.0;
    let mut p = [0.0; 3];
    let mut e = 0.0;
    for (iv, &x) in q.iter().enumerate() {
        let v = grid.velocity(iv);
        m += x;
        for d in 0..3 {
            p[d] += x * v[d];
        }
        e += x * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    }
    (m * h3, [p[0] * h3, p[1] * h3, p[2] * h3], e * h3)
}
