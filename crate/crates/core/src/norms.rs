//! Anisotropic and weighted energy norms: fractional velocity derivatives,
//! the fractional Laplacian on the sphere, the triple norm and the
//! `X_ℓ`, `Y_ℓ`, `Z_ℓ` norms built from them.
//!
//! Velocity multipliers act on the periodic surrogate `[−R, R)³` (fields
//! must decay at the cube boundary); spatial multipliers are exact on the
//! unit torus, whose dual lattice is `2π Z^d`.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::{KernelParams, WeightLadder};
use crate::phase_field::{bracket_weights, weighted_l2_sq, DistributionField, PhaseGrid};
use crate::spectral::{mode, VelocitySpectrum};
use crate::sph::SphereTransform;

/// Configuration of the norm ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormLadderConfig {
    pub ladder: WeightLadder,
    /// Largest spherical-harmonic degree of the sphere transform.
    pub sphere_lmax: usize,
    /// Radial shells of the sphere transform; `None` means `nv/2`.
    pub shells: Option<usize>,
}

impl NormLadderConfig {
    pub fn new(ladder: WeightLadder) -> Self {
        NormLadderConfig {
            ladder,
            sphere_lmax: 16,
            shells: None,
        }
    }

    pub fn validate(&self, grid: &PhaseGrid) -> Result<()> {
        if self.sphere_lmax < 8 {
            return invalid(format!("sphere_lmax must be >= 8, got {}", self.sphere_lmax));
        }
        if let Some(s) = self.shells {
            if s < grid.nv / 2 {
                return invalid(format!("shells must be >= nv/2 = {}, got {s}", grid.nv / 2));
            }
        }
        Ok(())
    }

    pub fn shell_count(&self, grid: &PhaseGrid) -> usize {
        self.shells.unwrap_or(grid.nv / 2)
    }
}

/// Largest value on the boundary faces of the velocity cube relative to the
/// largest value overall (0 for the zero field).
pub fn boundary_tail(f: &DistributionField) -> f64 {
    let n = f.grid.nv;
    let m = f.max_abs();
    if m == 0.0 {
        return 0.0;
    }
    let mut b = 0.0f64;
    for ix in 0..f.grid.n_space() {
        let s = f.slice(ix);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1 {
                        b = b.max(s[(i * n + j) * n + k].abs());
                    }
                }
            }
        }
    }
    b / m
}

/// Fails when the boundary tail exceeds `tol`.
pub fn require_decay(f: &DistributionField, tol: f64) -> Result<f64> {
    let t = boundary_tail(f);
    if t > tol {
        return invalid(format!("field does not decay at the velocity boundary: tail {t:.2e} > {tol:.2e}"));
    }
    Ok(t)
}

/// `⟨D_v⟩^{order}(⟨v⟩^a f)` by the discrete Fourier transform on the cube.
pub fn fractional_deriv_v(f: &DistributionField, order: f64, pre_weight: f64) -> Result<DistributionField> {
    if !(order >= 0.0 && order.is_finite()) {
        return invalid(format!("derivative order must be >= 0, got {order}"));
    }
    let grid = f.grid;
    let w = bracket_weights(&grid, pre_weight);
    let sp = VelocitySpectrum::new(&grid);
    let mut out = DistributionField::zeros(grid);
    let slices: Vec<Vec<f64>> = (0..grid.n_space())
        .into_par_iter()
        .map(|ix| {
            let wf: Vec<f64> = f.slice(ix).iter().zip(&w).map(|(a, b)| a * b).collect();
            if order == 0.0 {
                return wf;
            }
            sp.multiply(&wf, |xi| (1.0 + xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).powf(0.5 * order))
        })
        .collect();
    for (ix, s) in slices.into_iter().enumerate() {
        out.slice_mut(ix).copy_from_slice(&s);
    }
    Ok(out)
}

/// Band-limited (trigonometric) interpolant of one velocity slice.
struct TrigInterpolant {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl TrigInterpolant {
    fn new(sp: &VelocitySpectrum, x: &[f64]) -> Self {
        let n = sp.grid.nv;
        let mut data: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        sp.fft.forward(&mut data);
        let norm = 1.0 / (n * n * n) as f64;
        for (i, c) in data.iter_mut().enumerate() {
            let m = [i / (n * n), (i / n) % n, i % n];
            // The Nyquist mode is split evenly between ±n/2.
            let mut f = norm;
            for &mi in &m {
                if mi == n / 2 {
                    f *= 0.5;
                }
            }
            *c *= f;
        }
        TrigInterpolant { n, coeffs: data }
    }

    /// Value at grid coordinate `x` (index units, periodic).
    fn eval(&self, x: [f64; 3]) -> f64 {
        let n = self.n;
        let tau = 2.0 * std::f64::consts::PI / n as f64;
        let phase = |xd: f64| -> Vec<Complex64> {
            (0..n)
                .map(|k| {
                    let m = mode(k, n) as f64;
                    if k == n / 2 {
                        // cos only: combines the ±n/2 halves.
                        Complex64::new(2.0 * (m * tau * xd).cos(), 0.0)
                    } else {
                        Complex64::from_polar(1.0, m * tau * xd)
                    }
                })
                .collect()
        };
        let (p0, p1, p2) = (phase(x[0]), phase(x[1]), phase(x[2]));
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for b in 0..n {
                let base = (a * n + b) * n;
                let mut s = Complex64::new(0.0, 0.0);
                for c in 0..n {
                    s += self.coeffs[base + c] * p2[c];
                }
                row += s * p1[b];
            }
            acc += row * p0[a];
        }
        acc.re
    }
}

/// Cubic Lagrange weights on nodes `b-1..=b+2` at offset `t ∈ [0,1)`.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// `(−Δ_{S²})^{s/2} f` per spatial node.
///
/// Each slice is sampled on radial shells `r_k = k·h` times a sphere grid by
/// its trigonometric interpolant, expanded in real harmonics to degree
/// `lmax`, scaled by `(l(l+1))^{s/2}`, and evaluated back at the Cartesian
/// nodes: exactly in angle, by cubic interpolation in radius (the output
/// vanishes at the origin). Nodes beyond the outer shell get 0.
pub fn sphere_fractional(f: &DistributionField, s: f64, cfg: &NormLadderConfig) -> Result<DistributionField> {
    if !(s > 0.0 && s < 1.0) {
        return invalid(format!("sphere fractional order must lie in (0,1), got {s}"));
    }
    let grid = f.grid;
    cfg.validate(&grid)?;
    let st = SphereTransform::new(cfg.sphere_lmax)?;
    let shells = cfg.shell_count(&grid);
    let sp = VelocitySpectrum::new(&grid);
    let h = grid.dv();
    let r = grid.r;
    let mut out = DistributionField::zeros(grid);
    let slices: Vec<Vec<f64>> = (0..grid.n_space())
        .into_par_iter()
        .map(|ix| {
            let ti = TrigInterpolant::new(&sp, f.slice(ix));
            // Shell 0 carries the zero expansion.
            let mut coeffs = vec![vec![0.0; crate::sph::n_coeffs(st.lmax)]];
            for k in 1..=shells {
                let rad = k as f64 * h;
                let vals: Vec<f64> = (0..st.n_nodes())
                    .map(|q| {
                        let d = st.direction(q);
                        let x = [(rad * d[0] + r) / h, (rad * d[1] + r) / h, (rad * d[2] + r) / h];
                        ti.eval(x)
                    })
                    .collect();
                let mut c = st.analyze(&vals);
                st.scale_degrees(&mut c, |l| ((l * (l + 1)) as f64).powf(0.5 * s));
                coeffs.push(c);
            }
            let n3 = grid.nv3();
            let mut res = vec![0.0; n3];
            for (iv, o) in res.iter_mut().enumerate() {
                let v = grid.velocity(iv);
                let rad = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if rad == 0.0 || rad > shells as f64 * h {
                    continue;
                }
                let dir = [v[0] / rad, v[1] / rad, v[2] / rad];
                let y = crate::sph::real_harmonics(st.lmax, dir);
                let u = rad / h;
                let b = (u.floor() as i64).clamp(1, shells as i64 - 2);
                let w = cubic_weights(u - b as f64);
                let mut acc = 0.0;
                for (j, wj) in w.iter().enumerate() {
                    let k = b - 1 + j as i64;
                    let c = &coeffs[k as usize];
                    acc += wj * y.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
                }
                *o = acc;
            }
            res
        })
        .collect();
    for (ix, sl) in slices.into_iter().enumerate() {
        out.slice_mut(ix).copy_from_slice(&sl);
    }
    Ok(out)
}

/// Squared L² norms over velocity of each spatial slice.
fn slice_l2_sq(f: &DistributionField) -> Vec<f64> {
    let h3 = f.grid.dv3();
    (0..f.grid.n_space())
        .map(|ix| f.slice(ix).iter().map(|x| x * x).sum::<f64>() * h3)
        .collect()
}

fn weighted_by(f: &DistributionField, l: f64) -> DistributionField {
    f.weighted(l)
}

/// The two squared components `(‖⟨D_v⟩^s⟨v⟩^{γ/2}h‖², ‖(−Δ_{S²})^{s/2}⟨v⟩^{γ/2}h‖²)`
/// of the triple norm at every spatial node.
pub fn triple_components(f: &DistributionField, params: &KernelParams, cfg: &NormLadderConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = fractional_deriv_v(f, params.s, 0.5 * params.gamma)?;
    let w = weighted_by(f, 0.5 * params.gamma);
    let b = sphere_fractional(&w, params.s, cfg)?;
    Ok((slice_l2_sq(&a), slice_l2_sq(&b)))
}

/// Triple norm `|||h|||` at every spatial node.
pub fn triple_norm(f: &DistributionField, params: &KernelParams, cfg: &NormLadderConfig) -> Result<Vec<f64>> {
    let (a, b) = triple_components(f, params, cfg)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x + y).sqrt()).collect())
}

/// `|||h|||_{L²_x}`, the triple norm integrated over the torus.
pub fn triple_norm_x(f: &DistributionField, params: &KernelParams, cfg: &NormLadderConfig) -> Result<f64> {
    let (a, b) = triple_components(f, params, cfg)?;
    let dx = f.grid.dx_vol();
    Ok((a.iter().chain(&b).sum::<f64>() * dx).sqrt())
}

/// Multi-indices `α` with `|α| = 3` along the first `dims` axes.
pub fn third_order_indices(dims: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..=3usize {
        for b in 0..=3 - a {
            let c = 3 - a - b;
            let alpha = [a, b, c];
            if alpha.iter().enumerate().all(|(d, &k)| d < dims || k == 0) {
                out.push(alpha);
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Applies a spatial Fourier multiplier `m(k)`, `k ∈ 2π Z^d`, to every
/// velocity node. Homogeneous grids see only `k = 0`.
pub fn spatial_multiplier(f: &DistributionField, m: impl Fn([f64; 3]) -> Complex64 + Sync) -> DistributionField {
    let grid = f.grid;
    if grid.is_homogeneous() {
        let c = m([0.0; 3]).re;
        return f.scaled(c);
    }
    let nx = grid.nx;
    let d = grid.dx_dims;
    let ns = grid.n_space();
    let nv3 = grid.nv3();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(nx);
    let inv = planner.plan_fft_inverse(nx);
    let stride = |axis: usize| nx.pow((d - 1 - axis) as u32);
    let transform = |data: &mut Vec<Complex64>, plan: &std::sync::Arc<dyn rustfft::Fft<f64>>| {
        let mut line = vec![Complex64::new(0.0, 0.0); nx];
        for axis in 0..d {
            let st = stride(axis);
            for start in 0..ns {
                if (start / st) % nx != 0 {
                    continue;
                }
                for (i, l) in line.iter_mut().enumerate() {
                    *l = data[start + i * st];
                }
                plan.process(&mut line);
                for (i, l) in line.iter().enumerate() {
                    data[start + i * st] = *l;
                }
            }
        }
    };
    let symbols: Vec<Complex64> = (0..ns)
        .map(|ix| {
            let mm = grid.x_multi(ix);
            let mut k = [0.0; 3];
            for a in 0..d {
                k[a] = 2.0 * std::f64::consts::PI * mode(mm[a], nx) as f64;
            }
            m(k)
        })
        .collect();
    let cols: Vec<Vec<f64>> = (0..nv3)
        .into_par_iter()
        .map(|iv| {
            let mut data: Vec<Complex64> = (0..ns).map(|ix| Complex64::new(f.values[ix * nv3 + iv], 0.0)).collect();
            transform(&mut data, &fwd);
            for (x, s) in data.iter_mut().zip(&symbols) {
                *x *= s;
            }
            transform(&mut data, &inv);
            let norm = 1.0 / ns as f64;
            data.iter().map(|z| z.re * norm).collect()
        })
        .collect();
    let mut out = DistributionField::zeros(grid);
    for (iv, col) in cols.into_iter().enumerate() {
        for (ix, x) in col.into_iter().enumerate() {
            out.values[ix * nv3 + iv] = x;
        }
    }
    out
}

/// `∂_x^α f` by the exact torus multiplier `(ik)^α`.
pub fn spatial_derivative(f: &DistributionField, alpha: [usize; 3]) -> DistributionField {
    spatial_multiplier(f, |k| {
        let mut z = Complex64::new(1.0, 0.0);
        for d in 0..3 {
            for _ in 0..alpha[d] {
                z *= Complex64::new(0.0, k[d]);
            }
        }
        z
    })
}

/// `⟨D_x⟩^r f`.
pub fn bracket_dx(f: &DistributionField, r: f64) -> DistributionField {
    spatial_multiplier(f, |k| Complex64::new((1.0 + k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).powf(0.5 * r), 0.0))
}

/// Smallest spatial resolution at which third derivatives are resolved.
pub const MIN_NX_FOR_DERIVATIVES: usize = 8;

/// Third-order spatial derivative fields, empty in homogeneous mode.
pub fn third_derivatives(f: &DistributionField) -> Result<Vec<DistributionField>> {
    if f.grid.is_homogeneous() {
        return Ok(Vec::new());
    }
    if f.grid.nx < MIN_NX_FOR_DERIVATIVES {
        return invalid(format!(
            "third spatial derivatives need nx >= {MIN_NX_FOR_DERIVATIVES}, got {}",
            f.grid.nx
        ));
    }
    Ok(third_order_indices(f.grid.dx_dims)
        .into_iter()
        .map(|a| spatial_derivative(f, a))
        .collect())
}

/// `‖h‖_{X_ℓ}` with `ℓ = ladder.ell`.
pub fn x_norm(f: &DistributionField, ladder: &WeightLadder) -> Result<f64> {
    let l = ladder.ell;
    let mut acc = weighted_l2_sq(f, l);
    for d in third_derivatives(f)? {
        acc += weighted_l2_sq(&d, l - 3.0 * ladder.rho);
    }
    Ok(acc.sqrt())
}

/// `‖h‖_{Y_ℓ}` with `ℓ = ladder.ell`.
pub fn y_norm(f: &DistributionField, params: &KernelParams, cfg: &NormLadderConfig) -> Result<f64> {
    let l = cfg.ladder.ell;
    let t = triple_norm_x(&f.weighted(l), params, cfg)?;
    let mut acc = t * t;
    for d in third_derivatives(f)? {
        let t = triple_norm_x(&d.weighted(l - 3.0 * cfg.ladder.rho), params, cfg)?;
        acc += t * t;
    }
    Ok(acc.sqrt())
}

/// `‖h‖_{Z_ℓ}` with `ℓ = ladder.ell`.
pub fn z_norm(f: &DistributionField, params: &KernelParams, ladder: &WeightLadder) -> Result<f64> {
    let (s, g) = (params.s, params.gamma);
    let shift = g / (2.0 * (1.0 + 2.0 * s));
    let order = s / (1.0 + 2.0 * s);
    let l = ladder.ell;
    let mut acc = weighted_l2_sq(&bracket_dx(f, order), shift + l);
    for d in third_derivatives(f)? {
        acc += weighted_l2_sq(&bracket_dx(&d, order), shift + l - 3.0 * ladder.rho);
    }
    Ok(acc.sqrt())
}

/// Integrand `‖⟨D_v⟩^s ⟨v⟩^{ℓ₁+γ/2} f‖²_{L²_{x,v}}` of the smallness quantity.
pub fn delta_integrand(f: &DistributionField, params: &KernelParams, ladder: &WeightLadder) -> Result<f64> {
    let d = fractional_deriv_v(f, params.s, ladder.ell1 + 0.5 * params.gamma)?;
    Ok(weighted_l2_sq(&d, 0.0))
}

/// `(∫₀^T integrand dt)^{1/2}` by the trapezoid rule over `(t, integrand)`
/// samples. A single sample is treated as constant over `[0, t]`.
pub fn delta_quantity(samples: &[(f64, f64)]) -> Result<f64> {
    match samples.len() {
        0 => invalid("delta quantity needs at least one time sample"),
        1 => Ok((samples[0].0 * samples[0].1).max(0.0).sqrt()),
        _ => {
            let mut acc = 0.0;
            for w in samples.windows(2) {
                let dt = w[1].0 - w[0].0;
                if dt <= 0.0 {
                    return invalid("time stamps must be strictly increasing");
                }
                acc += 0.5 * dt * (w[0].1 + w[1].1);
            }
            Ok(acc.max(0.0).sqrt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DEFAULT_TILDE_C0;
    use crate::phase_field::maxwellian_value;

    fn cfg() -> NormLadderConfig {
        let p = KernelParams::default();
        NormLadderConfig::new(WeightLadder::from_ell1(15.5, DEFAULT_TILDE_C0, &p))
    }

    #[test]
    fn order_zero_is_the_weighted_field() {
        let g = PhaseGrid::homogeneous(12, 5.0).unwrap();
        let f = DistributionField::from_fn(g, |_, v| maxwellian_value(v, 1.0, 1.0, [0.3, 0.0, 0.0]));
        let d = fractional_deriv_v(&f, 0.0, 2.0).unwrap();
        let w = f.weighted(2.0);
        for (a, b) in d.values.iter().zip(&w.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn trig_interpolant_reproduces_nodes() {
        let g = PhaseGrid::homogeneous(8, 4.0).unwrap();
        let f = DistributionField::from_fn(g, |_, v| (v[0] + 0.3 * v[1] * v[2]).sin() + 1.0);
        let sp = VelocitySpectrum::new(&g);
        let ti = TrigInterpolant::new(&sp, f.slice(0));
        for &iv in &[0usize, 77, 300, 511] {
            let m = [(iv / 64) as f64, ((iv / 8) % 8) as f64, (iv % 8) as f64];
            assert!((ti.eval(m) - f.values[iv]).abs() < 1e-12);
        }
    }

    #[test]
    fn third_order_index_counts() {
        assert_eq!(third_order_indices(1), vec![[3, 0, 0]]);
        assert_eq!(third_order_indices(2).len(), 4);
        assert_eq!(third_order_indices(3).len(), 10);
    }

    #[test]
    fn radial_field_has_no_sphere_part() {
        // h = 1/2 keeps the band-limited sampling aliasing near 1e-9.
        let g = PhaseGrid::homogeneous(24, 6.0).unwrap();
        let f = DistributionField::from_fn(g, |_, v| maxwellian_value(v, 1.0, 1.0, [0.0; 3]));
        let out = sphere_fractional(&f, 0.5, &cfg()).unwrap();
        assert!(out.max_abs() <= 1e-6 * f.max_abs(), "{}", out.max_abs() / f.max_abs());
    }
}
