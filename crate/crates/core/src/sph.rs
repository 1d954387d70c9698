//! Real orthonormal spherical harmonics and an exact transform on a
//! Gauss–Legendre × uniform-azimuth sphere grid.
//!
//! With `lmax + 1` Gauss nodes in `cos θ` and `2·lmax + 2` azimuth nodes the
//! analysis of any function of degree `≤ lmax` is exact up to rounding.
//! Coefficients are indexed by `l² + l + m`, `−l ≤ m ≤ l`; `m > 0` pairs with
//! `cos(mφ)` and `m < 0` with `sin(|m|φ)`.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::quadrature::GaussLegendre;

/// Number of coefficients up to degree `lmax`.
pub fn n_coeffs(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1)
}

/// Coefficient index of `(l, m)`.
#[inline]
pub fn index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Fully normalized associated Legendre values `P̄_l^m(x)` for `0 ≤ m ≤ l ≤ lmax`,
/// stored at `l(l+1)/2 + m`, with `2π ∫_{−1}^{1} P̄_l^m(x)² dx = 1`.
pub fn legendre_normalized(lmax: usize, x: f64) -> Vec<f64> {
    let tri = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut p = vec![0.0; (lmax + 1) * (lmax + 2) / 2];
    let sx = (1.0 - x * x).max(0.0).sqrt();
    p[0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=lmax {
        p[tri(m, m)] = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * sx * p[tri(m - 1, m - 1)];
    }
    for m in 0..lmax {
        p[tri(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * x * p[tri(m, m)];
    }
    for m in 0..=lmax {
        for l in m + 2..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            p[tri(l, m)] = a * (x * p[tri(l - 1, m)] - b * p[tri(l - 2, m)]);
        }
    }
    p
}

/// All real harmonics `Y_lm` up to `lmax` at a unit direction.
pub fn real_harmonics(lmax: usize, dir: [f64; 3]) -> Vec<f64> {
    let x = dir[2].clamp(-1.0, 1.0);
    let phi = dir[1].atan2(dir[0]);
    harmonics_at(lmax, x, phi)
}

fn harmonics_at(lmax: usize, x: f64, phi: f64) -> Vec<f64> {
    let p = legendre_normalized(lmax, x);
    let mut y = vec![0.0; n_coeffs(lmax)];
    let s2 = std::f64::consts::SQRT_2;
    for l in 0..=lmax {
        let base = l * l + l;
        y[base] = p[l * (l + 1) / 2];
        for m in 1..=l {
            let pm = p[l * (l + 1) / 2 + m] * s2;
            let (s, c) = (m as f64 * phi).sin_cos();
            y[base + m] = pm * c;
            y[base - m] = pm * s;
        }
    }
    y
}

/// Sphere grid and harmonic tables for one degree.
#[derive(Debug, Clone)]
pub struct SphereTransform {
    pub lmax: usize,
    /// `(cos θ_i, w_i)`.
    pub polar: Vec<(f64, f64)>,
    pub n_phi: usize,
    /// `Y_lm` at node `i·n_phi + j`, row-major by node.
    table: Vec<f64>,
}

impl SphereTransform {
    pub fn new(lmax: usize) -> Result<Self> {
        if lmax == 0 || lmax > 128 {
            return invalid(format!("sphere degree must lie in 1..=128, got {lmax}"));
        }
        let gl = GaussLegendre::new(lmax + 1);
        let (x, w) = gl.on_interval(-1.0, 1.0);
        let polar: Vec<(f64, f64)> = x.into_iter().zip(w).collect();
        let n_phi = 2 * lmax + 2;
        let nc = n_coeffs(lmax);
        let mut table = Vec::with_capacity(polar.len() * n_phi * nc);
        for &(xi, _) in &polar {
            for j in 0..n_phi {
                let phi = 2.0 * PI * j as f64 / n_phi as f64;
                table.extend(harmonics_at(lmax, xi, phi));
            }
        }
        Ok(SphereTransform { lmax, polar, n_phi, table })
    }

    pub fn n_nodes(&self) -> usize {
        self.polar.len() * self.n_phi
    }

    /// Unit direction of node `k`.
    pub fn direction(&self, k: usize) -> [f64; 3] {
        let (x, _) = self.polar[k / self.n_phi];
        let phi = 2.0 * PI * (k % self.n_phi) as f64 / self.n_phi as f64;
        let st = (1.0 - x * x).max(0.0).sqrt();
        [st * phi.cos(), st * phi.sin(), x]
    }

    /// Quadrature weight of node `k` (the weights sum to `4π`).
    pub fn weight(&self, k: usize) -> f64 {
        self.polar[k / self.n_phi].1 * 2.0 * PI / self.n_phi as f64
    }

    fn row(&self, k: usize) -> &[f64] {
        let nc = n_coeffs(self.lmax);
        &self.table[k * nc..(k + 1) * nc]
    }

    /// Coefficients `c_lm = ∫ f Y_lm dσ` from node values.
    pub fn analyze(&self, values: &[f64]) -> Vec<f64> {
        let nc = n_coeffs(self.lmax);
        let mut c = vec![0.0; nc];
        for (k, &v) in values.iter().enumerate().take(self.n_nodes()) {
            let w = self.weight(k) * v;
            if w == 0.0 {
                continue;
            }
            for (ci, y) in c.iter_mut().zip(self.row(k)) {
                *ci += w * y;
            }
        }
        c
    }

    /// Node values of `Σ c_lm Y_lm`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|k| self.row(k).iter().zip(coeffs).map(|(y, c)| y * c).sum())
            .collect()
    }

    /// `Σ c_lm Y_lm(dir)` at an arbitrary unit direction.
    pub fn evaluate(&self, coeffs: &[f64], dir: [f64; 3]) -> f64 {
        real_harmonics(self.lmax, dir)
            .iter()
            .zip(coeffs)
            .map(|(y, c)| y * c)
            .sum()
    }

    /// Multiplies every degree-`l` coefficient by `m(l)`.
    pub fn scale_degrees(&self, coeffs: &mut [f64], m: impl Fn(usize) -> f64) {
        for l in 0..=self.lmax {
            let f = m(l);
            for c in &mut coeffs[l * l..(l + 1) * (l + 1)] {
                *c *= f;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonics_are_orthonormal_on_the_grid() {
        let st = SphereTransform::new(6).unwrap();
        let nc = n_coeffs(6);
        for a in 0..nc {
            let vals: Vec<f64> = (0..st.n_nodes()).map(|k| st.row(k)[a]).collect();
            let c = st.analyze(&vals);
            for (b, cb) in c.iter().enumerate() {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((cb - want).abs() < 1e-12, "a={a} b={b} {cb}");
            }
        }
    }

    #[test]
    fn low_degrees_match_closed_forms() {
        let d = [0.48, -0.6, 0.64];
        let y = real_harmonics(2, d);
        let c0 = (1.0 / (4.0 * PI)).sqrt();
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        assert!((y[index(0, 0)] - c0).abs() < 1e-14);
        assert!((y[index(1, 0)] - c1 * d[2]).abs() < 1e-14);
        assert!((y[index(1, 1)] - c1 * d[0]).abs() < 1e-14);
        assert!((y[index(1, -1)] - c1 * d[1]).abs() < 1e-14);
        let c2 = (15.0 / (4.0 * PI)).sqrt();
        assert!((y[index(2, -2)] - c2 * d[0] * d[1]).abs() < 1e-13);
    }
}
