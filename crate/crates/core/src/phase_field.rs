//! Phase-space grids, distribution fields, hydrodynamic moments and the
//! hydrodynamic bound check.
//!
//! Velocity nodes are `v_i = −R + i·h`, `h = 2R/nv`, `i = 0..nv`, so the cube
//! is `[−R, R)³` and contains the origin as a node. Spatial nodes sample the
//! unit torus `[0,1)^d` at spacing `1/nx`; `nx = 1` is the homogeneous case.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Vec3;

/// Smallest admissible velocity half-width.
pub const MIN_VELOCITY_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub nx: usize,
    pub dx_dims: usize,
    pub nv: usize,
    #[serde(rename = "R")]
    pub r: f64,
}

impl PhaseGrid {
    pub fn new(nx: usize, dx_dims: usize, nv: usize, r: f64) -> Result<Self> {
        let g = PhaseGrid { nx, dx_dims, nv, r };
        g.validate()?;
        Ok(g)
    }

    /// Default homogeneous desk grid.
    pub fn homogeneous_default() -> Self {
        PhaseGrid {
            nx: 1,
            dx_dims: 1,
            nv: 24,
            r: 8.0,
        }
    }

    /// Default inhomogeneous desk grid.
    pub fn inhomogeneous_default() -> Self {
        PhaseGrid {
            nx: 16,
            dx_dims: 1,
            nv: 16,
            r: 6.0,
        }
    }

    pub fn homogeneous(nv: usize, r: f64) -> Result<Self> {
        PhaseGrid::new(1, 1, nv, r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nv < 8 || self.nv % 2 != 0 {
            return invalid(format!("nv must be even and >= 8, got {}", self.nv));
        }
        if !(1..=3).contains(&self.dx_dims) {
            return invalid(format!("dx_dims must be 1, 2 or 3, got {}", self.dx_dims));
        }
        if self.nx == 0 {
            return invalid("nx must be >= 1");
        }
        if !(self.r.is_finite() && self.r >= MIN_VELOCITY_RADIUS) {
            return invalid(format!(
                "velocity radius R must be >= {MIN_VELOCITY_RADIUS}, got {}",
                self.r
            ));
        }
        Ok(())
    }

    pub fn is_homogeneous(&self) -> bool {
        self.nx == 1
    }

    /// Velocity spacing.
    pub fn dv(&self) -> f64 {
        2.0 * self.r / self.nv as f64
    }

    /// Velocity cell volume `h³`.
    pub fn dv3(&self) -> f64 {
        self.dv().powi(3)
    }

    /// Number of velocity nodes `nv³`.
    pub fn nv3(&self) -> usize {
        self.nv * self.nv * self.nv
    }

    /// Number of spatial nodes `nx^d` (1 when homogeneous).
    pub fn n_space(&self) -> usize {
        if self.nx == 1 {
            1
        } else {
            self.nx.pow(self.dx_dims as u32)
        }
    }

    /// Spatial cell volume on the unit torus.
    pub fn dx_vol(&self) -> f64 {
        1.0 / self.n_space() as f64
    }

    pub fn len(&self) -> usize {
        self.n_space() * self.nv3()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of velocity index `i` along one axis.
    #[inline]
    pub fn v_coord(&self, i: usize) -> f64 {
        -self.r + i as f64 * self.dv()
    }

    /// Velocity of flattened node index `iv`.
    #[inline]
    pub fn velocity(&self, iv: usize) -> Vec3 {
        let n = self.nv;
        let (i, j, k) = (iv / (n * n), (iv / n) % n, iv % n);
        [self.v_coord(i), self.v_coord(j), self.v_coord(k)]
    }

    #[inline]
    pub fn v_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.nv + j) * self.nv + k
    }

    /// Multi-index of spatial node `ix` (unused dimensions are 0).
    pub fn x_multi(&self, ix: usize) -> [usize; 3] {
        let mut out = [0; 3];
        if self.nx == 1 {
            return out;
        }
        let mut rem = ix;
        for d in (0..self.dx_dims).rev() {
            out[d] = rem % self.nx;
            rem /= self.nx;
        }
        out
    }

    pub fn x_flat(&self, m: [usize; 3]) -> usize {
        if self.nx == 1 {
            return 0;
        }
        let mut idx = 0;
        for &md in m.iter().take(self.dx_dims) {
            idx = idx * self.nx + md;
        }
        idx
    }

    /// Position of spatial node `ix` on the unit torus.
    pub fn position(&self, ix: usize) -> Vec3 {
        let m = self.x_multi(ix);
        let h = 1.0 / self.nx as f64;
        [m[0] as f64 * h, m[1] as f64 * h, m[2] as f64 * h]
    }

    /// Velocity grid of the same shape used as a homogeneous grid.
    pub fn velocity_only(&self) -> PhaseGrid {
        PhaseGrid { nx: 1, ..*self }
    }
}

/// Values of a distribution on a [`PhaseGrid`], spatial index major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
}

impl DistributionField {
    pub fn zeros(grid: PhaseGrid) -> Self {
        DistributionField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: PhaseGrid, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return invalid(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            ));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return invalid("field values must be finite");
        }
        Ok(DistributionField { grid, values })
    }

    /// Field `f(x, v)` sampled from a closure.
    pub fn from_fn(grid: PhaseGrid, f: impl Fn(Vec3, Vec3) -> f64) -> Self {
        let nv3 = grid.nv3();
        let mut values = Vec::with_capacity(grid.len());
        for ix in 0..grid.n_space() {
            let x = grid.position(ix);
            for iv in 0..nv3 {
                values.push(f(x, grid.velocity(iv)));
            }
        }
        DistributionField { grid, values }
    }

    /// Velocity slice at spatial node `ix`.
    pub fn slice(&self, ix: usize) -> &[f64] {
        let n = self.grid.nv3();
        &self.values[ix * n..(ix + 1) * n]
    }

    pub fn slice_mut(&mut self, ix: usize) -> &mut [f64] {
        let n = self.grid.nv3();
        &mut self.values[ix * n..(ix + 1) * n]
    }

    pub fn require_same_grid(&self, other: &DistributionField) -> Result<()> {
        if self.grid != other.grid {
            return invalid("fields live on different grids");
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        DistributionField {
            grid: self.grid,
            values: self.values.iter().map(|x| c * x).collect(),
        }
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: f64, other: &DistributionField) -> Result<Self> {
        self.require_same_grid(other)?;
        Ok(DistributionField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    /// Pointwise product with `⟨v⟩^l`.
    pub fn weighted(&self, l: f64) -> Self {
        let w = bracket_weights(&self.grid, l);
        let nv3 = self.grid.nv3();
        let mut out = self.clone();
        for (i, x) in out.values.iter_mut().enumerate() {
            *x *= w[i % nv3];
        }
        out
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Writes the binary snapshot: JSON header line then little-endian f64s.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_string(&self.grid)?;
        w.write_all(header.as_bytes())?;
        w.write_all(b"\n")?;
        for x in &self.values {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let grid: PhaseGrid = serde_json::from_str(line.trim_end())?;
        grid.validate()?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * grid.len() {
            return Err(Error::Validation(format!(
                "binary field payload has {} bytes, expected {}",
                bytes.len(),
                8 * grid.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        DistributionField::from_values(grid, values)
    }
}

/// `⟨v⟩^l` at every velocity node.
pub fn bracket_weights(grid: &PhaseGrid, l: f64) -> Vec<f64> {
    (0..grid.nv3())
        .map(|iv| crate::bracket_pow(grid.velocity(iv), l))
        .collect()
}

/// Gaussian `ρ(2πT)^{−3/2} exp(−|v−u|²/(2T))`.
#[inline]
pub fn maxwellian_value(v: Vec3, density: f64, temperature: f64, mean: Vec3) -> f64 {
    let d2 = (v[0] - mean[0]).powi(2) + (v[1] - mean[1]).powi(2) + (v[2] - mean[2]).powi(2);
    density * (2.0 * std::f64::consts::PI * temperature).powf(-1.5) * (-d2 / (2.0 * temperature)).exp()
}

/// Tail mass allowed before the Maxwellian constructor refuses.
pub const MAX_TAIL_MASS: f64 = 1e-3;

/// Spatially uniform Maxwellian.
pub fn maxwellian(grid: PhaseGrid, density: f64, temperature: f64, mean: Vec3) -> Result<DistributionField> {
    grid.validate()?;
    if !(density > 0.0 && temperature > 0.0) {
        return invalid("Maxwellian needs density > 0 and temperature > 0");
    }
    let f = DistributionField::from_fn(grid, |_, v| maxwellian_value(v, density, temperature, mean));
    let tail = maxwellian_tail_fraction(&grid, temperature, mean);
    if tail > MAX_TAIL_MASS {
        return invalid(format!(
            "Maxwellian tail mass outside the velocity cube is {tail:.3e} > {MAX_TAIL_MASS:e}"
        ));
    }
    Ok(f)
}

/// Fraction of a Maxwellian's mass outside `[−R, R)³` (product of 1D erfc tails).
pub fn maxwellian_tail_fraction(grid: &PhaseGrid, temperature: f64, mean: Vec3) -> f64 {
    let sd = temperature.sqrt();
    let mut inside = 1.0;
    for &m in &mean {
        let a = (-grid.r - m) / (sd * std::f64::consts::SQRT_2);
        let b = (grid.r - m) / (sd * std::f64::consts::SQRT_2);
        inside *= 0.5 * (erf(b) - erf(a));
    }
    1.0 - inside
}

/// Error function: Maclaurin series below 3, continued fraction for erfc above.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        // Maclaurin series, converges quickly on [0, 3).
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut n = 0.0;
        while term.abs() > 1e-17 * sum.abs() {
            n += 1.0;
            term *= -x2 / n;
            sum += term / (2.0 * n + 1.0);
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    } else {
        // Continued fraction for erfc.
        let mut f = 0.0;
        for k in (1..60).rev() {
            f = (k as f64 * 0.5) / (x + f);
        }
        1.0 - (-x * x).exp() / (std::f64::consts::PI.sqrt() * (x + f))
    }
}

/// Moments per spatial node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroReport {
    pub mass: Vec<f64>,
    pub momentum: Vec<[f64; 3]>,
    pub energy: Vec<f64>,
    pub entropy: Vec<f64>,
    /// True when negative values were clamped to 0 inside the entropy.
    pub entropy_clamped: bool,
}

/// Mass, momentum, energy `∫|v|²f` and entropy `∫ f log f` per spatial node.
pub fn hydro_moments(f: &DistributionField) -> HydroReport {
    let g = f.grid;
    let h3 = g.dv3();
    let ns = g.n_space();
    let mut rep = HydroReport {
        mass: Vec::with_capacity(ns),
        momentum: Vec::with_capacity(ns),
        energy: Vec::with_capacity(ns),
        entropy: Vec::with_capacity(ns),
        entropy_clamped: false,
    };
    for ix in 0..ns {
        let sl = f.slice(ix);
        let (mut m, mut p, mut e, mut h) = (0.0, [0.0; 3], 0.0, 0.0);
        for (iv, &val) in sl.iter().enumerate() {
            let v = g.velocity(iv);
            m += val;
            p[0] += val * v[0];
            p[1] += val * v[1];
            p[2] += val * v[2];
            e += val * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
            if val > 0.0 {
                h += val * val.ln();
            } else if val < 0.0 {
                rep.entropy_clamped = true;
            }
        }
        rep.mass.push(m * h3);
        rep.momentum.push([p[0] * h3, p[1] * h3, p[2] * h3]);
        rep.energy.push(e * h3);
        rep.entropy.push(h * h3);
    }
    rep
}

impl HydroReport {
    /// CSV with columns `x_index,mass,px,py,pz,energy,entropy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x_index,mass,px,py,pz,energy,entropy\n");
        for i in 0..self.mass.len() {
            let p = self.momentum[i];
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                i, self.mass[i], p[0], p[1], p[2], self.energy[i], self.entropy[i]
            ));
        }
        s
    }
}

/// Constants of the hydrodynamic bound condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HydroBounds {
    pub m0: f64,
    #[serde(rename = "M0")]
    pub big_m0: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "H0")]
    pub h0: f64,
}

impl Default for HydroBounds {
    fn default() -> Self {
        HydroBounds {
            m0: 1.0,
            big_m0: 1.0,
            e0: 3.0,
            h0: 1.0,
        }
    }
}

impl HydroBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.m0 > 0.0 && self.big_m0 >= self.m0 && self.e0 > 0.0 && self.h0.is_finite()) {
            return invalid(format!("invalid hydrodynamic bounds {self:?}"));
        }
        Ok(())
    }
}

/// Outcome of the hydrodynamic bound check with worst margins over space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionHReport {
    pub pass: bool,
    /// `min_x (mass − m0/2)`.
    pub mass_lower_margin: f64,
    /// `min_x (2M0 − mass)`.
    pub mass_upper_margin: f64,
    /// `min_x (2E0 − energy)`.
    pub energy_margin: f64,
    /// `min_x (2H0 − entropy)`.
    pub entropy_margin: f64,
}

impl ConditionHReport {
    pub fn mass_margin(&self) -> f64 {
        self.mass_lower_margin.min(self.mass_upper_margin)
    }
}

pub fn check_condition_h(f: &DistributionField, bounds: &HydroBounds) -> ConditionHReport {
    let rep = hydro_moments(f);
    let mut out = ConditionHReport {
        pass: true,
        mass_lower_margin: f64::INFINITY,
        mass_upper_margin: f64::INFINITY,
        energy_margin: f64::INFINITY,
        entropy_margin: f64::INFINITY,
    };
    for i in 0..rep.mass.len() {
        out.mass_lower_margin = out.mass_lower_margin.min(rep.mass[i] - 0.5 * bounds.m0);
        out.mass_upper_margin = out.mass_upper_margin.min(2.0 * bounds.big_m0 - rep.mass[i]);
        out.energy_margin = out.energy_margin.min(2.0 * bounds.e0 - rep.energy[i]);
        out.entropy_margin = out.entropy_margin.min(2.0 * bounds.h0 - rep.entropy[i]);
    }
    out.pass = out.mass_lower_margin >= 0.0
        && out.mass_upper_margin >= 0.0
        && out.energy_margin >= 0.0
        && out.entropy_margin >= 0.0;
    out
}

/// `∫∫ ⟨v⟩^r |f| dx dv`.
pub fn weighted_l1(f: &DistributionField, r: f64) -> f64 {
    let w = bracket_weights(&f.grid, r);
    let nv3 = f.grid.nv3();
    let s: f64 = f
        .values
        .iter()
        .enumerate()
        .map(|(i, x)| w[i % nv3] * x.abs())
        .sum();
    s * f.grid.dv3() * f.grid.dx_vol()
}

/// `sup_x ∫ ⟨v⟩^r |f| dv`.
pub fn weighted_l1_sup_x(f: &DistributionField, r: f64) -> f64 {
    let w = bracket_weights(&f.grid, r);
    (0..f.grid.n_space())
        .map(|ix| {
            f.slice(ix)
                .iter()
                .zip(&w)
                .map(|(x, w)| w * x.abs())
                .sum::<f64>()
                * f.grid.dv3()
        })
        .fold(0.0, f64::max)
}

/// `∫∫ ⟨v⟩^{2r} |f|² dx dv`, the squared weighted L² norm.
pub fn weighted_l2_sq(f: &DistributionField, r: f64) -> f64 {
    let w = bracket_weights(&f.grid, 2.0 * r);
    let nv3 = f.grid.nv3();
    let s: f64 = f
        .values
        .iter()
        .enumerate()
        .map(|(i, x)| w[i % nv3] * x * x)
        .sum();
    s * f.grid.dv3() * f.grid.dx_vol()
}

/// `sup_x ∫ ⟨v⟩^{2r} |f|² dv`.
pub fn weighted_l2_sq_sup_x(f: &DistributionField, r: f64) -> f64 {
    let w = bracket_weights(&f.grid, 2.0 * r);
    (0..f.grid.n_space())
        .map(|ix| {
            f.slice(ix)
                .iter()
                .zip(&w)
                .map(|(x, w)| w * x * x)
                .sum::<f64>()
                * f.grid.dv3()
        })
        .fold(0.0, f64::max)
}

/// Plain phase-space inner product `∫∫ a b dx dv`.
pub fn inner(a: &DistributionField, b: &DistributionField) -> Result<f64> {
    a.require_same_grid(b)?;
    let s: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(s * a.grid.dv3() * a.grid.dx_vol())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_reference_values() {
        assert!((erf(0.5) - 0.520_499_877_813_046_5).abs() < 1e-15);
        assert!((erf(2.0) - 0.995_322_265_018_952_7).abs() < 1e-15);
        assert!((erf(3.5) - 0.999_999_256_901_627_7).abs() < 1e-15);
    }

    #[test]
    fn binary_roundtrip() {
        let g = PhaseGrid::new(2, 1, 8, 4.0).unwrap();
        let f = DistributionField::from_fn(g, |x, v| x[0] + v[1] * 0.25);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let back = DistributionField::read_binary(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn spatial_indexing_roundtrip() {
        let g = PhaseGrid::new(4, 3, 8, 4.0).unwrap();
        for ix in 0..g.n_space() {
            assert_eq!(g.x_flat(g.x_multi(ix)), ix);
        }
    }
}
