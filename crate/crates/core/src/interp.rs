//! Local Lagrange interpolation on uniform grids.
//!
//! Stencils are centred, `p` points wide (`p` even), with node offsets
//! `-(p/2-1) ..= p/2` relative to the cell containing the evaluation point.
//! The same weights serve for gathering values at off-grid points and, by
//! duality, for depositing point masses onto the grid.

use serde::{Deserialize, Serialize};

/// Interpolation order in each coordinate direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// Two-point (trilinear in 3D). Positive weights, reproduces affine functions.
    #[serde(alias = "trilinear")]
    Linear,
    /// Four-point (tricubic in 3D). Reproduces cubic polynomials per direction.
    #[serde(alias = "tricubic")]
    Cubic,
    /// Six-point. Reproduces quintic polynomials per direction.
    Quintic,
    /// Four-point Keys (Catmull–Rom) kernel: continuously differentiable,
    /// reproduces quadratics per direction.
    #[serde(alias = "catmull_rom")]
    Keys,
    /// Interpolating cubic B-spline (not-a-knot): twice continuously
    /// differentiable, reproduces cubics. Weights are B-spline values and act
    /// on prefiltered coefficients (see [`crate::spline`]).
    CubicSpline,
    /// Interpolating quintic B-spline (not-a-knot), reproduces quintics.
    QuinticSpline,
}

impl Stencil {
    pub fn width(self) -> usize {
        match self {
            Stencil::Linear => 2,
            Stencil::Cubic | Stencil::Keys | Stencil::CubicSpline => 4,
            Stencil::Quintic | Stencil::QuinticSpline => 6,
        }
    }

    /// Degree of the underlying B-spline for the spline variants.
    pub fn spline_degree(self) -> Option<usize> {
        match self {
            Stencil::CubicSpline => Some(3),
            Stencil::QuinticSpline => Some(5),
            _ => None,
        }
    }

    /// Offset of the first stencil node relative to the base cell index.
    pub fn first_offset(self) -> i64 {
        1 - (self.width() as i64) / 2
    }

    /// Weights for the fractional position `t ∈ [0, 1)` inside the base cell.
    #[inline]
    pub fn weights(self, t: f64, out: &mut [f64; 6]) {
        match self {
            Stencil::Linear => {
                out[0] = 1.0 - t;
                out[1] = t;
            }
            Stencil::Cubic => {
                let tm1 = t - 1.0;
                let tm2 = t - 2.0;
                let tp1 = t + 1.0;
                out[0] = -t * tm1 * tm2 / 6.0;
                out[1] = tp1 * tm1 * tm2 / 2.0;
                out[2] = -tp1 * t * tm2 / 2.0;
                out[3] = tp1 * t * tm1 / 6.0;
            }
            Stencil::Keys => {
                let t2 = t * t;
                let t3 = t2 * t;
                out[0] = 0.5 * (-t3 + 2.0 * t2 - t);
                out[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
                out[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
                out[3] = 0.5 * (t3 - t2);
            }
            Stencil::CubicSpline | Stencil::QuinticSpline => {
                let p = self.spline_degree().expect("spline");
                let first = self.first_offset();
                for (m, o) in out.iter_mut().enumerate().take(self.width()) {
                    *o = crate::spline::bspline(p, t - (first + m as i64) as f64);
                }
            }
            Stencil::Quintic => {
                // Nodes -2..=3.
                let nodes = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
                for (j, xj) in nodes.iter().enumerate() {
                    let mut num = 1.0;
                    let mut den = 1.0;
                    for (m, xm) in nodes.iter().enumerate() {
                        if m != j {
                            num *= t - xm;
                            den *= xj - xm;
                        }
                    }
                    out[j] = num / den;
                }
            }
        }
    }
}

/// Splits a continuous grid coordinate into base cell and fractional part.
#[inline]
pub fn split_coordinate(x: f64) -> (i64, f64) {
    let b = x.floor();
    (b as i64, x - b)
}

/// Periodic one-dimensional interpolation of `values` (period `n` samples)
/// at continuous index `x`.
pub fn periodic_1d(values: &[f64], x: f64, stencil: Stencil) -> f64 {
    let n = values.len() as i64;
    let (b, t) = split_coordinate(x);
    let mut w = [0.0; 6];
    stencil.weights(t, &mut w);
    let first = stencil.first_offset();
    let mut acc = 0.0;
    for j in 0..stencil.width() {
        let idx = (b + first + j as i64).rem_euclid(n) as usize;
        acc += w[j] * values[idx];
    }
    acc
}

/// Tensor-product interpolation of a cube of `n³` samples (index `(i·n+j)·n+k`)
/// at continuous grid coordinates `x`, with zero extension outside the cube.
/// For the spline variants `values` must be the prefiltered coefficients and
/// `x` is shifted by the coefficient padding by the caller.
pub fn sample_3d(values: &[f64], n: usize, x: [f64; 3], stencil: Stencil) -> f64 {
    let w = stencil.width();
    let first = stencil.first_offset();
    let mut wts = [[0.0; 6]; 3];
    let mut base = [0i64; 3];
    for d in 0..3 {
        let (b, t) = split_coordinate(x[d]);
        base[d] = b + first;
        stencil.weights(t, &mut wts[d]);
    }
    let ni = n as i64;
    let mut acc = 0.0;
    for a in 0..w {
        let i = base[0] + a as i64;
        if i < 0 || i >= ni {
            continue;
        }
        for b in 0..w {
            let j = base[1] + b as i64;
            if j < 0 || j >= ni {
                continue;
            }
            let wab = wts[0][a] * wts[1][b];
            let row = ((i * ni + j) * ni) as usize;
            for c in 0..w {
                let k = base[2] + c as i64;
                if k < 0 || k >= ni {
                    continue;
                }
                acc += wab * wts[2][c] * values[row + k as usize];
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_partition_unity_and_reproduce_polynomials() {
        for st in [Stencil::Linear, Stencil::Cubic, Stencil::Quintic, Stencil::Keys] {
            // Spline variants are checked in `crate::spline`.
            let deg = if st == Stencil::Keys { 2 } else { st.width() - 1 };
            for &t in &[0.0, 0.13, 0.5, 0.77, 0.999] {
                let mut w = [0.0; 6];
                st.weights(t, &mut w);
                for p in 0..=deg {
                    let mut acc = 0.0;
                    for j in 0..st.width() {
                        let x = (st.first_offset() + j as i64) as f64;
                        acc += w[j] * x.powi(p as i32);
                    }
                    assert!((acc - t.powi(p as i32)).abs() < 1e-12, "{st:?} p={p} t={t}");
                }
            }
        }
    }

    #[test]
    fn periodic_shift_by_whole_cells_is_exact() {
        let v: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64).collect();
        for i in 0..16 {
            let got = periodic_1d(&v, i as f64 + 3.0, Stencil::Cubic);
            assert!((got - v[(i + 3) % 16]).abs() < 1e-14);
        }
    }
}
