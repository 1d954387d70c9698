//! Interpolating odd-degree B-splines on a uniform grid of `n` nodes with
//! not-a-knot end conditions.
//!
//! The interpolant is `s(x) = Σ_k c_k B_p(x − k)` with `c = G f`, where the
//! not-a-knot conditions (no jump of the `p`-th derivative at the
//! `(p−1)/2` knots nearest each end) make the interpolation exact for all
//! polynomials of degree `≤ p`. Depositing a point mass at `x` with the
//! cardinal weights `L_j(x) = Σ_k G_{kj} B_p(x − k)` is therefore done by a
//! local B-spline deposit followed by `Gᵀ`.

use crate::error::{invalid, numerical, Result};

#[derive(Debug, Clone)]
pub struct SplineBasis {
    pub degree: usize,
    pub n: usize,
    /// Number of extra coefficients on each side, `(p−1)/2`.
    pub ext: usize,
    /// `G`, `(n + 2·ext) × n`, row-major.
    g: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Centred cardinal B-spline of odd degree `p`, support `|x| < (p+1)/2`.
pub fn bspline(p: usize, x: f64) -> f64 {
    let half = (p + 1) as f64 / 2.0;
    if x.abs() >= half {
        return 0.0;
    }
    let mut fact = 1.0;
    for i in 2..=p {
        fact *= i as f64;
    }
    let mut acc = 0.0;
    for j in 0..=p + 1 {
        let u = x + half - j as f64;
        if u > 0.0 {
            let term = binomial(p + 1, j) * u.powi(p as i32);
            if j % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
    }
    acc / fact
}

/// Solves `A X = B` in place by Gaussian elimination with partial pivoting.
pub(crate) fn solve_dense(mut a: Vec<f64>, n: usize, mut b: Vec<f64>, m: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("nonempty");
        if a[piv * n + col].abs() < 1e-300 {
            return numerical("singular spline collocation matrix");
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            for k in 0..m {
                b.swap(piv * m + k, col * m + k);
            }
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            for k in 0..m {
                b[row * m + k] -= factor * b[col * m + k];
            }
        }
    }
    for col in (0..n).rev() {
        let d = a[col * n + col];
        for k in 0..m {
            let mut s = b[col * m + k];
            for j in col + 1..n {
                s -= a[col * n + j] * b[j * m + k];
            }
            b[col * m + k] = s / d;
        }
    }
    Ok(b)
}

impl SplineBasis {
    pub fn new(degree: usize, n: usize) -> Result<Self> {
        if degree % 2 == 0 || degree < 3 {
            return invalid(format!("spline degree must be odd and >= 3, got {degree}"));
        }
        let ext = (degree - 1) / 2;
        if n < degree + 3 {
            return invalid(format!("spline of degree {degree} needs at least {} nodes", degree + 3));
        }
        let nc = n + 2 * ext;
        let mut a = vec![0.0; nc * nc];
        // Interpolation rows.
        for j in 0..n {
            for col in 0..nc {
                let k = col as f64 - ext as f64;
                a[j * nc + col] = bspline(degree, j as f64 - k);
            }
        }
        // Not-a-knot rows: jump of the p-th derivative at the knots nearest each end.
        let dval = |q: i64| -> f64 {
            if q < 0 || q > degree as i64 {
                0.0
            } else if q % 2 == 0 {
                binomial(degree, q as usize)
            } else {
                -binomial(degree, q as usize)
            }
        };
        let mut knots = Vec::new();
        for i in 1..=ext as i64 {
            knots.push(i);
            knots.push(n as i64 - 1 - i);
        }
        for (r, &m) in knots.iter().enumerate() {
            let row = n + r;
            for col in 0..nc {
                let k = col as i64 - ext as i64;
                let start = k - (degree as i64 + 1) / 2;
                let q = m - start;
                a[row * nc + col] = dval(q) - dval(q - 1);
            }
        }
        let mut rhs = vec![0.0; nc * n];
        for j in 0..n {
            rhs[j * n + j] = 1.0;
        }
        let g = solve_dense(a, nc, rhs, n)?;
        Ok(SplineBasis { degree, n, ext, g })
    }

    pub fn n_coeff(&self) -> usize {
        self.n + 2 * self.ext
    }

    /// `c = G f` for one line.
    pub fn prefilter_line(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (k, o) in out.iter_mut().enumerate().take(self.n_coeff()) {
            let row = &self.g[k * n..(k + 1) * n];
            *o = row.iter().zip(f).map(|(a, b)| a * b).sum();
        }
    }

    /// `f = Gᵀ b` for one line.
    pub fn transpose_line(&self, b: &[f64], out: &mut [f64]) {
        let n = self.n;
        out[..n].iter_mut().for_each(|x| *x = 0.0);
        for (k, &bk) in b.iter().enumerate().take(self.n_coeff()) {
            if bk == 0.0 {
                continue;
            }
            let row = &self.g[k * n..(k + 1) * n];
            for (o, gkj) in out.iter_mut().zip(row) {
                *o += gkj * bk;
            }
        }
    }

    /// Applies a line operator along each axis of a cube, mapping side `from` to side `to`.
    fn apply_3d(&self, x: &[f64], from: usize, to: usize, op: impl Fn(&[f64], &mut [f64])) -> Vec<f64> {
        // Axis 2 (fastest).
        let mut a = vec![0.0; from * from * to];
        let mut out_line = vec![0.0; to.max(from)];
        for r in 0..from * from {
            op(&x[r * from..(r + 1) * from], &mut out_line);
            a[r * to..(r + 1) * to].copy_from_slice(&out_line[..to]);
        }
        // Axis 1.
        let mut b = vec![0.0; from * to * to];
        let mut line = vec![0.0; from];
        for i in 0..from {
            for k in 0..to {
                for j in 0..from {
                    line[j] = a[(i * from + j) * to + k];
                }
                op(&line, &mut out_line);
                for j in 0..to {
                    b[(i * to + j) * to + k] = out_line[j];
                }
            }
        }
        // Axis 0.
        let mut c = vec![0.0; to * to * to];
        for j in 0..to {
            for k in 0..to {
                for i in 0..from {
                    line[i] = b[(i * to + j) * to + k];
                }
                op(&line, &mut out_line);
                for i in 0..to {
                    c[(i * to + j) * to + k] = out_line[i];
                }
            }
        }
        c
    }

    /// B-spline coefficients (side `n + 2·ext`) of the interpolant of `f` (side `n`).
    pub fn prefilter_3d(&self, f: &[f64]) -> Vec<f64> {
        self.apply_3d(f, self.n, self.n_coeff(), |a, b| self.prefilter_line(a, b))
    }

    /// Node values (side `n`) from B-spline deposits (side `n + 2·ext`).
    pub fn transpose_3d(&self, b: &[f64]) -> Vec<f64> {
        self.apply_3d(b, self.n_coeff(), self.n, |a, o| self.transpose_line(a, o))
    }

    /// Evaluates the interpolant from coefficients `c` at grid coordinate `x`.
    pub fn eval_line(&self, c: &[f64], x: f64) -> f64 {
        let p = self.degree;
        let half = (p + 1) / 2;
        let b = x.floor() as i64;
        let mut acc = 0.0;
        for k in (b - half as i64 + 1)..=(b + half as i64) {
            let col = k + self.ext as i64;
            if col < 0 || col >= self.n_coeff() as i64 {
                continue;
            }
            acc += c[col as usize] * bspline(p, x - k as f64);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bspline_partition_of_unity() {
        for p in [3, 5] {
            for &t in &[0.0, 0.2, 0.5, 0.9] {
                let s: f64 = (-4..=4).map(|k| bspline(p, t - k as f64)).sum();
                assert!((s - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn not_a_knot_interpolation_reproduces_polynomials() {
        for p in [3, 5] {
            let n = 16;
            let sb = SplineBasis::new(p, n).unwrap();
            for deg in 0..=p as i32 {
                let f: Vec<f64> = (0..n).map(|j| (j as f64 * 0.3 - 1.0).powi(deg)).collect();
                let mut c = vec![0.0; sb.n_coeff()];
                sb.prefilter_line(&f, &mut c);
                for &x in &[0.0f64, 0.37, 3.5, 7.25, 14.9, 15.0] {
                    let exact = (x * 0.3 - 1.0).powi(deg);
                    let got = sb.eval_line(&c, x);
                    assert!((got - exact).abs() < 1e-9 * (1.0 + exact.abs()), "p={p} deg={deg} x={x}");
                }
            }
        }
    }

    #[test]
    fn interpolates_nodes() {
        let sb = SplineBasis::new(3, 12).unwrap();
        let f: Vec<f64> = (0..12).map(|j| ((j * 5) % 7) as f64).collect();
        let mut c = vec![0.0; sb.n_coeff()];
        sb.prefilter_line(&f, &mut c);
        for (j, fj) in f.iter().enumerate() {
            assert!((sb.eval_line(&c, j as f64) - fj).abs() < 1e-12);
        }
    }
}
