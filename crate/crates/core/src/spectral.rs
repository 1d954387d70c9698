//! Three-dimensional discrete Fourier transforms on the velocity cube and the
//! unit torus.
//!
//! Velocity transforms approximate the continuous transform
//! `f̂(ξ) = ∫ f(v) e^{−iξ·v} dv` at `ξ_k = k·π/R`, `k ∈ [−n/2, n/2)³`, by the
//! trapezoid rule. Arrays in "centred" layout store mode `k` at index
//! `k + n/2` along each axis.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::phase_field::PhaseGrid;

/// Forward and inverse plans for cubes of side `n`.
#[derive(Clone)]
pub struct Fft3 {
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft3 {{ n: {} }}", self.n)
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        // Axis 2: contiguous lines.
        plan.process(data);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        // Axis 1.
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    line[j] = data[(i * n + j) * n + k];
                }
                plan.process(&mut line);
                for j in 0..n {
                    data[(i * n + j) * n + k] = line[j];
                }
            }
        }
        // Axis 0.
        for j in 0..n {
            for k in 0..n {
                for i in 0..n {
                    line[i] = data[(i * n + j) * n + k];
                }
                plan.process(&mut line);
                for i in 0..n {
                    data[(i * n + j) * n + k] = line[i];
                }
            }
        }
    }

    /// Unnormalized forward DFT `Σ_j x_j e^{−2πi k·j/n}` in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// Unnormalized inverse DFT `Σ_k X_k e^{+2πi k·j/n}` in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
    }
}

/// Signed mode number of DFT index `i` (`i < n`).
#[inline]
pub fn mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Velocity-space spectral tools bound to one grid.
#[derive(Debug, Clone)]
pub struct VelocitySpectrum {
    pub grid: PhaseGrid,
    pub fft: Fft3,
}

impl VelocitySpectrum {
    pub fn new(grid: &PhaseGrid) -> Self {
        VelocitySpectrum {
            grid: grid.velocity_only(),
            fft: Fft3::new(grid.nv),
        }
    }

    /// Spacing `π/R` of the frequency grid.
    pub fn dxi(&self) -> f64 {
        std::f64::consts::PI / self.grid.r
    }

    /// `f̂` in centred layout.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let n = self.grid.nv;
        let mut data: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.forward(&mut data);
        let h3 = self.grid.dv3();
        let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
        for i in 0..n {
            let ki = mode(i, n);
            for j in 0..n {
                let kj = mode(j, n);
                for k in 0..n {
                    let kk = mode(k, n);
                    // Phase e^{iξ·R} = (−1)^{k₁+k₂+k₃} from the grid origin at −R.
                    let sign = if (ki + kj + kk).rem_euclid(2) == 0 { h3 } else { -h3 };
                    let c = |m: i64| (m + n as i64 / 2) as usize;
                    out[(c(ki) * n + c(kj)) * n + c(kk)] = data[(i * n + j) * n + k] * sign;
                }
            }
        }
        out
    }

    /// Inverse of [`forward`](Self::forward); returns the real part and the
    /// largest discarded imaginary part.
    pub fn inverse(&self, fhat: &[Complex64]) -> (Vec<f64>, f64) {
        let n = self.grid.nv;
        let mut data = vec![Complex64::new(0.0, 0.0); fhat.len()];
        let norm = 1.0 / (self.grid.dv3() * (n * n * n) as f64);
        for i in 0..n {
            let ki = mode(i, n);
            for j in 0..n {
                let kj = mode(j, n);
                for k in 0..n {
                    let kk = mode(k, n);
                    let sign = if (ki + kj + kk).rem_euclid(2) == 0 { norm } else { -norm };
                    let c = |m: i64| (m + n as i64 / 2) as usize;
                    data[(i * n + j) * n + k] = fhat[(c(ki) * n + c(kj)) * n + c(kk)] * sign;
                }
            }
        }
        self.fft.inverse(&mut data);
        let imag = data.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
        (data.into_iter().map(|z| z.re).collect(), imag)
    }

    /// Applies a real radial-or-general multiplier `m(ξ)` to `f`.
    pub fn multiply(&self, f: &[f64], m: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        let n = self.grid.nv;
        let d = self.dxi();
        let mut fh = self.forward(f);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let xi = [
                        (a as f64 - (n / 2) as f64) * d,
                        (b as f64 - (n / 2) as f64) * d,
                        (c as f64 - (n / 2) as f64) * d,
                    ];
                    fh[(a * n + b) * n + c] *= m(xi);
                }
            }
        }
        self.inverse(&fh).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_field::maxwellian_value;

    #[test]
    fn gaussian_transform_matches_closed_form() {
        // h = 1/2 keeps the trapezoid aliasing error below 1e-30.
        let grid = PhaseGrid::homogeneous(32, 8.0).unwrap();
        let sp = VelocitySpectrum::new(&grid);
        let f: Vec<f64> = (0..grid.nv3())
            .map(|iv| maxwellian_value(grid.velocity(iv), 1.0, 1.0, [0.0; 3]))
            .collect();
        let fh = sp.forward(&f);
        let n = 32;
        let d = sp.dxi();
        for &(a, b, c) in &[(16usize, 16usize, 16usize), (17, 16, 16), (18, 19, 13)] {
            let xi2 = [a, b, c]
                .iter()
                .map(|&m| ((m as f64 - 16.0) * d).powi(2))
                .sum::<f64>();
            let exact = (-xi2 / 2.0).exp();
            let got = fh[(a * n + b) * n + c];
            assert!((got.re - exact).abs() < 1e-12 && got.im.abs() < 1e-12, "{got} vs {exact}");
        }
        let (back, imag) = sp.inverse(&fh);
        assert!(imag < 1e-14);
        for (x, y) in back.iter().zip(&f) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
