//! One-dimensional quadrature rules.
//!
//! Everything here is built from Gauss–Legendre rules: fixed-order rules on
//! an interval, an adaptive bisection driver, and a dyadic driver for
//! integrands with an integrable singularity at the left endpoint.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use crate::error::{numerical, Result};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Tricomi's initial guess, refined by Newton.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_and_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_and_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared cached rule of order `n`.
    pub fn cached(n: usize) -> std::sync::Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, std::sync::Arc<GaussLegendre>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| std::sync::Arc::new(GaussLegendre::new(n)))
            .clone()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let xs = self.nodes.iter().map(|&t| c + h * t).collect();
        let ws = self.weights.iter().map(|&w| h * w).collect();
        (xs, ws)
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut acc = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + h * t);
        }
        acc * h
    }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    /// Estimated absolute error.
    pub abs_err: f64,
}

impl Integral {
    pub fn rel_err(&self) -> f64 {
        if self.value == 0.0 {
            self.abs_err
        } else {
            self.abs_err / self.value.abs()
        }
    }
}

const PANEL_ORDER: usize = 12;
const MAX_DEPTH: usize = 48;

/// Adaptive bisection with a fixed Gauss–Legendre rule per panel.
///
/// A panel is accepted when the one-panel and two-half-panel estimates agree
/// to `max(rtol·|panel|, atol)`.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rtol: f64, atol: f64) -> Integral {
    let gl = GaussLegendre::cached(PANEL_ORDER);
    let whole = gl.integrate(f, a, b);
    adaptive_rec(f, &gl, a, b, whole, rtol, atol, 0)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_rec<F: Fn(f64) -> f64>(
    f: &F,
    gl: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    rtol: f64,
    atol: f64,
    depth: usize,
) -> Integral {
    let m = 0.5 * (a + b);
    let left = gl.integrate(f, a, m);
    let right = gl.integrate(f, m, b);
    let refined = left + right;
    let err = (refined - whole).abs();
    if err <= (rtol * refined.abs()).max(atol) || depth >= MAX_DEPTH {
        return Integral {
            value: refined,
            abs_err: err,
        };
    }
    let l = adaptive_rec(f, gl, a, m, left, rtol, 0.5 * atol, depth + 1);
    let r = adaptive_rec(f, gl, m, b, right, rtol, 0.5 * atol, depth + 1);
    Integral {
        value: l.value + r.value,
        abs_err: l.abs_err + r.abs_err,
    }
}

/// Integral over `(0, b]` of a function with an integrable singularity at 0.
///
/// The interval is cut into dyadic panels `[b 2^{-k-1}, b 2^{-k}]`; each panel
/// is integrated adaptively and panels are added until the geometric tail
/// estimate drops below `rtol` relative to the running total.
pub fn dyadic_left<F: Fn(f64) -> f64>(f: &F, b: f64, rtol: f64) -> Result<Integral> {
    let mut total = 0.0;
    let mut err = 0.0;
    let mut hi = b;
    let mut prev: Option<f64> = None;
    for _ in 0..1100 {
        let lo = 0.5 * hi;
        let panel = adaptive(f, lo, hi, 0.1 * rtol, 0.0);
        total += panel.value;
        err += panel.abs_err;
        let cur = panel.value.abs();
        if let Some(p) = prev {
            if p > 0.0 {
                let ratio = cur / p;
                if ratio < 0.999 {
                    let tail = cur * ratio / (1.0 - ratio);
                    if tail <= rtol * total.abs() * 0.5 {
                        return Ok(Integral {
                            value: total + tail,
                            abs_err: err + tail,
                        });
                    }
                }
            } else if cur == 0.0 {
                return Ok(Integral {
                    value: total,
                    abs_err: err,
                });
            }
        }
        prev = Some(cur);
        hi = lo;
        if hi < f64::MIN_POSITIVE {
            break;
        }
    }
    numerical("dyadic quadrature failed to converge near the singular endpoint")
}

/// Gauss–Legendre rule in the logarithmic variable `u = ln θ` on `[a, b]`,
/// returned as nodes `θ_i` and weights `w_i` for `∫ F(θ) dθ ≈ Σ w_i F(θ_i)`.
pub fn log_gauss(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let gl = GaussLegendre::cached(n);
    let (us, ws) = gl.on_interval(a.ln(), b.ln());
    let thetas: Vec<f64> = us.iter().map(|u| u.exp()).collect();
    let weights = thetas.iter().zip(&ws).map(|(t, w)| t * w).collect();
    (thetas, weights)
}

/// Uniform periodic nodes `2π(k + 1/2)/n` with equal weights `2π/n`.
pub fn periodic_nodes(n: usize) -> (Vec<f64>, f64) {
    let w = 2.0 * PI / n as f64;
    ((0..n).map(|k| (k as f64 + 0.5) * w).collect(), w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(7);
        for p in 0..14 {
            let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
            let got = gl.integrate(|x| x.powi(p), -1.0, 1.0);
            assert!((got - exact).abs() < 1e-13, "degree {p}: {got} vs {exact}");
        }
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let r = adaptive(&|x: f64| (-(x - 0.3).powi(2) * 1e4).exp(), 0.0, 1.0, 1e-12, 0.0);
        let exact = (PI / 1e4).sqrt();
        assert!((r.value - exact).abs() / exact < 1e-10);
    }

    #[test]
    fn dyadic_left_handles_power_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2 and ∫_0^1 x^{-0.9} dx = 10.
        let r = dyadic_left(&|x: f64| x.powf(-0.5), 1.0, 1e-11).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{}", r.value);
        let r = dyadic_left(&|x: f64| x.powf(-0.9), 1.0, 1e-10).unwrap();
        assert!((r.value - 10.0).abs() / 10.0 < 1e-8, "{}", r.value);
    }

    #[test]
    fn log_gauss_is_exact_for_powers_in_log_variable() {
        let (t, w) = log_gauss(1e-3, 1.0, 16);
        let got: f64 = t.iter().zip(&w).map(|(x, w)| w * x.powf(-0.5)).sum();
        let exact = 2.0 * (1.0 - 1e-3f64.sqrt());
        assert!((got - exact).abs() < 1e-10);
    }
}
