//! Collision kernel `B(v−v*, σ) = |v−v*|^γ b(cos θ)` and its angular integrals.
//!
//! The angular part is fixed to the canonical member of the admissible class:
//! `sin θ · b(cos θ) = b0 · θ^{−1−2s}` on `(0, π/2]` and `b ≡ 0` on `(π/2, π]`.
//! With that choice every constant entering the moment and weight-ladder
//! estimates is a concrete one-dimensional integral.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quadrature::dyadic_left;

/// Default relative tolerance for the angular integrals.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Physical model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    /// Kinetic exponent, `γ ≥ 0`.
    pub gamma: f64,
    /// Angular singularity order, `0 < s < 1`.
    pub s: f64,
    /// Angular normalisation, `b0 > 0`.
    pub b0: f64,
    /// Angular cutoff used by discrete operators (radians).
    pub theta_min: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            gamma: 0.0,
            s: 0.5,
            b0: 1.0,
            theta_min: 2f64.powi(-7),
        }
    }
}

impl KernelParams {
    pub fn new(gamma: f64, s: f64, b0: f64) -> Result<Self> {
        let p = KernelParams {
            gamma,
            s,
            b0,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return invalid(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return invalid(format!("s must lie in (0,1), got {}", self.s));
        }
        if !(self.b0.is_finite() && self.b0 > 0.0) {
            return invalid(format!("b0 must be positive, got {}", self.b0));
        }
        if !(self.theta_min > 0.0 && self.theta_min < FRAC_PI_2) {
            return invalid(format!(
                "theta_min must lie in (0, pi/2), got {}",
                self.theta_min
            ));
        }
        Ok(())
    }

    /// `sin θ · b(cos θ)`: the angular density against `dθ`.
    #[inline]
    pub fn angular_density(&self, theta: f64) -> f64 {
        if theta <= FRAC_PI_2 {
            self.b0 * theta.powf(-1.0 - 2.0 * self.s)
        } else {
            0.0
        }
    }

    /// Kinetic factor `|z|^γ` (with `0^0 = 1`).
    #[inline]
    pub fn kinetic(&self, r: f64) -> f64 {
        if self.gamma == 0.0 {
            1.0
        } else {
            r.powf(self.gamma)
        }
    }
}

/// Angular kernel `b(cos θ)` for `θ ∈ (0, π]`.
pub fn angular_b(theta: f64, params: &KernelParams) -> Result<f64> {
    if !(theta > 0.0 && theta <= PI) {
        return invalid(format!("theta must lie in (0, pi], got {theta}"));
    }
    if theta > FRAC_PI_2 {
        return Ok(0.0);
    }
    Ok(params.angular_density(theta) / theta.sin())
}

/// Which angular moment to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantKind {
    /// Coercive moment gain `2^γ·2π∫ sinθ b (1 − cos^l(θ/2)) dθ`.
    Lambda,
    /// Gain-side remainder `2^γ·2π∫ sinθ b sin^l(θ/2) dθ`.
    Omega,
    /// Cancellation constant `∫ sinθ b (cos^{−(3+γ)}(θ/2) − 1) dθ`.
    Cancellation,
}

/// JSON record describing one computed constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantRecord {
    pub kind: ConstantKind,
    pub l: Option<f64>,
    pub gamma: f64,
    pub s: f64,
    pub b0: f64,
    pub value: f64,
    pub tol_achieved: f64,
}

/// `1 − cos^l(θ/2)` without cancellation for small θ.
#[inline]
fn one_minus_cos_pow(theta: f64, l: f64) -> f64 {
    let q = (0.25 * theta).sin();
    // ln cos(θ/2) = ln(1 − 2 sin²(θ/4)).
    -(l * (-2.0 * q * q).ln_1p()).exp_m1()
}

/// `cos^{−p}(θ/2) − 1` without cancellation for small θ.
#[inline]
fn inv_cos_pow_minus_one(theta: f64, p: f64) -> f64 {
    let q = (0.25 * theta).sin();
    (-p * (-2.0 * q * q).ln_1p()).exp_m1()
}

/// `λ_l` or `ω_l`, computed without angular cutoff.
pub fn angular_constant(
    kind: ConstantKind,
    l: f64,
    params: &KernelParams,
    tol: f64,
) -> Result<ConstantRecord> {
    params.validate()?;
    if !(tol > 0.0 && tol < 1.0) {
        return invalid(format!("tol must lie in (0,1), got {tol}"));
    }
    let prefactor = 2f64.powf(params.gamma) * 2.0 * PI;
    let integral = match kind {
        ConstantKind::Lambda => {
            if !(l > 0.0 && l.is_finite()) {
                return invalid(format!("lambda_l needs l > 0, got {l}"));
            }
            let f = |t: f64| params.angular_density(t) * one_minus_cos_pow(t, l);
            dyadic_left(&f, FRAC_PI_2, tol)?
        }
        ConstantKind::Omega => {
            if !(l > 2.0 * params.s && l.is_finite()) {
                return invalid(format!(
                    "omega_l is finite only for l > 2s = {}, got {l}",
                    2.0 * params.s
                ));
            }
            let f = |t: f64| params.angular_density(t) * (l * (0.5 * t).sin().ln()).exp();
            dyadic_left(&f, FRAC_PI_2, tol)?
        }
        ConstantKind::Cancellation => {
            return invalid("use a_gamma_s for the cancellation constant");
        }
    };
    Ok(ConstantRecord {
        kind,
        l: Some(l),
        gamma: params.gamma,
        s: params.s,
        b0: params.b0,
        value: prefactor * integral.value,
        tol_achieved: integral.rel_err(),
    })
}

/// Convenience wrapper returning `λ_l` at the default tolerance.
pub fn lambda(l: f64, params: &KernelParams) -> Result<f64> {
    Ok(angular_constant(ConstantKind::Lambda, l, params, DEFAULT_TOL)?.value)
}

/// Convenience wrapper returning `ω_l` at the default tolerance.
pub fn omega(l: f64, params: &KernelParams) -> Result<f64> {
    Ok(angular_constant(ConstantKind::Omega, l, params, DEFAULT_TOL)?.value)
}

/// `A_{γ,s} = ∫_0^{π/2} sinθ b(cosθ) (cos^{−(3+γ)}(θ/2) − 1) dθ`.
///
/// This is the θ-integral only; the constant multiplying the convolution in
/// the cancellation identity over the full sphere is `2π·A_{γ,s}`.
pub fn a_gamma_s(params: &KernelParams, tol: f64) -> Result<ConstantRecord> {
    params.validate()?;
    let p = 3.0 + params.gamma;
    let f = |t: f64| params.angular_density(t) * inv_cos_pow_minus_one(t, p);
    let integral = dyadic_left(&f, FRAC_PI_2, tol)?;
    Ok(ConstantRecord {
        kind: ConstantKind::Cancellation,
        l: None,
        gamma: params.gamma,
        s: params.s,
        b0: params.b0,
        value: integral.value,
        tol_achieved: integral.rel_err(),
    })
}

/// Polynomial weight exponents of the moment/energy functional hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightLadder {
    pub ell1: f64,
    pub ell: f64,
    pub ell0: f64,
    pub rho: f64,
    pub tilde_c0: f64,
}

impl WeightLadder {
    /// Ladder built from `ell1` by the fixed arithmetic relations.
    pub fn from_ell1(ell1: f64, tilde_c0: f64, params: &KernelParams) -> Self {
        let rho = ladder_rho(params);
        let ell = 2.0 * ell1 + 2.0 + params.gamma + 3.0 * rho;
        let ell0 = ell + 3.0 + 7.0 * params.s + 2.0 * params.gamma;
        WeightLadder {
            ell1,
            ell,
            ell0,
            rho,
            tilde_c0,
        }
    }
}

/// Radius `L ≥ 1` of the moment and energy balls confining the iterates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BigL {
    pub value: f64,
}

impl BigL {
    pub fn new(value: f64) -> Result<Self> {
        if !(value >= 1.0 && value.is_finite()) {
            return invalid(format!("L must be finite and >= 1, got {value}"));
        }
        Ok(BigL { value })
    }
}

/// Weight discount per spatial derivative, `ρ = 1 + (14s + 7γ)/6`.
pub fn ladder_rho(params: &KernelParams) -> f64 {
    1.0 + (14.0 * params.s + 7.0 * params.gamma) / 6.0
}

/// Default moment-coercivity constant used before any fit is available.
pub const DEFAULT_TILDE_C0: f64 = 0.125;

/// Evaluation of the four weight-selection constraints at a candidate `ell1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderConstraints {
    pub ell1: f64,
    pub lambda_2ell1: f64,
    pub lambda_threshold: f64,
    pub omega_shifted: f64,
    pub omega_threshold: f64,
    pub ratio: f64,
    pub ratio_threshold: f64,
}

impl LadderConstraints {
    pub fn all_hold(&self, params: &KernelParams) -> bool {
        self.ell1 > 6.5 + params.gamma
            && self.lambda_2ell1 >= self.lambda_threshold
            && self.omega_shifted <= self.omega_threshold
            && self.ratio <= self.ratio_threshold
    }
}

/// Evaluates the constraints at `ell1` with freshly computed constants.
pub fn ladder_constraints(
    ell1: f64,
    params: &KernelParams,
    m0: f64,
    big_m0: f64,
    tilde_c0: f64,
    a_const: f64,
) -> Result<LadderConstraints> {
    let g = params.gamma;
    let lambda_2ell1 = lambda(2.0 * ell1, params)?;
    let omega_shifted = omega(ell1 - 2.0 - g, params)?;
    let ratio = omega(ell1, params)? / lambda(ell1, params)?;
    Ok(LadderConstraints {
        ell1,
        lambda_2ell1,
        lambda_threshold: 2f64.powf(4.0 + 3.0 * g) * (big_m0 / m0) * a_const,
        omega_shifted,
        omega_threshold: tilde_c0 / (32.0 * big_m0),
        ratio,
        ratio_threshold: m0 / (4f64.powf(4.0 + g) * big_m0),
    })
}

/// Smallest `ell1` on the grid `13/2 + γ + k·step` (k ≥ 1) satisfying all
/// weight-selection constraints, with the derived ladder.
pub fn select_weights(
    params: &KernelParams,
    m0: f64,
    big_m0: f64,
    tilde_c0: f64,
    step: f64,
) -> Result<(WeightLadder, LadderConstraints)> {
    params.validate()?;
    if !(m0 > 0.0 && big_m0 >= m0 && big_m0.is_finite()) {
        return invalid(format!("need 0 < m0 <= M0, got m0={m0}, M0={big_m0}"));
    }
    if !(tilde_c0 > 0.0 && tilde_c0 <= 0.25) {
        return invalid(format!("tilde_c0 must lie in (0, 1/4], got {tilde_c0}"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return invalid(format!("search step must be positive, got {step}"));
    }
    let a_const = a_gamma_s(params, DEFAULT_TOL)?.value;
    let start = 6.5 + params.gamma;
    for k in 1..20_000 {
        let ell1 = start + k as f64 * step;
        let c = ladder_constraints(ell1, params, m0, big_m0, tilde_c0, a_const)?;
        if c.all_hold(params) {
            return Ok((WeightLadder::from_ell1(ell1, tilde_c0, params), c));
        }
    }
    invalid("weight-ladder search exhausted its grid without satisfying the constraints")
}

/// Log-log fit of the angular moments against `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub l_values: Vec<f64>,
    pub lambda: Vec<f64>,
    pub omega: Vec<f64>,
    /// Slope of `ln λ_l` against `ln l`.
    pub lambda_slope: f64,
    pub lambda_residual: f64,
    /// Slope of `ln(l ω_l)` against `l`.
    pub omega_slope: f64,
    pub omega_residual: f64,
    /// `l·ω_l·2^{l/2}` at each sample.
    pub omega_scaled: Vec<f64>,
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, a, rms residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

pub fn asymptotic_report(params: &KernelParams, l_values: &[f64]) -> Result<AsymptoticReport> {
    if l_values.len() < 4 {
        return invalid("asymptotic fit needs at least 4 values of l");
    }
    if l_values.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("l values must be strictly increasing");
    }
    if l_values[l_values.len() - 1] / l_values[0] < 8.0 {
        return invalid("l values must span a factor of at least 8");
    }
    let mut lam = Vec::with_capacity(l_values.len());
    let mut om = Vec::with_capacity(l_values.len());
    for &l in l_values {
        lam.push(lambda(l, params)?);
        om.push(omega(l, params)?);
    }
    let lx: Vec<f64> = l_values.iter().map(|l| l.ln()).collect();
    let ly: Vec<f64> = lam.iter().map(|v| v.ln()).collect();
    let (lambda_slope, _, lambda_residual) = linear_fit(&lx, &ly);
    let oy: Vec<f64> = l_values.iter().zip(&om).map(|(l, w)| (l * w).ln()).collect();
    let (omega_slope, _, omega_residual) = linear_fit(l_values, &oy);
    let omega_scaled = l_values
        .iter()
        .zip(&om)
        .map(|(l, w)| l * w * 2f64.powf(0.5 * l))
        .collect();
    Ok(AsymptoticReport {
        l_values: l_values.to_vec(),
        lambda: lam,
        omega: om,
        lambda_slope,
        lambda_residual,
        omega_slope,
        omega_residual,
        omega_scaled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angular_b_at_right_angle() {
        let p = KernelParams::new(0.0, 0.5, 1.0).unwrap();
        let b = angular_b(FRAC_PI_2, &p).unwrap();
        assert!((b - 4.0 / (PI * PI)).abs() < 1e-15);
        assert_eq!(angular_b(2.0, &p).unwrap(), 0.0);
        assert!(angular_b(0.0, &p).is_err());
    }

    #[test]
    fn ladder_arithmetic() {
        let p = KernelParams::new(0.0, 0.5, 1.0).unwrap();
        assert!((ladder_rho(&p) - 13.0 / 6.0).abs() < 1e-15);
        let w = WeightLadder::from_ell1(10.0, 0.125, &p);
        assert!((w.ell - (22.0 + 6.5)).abs() < 1e-12);
        assert!((w.ell0 - (w.ell + 6.5)).abs() < 1e-12);
    }

    #[test]
    fn stable_small_angle_forms() {
        let t = 1e-6;
        let direct = 1.0 - (0.5 * t as f64).cos().powf(3.0);
        let stable = one_minus_cos_pow(t, 3.0);
        assert!((stable - 3.0 * t * t / 8.0).abs() < 1e-22);
        assert!(direct.is_finite());
        assert!((inv_cos_pow_minus_one(t, 3.0) - 3.0 * t * t / 8.0).abs() < 1e-22);
    }
}
