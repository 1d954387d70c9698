//! Reference values computed independently of the crate (30-digit adaptive
//! quadrature of the defining integrals, and a direct search of the
//! weight-selection constraints) and frozen here.

use boltzkit::collision_operator::cancellation_convolution;
use boltzkit::geometry::{post_collision, CollisionTriple};
use boltzkit::kernel::{a_gamma_s, lambda, omega, select_weights, KernelParams, WeightLadder, DEFAULT_TOL};
use boltzkit::phase_field::{hydro_moments, maxwellian, PhaseGrid};

fn params(gamma: f64, s: f64) -> KernelParams {
    KernelParams::new(gamma, s, 1.0).unwrap()
}

fn assert_rel(got: f64, want: f64, tol: f64) {
    let rel = (got - want).abs() / want.abs();
    assert!(rel <= tol, "got {got:e}, want {want:e}, rel {rel:e}");
}

#[test]
fn coercive_moment_gain_matches_reference_quadrature() {
    let half = params(0.0, 0.5);
    assert_rel(lambda(5.0, &half).unwrap(), 5.060_688_190_426_271_6, 1e-9);
    assert_rel(lambda(16.0, &half).unwrap(), 11.833_519_285_481_094, 1e-9);
    assert_rel(lambda(46.0, &half).unwrap(), 22.753_324_588_030_307, 1e-9);
    assert_rel(lambda(64.0, &half).unwrap(), 27.540_346_388_445_067, 1e-9);
    assert_rel(lambda(8.0, &params(1.0, 0.25)).unwrap(), 11.060_165_834_395_542, 1e-9);
}

#[test]
fn gain_side_remainder_matches_reference_quadrature() {
    let half = params(0.0, 0.5);
    assert_rel(omega(16.0, &half).unwrap(), 1.295_744_762_484_485_3e-3, 1e-9);
    assert_rel(omega(46.0, &half).unwrap(), 1.336_928_076_090_540_9e-8, 1e-9);
    assert_rel(omega(8.0, &params(1.0, 0.25)).unwrap(), 0.101_060_605_790_301_28, 1e-9);
}

#[test]
fn cancellation_constant_matches_reference_quadrature() {
    for (g, s, want) in [
        (0.0, 0.5, 0.741_885_467_413_930_9),
        (1.0, 0.5, 1.067_321_186_745_282_8),
        (0.0, 0.25, 0.659_515_899_161_115_8),
    ] {
        let rec = a_gamma_s(&params(g, s), DEFAULT_TOL).unwrap();
        assert_rel(rec.value, want, 1e-9);
        assert!(rec.tol_achieved <= 1e-8);
    }
}

#[test]
fn weight_selection_matches_direct_search() {
    let p = params(0.0, 0.5);
    let (ladder, c) = select_weights(&p, 1.0, 1.0, 0.125, 0.5).unwrap();
    assert_eq!(ladder.ell1, 15.5);
    assert!(c.all_hold(&p));
    // ρ = 1 + (14s + 7γ)/6 at s = 1/2.
    assert_rel(ladder.rho, 13.0 / 6.0, 1e-14);
    assert_rel(ladder.ell, 39.5, 1e-14);
    assert_rel(ladder.ell0, 46.0, 1e-14);
    assert_eq!(WeightLadder::from_ell1(15.5, 0.125, &p), ladder);
    // Thresholds of the constraints at the selected order.
    assert_rel(c.lambda_threshold, 16.0 * 0.741_885_467_413_930_9, 1e-9);
    assert_rel(c.omega_threshold, 0.125 / 32.0, 1e-15);
    assert_rel(c.ratio_threshold, 1.0 / 256.0, 1e-15);
}

#[test]
fn head_on_collision_rotates_the_relative_velocity() {
    let t = CollisionTriple::new([1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]).unwrap();
    let (vp, vsp) = post_collision(&t);
    for (a, b) in vp.iter().zip([0.0, 0.0, 1.0]) {
        assert!((a - b).abs() < 1e-15);
    }
    for (a, b) in vsp.iter().zip([0.0, 0.0, -1.0]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn convolution_of_a_maxwellian_is_mass_times_constant_for_zero_gamma() {
    let grid = PhaseGrid::homogeneous(12, 5.0).unwrap();
    let mu = maxwellian(grid, 1.0, 1.0, [0.0; 3]).unwrap();
    let p = params(0.0, 0.5);
    let conv = cancellation_convolution(&mu, &p).unwrap();
    let mass = hydro_moments(&mu).mass[0];
    let want = 2.0 * std::f64::consts::PI * 0.741_885_467_413_930_9 * mass;
    for &c in conv.slice(0) {
        assert_rel(c, want, 1e-9);
    }
}

#[test]
fn discrete_maxwellian_has_unit_mass_and_temperature() {
    let grid = PhaseGrid::homogeneous(24, 8.0).unwrap();
    let mu = maxwellian(grid, 1.0, 1.0, [0.0; 3]).unwrap();
    let h = hydro_moments(&mu);
    assert_rel(h.mass[0], 1.0, 1e-6);
    assert_rel(h.energy[0], 3.0, 1e-5);
    // ∫ μ log μ = −(3/2)(1 + log 2π) for the unit Maxwellian.
    let want = -1.5 * (1.0 + (2.0 * std::f64::consts::PI).ln());
    assert_rel(h.entropy[0], want, 1e-5);
}
