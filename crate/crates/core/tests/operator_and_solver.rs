//! Conservation and equilibrium behaviour of the discrete collision operator
//! and the Picard solver on coarse grids.

use boltzkit::collision_operator::{q_apply, slice_moments, QuadConfig, Scheme};
use boltzkit::kernel::KernelParams;
use boltzkit::kinetic_solver::{picard_solve, SolverConfig};
use boltzkit::phase_field::{maxwellian, DistributionField, PhaseGrid};
use boltzkit::sampling::{mixture_family, MixtureSpread};

fn abs_moments(grid: &PhaseGrid, q: &[f64]) -> (f64, f64) {
    let a: Vec<f64> = q.iter().map(|x| x.abs()).collect();
    let (m, _, e) = slice_moments(grid, &a);
    (m, e)
}

fn rel_sup(q: &DistributionField, f: &DistributionField) -> f64 {
    q.max_abs() / f.max_abs()
}

#[test]
fn mixed_pairs_conserve_mass() {
    let grid = PhaseGrid::homogeneous(12, 5.0).unwrap();
    let p = KernelParams::default();
    let fam = mixture_family(grid, 6, 11, &MixtureSpread::default()).unwrap();
    for pair in fam.chunks(2) {
        let q = q_apply(&pair[0], &pair[1], &p, &QuadConfig::default()).unwrap();
        let (m, _, _) = slice_moments(&grid, q.slice(0));
        let (am, _) = abs_moments(&grid, q.slice(0));
        assert!(m.abs() <= 1e-10 * am, "mass defect {m:e} vs {am:e}");
    }
}

#[test]
fn self_collisions_conserve_momentum_and_energy() {
    let grid = PhaseGrid::homogeneous(12, 5.0).unwrap();
    let p = KernelParams::default();
    let f = &mixture_family(grid, 1, 12, &MixtureSpread::default()).unwrap()[0];
    let q = q_apply(f, f, &p, &QuadConfig::default()).unwrap();
    let (m, mom, e) = slice_moments(&grid, q.slice(0));
    let (am, ae) = abs_moments(&grid, q.slice(0));
    assert!(m.abs() <= 1e-10 * am);
    assert!(mom.iter().all(|x| x.abs() <= 1e-10 * am * 5.0));
    assert!(e.abs() <= 1e-10 * ae);
}

#[test]
fn conservative_scatter_conserves_mass_without_projection() {
    let grid = PhaseGrid::homogeneous(8, 4.0).unwrap();
    let p = KernelParams::new(1.0, 0.5, 1.0).unwrap();
    let cfg = QuadConfig {
        scheme: Scheme::Conservative,
        project_invariants: false,
        ..QuadConfig::default()
    };
    let fam = mixture_family(grid, 2, 13, &MixtureSpread::default()).unwrap();
    let q = q_apply(&fam[0], &fam[1], &p, &cfg).unwrap();
    let (m, _, _) = slice_moments(&grid, q.slice(0));
    let (am, _) = abs_moments(&grid, q.slice(0));
    assert!(m.abs() <= 1e-10 * am, "mass defect {m:e} vs {am:e}");
}

#[test]
fn maxwellian_is_a_discrete_near_equilibrium_that_sharpens_with_resolution() {
    let p = KernelParams::default();
    let coarse = PhaseGrid::homogeneous(12, 6.0).unwrap();
    let fine = PhaseGrid::homogeneous(24, 6.0).unwrap();
    let mc = maxwellian(coarse, 1.0, 1.0, [0.0; 3]).unwrap();
    let mf = maxwellian(fine, 1.0, 1.0, [0.0; 3]).unwrap();
    let cfg = QuadConfig::default();
    let rc = rel_sup(&q_apply(&mc, &mc, &p, &cfg).unwrap(), &mc);
    let rf = rel_sup(&q_apply(&mf, &mf, &p, &cfg).unwrap(), &mf);
    assert!(rf < 1e-3, "fine-grid equilibrium residual {rf:e}");
    assert!(rf * 2.0 <= rc, "residual {rc:e} -> {rf:e} does not halve");
}

#[test]
fn homogeneous_maxwellian_stays_put_under_the_picard_iteration() {
    let grid = PhaseGrid::homogeneous(16, 5.0).unwrap();
    let mu = maxwellian(grid, 1.0, 1.0, [0.0; 3]).unwrap();
    let cfg = SolverConfig {
        dt: 1e-3,
        t_final: 5e-3,
        epsilon: 0.0,
        n_picard: 2,
        checkpoint_every: 1,
        ..SolverConfig::default()
    };
    let traj = picard_solve(&mu, &KernelParams::default(), &cfg).unwrap();
    assert_eq!(traj.iterations(), 2);
    assert_eq!(traj.times.len(), 6);
    for r in &traj.rows {
        assert!(r.rel_dev_initial <= 1e-3, "deviation {:e} at t={}", r.rel_dev_initial, r.t);
        assert!(r.mass_h_margin > 0.0 && r.energy_h_margin > 0.0 && r.entropy_h_margin > 0.0);
        assert!(r.min_f >= 0.0);
    }
}

#[test]
fn invalid_solver_inputs_are_rejected() {
    let grid = PhaseGrid::homogeneous(8, 4.0).unwrap();
    let mu = maxwellian(grid, 1.0, 1.0, [0.0; 3]).unwrap();
    let p = KernelParams::default();
    let bad_dt = SolverConfig {
        dt: -1.0,
        ..SolverConfig::default()
    };
    assert!(matches!(picard_solve(&mu, &p, &bad_dt), Err(boltzkit::Error::Validation(_))));
    let negative = mu.scaled(-1.0);
    let cfg = SolverConfig {
        t_final: 2e-3,
        ..SolverConfig::default()
    };
    assert!(matches!(picard_solve(&negative, &p, &cfg), Err(boltzkit::Error::Validation(_))));
}
