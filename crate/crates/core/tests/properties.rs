//! Property-based invariants of the geometry, norms, fits and reports.

use boltzkit::geometry::{dot, norm, post_collision, rel_discrepancy, CollisionTriple};
use boltzkit::kernel::{lambda, omega, KernelParams, WeightLadder, DEFAULT_TILDE_C0};
use boltzkit::lemma_lab::{chi, dilate_combination, fit_lower, fit_upper, InequalityReport, SampleMargin};
use boltzkit::norms::{fractional_deriv_v, x_norm};
use boltzkit::phase_field::{weighted_l2_sq, DistributionField, PhaseGrid};
use boltzkit::report::{config_digest, json_lines};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = [f64; 3]> {
    [-r..r, -r..r, -r..r]
}

fn unit() -> impl Strategy<Value = [f64; 3]> {
    vec3(1.0)
        .prop_filter("away from the origin", |v| norm(*v) > 1e-3)
        .prop_map(|v| {
            let n = norm(v);
            [v[0] / n, v[1] / n, v[2] / n]
        })
}

fn small_grid() -> PhaseGrid {
    PhaseGrid::homogeneous(8, 4.0).unwrap()
}

fn l2(f: &DistributionField, r: f64) -> f64 {
    weighted_l2_sq(f, r).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn collisions_conserve_momentum_and_energy(v in vec3(5.0), vs in vec3(5.0), sigma in unit()) {
        let t = CollisionTriple::new(v, vs, sigma).unwrap();
        let (a, b) = post_collision(&t);
        for d in 0..3 {
            prop_assert!((a[d] + b[d] - v[d] - vs[d]).abs() < 1e-12);
        }
        let e0 = dot(v, v) + dot(vs, vs);
        let e1 = dot(a, a) + dot(b, b);
        prop_assert!((e0 - e1).abs() <= 1e-12 * e0.max(1.0));
    }

    #[test]
    fn relative_discrepancy_is_symmetric_and_bounded(a in -1e3f64..1e3, b in -1e3f64..1e3) {
        let d = rel_discrepancy(a, b);
        prop_assert_eq!(d, rel_discrepancy(b, a));
        prop_assert!((0.0..=2.0).contains(&d));
        prop_assert_eq!(rel_discrepancy(a, a), 0.0);
    }

    #[test]
    fn smooth_cutoff_is_a_monotone_plateau(x in -1.0f64..3.0, y in -1.0f64..3.0) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!((0.0..=1.0).contains(&chi(x)));
        prop_assert!(chi(lo) >= chi(hi));
    }

    #[test]
    fn upper_fits_grow_with_nested_families(
        base in prop::collection::vec(0.0f64..10.0, 1..20),
        extra in prop::collection::vec(0.0f64..10.0, 0..20),
    ) {
        let mut all = base.clone();
        all.extend(&extra);
        prop_assert!(fit_upper(all.iter().copied()) >= fit_upper(base.iter().copied()));
        prop_assert!(fit_lower(all.iter().copied()) <= fit_lower(base.iter().copied()));
        let max = base.iter().copied().fold(0.0, f64::max);
        prop_assert!(fit_upper(base.iter().copied()) >= max);
    }

    #[test]
    fn report_margin_is_the_worst_sample(margins in prop::collection::vec(-1.0f64..1.0, 1..12)) {
        let samples: Vec<SampleMargin> = margins
            .iter()
            .enumerate()
            .map(|(k, &m)| SampleMargin { label: format!("s{k}"), lhs: 0.0, rhs: m, margin: m })
            .collect();
        let rep = InequalityReport::from_samples("t", samples, Default::default(), 0.0, String::new());
        let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(rep.margin, worst);
        prop_assert_eq!(rep.pass, worst >= 0.0);
    }

    #[test]
    fn digests_are_deterministic(xs in prop::collection::vec(-1e6f64..1e6, 0..16), bump in 1e-3f64..1.0) {
        prop_assert_eq!(config_digest(&xs).unwrap(), config_digest(&xs.clone()).unwrap());
        prop_assert_eq!(json_lines(&xs).unwrap(), json_lines(&xs).unwrap());
        if !xs.is_empty() {
            let mut ys = xs.clone();
            ys[0] += bump * (1.0 + ys[0].abs());
            prop_assert_ne!(config_digest(&xs).unwrap(), config_digest(&ys).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn angular_moments_are_monotone_in_the_order(l in 5.0f64..60.0, dl in 0.5f64..20.0) {
        let p = KernelParams::default();
        prop_assert!(lambda(l + dl, &p).unwrap() > lambda(l, &p).unwrap());
        prop_assert!(omega(l + dl, &p).unwrap() < omega(l, &p).unwrap());
    }

    #[test]
    fn weighted_norms_are_homogeneous(seed in 0u64..1000, c in -4.0f64..4.0) {
        let f = dilate_combination(small_grid(), 3, seed);
        let ladder = WeightLadder::from_ell1(7.0, DEFAULT_TILDE_C0, &KernelParams::default());
        let a = x_norm(&f.scaled(c), &ladder).unwrap();
        let b = c.abs() * x_norm(&f, &ladder).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        let a = l2(&f.scaled(c), 3.0);
        prop_assert!((a - c.abs() * l2(&f, 3.0)).abs() <= 1e-12 * a.max(1e-300));
    }

    #[test]
    fn weighted_norms_satisfy_the_triangle_inequality(s1 in 0u64..1000, s2 in 0u64..1000, r in 0.0f64..8.0) {
        let f = dilate_combination(small_grid(), 3, s1);
        let g = dilate_combination(small_grid(), 3, s2);
        let sum = f.axpy(1.0, &g).unwrap();
        prop_assert!(l2(&sum, r) <= (l2(&f, r) + l2(&g, r)) * (1.0 + 1e-12));
    }

    #[test]
    fn spectral_multiplier_of_order_zero_is_the_identity(seed in 0u64..1000) {
        let f = dilate_combination(small_grid(), 2, seed);
        let g = fractional_deriv_v(&f, 0.0, 0.0).unwrap();
        let diff = g.axpy(-1.0, &f).unwrap();
        prop_assert!(diff.max_abs() <= 1e-12 * f.max_abs());
    }

    #[test]
    fn fractional_derivatives_do_not_decrease_the_l2_norm(seed in 0u64..1000, s in 0.05f64..0.95) {
        // Parseval: the multiplier ⟨ξ⟩^s is at least one.
        let f = dilate_combination(small_grid(), 2, seed);
        let g = fractional_deriv_v(&f, s, 0.0).unwrap();
        prop_assert!(l2(&g, 0.0) >= l2(&f, 0.0) * (1.0 - 1e-12));
    }
}
