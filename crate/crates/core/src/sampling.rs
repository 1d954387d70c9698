//! Seeded random families used by the verification suites: Maxwellian
//! mixtures, perturbed equilibria and Latin-hypercube designs.
//!
//! Every generator takes an explicit seed and uses ChaCha8, so families are
//! reproducible across platforms and thread counts.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::phase_field::{maxwellian_tail_fraction, maxwellian_value, DistributionField, PhaseGrid, MAX_TAIL_MASS};

/// Seeded generator used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One weighted Maxwellian of a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxwellianComponent {
    pub weight: f64,
    pub temperature: f64,
    pub mean: [f64; 3],
}

/// Ranges for random mixture components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpread {
    pub components: (usize, usize),
    pub temperature: (f64, f64),
    /// Largest component drift speed.
    pub drift: f64,
}

impl Default for MixtureSpread {
    fn default() -> Self {
        MixtureSpread {
            components: (2, 3),
            temperature: (0.6, 1.2),
            drift: 0.6,
        }
    }
}

/// `Σ_c w_c μ_{T_c, u_c}(v)`.
pub fn mixture_value(v: [f64; 3], comps: &[MaxwellianComponent]) -> f64 {
    comps
        .iter()
        .map(|c| maxwellian_value(v, c.weight, c.temperature, c.mean))
        .sum()
}

/// Draws a mixture with unit total weight.
pub fn random_mixture(rng: &mut ChaCha8Rng, spread: &MixtureSpread) -> Vec<MaxwellianComponent> {
    let (lo, hi) = spread.components;
    let n = rng.gen_range(lo..=hi.max(lo));
    let mut comps: Vec<MaxwellianComponent> = (0..n)
        .map(|_| {
            let dir = crate::geometry::random_unit(rng);
            let speed = spread.drift * rng.gen::<f64>();
            MaxwellianComponent {
                weight: 0.2 + rng.gen::<f64>(),
                temperature: rng.gen_range(spread.temperature.0..=spread.temperature.1),
                mean: [dir[0] * speed, dir[1] * speed, dir[2] * speed],
            }
        })
        .collect();
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in &mut comps {
        c.weight /= total;
    }
    comps
}

/// Checks that every component keeps its tail inside the velocity cube.
pub fn check_mixture_fits(grid: &PhaseGrid, comps: &[MaxwellianComponent]) -> Result<()> {
    for c in comps {
        let tail = maxwellian_tail_fraction(grid, c.temperature, c.mean);
        if tail > MAX_TAIL_MASS {
            return invalid(format!(
                "mixture component (T={}, u={:?}) leaves tail mass {tail:.2e} outside the cube",
                c.temperature, c.mean
            ));
        }
    }
    Ok(())
}

/// Spatially homogeneous field of a mixture.
pub fn mixture_field(grid: PhaseGrid, comps: &[MaxwellianComponent]) -> Result<DistributionField> {
    grid.validate()?;
    check_mixture_fits(&grid, comps)?;
    Ok(DistributionField::from_fn(grid, |_, v| mixture_value(v, comps)))
}

/// `count` seeded unit-mass mixtures on `grid`.
pub fn mixture_family(grid: PhaseGrid, count: usize, seed: u64, spread: &MixtureSpread) -> Result<Vec<DistributionField>> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let comps = random_mixture(&mut r, spread);
            mixture_field(grid, &comps)
        })
        .collect()
}

/// `μ + a (m − μ)(1 + ½ cos 2πx₁)` with `μ` the unit Maxwellian and `m`
/// a seeded mixture; homogeneous grids drop the cosine factor.
///
/// For `a ≤ 2/3` the field is nonnegative.
pub fn perturbed_equilibrium(grid: PhaseGrid, amplitude: f64, seed: u64) -> Result<DistributionField> {
    if !(0.0..=2.0 / 3.0).contains(&amplitude) {
        return invalid(format!("perturbation amplitude must lie in [0, 2/3], got {amplitude}"));
    }
    let mut r = rng(seed);
    let comps = random_mixture(&mut r, &MixtureSpread::default());
    grid.validate()?;
    check_mixture_fits(&grid, &comps)?;
    let homogeneous = grid.is_homogeneous();
    Ok(DistributionField::from_fn(grid, |x, v| {
        let mu = maxwellian_value(v, 1.0, 1.0, [0.0; 3]);
        let m = mixture_value(v, &comps);
        let profile = if homogeneous { 1.0 } else { 1.0 + 0.5 * (2.0 * PI * x[0]).cos() };
        mu + amplitude * (m - mu) * profile
    }))
}

/// `n` points of a `dims`-dimensional Latin hypercube in `[0,1)^dims`.
pub fn latin_hypercube(rng: &mut ChaCha8Rng, n: usize, dims: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = (0..dims)
        .map(|_| {
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            perm.into_iter()
                .map(|p| (p as f64 + rng.gen::<f64>()) / n as f64)
                .collect()
        })
        .collect();
    (0..n)
        .map(|i| cols.iter_mut().map(|c| c[i]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_field::hydro_moments;

    #[test]
    fn family_members_have_unit_mass() {
        let grid = PhaseGrid::homogeneous(16, 6.0).unwrap();
        let fam = mixture_family(grid, 16, 7, &MixtureSpread::default()).unwrap();
        assert_eq!(fam.len(), 16);
        for f in &fam {
            let m = hydro_moments(f).mass[0];
            assert!((m - 1.0).abs() < 2e-3, "mass {m}");
            assert!(f.min() >= 0.0);
        }
    }

    #[test]
    fn latin_hypercube_strata_are_filled_once() {
        let mut r = rng(3);
        let pts = latin_hypercube(&mut r, 20, 4);
        for d in 0..4 {
            let mut seen = vec![false; 20];
            for p in &pts {
                let k = (p[d] * 20.0) as usize;
                assert!(!seen[k]);
                seen[k] = true;
            }
        }
    }

    #[test]
    fn seeds_reproduce() {
        let grid = PhaseGrid::new(4, 1, 8, 5.0).unwrap();
        let a = perturbed_equilibrium(grid, 0.1, 11).unwrap();
        let b = perturbed_equilibrium(grid, 0.1, 11).unwrap();
        assert_eq!(a.values, b.values);
        assert!(a.min() >= 0.0);
    }
}
