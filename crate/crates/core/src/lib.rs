//! Numerical toolbox for the spatially periodic Boltzmann equation with a
//! non-cutoff angular kernel and hard potentials.
//!
//! The crate is organised by role:
//!
//! * [`kernel`] — collision kernel, angular integrals and weight-ladder selection.
//! * [`geometry`] — collision geometry, deviation frames and change-of-variables checks.
//! * [`phase_field`] — discretised distribution functions, moments and the hydrodynamic condition.
//! * [`collision_operator`] — discrete collision operator and its weak forms.
//! * [`norms`] — anisotropic and weighted energy norms.
//! * [`lemma_lab`] — empirical verification of functional inequalities and symbol estimates.
//! * [`kinetic_solver`] — regularised linear problems and the Picard iteration.
//!
//! Supporting numerics live in [`quadrature`], [`interp`], [`sph`], [`spectral`] and [`sampling`].

pub mod collision_operator;
pub mod error;
pub mod geometry;
pub mod interp;
pub mod kernel;
pub mod kinetic_solver;
pub mod lemma_lab;
pub mod norms;
pub mod phase_field;
pub mod quadrature;
pub mod report;
pub mod sampling;
pub mod spectral;
pub mod spline;
pub mod sph;

pub use error::{Error, Result};

/// Japanese bracket `⟨v⟩ = (1 + |v|²)^{1/2}`.
#[inline]
pub fn bracket(v: [f64; 3]) -> f64 {
    (1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// `⟨v⟩^l` computed as `(1 + |v|²)^{l/2}`.
#[inline]
pub fn bracket_pow(v: [f64; 3], l: f64) -> f64 {
    (1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).powf(0.5 * l)
}
