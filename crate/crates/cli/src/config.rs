//! Configuration files of the subcommands.
//!
//! Every section is optional; missing sections take the documented defaults
//! and the resolved configuration (not the raw file) is what gets digested.

use std::path::Path;

use boltzkit::collision_operator::QuadConfig;
use boltzkit::geometry::{AngularWeight, CovQuad, GaussianBump, Vec3};
use boltzkit::kernel::{KernelParams, WeightLadder, DEFAULT_TILDE_C0};
use boltzkit::kinetic_solver::SolverConfig;
use boltzkit::lemma_lab::{CancellationQuad, SymbolSampleSpec, WeakMomentQuad};
use boltzkit::phase_field::{maxwellian, DistributionField, HydroBounds, PhaseGrid};
use boltzkit::sampling::{mixture_field, perturbed_equilibrium, random_mixture, rng, MaxwellianComponent, MixtureSpread};
use boltzkit::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Reads and parses a JSON configuration; a missing or malformed file is a
/// validation error.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("invalid config {}: {e}", path.display())))
}

/// Loads `path` when given, otherwise the default configuration.
pub fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => load(p),
        None => Ok(T::default()),
    }
}

/// Initial or test field on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Maxwellian {
        density: f64,
        temperature: f64,
        mean: Vec3,
    },
    /// `μ + a(m − μ)(1 + ½cos 2πx₁)` with a seeded mixture `m`.
    Perturbed {
        amplitude: f64,
        /// Defaults to the command-line seed.
        seed: Option<u64>,
    },
    /// Seeded unit-mass Maxwellian mixture.
    Mixture { seed: Option<u64> },
    /// Explicit Maxwellian components.
    Components { components: Vec<MaxwellianComponent> },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Maxwellian {
            density: 1.0,
            temperature: 1.0,
            mean: [0.0; 3],
        }
    }
}

impl FieldSpec {
    pub fn build(&self, grid: PhaseGrid, seed: u64) -> Result<DistributionField> {
        match self {
            FieldSpec::Maxwellian {
                density,
                temperature,
                mean,
            } => maxwellian(grid, *density, *temperature, *mean),
            FieldSpec::Perturbed { amplitude, seed: s } => perturbed_equilibrium(grid, *amplitude, s.unwrap_or(seed)),
            FieldSpec::Mixture { seed: s } => {
                let mut r = rng(s.unwrap_or(seed));
                let comps = random_mixture(&mut r, &MixtureSpread::default());
                mixture_field(grid, &comps)
            }
            FieldSpec::Components { components } => {
                if components.is_empty() {
                    return Err(Error::Validation("a component field needs at least one component".into()));
                }
                mixture_field(grid, components)
            }
        }
    }
}

/// `evolve` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelParams,
    pub grid: PhaseGrid,
    pub solver: SolverConfig,
    /// Overrides `solver.hydro` when present.
    pub hydro: Option<HydroBounds>,
    pub initial: FieldSpec,
    /// Regularisation strengths of `sweep`; `None` is `2^{−6}…2^{−12}`.
    pub epsilons: Option<Vec<f64>>,
    /// Also compute the membership/energy diagnostics (costly).
    pub diagnostics: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kernel: KernelParams::default(),
            grid: PhaseGrid::homogeneous(16, 5.0).expect("valid default grid"),
            solver: SolverConfig::default(),
            hydro: None,
            initial: FieldSpec::default(),
            epsilons: None,
            diagnostics: false,
        }
    }
}

impl RunConfig {
    /// Applies overrides and validates every section.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(h) = self.hydro {
            self.solver.hydro = h;
        }
        self.kernel.validate()?;
        self.grid.validate()?;
        self.solver.validate()?;
        Ok(self)
    }
}

/// `qeval`: `Q(g, f)` on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QevalConfig {
    pub kernel: KernelParams,
    pub grid: PhaseGrid,
    pub quad: QuadConfig,
    pub f: FieldSpec,
    /// Defaults to `f`.
    pub g: Option<FieldSpec>,
}

impl Default for QevalConfig {
    fn default() -> Self {
        QevalConfig {
            kernel: KernelParams::default(),
            grid: PhaseGrid::homogeneous(24, 6.0).expect("valid default grid"),
            quad: QuadConfig::default(),
            f: FieldSpec::default(),
            g: None,
        }
    }
}

/// `norms`: the norm ladder of one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormsConfig {
    pub kernel: KernelParams,
    pub grid: PhaseGrid,
    pub field: FieldSpec,
    pub ell1: f64,
    pub tilde_c0: f64,
    pub sphere_lmax: usize,
}

impl Default for NormsConfig {
    fn default() -> Self {
        NormsConfig {
            kernel: KernelParams::default(),
            grid: PhaseGrid::homogeneous(16, 8.0).expect("valid default grid"),
            field: FieldSpec::default(),
            ell1: 7.0,
            tilde_c0: DEFAULT_TILDE_C0,
            sphere_lmax: 16,
        }
    }
}

/// `geometry-check`: one change-of-variable identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub gamma: f64,
    pub test_function: GaussianBump,
    /// `v*` (cos identity and pre/post) or `v` (sin identity) held fixed.
    pub fixed: Vec3,
    pub weight: AngularWeight,
    /// Resolution of the two single-collision identities.
    pub quad: CovQuad,
    /// Resolution of the pre/post exchange, an eight-dimensional integral.
    pub pre_post_quad: CovQuad,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            gamma: 0.0,
            test_function: GaussianBump {
                amplitude: 1.0,
                center: [0.3, -0.2, 0.1],
                temperature: 1.0,
            },
            fixed: [0.5, 0.0, -0.25],
            weight: AngularWeight::indicator(std::f64::consts::FRAC_PI_8, std::f64::consts::FRAC_PI_2),
            quad: CovQuad {
                tol: 1e-4,
                ..CovQuad::default()
            },
            pre_post_quad: CovQuad {
                n_radial: 12,
                n_dir_theta: 6,
                n_dir_phi: 12,
                n_theta: 8,
                n_phi: 8,
                n_center: 6,
                reach: 6.0,
                tol: 1e-4,
            },
        }
    }
}

/// `verify <name>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub kernel: KernelParams,
    /// `None` picks the per-estimate default grid.
    pub grid: Option<PhaseGrid>,
    pub hydro: HydroBounds,
    pub family_size: usize,
    pub quad: QuadConfig,
    pub cancellation: CancellationQuad,
    pub cancellation_bump: GaussianBump,
    pub moment_quad: WeakMomentQuad,
    pub symbol: SymbolSampleSpec,
    pub eps_list: Vec<f64>,
    /// Ladder base of the interpolation estimates.
    pub ell1: f64,
    pub tilde_c0: f64,
    /// Weight order of the moment and commutator estimates; `None` picks
    /// `ℓ₀` of the selected ladder (moment) or `13/2 + γ + 1/2` (commutator).
    pub l: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            kernel: KernelParams::default(),
            grid: None,
            hydro: HydroBounds::default(),
            family_size: 16,
            quad: QuadConfig::default(),
            cancellation: CancellationQuad::default(),
            cancellation_bump: GaussianBump {
                amplitude: 1.0,
                center: [0.0; 3],
                temperature: 1.0,
            },
            moment_quad: WeakMomentQuad::default(),
            symbol: SymbolSampleSpec::default(),
            eps_list: vec![0.1, 1.0, 10.0],
            ell1: 7.0,
            tilde_c0: DEFAULT_TILDE_C0,
            l: None,
        }
    }
}

impl VerifyConfig {
    pub fn interpolation_ladder(&self) -> WeightLadder {
        WeightLadder::from_ell1(self.ell1, self.tilde_c0, &self.kernel)
    }
}
