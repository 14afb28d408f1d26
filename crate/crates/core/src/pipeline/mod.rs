//! End-to-end workflows: single-particle energies and torques, the glued
//! competitor, measured pair energies, and the expansion sweep.
//!
//! Everything runs in rescaled units: particle `j` occupies the unit ball in
//! the coordinates `y = (x - x_j) / rho`, and energies are the physical
//! Dirichlet energy divided by `rho`.

pub mod composite;
pub mod linear;
pub mod poisson;
pub mod single;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::SphereLayout;
use crate::field::VectorField;
use crate::solver::shell::RadialMesh;
use crate::solver::{build_grid, DirectorField, RelaxSchedule};
use crate::Vec3;

pub use composite::{build_competitor, measure_min_energy, projection_correction, CompositeState, Competitor};
pub use linear::{verify_linear, LinearRow, LinearStudy};
pub use poisson::{poisson_check, PoissonCase, PoissonCheck};
pub use single::{solve_single_particle, SingleParticleResult};
pub use sweep::{
    competitor_row, prediction_row, run_expansion_sweep, solve_singles, CompetitorRow, ExpansionReport, ExpansionRow,
    PredictionRow, SweepInput,
};

/// Discretization and solver settings shared by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Band limit of the angular grid on each shell.
    pub l_ang: usize,
    /// Last shell radius of the single-particle mesh.
    pub r_out: f64,
    /// Largest ratio between consecutive shell radii on the coarse mesh.
    pub radial_ratio: f64,
    /// Repeat on the mesh with halved log-spacing and extrapolate.
    pub richardson: bool,
    pub energy_tol: f64,
    pub over_relaxation: f64,
    pub max_sweeps: usize,
    /// Far-field fit window for single-particle torques.
    pub fit_window: [f64; 2],
    /// Gluing radius; `rho^(1/3)` when absent.
    pub sigma: Option<f64>,
    /// Gauss nodes in `t = sigma / r` for the projection correction.
    pub projection_nodes: usize,
    /// Band limit of the angular rule for the projection correction.
    pub projection_l: usize,
    /// Spacing and half-width of Cartesian snapshot exports.
    pub h: f64,
    pub half_width: f64,
    /// Random initial guess on the coarse level instead of `n_inf`.
    pub init_seed: Option<u64>,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            l_ang: 8,
            r_out: 64.0,
            radial_ratio: 1.05,
            richardson: true,
            energy_tol: 1e-14,
            over_relaxation: 1.95,
            max_sweeps: 200_000,
            fit_window: [10.0, 40.0],
            sigma: None,
            projection_nodes: 24,
            projection_l: 12,
            h: 0.25,
            half_width: 8.0,
            init_seed: None,
        }
    }
}

impl Numerics {
    /// All violations, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.l_ang < 1 || self.l_ang > 24 {
            v.push(format!("numerics.l_ang = {} must lie in 1..=24", self.l_ang));
        }
        if !(self.r_out > 2.0 && self.r_out.is_finite()) {
            v.push(format!("numerics.r_out = {} must exceed 2", self.r_out));
        }
        if !(self.radial_ratio > 1.0 && self.radial_ratio <= 2.0) {
            v.push(format!("numerics.radial_ratio = {} must lie in (1, 2]", self.radial_ratio));
        }
        if !(self.energy_tol >= 0.0) {
            v.push("numerics.energy_tol must be nonnegative".into());
        }
        if !(self.over_relaxation > 0.0 && self.over_relaxation < 2.0) {
            v.push(format!("numerics.over_relaxation = {} must lie in (0, 2)", self.over_relaxation));
        }
        if self.max_sweeps == 0 {
            v.push("numerics.max_sweeps must be positive".into());
        }
        let [lo, hi] = self.fit_window;
        if !(lo >= 1.0 && hi / lo >= 1.5 && hi <= self.r_out) {
            v.push(format!(
                "numerics.fit_window = [{lo}, {hi}] must satisfy 1 <= lo, hi/lo >= 1.5, hi <= r_out"
            ));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s < 0.5) {
                v.push(format!("numerics.sigma = {s} must lie in (0, 1/2)"));
            }
        }
        if self.projection_nodes < 2 || self.projection_l < 1 {
            v.push("numerics.projection_nodes must be >= 2 and projection_l >= 1".into());
        }
        if !(self.h > 0.0 && self.half_width > 2.0 * self.h) {
            v.push(format!("numerics.h = {} and half_width = {} are inconsistent", self.h, self.half_width));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn schedule(&self) -> RelaxSchedule {
        RelaxSchedule {
            max_sweeps: self.max_sweeps,
            energy_tol: self.energy_tol,
            over_relaxation: self.over_relaxation,
            parallel: false,
        }
    }

    /// Gluing radius for a given particle radius.
    pub fn sigma_for(&self, rho: f64) -> f64 {
        self.sigma.unwrap_or_else(|| rho.cbrt())
    }

    /// Coarse radial mesh with a node at each cutoff `sigma / rho`.
    pub fn radial_mesh(&self, rhos: &[f64]) -> Result<RadialMesh> {
        let cuts: Vec<f64> = rhos.iter().map(|&r| self.sigma_for(r) / r).collect();
        for (&rho, &cut) in rhos.iter().zip(&cuts) {
            if !(cut > 1.5 && cut < self.r_out) {
                return Err(Error::invalid(format!(
                    "cutoff sigma/rho = {cut} for rho = {rho} must lie in (1.5, r_out)"
                )));
            }
        }
        RadialMesh::geometric(1.0, self.r_out, self.radial_ratio, &cuts)
    }

    /// The radial meshes to solve on, coarse first.
    pub fn levels(&self, rhos: &[f64]) -> Result<Vec<RadialMesh>> {
        let coarse = self.radial_mesh(rhos)?;
        Ok(if self.richardson {
            let fine = coarse.refined();
            vec![coarse, fine]
        } else {
            vec![coarse]
        })
    }

    /// Combines per-level values: second-order extrapolation with two
    /// levels, the value itself with one.
    pub fn extrapolate(&self, levels: &[f64]) -> f64 {
        match levels {
            [c, f] => (4.0 * f - c) / 3.0,
            [x] => *x,
            _ => f64::NAN,
        }
    }
}

/// Cutoff radius `lambda = |ln rho| rho^(-1/4)` of the diagnostics.
pub fn diagnostic_radius(rho: f64) -> f64 {
    rho.ln().abs() * rho.powf(-0.25)
}

/// Resamples a field given in rescaled units onto the Cartesian grid
/// `[-half_width, half_width]^3` around the unit particle at the origin.
pub fn cartesian_export(field: &dyn VectorField, n_inf: Vec3, numerics: &Numerics) -> Result<DirectorField> {
    let layout = SphereLayout::general(vec![Vec3::zeros()], 1.0)?;
    let grid = build_grid(numerics.half_width, numerics.h, &layout, None)?;
    let mut out = DirectorField::new(grid, n_inf)?;
    out.fill(field);
    Ok(out)
}
