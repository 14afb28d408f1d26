//! Projected relaxation of S^2-valued fields for the Dirichlet energy with
//! strong or weak anchoring.
//!
//! Two discretizations share the update rule: a masked Cartesian grid
//! ([`DomainGrid`], [`DirectorField`]) and a spherical shell mesh around each
//! particle ([`shell`]). Each update replaces a value by the exact minimizer
//! of the local energy `const - 2 <n, b>` over the sphere, so the total energy
//! never increases.

pub mod field;
pub mod grid;
pub mod shell;
pub mod snapshot;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sph::{AngularGrid, VectorExpansion};
use crate::Vec3;

pub use field::{DirectorField, OuterBc};
pub use grid::{build_grid, CellKind, DomainGrid};

/// Prescribed boundary values on a particle surface, as a function of the
/// outward unit normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryMap {
    Constant { value: Vec3 },
    /// `normalize(n_inf + tilt)`.
    UniformTilt { n_inf: Vec3, tilt: Vec3 },
    /// The hedgehog `w -> w`.
    Radial,
    /// Normalized synthesis of a band-limited expansion.
    Expansion { expansion: VectorExpansion },
}

impl BoundaryMap {
    pub fn eval(&self, w: &Vec3) -> Vec3 {
        match self {
            BoundaryMap::Constant { value } => value.normalize(),
            BoundaryMap::UniformTilt { n_inf, tilt } => (n_inf + tilt).normalize(),
            BoundaryMap::Radial => w.normalize(),
            BoundaryMap::Expansion { expansion } => {
                let table = crate::sph::build_mode_table(expansion.l_max);
                let mut scratch = vec![0.0; table.len()];
                expansion.eval_unchecked(&table, &w.normalize(), &mut scratch).normalize()
            }
        }
    }

    pub fn rotated(&self, r: &nalgebra::Rotation3<f64>) -> Self {
        match self {
            BoundaryMap::Constant { value } => BoundaryMap::Constant { value: r * value },
            BoundaryMap::UniformTilt { n_inf, tilt } => BoundaryMap::UniformTilt {
                n_inf: r * n_inf,
                tilt: r * tilt,
            },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchoringKind {
    StrongDirichlet,
    WeakQuadratic,
}

/// Anchoring of one particle: Dirichlet values, or the surface penalty
/// `weight * int |n - g|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchoringSpec {
    pub kind: AnchoringKind,
    pub map: BoundaryMap,
    #[serde(default)]
    pub weight: f64,
}

impl AnchoringSpec {
    pub fn strong(map: BoundaryMap) -> Self {
        Self {
            kind: AnchoringKind::StrongDirichlet,
            map,
            weight: 0.0,
        }
    }

    pub fn weak(map: BoundaryMap, weight: f64) -> Self {
        Self {
            kind: AnchoringKind::WeakQuadratic,
            map,
            weight,
        }
    }

    pub fn is_strong(&self) -> bool {
        self.kind == AnchoringKind::StrongDirichlet
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == AnchoringKind::WeakQuadratic && !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(Error::invalid(format!(
                "weak anchoring weight must be finite and nonnegative, got {}",
                self.weight
            )));
        }
        match &self.map {
            BoundaryMap::Constant { value } if !(value.norm() > 0.0) => {
                return Err(Error::invalid("constant boundary map must be nonzero"))
            }
            BoundaryMap::UniformTilt { n_inf, tilt } if !((n_inf + tilt).norm() > 0.0) => {
                return Err(Error::invalid("tilt cancels the far-field direction"))
            }
            _ => {}
        }
        let grid = AngularGrid::for_band_limit(8);
        for w in grid.directions() {
            let g = self.map.eval(w);
            if !((g.norm() - 1.0).abs() <= 1e-10) {
                return Err(Error::NonUnit { norm: g.norm() });
            }
        }
        Ok(())
    }

    pub fn rotated(&self, r: &nalgebra::Rotation3<f64>) -> Self {
        Self {
            map: self.map.rotated(r),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxSchedule {
    pub max_sweeps: usize,
    /// Stop once one sweep lowers the energy by less than this.
    pub energy_tol: f64,
    /// Geodesic over-relaxation factor in `(0, 2)`; `1` is plain projected
    /// Gauss–Seidel. Every value in the range keeps each update energy
    /// decreasing.
    pub over_relaxation: f64,
    /// Update same-color cells in parallel (the result does not depend on it).
    pub parallel: bool,
}

impl Default for RelaxSchedule {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            energy_tol: 1e-10,
            over_relaxation: 1.0,
            parallel: false,
        }
    }
}

impl RelaxSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.over_relaxation > 0.0 && self.over_relaxation < 2.0) {
            return Err(Error::invalid(format!(
                "over-relaxation factor must lie in (0, 2), got {}",
                self.over_relaxation
            )));
        }
        if !(self.energy_tol >= 0.0) {
            return Err(Error::invalid("energy tolerance must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxReport {
    pub sweeps: usize,
    /// Energy before the first sweep and after each sweep.
    pub energies: Vec<f64>,
    pub converged: bool,
    /// Updates whose local field vanished and were perturbed.
    pub zero_field_events: usize,
}

impl RelaxReport {
    pub fn final_energy(&self) -> f64 {
        *self.energies.last().unwrap_or(&0.0)
    }
}

/// Size of the deterministic kick applied when the local field vanishes.
pub const ZERO_FIELD_KICK: f64 = 1e-10;

/// Rotates `old` towards `b` by `omega` times the angle between them.
///
/// Returns the new value, the exact decrease of the local energy
/// `-2 <n, b>`, and whether `b` had to be perturbed.
#[inline]
pub fn projected_update(old: &Vec3, b: Vec3, omega: f64) -> (Vec3, f64, bool) {
    let mut b = b;
    let mut kicked = false;
    let mut bn = b.norm();
    if bn == 0.0 || !bn.is_finite() {
        b += Vec3::x() * ZERO_FIELD_KICK;
        bn = b.norm();
        kicked = true;
    }
    let bh = b / bn;
    if omega == 1.0 {
        return (bh, bn * (bh - old).norm_squared(), kicked);
    }
    let c = old.dot(&bh).clamp(-1.0, 1.0);
    let perp = bh - old * c;
    let s = perp.norm();
    if s < 1e-14 {
        return (bh, bn * (bh - old).norm_squared(), kicked);
    }
    let theta = s.atan2(c);
    let phi = omega * theta;
    let new = (old * phi.cos() + perp * (phi.sin() / s)).normalize();
    let decrease = 4.0 * bn * (0.5 * (2.0 - omega) * theta).sin() * (0.5 * phi).sin();
    (new, decrease, kicked)
}
