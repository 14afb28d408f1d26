use rayon::prelude::*;

use super::grid::{CellKind, DomainGrid};
use super::{projected_update, AnchoringSpec, RelaxReport, RelaxSchedule};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::Vec3;

/// Values on the outer boundary layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterBc {
    /// The far-field direction.
    FarField,
    /// The hedgehog `x / |x|` around the origin.
    Radial,
}

/// Unit vectors on the stored cells of a [`DomainGrid`]; other cells hold
/// the far-field direction and are ignored.
#[derive(Debug, Clone)]
pub struct DirectorField {
    grid: DomainGrid,
    values: Vec<Vec3>,
    n_inf: Vec3,
}

impl DirectorField {
    pub fn new(grid: DomainGrid, n_inf: Vec3) -> Result<Self> {
        let n_inf = crate::sph::unit_direction(&n_inf)?;
        let values = vec![n_inf; grid.len()];
        Ok(Self { grid, values, n_inf })
    }

    /// Takes raw values, normalizing any that are not already unit within
    /// 1e-12; fails on zero or non-finite entries.
    pub fn from_values(grid: DomainGrid, n_inf: Vec3, values: Vec<Vec3>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        let mut field = Self::new(grid, n_inf)?;
        for (idx, v) in values.into_iter().enumerate() {
            if field.grid.kind(idx).is_stored() {
                let nv = v.norm();
                if !(nv > 0.0 && nv.is_finite()) {
                    return Err(Error::Numerical(format!("cell {idx} holds a zero or non-finite vector")));
                }
                field.values[idx] = if (nv - 1.0).abs() <= 1e-12 { v } else { v / nv };
            }
        }
        Ok(field)
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn n_inf(&self) -> Vec3 {
        self.n_inf
    }

    pub fn set(&mut self, idx: usize, v: Vec3) {
        self.values[idx] = v.normalize();
    }

    /// Overwrites every stored cell with samples of `f` at the cell centers.
    pub fn fill<F: VectorField + ?Sized>(&mut self, f: &F) {
        let grid = &self.grid;
        self.values.par_iter_mut().enumerate().for_each(|(idx, v)| {
            if grid.kind(idx).is_stored() {
                let s = f.sample(&grid.center(idx));
                let ns = s.norm();
                if ns > 0.0 && ns.is_finite() {
                    *v = s / ns;
                }
            }
        });
    }

    /// Overwrites the fluid cells only, e.g. to start from a coarser solution.
    pub fn initialize_from<F: VectorField + ?Sized>(&mut self, f: &F) {
        let grid = &self.grid;
        self.values.par_iter_mut().enumerate().for_each(|(idx, v)| {
            if grid.kind(idx) == CellKind::Fluid {
                let s = f.sample(&grid.center(idx));
                let ns = s.norm();
                if ns > 0.0 && ns.is_finite() {
                    *v = s / ns;
                }
            }
        });
    }

    pub fn set_outer(&mut self, bc: OuterBc) {
        for idx in 0..self.grid.len() {
            if self.grid.kind(idx) == CellKind::OuterBoundary {
                self.values[idx] = match bc {
                    OuterBc::FarField => self.n_inf,
                    OuterBc::Radial => self.grid.center(idx).normalize(),
                };
            }
        }
    }

    fn targets(&self, specs: &[AnchoringSpec]) -> Result<Vec<Option<Vec3>>> {
        if specs.len() != self.grid.layout().len() {
            return Err(Error::LengthMismatch {
                expected: self.grid.layout().len(),
                got: specs.len(),
            });
        }
        Ok((0..self.grid.len())
            .map(|idx| {
                let p = self.grid.owner(idx)?;
                Some(specs[p].map.eval(&self.grid.boundary_normal(idx).unwrap()))
            })
            .collect())
    }

    /// Writes Dirichlet data into the strongly anchored boundary cells.
    pub fn apply_strong(&mut self, specs: &[AnchoringSpec]) -> Result<()> {
        let targets = self.targets(specs)?;
        for (idx, g) in targets.iter().enumerate() {
            if let (Some(g), Some(p)) = (g, self.grid.owner(idx)) {
                if specs[p].is_strong() {
                    self.values[idx] = *g;
                }
            }
        }
        Ok(())
    }

    /// `sum over active faces of h |n_a - n_b|^2`.
    pub fn dirichlet_energy(&self) -> f64 {
        let g = &self.grid;
        let n = g.n();
        let strides = [1, n, n * n];
        let h = g.h();
        (0..n)
            .into_par_iter()
            .map(|k| {
                let mut acc = 0.0;
                for j in 0..n {
                    for i in 0..n {
                        let idx = g.index(i, j, k);
                        let c = [i, j, k];
                        for axis in 0..3 {
                            if c[axis] + 1 < n {
                                let m = idx + strides[axis];
                                if g.face_active(idx, m) {
                                    acc += (self.values[idx] - self.values[m]).norm_squared();
                                }
                            }
                        }
                    }
                }
                acc
            })
            .collect::<Vec<_>>()
            .iter()
            .sum::<f64>()
            * h
    }

    /// Strong anchoring contributes 0 when the trace matches (and `+inf`
    /// otherwise); weak anchoring contributes `w sum A_i |n_i - g_i|^2`.
    pub fn anchoring_energy(&self, specs: &[AnchoringSpec]) -> Result<f64> {
        let targets = self.targets(specs)?;
        let mut e = 0.0;
        for (idx, g) in targets.iter().enumerate() {
            let (Some(g), Some(p)) = (g, self.grid.owner(idx)) else {
                continue;
            };
            let d = (self.values[idx] - g).norm_squared();
            if specs[p].is_strong() {
                if d.sqrt() > 1e-10 {
                    return Ok(f64::INFINITY);
                }
            } else {
                e += specs[p].weight * self.grid.area_share(idx) * d;
            }
        }
        Ok(e)
    }

    pub fn total_energy(&self, specs: &[AnchoringSpec]) -> Result<f64> {
        Ok(self.dirichlet_energy() + self.anchoring_energy(specs)?)
    }

    fn is_free(&self, idx: usize, specs: &[AnchoringSpec]) -> bool {
        match self.grid.kind(idx) {
            CellKind::Fluid => true,
            CellKind::ParticleBoundary => !specs[self.grid.owner(idx).unwrap()].is_strong(),
            _ => false,
        }
    }

    /// Sum of active-face neighbors, scaled by `h`, plus the weak anchoring pull.
    #[inline]
    fn local_field(&self, idx: usize, target: Option<Vec3>, weight: f64) -> Vec3 {
        let g = &self.grid;
        let mut b = Vec3::zeros();
        for m in g.neighbors(idx) {
            if g.face_active(idx, m) {
                b += self.values[m];
            }
        }
        b *= g.h();
        if let Some(t) = target {
            b += t * (weight * g.area_share(idx));
        }
        b
    }

    /// Applies one projected update to a free cell and returns the predicted
    /// energy decrease; fixed cells are left alone and return 0.
    pub fn update_cell(&mut self, idx: usize, specs: &[AnchoringSpec], omega: f64) -> Result<f64> {
        if !self.is_free(idx, specs) {
            return Ok(0.0);
        }
        let (target, weight) = match self.grid.owner(idx) {
            Some(p) => (
                Some(specs[p].map.eval(&self.grid.boundary_normal(idx).unwrap())),
                specs[p].weight,
            ),
            None => (None, 0.0),
        };
        let b = self.local_field(idx, target, weight);
        let (v, d, _) = projected_update(&self.values[idx], b, omega);
        self.values[idx] = v;
        Ok(d)
    }

    /// Projected red-black Gauss–Seidel with geodesic over-relaxation.
    pub fn relax(&mut self, specs: &[AnchoringSpec], schedule: &RelaxSchedule) -> Result<RelaxReport> {
        schedule.validate()?;
        for s in specs {
            s.validate()?;
        }
        self.apply_strong(specs)?;
        let targets = self.targets(specs)?;
        let weights: Vec<f64> = specs.iter().map(|s| s.weight).collect();
        let mut colors: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for idx in 0..self.grid.len() {
            if self.is_free(idx, specs) {
                colors[self.grid.color(idx)].push(idx);
            }
        }
        let omega = schedule.over_relaxation;
        let mut energy = self.total_energy(specs)?;
        let mut report = RelaxReport {
            sweeps: 0,
            energies: vec![energy],
            converged: false,
            zero_field_events: 0,
        };
        let weight_of = |idx: usize| self.grid.owner(idx).map_or(0.0, |p| weights[p]);
        let weight_of: Vec<f64> = (0..self.grid.len()).map(weight_of).collect();
        while report.sweeps < schedule.max_sweeps {
            let mut decrease = 0.0;
            for cells in &colors {
                if schedule.parallel {
                    let updates: Vec<(Vec3, f64, bool)> = cells
                        .par_iter()
                        .map(|&idx| {
                            let b = self.local_field(idx, targets[idx], weight_of[idx]);
                            projected_update(&self.values[idx], b, omega)
                        })
                        .collect();
                    for (&idx, (v, d, kicked)) in cells.iter().zip(updates) {
                        self.values[idx] = v;
                        decrease += d;
                        report.zero_field_events += kicked as usize;
                    }
                } else {
                    for &idx in cells {
                        let b = self.local_field(idx, targets[idx], weight_of[idx]);
                        let (v, d, kicked) = projected_update(&self.values[idx], b, omega);
                        self.values[idx] = v;
                        decrease += d;
                        report.zero_field_events += kicked as usize;
                    }
                }
            }
            report.sweeps += 1;
            energy -= decrease;
            report.energies.push(energy);
            if decrease < schedule.energy_tol {
                report.converged = true;
                break;
            }
        }
        *report.energies.last_mut().unwrap() = self.total_energy(specs)?;
        Ok(report)
    }

    /// Gradient of the total energy with respect to each free value, zero
    /// elsewhere.
    pub fn gradient(&self, specs: &[AnchoringSpec]) -> Result<Vec<Vec3>> {
        let targets = self.targets(specs)?;
        let h = self.grid.h();
        Ok((0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                if !self.is_free(idx, specs) {
                    return Vec3::zeros();
                }
                let mut g = Vec3::zeros();
                for m in self.grid.neighbors(idx) {
                    if self.grid.face_active(idx, m) {
                        g += (self.values[idx] - self.values[m]) * (2.0 * h);
                    }
                }
                if let (Some(t), Some(p)) = (targets[idx], self.grid.owner(idx)) {
                    g += (self.values[idx] - t) * (2.0 * specs[p].weight * self.grid.area_share(idx));
                }
                g
            })
            .collect())
    }

    /// `max over fluid cells of |P_n (sum of neighbors)| / h^2`, the tangential
    /// part of the discrete Laplacian.
    pub fn residual(&self) -> f64 {
        let g = &self.grid;
        let h2 = g.h() * g.h();
        (0..g.len())
            .into_par_iter()
            .filter(|&idx| g.kind(idx) == CellKind::Fluid)
            .map(|idx| {
                let n = self.values[idx];
                let s: Vec3 = g.neighbors(idx).map(|m| self.values[m]).sum();
                (s - n * n.dot(&s)).norm() / h2
            })
            .reduce(|| 0.0, f64::max)
    }

    /// `max over stored cells of ||n| - 1|`.
    pub fn unit_defect(&self) -> f64 {
        (0..self.grid.len())
            .filter(|&i| self.grid.kind(i).is_stored())
            .map(|i| (self.values[i].norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

impl VectorField for DirectorField {
    /// Trilinear interpolation over the stored cells, normalized.
    fn sample(&self, x: &Vec3) -> Vec3 {
        let g = &self.grid;
        let n = g.n();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = ((x[a] + g.half_width()) / g.h() - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = (u.floor() as usize).min(n - 2);
            base[a] = i0;
            frac[a] = u - i0 as f64;
        }
        let mut acc = Vec3::zeros();
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let idx = g.index(base[0] + o[0], base[1] + o[1], base[2] + o[2]);
            if !g.kind(idx).is_stored() {
                continue;
            }
            let w: f64 = (0..3)
                .map(|a| if o[a] == 1 { frac[a] } else { 1.0 - frac[a] })
                .product();
            acc += self.values[idx] * w;
        }
        let na = acc.norm();
        if na > 0.0 {
            acc / na
        } else {
            self.n_inf
        }
    }
}
