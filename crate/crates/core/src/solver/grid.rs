use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::SphereLayout;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    Fluid,
    /// Inside a particle and not touching the fluid; carries no unknown.
    Interior,
    /// Inside a particle with a fluid face-neighbor.
    ParticleBoundary,
    /// Outside the domain with a fluid face-neighbor.
    OuterBoundary,
    /// Outside the domain and not touching the fluid.
    Outside,
}

impl CellKind {
    /// Whether the cell carries a value.
    pub fn is_stored(self) -> bool {
        matches!(self, CellKind::Fluid | CellKind::ParticleBoundary | CellKind::OuterBoundary)
    }
}

/// Cell-centered grid on `[-L, L]^3`, with cell `(i, j, k)` at linear index
/// `(k n + j) n + i` and center `-L + (i + 1/2) h`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainGrid {
    n: usize,
    half_width: f64,
    h: f64,
    layout: SphereLayout,
    outer_radius: Option<f64>,
    kinds: Vec<CellKind>,
    /// Owning particle of each particle-boundary cell.
    owner: Vec<u32>,
    /// Quadrature share of each particle-boundary cell in the surface area.
    area: Vec<f64>,
}

/// Builds the masked grid for a particle layout.
///
/// Cells whose center lies in a ball belong to that particle; with an outer
/// radius, cells whose center lies beyond it are outside the domain, and the
/// outermost layer of the box is always outside.
pub fn build_grid(half_width: f64, h: f64, layout: &SphereLayout, outer_radius: Option<f64>) -> Result<DomainGrid> {
    if !(half_width > 0.0 && h > 0.0 && h < half_width) {
        return Err(Error::invalid(format!("bad grid extent L = {half_width}, h = {h}")));
    }
    let n = (2.0 * half_width / h).round() as usize;
    if ((2.0 * half_width / n as f64) - h).abs() > 1e-9 * h {
        return Err(Error::invalid(format!("2L/h = {} is not an integer", 2.0 * half_width / h)));
    }
    if n < 4 || n > 2048 {
        return Err(Error::invalid(format!("{n} cells per axis is out of range")));
    }
    let a = layout.radius();
    for c in layout.centers() {
        if c.amax() + a + 2.0 * h > half_width {
            return Err(Error::Geometry(format!(
                "particle at {c:?} does not fit in the box with two cells of margin"
            )));
        }
        if let Some(r) = outer_radius {
            if c.norm() + a + 2.0 * h > r {
                return Err(Error::Geometry("particle crosses the outer sphere".into()));
            }
        }
    }
    if let Some(d) = layout.min_distance() {
        if d <= 2.0 * a {
            return Err(Error::Geometry("particles overlap".into()));
        }
    }
    if let Some(r) = outer_radius {
        if !(r > 0.0 && r + 2.0 * h <= half_width) {
            return Err(Error::Geometry(format!("outer radius {r} does not fit in the box")));
        }
    }

    let center = |i: usize| -half_width + (i as f64 + 0.5) * h;
    let total = n * n * n;
    let mut kinds = vec![CellKind::Fluid; total];
    let mut owner = vec![u32::MAX; total];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let idx = (k * n + j) * n + i;
                let x = Vec3::new(center(i), center(j), center(k));
                let edge = i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1;
                if edge || outer_radius.map_or(false, |r| x.norm() > r) {
                    kinds[idx] = CellKind::Outside;
                    continue;
                }
                for (p, c) in layout.centers().iter().enumerate() {
                    if (x - c).norm() < a {
                        kinds[idx] = CellKind::Interior;
                        owner[idx] = p as u32;
                    }
                }
            }
        }
    }

    let mut grid = DomainGrid {
        n,
        half_width,
        h,
        layout: layout.clone(),
        outer_radius,
        kinds,
        owner,
        area: vec![0.0; total],
    };
    let mut faces = vec![0usize; total];
    let mut per_particle = vec![0usize; layout.len()];
    let mut promote = Vec::new();
    for idx in 0..total {
        let kind = grid.kinds[idx];
        if kind == CellKind::Fluid {
            continue;
        }
        let f = grid.neighbors(idx).filter(|&m| grid.kinds[m] == CellKind::Fluid).count();
        if f > 0 {
            promote.push(idx);
            faces[idx] = f;
            if kind == CellKind::Interior {
                per_particle[grid.owner[idx] as usize] += f;
            }
        }
    }
    for idx in promote {
        grid.kinds[idx] = match grid.kinds[idx] {
            CellKind::Interior => CellKind::ParticleBoundary,
            _ => CellKind::OuterBoundary,
        };
    }
    let surface = 4.0 * std::f64::consts::PI * a * a;
    for idx in 0..total {
        if grid.kinds[idx] == CellKind::ParticleBoundary {
            let p = grid.owner[idx] as usize;
            grid.area[idx] = surface * faces[idx] as f64 / per_particle[p] as f64;
        }
    }
    Ok(grid)
}

impl DomainGrid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn layout(&self) -> &SphereLayout {
        &self.layout
    }

    pub fn outer_radius(&self) -> Option<f64> {
        self.outer_radius
    }

    pub fn kinds(&self) -> &[CellKind] {
        &self.kinds
    }

    pub fn kind(&self, idx: usize) -> CellKind {
        self.kinds[idx]
    }

    pub fn owner(&self, idx: usize) -> Option<usize> {
        (self.kinds[idx] == CellKind::ParticleBoundary).then(|| self.owner[idx] as usize)
    }

    pub fn area_share(&self, idx: usize) -> f64 {
        self.area[idx]
    }

    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx % n, (idx / n) % n, idx / (n * n))
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + j) * self.n + i
    }

    pub fn center(&self, idx: usize) -> Vec3 {
        let (i, j, k) = self.coords(idx);
        let c = |i: usize| -self.half_width + (i as f64 + 0.5) * self.h;
        Vec3::new(c(i), c(j), c(k))
    }

    /// Red-black color.
    pub fn color(&self, idx: usize) -> usize {
        let (i, j, k) = self.coords(idx);
        (i + j + k) & 1
    }

    /// Face neighbors inside the box.
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.n;
        let (i, j, k) = self.coords(idx);
        let s = [1, n, n * n];
        let c = [i, j, k];
        (0..6).filter_map(move |d| {
            let axis = d / 2;
            if d % 2 == 0 {
                (c[axis] > 0).then(|| idx - s[axis])
            } else {
                (c[axis] + 1 < n).then(|| idx + s[axis])
            }
        })
    }

    /// Whether the face between two neighboring cells enters the energy.
    #[inline]
    pub fn face_active(&self, a: usize, b: usize) -> bool {
        let (ka, kb) = (self.kinds[a], self.kinds[b]);
        ka.is_stored() && kb.is_stored() && (ka == CellKind::Fluid || kb == CellKind::Fluid)
    }

    /// Number of cells whose center lies inside some particle.
    pub fn particle_cell_count(&self) -> usize {
        self.kinds
            .iter()
            .filter(|k| matches!(k, CellKind::Interior | CellKind::ParticleBoundary))
            .count()
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    /// Outward unit normal of the owning particle at a boundary cell.
    pub fn boundary_normal(&self, idx: usize) -> Option<Vec3> {
        let p = self.owner(idx)?;
        let r = self.center(idx) - self.layout.centers()[p];
        let nr = r.norm();
        Some(if nr > 0.0 { r / nr } else { Vec3::z() })
    }
}
