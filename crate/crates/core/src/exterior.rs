//! Harmonic extensions outside one or several balls of common radius.
//!
//! A field outside the union of `B_sigma(x_j)` is represented as a sum of
//! decaying solid harmonics, one multipole set per sphere:
//!
//! ```text
//! u(x) = sum_j sum_k c_k^j (sigma / |x - x_j|)^(l+1) Phi_k((x - x_j)/|x - x_j|)
//! ```
//!
//! The multipole sets are found by the method of reflections. The remote
//! fields are re-expanded on each target sphere by sampling and a forward
//! transform, so the re-expansion is exact up to the band limit.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sph::{build_mode_table, sup_norms, AngularGrid, ModeTable, SphericalTransform, VectorExpansion};
use crate::Vec3;

const LAYOUT_TOL: f64 = 1e-12;

/// Centers of equal spheres of radius `radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereLayout {
    centers: Vec<Vec3>,
    radius: f64,
}

impl SphereLayout {
    /// A layout in the rescaled regime: pairwise distances at least 2 and
    /// `radius < 1/2`.
    pub fn new(centers: Vec<Vec3>, radius: f64) -> Result<Self> {
        let layout = Self::general(centers, radius)?;
        if radius >= 0.5 {
            return Err(Error::Geometry(format!("sphere radius {radius} must be below 1/2")));
        }
        if let Some(d) = layout.min_distance() {
            if d < 2.0 - LAYOUT_TOL {
                return Err(Error::Geometry(format!(
                    "centers must be at least 2 apart, closest pair is {d}"
                )));
            }
        }
        Ok(layout)
    }

    /// Any layout with a positive radius; contraction is checked by the solver.
    pub fn general(centers: Vec<Vec3>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Geometry(format!("sphere radius must be positive, got {radius}")));
        }
        if centers.iter().any(|c| !c.iter().all(|v| v.is_finite())) {
            return Err(Error::Geometry("non-finite center".into()));
        }
        Ok(Self { centers, radius })
    }

    pub fn centers(&self) -> &[Vec3] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::general(self.centers.clone(), radius)
    }

    pub fn min_distance(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.centers.len() {
            for j in i + 1..self.centers.len() {
                let d = (self.centers[i] - self.centers[j]).norm();
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }

    /// Geometric rate `sigma / (d_min - sigma)` of the reflection iteration.
    pub fn contraction_rate(&self) -> f64 {
        match self.min_distance() {
            Some(d) => self.radius / (d - self.radius),
            None => 0.0,
        }
    }

    pub fn is_exterior(&self, x: &Vec3) -> bool {
        self.centers.iter().all(|c| (x - c).norm() >= self.radius)
    }
}

/// Evaluates `(sigma/r)^(l+1) Phi_k(w)` for `rel = r w`, writing into `out`.
pub fn decaying_basis(table: &ModeTable, sigma: f64, rel: &Vec3, out: &mut [f64]) {
    let r = rel.norm();
    table.eval_all_unchecked(&(rel / r), out);
    let t = sigma / r;
    let mut p = t;
    for l in 0..=table.l_max() {
        for v in &mut out[l * l..(l + 1) * (l + 1)] {
            *v *= p;
        }
        p *= t;
    }
}

/// `sum_k a_k (sigma/r)^(l+1) Phi_k(w)` for `point = center + r w`.
pub fn extend_exterior(expansion: &VectorExpansion, point: &Vec3) -> Result<Vec3> {
    let rel = point - expansion.center;
    let r = rel.norm();
    if r < expansion.radius * (1.0 - 1e-12) {
        return Err(Error::Geometry(format!(
            "point at distance {r} lies inside the sphere of radius {}",
            expansion.radius
        )));
    }
    let table = build_mode_table(expansion.l_max);
    let mut basis = vec![0.0; table.len()];
    decaying_basis(&table, expansion.radius, &rel, &mut basis);
    Ok(expansion
        .coeffs
        .iter()
        .zip(&basis)
        .fold(Vec3::zeros(), |acc, (a, p)| acc + a * *p))
}

/// Exact Dirichlet energy `sigma sum_k (l+1) |a_k|^2` of the exterior
/// extension of `expansion`.
pub fn single_sphere_energy(expansion: &VectorExpansion, sigma: f64) -> f64 {
    let mut e = 0.0;
    for l in 0..=expansion.l_max {
        let s: f64 = expansion.coeffs[l * l..(l + 1) * (l + 1)]
            .iter()
            .map(|a| a.norm_squared())
            .sum();
        e += (l as f64 + 1.0) * s;
    }
    sigma * e
}

/// Two-term asymptotic energy of the multi-sphere extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPrediction {
    pub value: f64,
    /// `sigma^3 sum_j ||a^j||^2`, the size of the neglected remainder.
    pub error_scale: f64,
}

pub fn predicted_multi_energy(expansions: &[VectorExpansion], layout: &SphereLayout) -> Result<EnergyPrediction> {
    if expansions.len() != layout.len() {
        return Err(Error::LengthMismatch {
            expected: layout.len(),
            got: expansions.len(),
        });
    }
    let sigma = layout.radius();
    let mut value: f64 = expansions.iter().map(|e| single_sphere_energy(e, sigma)).sum();
    let centers = layout.centers();
    for i in 0..centers.len() {
        for j in 0..centers.len() {
            if i != j {
                let d = (centers[i] - centers[j]).norm();
                value -= sigma * sigma * expansions[i].coeffs[0].dot(&expansions[j].coeffs[0]) / d;
            }
        }
    }
    let error_scale = sigma.powi(3) * expansions.iter().map(|e| e.norm_sq()).sum::<f64>();
    Ok(EnergyPrediction { value, error_scale })
}

/// Sweep ordering of the reflection iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ReflectionMode {
    /// All spheres corrected from the previous iterate, in parallel.
    #[default]
    Jacobi,
    /// Spheres corrected in index order using the freshest values.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectOptions {
    pub l_max: usize,
    pub tol: f64,
    pub max_iterations: usize,
    pub mode: ReflectionMode,
}

impl Default for ReflectOptions {
    fn default() -> Self {
        Self {
            l_max: 16,
            tol: 1e-12,
            max_iterations: 200,
            mode: ReflectionMode::Jacobi,
        }
    }
}

/// Re-expansion operators between the spheres of a layout.
///
/// `blocks[i][j]` maps the multipole set of sphere `j` to the band-limited
/// trace of its field on sphere `i` (scalar matrix acting on each component).
#[derive(Debug, Clone)]
pub struct ReexpansionOperators {
    transform: SphericalTransform,
    layout: SphereLayout,
    blocks: Vec<Vec<Option<DMatrix<f64>>>>,
}

impl ReexpansionOperators {
    pub fn new(layout: &SphereLayout, l_max: usize) -> Result<Self> {
        let transform = SphericalTransform::new(l_max, AngularGrid::for_band_limit(l_max))?;
        Self::with_transform(layout, transform)
    }

    pub fn with_transform(layout: &SphereLayout, transform: SphericalTransform) -> Result<Self> {
        let n = layout.len();
        if let Some(d) = layout.min_distance() {
            if d <= 2.0 * layout.radius() {
                return Err(Error::Geometry(format!(
                    "spheres of radius {} overlap (closest centers {d} apart)",
                    layout.radius()
                )));
            }
            if layout.contraction_rate() >= 1.0 {
                return Err(Error::Geometry(format!(
                    "reflection iteration is not contractive (rate {})",
                    layout.contraction_rate()
                )));
            }
        }
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        let built: Vec<((usize, usize), DMatrix<f64>)> = pairs
            .par_iter()
            .map(|&(i, j)| ((i, j), Self::block(&transform, layout, i, j)))
            .collect();
        let mut blocks = vec![vec![None; n]; n];
        for ((i, j), m) in built {
            blocks[i][j] = Some(m);
        }
        Ok(Self {
            transform,
            layout: layout.clone(),
            blocks,
        })
    }

    fn block(tr: &SphericalTransform, layout: &SphereLayout, i: usize, j: usize) -> DMatrix<f64> {
        let nm = tr.n_modes();
        let sigma = layout.radius();
        let (xi, xj) = (layout.centers()[i], layout.centers()[j]);
        let mut out = DMatrix::zeros(nm, nm);
        let mut remote = vec![0.0; nm];
        for (q, (w, wq)) in tr.grid().directions().iter().zip(tr.grid().weights()).enumerate() {
            let p = xi + w * sigma;
            decaying_basis(tr.table(), sigma, &(p - xj), &mut remote);
            let row = tr.basis_row(q);
            for (kp, rv) in remote.iter().enumerate() {
                let s = rv * wq;
                for (k, phi) in row.iter().enumerate() {
                    out[(k, kp)] += phi * s;
                }
            }
        }
        out
    }

    pub fn transform(&self) -> &SphericalTransform {
        &self.transform
    }

    pub fn layout(&self) -> &SphereLayout {
        &self.layout
    }

    pub fn block_matrix(&self, i: usize, j: usize) -> Option<&DMatrix<f64>> {
        self.blocks[i][j].as_ref()
    }

    /// Band-limited trace on sphere `i` of the remote spheres' fields.
    fn remote_trace(&self, i: usize, coeffs: &[Vec<Vec3>]) -> Vec<Vec3> {
        let nm = self.transform.n_modes();
        let mut acc = vec![Vec3::zeros(); nm];
        for (j, cj) in coeffs.iter().enumerate() {
            if let Some(b) = &self.blocks[i][j] {
                for k in 0..nm {
                    let mut s = Vec3::zeros();
                    for (kp, c) in cj.iter().enumerate() {
                        s += c * b[(k, kp)];
                    }
                    acc[k] += s;
                }
            }
        }
        acc
    }

    /// The full interaction matrix `M = I + T` of size `N (l_max+1)^2`.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        let n = self.layout.len();
        let nm = self.transform.n_modes();
        let mut m = DMatrix::identity(n * nm, n * nm);
        for i in 0..n {
            for j in 0..n {
                if let Some(b) = &self.blocks[i][j] {
                    m.view_mut((i * nm, j * nm), (nm, nm)).copy_from(b);
                }
            }
        }
        m
    }
}

/// Converged multipole sets of a multi-sphere exterior Dirichlet problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiSphereSolution {
    /// Decaying multipole sets `c^j`.
    pub multipoles: Vec<VectorExpansion>,
    /// Band-limited boundary data `a^j` the solution matches.
    pub data: Vec<VectorExpansion>,
    /// Sup-norm boundary mismatch over all sphere grids.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl MultiSphereSolution {
    /// Total field at an exterior point.
    pub fn eval(&self, x: &Vec3) -> Vec3 {
        let Some(first) = self.multipoles.first() else {
            return Vec3::zeros();
        };
        let table = build_mode_table(first.l_max);
        let mut basis = vec![0.0; table.len()];
        self.eval_with(&table, &mut basis, x)
    }

    pub fn eval_with(&self, table: &ModeTable, basis: &mut [f64], x: &Vec3) -> Vec3 {
        let mut u = Vec3::zeros();
        for e in &self.multipoles {
            decaying_basis(table, e.radius, &(x - e.center), basis);
            for (c, p) in e.coeffs.iter().zip(basis.iter()) {
                u += c * *p;
            }
        }
        u
    }
}

/// Solves the exterior Dirichlet problem for boundary samples on the
/// `AngularGrid::for_band_limit(l_max)` grid of every sphere.
pub fn reflect_solve(
    boundary_data: &[Vec<Vec3>],
    layout: &SphereLayout,
    options: &ReflectOptions,
) -> Result<MultiSphereSolution> {
    let ops = ReexpansionOperators::new(layout, options.l_max)?;
    reflect_solve_with(&ops, boundary_data, options)
}

pub fn reflect_solve_with(
    ops: &ReexpansionOperators,
    boundary_data: &[Vec<Vec3>],
    options: &ReflectOptions,
) -> Result<MultiSphereSolution> {
    let layout = ops.layout();
    if boundary_data.len() != layout.len() {
        return Err(Error::LengthMismatch {
            expected: layout.len(),
            got: boundary_data.len(),
        });
    }
    if !(options.tol > 0.0) {
        return Err(Error::invalid("reflection tolerance must be positive"));
    }
    let tr = ops.transform();
    let sigma = layout.radius();
    let data: Vec<Vec<Vec3>> = boundary_data
        .iter()
        .map(|s| tr.forward(s))
        .collect::<Result<_>>()?;
    let n = layout.len();
    let mut coeffs = data.clone();
    let mut residual = if n == 0 { 0.0 } else { f64::INFINITY };
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        match options.mode {
            ReflectionMode::Jacobi => {
                let next: Vec<Vec<Vec3>> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let remote = ops.remote_trace(i, &coeffs);
                        data[i].iter().zip(&remote).map(|(a, t)| a - t).collect()
                    })
                    .collect();
                coeffs = next;
            }
            ReflectionMode::GaussSeidel => {
                for i in 0..n {
                    let remote = ops.remote_trace(i, &coeffs);
                    coeffs[i] = data[i].iter().zip(&remote).map(|(a, t)| a - t).collect();
                }
            }
        }
        residual = boundary_residual(ops, &coeffs, &data);
        if residual <= options.tol {
            break;
        }
    }
    let wrap = |c: &Vec<Vec3>, j: usize| VectorExpansion {
        l_max: tr.l_max(),
        coeffs: c.clone(),
        radius: sigma,
        center: layout.centers()[j],
    };
    let solution = MultiSphereSolution {
        multipoles: coeffs.iter().enumerate().map(|(j, c)| wrap(c, j)).collect(),
        data: data.iter().enumerate().map(|(j, c)| wrap(c, j)).collect(),
        residual,
        iterations,
        converged: residual <= options.tol,
    };
    if !solution.converged {
        return Err(Error::NotConverged {
            iterations,
            residual,
        });
    }
    Ok(solution)
}

/// Solves `M c = a` by LU factorization instead of iterating; the result is
/// the band-limited solution the [`ExteriorDtN`] form is built on.
pub fn direct_solve(ops: &ReexpansionOperators, boundary_data: &[Vec<Vec3>]) -> Result<MultiSphereSolution> {
    let layout = ops.layout();
    let n = layout.len();
    if boundary_data.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: boundary_data.len(),
        });
    }
    let tr = ops.transform();
    let nm = tr.n_modes();
    let data: Vec<Vec<Vec3>> = boundary_data
        .iter()
        .map(|s| tr.forward(s))
        .collect::<Result<_>>()?;
    let lu = ops.system_matrix().lu();
    let mut rhs = DMatrix::zeros(n * nm, 3);
    for (j, d) in data.iter().enumerate() {
        for (k, a) in d.iter().enumerate() {
            for c in 0..3 {
                rhs[(j * nm + k, c)] = a[c];
            }
        }
    }
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular reflection system".into()))?;
    let coeffs: Vec<Vec<Vec3>> = (0..n)
        .map(|j| {
            (0..nm)
                .map(|k| Vec3::new(sol[(j * nm + k, 0)], sol[(j * nm + k, 1)], sol[(j * nm + k, 2)]))
                .collect()
        })
        .collect();
    let residual = boundary_residual(ops, &coeffs, &data);
    let sigma = layout.radius();
    let wrap = |c: &Vec<Vec3>, j: usize| VectorExpansion {
        l_max: tr.l_max(),
        coeffs: c.clone(),
        radius: sigma,
        center: layout.centers()[j],
    };
    Ok(MultiSphereSolution {
        multipoles: coeffs.iter().enumerate().map(|(j, c)| wrap(c, j)).collect(),
        data: data.iter().enumerate().map(|(j, c)| wrap(c, j)).collect(),
        residual,
        iterations: 0,
        converged: true,
    })
}

/// Sup over all sphere nodes of `|u - P g|`, with the remote fields sampled
/// exactly at the nodes and `P g` the band-limited data.
fn boundary_residual(ops: &ReexpansionOperators, coeffs: &[Vec<Vec3>], data: &[Vec<Vec3>]) -> f64 {
    let layout = ops.layout();
    let tr = ops.transform();
    let sigma = layout.radius();
    let nm = tr.n_modes();
    let n = layout.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut basis = vec![0.0; nm];
            let mut worst = 0.0_f64;
            for (q, w) in tr.grid().directions().iter().enumerate() {
                let row = tr.basis_row(q);
                let mut u = Vec3::zeros();
                for (k, phi) in row.iter().enumerate() {
                    u += (coeffs[i][k] - data[i][k]) * *phi;
                }
                let p = layout.centers()[i] + w * sigma;
                for j in (0..n).filter(|&j| j != i) {
                    decaying_basis(tr.table(), sigma, &(p - layout.centers()[j]), &mut basis);
                    for (c, b) in coeffs[j].iter().zip(&basis) {
                        u += c * *b;
                    }
                }
                worst = worst.max(u.norm());
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// Dirichlet energy of the converged field, from the boundary flux on each
/// sphere: `sigma sum_j sum_k <a_k, (2l+1) c_k - l a_k>`.
pub fn solution_energy(sol: &MultiSphereSolution, layout: &SphereLayout) -> Result<f64> {
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            residual: sol.residual,
        });
    }
    if sol.multipoles.len() != layout.len() {
        return Err(Error::LengthMismatch {
            expected: layout.len(),
            got: sol.multipoles.len(),
        });
    }
    let sigma = layout.radius();
    let mut e = 0.0;
    for (c, a) in sol.multipoles.iter().zip(&sol.data) {
        for l in 0..=c.l_max {
            let lf = l as f64;
            for k in l * l..(l + 1) * (l + 1) {
                e += a.coeffs[k].dot(&((2.0 * lf + 1.0) * c.coeffs[k] - lf * a.coeffs[k]));
            }
        }
    }
    Ok(sigma * e)
}

/// Scale `sigma sum_j (|h_j|_inf^2 + sigma |grad h_j|_inf^2)` of the energy
/// bound for correction fields with boundary data `h_j`.
pub fn correction_energy_bound(h: &[VectorExpansion], grid: &AngularGrid, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(Error::invalid(format!("sigma must lie in (0, 1/2), got {sigma}")));
    }
    Ok(h
        .iter()
        .map(|e| {
            let (s, g) = sup_norms(e, grid);
            sigma * (s * s + sigma * g * g)
        })
        .sum())
}

/// Quadratic form of the exterior energy in the boundary coefficients.
///
/// For band-limited traces `a` (stacked sphere by sphere, per component) the
/// exterior Dirichlet energy is `a^T D a` with
/// `D = sigma (diag(2l+1) M^{-1} - diag(l))`, symmetrized.
#[derive(Debug, Clone)]
pub struct ExteriorDtN {
    pub l_max: usize,
    pub n_spheres: usize,
    pub matrix: DMatrix<f64>,
}

impl ExteriorDtN {
    pub fn new(ops: &ReexpansionOperators) -> Result<Self> {
        let sigma = ops.layout().radius();
        let nm = ops.transform().n_modes();
        let n = ops.layout().len();
        let m = ops.system_matrix();
        let minv = m
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular reflection system".into()))?;
        let table = ops.transform().table();
        let deg: Vec<f64> = (0..n * nm).map(|k| table.mode(k % nm).degree as f64).collect();
        let mut d = DMatrix::zeros(n * nm, n * nm);
        for r in 0..n * nm {
            for c in 0..n * nm {
                d[(r, c)] = sigma * (2.0 * deg[r] + 1.0) * minv[(r, c)];
            }
            d[(r, r)] -= sigma * deg[r];
        }
        let sym = (&d + d.transpose()) * 0.5;
        Ok(Self {
            l_max: ops.transform().l_max(),
            n_spheres: n,
            matrix: sym,
        })
    }

    /// Energy of the harmonic extension of the stacked coefficients.
    pub fn energy(&self, coeffs: &[Vec<Vec3>]) -> f64 {
        let flat: Vec<&Vec3> = coeffs.iter().flatten().collect();
        let mut e = 0.0;
        for (r, ar) in flat.iter().enumerate() {
            for (c, ac) in flat.iter().enumerate() {
                e += self.matrix[(r, c)] * ar.dot(ac);
            }
        }
        e
    }

    /// The same form acting on nodal values: `K = F^T D F`, where
    /// `F_kq = w_q Phi_k(w_q)` is the forward transform of each sphere.
    pub fn nodal(&self, tr: &SphericalTransform) -> DMatrix<f64> {
        let nm = tr.n_modes();
        let nq = tr.grid().len();
        let n = self.n_spheres;
        let mut f = DMatrix::zeros(nm, nq);
        for q in 0..nq {
            let w = tr.grid().weights()[q];
            for (k, phi) in tr.basis_row(q).iter().enumerate() {
                f[(k, q)] = w * phi;
            }
        }
        let mut big_f = DMatrix::zeros(n * nm, n * nq);
        for j in 0..n {
            big_f.view_mut((j * nm, j * nq), (nm, nq)).copy_from(&f);
        }
        let k = big_f.transpose() * &self.matrix * &big_f;
        (&k + k.transpose()) * 0.5
    }
}

/// Nodal exterior operator of one sphere of radius `radius`: the energy of
/// the decaying extension of nodal data `g` is `g^T K g`.
pub fn single_sphere_nodal_dtn(tr: &SphericalTransform, radius: f64) -> DMatrix<f64> {
    let nm = tr.n_modes();
    let nq = tr.grid().len();
    let mut k = DMatrix::zeros(nq, nq);
    let table = tr.table();
    for p in 0..nq {
        let wp = tr.grid().weights()[p];
        let rp = tr.basis_row(p);
        for q in p..nq {
            let wq = tr.grid().weights()[q];
            let rq = tr.basis_row(q);
            let mut s = 0.0;
            for m in 0..nm {
                s += (table.mode(m).degree as f64 + 1.0) * rp[m] * rq[m];
            }
            let v = radius * wp * wq * s;
            k[(p, q)] = v;
            k[(q, p)] = v;
        }
    }
    k
}
