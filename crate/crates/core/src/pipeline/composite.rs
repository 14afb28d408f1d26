//! Multi-particle configurations at particle radius `rho`.
//!
//! Each particle carries the single-particle shell mesh truncated at
//! `sigma / rho`; the region outside the balls `B_sigma(x_j)` is closed by the
//! exterior operator of the harmonic extension of the shell traces. The
//! composite energy is the sum of the shell energies and the exterior energy
//! divided by `rho`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::single::{relax_checked, SingleParticleResult};
use super::Numerics;
use crate::error::{Error, Result};
use crate::exterior::{direct_solve, ExteriorDtN, MultiSphereSolution, ReexpansionOperators, SphereLayout};
use crate::field::VectorField;
use crate::solver::shell::{anchor_first_shell, DenseBlock, GraphEnergy, RadialMesh, ShellField, ShellMesh};
use crate::solver::AnchoringSpec;
use crate::sph::{build_mode_table, gauss_legendre, AngularGrid};
use crate::Vec3;

/// Graph energy of a glued configuration.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    pub centers: Vec<Vec3>,
    pub rho: f64,
    pub sigma: f64,
    pub n_inf: Vec3,
    pub mesh: ShellMesh,
    pub graph: GraphEnergy,
    ops: ReexpansionOperators,
}

impl CompositeProblem {
    /// Builds the problem and an initial state (`n_inf` plus Dirichlet data).
    pub fn new(
        specs: &[AnchoringSpec],
        centers: &[Vec3],
        n_inf: Vec3,
        rho: f64,
        sigma: f64,
        radial: &RadialMesh,
        l_ang: usize,
    ) -> Result<(Self, Vec<Vec3>)> {
        if specs.len() != centers.len() {
            return Err(Error::LengthMismatch {
                expected: centers.len(),
                got: specs.len(),
            });
        }
        SphereLayout::new(centers.to_vec(), rho)?;
        if !(rho < sigma && sigma < 0.5) {
            return Err(Error::Geometry(format!("need rho < sigma < 1/2, got rho = {rho}, sigma = {sigma}")));
        }
        let layout = SphereLayout::general(centers.to_vec(), sigma)?;
        let mesh = ShellMesh::new(radial.truncated(sigma / rho)?, l_ang)?;
        let per = mesh.len();
        let n = per * centers.len();
        let local = mesh.edges();
        let edges = (0..centers.len())
            .flat_map(|j| local.iter().map(move |&(a, b, w)| (a + j * per, b + j * per, w)))
            .collect();
        let mut graph = GraphEnergy::new(n, edges)?;
        let mut values = vec![n_inf; n];
        for (j, spec) in specs.iter().enumerate() {
            spec.validate()?;
            anchor_first_shell(&mut graph, &mut values, &mesh, spec, j * per, 1.0);
        }
        let ops = ReexpansionOperators::with_transform(&layout, mesh.transform().clone())?;
        if !centers.is_empty() {
            let k = ExteriorDtN::new(&ops)?.nodal(mesh.transform());
            let (na, last) = (mesh.n_ang(), mesh.n_shells() - 1);
            graph.add_block(DenseBlock {
                nodes: (0..centers.len())
                    .flat_map(|j| (0..na).map(move |q| j * per + last * na + q))
                    .collect(),
                matrix: k,
                offset: n_inf,
                scale: 1.0 / rho,
            })?;
        }
        Ok((
            Self {
                centers: centers.to_vec(),
                rho,
                sigma,
                n_inf,
                mesh,
                graph,
                ops,
            },
            values,
        ))
    }

    pub fn cutoff(&self) -> f64 {
        self.sigma / self.rho
    }

    pub fn per_particle(&self) -> usize {
        self.mesh.len()
    }
}

/// A composite problem together with nodal values.
#[derive(Debug, Clone)]
pub struct CompositeState {
    pub problem: CompositeProblem,
    pub values: Vec<Vec3>,
}

impl CompositeState {
    pub fn energy(&self) -> f64 {
        self.problem.graph.energy(&self.values)
    }

    pub fn particle_values(&self, j: usize) -> &[Vec3] {
        let per = self.problem.per_particle();
        &self.values[j * per..(j + 1) * per]
    }

    /// Shell field of particle `j` in physical coordinates.
    pub fn shell_field(&self, j: usize) -> Result<ShellField> {
        ShellField::new(
            self.problem.mesh.clone(),
            self.particle_values(j).to_vec(),
            self.problem.centers[j],
            self.problem.rho,
        )
    }

    /// Harmonic extension `u` of the traces minus `n_inf` outside the balls
    /// `B_sigma(x_j)`.
    pub fn exterior(&self) -> Result<MultiSphereSolution> {
        let mesh = &self.problem.mesh;
        let last = mesh.n_shells() - 1;
        let data: Vec<Vec<Vec3>> = (0..self.problem.centers.len())
            .map(|j| {
                let v = self.particle_values(j);
                (0..mesh.n_ang())
                    .map(|q| v[mesh.node(last, q)] - self.problem.n_inf)
                    .collect()
            })
            .collect();
        direct_solve(&self.problem.ops, &data)
    }

    /// The field around particle `j` in its rescaled coordinates.
    pub fn rescaled_view(&self, j: usize) -> Result<CompositeView> {
        Ok(CompositeView {
            shells: (0..self.problem.centers.len()).map(|i| self.shell_field(i)).collect::<Result<_>>()?,
            exterior: self.exterior()?,
            n_inf: self.problem.n_inf,
            sigma: self.problem.sigma,
            frame: Some((self.problem.centers[j], self.problem.rho)),
        })
    }

    /// The field in physical coordinates.
    pub fn physical_view(&self) -> Result<CompositeView> {
        let mut v = self.rescaled_view(0)?;
        v.frame = None;
        Ok(v)
    }
}

/// Sampling view of a composite state: shells inside `B_sigma(x_j)`, the
/// normalized exterior extension elsewhere.
#[derive(Debug, Clone)]
pub struct CompositeView {
    shells: Vec<ShellField>,
    exterior: MultiSphereSolution,
    n_inf: Vec3,
    sigma: f64,
    /// `(center, scale)` of the rescaled frame, if any.
    frame: Option<(Vec3, f64)>,
}

impl VectorField for CompositeView {
    fn sample(&self, y: &Vec3) -> Vec3 {
        let x = match self.frame {
            Some((c, s)) => c + y * s,
            None => *y,
        };
        for s in &self.shells {
            if (x - s.center()).norm() <= self.sigma * (1.0 + 1e-12) {
                return s.sample(&x);
            }
        }
        (self.n_inf + self.exterior.eval(&x)).normalize()
    }
}

/// `int |grad (N/|N|)|^2 - |grad N|^2` over the exterior of the balls, for
/// `N = n_inf + u` (physical units).
///
/// Each ball carries a chart `x = x_j + (sigma / t) w`, `t in (0, 1]`, with
/// Gauss nodes in `t`, the product rule in `w`, and the partition of unity
/// `|x - x_j|^-8 / sum_k |x - x_k|^-8`.
pub fn projection_correction(
    ext: &MultiSphereSolution,
    n_inf: Vec3,
    layout: &SphereLayout,
    nodes: usize,
    l_grid: usize,
) -> f64 {
    let Some(first) = ext.multipoles.first() else {
        return 0.0;
    };
    let sigma = layout.radius();
    let centers = layout.centers();
    let (t, wt) = gauss_legendre(nodes);
    let ang = AngularGrid::for_band_limit(l_grid);
    let l_max = first.l_max;
    let jobs: Vec<(usize, usize)> = (0..centers.len()).flat_map(|j| (0..nodes).map(move |i| (j, i))).collect();
    let parts: Vec<f64> = jobs
        .par_iter()
        .map_init(
            || {
                let table = build_mode_table(l_max);
                let basis = vec![0.0; table.len()];
                (table, basis)
            },
            |(table, basis), &(j, i)| {
                let tt = 0.5 * (t[i] + 1.0);
                let r = sigma / tt;
                let jac = 0.5 * wt[i] * sigma.powi(3) / tt.powi(4);
                let mut acc = 0.0;
                for (w, ww) in ang.directions().iter().zip(ang.weights()) {
                    let x = centers[j] + w * r;
                    let dists: Vec<f64> = centers.iter().map(|c| (x - c).norm()).collect();
                    if dists.iter().enumerate().any(|(k, &d)| k != j && d <= sigma) {
                        continue;
                    }
                    let pu = dists[j].powi(-8) / dists.iter().map(|d| d.powi(-8)).sum::<f64>();
                    let u = ext.eval_with(table, basis, &x);
                    let nn = n_inf + u;
                    let norm = nn.norm();
                    let p = nn / norm;
                    let eps = 1e-4 * dists.iter().cloned().fold(f64::INFINITY, f64::min);
                    let mut dens = 0.0;
                    for k in 0..3 {
                        let mut e = Vec3::zeros();
                        e[k] = eps;
                        let d = (ext.eval_with(table, basis, &(x + e)) - ext.eval_with(table, basis, &(x - e))) / (2.0 * eps);
                        let tang = d - p * p.dot(&d);
                        dens += tang.norm_squared() / (norm * norm) - d.norm_squared();
                    }
                    acc += ww * pu * dens;
                }
                acc * jac
            },
        )
        .collect();
    parts.iter().sum()
}

/// The glued competitor on one mesh level.
#[derive(Debug, Clone)]
pub struct Competitor {
    pub state: CompositeState,
    /// Composite energy of the glued state.
    pub functional: f64,
    /// Projection correction, in rescaled units.
    pub projection: f64,
    /// `functional + projection`: the energy of the unit-valued competitor.
    pub energy: f64,
}

/// Glues the single-particle minimizers of mesh level `level` inside
/// `B_sigma(x_j)` and extends their traces harmonically outside.
pub fn build_competitor(
    singles: &[&SingleParticleResult],
    level: usize,
    centers: &[Vec3],
    rho: f64,
    sigma: f64,
    numerics: &Numerics,
) -> Result<Competitor> {
    let first = singles
        .first()
        .ok_or_else(|| Error::invalid("competitor needs at least one particle"))?;
    let n_inf = first.n_inf;
    let field = first
        .levels
        .get(level)
        .ok_or_else(|| Error::invalid(format!("single-particle result has no level {level}")))?;
    let specs: Vec<AnchoringSpec> = singles.iter().map(|s| s.spec.clone()).collect();
    let (problem, _) = CompositeProblem::new(
        &specs,
        centers,
        n_inf,
        rho,
        sigma,
        field.mesh().radial(),
        field.mesh().l_ang(),
    )?;
    let per = problem.per_particle();
    let mut values = Vec::with_capacity(per * singles.len());
    for s in singles {
        if (s.n_inf - n_inf).norm() > 1e-12 {
            return Err(Error::invalid("single-particle results disagree on n_inf"));
        }
        let f = &s.levels[level];
        if f.mesh().radial().radii()[..problem.mesh.n_shells()] != *problem.mesh.radial().radii() {
            return Err(Error::invalid("single-particle meshes differ"));
        }
        values.extend_from_slice(&f.values()[..per]);
    }
    let state = CompositeState { problem, values };
    let functional = state.energy();
    let ext = state.exterior()?;
    let layout = SphereLayout::general(centers.to_vec(), sigma)?;
    let projection = projection_correction(&ext, n_inf, &layout, numerics.projection_nodes, numerics.projection_l) / rho;
    Ok(Competitor {
        state,
        functional,
        projection,
        energy: functional + projection,
    })
}

/// Competitor and relaxed energies on one mesh level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairLevel {
    pub competitor: f64,
    pub functional: f64,
    pub projection: f64,
    pub measured: f64,
    pub sweeps: usize,
    pub residual: f64,
    #[serde(skip)]
    pub state: Option<CompositeState>,
}

/// Builds the competitor on `level` and relaxes the composite energy from it.
pub fn measure_level(
    singles: &[&SingleParticleResult],
    level: usize,
    centers: &[Vec3],
    rho: f64,
    sigma: f64,
    numerics: &Numerics,
) -> Result<PairLevel> {
    let comp = build_competitor(singles, level, centers, rho, sigma, numerics)?;
    let mut state = comp.state;
    let report = relax_checked(&state.problem.graph, &mut state.values, numerics)?;
    Ok(PairLevel {
        competitor: comp.energy,
        functional: comp.functional,
        projection: comp.projection,
        measured: report.final_energy(),
        sweeps: report.sweeps,
        residual: state.problem.graph.tangential_residual(&state.values),
        state: Some(state),
    })
}

/// Relaxed composite energy, extrapolated over the mesh levels.
pub fn measure_min_energy(
    centers: &[Vec3],
    rho: f64,
    specs: &[AnchoringSpec],
    n_inf: Vec3,
    numerics: &Numerics,
) -> Result<f64> {
    if specs.is_empty() {
        return Err(Error::invalid("no particles"));
    }
    let sigma = numerics.sigma_for(rho);
    let singles = specs
        .iter()
        .map(|s| super::solve_single_particle(s, n_inf, numerics, &[rho]))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&SingleParticleResult> = singles.iter().collect();
    let levels = (0..singles[0].levels.len())
        .map(|l| measure_level(&refs, l, centers, rho, sigma, numerics).map(|p| p.measured))
        .collect::<Result<Vec<_>>>()?;
    Ok(numerics.extrapolate(&levels))
}
