use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Numerics;
use crate::annulus::{fit_far_field, FarFieldFit, FitOptions};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::solver::shell::{single_particle_energy, GraphEnergy, ShellField, ShellMesh};
use crate::solver::{AnchoringSpec, RelaxReport};
use crate::Vec3;

/// Minimal energy `mu`, torque `v` and minimizer of one unit particle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingleParticleResult {
    pub spec: AnchoringSpec,
    pub n_inf: Vec3,
    /// Extrapolated energy, including the exterior beyond the last shell.
    pub mu: f64,
    /// Energy on each mesh level, coarse first.
    pub mu_levels: Vec<f64>,
    /// `|mu - mu_levels.last()|`.
    pub extrapolation_error: f64,
    /// `4 pi |v|^2 / r_out`, the part of `mu` carried by the exterior closure.
    pub tail: f64,
    pub v: Vec3,
    pub fit: FarFieldFit,
    pub sweeps: Vec<usize>,
    /// Tangential gradient norm at convergence, per level.
    pub residuals: Vec<f64>,
    pub zero_field_events: usize,
    pub numerics: Numerics,
    /// Particle radii whose cutoffs `sigma / rho` are mesh nodes.
    pub rhos: Vec<f64>,
    /// Minimizer on each level, coarse first.
    #[serde(skip)]
    pub levels: Vec<ShellField>,
}

impl SingleParticleResult {
    pub fn finest(&self) -> &ShellField {
        self.levels.last().expect("at least one level")
    }
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let p = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = p.norm();
        if n > 0.1 && n <= 1.0 {
            return p / n;
        }
    }
}

/// Relaxes a graph energy and fails if the sweep budget runs out.
pub(crate) fn relax_checked(graph: &GraphEnergy, values: &mut [Vec3], numerics: &Numerics) -> Result<RelaxReport> {
    let report = graph.relax(values, &numerics.schedule())?;
    if !report.converged {
        let e = &report.energies;
        let last = e[e.len() - 2] - e[e.len() - 1];
        return Err(Error::NotConverged {
            iterations: report.sweeps,
            residual: last,
        });
    }
    Ok(report)
}

/// Solves the single-particle problem on every mesh level, with meshes
/// carrying a node at `sigma / rho` for each radius in `rhos`.
pub fn solve_single_particle(
    spec: &AnchoringSpec,
    n_inf: Vec3,
    numerics: &Numerics,
    rhos: &[f64],
) -> Result<SingleParticleResult> {
    numerics.validate()?;
    spec.validate()?;
    let n_inf = crate::sph::unit_direction(&n_inf)?;
    let mut levels: Vec<ShellField> = Vec::new();
    let mut mu_levels = Vec::new();
    let mut sweeps = Vec::new();
    let mut residuals = Vec::new();
    let mut zero_field_events = 0;
    for radial in numerics.levels(rhos)? {
        let mesh = ShellMesh::new(radial, numerics.l_ang)?;
        let (graph, mut values) = single_particle_energy(&mesh, spec, n_inf)?;
        if let Some(prev) = levels.last() {
            for (i, v) in values.iter_mut().enumerate() {
                if !graph.is_fixed(i) {
                    *v = prev.sample(&mesh.point(i));
                }
            }
        } else if let Some(seed) = numerics.init_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (i, v) in values.iter_mut().enumerate() {
                if !graph.is_fixed(i) {
                    *v = random_unit(&mut rng);
                }
            }
        }
        let report = relax_checked(&graph, &mut values, numerics)?;
        mu_levels.push(report.final_energy());
        sweeps.push(report.sweeps);
        residuals.push(graph.tangential_residual(&values));
        zero_field_events += report.zero_field_events;
        levels.push(ShellField::new(mesh, values, Vec3::zeros(), 1.0)?);
    }
    let mu = numerics.extrapolate(&mu_levels);
    let [lo, hi] = numerics.fit_window;
    let fit = fit_far_field(levels.last().unwrap(), &Vec3::zeros(), (lo, hi), &FitOptions::default())?;
    let v = fit.v;
    Ok(SingleParticleResult {
        spec: spec.clone(),
        n_inf,
        mu,
        extrapolation_error: (mu - mu_levels.last().unwrap()).abs(),
        mu_levels,
        tail: 4.0 * PI * v.norm_squared() / numerics.r_out,
        v,
        fit,
        sweeps,
        residuals,
        zero_field_events,
        numerics: numerics.clone(),
        rhos: rhos.to_vec(),
        levels,
    })
}
