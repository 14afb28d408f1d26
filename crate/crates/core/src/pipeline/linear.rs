use serde::{Deserialize, Serialize};

use super::sweep::log_slope;
use crate::error::{Error, Result};
use crate::exterior::{predicted_multi_energy, reflect_solve, single_sphere_energy, solution_energy, ReflectOptions, SphereLayout};
use crate::sph::{AngularGrid, VectorExpansion};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub sigma: f64,
    /// Energy of the reflection solution.
    pub oracle: f64,
    pub prediction: f64,
    /// `|oracle - prediction|`.
    pub deviation: f64,
    /// `oracle - sum of single-sphere energies`.
    pub pair_part: f64,
    /// Predicted pair term `-sigma^2 sum_{i != j} <a_0^i, a_0^j> / d_ij`.
    pub pair_prediction: f64,
    pub iterations: usize,
}

impl LinearRow {
    pub fn pair_relative_error(&self) -> f64 {
        ((self.pair_part - self.pair_prediction) / self.pair_prediction).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearStudy {
    pub centers: Vec<Vec3>,
    pub values: Vec<Vec3>,
    pub rows: Vec<LinearRow>,
    /// Log-log slope of the deviation against `sigma`.
    pub slope: Option<f64>,
}

pub const DEFAULT_SIGMAS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Multi-sphere exterior with constant data `values[j]` on sphere `j`, solved
/// by reflections for each radius and compared with the two-term prediction.
pub fn verify_linear(centers: &[Vec3], values: &[Vec3], sigmas: &[f64], l_max: usize) -> Result<LinearStudy> {
    if centers.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: centers.len(),
            got: values.len(),
        });
    }
    if sigmas.is_empty() {
        return Err(Error::invalid("need at least one sphere radius"));
    }
    let grid = AngularGrid::for_band_limit(l_max);
    let data: Vec<Vec<Vec3>> = values.iter().map(|v| vec![*v; grid.len()]).collect();
    let options = ReflectOptions { l_max, ..Default::default() };
    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let layout = SphereLayout::new(centers.to_vec(), sigma)?;
        let sol = reflect_solve(&data, &layout, &options)?;
        let oracle = solution_energy(&sol, &layout)?;
        let exps: Vec<VectorExpansion> = values
            .iter()
            .zip(centers)
            .map(|(v, c)| VectorExpansion::constant(l_max, *v, sigma, *c))
            .collect();
        let prediction = predicted_multi_energy(&exps, &layout)?.value;
        let singles: f64 = exps.iter().map(|e| single_sphere_energy(e, sigma)).sum();
        rows.push(LinearRow {
            sigma,
            oracle,
            prediction,
            deviation: (oracle - prediction).abs(),
            pair_part: oracle - singles,
            pair_prediction: prediction - singles,
            iterations: sol.iterations,
        });
    }
    let slope = log_slope(&rows.iter().map(|r| (r.sigma, r.deviation)).collect::<Vec<_>>());
    Ok(LinearStudy {
        centers: centers.to_vec(),
        values: values.to_vec(),
        rows,
        slope,
    })
}
