use serde::{Deserialize, Serialize};

use crate::annulus::{decaying_poisson, PoissonMode, PoissonOptions, PoissonSolution};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonCase {
    pub name: String,
    pub d: usize,
    pub l: usize,
    pub theta: f64,
    pub residual: f64,
    /// Sup distance to the closed-form solution, where one is known.
    pub analytic_error: Option<f64>,
    pub decay_constants: Vec<f64>,
    pub decay_stability: f64,
    pub tail_branch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonCheck {
    pub cases: Vec<PoissonCase>,
    pub max_residual: f64,
    pub max_analytic_error: f64,
    pub max_decay_stability: f64,
}

type Source = fn(f64) -> f64;
type Exact = fn(f64) -> f64;

fn inv4(r: f64) -> f64 {
    r.powi(-4)
}

fn inv4_log(r: f64) -> f64 {
    r.powi(-4) * (2.0 * r).ln()
}

fn zero(_: f64) -> f64 {
    0.0
}

fn case(name: &str, d: usize, l: usize, f: Source, exact: Option<Exact>, theta: f64) -> Result<PoissonCase> {
    let options = PoissonOptions {
        theta,
        ..Default::default()
    };
    let sol: PoissonSolution = decaying_poisson(&[PoissonMode { d, l, f: &f }], &options)?.remove(0);
    let analytic_error = exact.map(|u| {
        sol.profile
            .radii
            .iter()
            .zip(&sol.profile.values)
            .map(|(r, v)| (v - u(*r)).abs())
            .fold(0.0, f64::max)
    });
    Ok(PoissonCase {
        name: name.into(),
        d,
        l,
        theta,
        residual: sol.residual,
        analytic_error,
        decay_stability: sol.decay_stability(),
        decay_constants: sol.decay_constants,
        tail_branch: sol.tail_branch,
    })
}

/// Decaying Poisson solutions for a fixed set of sources with known
/// behaviour, with residuals, closed-form errors and decay constants.
pub fn poisson_check() -> Result<PoissonCheck> {
    let cases = vec![
        case("d3_l0_inv4", 3, 0, inv4, Some(|r| 0.5 / (r * r)), 0.0)?,
        case("d3_l2_inv4", 3, 2, inv4, Some(|r| -(r.powi(-2) - r.powi(-3)) / 4.0), 0.0)?,
        case("d3_l1_inv4", 3, 1, inv4, None, 0.0)?,
        case("d3_l3_inv4", 3, 3, inv4, None, 0.0)?,
        case("d4_l1_inv4", 4, 1, inv4, None, 0.0)?,
        case("d3_l0_inv4_log", 3, 0, inv4_log, None, 1.0)?,
        case("d3_l1_zero", 3, 1, zero, Some(|_| 0.0), 0.0)?,
    ];
    Ok(PoissonCheck {
        max_residual: cases.iter().map(|c| c.residual).fold(0.0, f64::max),
        max_analytic_error: cases.iter().filter_map(|c| c.analytic_error).fold(0.0, f64::max),
        max_decay_stability: cases.iter().map(|c| c.decay_stability).fold(0.0, f64::max),
        cases,
    })
}
