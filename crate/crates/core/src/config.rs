//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! n_inf = [0.0, 0.0, 1.0]
//! rhos = [0.02, 0.01, 0.005]
//!
//! [[particles]]
//! center = [-1.0, 0.0, 0.0]
//! anchoring = "strong"            # or "weak", with `weight`
//! map = { kind = "tilt", tilt = [0.1, 0.0, 0.0] }
//!
//! [[particles]]
//! center = [1.0, 0.0, 0.0]
//! map = { kind = "tilt", tilt = [0.1, 0.0, 0.0] }
//!
//! [numerics]
//! l_ang = 8
//!
//! [run]
//! threads = 1
//! deterministic = true
//!
//! [output]
//! report = "sweep.csv"
//! ```
//!
//! Boundary maps: `constant { value }`, `tilt { tilt }` (normalized
//! `n_inf + tilt`), `radial`, `modes { l_max, coeffs }` (normalized band-limited
//! field). Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::DEFAULT_CUTOFFS;
use crate::pipeline::linear::DEFAULT_SIGMAS;
use crate::pipeline::{Numerics, SweepInput};
use crate::solver::{AnchoringSpec, BoundaryMap};
use crate::sph::VectorExpansion;
use crate::Vec3;

/// Tolerance on `|n_inf| = 1`.
pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Anchoring {
    #[default]
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    Constant { value: Vec3 },
    Tilt { tilt: Vec3 },
    Radial,
    Modes { l_max: usize, coeffs: Vec<Vec3> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    pub center: Vec3,
    #[serde(default)]
    pub anchoring: Anchoring,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    pub map: MapConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; all cores when absent.
    pub threads: Option<usize>,
    /// Single worker thread and no timing data in reports.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<PathBuf>,
    /// Cartesian export of the particle-0 field, in rescaled units.
    pub snapshot: Option<PathBuf>,
}

/// Settings of `verify-linear`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    pub sigmas: Vec<f64>,
    pub l_max: usize,
    /// Constant boundary value per particle; `n_inf` for each when absent.
    pub values: Option<Vec<Vec3>>,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            sigmas: DEFAULT_SIGMAS.to_vec(),
            l_max: 16,
            values: None,
        }
    }
}

/// Settings of `renorm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenormConfig {
    /// Torque per particle; solved from the anchoring when absent.
    pub torques: Option<Vec<Vec3>>,
    pub rho: f64,
    pub cutoffs: Vec<f64>,
}

impl Default for RenormConfig {
    fn default() -> Self {
        Self {
            torques: None,
            rho: 0.01,
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_inf: Vec3,
    pub particles: Vec<ParticleConfig>,
    #[serde(default)]
    pub rhos: Vec<f64>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub linear: LinearConfig,
    #[serde(default)]
    pub renorm: RenormConfig,
}

impl ScenarioConfig {
    /// The pair used by the default sweep: aligned tilts at distance 2.
    pub fn aligned_pair(c: f64) -> Self {
        let particle = |x: f64| ParticleConfig {
            center: Vec3::new(x, 0.0, 0.0),
            anchoring: Anchoring::Strong,
            weight: None,
            map: MapConfig::Tilt { tilt: Vec3::x() * c },
        };
        Self {
            n_inf: Vec3::z(),
            particles: vec![particle(-1.0), particle(1.0)],
            rhos: vec![0.02, 0.01, 0.005],
            numerics: Numerics::default(),
            run: RunConfig::default(),
            output: OutputConfig::default(),
            linear: LinearConfig::default(),
            renorm: RenormConfig::default(),
        }
    }

    pub fn centers(&self) -> Vec<Vec3> {
        self.particles.iter().map(|p| p.center).collect()
    }

    pub fn anchoring(&self, j: usize) -> AnchoringSpec {
        let p = &self.particles[j];
        let map = match &p.map {
            MapConfig::Constant { value } => BoundaryMap::Constant { value: *value },
            MapConfig::Tilt { tilt } => BoundaryMap::UniformTilt {
                n_inf: self.n_inf,
                tilt: *tilt,
            },
            MapConfig::Radial => BoundaryMap::Radial,
            MapConfig::Modes { l_max, coeffs } => BoundaryMap::Expansion {
                expansion: VectorExpansion {
                    l_max: *l_max,
                    coeffs: coeffs.clone(),
                    radius: 1.0,
                    center: Vec3::zeros(),
                },
            },
        };
        match p.anchoring {
            Anchoring::Strong => AnchoringSpec::strong(map),
            Anchoring::Weak => AnchoringSpec::weak(map, p.weight.unwrap_or(0.0)),
        }
    }

    pub fn specs(&self) -> Vec<AnchoringSpec> {
        (0..self.particles.len()).map(|j| self.anchoring(j)).collect()
    }

    pub fn sweep_input(&self) -> SweepInput {
        SweepInput {
            centers: self.centers(),
            specs: self.specs(),
            n_inf: self.n_inf,
            rhos: self.rhos.clone(),
            numerics: self.numerics.clone(),
        }
    }

    /// Every semantic problem of the scenario.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let norm = self.n_inf.norm();
        if !((norm - 1.0).abs() <= UNIT_TOL) {
            let hint = if norm > 0.0 {
                let u = self.n_inf / norm;
                format!("; normalize it, e.g. n_inf = [{}, {}, {}]", u.x, u.y, u.z)
            } else {
                String::new()
            };
            v.push(format!("n_inf must be a unit vector, got |n_inf| = {norm}{hint}"));
        }
        if self.particles.is_empty() {
            v.push("at least one particle is required".into());
        }
        for (j, p) in self.particles.iter().enumerate() {
            if !p.center.iter().all(|c| c.is_finite()) {
                v.push(format!("particles[{j}].center is not finite"));
            }
            match (p.anchoring, p.weight) {
                (Anchoring::Weak, None) => v.push(format!("particles[{j}]: weak anchoring needs a weight")),
                (Anchoring::Strong, Some(_)) => {
                    v.push(format!("particles[{j}]: weight is only meaningful for weak anchoring"))
                }
                _ => {}
            }
            if let MapConfig::Modes { l_max, coeffs } = &p.map {
                if coeffs.len() != (l_max + 1) * (l_max + 1) {
                    v.push(format!(
                        "particles[{j}].map: l_max = {l_max} needs {} coefficients, got {}",
                        (l_max + 1) * (l_max + 1),
                        coeffs.len()
                    ));
                    continue;
                }
            }
            if let Err(e) = self.anchoring(j).validate() {
                v.push(format!("particles[{j}]: {e}"));
            }
        }
        for i in 0..self.particles.len() {
            for j in i + 1..self.particles.len() {
                let d = (self.particles[i].center - self.particles[j].center).norm();
                if !(d >= 2.0) {
                    v.push(format!(
                        "particles[{i}] and particles[{j}] are {d} apart; centers must be at least 2 apart"
                    ));
                }
            }
        }
        v.extend(self.numerics.violations());
        if self.rhos.windows(2).any(|w| !(w[1] < w[0])) {
            v.push("rhos must be strictly decreasing".into());
        }
        for &rho in &self.rhos {
            let sigma = self.numerics.sigma_for(rho);
            if !(rho > 0.0 && rho < 0.5) {
                v.push(format!("rho = {rho} must lie in (0, 1/2)"));
            } else if !(rho < sigma && sigma < 0.5) {
                v.push(format!("rho = {rho}: gluing radius sigma = {sigma} must lie in (rho, 1/2)"));
            } else if !(sigma / rho > 1.5 && sigma / rho < self.numerics.r_out) {
                v.push(format!(
                    "rho = {rho}: cutoff sigma/rho = {} must lie in (1.5, numerics.r_out)",
                    sigma / rho
                ));
            }
        }
        if self.run.threads == Some(0) {
            v.push("run.threads must be positive".into());
        }
        if self.linear.sigmas.iter().any(|s| !(*s > 0.0 && *s < 0.5)) {
            v.push("linear.sigmas must lie in (0, 1/2)".into());
        }
        if let Some(vals) = &self.linear.values {
            if vals.len() != self.particles.len() {
                v.push(format!("linear.values has {} entries for {} particles", vals.len(), self.particles.len()));
            }
        }
        if let Some(t) = &self.renorm.torques {
            if t.len() != self.particles.len() {
                v.push(format!("renorm.torques has {} entries for {} particles", t.len(), self.particles.len()));
            }
        }
        if !(self.renorm.rho > 0.0 && self.renorm.rho < 0.5) {
            v.push(format!("renorm.rho = {} must lie in (0, 1/2)", self.renorm.rho));
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

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Parses and validates a scenario document.
pub fn parse_config_str(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}
