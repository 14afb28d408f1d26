//! Coulomb-like interaction of far-field torques and the two-term energy
//! expansion built from it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sph::AngularGrid;
use crate::Vec3;

/// Unit-length tolerance for the far-field direction.
pub const N_INF_TOL: f64 = 1e-12;
/// Largest orthogonality defect `|<v_j, n_inf>|` allowed in strict mode.
pub const STRICT_ORTHOGONALITY: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueSet {
    pub torques: Vec<Vec3>,
    pub centers: Vec<Vec3>,
    pub rho: f64,
    pub n_inf: Vec3,
    /// `max_j |<v_j, n_inf>|`.
    pub orthogonality_defect: f64,
}

impl TorqueSet {
    pub fn new(torques: Vec<Vec3>, centers: Vec<Vec3>, rho: f64, n_inf: Vec3) -> Result<Self> {
        if torques.len() != centers.len() {
            return Err(Error::LengthMismatch {
                expected: centers.len(),
                got: torques.len(),
            });
        }
        if (n_inf.norm() - 1.0).abs() > N_INF_TOL {
            return Err(Error::NonUnit { norm: n_inf.norm() });
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::invalid(format!("rho must be nonnegative, got {rho}")));
        }
        let orthogonality_defect = torques.iter().map(|v| v.dot(&n_inf).abs()).fold(0.0, f64::max);
        Ok(Self {
            torques,
            centers,
            rho,
            n_inf,
            orthogonality_defect,
        })
    }

    /// Like [`new`](Self::new) but requires every torque to be orthogonal to
    /// `n_inf` up to [`STRICT_ORTHOGONALITY`].
    pub fn new_strict(torques: Vec<Vec3>, centers: Vec<Vec3>, rho: f64, n_inf: Vec3) -> Result<Self> {
        let t = Self::new(torques, centers, rho, n_inf)?;
        if t.orthogonality_defect > STRICT_ORTHOGONALITY {
            return Err(Error::invalid(format!(
                "torque not orthogonal to n_inf (defect {:.3e})",
                t.orthogonality_defect
            )));
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.torques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.torques.is_empty()
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self { rho, ..self.clone() }
    }

    fn pair_sum(&self) -> Result<f64> {
        let mut s = 0.0;
        for (i, (vi, xi)) in self.torques.iter().zip(&self.centers).enumerate() {
            for (j, (vj, xj)) in self.torques.iter().zip(&self.centers).enumerate() {
                if i == j {
                    continue;
                }
                let d = (xi - xj).norm();
                if d == 0.0 {
                    return Err(Error::Geometry(format!("particles {i} and {j} share a center")));
                }
                s += vi.dot(vj) / d;
            }
        }
        Ok(s)
    }
}

/// `-4 pi rho sum_{i != j} <v_i, v_j> / |x_i - x_j|`, over ordered pairs.
pub fn coulomb_interaction(t: &TorqueSet) -> Result<f64> {
    Ok(-4.0 * PI * t.rho * t.pair_sum()?)
}

/// `sum_j mu_j + coulomb_interaction(t)`.
pub fn expansion_prediction(mu: &[f64], t: &TorqueSet) -> Result<f64> {
    if mu.len() != t.len() {
        return Err(Error::LengthMismatch {
            expected: t.len(),
            got: mu.len(),
        });
    }
    Ok(mu.iter().sum::<f64>() + coulomb_interaction(t)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedLimit {
    pub sigmas: Vec<f64>,
    /// Renormalized energy at each cutoff radius.
    pub sequence: Vec<f64>,
    /// Order-1 Richardson extrapolation from the two smallest radii.
    pub limit: f64,
    /// Difference between the extrapolations from the two smallest and the
    /// two largest pairs of radii (three-point confirmation).
    pub confirmation_gap: f64,
    /// Sign of the measured limit relative to `sum <v_i,v_j>/d` (`+1`, `-1` or `0`).
    pub measured_sign: i8,
}

impl RenormalizedLimit {
    /// Sign convention of the limit `-4 pi rho sum <v_i,v_j>/d` as usually displayed.
    pub const DISPLAY_SIGN: i8 = -1;

    pub fn agrees_with_display(&self) -> bool {
        self.measured_sign == 0 || self.measured_sign == Self::DISPLAY_SIGN
    }
}

/// Cutoff radii small enough that the order-1 extrapolation reaches 1e-8 at
/// unit separation; the finite-radius error of the renormalized energy is
/// `O(sigma^3)` (the remote fields' own energy inside the excised balls).
pub const DEFAULT_CUTOFFS: [f64; 3] = [0.004, 0.002, 0.001];

/// Band limit of the quadrature on the excised spheres.
const RENORM_L: usize = 40;

/// Renormalized Dirichlet energy of the superposed Coulomb field
/// `u = rho sum_j v_j / |x - x_j|` outside balls of radius `sigma`, for each
/// `sigma` in `sigmas`, and its `sigma -> 0` limit.
///
/// The exterior integral is evaluated as the boundary flux
/// `-sum_j int_{|x - x_j| = sigma} <u, d_r u>` with closed-form gradients.
pub fn renormalized_limit_oracle(t: &TorqueSet, sigmas: &[f64]) -> Result<RenormalizedLimit> {
    if sigmas.is_empty() {
        return Err(Error::invalid("need at least one cutoff radius"));
    }
    if sigmas.windows(2).any(|w| w[1] >= w[0]) || sigmas.iter().any(|&s| s <= 0.0) {
        return Err(Error::invalid("cutoff radii must be positive and decreasing"));
    }
    if t.rho <= 0.0 {
        return Err(Error::invalid("renormalization needs rho > 0"));
    }
    if let Some(dmin) = min_distance(&t.centers) {
        if sigmas[0] >= 0.5 * dmin {
            return Err(Error::Geometry(format!(
                "cutoff {} must be below half the closest distance {dmin}",
                sigmas[0]
            )));
        }
    }
    let grid = AngularGrid::for_band_limit(RENORM_L);
    let sequence: Vec<f64> = sigmas.iter().map(|&s| renormalized_energy(t, s, &grid)).collect();
    let rich = |a: usize, b: usize| {
        (sigmas[a] * sequence[b] - sigmas[b] * sequence[a]) / (sigmas[a] - sigmas[b])
    };
    let n = sigmas.len();
    let (limit, confirmation_gap) = match n {
        1 => (sequence[0], f64::NAN),
        2 => (rich(0, 1), f64::NAN),
        _ => {
            let l = rich(n - 2, n - 1);
            (l, (l - rich(n - 3, n - 2)).abs())
        }
    };
    let reference = t.pair_sum()?;
    let scale = 4.0 * PI * t.rho * reference.abs();
    let measured_sign = if reference == 0.0 || limit.abs() <= 1e-9 * scale.max(1e-300) {
        0
    } else if (limit > 0.0) == (reference > 0.0) {
        1
    } else {
        -1
    };
    Ok(RenormalizedLimit {
        sigmas: sigmas.to_vec(),
        sequence,
        limit,
        confirmation_gap,
        measured_sign,
    })
}

fn min_distance(centers: &[Vec3]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let d = (centers[i] - centers[j]).norm();
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    best
}

fn renormalized_energy(t: &TorqueSet, sigma: f64, grid: &AngularGrid) -> f64 {
    let rho = t.rho;
    let mut flux = 0.0;
    for xj in &t.centers {
        for (w, wq) in grid.directions().iter().zip(grid.weights()) {
            let p = xj + w * sigma;
            let mut u = Vec3::zeros();
            let mut dr = Vec3::zeros();
            for (vi, xi) in t.torques.iter().zip(&t.centers) {
                let rel = p - xi;
                let r = rel.norm();
                u += vi * (rho / r);
                // d/dr along w of rho v_i / |p - x_i|
                dr -= vi * (rho * rel.dot(w) / (r * r * r));
            }
            flux -= u.dot(&dr) * wq * sigma * sigma;
        }
    }
    let self_energy: f64 = t.torques.iter().map(|v| 4.0 * PI * rho * v.norm_squared() / sigma).sum();
    flux / rho - self_energy
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair(v1: Vec3, v2: Vec3, rho: f64) -> TorqueSet {
        TorqueSet::new(vec![v1, v2], vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)], rho, Vec3::z()).unwrap()
    }

    #[test]
    fn closed_form_cases() {
        let one = TorqueSet::new(vec![Vec3::x()], vec![Vec3::zeros()], 0.01, Vec3::z()).unwrap();
        assert_eq!(coulomb_interaction(&one).unwrap(), 0.0);
        assert_eq!(coulomb_interaction(&pair(Vec3::x(), Vec3::y(), 0.01)).unwrap(), 0.0);
        let aligned = coulomb_interaction(&pair(Vec3::x(), Vec3::x(), 0.01)).unwrap();
        assert_abs_diff_eq!(aligned, -0.04 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(aligned, -0.125664, epsilon = 1e-6);
    }

    #[test]
    fn prediction_cases() {
        let t = pair(Vec3::x(), Vec3::x(), 0.0);
        assert_eq!(expansion_prediction(&[0.3, 0.4], &t).unwrap(), 0.7);
        let t = pair(Vec3::x(), Vec3::x(), 0.01);
        assert_abs_diff_eq!(expansion_prediction(&[1.0, 1.0], &t).unwrap(), 2.0 - 0.04 * PI, epsilon = 1e-14);
        assert!(expansion_prediction(&[1.0], &t).is_err());
        let one = TorqueSet::new(vec![Vec3::x()], vec![Vec3::zeros()], 0.3, Vec3::z()).unwrap();
        assert_eq!(expansion_prediction(&[1.25], &one).unwrap(), 1.25);
    }

    #[test]
    fn validation() {
        assert!(TorqueSet::new(vec![Vec3::x()], vec![Vec3::zeros()], 0.1, Vec3::new(0.0, 0.0, 1.001)).is_err());
        let t = TorqueSet::new(vec![Vec3::new(0.1, 0.0, 0.01)], vec![Vec3::zeros()], 0.1, Vec3::z()).unwrap();
        assert_abs_diff_eq!(t.orthogonality_defect, 0.01, epsilon = 1e-15);
        assert!(TorqueSet::new_strict(vec![Vec3::new(0.1, 0.0, 0.01)], vec![Vec3::zeros()], 0.1, Vec3::z()).is_err());
        let same = TorqueSet::new(vec![Vec3::x(), Vec3::x()], vec![Vec3::zeros(), Vec3::zeros()], 0.1, Vec3::z()).unwrap();
        assert!(coulomb_interaction(&same).is_err());
    }

    #[test]
    fn renormalization_single_particle_cancels() {
        let t = TorqueSet::new(vec![Vec3::new(0.3, 0.2, 0.0)], vec![Vec3::zeros()], 1.0, Vec3::z()).unwrap();
        let r = renormalized_limit_oracle(&t, &[0.4, 0.2, 0.1]).unwrap();
        assert!(r.sequence.iter().all(|s| s.abs() < 1e-12), "{:?}", r.sequence);
    }

    #[test]
    fn renormalization_orthogonal_pair() {
        let r = renormalized_limit_oracle(&pair(Vec3::x(), Vec3::y(), 1.0), &DEFAULT_CUTOFFS).unwrap();
        assert!(r.limit.abs() < 1e-8);
    }

    #[test]
    fn renormalization_aligned_pair_magnitude() {
        let t = pair(Vec3::x(), Vec3::x(), 1.0);
        let r = renormalized_limit_oracle(&t, &DEFAULT_CUTOFFS).unwrap();
        let c = coulomb_interaction(&t).unwrap();
        assert_abs_diff_eq!(r.limit.abs(), c.abs(), epsilon = 1e-6);
        assert_eq!(r.measured_sign, 1);
        assert!(!r.agrees_with_display());
    }

    #[test]
    fn rejects_bad_cutoffs() {
        let t = pair(Vec3::x(), Vec3::x(), 1.0);
        assert!(renormalized_limit_oracle(&t, &[1.5]).is_err());
        assert!(renormalized_limit_oracle(&t, &[0.1, 0.2]).is_err());
    }
}
