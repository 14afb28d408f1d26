//! Real orthonormal spherical harmonics on the unit sphere.
//!
//! Convention: fully normalized real harmonics without the Condon–Shortley
//! phase. The flat index is `k = l*l + l + m` (degree-major), and
//!
//! ```text
//! Phi_k = Nbar_l^|m| P_l^|m|(cos t)              m = 0
//!       = sqrt(2) Nbar_l^m P_l^m(cos t) cos(m p)   m > 0
//!       = sqrt(2) Nbar_l^|m| P_l^|m|(cos t) sin(|m| p)   m < 0
//! ```
//!
//! so that `Phi_0 = 1 / (2 sqrt(pi))` and the set is orthonormal in
//! `L^2(S^2)`. Quadrature is Gauss–Legendre in `cos t` times a uniform rule in
//! the azimuth, which is exact for products of band-limited functions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// Inputs closer than this to unit length are silently renormalized.
pub const UNIT_RENORMALIZE_TOL: f64 = 1e-8;

/// Checks that `w` is a unit vector, renormalizing small rounding defects.
pub fn unit_direction(w: &Vec3) -> Result<Vec3> {
    let norm = w.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_RENORMALIZE_TOL {
        return Err(Error::NonUnit { norm });
    }
    Ok(w / norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub degree: usize,
    pub order: i64,
    /// Laplace–Beltrami eigenvalue `l^2 + l`.
    pub eigenvalue: f64,
    /// Exponent of the growing solid harmonic `r^l`.
    pub gamma_plus: f64,
    /// Exponent of the decaying solid harmonic `r^-(l+1)`.
    pub gamma_minus: f64,
}

/// Metadata of every mode up to a band limit, in flat-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTable {
    l_max: usize,
    modes: Vec<Mode>,
}

/// Builds the mode table for degrees `0..=l_max`.
pub fn build_mode_table(l_max: usize) -> ModeTable {
    let mut modes = Vec::with_capacity((l_max + 1) * (l_max + 1));
    for l in 0..=l_max {
        for m in -(l as i64)..=(l as i64) {
            let lf = l as f64;
            modes.push(Mode {
                degree: l,
                order: m,
                eigenvalue: lf * lf + lf,
                gamma_plus: lf,
                gamma_minus: lf + 1.0,
            });
        }
    }
    ModeTable { l_max, modes }
}

impl ModeTable {
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode(&self, k: usize) -> &Mode {
        &self.modes[k]
    }

    pub fn index(&self, l: usize, m: i64) -> usize {
        debug_assert!(l <= self.l_max && m.unsigned_abs() as usize <= l);
        ((l * l + l) as i64 + m) as usize
    }

    /// Evaluates every basis function at the (already unit) direction `w`.
    ///
    /// `out` must hold `len()` values. Uses the fully normalized upward
    /// recurrence on `P_l^m / sin^m`, with `sin^m e^{i m p}` obtained as a
    /// complex power of `x + i y`, so the poles need no special casing.
    pub fn eval_all_unchecked(&self, w: &Vec3, out: &mut [f64]) {
        let l_max = self.l_max;
        debug_assert!(out.len() >= self.modes.len());
        let x = w.z;
        let inv_sqrt_4pi = 0.5 / PI.sqrt();
        // (c_m, s_m) = Re, Im of (w.x + i w.y)^m
        let (mut cm, mut sm) = (1.0_f64, 0.0_f64);
        // q_mm = Pbar_m^m / sin^m
        let mut q_mm = inv_sqrt_4pi;
        for m in 0..=l_max {
            if m > 0 {
                let mf = m as f64;
                q_mm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt();
                let c = cm * w.x - sm * w.y;
                let s = cm * w.y + sm * w.x;
                cm = c;
                sm = s;
            }
            let (fc, fs) = if m == 0 {
                (1.0, 0.0)
            } else {
                (std::f64::consts::SQRT_2 * cm, std::f64::consts::SQRT_2 * sm)
            };
            let mf = m as f64;
            let mut q_prev2 = 0.0;
            let mut q_prev = q_mm;
            for l in m..=l_max {
                let q = if l == m {
                    q_mm
                } else if l == m + 1 {
                    (2.0 * mf + 3.0).sqrt() * x * q_mm
                } else {
                    let lf = l as f64;
                    let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                    let b = (((lf - 1.0) * (lf - 1.0) - mf * mf)
                        / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                        .sqrt();
                    a * (x * q_prev - b * q_prev2)
                };
                if l > m {
                    q_prev2 = q_prev;
                    q_prev = q;
                }
                let base = l * l + l;
                if m == 0 {
                    out[base] = q;
                } else {
                    out[base + m] = q * fc;
                    out[base - m] = q * fs;
                }
            }
        }
    }

    /// Evaluates every basis function at `w`, rejecting non-unit input.
    pub fn eval_all(&self, w: &Vec3) -> Result<Vec<f64>> {
        let w = unit_direction(w)?;
        let mut out = vec![0.0; self.len()];
        self.eval_all_unchecked(&w, &mut out);
        Ok(out)
    }
}

/// `Phi_k(w)` for a single mode.
pub fn eval_basis(mode: &Mode, w: &Vec3) -> Result<f64> {
    let w = unit_direction(w)?;
    let table = build_mode_table(mode.degree);
    let mut vals = vec![0.0; table.len()];
    table.eval_all_unchecked(&w, &mut vals);
    Ok(vals[table.index(mode.degree, mode.order)])
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes in decreasing order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        // one more derivative evaluation at the converged node
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        if n > 1 {
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Product quadrature on the sphere: Gauss–Legendre in `cos t` times a uniform
/// azimuthal rule. Node `q = i_theta * n_phi + i_phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid {
    n_theta: usize,
    n_phi: usize,
    cos_theta: Vec<f64>,
    theta_weights: Vec<f64>,
    directions: Vec<Vec3>,
    weights: Vec<f64>,
}

impl AngularGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::invalid("angular grid needs at least one node per axis"));
        }
        let (cos_theta, theta_weights) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut directions = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (&ct, &wt) in cos_theta.iter().zip(&theta_weights) {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = (j as f64 + 0.5) * dphi;
                directions.push(Vec3::new(st * phi.cos(), st * phi.sin(), ct));
                weights.push(wt * dphi);
            }
        }
        Ok(Self {
            n_theta,
            n_phi,
            cos_theta,
            theta_weights,
            directions,
            weights,
        })
    }

    /// The smallest grid integrating products of degree-`l_max` functions
    /// exactly (with an even azimuthal count).
    pub fn for_band_limit(l_max: usize) -> Self {
        Self::new(l_max + 1, 2 * l_max + 2).expect("nonzero sizes")
    }

    /// Largest band limit whose products this grid integrates exactly.
    pub fn resolved_l_max(&self) -> usize {
        (self.n_theta - 1).min((self.n_phi - 1) / 2)
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cos_theta(&self) -> &[f64] {
        &self.cos_theta
    }

    pub fn theta_weights(&self) -> &[f64] {
        &self.theta_weights
    }

    pub fn delta_phi(&self) -> f64 {
        2.0 * PI / self.n_phi as f64
    }

    /// Surface integral of a scalar sampled at the nodes.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Surface average of a vector field sampled at the nodes.
    pub fn average(&self, values: &[Vec3]) -> Vec3 {
        let s: Vec3 = values
            .iter()
            .zip(&self.weights)
            .fold(Vec3::zeros(), |acc, (v, w)| acc + v * *w);
        s / (4.0 * PI)
    }
}

/// Vector-valued coefficients `a_k` of a field on the sphere of radius
/// `radius` around `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorExpansion {
    pub l_max: usize,
    pub coeffs: Vec<Vec3>,
    pub radius: f64,
    pub center: Vec3,
}

impl VectorExpansion {
    pub fn zeros(l_max: usize, radius: f64, center: Vec3) -> Self {
        Self {
            l_max,
            coeffs: vec![Vec3::zeros(); (l_max + 1) * (l_max + 1)],
            radius,
            center,
        }
    }

    /// Expansion of a constant field `c`.
    pub fn constant(l_max: usize, c: Vec3, radius: f64, center: Vec3) -> Self {
        let mut e = Self::zeros(l_max, radius, center);
        e.coeffs[0] = c * (2.0 * PI.sqrt());
        e
    }

    /// `sum_k |a_k|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm_squared()).sum()
    }

    /// `sum_k (1 + sqrt(lambda_k)) |a_k|^2`.
    pub fn h_half_norm_sq(&self) -> f64 {
        let table = build_mode_table(self.l_max);
        self.coeffs
            .iter()
            .zip(table.modes())
            .map(|(a, m)| (1.0 + m.eigenvalue.sqrt()) * a.norm_squared())
            .sum()
    }

    /// Synthesizes the field in the (unit) direction `w`.
    pub fn eval_unchecked(&self, table: &ModeTable, w: &Vec3, scratch: &mut [f64]) -> Vec3 {
        table.eval_all_unchecked(w, scratch);
        self.coeffs
            .iter()
            .zip(scratch.iter())
            .fold(Vec3::zeros(), |acc, (a, p)| acc + a * *p)
    }
}

/// Cached basis values on a grid for repeated transforms.
#[derive(Debug, Clone)]
pub struct SphericalTransform {
    table: ModeTable,
    grid: AngularGrid,
    /// `basis[q * n_modes + k] = Phi_k(w_q)`
    basis: Vec<f64>,
}

impl SphericalTransform {
    pub fn new(l_max: usize, grid: AngularGrid) -> Result<Self> {
        if grid.resolved_l_max() < l_max {
            return Err(Error::BandLimit {
                requested: l_max,
                resolved: grid.resolved_l_max(),
            });
        }
        let table = build_mode_table(l_max);
        let nm = table.len();
        let mut basis = vec![0.0; grid.len() * nm];
        for (q, w) in grid.directions().iter().enumerate() {
            table.eval_all_unchecked(w, &mut basis[q * nm..(q + 1) * nm]);
        }
        Ok(Self { table, grid, basis })
    }

    pub fn table(&self) -> &ModeTable {
        &self.table
    }

    pub fn grid(&self) -> &AngularGrid {
        &self.grid
    }

    pub fn l_max(&self) -> usize {
        self.table.l_max()
    }

    pub fn n_modes(&self) -> usize {
        self.table.len()
    }

    pub fn basis_row(&self, q: usize) -> &[f64] {
        let nm = self.table.len();
        &self.basis[q * nm..(q + 1) * nm]
    }

    /// `a_k = sum_q w_q g(w_q) Phi_k(w_q)`.
    pub fn forward(&self, samples: &[Vec3]) -> Result<Vec<Vec3>> {
        if samples.len() != self.grid.len() {
            return Err(Error::LengthMismatch {
                expected: self.grid.len(),
                got: samples.len(),
            });
        }
        let nm = self.table.len();
        let mut coeffs = vec![Vec3::zeros(); nm];
        for (q, (g, w)) in samples.iter().zip(self.grid.weights()).enumerate() {
            let gw = g * *w;
            for (c, p) in coeffs.iter_mut().zip(self.basis_row(q)) {
                *c += gw * *p;
            }
        }
        Ok(coeffs)
    }

    /// Scalar variant of [`forward`](Self::forward).
    pub fn forward_scalar(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.grid.len() {
            return Err(Error::LengthMismatch {
                expected: self.grid.len(),
                got: samples.len(),
            });
        }
        let nm = self.table.len();
        let mut coeffs = vec![0.0; nm];
        for (q, (g, w)) in samples.iter().zip(self.grid.weights()).enumerate() {
            let gw = g * w;
            for (c, p) in coeffs.iter_mut().zip(self.basis_row(q)) {
                *c += gw * p;
            }
        }
        Ok(coeffs)
    }

    /// Synthesizes coefficients back onto the grid nodes.
    pub fn inverse(&self, coeffs: &[Vec3]) -> Vec<Vec3> {
        let nm = self.table.len().min(coeffs.len());
        (0..self.grid.len())
            .map(|q| {
                self.basis_row(q)[..nm]
                    .iter()
                    .zip(coeffs)
                    .fold(Vec3::zeros(), |acc, (p, a)| acc + a * *p)
            })
            .collect()
    }

    pub fn expansion(&self, samples: &[Vec3], radius: f64, center: Vec3) -> Result<VectorExpansion> {
        Ok(VectorExpansion {
            l_max: self.l_max(),
            coeffs: self.forward(samples)?,
            radius,
            center,
        })
    }
}

/// Componentwise spherical-harmonic coefficients of samples on `grid`.
pub fn forward_transform(samples: &[Vec3], grid: &AngularGrid, l_max: usize) -> Result<VectorExpansion> {
    SphericalTransform::new(l_max, grid.clone())?.expansion(samples, 1.0, Vec3::zeros())
}

/// `sum_k a_k Phi_k(w)`.
pub fn inverse_transform(expansion: &VectorExpansion, w: &Vec3) -> Result<Vec3> {
    let w = unit_direction(w)?;
    let table = build_mode_table(expansion.l_max);
    let mut scratch = vec![0.0; table.len()];
    Ok(expansion.eval_unchecked(&table, &w, &mut scratch))
}

/// An orthonormal tangent pair at the unit vector `w`.
pub fn tangent_frame(w: &Vec3) -> (Vec3, Vec3) {
    let helper = if w.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (helper - w * w.dot(&helper)).normalize();
    let e2 = w.cross(&e1);
    (e1, e2)
}

/// Max over the grid of `|h|` and of the angular gradient `|grad_w h|` of the
/// synthesized expansion (gradient by central differences along geodesics).
pub fn sup_norms(expansion: &VectorExpansion, grid: &AngularGrid) -> (f64, f64) {
    let table = build_mode_table(expansion.l_max);
    let mut scratch = vec![0.0; table.len()];
    let eps: f64 = 1e-5;
    let mut sup = 0.0_f64;
    let mut grad_sup = 0.0_f64;
    for w in grid.directions() {
        let v = expansion.eval_unchecked(&table, w, &mut scratch);
        sup = sup.max(v.norm());
        let (e1, e2) = tangent_frame(w);
        let mut g2 = 0.0;
        for e in [e1, e2] {
            let plus = (w * eps.cos() + e * eps.sin()).normalize();
            let minus = (w * eps.cos() - e * eps.sin()).normalize();
            let d = (expansion.eval_unchecked(&table, &plus, &mut scratch)
                - expansion.eval_unchecked(&table, &minus, &mut scratch))
                / (2.0 * eps);
            g2 += d.norm_squared();
        }
        grad_sup = grad_sup.max(g2.sqrt());
    }
    (sup, grad_sup)
}
