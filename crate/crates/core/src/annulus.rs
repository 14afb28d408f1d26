//! Radial mode analysis in annuli: decaying solutions of the radial Poisson
//! problem, two-radius coefficient solves, decaying/growing splits of
//! harmonic fields and far-field monopole fits.

use std::f64::consts::PI;

use quadrature::double_exponential;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::sph::{gauss_legendre, AngularGrid, SphericalTransform};
use crate::Vec3;

/// Exponents `(gamma_plus, gamma_minus)` of the separated solutions
/// `r^gamma_plus` and `r^-gamma_minus` for degree `l` in dimension `d`.
pub fn mode_exponents(d: usize, l: usize) -> (f64, f64) {
    let half = (d as f64 - 2.0) / 2.0;
    let lf = l as f64;
    let lambda = lf * lf + lf * (d as f64 - 2.0);
    let s = (half * half + lambda).sqrt();
    (s - half, s + half)
}

/// Area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (d as f64 - 2.0) * sphere_area(d - 2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub d: usize,
    pub l: usize,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Common ratio of consecutive radii.
    pub ratio: f64,
}

impl RadialProfile {
    pub fn new(d: usize, l: usize, radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: radii.len(),
                got: values.len(),
            });
        }
        if radii.len() < 2 || radii[0] <= 0.0 {
            return Err(Error::invalid("radius ladder needs at least two positive radii"));
        }
        let ratio = radii[1] / radii[0];
        for w in radii.windows(2) {
            if w[1] <= w[0] || ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("radius ladder must be strictly increasing and geometric"));
            }
        }
        let (gamma_plus, gamma_minus) = mode_exponents(d, l);
        Ok(Self {
            d,
            l,
            gamma_plus,
            gamma_minus,
            radii,
            values,
            ratio,
        })
    }
}

/// Geometric radius ladder from `lo` to `hi` with `per_octave` points per doubling.
pub fn geometric_ladder(lo: f64, hi: f64, per_octave: usize) -> Vec<f64> {
    let n = ((hi / lo).log2() * per_octave as f64).round().max(1.0) as usize;
    let q = (hi / lo).powf(1.0 / n as f64);
    (0..=n).map(|i| lo * q.powi(i as i32)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoRadiusCoeffs {
    pub a: f64,
    pub b: f64,
    /// 2-norm condition number of the 2x2 system.
    pub condition: f64,
}

/// Solves `a R_i^gamma_plus + b R_i^-gamma_minus = u_i` for `i = 1, 2`.
///
/// In the degenerate planar case (`d = 2`, `l = 0`) the pair is `(1, -ln r)`.
pub fn mode_coeffs_two_radius(u: (f64, f64), radii: (f64, f64), d: usize, l: usize) -> Result<TwoRadiusCoeffs> {
    let (r1, r2) = radii;
    if !(r1 > 0.0 && r2 > 0.0) {
        return Err(Error::invalid("radii must be positive"));
    }
    if !(r1 < r2) {
        return Err(Error::invalid(format!("need R1 < R2, got {r1} and {r2}")));
    }
    let (gp, gm) = mode_exponents(d, l);
    let (p1, q1, p2, q2) = if d == 2 && l == 0 {
        (1.0, -r1.ln(), 1.0, -r2.ln())
    } else {
        (r1.powf(gp), r1.powf(-gm), r2.powf(gp), r2.powf(-gm))
    };
    let det = p1 * q2 - p2 * q1;
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Numerical("singular two-radius system".into()));
    }
    let a = (q2 * u.0 - q1 * u.1) / det;
    let b = (p1 * u.1 - p2 * u.0) / det;
    let fro = p1 * p1 + q1 * q1 + p2 * p2 + q2 * q2;
    let disc = (fro * fro - 4.0 * det * det).max(0.0).sqrt();
    let smax = ((fro + disc) / 2.0).sqrt();
    let smin = det.abs() / smax;
    Ok(TwoRadiusCoeffs {
        a,
        b,
        condition: smax / smin,
    })
}

/// Harmonic field split into its decaying part (constant plus
/// `b_k r^-(l+1) Phi_k`) and growing part (`a_k r^l Phi_k`, `l >= 1`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnulusSplit {
    pub radii: (f64, f64),
    pub l_max: usize,
    pub constant: Vec3,
    pub decaying: Vec<Vec3>,
    pub growing: Vec<Vec3>,
    /// Relative sup error of the reconstruction at held-out radii.
    pub holdout_error: f64,
    #[serde(skip)]
    transform: Option<SphericalTransform>,
}

impl AnnulusSplit {
    fn eval(&self, x: &Vec3, decaying: bool) -> Vec3 {
        let tr = self.transform.as_ref().expect("split carries its transform");
        let r = x.norm();
        let mut phi = vec![0.0; tr.n_modes()];
        tr.table().eval_all_unchecked(&(x / r), &mut phi);
        let mut out = if decaying { self.constant } else { Vec3::zeros() };
        for (k, p) in phi.iter().enumerate() {
            let l = tr.table().mode(k).degree as i32;
            out += if decaying {
                self.decaying[k] * (p * r.powi(-(l + 1)))
            } else {
                self.growing[k] * (p * r.powi(l))
            };
        }
        out
    }

    pub fn decaying_at(&self, x: &Vec3) -> Vec3 {
        self.eval(x, true)
    }

    pub fn growing_at(&self, x: &Vec3) -> Vec3 {
        self.eval(x, false)
    }

    /// Max of `|growing part|` over the sphere of radius `r`.
    pub fn growing_sup(&self, r: f64) -> f64 {
        let tr = self.transform.as_ref().expect("split carries its transform");
        tr.grid()
            .directions()
            .iter()
            .map(|w| self.growing_at(&(w * r)).norm())
            .fold(0.0, f64::max)
    }
}

/// Splits a field harmonic in `lambda < |x| < r_star` (centered at the
/// origin) by two-radius solves at `2 lambda` and `r_star / 2`.
///
/// Rejects the input when the reconstruction at held-out radii misses by more
/// than `100 tol` relative to the field's size.
pub fn annulus_split(field: &dyn VectorField, lambda: f64, r_star: f64, l_max: usize, tol: f64) -> Result<AnnulusSplit> {
    let (r1, r2) = (2.0 * lambda, 0.5 * r_star);
    if !(lambda > 0.0 && r1 < r2) {
        return Err(Error::invalid(format!(
            "annulus too thin: need 4 lambda < r_star, got lambda={lambda}, r_star={r_star}"
        )));
    }
    let tr = SphericalTransform::new(l_max, AngularGrid::for_band_limit(l_max + 4))?;
    let sample = |r: f64| -> Vec<Vec3> {
        tr.grid().directions().iter().map(|w| field.sample(&(w * r))).collect()
    };
    let c1 = tr.forward(&sample(r1))?;
    let c2 = tr.forward(&sample(r2))?;
    let nm = tr.n_modes();
    let mut decaying = vec![Vec3::zeros(); nm];
    let mut growing = vec![Vec3::zeros(); nm];
    let mut constant = Vec3::zeros();
    for k in 0..nm {
        let l = tr.table().mode(k).degree;
        for comp in 0..3 {
            let s = mode_coeffs_two_radius((c1[k][comp], c2[k][comp]), (r1, r2), 3, l)?;
            decaying[k][comp] = s.b;
            if l == 0 {
                constant[comp] = s.a * tr.basis_row(0)[0];
            } else {
                growing[k][comp] = s.a;
            }
        }
    }
    let mut split = AnnulusSplit {
        radii: (r1, r2),
        l_max,
        constant,
        decaying,
        growing,
        holdout_error: 0.0,
        transform: Some(tr),
    };
    let holdout = [(r1 * r2).sqrt(), r1 * (r2 / r1).powf(0.25), r1 * (r2 / r1).powf(0.8)];
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    let grid = AngularGrid::for_band_limit(l_max + 3);
    for &r in &holdout {
        for w in grid.directions() {
            let x = w * r;
            let f = field.sample(&x);
            let g = split.decaying_at(&x) + split.growing_at(&x);
            worst = worst.max((f - g).norm());
            scale = scale.max(f.norm());
        }
    }
    split.holdout_error = worst / scale.max(f64::MIN_POSITIVE);
    if split.holdout_error > 100.0 * tol {
        return Err(Error::Numerical(format!(
            "field is not harmonic in the annulus: held-out error {:.3e}",
            split.holdout_error
        )));
    }
    Ok(split)
}

/// Radial data of one mode: `f(r) Phi_k` with `Phi_k` of degree `l`.
pub struct PoissonMode<'a> {
    pub d: usize,
    pub l: usize,
    pub f: &'a (dyn Fn(f64) -> f64 + Sync),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonOptions {
    /// Decay rate of the source, `gamma >= d - 2`.
    pub gamma: f64,
    /// Logarithmic correction exponent.
    pub theta: f64,
    /// Inner radius, `lambda >= 1`.
    pub lambda: f64,
    /// Number of dyadic shells `[R, 2R]` checked, starting at `lambda`.
    pub dyads: usize,
    /// Ladder points per dyad.
    pub per_dyad: usize,
    /// Largest accepted growth of the source envelope factor across dyads.
    pub envelope_growth: f64,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            theta: 0.0,
            lambda: 1.0,
            dyads: 8,
            per_dyad: 4,
            envelope_growth: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonSolution {
    pub profile: RadialProfile,
    /// `true` when the tail formula (integrating from infinity) was used.
    pub tail_branch: bool,
    /// `max |L u - f| / max |f|` over the ladder.
    pub residual: f64,
    /// Largest `sqrt(avg f^2) R^(gamma+2) / ln^theta(2R/lambda)` over the dyads.
    pub source_envelope: f64,
    /// Per-dyad constants `sqrt(avg u^2) R^gamma / ln^(1+theta)(2R/lambda)`.
    pub decay_constants: Vec<f64>,
}

impl PoissonSolution {
    /// Largest decay constant over all dyads divided by the largest over the
    /// first half of them.
    pub fn decay_stability(&self) -> f64 {
        let n = self.decay_constants.len();
        let all = self.decay_constants.iter().cloned().fold(0.0, f64::max);
        let half = self.decay_constants[..n.div_ceil(2)].iter().cloned().fold(0.0, f64::max);
        if half == 0.0 {
            if all == 0.0 { 1.0 } else { f64::INFINITY }
        } else {
            all / half
        }
    }
}

/// `int_t^infinity g(s) ds` through the substitution `s = t / tau`.
fn integrate_tail(g: impl Fn(f64) -> f64, t: f64) -> f64 {
    double_exponential::integrate(|tau: f64| g(t / tau) * t / (tau * tau), 0.0, 1.0, 0.0).integral
}

fn integrate_finite(g: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    double_exponential::integrate(g, a, b, 0.0).integral
}

struct RadialSolver<'a> {
    d: f64,
    gm: f64,
    lambda: f64,
    tail: bool,
    f: &'a (dyn Fn(f64) -> f64 + Sync),
}

impl RadialSolver<'_> {
    /// `F(t) = int_t^infinity s^(d-1-gm) f(s) ds`.
    fn inner(&self, t: f64) -> f64 {
        let e = self.d - 1.0 - self.gm;
        integrate_tail(|s| s.powf(e) * (self.f)(s), t)
    }

    fn eval(&self, r: f64) -> f64 {
        let e = 2.0 * self.gm + 1.0 - self.d;
        let g = |t: f64| t.powf(e) * self.inner(t);
        let w = if self.tail {
            integrate_tail(g, r)
        } else {
            // this branch solves L u = -f as written; flip it
            -integrate_finite(g, self.lambda, r)
        };
        r.powf(-self.gm) * w
    }

    /// `L u = u'' + (d-1)/r u' - lambda_l / r^2 u`, by a five-point stencil.
    fn apply_operator(&self, r: f64, eigenvalue: f64) -> f64 {
        let h = 2e-3 * r;
        let v: Vec<f64> = (-2..=2).map(|i| self.eval(r + i as f64 * h)).collect();
        let d1 = (v[0] - 8.0 * v[1] + 8.0 * v[3] - v[4]) / (12.0 * h);
        let d2 = (-v[0] + 16.0 * v[1] - 30.0 * v[2] + 16.0 * v[3] - v[4]) / (12.0 * h * h);
        d2 + (self.d - 1.0) / r * d1 - eigenvalue / (r * r) * v[2]
    }
}

/// Dyadic average of `g^2` over `R < |x| < 2R` for `g(r) Phi_k` (unit `Phi_k`).
fn dyadic_mean_sq(g: &dyn Fn(f64) -> f64, r: f64, d: usize, nodes: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (x, w) = nodes;
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        let s = r * (1.5 + 0.5 * xi);
        let jac = s.powi(d as i32 - 1) * wi;
        num += g(s).powi(2) * jac;
        den += jac;
    }
    num / den / sphere_area(d)
}

/// Decaying solutions of `L_l u = f` outside `B_lambda`, one per mode.
///
/// Modes with `gamma_minus < gamma` integrate from infinity twice; the others
/// integrate the outer integral from `lambda`, with the sign flipped so that
/// every returned profile solves `L u = +f`.
pub fn decaying_poisson(modes: &[PoissonMode], options: &PoissonOptions) -> Result<Vec<PoissonSolution>> {
    let o = options;
    if o.lambda < 1.0 {
        return Err(Error::invalid(format!("lambda must be at least 1, got {}", o.lambda)));
    }
    if o.theta < 0.0 || o.dyads < 2 || o.per_dyad < 1 {
        return Err(Error::invalid("need theta >= 0, at least two dyads and one point per dyad"));
    }
    modes
        .par_iter()
        .map(|m| {
            if m.d < 3 {
                return Err(Error::invalid("decaying Poisson solutions need d >= 3"));
            }
            if o.gamma < m.d as f64 - 2.0 {
                return Err(Error::invalid(format!("gamma must be at least d - 2 = {}", m.d - 2)));
            }
            solve_mode(m, o)
        })
        .collect()
}

fn solve_mode(m: &PoissonMode, o: &PoissonOptions) -> Result<PoissonSolution> {
    let d = m.d;
    let (gp, gm) = mode_exponents(d, m.l);
    let eigenvalue = (m.l * m.l + m.l * (d - 2)) as f64;
    let solver = RadialSolver {
        d: d as f64,
        gm,
        lambda: o.lambda,
        tail: gm < o.gamma,
        f: m.f,
    };
    let nodes = gauss_legendre(12);
    let log_factor = |r: f64, p: f64| (2.0 * r / o.lambda).ln().powf(p);

    let dyad_radii: Vec<f64> = (0..o.dyads).map(|i| o.lambda * 2f64.powi(i as i32)).collect();
    let envelope: Vec<f64> = dyad_radii
        .iter()
        .map(|&r| dyadic_mean_sq(&|s| (m.f)(s), r, d, &nodes).sqrt() * r.powf(o.gamma + 2.0) / log_factor(r, o.theta))
        .collect();
    let first = envelope.iter().cloned().find(|v| *v > 0.0);
    if let Some(first) = first {
        let growth = envelope.iter().cloned().fold(0.0, f64::max) / first;
        if growth > o.envelope_growth {
            return Err(Error::Validation(vec![format!(
                "source (d={d}, l={}) violates the decay envelope: factor grows {growth:.2}x across dyads",
                m.l
            )]));
        }
    }
    let source_envelope = envelope.iter().cloned().fold(0.0, f64::max);

    let hi = o.lambda * 2f64.powi(o.dyads as i32);
    let radii = geometric_ladder(o.lambda, hi, o.per_dyad);
    let values: Vec<f64> = radii.iter().map(|&r| solver.eval(r)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("quadrature failed for mode l={}", m.l)));
    }

    // the stencil reaches below the inner radius at r = lambda; skip that point
    let mut defect = 0.0_f64;
    let mut fmax = 0.0_f64;
    for &r in radii.iter().skip(1) {
        let f = (m.f)(r);
        defect = defect.max((solver.apply_operator(r, eigenvalue) - f).abs());
        fmax = fmax.max(f.abs());
    }
    let residual = if fmax == 0.0 { defect } else { defect / fmax };

    // start at 2 lambda, where ln(2R/lambda) is bounded away from ln 2
    let decay_constants: Vec<f64> = dyad_radii
        .iter()
        .skip(1)
        .map(|&r| dyadic_mean_sq(&|s| solver.eval(s), r, d, &nodes).sqrt() * r.powf(o.gamma) / log_factor(r, 1.0 + o.theta))
        .collect();

    let mut profile = RadialProfile::new(d, m.l, radii, values)?;
    profile.gamma_plus = gp;
    Ok(PoissonSolution {
        profile,
        tail_branch: solver.tail,
        residual,
        source_envelope,
        decay_constants,
    })
}

/// Monopole fit `m(R) = n_inf + v / R` of a far field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarFieldFit {
    pub n_inf_est: Vec3,
    pub v: Vec3,
    /// `(R, R avg |n - n_inf_est - v/R|^2)` per fitted sphere.
    pub residuals: Vec<(f64, f64)>,
    pub orthogonality_defect: f64,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub radii: usize,
    pub l_grid: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { radii: 6, l_grid: 16 }
    }
}

/// Fits the surface averages of `field` on spheres around `center` with radii
/// spread geometrically over `window`.
pub fn fit_far_field(field: &dyn VectorField, center: &Vec3, window: (f64, f64), options: &FitOptions) -> Result<FarFieldFit> {
    let (lo, hi) = window;
    if !(lo > 0.0) || hi / lo < 1.5 {
        return Err(Error::invalid(format!(
            "fit window [{lo}, {hi}] is ill-conditioned (need ratio >= 1.5)"
        )));
    }
    if options.radii < 3 {
        return Err(Error::invalid("far-field fit needs at least 3 radii"));
    }
    let grid = AngularGrid::for_band_limit(options.l_grid);
    let n = options.radii;
    let radii: Vec<f64> = (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect();
    let samples: Vec<Vec<Vec3>> = radii
        .par_iter()
        .map(|&r| grid.directions().iter().map(|w| field.sample(&(center + w * r))).collect())
        .collect();
    let means: Vec<Vec3> = samples.iter().map(|s| grid.average(s)).collect();
    let xs: Vec<f64> = radii.iter().map(|r| 1.0 / r).collect();
    let xbar = xs.iter().sum::<f64>() / n as f64;
    let mbar = means.iter().fold(Vec3::zeros(), |a, m| a + m) / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxm = xs
        .iter()
        .zip(&means)
        .fold(Vec3::zeros(), |a, (x, m)| a + (m - mbar) * (x - xbar));
    let v = sxm / sxx;
    let n_inf_est = mbar - v * xbar;
    let residuals = radii
        .iter()
        .zip(&samples)
        .map(|(&r, s)| {
            let fit = n_inf_est + v / r;
            let dev: Vec<f64> = s.iter().map(|x| (x - fit).norm_squared()).collect();
            (r, r * grid.integrate(&dev) / (4.0 * PI))
        })
        .collect();
    Ok(FarFieldFit {
        n_inf_est,
        v,
        residuals,
        orthogonality_defect: v.dot(&n_inf_est),
        window,
    })
}

/// Quadrature nodes covering the annulus `lambda/2 < |x| < 2 lambda` plus the
/// sphere `|x| = lambda`, around a center.
#[derive(Debug, Clone)]
pub struct AnnulusGrid {
    pub lambda: f64,
    pub center: Vec3,
    volume_points: Vec<Vec3>,
    volume_weights: Vec<f64>,
    sphere_points: Vec<Vec3>,
    sphere_weights: Vec<f64>,
}

impl AnnulusGrid {
    pub fn new(lambda: f64, center: Vec3, n_radial: usize, l_grid: usize) -> Result<Self> {
        if !(lambda > 0.0) || n_radial == 0 {
            return Err(Error::invalid("annulus grid needs lambda > 0 and radial nodes"));
        }
        let ang = AngularGrid::for_band_limit(l_grid);
        let (x, w) = gauss_legendre(n_radial);
        let (a, b) = (0.5 * lambda, 2.0 * lambda);
        let mut volume_points = Vec::new();
        let mut volume_weights = Vec::new();
        for (xi, wi) in x.iter().zip(&w) {
            let r = 0.5 * (a + b) + 0.5 * (b - a) * xi;
            for (d, wd) in ang.directions().iter().zip(ang.weights()) {
                volume_points.push(center + d * r);
                volume_weights.push(wi * 0.5 * (b - a) * r * r * wd);
            }
        }
        let sphere_points = ang.directions().iter().map(|d| center + d * lambda).collect();
        let sphere_weights = ang.weights().to_vec();
        Ok(Self {
            lambda,
            center,
            volume_points,
            volume_weights,
            sphere_points,
            sphere_weights,
        })
    }

    /// Volume nodes followed by sphere nodes; samples are passed in this order.
    pub fn points(&self) -> Vec<Vec3> {
        self.volume_points.iter().chain(&self.sphere_points).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.volume_points.len() + self.sphere_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, field: &dyn VectorField) -> Vec<Vec3> {
        self.points().par_iter().map(|x| field.sample(x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaDiagnostics {
    pub lambda: f64,
    pub big_theta: f64,
    pub small_theta: f64,
    pub xi: f64,
}

/// `Xi = lambda rho + 1/lambda + Theta^(1/2) + Theta + (1 + Theta^2) / (lambda^3 rho)`.
pub fn xi_bound(lambda: f64, rho: f64, big_theta: f64) -> f64 {
    lambda * rho + 1.0 / lambda + big_theta.sqrt() + big_theta + (1.0 + big_theta * big_theta) / (lambda.powi(3) * rho)
}

/// Mean-square deviations of a rescaled field from the reference minimizer,
/// both sampled on `grid`.
pub fn theta_diagnostics(n_hat: &[Vec3], m_hat: &[Vec3], grid: &AnnulusGrid, rho: f64) -> Result<ThetaDiagnostics> {
    if n_hat.len() != grid.len() || m_hat.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: if n_hat.len() != grid.len() { n_hat.len() } else { m_hat.len() },
        });
    }
    let nv = grid.volume_points.len();
    let avg = |range: std::ops::Range<usize>, w: &[f64]| {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, wi) in range.zip(w) {
            num += (n_hat[i] - m_hat[i]).norm_squared() * wi;
            den += wi;
        }
        num / den
    };
    let lambda = grid.lambda;
    let big_theta = lambda * lambda * avg(0..nv, &grid.volume_weights);
    let small_theta = lambda * lambda * avg(nv..grid.len(), &grid.sphere_weights);
    Ok(ThetaDiagnostics {
        lambda,
        big_theta,
        small_theta,
        xi: xi_bound(lambda, rho, big_theta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exponents_by_dimension() {
        for l in 0..10 {
            for d in 2..6 {
                let (gp, gm) = mode_exponents(d, l);
                assert_abs_diff_eq!(gm - gp, d as f64 - 2.0, epsilon = 1e-12);
                assert_abs_diff_eq!(gp, l as f64, epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(sphere_area(3), 4.0 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(sphere_area(4), 2.0 * PI * PI, epsilon = 1e-14);
    }

    #[test]
    fn two_radius_exact_cases() {
        let s = mode_coeffs_two_radius((2.0 + 3.0, 4.0 + 0.75), (1.0, 2.0), 3, 1).unwrap();
        assert_abs_diff_eq!(s.a, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.b, 3.0, epsilon = 1e-12);
        let s = mode_coeffs_two_radius((1.0 / 1.5, 1.0 / 4.0), (1.5, 4.0), 3, 0).unwrap();
        assert_abs_diff_eq!(s.a, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.b, 1.0, epsilon = 1e-12);
        assert!(s.condition >= 1.0);
        assert!(mode_coeffs_two_radius((1.0, 1.0), (2.0, 2.0), 3, 1).is_err());
    }

    #[test]
    fn poisson_known_solutions() {
        let f = |r: f64| r.powi(-4);
        let opts = PoissonOptions::default();
        let sols = decaying_poisson(
            &[PoissonMode { d: 3, l: 0, f: &f }, PoissonMode { d: 3, l: 2, f: &f }],
            &opts,
        )
        .unwrap();
        let s0 = &sols[0];
        assert!(s0.tail_branch);
        for (r, u) in s0.profile.radii.iter().zip(&s0.profile.values) {
            assert_abs_diff_eq!(*u, 0.5 / (r * r), epsilon = 1e-8);
        }
        let s2 = &sols[1];
        assert!(!s2.tail_branch);
        for (r, u) in s2.profile.radii.iter().zip(&s2.profile.values) {
            assert_abs_diff_eq!(*u, -(r.powi(-2) - r.powi(-3)) / 4.0, epsilon = 1e-8);
        }
        assert!(s0.residual <= 1e-6 && s2.residual <= 1e-6, "{} {}", s0.residual, s2.residual);
    }

    #[test]
    fn poisson_zero_source() {
        let f = |_r: f64| 0.0;
        let s = decaying_poisson(&[PoissonMode { d: 3, l: 1, f: &f }], &PoissonOptions::default()).unwrap();
        assert!(s[0].profile.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn poisson_rejects_slow_source() {
        let f = |r: f64| r.powi(-2);
        let err = decaying_poisson(&[PoissonMode { d: 3, l: 0, f: &f }], &PoissonOptions::default()).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn theta_formulas() {
        let grid = AnnulusGrid::new(3.0, Vec3::zeros(), 4, 4).unwrap();
        let a = vec![Vec3::z(); grid.len()];
        let t = theta_diagnostics(&a, &a, &grid, 0.01).unwrap();
        assert_eq!((t.big_theta, t.small_theta), (0.0, 0.0));
        assert_abs_diff_eq!(t.xi, 0.03 + 1.0 / 3.0 + 1.0 / (27.0 * 0.01), epsilon = 1e-12);
        let c = Vec3::new(0.1, -0.2, 0.0);
        let b: Vec<Vec3> = a.iter().map(|x| x + c).collect();
        let t = theta_diagnostics(&b, &a, &grid, 0.01).unwrap();
        assert_abs_diff_eq!(t.big_theta, 9.0 * c.norm_squared(), epsilon = 1e-13);
        assert_abs_diff_eq!(t.small_theta, 9.0 * c.norm_squared(), epsilon = 1e-13);
        assert!(theta_diagnostics(&b[1..], &a, &grid, 0.01).is_err());
    }

    #[test]
    fn fit_constant_and_window() {
        let n = Vec3::new(0.0, 0.6, 0.8);
        let f = move |_x: &Vec3| n;
        let fit = fit_far_field(&f, &Vec3::zeros(), (10.0, 40.0), &FitOptions::default()).unwrap();
        assert!((fit.n_inf_est - n).norm() < 1e-12);
        assert!(fit.v.norm() < 1e-12);
        assert!(fit.residuals.iter().all(|(_, r)| *r < 1e-20));
        assert!(fit_far_field(&f, &Vec3::zeros(), (10.0, 14.0), &FitOptions::default()).is_err());
    }
}
