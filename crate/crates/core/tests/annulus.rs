use ncol_core::annulus::{annulus_split, fit_far_field, mode_coeffs_two_radius, mode_exponents, FitOptions};
use ncol_core::field::Rotated;
use ncol_core::sph::{build_mode_table, gauss_legendre, AngularGrid};
use ncol_core::Vec3;
use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Radial average of `u^2 r^2 dr` over `[lo, hi]` normalized by the shell volume.
fn shell_average(u: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (x, w) = gauss_legendre(48);
    let (mut num, mut den) = (0.0, 0.0);
    for (xi, wi) in x.iter().zip(&w) {
        let r = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xi;
        num += wi * u(r).powi(2) * r * r;
        den += wi * r * r;
    }
    num / den
}

#[test]
fn noisy_two_radius_amplification_does_not_grow_with_degree() {
    let mu = 2f64.cbrt();
    let r0: f64 = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut constants = Vec::new();
    for l in [2usize, 4, 8] {
        let (gp, gm) = mode_exponents(3, l);
        let mut c = 0.0_f64;
        for _ in 0..400 {
            let a = rng.gen_range(-1.0..1.0) * r0.powf(-gp);
            let b = rng.gen_range(-1.0..1.0) * r0.powf(gm);
            let u = |r: f64| a * r.powf(gp) + b * r.powf(-gm);
            let r1 = rng.gen_range(r0..mu * r0);
            let r2 = rng.gen_range(mu * mu * r0..mu.powi(3) * r0);
            let mut noisy = |r: f64| u(r) * (1.0 + 1e-3 * rng.gen_range(-1.0..1.0));
            let s = mode_coeffs_two_radius((noisy(r1), noisy(r2)), (r1, r2), 3, l).unwrap();
            let avg = shell_average(&u, r0, mu.powi(3) * r0);
            let ca = s.a.powi(2) * r0.powf(2.0 * gp) * mu.powf(2.0 * gp) / avg;
            let cb = s.b.powi(2) * r0.powf(-2.0 * gm) * mu.powf(-4.0 * gm) / avg;
            c = c.max(ca).max(cb);
        }
        assert!(c.is_finite() && c > 0.0);
        constants.push(c);
    }
    for c in &constants[1..] {
        assert!(*c <= 2.0 * constants[0], "{constants:?}");
    }
}

fn outer_shell_energy(grad_sq: &dyn Fn(&Vec3) -> f64, lo: f64, hi: f64) -> f64 {
    let g = AngularGrid::for_band_limit(32);
    let (x, w) = gauss_legendre(40);
    let mut e = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let r = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xi;
        let vals: Vec<f64> = g.directions().iter().map(|d| grad_sq(&(d * r))).collect();
        e += 0.5 * (hi - lo) * wi * r * r * g.integrate(&vals);
    }
    e
}

#[test]
fn growing_part_scales_with_outer_energy() {
    let mut ratios = Vec::new();
    for r_star in [8.0, 16.0, 32.0] {
        let p = Vec3::new(0.3, -0.4, 1.1).normalize() * (1.25 * r_star);
        let field = move |x: &Vec3| Vec3::new(1.0 / (x - p).norm(), 0.0, 0.0);
        let split = annulus_split(&field, 1.0, r_star, 24, 1e-6).unwrap();
        assert!(split.decaying.iter().all(|b| b.norm() < 1e-8 * r_star));
        let grad_sq = |x: &Vec3| (x - p).norm().powi(-4);
        let e = outer_shell_energy(&grad_sq, 0.5 * r_star, r_star);
        ratios.push(split.growing_sup(0.25 * r_star) / (r_star.powf(-0.5) * e.sqrt()));
    }
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0_f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi <= 2.0 * lo, "{ratios:?}");
}

#[test]
fn split_recovers_planted_coefficients() {
    let l_max = 4;
    let table = build_mode_table(l_max);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rv = || Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let constant = rv();
    let dec: Vec<Vec3> = (0..table.len()).map(|_| rv()).collect();
    let mut grow: Vec<Vec3> = (0..table.len()).map(|_| rv() * 0.01).collect();
    grow[0] = Vec3::zeros();
    let (t, d, g) = (&table, dec.clone(), grow.clone());
    let field = move |x: &Vec3| {
        let r = x.norm();
        let phi = t.eval_all(&(x / r)).unwrap();
        let mut out = constant;
        for (k, p) in phi.iter().enumerate() {
            let l = t.mode(k).degree as i32;
            out += d[k] * (p * r.powi(-(l + 1))) + g[k] * (p * r.powi(l));
        }
        out
    };
    let split = annulus_split(&field, 1.0, 12.0, l_max, 1e-10).unwrap();
    assert!((split.constant - constant).norm() < 1e-10);
    for k in 0..table.len() {
        assert!((split.decaying[k] - dec[k]).norm() < 1e-9, "k={k}");
        assert!((split.growing[k] - grow[k]).norm() < 1e-10, "k={k}");
    }
    let x = Vec3::new(2.0, -1.0, 1.5);
    assert!((split.decaying_at(&x) + split.growing_at(&x) - field(&x)).norm() < 1e-10);
    assert!(annulus_split(&field, 1.0, 3.0, l_max, 1e-10).is_err());
}

#[test]
fn far_field_fit_recovers_planted_torque() {
    let n = Vec3::z();
    let v0 = Vec3::new(0.06, -0.08, 0.0);
    let field = move |x: &Vec3| {
        let r = x.norm();
        (n + v0 / r + Vec3::new(0.2 * x.x * x.y / r.powi(4), 0.0, 0.0)).normalize()
    };
    let fit = fit_far_field(&field, &Vec3::zeros(), (10.0, 40.0), &FitOptions::default()).unwrap();
    assert!((fit.v - v0).norm() <= 0.01 * v0.norm(), "{:?}", fit.v);
    assert!((fit.n_inf_est - n).norm() <= 1e-4);
    assert!(fit.orthogonality_defect.abs() <= 1e-3, "{}", fit.orthogonality_defect);
}

#[test]
fn far_field_fit_is_rotation_equivariant() {
    let n = Vec3::z();
    let v0 = Vec3::new(0.05, 0.02, 0.0);
    let field = move |x: &Vec3| {
        let r = x.norm();
        n + v0 / r + Vec3::new(0.05 * x.x * x.y / r.powi(3), 0.0, 0.0)
    };
    let base = fit_far_field(&field, &Vec3::zeros(), (10.0, 40.0), &FitOptions::default()).unwrap();
    let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
    let rotated = Rotated { field: &field, rotation: rot };
    let fit = fit_far_field(&rotated, &Vec3::zeros(), (10.0, 40.0), &FitOptions::default()).unwrap();
    assert!((fit.v - rot * base.v).norm() < 1e-10);
    assert!((fit.n_inf_est - rot * base.n_inf_est).norm() < 1e-12);
}
