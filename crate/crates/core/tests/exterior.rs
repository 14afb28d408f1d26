use ncol_core::exterior::{
    direct_solve, extend_exterior, reflect_solve, solution_energy, ReexpansionOperators, ReflectOptions, ReflectionMode,
    SphereLayout,
};
use ncol_core::sph::{AngularGrid, VectorExpansion};
use ncol_core::Vec3;
use nalgebra::Rotation3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const L: usize = 6;

fn random_expansion(rng: &mut ChaCha8Rng, l_max: usize, radius: f64, center: Vec3) -> VectorExpansion {
    let mut e = VectorExpansion::zeros(l_max, radius, center);
    for (k, c) in e.coeffs.iter_mut().enumerate() {
        let decay = 1.0 / (1.0 + (k as f64).sqrt());
        *c = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * decay;
    }
    e
}

fn laplacian(f: &dyn Fn(&Vec3) -> Vec3, x: &Vec3, h: f64) -> Vec3 {
    let mut s = -6.0 * f(x);
    for e in [Vec3::x(), Vec3::y(), Vec3::z()] {
        s += f(&(x + e * h)) + f(&(x - e * h));
    }
    s / (h * h)
}

/// Smooth, non-band-limited data on each sphere of `layout`.
fn data(layout: &SphereLayout, seed: u64) -> Vec<Vec<Vec3>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = AngularGrid::for_band_limit(L);
    layout
        .centers()
        .iter()
        .map(|_| {
            let a = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let b = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            g.directions().iter().map(|w| a + b * w.dot(&a) + Vec3::new(w.x * w.y, 0.0, w.z)).collect()
        })
        .collect()
}

#[test]
fn single_extension_is_harmonic_and_matches_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let c = Vec3::new(0.3, -0.2, 0.1);
    let e = random_expansion(&mut rng, 5, 0.7, c);
    let f = |x: &Vec3| extend_exterior(&e, x).unwrap();
    for _ in 0..20 {
        let w = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        let x = c + w * rng.gen_range(1.2..3.0);
        assert!(laplacian(&f, &x, 1e-3).norm() < 1e-4, "{}", laplacian(&f, &x, 1e-3).norm());
        let on = ncol_core::sph::inverse_transform(&e, &w).unwrap();
        assert!((f(&(c + w * 0.7)) - on).norm() < 1e-12);
    }
    assert!(f(&(c + Vec3::x() * 1e4)).norm() < 1e-3);
}

/// `-sum_j int_{|x - x_j| = sigma} <u, d_r u>` with a one-sided difference
/// quotient outward from each sphere.
fn flux_energy(u: &dyn Fn(&Vec3) -> Vec3, layout: &SphereLayout) -> f64 {
    let g = AngularGrid::for_band_limit(24);
    let s = layout.radius();
    let h = 1e-4 * s;
    let mut e = 0.0;
    for c in layout.centers() {
        let vals: Vec<f64> = g
            .directions()
            .iter()
            .map(|w| {
                let u0 = u(&(c + w * s));
                let u1 = u(&(c + w * (s + h)));
                let u2 = u(&(c + w * (s + 2.0 * h)));
                let dr = (-3.0 * u0 + 4.0 * u1 - u2) / (2.0 * h);
                -u0.dot(&dr)
            })
            .collect();
        e += s * s * g.integrate(&vals);
    }
    e
}

#[test]
fn energy_agrees_with_flux_oracle() {
    let layout = SphereLayout::new(
        vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 2.5, 0.5)],
        0.3,
    )
    .unwrap();
    let d = data(&layout, 5);
    let opts = ReflectOptions { l_max: L, tol: 1e-6, ..Default::default() };
    let sol = reflect_solve(&d, &layout, &opts).unwrap();
    let e = solution_energy(&sol, &layout).unwrap();
    let oracle = flux_energy(&|x| sol.eval(x), &layout);
    assert!((e - oracle).abs() < 1e-5 * e.abs(), "{e} vs {oracle}");
    let x = Vec3::new(1.0, 1.0, 0.2);
    assert!(laplacian(&|p: &Vec3| sol.eval(p), &x, 1e-3).norm() < 1e-4);
}

#[test]
fn solvers_agree() {
    let layout = SphereLayout::new(vec![Vec3::zeros(), Vec3::new(0.0, 0.0, 2.0)], 0.25).unwrap();
    let d = data(&layout, 9);
    let ops = ReexpansionOperators::new(&layout, L).unwrap();
    let direct = solution_energy(&direct_solve(&ops, &d).unwrap(), &layout).unwrap();
    for mode in [ReflectionMode::Jacobi, ReflectionMode::GaussSeidel] {
        let opts = ReflectOptions { l_max: L, tol: 1e-5, max_iterations: 400, mode };
        let sol = reflect_solve(&d, &layout, &opts).unwrap();
        let e = solution_energy(&sol, &layout).unwrap();
        assert!((e - direct).abs() < 1e-5 * direct, "{mode:?}: {e} vs {direct}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exchange_and_rotation_invariance(seed in 0u64..1000, angle in 0.0f64..6.28, dz in 2.0f64..3.0) {
        let centers = vec![Vec3::zeros(), Vec3::new(0.5, 0.0, dz)];
        let layout = SphereLayout::new(centers.clone(), 0.3).unwrap();
        let d = data(&layout, seed);
        let opts = ReflectOptions { l_max: L, tol: 1e-6, ..Default::default() };
        let e = solution_energy(&reflect_solve(&d, &layout, &opts).unwrap(), &layout).unwrap();

        let swapped = SphereLayout::new(vec![centers[1], centers[0]], 0.3).unwrap();
        let ds = vec![d[1].clone(), d[0].clone()];
        let es = solution_energy(&reflect_solve(&ds, &swapped, &opts).unwrap(), &swapped).unwrap();
        prop_assert!((e - es).abs() < 1e-6 * e);

        // rotating the data vectors leaves every component's energy sum unchanged
        let r = Rotation3::from_axis_angle(&Vec3::y_axis(), angle);
        let dr: Vec<Vec<Vec3>> = d.iter().map(|s| s.iter().map(|v| r * v).collect()).collect();
        let er = solution_energy(&reflect_solve(&dr, &layout, &opts).unwrap(), &layout).unwrap();
        prop_assert!((e - er).abs() < 1e-6 * e);
        prop_assert!(e > 0.0);
    }
}

#[test]
fn boundary_values_are_matched() {
    let layout = SphereLayout::new(vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)], 0.25).unwrap();
    let g = AngularGrid::for_band_limit(L);
    // remote fields are not band-limited on each sphere, so the match is only
    // as good as the truncation floor
    let d: Vec<Vec<Vec3>> = (0..2)
        .map(|j| g.directions().iter().map(|w| Vec3::new(w.x, w.y * w.z, j as f64)).collect())
        .collect();
    let sol = reflect_solve(&d, &layout, &ReflectOptions { l_max: L, tol: 1e-6, ..Default::default() }).unwrap();
    for (j, c) in layout.centers().iter().enumerate() {
        for (q, w) in g.directions().iter().enumerate().step_by(7) {
            assert!((sol.eval(&(c + w * 0.25)) - d[j][q]).norm() < 1e-5);
        }
    }
}
