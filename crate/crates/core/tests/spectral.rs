use std::f64::consts::PI;

use ncol_core::annulus::{mode_coeffs_two_radius, mode_exponents};
use ncol_core::sph::{build_mode_table, AngularGrid, SphericalTransform};
use ncol_core::Vec3;
use proptest::prelude::*;

fn legendre(l: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return p0;
    }
    for k in 1..l {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

fn direction(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

#[test]
fn low_degree_closed_forms() {
    let t = build_mode_table(2);
    let w = direction(0.7, 2.1);
    let phi = t.eval_all(&w).unwrap();
    let c1 = (3.0 / (4.0 * PI)).sqrt();
    assert!((phi[0] - 0.5 / PI.sqrt()).abs() < 1e-15);
    assert!((phi[t.index(1, 0)] - c1 * w.z).abs() < 1e-14);
    assert!((phi[t.index(1, 1)] - c1 * w.x).abs() < 1e-14);
    assert!((phi[t.index(1, -1)] - c1 * w.y).abs() < 1e-14);
    let c20 = (5.0 / (16.0 * PI)).sqrt();
    assert!((phi[t.index(2, 0)] - c20 * (3.0 * w.z * w.z - 1.0)).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn addition_theorem(t1 in 0.0..PI, p1 in 0.0..(2.0 * PI), t2 in 0.0..PI, p2 in 0.0..(2.0 * PI)) {
        let table = build_mode_table(16);
        let (a, b) = (direction(t1, p1), direction(t2, p2));
        let (fa, fb) = (table.eval_all(&a).unwrap(), table.eval_all(&b).unwrap());
        for l in 0..=16usize {
            let s: f64 = (l * l..(l + 1) * (l + 1)).map(|k| fa[k] * fb[k]).sum();
            let expect = (2 * l + 1) as f64 / (4.0 * PI) * legendre(l, a.dot(&b).clamp(-1.0, 1.0));
            prop_assert!((s - expect).abs() < 1e-11, "l={} {} vs {}", l, s, expect);
        }
    }

    #[test]
    fn roundtrip_and_parseval(seed in prop::collection::vec(-1.0f64..1.0, 289 * 3)) {
        let tr = SphericalTransform::new(16, AngularGrid::for_band_limit(16)).unwrap();
        let coeffs: Vec<Vec3> = seed.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let samples = tr.inverse(&coeffs);
        let back = tr.forward(&samples).unwrap();
        let err = coeffs.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-10, "roundtrip {}", err);
        let sq: Vec<f64> = samples.iter().map(|v| v.norm_squared()).collect();
        let l2 = tr.grid().integrate(&sq);
        let spec: f64 = coeffs.iter().map(|a| a.norm_squared()).sum();
        prop_assert!((l2 - spec).abs() <= 1e-10 * spec.max(1.0), "parseval {} vs {}", l2, spec);
    }

    #[test]
    fn two_radius_exact_on_pure_modes(
        l in 0usize..=16,
        d in 2usize..=4,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        r1 in 0.5f64..2.0,
        ratio in 1.2f64..3.0,
    ) {
        let r2 = r1 * ratio;
        let (gp, gm) = mode_exponents(d, l);
        let u = |r: f64| if d == 2 && l == 0 { a - b * r.ln() } else { a * r.powf(gp) + b * r.powf(-gm) };
        let s = mode_coeffs_two_radius((u(r1), u(r2)), (r1, r2), d, l).unwrap();
        let v = |r: f64| if d == 2 && l == 0 { s.a - s.b * r.ln() } else { s.a * r.powf(gp) + s.b * r.powf(-gm) };
        let size = |r: f64| if d == 2 && l == 0 { a.abs() + (b * r.ln()).abs() } else { (a * r.powf(gp)).abs() + (b * r.powf(-gm)).abs() };
        for r in [r1, (r1 * r2).sqrt(), r2] {
            prop_assert!((v(r) - u(r)).abs() <= 1e-12 * size(r), "r={} {} vs {}", r, v(r), u(r));
        }
        let grow = mode_coeffs_two_radius((u(r1) - b * r1.powf(-gm), u(r2) - b * r2.powf(-gm)), (r1, r2), d, l).unwrap();
        let decay = mode_coeffs_two_radius((b * r1.powf(-gm), b * r2.powf(-gm)), (r1, r2), d, l).unwrap();
        if !(d == 2 && l == 0) {
            prop_assert!((grow.a - a).abs() <= 1e-12 * a.abs().max(1e-300), "a {} vs {}", grow.a, a);
            prop_assert!((decay.b - b).abs() <= 1e-12 * b.abs().max(1e-300), "b {} vs {}", decay.b, b);
        }
    }
}

#[test]
fn band_limit_is_enforced() {
    assert!(SphericalTransform::new(10, AngularGrid::for_band_limit(8)).is_err());
    let g = AngularGrid::for_band_limit(12);
    assert_eq!(g.resolved_l_max(), 12);
}
