use std::f64::consts::PI;

use ncol_core::config::ScenarioConfig;
use ncol_core::pipeline::{prediction_row, run_expansion_sweep, solve_single_particle, Numerics};
use ncol_core::solver::{AnchoringSpec, BoundaryMap};
use ncol_core::Vec3;
use nalgebra::Rotation3;

fn quick() -> Numerics {
    Numerics {
        r_out: 32.0,
        radial_ratio: 1.15,
        l_ang: 4,
        energy_tol: 1e-13,
        fit_window: [6.0, 20.0],
        ..Default::default()
    }
}

fn tilt(c: Vec3) -> AnchoringSpec {
    AnchoringSpec::strong(BoundaryMap::UniformTilt { n_inf: Vec3::z(), tilt: c })
}

#[test]
fn constant_anchoring_costs_nothing() {
    for n in [Vec3::z(), Vec3::new(1.0, 2.0, -0.5).normalize()] {
        let spec = AnchoringSpec::strong(BoundaryMap::Constant { value: n });
        let r = solve_single_particle(&spec, n, &quick(), &[]).unwrap();
        assert!(r.mu.abs() < 1e-8 && r.v.norm() < 1e-8);
    }
}

#[test]
fn target_rotation_is_covariant() {
    let spec = tilt(Vec3::new(0.06, 0.02, 0.0));
    let base = solve_single_particle(&spec, Vec3::z(), &quick(), &[]).unwrap();
    let r = Rotation3::from_euler_angles(0.7, -0.3, 1.9);
    let rotated = solve_single_particle(&spec.rotated(&r), r * Vec3::z(), &quick(), &[]).unwrap();
    assert!((rotated.mu - base.mu).abs() <= 1e-9 * base.mu.max(1e-6));
    assert!((rotated.v - r * base.v).norm() <= 1e-7);
}

#[test]
fn single_particle_result_is_self_consistent() {
    let r = solve_single_particle(&tilt(Vec3::x() * 0.05), Vec3::z(), &quick(), &[0.02]).unwrap();
    assert_eq!(r.mu_levels.len(), r.levels.len());
    assert!((r.extrapolation_error - (r.mu - r.mu_levels.last().unwrap()).abs()).abs() < 1e-15);
    assert!((r.tail - 4.0 * PI * r.v.norm_squared() / r.numerics.r_out).abs() < 1e-12);
    assert!(r.v.dot(&r.n_inf).abs() <= 0.01 * r.v.norm());
    let levels = &r.mu_levels;
    assert!(levels.windows(2).all(|w| (w[1] - w[0]).abs() < 0.05 * w[0]));
}

#[test]
fn prediction_is_exchange_symmetric() {
    let a = solve_single_particle(&tilt(Vec3::x() * 0.05), Vec3::z(), &quick(), &[]).unwrap();
    let b = solve_single_particle(&tilt(Vec3::y() * 0.03), Vec3::z(), &quick(), &[]).unwrap();
    let centers = [Vec3::zeros(), Vec3::new(2.5, 0.5, 0.0)];
    let p = prediction_row(&[a.clone(), b.clone()], &centers, 0.01).unwrap();
    let q = prediction_row(&[b, a], &[centers[1], centers[0]], 0.01).unwrap();
    assert!((p.prediction - q.prediction).abs() <= 1e-15 * p.prediction.abs());
    assert!((p.interaction - q.interaction).abs() <= 1e-15);
}

#[test]
fn relaxed_energy_sits_below_the_competitor() {
    let mut c = ScenarioConfig::aligned_pair(0.1);
    c.numerics = quick();
    c.rhos = vec![0.04, 0.02, 0.01];
    let report = run_expansion_sweep(&c.sweep_input()).unwrap();
    assert_eq!(report.rows.len(), 3);
    for row in &report.rows {
        assert!(row.ok(), "{:?}", row.error);
        assert!(row.measured <= row.competitor + 1e-10, "{} > {}", row.measured, row.competitor);
        for level in &row.levels {
            assert!(level.measured <= level.competitor + 1e-10);
        }
        assert!((row.prediction - (row.mu_sum + row.interaction)).abs() < 1e-14);
    }
    let mu = report.singles[0].mu;
    assert!(report.rows.iter().all(|r| (r.mu_sum - 2.0 * mu).abs() < 1e-15));
}
