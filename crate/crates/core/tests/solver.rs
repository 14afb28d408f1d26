use std::f64::consts::PI;

use ncol_core::exterior::SphereLayout;
use ncol_core::solver::{build_grid, AnchoringSpec, BoundaryMap, CellKind, DirectorField, OuterBc, RelaxSchedule};
use ncol_core::Vec3;
use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn particle_field(h: f64, specs: &[AnchoringSpec], seed: u64) -> DirectorField {
    let layout = SphereLayout::general(vec![Vec3::zeros()], 0.5).unwrap();
    let grid = build_grid(1.5, h, &layout, None).unwrap();
    let mut f = DirectorField::new(grid, Vec3::z()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for idx in 0..f.grid().len() {
        if matches!(f.grid().kind(idx), CellKind::Fluid | CellKind::ParticleBoundary) {
            f.set(idx, random_unit(&mut rng));
        }
    }
    f.apply_strong(specs).unwrap();
    f
}

fn free_cells(f: &DirectorField, specs: &[AnchoringSpec]) -> Vec<usize> {
    (0..f.grid().len())
        .filter(|&i| match f.grid().kind(i) {
            CellKind::Fluid => true,
            CellKind::ParticleBoundary => !specs[0].is_strong(),
            _ => false,
        })
        .collect()
}

#[test]
fn relaxation_is_monotone_and_unit() {
    for (specs, omega) in [
        (vec![AnchoringSpec::strong(BoundaryMap::Radial)], 1.0),
        (vec![AnchoringSpec::weak(BoundaryMap::Radial, 3.0)], 1.7),
    ] {
        let mut f = particle_field(0.125, &specs, 1);
        let schedule = RelaxSchedule { max_sweeps: 300, energy_tol: 1e-12, over_relaxation: omega, parallel: false };
        let report = f.relax(&specs, &schedule).unwrap();
        assert!(report.energies.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{:?}", &report.energies[..5]);
        assert!(report.energies[0] > report.final_energy());
        assert!(f.unit_defect() <= 1e-12);
    }
}

#[test]
fn single_updates_never_raise_the_energy() {
    let specs = [AnchoringSpec::weak(BoundaryMap::Radial, 2.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..100 {
        let mut f = particle_field(0.25, &specs, trial);
        let free = free_cells(&f, &specs);
        let idx = free[rng.gen_range(0..free.len())];
        let omega = rng.gen_range(0.1..1.99);
        let before = f.total_energy(&specs).unwrap();
        let predicted = f.update_cell(idx, &specs, omega).unwrap();
        let after = f.total_energy(&specs).unwrap();
        assert!(after <= before + 1e-12, "trial {trial}");
        assert!(((before - after) - predicted).abs() <= 1e-10 * before);
    }
}

#[test]
fn gradient_matches_geodesic_differences() {
    let specs = [AnchoringSpec::weak(BoundaryMap::Radial, 2.0)];
    let f = particle_field(0.125, &specs, 4);
    let grad = f.gradient(&specs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let free = free_cells(&f, &specs);
    for &idx in free.iter().step_by(53) {
        let v = f.values()[idx];
        let t = {
            let r = random_unit(&mut rng);
            (r - v * v.dot(&r)).normalize()
        };
        let eps = 1e-4;
        let energy_at = |s: f64| {
            let mut g = f.clone();
            g.set(idx, v * s.cos() + t * s.sin());
            g.total_energy(&specs).unwrap()
        };
        let fd = (energy_at(eps) - energy_at(-eps)) / (2.0 * eps);
        let an = grad[idx].dot(&t);
        assert!((fd - an).abs() <= 1e-6 * grad[idx].norm().max(1e-3), "{fd} vs {an}");
    }
}

#[test]
fn tangential_residual_detects_non_harmonic_fields() {
    let specs = [AnchoringSpec::strong(BoundaryMap::Radial)];
    let mut f = particle_field(0.125, &specs, 12);
    let r0 = f.residual();
    assert!(r0 > 1.0);
    let schedule = RelaxSchedule { max_sweeps: 2000, energy_tol: 1e-13, over_relaxation: 1.8, parallel: false };
    f.relax(&specs, &schedule).unwrap();
    assert!(f.residual() < 1e-3 * r0);
}

#[test]
fn relaxed_energy_is_target_frame_invariant() {
    let r = Rotation3::from_euler_angles(0.4, 1.2, -0.7);
    let tilt = BoundaryMap::UniformTilt { n_inf: Vec3::z(), tilt: Vec3::new(0.3, 0.0, 0.0) };
    let schedule = RelaxSchedule { max_sweeps: 5000, energy_tol: 1e-13, over_relaxation: 1.8, parallel: false };
    let solve = |map: BoundaryMap, n_inf: Vec3| {
        let layout = SphereLayout::general(vec![Vec3::zeros()], 0.5).unwrap();
        let grid = build_grid(1.5, 0.125, &layout, None).unwrap();
        let mut f = DirectorField::new(grid, n_inf).unwrap();
        let specs = [AnchoringSpec::strong(map)];
        f.relax(&specs, &schedule).unwrap().final_energy()
    };
    let e = solve(tilt.clone(), Vec3::z());
    let er = solve(tilt.rotated(&r), r * Vec3::z());
    assert!(e > 0.0);
    assert!((e - er).abs() <= 1e-8 * e, "{e} vs {er}");
}

fn hedgehog_solve(h: f64, start: Option<&DirectorField>) -> DirectorField {
    let layout = SphereLayout::general(vec![Vec3::zeros()], 1.0).unwrap();
    let grid = build_grid(4.75, h, &layout, Some(4.0)).unwrap();
    let mut f = DirectorField::new(grid, Vec3::z()).unwrap();
    if let Some(s) = start {
        f.initialize_from(s);
    }
    f.set_outer(OuterBc::Radial);
    let specs = [AnchoringSpec::strong(BoundaryMap::Radial)];
    let schedule = RelaxSchedule { max_sweeps: 20_000, energy_tol: 1e-9, over_relaxation: 1.9, parallel: false };
    let report = f.relax(&specs, &schedule).unwrap();
    assert!(report.converged);
    f
}

#[test]
fn hedgehog_energy_on_coarse_grids() {
    let coarse = hedgehog_solve(9.5 / 32.0, None);
    let fine = hedgehog_solve(9.5 / 64.0, Some(&coarse));
    let (e1, e2) = (coarse.dirichlet_energy(), fine.dirichlet_energy());
    let exact = 8.0 * PI * 3.0;
    let rich = 2.0 * e2 - e1;
    assert!((rich - exact).abs() <= 0.02 * exact, "{e1} {e2} {rich}");
}
