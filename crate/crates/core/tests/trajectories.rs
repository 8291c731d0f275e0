use std::f64::consts::{FRAC_PI_8, PI};

use constrained_dynamics::models::{
    build_energy_oscillator, build_quadric_geodesic, gaussian_l2_space, oscillator_closed_form,
    quadric_closed_form_sphere, OscillatorInit, QuadricSpec,
};
use constrained_dynamics::{integrate, IntegratorConfig, Method, PhasePoint, Projection, SpaceSpec};
use nalgebra::DVector;

fn unit(n: usize, k: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| f64::from(i == k))
}

#[test]
fn sphere_follows_great_circle() {
    let space = SpaceSpec::euclidean(3, 1).unwrap();
    let sys = build_quadric_geodesic(&QuadricSpec::sphere(3), &space).unwrap();
    let (x0, v0) = (unit(3, 0), unit(3, 1));
    let z0 = PhasePoint::new(0.0, x0.clone(), v0.clone()).unwrap();
    let traj = integrate(&sys, &z0, 2.0 * PI, &IntegratorConfig::rk4(1e-3), &[]).unwrap();
    assert_eq!(traj.len(), 6284);
    let mut worst: f64 = 0.0;
    for z in traj.points() {
        let (x, v) = quadric_closed_form_sphere(&x0, &v0, z.t).unwrap();
        worst = worst.max((&z.x - x).amax()).max((&z.v - v).amax());
    }
    assert!(worst <= 1e-8, "{worst}");
    assert!(traj.max_constraint_norm() <= 1e-10);
}

#[test]
fn oscillator_follows_closed_form_with_gaussian_weights() {
    let space = gaussian_l2_space(16).unwrap();
    let sys = build_energy_oscillator(&space).unwrap();
    let scale = 1.0 / space.norm(&DVector::repeat(16, 1.0));
    let c = DVector::repeat(16, scale);
    let init = OscillatorInit::new(c.clone(), c, space).unwrap();
    let traj = integrate(
        &sys,
        &init.phase_point(),
        FRAC_PI_8,
        &IntegratorConfig::rk4(1e-3),
        &[],
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for z in traj.points() {
        let (x, v) = oscillator_closed_form(&init, z.t).unwrap();
        worst = worst.max((&z.x - x).amax()).max((&z.v - v).amax());
    }
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn projection_tightens_constraint() {
    let space = SpaceSpec::euclidean(4, 1).unwrap();
    let spec = QuadricSpec::new(
        constrained_dynamics::LinearMap::diagonal(&[1.0, 4.0, 9.0, 16.0]).unwrap(),
        None,
    )
    .unwrap();
    let sys = build_quadric_geodesic(&spec, &space).unwrap();
    let z0 = PhasePoint::from_slices(0.0, &[1.0, 0.0, 0.0, 0.0], &[0.0, 0.3, 0.2, 0.1]).unwrap();
    let config = IntegratorConfig::rk4(1e-2).with_projection(Projection::PostStep);
    let traj = integrate(&sys, &z0, 5.0, &config, &[]).unwrap();
    assert!(traj.max_constraint_norm() <= 1e-12);
}

#[test]
fn adaptive_method_reaches_end_point() {
    let space = SpaceSpec::euclidean(3, 1).unwrap();
    let sys = build_quadric_geodesic(&QuadricSpec::sphere(3), &space).unwrap();
    let (x0, v0) = (unit(3, 0), unit(3, 2) * 2.0);
    let z0 = PhasePoint::new(0.0, x0.clone(), v0.clone()).unwrap();
    let config = IntegratorConfig {
        method: Method::Rk45,
        ..IntegratorConfig::default()
    };
    let traj = integrate(&sys, &z0, 3.0, &config, &[]).unwrap();
    let end = traj.last().unwrap();
    assert_eq!(end.t, 3.0);
    let (x, _) = quadric_closed_form_sphere(&x0, &v0, 3.0).unwrap();
    assert!((&end.x - x).amax() <= 1e-7);
}
