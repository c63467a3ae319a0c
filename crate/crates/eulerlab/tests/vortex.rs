use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use eulerlab::geometry::{c64, Domain, C64};
use eulerlab::green::{GreenEvaluator, GreenOptions};
use eulerlab::vortex::{weak_residual, Method, TestFunction, TrajectoryEnd, VortexSystem};

fn disk() -> Arc<GreenEvaluator> {
    Arc::new(GreenEvaluator::build(Domain::disk(1.0).unwrap(), &GreenOptions::default()).unwrap())
}

fn annulus() -> Arc<GreenEvaluator> {
    Arc::new(GreenEvaluator::build(Domain::annulus(0.3, 1.0).unwrap(), &GreenOptions::default()).unwrap())
}

fn single(rho: f64) -> VortexSystem {
    VortexSystem::new(disk(), vec![c64(rho, 0.0)], vec![TAU], vec![]).unwrap()
}

fn three_in_disk() -> VortexSystem {
    VortexSystem::new(
        disk(),
        vec![c64(0.4, 0.0), c64(-0.3, 0.3), c64(0.0, -0.5)],
        vec![TAU, 0.8 * TAU, -0.6 * TAU],
        vec![],
    )
    .unwrap()
}

fn pair_in_annulus() -> VortexSystem {
    VortexSystem::new(annulus(), vec![c64(0.6, 0.0), c64(-0.55, 0.1)], vec![TAU, TAU], vec![1.0]).unwrap()
}

#[test]
fn energy_examples() {
    let centre = VortexSystem::new(disk(), vec![c64(0.0, 0.0)], vec![1.0], vec![]).unwrap();
    assert!(centre.energy().unwrap().abs() < 1e-15);
    let w = single(0.5).energy().unwrap();
    assert!((w + PI * 0.75f64.ln()).abs() < 1e-12, "W = {w}");
    let sys = three_in_disk();
    let mut relabeled = sys.clone();
    relabeled.positions.rotate_left(1);
    relabeled.strengths.rotate_left(1);
    assert!((sys.energy().unwrap() - relabeled.energy().unwrap()).abs() < 1e-13);
}

#[test]
fn single_vortex_speed() {
    let v = single(0.5).velocities().unwrap()[0];
    assert!((v - c64(0.0, 2.0 / 3.0)).norm() < 1e-13, "{v}");
    let centre = VortexSystem::new(disk(), vec![c64(0.0, 0.0)], vec![TAU], vec![]).unwrap();
    assert!(centre.velocities().unwrap()[0].norm() < 1e-15);
}

/// `(1/α_i)∇⊥_{x_i}W` by central differences.
fn fd_field(sys: &VortexSystem) -> Vec<C64> {
    let h = 1e-5;
    let w = |z: &[C64]| sys.energy_at(z).unwrap();
    (0..sys.len())
        .map(|i| {
            let mut g = [0.0; 2];
            for (k, e) in [c64(h, 0.0), c64(0.0, h)].into_iter().enumerate() {
                let mut zp = sys.positions.clone();
                let mut zm = sys.positions.clone();
                zp[i] += e;
                zm[i] -= e;
                g[k] = (w(&zp) - w(&zm)) / (2.0 * h);
            }
            c64(-g[1], g[0]) / sys.strengths[i]
        })
        .collect()
}

#[test]
fn rhs_is_rotated_gradient_of_energy() {
    for sys in [three_in_disk(), pair_in_annulus()] {
        let v = sys.velocities().unwrap();
        let fd = fd_field(&sys);
        for (a, b) in v.iter().zip(&fd) {
            assert!((a - b).norm() < 1e-5 * a.norm().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn rhs_with_mfs_backend_matches_analytic() {
    let opts = GreenOptions { force_mfs: true, ..GreenOptions::default() };
    let mfs = Arc::new(GreenEvaluator::build(Domain::disk(1.0).unwrap(), &opts).unwrap());
    let sys = three_in_disk();
    let alt = VortexSystem::new(mfs, sys.positions.clone(), sys.strengths.clone(), vec![]).unwrap();
    let (a, b) = (sys.velocities().unwrap(), alt.velocities().unwrap());
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).norm() < 1e-5, "{p} vs {q}");
    }
}

#[test]
fn single_vortex_period() {
    let sys = single(0.5);
    let period = 1.5 * PI;
    let traj = sys.integrate(period, 1e-10, Method::Rk45).unwrap();
    assert_eq!(traj.termination, TrajectoryEnd::Horizon);
    let end = traj.positions.last().unwrap()[0];
    assert!((end - c64(0.5, 0.0)).norm() < 1e-6, "{end}");
    for z in &traj.positions {
        assert!((z[0].norm() - 0.5).abs() < 1e-8);
    }
    assert!(traj.hamiltonian_drift() < 1e-8);
}

#[test]
fn frozen_trajectory_has_no_drift() {
    let traj = three_in_disk().integrate(0.0, 1e-8, Method::Rk45).unwrap();
    assert_eq!(traj.hamiltonian_drift(), 0.0);
}

#[test]
fn symmetric_pairs_keep_their_symmetry() {
    // equal strengths: point symmetry x ↦ −x
    let sys = VortexSystem::new(disk(), vec![c64(0.3, 0.1), c64(-0.3, -0.1)], vec![TAU, TAU], vec![]).unwrap();
    let traj = sys.integrate(2.0, 1e-10, Method::Rk45).unwrap();
    for z in &traj.positions {
        assert!((z[0] + z[1]).norm() < 1e-9);
    }
    // opposite strengths: mirror symmetry across the imaginary axis, which also flips the sign of vorticity
    let sys = VortexSystem::new(disk(), vec![c64(0.3, 0.1), c64(-0.3, 0.1)], vec![TAU, -TAU], vec![]).unwrap();
    let traj = sys.integrate(2.0, 1e-10, Method::Rk45).unwrap();
    for z in &traj.positions {
        assert!((z[0] + z[1].conj()).norm() < 1e-9);
    }
}

#[test]
fn conservation_three_in_disk_and_pair_in_annulus() {
    for sys in [three_in_disk(), pair_in_annulus()] {
        let traj = sys.integrate(10.0, 1e-10, Method::Rk45).unwrap();
        assert_eq!(traj.termination, TrajectoryEnd::Horizon);
        assert!(traj.hamiltonian_drift() < 1e-8, "drift {}", traj.hamiltonian_drift());
    }
}

#[test]
fn drift_order_under_refinement() {
    let sys = three_in_disk();
    let runs: Vec<(f64, usize)> = [1e-6, 1e-8, 1e-10]
        .iter()
        .map(|tol| {
            let t = sys.integrate(10.0, *tol, Method::Rk45).unwrap();
            (t.hamiltonian_drift(), t.steps.len())
        })
        .collect();
    for w in runs.windows(2) {
        assert!(w[1].0 < w[0].0, "{runs:?}");
        let order = (w[0].0 / w[1].0).ln() / (w[1].1 as f64 / w[0].1 as f64).ln();
        assert!(order >= 4.0, "observed order {order}, {runs:?}");
    }
}

#[test]
fn reversibility() {
    let sys = three_in_disk();
    let fwd = sys.integrate(3.0, 1e-11, Method::Rk45).unwrap();
    let mut back = sys.clone();
    back.positions = fwd.positions.last().unwrap().clone();
    let bwd = back.integrate(-3.0, 1e-11, Method::Rk45).unwrap();
    for (a, b) in bwd.positions.last().unwrap().iter().zip(&sys.positions) {
        assert!((a - b).norm() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn angular_impulse_conserved_in_disk() {
    let sys = three_in_disk();
    let traj = sys.integrate(10.0, 1e-10, Method::Rk45).unwrap();
    let i0 = sys.angular_impulse(&sys.positions);
    for z in &traj.positions {
        assert!((sys.angular_impulse(z) - i0).abs() < 1e-7);
    }
}

#[test]
fn collision_is_detected() {
    // strengths 2, 2, −1 with zero angular impulse about the centroid collapse self-similarly
    let l = 0.1;
    let z = [c64(0.0, 0.0), c64(l, 0.0), c64(l, 0.5f64.sqrt() * l)];
    let c = (2.0 * z[0] + 2.0 * z[1] - z[2]) / 3.0;
    let sys = VortexSystem::new(disk(), z.iter().map(|p| p - c).collect(), vec![2.0 * TAU, 2.0 * TAU, -TAU], vec![]).unwrap();
    let traj = sys.integrate(1.0, 1e-10, Method::Rk45).unwrap();
    match traj.termination {
        TrajectoryEnd::Collision { t, .. } => assert!(t < 0.01 && (traj.min_pair_dist.last().unwrap() - 2e-4).abs() < 1e-9),
        other => panic!("expected a collision, got {other:?}"),
    }
    // starting inside the boundary layer ends immediately
    let near = VortexSystem::new(disk(), vec![c64(0.0, 0.999)], vec![TAU], vec![]).unwrap();
    let traj = near.integrate(1.0, 1e-9, Method::Rk45).unwrap();
    assert_eq!(traj.termination, TrajectoryEnd::BoundaryProximity { vortex: 0, t: 0.0 });
}

#[test]
fn coincident_vortices_rejected() {
    let e = VortexSystem::new(disk(), vec![c64(0.1, 0.0), c64(0.1, 0.0)], vec![1.0, 1.0], vec![]);
    assert!(e.is_err());
}

fn test_functions() -> [TestFunction; 3] {
    [
        TestFunction { center: c64(0.5, 0.0), radius: 0.3, t_a: 0.5, t_b: 3.0 },
        TestFunction { center: c64(0.0, 0.45), radius: 0.35, t_a: 1.0, t_b: 2.5 },
        TestFunction { center: c64(-0.3, -0.2), radius: 0.45, t_a: 0.2, t_b: 3.8 },
    ]
}

#[test]
fn weak_residual_vanishes_for_circular_orbit() {
    let sys = single(0.5);
    let mut prev = [f64::INFINITY; 3];
    for tol in [1e-6, 1e-8, 1e-10] {
        let traj = sys.integrate(4.0, tol, Method::Rk45).unwrap();
        for (k, phi) in test_functions().iter().enumerate() {
            let r = weak_residual(&sys, &traj, phi).unwrap();
            assert!(r < prev[k], "tol {tol}, phi {k}: {r} !< {}", prev[k]);
            prev[k] = r;
        }
    }
    assert!(prev.iter().all(|r| *r < 1e-5), "{prev:?}");
}

#[test]
fn weak_residual_trivial_cases() {
    let centre = VortexSystem::new(disk(), vec![c64(0.0, 0.0)], vec![TAU], vec![]).unwrap();
    let traj = centre.integrate(2.0, 1e-10, Method::Rk45).unwrap();
    let phi = TestFunction { center: c64(0.0, 0.0), radius: 0.5, t_a: 0.5, t_b: 1.5 };
    assert!(weak_residual(&centre, &traj, &phi).unwrap() < 1e-10);
    let bad = TestFunction { center: c64(0.8, 0.0), radius: 0.5, t_a: 0.5, t_b: 1.5 };
    assert!(weak_residual(&centre, &traj, &bad).is_err());
}

#[test]
fn weak_residual_detects_a_wrong_trajectory() {
    // a vortex held fixed off-centre is not a weak solution
    let sys = single(0.5);
    let mut traj = sys.integrate(2.0, 1e-10, Method::Rk45).unwrap();
    traj.dense = eulerlab::vortex::Dense::Frozen(vec![c64(0.5, 0.0)]);
    let phi = TestFunction { center: c64(0.45, 0.1), radius: 0.3, t_a: 0.5, t_b: 1.5 };
    assert!(weak_residual(&sys, &traj, &phi).unwrap() > 1e-2);
}
