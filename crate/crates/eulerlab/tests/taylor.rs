use std::f64::consts::TAU;
use std::sync::Arc;

use eulerlab::geometry::{c64, Domain};
use eulerlab::green::{GreenEvaluator, GreenOptions};
use eulerlab::jet::Jet;
use eulerlab::taylor::{analyticity_estimate, gevrey_fit, taylor_coefficients, taylor_integrate};
use eulerlab::vortex::{Method, TrajectoryEnd, VortexSystem};
use eulerlab::Error;
use proptest::prelude::*;

fn green(domain: Domain, force_mfs: bool) -> Arc<GreenEvaluator> {
    let opts = GreenOptions { force_mfs, ..GreenOptions::default() };
    Arc::new(GreenEvaluator::build(domain, &opts).unwrap())
}

fn circular() -> VortexSystem {
    VortexSystem::new(green(Domain::disk(1.0).unwrap(), false), vec![c64(0.5, 0.0)], vec![TAU], vec![]).unwrap()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

#[test]
fn circular_orbit_coefficients() {
    let sys = circular();
    let kernel = sys.green.analytic().unwrap();
    let a = taylor_coefficients(kernel, &sys.strengths, &sys.circulations, &sys.positions, 16);
    let omega: f64 = 4.0 / 3.0;
    for k in 0..=16 {
        let x = a[0].c[k].re;
        let expect = if k % 2 == 0 { 0.5 * (-1f64).powi(k as i32 / 2) * omega.powi(k as i32) / factorial(k) } else { 0.0 };
        assert!((x - expect).abs() < 1e-10, "k = {k}: {x} vs {expect}");
    }
}

#[test]
fn equilibrium_has_no_motion_and_a_degenerate_fit() {
    let sys = VortexSystem::new(green(Domain::disk(1.0).unwrap(), false), vec![c64(0.0, 0.0)], vec![TAU], vec![]).unwrap();
    let kernel = sys.green.analytic().unwrap();
    let a = taylor_coefficients(kernel, &sys.strengths, &sys.circulations, &sys.positions, 16);
    assert!(a[0].c[1..].iter().all(|c| c.norm() == 0.0));
    assert!(matches!(analyticity_estimate(&[a]), Err(Error::Singular(_))));
}

#[test]
fn gevrey_fit_of_the_circular_orbit() {
    let sys = circular();
    let kernel = sys.green.analytic().unwrap();
    let mut s = vec![];
    for k in [12, 16, 20] {
        let a = taylor_coefficients(kernel, &sys.strengths, &sys.circulations, &sys.positions, k);
        let est = analyticity_estimate(&[a]).unwrap();
        assert!((0.9..=1.1).contains(&est.s_hat), "{est:?}");
        assert!((est.rho_hat - 0.75).abs() < 0.2 * 0.75, "{est:?}");
        s.push(est.s_hat);
    }
    assert!(s.iter().fold(0.0f64, |m, x| m.max((x - s[0]).abs())) < 0.05);
}

#[test]
fn gevrey_fit_of_synthetic_order_two() {
    let d: Vec<f64> = (0..=20).map(|k| factorial(k).powi(2) / 10f64.powi(k as i32)).collect();
    let est = gevrey_fit(&d).unwrap();
    assert!((1.9..=2.1).contains(&est.s_hat), "{est:?}");
    assert!(gevrey_fit(&d[..10]).is_err());
}

#[test]
fn taylor_matches_rk45_on_three_vortices() {
    let sys = VortexSystem::new(
        green(Domain::disk(1.0).unwrap(), false),
        vec![c64(0.4, 0.0), c64(-0.3, 0.3), c64(0.0, -0.5)],
        vec![TAU, 0.8 * TAU, -0.6 * TAU],
        vec![],
    )
    .unwrap();
    let jet = sys.integrate(1.0, 1e-13, Method::Taylor { order: 20 }).unwrap();
    let rk = sys.integrate(1.0, 1e-12, Method::Rk45).unwrap();
    assert_eq!(jet.termination, TrajectoryEnd::Horizon);
    for (a, b) in jet.positions.last().unwrap().iter().zip(rk.positions.last().unwrap()) {
        assert!((a - b).norm() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn taylor_matches_rk45_in_the_annulus() {
    let sys = VortexSystem::new(
        green(Domain::annulus(0.3, 1.0).unwrap(), false),
        vec![c64(0.6, 0.0), c64(-0.55, 0.1)],
        vec![TAU, TAU],
        vec![1.0],
    )
    .unwrap();
    let jet = sys.integrate(1.0, 1e-13, Method::Taylor { order: 16 }).unwrap();
    let rk = sys.integrate(1.0, 1e-12, Method::Rk45).unwrap();
    for (a, b) in jet.positions.last().unwrap().iter().zip(rk.positions.last().unwrap()) {
        assert!((a - b).norm() < 1e-9, "{a} vs {b}");
    }
    assert!(jet.hamiltonian_drift() < 1e-10);
}

#[test]
fn taylor_period_of_the_circular_orbit() {
    let traj = circular().integrate(1.5 * std::f64::consts::PI, 1e-12, Method::Taylor { order: 16 }).unwrap();
    assert!((traj.positions.last().unwrap()[0] - c64(0.5, 0.0)).norm() < 1e-10);
}

#[test]
fn taylor_rejects_mfs_backends() {
    let sys = VortexSystem::new(green(Domain::disk(1.0).unwrap(), true), vec![c64(0.5, 0.0)], vec![TAU], vec![]).unwrap();
    assert!(matches!(taylor_integrate(&sys, 12, 1.0, 1e-10, None), Err(Error::Unsupported(_))));
}

#[test]
fn taylor_stops_at_collapse() {
    let l = 0.1;
    let z = [c64(0.0, 0.0), c64(l, 0.0), c64(l, 0.5f64.sqrt() * l)];
    let c = (2.0 * z[0] + 2.0 * z[1] - z[2]) / 3.0;
    let sys = VortexSystem::new(
        green(Domain::disk(1.0).unwrap(), false),
        z.iter().map(|p| p - c).collect(),
        vec![2.0 * TAU, 2.0 * TAU, -TAU],
        vec![],
    )
    .unwrap();
    let run = taylor_integrate(&sys, 12, 1.0, 1e-10, None).unwrap();
    assert!(matches!(run.termination, TrajectoryEnd::Collision { .. }), "{:?}", run.termination);
}

fn jet_strategy() -> impl Strategy<Value = Jet<f64>> {
    prop::collection::vec(-2.0..2.0f64, 9).prop_map(Jet::new)
}

proptest! {
    #[test]
    fn jet_multiplication_is_associative(a in jet_strategy(), b in jet_strategy(), c in jet_strategy()) {
        let l = (a.clone() * b.clone()) * c.clone();
        let r = a * (b * c);
        for (x, y) in l.c.iter().zip(&r.c) {
            prop_assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn exp_inverts_log(mut a in jet_strategy(), a0 in 0.5..3.0f64) {
        a.c[0] = a0;
        let b = a.ln().unwrap().exp();
        for (x, y) in b.c.iter().zip(&a.c) {
            prop_assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()), "{} vs {}", x, y);
        }
    }

    #[test]
    fn division_inverts_multiplication(a in jet_strategy(), mut b in jet_strategy(), b0 in 0.5..3.0f64) {
        b.c[0] = b0;
        let q = (a.clone() * b.clone()).try_div(&b).unwrap();
        for (x, y) in q.c.iter().zip(&a.c) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()));
        }
        let one = b.try_div(&b).unwrap();
        prop_assert!((one.c[0] - 1.0).abs() < 1e-14 && one.c[1..].iter().all(|x| x.abs() < 1e-10));
    }
}
