#![allow(clippy::needless_range_loop)]

use eulerlab::geometry::{c64, C64};
use eulerlab::modulus::{Modulus, ModulusKind};
use eulerlab::newton::{
    cutoff, laplacian_check, mollified_second_derivatives, mollifier_bound, newton_potential, newton_second_derivatives, Density,
    NewtonOptions, Profile, Region,
};
use eulerlab::quad::Quad;
use eulerlab::Error;

fn unit_disk() -> Region {
    Region::Disk { center: [0.0, 0.0], radius: 1.0 }
}

fn uniform() -> Density {
    Density::new(unit_disk(), Profile::Constant(1.0), None).unwrap()
}

fn dini() -> Density {
    let mu = Modulus::new(ModulusKind::InvLog { exponent: 2.0 }, (-1.0f64).exp()).unwrap();
    Density::new(unit_disk(), Profile::DiniRadial { x0: [0.0, 0.0], amplitude: 1.0 }, Some(mu)).unwrap()
}

fn dini_f(r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        (3.0 + (1.0 / r).ln()).powi(-2)
    }
}

fn samples(n: usize) -> Vec<C64> {
    (0..n).map(|k| C64::from_polar(0.85 * (k as f64 / n as f64).sqrt(), 2.4 * k as f64)).collect()
}

#[test]
fn uniform_disk_potential() {
    let f = uniform();
    let opts = NewtonOptions::default();
    assert!((newton_potential(&f, c64(0.0, 0.0), &opts).unwrap() + 0.25).abs() < 1e-10);
    for x in [c64(0.3, 0.0), c64(-0.2, 0.6), c64(0.0, 0.95)] {
        let v = newton_potential(&f, x, &opts).unwrap();
        assert!((v - (x.norm_sqr() - 1.0) / 4.0).abs() < 1e-6, "{x}: {v}");
    }
    // outside: the total mass π at the centre
    let x = c64(1.5, 0.7);
    assert!((newton_potential(&f, x, &opts).unwrap() - 0.5 * x.norm().ln()).abs() < 1e-6);
    let zero = Density::new(unit_disk(), Profile::Constant(0.0), None).unwrap();
    assert_eq!(newton_potential(&zero, c64(0.1, 0.1), &opts).unwrap(), 0.0);
}

#[test]
fn uniform_disk_second_derivatives() {
    let f = uniform();
    let opts = NewtonOptions::default();
    let d = newton_second_derivatives(&f, c64(0.0, 0.0), &opts).unwrap();
    assert!(d.u[0][1].abs() < 1e-10 && d.u[1][0].abs() < 1e-10);
    for x in samples(10) {
        let d = newton_second_derivatives(&f, x, &opts).unwrap();
        // Ψ = |x|²/4 − 1/4 inside, so u = I/2
        assert!((d.u[0][0] - 0.5).abs() < 1e-6 && (d.u[1][1] - 0.5).abs() < 1e-6, "{d:?}");
        assert!((d.trace() - 1.0).abs() < 1e-6);
        assert!((d.u[0][1] - d.u[1][0]).abs() < 1e-8);
    }
    assert!(laplacian_check(&f, &samples(20), &opts).unwrap() < 1e-6);
    assert!(newton_second_derivatives(&f, c64(1.2, 0.0), &opts).is_err());
}

#[test]
fn linear_density_matches_closed_form() {
    // f = y₁ on the unit disk: Ψ = y₁(|y|²/8 − 1/4) inside
    let f = Density::new(unit_disk(), Profile::Linear { c: 0.0, g: [1.0, 0.0] }, None).unwrap();
    let opts = NewtonOptions::default();
    for x in samples(8) {
        let psi = newton_potential(&f, x, &opts).unwrap();
        assert!((psi - x.re * (x.norm_sqr() / 8.0 - 0.25)).abs() < 1e-8);
        let d = newton_second_derivatives(&f, x, &opts).unwrap();
        let expect = [[0.75 * x.re, 0.25 * x.im], [0.25 * x.im, 0.25 * x.re]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((d.u[i][j] - expect[i][j]).abs() < 1e-5, "{x}: {d:?}");
            }
        }
        assert!((d.u[0][1] - d.u[1][0]).abs() < 1e-8);
    }
}

#[test]
fn dini_density_radial_oracle() {
    let f = dini();
    let opts = NewtonOptions::default();
    let pts = samples(20);
    assert!(laplacian_check(&f, &pts, &opts).unwrap() < 1e-3);
    for x in pts.iter().take(8) {
        let rho = x.norm();
        let d = newton_second_derivatives(&f, *x, &opts).unwrap();
        assert!((d.u[0][1] - d.u[1][0]).abs() < 1e-8);
        assert!(d.inner_bound < 0.02);
        if rho == 0.0 {
            assert!(d.u[0][0].abs() < 1e-8 && d.u[1][1].abs() < 1e-8);
            continue;
        }
        // radial Ψ: Ψ' = M/ρ, Ψ'' = f − M/ρ², with M = ∫₀^ρ f s ds
        let m = Quad::new(1e-15, 1e-13).integrate(|s| dini_f(s) * s, 0.0, rho).value;
        let (p1, p2) = (m / rho, dini_f(rho) - m / (rho * rho));
        let e = x / rho;
        let hess = |i: usize, j: usize| {
            let (ei, ej) = ([e.re, e.im][i], [e.re, e.im][j]);
            p2 * ei * ej + p1 / rho * (if i == j { 1.0 } else { 0.0 } - ei * ej)
        };
        for i in 0..2 {
            for j in 0..2 {
                assert!((d.u[i][j] - hess(i, j)).abs() < 1e-6, "{x}: {d:?}");
            }
        }
    }
}

fn fd_errors(f: &Density, x: C64, hs: &[f64]) -> Vec<f64> {
    let opts = NewtonOptions { abs_tol: 1e-14, rel_tol: 1e-13 };
    let d = newton_second_derivatives(f, x, &opts).unwrap();
    let psi = |p: C64| newton_potential(f, p, &opts).unwrap();
    hs.iter()
        .map(|h| {
            let dxx = (psi(x + h) - 2.0 * psi(x) + psi(x - h)) / (h * h);
            (dxx - d.u[0][0]).abs()
        })
        .collect()
}

#[test]
fn finite_differences_of_the_potential_converge() {
    let smooth = Density::new(unit_disk(), Profile::Custom(std::sync::Arc::new(|y: C64| (2.0 * y.re).cos() * (1.0 + y.im))), None).unwrap();
    let errs = fd_errors(&smooth, c64(0.2, 0.1), &[0.04, 0.02, 0.01]);
    assert!(errs[1] < errs[0] / 3.0 && errs[2] < errs[1] / 3.0, "{errs:?}");
    // away from its singular point the Dini density is smooth
    let errs = fd_errors(&dini(), c64(0.2, 0.1), &[0.04, 0.02, 0.01]);
    assert!(errs[1] < errs[0] / 3.0 && errs[2] < errs[1] / 3.0, "{errs:?}");
    // at the singular point convergence follows the modulus, far slower than O(h)
    let errs = fd_errors(&dini(), c64(0.0, 0.0), &[0.04, 0.02, 0.01]);
    assert!(errs[1] < errs[0] && errs[2] < errs[1] && errs[2] > errs[0] / 2.0, "{errs:?}");
}

#[test]
fn mollified_kernels_converge_within_the_bound() {
    let opts = NewtonOptions::default();
    let lin = Density::new(unit_disk(), Profile::Linear { c: 1.0, g: [1.0, 0.0] }, None).unwrap();
    let lip = Modulus::new(ModulusKind::Power { r: 1.0 }, 2.0).unwrap();
    let f = dini();
    let mu = f.modulus.clone().unwrap();
    for (density, modulus) in [(&lin, &lip), (&f, &mu)] {
        for x in [c64(0.0, 0.0), c64(0.3, -0.2)] {
            let exact = newton_second_derivatives(density, x, &opts).unwrap();
            for eps in [1e-2, 1e-3] {
                let m = mollified_second_derivatives(density, x, eps, &opts).unwrap();
                let bound = mollifier_bound(modulus, eps);
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((m[i][j] - exact.u[i][j]).abs() <= bound, "eps {eps} at {x}: {m:?} vs {:?}", exact.u);
                    }
                }
            }
        }
    }
    assert_eq!(cutoff(1.0), 0.0);
    assert_eq!(cutoff(2.0), 1.0);
    assert!((cutoff(1.5) - 0.5).abs() < 1e-15);
}

#[test]
fn polygon_support() {
    // square [−1, 1]²
    let sq = Region::Polygon { vertices: vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]] };
    let f = Density::new(sq, Profile::Constant(1.0), None).unwrap();
    let opts = NewtonOptions::default();
    let d = newton_second_derivatives(&f, c64(0.0, 0.0), &opts).unwrap();
    // symmetry of the square: u₁₁ = u₂₂ = 1/2 at the centre
    assert!((d.u[0][0] - 0.5).abs() < 1e-8 && (d.u[1][1] - 0.5).abs() < 1e-8);
    // Ψ at the centre: (1/2π)∫ log r over the square = (1/2π)·8∫₀^{π/4}∫₀^{sec θ} r log r dr dθ
    let inner = |t: f64| {
        let r = 1.0 / t.cos();
        r * r * (2.0 * r.ln() - 1.0) / 4.0
    };
    let expect = 8.0 * Quad::new(1e-14, 1e-13).integrate(inner, 0.0, std::f64::consts::FRAC_PI_4).value / std::f64::consts::TAU;
    assert!((newton_potential(&f, c64(0.0, 0.0), &opts).unwrap() - expect).abs() < 1e-9);
    assert!(matches!(Density::new(Region::Disk { center: [0.0, 0.0], radius: 0.0 }, Profile::Constant(1.0), None), Err(Error::Argument(_))));
}
