use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use eulerlab::flow::{
    flow_map, holder_exponent_estimate, lp_membership_ratio, modulus_violation_check, run_modulus_estimate,
    velocity_modulus_estimate, BiotSavart, FlowOptions, PairSet, VorticityField, VorticitySpec,
};
use eulerlab::geometry::{c64, Domain, C64};
use eulerlab::germ::Germ;
use eulerlab::green::{GreenEvaluator, GreenOptions};
use eulerlab::modulus::{GammaFamily, Modulus, ModulusKind};
use eulerlab::quad::Quad;
use eulerlab::Error;

fn green(domain: Domain) -> Arc<GreenEvaluator> {
    Arc::new(GreenEvaluator::build(domain, &GreenOptions::default()).unwrap())
}

fn biot_savart(domain: Domain, specs: &[VorticitySpec], circulations: Vec<f64>) -> BiotSavart {
    let g = green(domain);
    let field = VorticityField::new(specs, &g.domain).unwrap();
    BiotSavart::new(g, field, circulations).unwrap()
}

fn centred_patch(a: f64) -> BiotSavart {
    biot_savart(Domain::disk(1.0).unwrap(), &[VorticitySpec::RadialPatch { center: [0.0, 0.0], radius: a, value: 1.0 }], vec![])
}

fn two_patches() -> BiotSavart {
    biot_savart(
        Domain::disk(1.0).unwrap(),
        &[
            VorticitySpec::RadialPatch { center: [0.3, 0.0], radius: 0.15, value: 1.0 },
            VorticitySpec::RadialPatch { center: [-0.3, 0.0], radius: 0.15, value: 1.0 },
        ],
        vec![],
    )
}

/// Interior probes `1e-6·diam` inside every boundary curve, with outward normals.
fn boundary_probes(dom: &Domain, n: usize) -> Vec<(C64, C64)> {
    let mut out = vec![];
    for i in 0..=dom.d() {
        for k in 0..n {
            let s = (k as f64 + 0.5) / n as f64;
            let nrm = dom.outward_normal(i, s);
            out.push((dom.curve(i).point(s) - nrm * (1e-6 * dom.diam()), nrm));
        }
    }
    out
}

fn max_normal_velocity(bs: &BiotSavart) -> f64 {
    boundary_probes(&bs.green.domain, 64)
        .into_iter()
        .map(|(x, n)| (bs.velocity(x).unwrap().conj() * n).re.abs())
        .fold(0.0, f64::max)
}

#[test]
fn radial_patch_speed_matches_stokes_formula() {
    let a = 0.5;
    let bs = centred_patch(a);
    for k in 1..40 {
        let rho = k as f64 / 40.0;
        let x = C64::from_polar(rho, 0.7 * k as f64);
        let u = bs.velocity(x).unwrap();
        let tangent = x * c64(0.0, 1.0) / rho;
        let speed = rho.min(a).powi(2) / (2.0 * rho);
        assert!((u - tangent * speed).norm() < 1e-6, "rho = {rho}: {u} vs {speed}");
    }
    // the regular part vanishes by the mean-value property of the image kernel
    for x in [c64(0.3, 0.1), c64(-0.8, 0.5), c64(0.0, 0.99)] {
        assert!(bs.regular_part_quadrature(x).unwrap().norm() < 1e-10);
    }
}

#[test]
fn trivial_and_harmonic_velocities() {
    let bs = biot_savart(Domain::disk(1.0).unwrap(), &[], vec![]);
    assert_eq!(bs.velocity(c64(0.2, 0.3)).unwrap().norm(), 0.0);
    let bs = biot_savart(Domain::annulus(0.3, 1.0).unwrap(), &[], vec![1.0]);
    let x = c64(0.5, 0.2);
    let x0 = bs.green.x0(&[1.0], x).unwrap();
    assert_eq!(bs.velocity(x).unwrap(), x0);
    let gamma = bs.green.circulation(1, |z| bs.green.x0(&[1.0], z).unwrap()).unwrap();
    assert!((gamma - 1.0).abs() < 1e-5, "{gamma}");
    assert!(bs.velocity(c64(0.1, 0.0)).is_err());
}

#[test]
fn radial_profile_speed() {
    // tent profile on [0.1, 0.5] peaking at 0.3
    let table = vec![[0.0, 0.0], [0.1, 0.0], [0.3, 2.0], [0.5, 0.0]];
    let bs = biot_savart(Domain::disk(1.0).unwrap(), &[VorticitySpec::RadialProfile { center: [0.0, 0.0], table }], vec![]);
    let omega = |s: f64| if (0.1..0.3).contains(&s) { 10.0 * (s - 0.1) } else if (0.3..0.5).contains(&s) { 10.0 * (0.5 - s) } else { 0.0 };
    for rho in [0.05f64, 0.2, 0.3, 0.45, 0.7] {
        let pts: Vec<f64> = [0.0, 0.1, 0.3, 0.5].into_iter().filter(|p| *p < rho).chain([rho]).collect();
        let mass = Quad::new(1e-14, 1e-13).integrate_pieces(|s| omega(s) * s, &pts).value;
        let u = bs.velocity(c64(0.0, rho)).unwrap();
        assert!((u - c64(-mass / rho, 0.0)).norm() < 1e-9, "rho {rho}: {u}");
    }
}

#[test]
fn polygon_velocity_matches_area_quadrature() {
    let sq = vec![[0.0, 0.0], [0.2, 0.0], [0.2, 0.2], [0.0, 0.2]];
    let bs = biot_savart(Domain::disk(1.0).unwrap(), &[VorticitySpec::GeneralPatch { vertices: sq, value: 1.5 }], vec![]);
    let free = |x: C64| {
        let q = Quad::new(1e-13, 1e-12);
        let comp = |f: &dyn Fn(C64) -> f64| q.integrate(|s| q.integrate(|t| f(c64(s, t)), 0.0, 0.2).value, 0.0, 0.2).value;
        let kx = |y: C64| {
            let d = x - y;
            -d.im / (TAU * d.norm_sqr()) * 1.5
        };
        let ky = |y: C64| {
            let d = x - y;
            d.re / (TAU * d.norm_sqr()) * 1.5
        };
        c64(comp(&kx), comp(&ky))
    };
    for x in [c64(0.5, 0.1), c64(-0.2, -0.3), c64(0.1, 0.45)] {
        let u = bs.velocity(x).unwrap() - bs.regular_part_quadrature(x).unwrap();
        let v = free(x);
        assert!((u - v).norm() < 1e-9, "{u} vs {v}");
    }
}

#[test]
fn boundary_tangency_and_circulation() {
    let cases = vec![
        (Domain::disk(1.0).unwrap(), vec![VorticitySpec::RadialPatch { center: [0.3, 0.2], radius: 0.25, value: 1.0 }], vec![], 0.25f64.powi(2) * PI),
        (
            Domain::disk(1.0).unwrap(),
            vec![VorticitySpec::GeneralPatch { vertices: vec![[-0.5, -0.2], [0.1, -0.3], [0.0, 0.2], [-0.4, 0.3]], value: 2.0 }],
            vec![],
            f64::NAN,
        ),
        (
            Domain::annulus(0.3, 1.0).unwrap(),
            vec![VorticitySpec::RadialPatch { center: [0.0, 0.6], radius: 0.2, value: -1.0 }],
            vec![0.5],
            0.5 - 0.04 * PI,
        ),
        (
            Domain::disk(1.0).unwrap(),
            vec![VorticitySpec::ParticleCloud {
                positions: vec![[0.1, 0.2], [-0.4, 0.0], [0.3, -0.5]],
                weights: vec![0.01, 0.02, 0.01],
                values: vec![1.0, -2.0, 3.0],
                core: Some(0.05),
            }],
            vec![],
            0.01 - 0.04 + 0.03,
        ),
        (Domain::disk(1.0).unwrap(), vec![VorticitySpec::LoglogSingularity { x0: [0.3, -0.2], scale: 1.0 }], vec![], f64::NAN),
    ];
    for (dom, specs, circ, total) in cases {
        let bs = biot_savart(dom, &specs, circ);
        let t = max_normal_velocity(&bs);
        assert!(t < 1e-4, "{specs:?}: normal velocity {t}");
        if total.is_finite() {
            let g = bs.green.circulation(0, |x| {
                let dom = &bs.green.domain;
                let y = if dom.contains(x) { x } else { x * (1.0 - 1e-12) };
                bs.velocity(y).unwrap()
            });
            assert!((g.unwrap() - total).abs() < 1e-5, "{specs:?}");
        }
    }
}

#[test]
fn invalid_fields_are_rejected() {
    let dom = Domain::disk(1.0).unwrap();
    let bad = [
        VorticitySpec::RadialPatch { center: [0.8, 0.0], radius: 0.3, value: 1.0 },
        VorticitySpec::LoglogSingularity { x0: [1.2, 0.0], scale: 1.0 },
        VorticitySpec::GeneralPatch { vertices: vec![[0.0, 0.0], [0.1, 0.0]], value: 1.0 },
        VorticitySpec::ParticleCloud { positions: vec![[0.0, 0.0]], weights: vec![0.0], values: vec![1.0], core: None },
    ];
    for s in bad {
        assert!(VorticityField::new(std::slice::from_ref(&s), &dom).is_err(), "{s:?}");
    }
    let json = r#"{"kind":"radial_patch","center":[0,0],"radius":0.5,"value":1.0,"extra":1}"#;
    assert!(serde_json::from_str::<VorticitySpec>(json).is_err());
}

#[test]
fn stationary_patch_flow_map() {
    let a = 0.5;
    let bs = centred_patch(a);
    let run = flow_map(&bs, &[c64(a / 2.0, 0.0), c64(0.7, 0.0)], TAU, &FlowOptions { tol: 1e-10, ..FlowOptions::default() }).unwrap();
    assert!(run.stationary);
    let end = run.tracers.last().unwrap();
    assert!((end[0] - c64(-a / 2.0, 0.0)).norm() < 1e-4, "{}", end[0]);
    // outside the patch the angular velocity is a²/(2ρ²)
    let angle = TAU * a * a / (2.0 * 0.49);
    assert!((end[1] - C64::from_polar(0.7, angle)).norm() < 1e-4);
    // T = 0 is the identity
    let id = flow_map(&bs, &[c64(0.1, 0.2)], 0.0, &FlowOptions::default()).unwrap();
    assert!(id.tracers.iter().all(|z| z[0] == c64(0.1, 0.2)));
    // backward integration returns the tracers
    let back = flow_map(&bs, end, -TAU, &FlowOptions { tol: 1e-10, ..FlowOptions::default() }).unwrap();
    for (p, q) in back.tracers.last().unwrap().iter().zip([c64(a / 2.0, 0.0), c64(0.7, 0.0)]) {
        assert!((p - q).norm() < 1e-5);
    }
}

#[test]
fn modulus_estimate_is_stable_under_resampling() {
    let bs = centred_patch(0.5);
    let mu = Modulus::with_default_bound(ModulusKind::HLog { c: 1.0 }, 2.0).unwrap();
    let dom = &bs.green.domain;
    let k1 = velocity_modulus_estimate(|x| bs.velocity(x), &PairSet::sample(dom, 512, 2, 20, 7).unwrap(), &mu).unwrap();
    let k2 = velocity_modulus_estimate(|x| bs.velocity(x), &PairSet::sample(dom, 1024, 2, 20, 8).unwrap(), &mu).unwrap();
    assert!(k1.is_finite() && k1 > 0.0);
    assert!((k1 - k2).abs() < 0.1 * k1, "{k1} vs {k2}");
    let zero = velocity_modulus_estimate(|_| Ok(c64(1.0, 2.0)), &PairSet::sample(dom, 64, 2, 20, 1).unwrap(), &mu).unwrap();
    assert_eq!(zero, 0.0);
}

#[test]
fn stationary_patch_has_no_violations_and_unit_exponent() {
    let bs = centred_patch(0.5);
    let dom = &bs.green.domain;
    let pairs = PairSet::sample(dom, 512, 2, 21, 3).unwrap();
    assert!(pairs.pairs.len() >= 10_000);
    let mu = Modulus::with_default_bound(ModulusKind::HLog { c: 1.0 }, 2.0).unwrap();
    let t_end = 2.0;
    let run = flow_map(&bs, &pairs.points, t_end, &FlowOptions { tol: 1e-10, n_out: 4, ..FlowOptions::default() }).unwrap();
    let kappa = run_modulus_estimate(&bs, &run, &pairs, &mu).unwrap();
    let family = GammaFamily::new(mu, 1.1 * kappa, t_end).unwrap();
    let stats = modulus_violation_check(&run, &pairs, &family).unwrap();
    assert!(stats[0].checked >= 10_000 - stats[0].skipped);
    for s in &stats {
        assert_eq!(s.violations, 0, "{s:?}");
    }
    for k in 0..run.times.len() {
        let fit = holder_exponent_estimate(&run, &pairs, k).unwrap();
        assert!((fit.r_hat - 1.0).abs() < 0.02, "t = {}: {fit:?}", run.times[k]);
    }
}

#[test]
fn degenerate_holder_sample_is_an_error() {
    let bs = centred_patch(0.5);
    let pairs = PairSet::sample(&bs.green.domain, 16, 2, 9, 1).unwrap();
    let mut run = flow_map(&bs, &pairs.points, 0.0, &FlowOptions::default()).unwrap();
    for z in run.tracers.iter_mut() {
        z.iter_mut().for_each(|p| *p = c64(0.1, 0.1));
    }
    assert!(matches!(holder_exponent_estimate(&run, &pairs, 0), Err(Error::Singular(_) | Error::Argument(_))));
}

#[test]
fn two_patch_transport_conserves_area_and_lp_norms() {
    let bs = two_patches();
    let tracers = [c64(0.0, 0.0), c64(0.6, 0.1)];
    let run = flow_map(&bs, &tracers, 5.0, &FlowOptions { n_out: 5, ..FlowOptions::default() }).unwrap();
    assert!(!run.stationary);
    let a0 = run.marker_areas(0);
    for k in 1..run.times.len() {
        for (a, b) in run.marker_areas(k).iter().zip(&a0) {
            assert!((a - b).abs() < 1e-3 * b, "t = {}: {a} vs {b}", run.times[k]);
        }
        for p in [1.0, 2.0, 8.0] {
            let (n0, n1) = (run.patch_lp_norm(0, p), run.patch_lp_norm(k, p));
            assert!((n1 - n0).abs() < 1e-3 * n0);
        }
    }
    // the patches co-rotate, so they have moved
    assert!((run.markers.last().unwrap()[0][0] - run.markers[0][0][0]).norm() > 0.05);
    // Kelvin: outer circulation equals the total vorticity
    let total = 2.0 * PI * 0.15f64.powi(2);
    let g0 = run.circulation(&bs, 0, 0).unwrap();
    let g1 = run.circulation(&bs, run.times.len() - 1, 0).unwrap();
    assert!((g0 - total).abs() < 1e-3 && (g1 - g0).abs() < 1e-3, "{g0} {g1} {total}");
    assert!((run.cloud.as_ref().unwrap().total() - total).abs() < 1e-12);
}

#[test]
fn lp_norms_and_membership_ratios() {
    let dom = Domain::disk(1.0).unwrap();
    let one = VorticityField::new(&[VorticitySpec::RadialPatch { center: [0.0, 0.0], radius: 1.0, value: 1.0 }], &dom).unwrap();
    for p in [1.0, 2.0, 7.0, 100.0] {
        assert!((one.lp_norm(&dom, p).unwrap() - PI.powf(1.0 / p)).abs() < 1e-12);
    }
    let germ = Germ::theta_m(1).unwrap();
    let ps: Vec<f64> = (2..=8).map(|k| 2f64.powi(k)).collect();
    let ll = VorticityField::new(&[VorticitySpec::LoglogSingularity { x0: [0.0, 0.0], scale: 1.0 }], &dom).unwrap();
    let r = lp_membership_ratio(&ll, &dom, &germ, &ps).unwrap();
    let (lo, hi) = r.iter().fold((f64::MAX, 0.0f64), |(l, h), x| (l.min(*x), h.max(*x)));
    assert!(hi / lo < 2.0, "{r:?}");
    // off-centre singularity: same growth
    let off = VorticityField::new(&[VorticitySpec::LoglogSingularity { x0: [0.3, 0.1], scale: 1.0 }], &dom).unwrap();
    let r2 = lp_membership_ratio(&off, &dom, &germ, &ps).unwrap();
    let (lo, hi) = r2.iter().fold((f64::MAX, 0.0f64), |(l, h), x| (l.min(*x), h.max(*x)));
    assert!(hi / lo < 2.0, "{r2:?}");
    // direct check of the log-space quadrature at p = 4
    let q = Quad::new(1e-14, 1e-12).integrate(|r| (2.0 * std::f64::consts::E / r).ln().ln().powi(4) * r, 0.0, 1.0).value;
    assert!((ll.lp_norm(&dom, 4.0).unwrap() - (TAU * q).powf(0.25)).abs() < 1e-8);
}

#[test]
fn two_patch_flow_map_respects_the_osgood_bound() {
    let bs = two_patches();
    let dom = &bs.green.domain;
    let pairs = PairSet::sample(dom, 512, 2, 21, 11).unwrap();
    let t_end = 4.0;
    let run = flow_map(&bs, &pairs.points, t_end, &FlowOptions { n_out: 4, ..FlowOptions::default() }).unwrap();
    let mu = Modulus::with_default_bound(ModulusKind::HLog { c: 1.0 }, 2.0).unwrap();
    let kappa = run_modulus_estimate(&bs, &run, &pairs, &mu).unwrap();
    let family = GammaFamily::new(mu, 1.1 * kappa, t_end).unwrap();
    let stats = modulus_violation_check(&run, &pairs, &family).unwrap();
    assert!(stats[1].checked > 1000, "{stats:?}");
    for s in &stats {
        assert!(s.fraction() < 0.01, "{s:?}");
    }
    let fits: Vec<_> = (0..run.times.len()).map(|k| holder_exponent_estimate(&run, &pairs, k).unwrap()).collect();
    assert!((fits[0].r_hat - 1.0).abs() < 0.02);
    for w in fits.windows(2) {
        assert!(w[1].r_hat <= w[0].r_hat + w[0].width.max(w[1].width), "{fits:?}");
    }
}
