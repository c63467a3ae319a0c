use eulerlab::germ::Germ;
use eulerlab::modulus::*;

fn h_log_one(a: f64) -> Modulus {
    // c·h·log(h⁻²) with c = 1/2 is h·log(1/h)
    Modulus::new(ModulusKind::HLog { c: 0.5 }, a).unwrap()
}

#[test]
fn osgood_lipschitz_is_exponential() {
    let mu = Modulus::new(ModulusKind::Power { r: 1.0 }, 100.0).unwrap();
    for &(c, t) in &[(0.01, 2.0), (1e-6, 0.5), (0.3, 1.0)] {
        let r = mu.osgood_bound(c, t).unwrap();
        assert!(!r.saturated);
        let exact = c * f64::exp(t);
        assert!((r.value - exact).abs() < 1e-10 * exact, "{} vs {}", r.value, exact);
    }
}

#[test]
fn osgood_zero_time_and_saturation() {
    let mu = h_log_one(0.3);
    assert_eq!(mu.osgood_bound(0.01, 0.0).unwrap().value, 0.01);
    let s = mu.osgood_bound(0.2, 10.0).unwrap();
    assert!(s.saturated);
    assert_eq!(s.value, 0.3);
}

#[test]
fn osgood_log_lipschitz_closed_form() {
    let mu = h_log_one(0.3);
    for &(c, t) in &[(1e-3, 0.5), (1e-8, 1.0), (1e-12, 2.0)] {
        let r = mu.osgood_bound(c, t).unwrap().value;
        let exact = f64::powf(c, f64::exp(-t));
        assert!((r - exact).abs() < 1e-9 * exact, "{r} vs {exact}");
    }
}

#[test]
fn gamma_closed_form_and_defining_integral() {
    let fam = GammaFamily::new(h_log_one(0.3), 1.0, 1.0).unwrap();
    assert!(fam.a_tilde <= (-std::f64::consts::E).exp());
    for k in 5..=40 {
        let h = fam.a_tilde * 0.5f64.powi(k - 5);
        for &t in &[0.0, 0.1, 0.5, 1.0] {
            let g = fam.gamma_t(t, h).unwrap();
            let exact = h.powf(f64::exp(-t));
            assert!((g - exact).abs() <= 1e-8 * exact, "t={t} h={h:e}: {g} vs {exact}");
            if t > 0.0 {
                let back = fam.mu.inv_integral(h, g).value;
                assert!((back - t).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn gamma_semigroup_and_monotonicity() {
    let fam = GammaFamily::new(h_log_one(0.3), 2.0, 1.0).unwrap();
    let h = 1e-6;
    let (s, t) = (0.3, 0.4);
    let inner = fam.gamma_t(t, h).unwrap();
    let outer = fam.gamma_any(s, inner).unwrap().value;
    let total = fam.mu.inv_integral(h, outer).value;
    assert!((total - fam.kappa * (s + t)).abs() < 1e-8);
    let mut prev = 0.0;
    for k in (0..30).rev() {
        let g = fam.gamma_t(0.5, fam.a_tilde * 0.5f64.powi(k)).unwrap();
        assert!(g > prev);
        prev = g;
    }
    assert!(fam.gamma_t(0.5, 2.0 * fam.a_tilde).is_err());
    assert!(fam.gamma_t(1.5, fam.a_tilde).is_err());
}

#[test]
fn yudovich_theta0_ratio_tends_to_e() {
    let germ = Germ::theta_m(0).unwrap();
    let mu = yudovich_modulus(&germ, 1.0, 0.3).unwrap();
    let h = 1e-12;
    let ratio = mu.eval(h).unwrap() / (h * (-2.0 * h.ln()));
    assert!((ratio - std::f64::consts::E).abs() < 1e-6);
    assert!(yudovich_modulus(&germ, 1.0, 1.5).is_err());
}

#[test]
fn yudovich_theta1_below_product_bound() {
    let germ = Germ::theta_m(1).unwrap();
    let mu = yudovich_modulus(&germ, 1.0, 0.3).unwrap();
    for k in 4..60 {
        let h = 0.5f64.powi(k);
        let l = -2.0 * h.ln();
        let bound = std::f64::consts::E * h * l * l.ln();
        assert!(mu.eval(h).unwrap() <= bound * (1.0 + 1e-12));
    }
}

fn theta1_family() -> GammaFamily {
    let germ = Germ::theta_m(1).unwrap();
    let mu = yudovich_modulus(&germ, 1.0, 0.3).unwrap();
    GammaFamily::new(mu, 1.0, 0.25).unwrap()
}

#[test]
fn loglog_bound_dominates_gamma() {
    let fam = theta1_family();
    for &t in &[0.01, 0.1, 0.25] {
        for k in 0..40 {
            let h = fam.a_tilde * 0.5f64.powi(k);
            let g = fam.gamma_t(t, h).unwrap();
            let b = loglog_bound(1, 1.0, 1.0, t, h).unwrap();
            assert!(g <= b, "t={t} h={h:e}: gamma {g} bound {b}");
        }
    }
}

#[test]
fn loglog_exponent_without_factor_e_is_too_small() {
    // with exp(-2Cκt) in place of exp(-2Ceκt) the bound is violated
    let fam = theta1_family();
    let (t, h) = (0.01, 2f64.powi(-10));
    let g = fam.gamma_any(t, h).unwrap().value;
    let literal = loglog_bound(1, 1.0 / std::f64::consts::E, 1.0, t, h).unwrap();
    assert!(g > literal);
    assert!(g <= loglog_bound(1, 1.0, 1.0, t, h).unwrap());
}

#[test]
fn dini_power_converges() {
    let mu = Modulus::new(ModulusKind::Power { r: 0.5 }, 1.0).unwrap();
    let d = dini_integral(&mu, 1e-12).unwrap();
    let tail = d.tail_estimate.unwrap();
    assert!((d.partial + tail - 2.0).abs() < 1e-9);
    assert!((d.last_ratio.unwrap() - 0.5f64.sqrt()).abs() < 1e-9);
}

#[test]
fn dini_inverse_log_is_not_summable() {
    let mu = Modulus::new(ModulusKind::InvLog { exponent: 1.0 }, 0.3).unwrap();
    let d = dini_integral(&mu, 1e-30).unwrap();
    assert!(d.tail_estimate.is_none());
    // increments of ∫ dh/(h log(1/h)) decay only like 1/j
    let n = d.increments.len();
    assert!(d.increments[n - 2] > 0.5 * d.increments[n / 2]);
}

#[test]
fn dini_gamma_power_is_summable() {
    let fam = std::sync::Arc::new(theta1_family());
    let a = fam.a_tilde;
    let mu = Modulus::new(ModulusKind::GammaPower { family: fam, t: 0.1, r: 0.5 }, a).unwrap();
    let d = dini_integral(&mu, a * 1e-40).unwrap();
    assert!(d.partial.is_finite());
    let inc = &d.increments;
    assert!(inc[inc.len() - 2] < 0.1 * inc[0]);
}

#[test]
fn holder_compose_examples() {
    assert_eq!(holder_compose_bound(0.0, 0.3, 5.0).unwrap(), 0.0);
    assert_eq!(holder_compose_bound(1.0, 0.5, 4.0).unwrap(), 2.0);
    assert!(holder_compose_bound(1.0, 1.5, 4.0).is_err());
}

#[test]
fn upsilon_below_bound_by_enumeration() {
    assert_eq!(upsilon_sum(1, 0).unwrap(), UpsilonSum { sum: 1.0, bound: 20.0 });
    assert_eq!(upsilon_sum(3, 0).unwrap().sum, 1.0);
    for s in 1..=6 {
        for m in 0..=12 {
            let u = upsilon_sum(s, m).unwrap();
            assert!(u.sum <= u.bound, "s={s} m={m}");
        }
    }
}
