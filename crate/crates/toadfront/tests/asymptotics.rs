use proptest::prelude::*;
use toadfront::asymptotics::*;
use toadfront::dispersion::SpectralData;
use toadfront::model::*;
use toadfront::Error;

fn constant_spectral() -> SpectralData {
    let p = TraitProfile::constant(ThetaDomain::new(1.0, 2.0, 8).unwrap(), 1.0).unwrap();
    SpectralData::compute(&p).unwrap()
}

fn toads_spectral() -> SpectralData {
    let p = TraitProfile::cane_toads(ThetaDomain::new(1.0, 2.0, 16).unwrap()).unwrap();
    SpectralData::compute(&p).unwrap()
}

#[test]
fn constant_coefficients_have_trivial_correctors() {
    let sp = constant_spectral();
    let e = build_expansion(&sp, 0.0, 0.0, 3.0).unwrap();
    assert!(e.chi0.iter().all(|c| c.abs() < 1e-8), "{:?}", e.chi0);
    assert!(e.beta1.abs() < 1e-8 && e.beta2.abs() < 1e-8);
    assert!((e.d_bar - 1.0).abs() < 1e-6);
    // every right side vanishes, so φ₁ does too
    assert!(e.c_phi < 1e-8);

    let e = build_expansion(&sp, -1.0, 0.0, 3.0).unwrap();
    assert!((e.beta1 + 0.5).abs() < 1e-8);
}

#[test]
fn perturbed_dbar_breaks_solvability() {
    let sp = toads_spectral();
    let e = build_expansion(&sp, default_chi_bar(&sp.chi), 0.0, 3.0).unwrap();
    assert!(e.solvability_residual <= TOL_SOLVABILITY);
    let r = build_expansion_with_dbar(&sp, 1.01 * e.d_bar, e.chi_bar, 0.0, 3.0);
    assert!(matches!(r, Err(Error::SolvabilityViolation { .. })));
}

#[test]
fn degenerate_inputs_are_rejected() {
    let sp = constant_spectral();
    assert!(matches!(build_expansion(&sp, 0.0, 0.0, 0.0), Err(Error::InvalidParameter(_))));
    let e = build_expansion(&sp, 0.0, 0.0, 3.0).unwrap();
    assert!(residual_of_s(&e, &[10.0], Truncation::Full, 0.01).is_err());
    let bad = ProximityConfig { tau_start: 200.0, ..ProximityConfig::default() };
    assert!(compare_xi_s(&e, &bad).is_err());
}

#[test]
fn phi1_solves_its_equation() {
    let sp = toads_spectral();
    let ob = default_omega_bar(sp.c_star, sp.lambda_star);
    let e = build_expansion(&sp, default_chi_bar(&sp.chi), ob, 3.0).unwrap();
    let [p0, d0, _] = e.phi1_at(0.0);
    assert!(p0.abs() < 1e-14 && d0.abs() < 1e-14);
    assert!(e.c_phi > 0.0 && e.c_phi.is_finite());
    let h = 1e-3;
    for z in [-2.3, 0.4, 1.7, 4.2] {
        let phi = |z: f64| e.phi1_at(z)[0];
        let d1 = (phi(z + h) - phi(z - h)) / (2.0 * h);
        let d2 = (phi(z + h) - 2.0 * phi(z) + phi(z - h)) / (h * h);
        let s = s0_derivatives(e.d_bar, z);
        let rhs = (3.0 * e.beta1 - ob * e.c_star) * s[1] + e.beta1 * z * s[2] + e.beta2 * s[3];
        let lhs = -1.5 * phi(z) - 0.5 * z * d1 - e.d_bar * d2;
        assert!((lhs - rhs).abs() < 1e-5, "z = {z}: {lhs} vs {rhs}");
        let [_, dp, ddp] = e.phi1_at(z);
        assert!((dp - d1).abs() < 1e-6 && (ddp - d2).abs() < 1e-5);
    }
}

#[test]
fn leading_term_is_self_similar() {
    let sp = toads_spectral();
    let e = build_expansion(&sp, default_chi_bar(&sp.chi), 0.0, 3.0).unwrap();
    for (tau, y) in [(100.0, 3.0), (250.0, 17.0), (60.0, 0.5)] {
        let a = e.evaluate(tau, y, Truncation::S0)[0];
        let b = e.evaluate(4.0 * tau, 2.0 * y, Truncation::S0)[0];
        assert!((a - 4.0 * b).abs() <= 1e-14 * a.abs());
    }
}

#[test]
fn value_at_the_boundary() {
    let sp = toads_spectral();
    let e = build_expansion(&sp, default_chi_bar(&sp.chi), 0.3, 3.0).unwrap();
    let tau: f64 = 150.0;
    let s = e.evaluate(tau, 0.0, Truncation::S2);
    for (v, c) in s.iter().zip(&e.chi0) {
        assert!((v - c / tau.powf(1.5)).abs() < 1e-14);
    }
}

/// `∂_τ(yτ^{-3/2}e^{-y²/4τ})` in closed form.
fn heat_dipole_dt(tau: f64, y: f64) -> f64 {
    let e = (-y * y / (4.0 * tau)).exp();
    y * e * (-1.5 * tau.powf(-2.5) + y * y / 4.0 * tau.powf(-3.5))
}

#[test]
fn leading_residual_is_the_time_change_defect() {
    // with constant coefficients S⁰/τ is the heat dipole, so only the ω terms remain
    let sp = constant_spectral();
    let ob = default_omega_bar(sp.c_star, sp.lambda_star);
    let e = build_expansion(&sp, 0.0, ob, 3.0).unwrap();
    let dy = 0.01;
    let taus = [100.0, 400.0];
    let report = residual_of_s(&e, &taus, Truncation::S0, dy).unwrap();
    for (k, &tau) in taus.iter().enumerate() {
        let w = ob / tau;
        let n = (3.0 * tau.sqrt() / dy).floor() as usize;
        let exact = (1..=n)
            .map(|i| {
                let y = i as f64 * dy;
                let z = y / tau.sqrt();
                let s1 = (1.0 - z * z / 2.0) * (-z * z / 4.0).exp();
                (-w * heat_dipole_dt(tau, y) + w * e.c_star * s1 / tau.powf(1.5)).abs()
            })
            .fold(0.0, f64::max);
        assert!((report.sup_residual[k] - exact).abs() <= 1e-3 * exact, "{} vs {exact}", report.sup_residual[k]);
    }

    let e0 = build_expansion(&sp, 0.0, 0.0, 3.0).unwrap();
    let r0 = residual_of_s(&e0, &taus, Truncation::S0, dy).unwrap();
    for (r, tau) in r0.sup_residual.iter().zip(taus) {
        assert!(*r < 1e-4 * tau.powf(-2.5), "{r}");
    }
}

#[test]
fn full_expansion_decays_faster_than_its_leading_term() {
    let sp = toads_spectral();
    let e = build_expansion(&sp, default_chi_bar(&sp.chi), default_omega_bar(sp.c_star, sp.lambda_star), 3.0).unwrap();
    let taus = [100.0, 200.0, 400.0];
    let full = residual_of_s(&e, &taus, Truncation::Full, 0.02).unwrap();
    let lead = residual_of_s(&e, &taus, Truncation::S0, 0.02).unwrap();
    for (f, l) in full.ratios.iter().zip(&lead.ratios) {
        assert!(f > l);
        assert!((6.0..=10.7).contains(f), "{f}");
    }
    assert!(full.sup_residual.iter().zip(&lead.sup_residual).all(|(f, l)| f < l));
    assert!(full.gaussian_constant.iter().all(|g| *g > 0.0 && *g < 10.0));
}

#[test]
fn strip_solution_starting_from_s_stays_close() {
    let sp = constant_spectral();
    let e = build_expansion(&sp, -1.0, default_omega_bar(sp.c_star, sp.lambda_star), 3.0).unwrap();
    let same = ProximityConfig { tau_start: 100.0, per_dyad: 1, ..ProximityConfig::default() };
    let trace = compare_xi_s(&e, &same).unwrap();
    assert_eq!(trace.taus.len(), 3);
    assert_eq!(trace.weighted_deviation[0], 0.0);
    assert!(trace.weighted_deviation[1] > 0.0 && trace.weighted_deviation[2] < 1.0);
}

fn dipole_field(tau: f64, c: f64, n_x: usize, dx: f64, x_offset: f64) -> Field {
    let mut f = Field::from_fn(n_x, dx, x_offset, ThetaDomain::new(1.0, 2.0, 4).unwrap(), |x, _| {
        let y = x - c * tau;
        if y > 0.0 {
            y * tau.powf(-1.5) * (-y * y / (4.0 * tau)).exp()
        } else {
            0.0
        }
    });
    f.t = tau;
    f
}

#[test]
fn interior_amplitude_of_a_dipole() {
    let c = 2.0;
    let (sigma, dx) = (3.0, 0.01);
    let fields: Vec<Field> = [100.0, 200.0, 400.0].iter().map(|&t| dipole_field(t, c, 7000, dx, c * t - 5.0)).collect();
    let tr = front_interior_amplitude(&fields, c, sigma).unwrap();
    let exact = sigma * (-sigma * sigma / 4.0).exp();
    for v in &tr.values {
        assert!((v - exact).abs() < 1e-4 * exact, "{v} vs {exact}");
    }
    assert!(tr.band_ratio(0.0, 1e9) < 1.0 + 2e-4);
    let short = dipole_field(100.0, c, 100, 0.1, 195.0);
    assert!(matches!(front_interior_amplitude([&short], c, sigma), Err(Error::WindowOutsideGrid { .. })));
}

#[test]
fn decay_band_of_a_dipole() {
    let c = 2.0;
    let f = dipole_field(100.0, c, 4000, 0.01, 195.0);
    let band = p_decay_band([&f], c, 3.0, 1.0).unwrap();
    assert!((band[0].hi - (-0.01f64 / 4.0).exp()).abs() < 1e-3);
    assert!((band[0].lo - (-9.0f64 / 4.0).exp()).abs() < 1e-3);
    let narrow = dipole_field(100.0, c, 100, 0.01, 201.0);
    assert!(p_decay_band([&narrow], c, 3.0, 1.0).is_err());
}

#[test]
fn boundary_amplitude_and_verdicts() {
    let l = 0.8;
    let mut f = Field::from_fn(800, 0.05, 10.0, ThetaDomain::new(1.0, 2.0, 4).unwrap(), |x, _| {
        let xi = x - 10.0;
        3.0 * xi * (-l * xi).exp()
    });
    f.t = 100.0;
    assert!((boundary_amplitude(&f, 10.0, l, 3.0) - 3.0).abs() < 1e-12);
    assert_eq!(Verdict::classify(0.1), Verdict::Decaying);
    assert_eq!(Verdict::classify(1.0), Verdict::Bounded);
    assert_eq!(Verdict::classify(8.0), Verdict::Growing);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn s0_derivatives_match_differences(d in 0.3f64..3.0, z in -6.0f64..6.0) {
        let h = 1e-4;
        let s = s0_derivatives(d, z);
        let p = s0_derivatives(d, z + h);
        let m = s0_derivatives(d, z - h);
        for n in 0..3 {
            prop_assert!((s[n + 1] - (p[n] - m[n]) / (2.0 * h)).abs() < 1e-6);
        }
    }

    #[test]
    fn omega_bar_is_the_critical_shift(c in 0.5f64..5.0, l in 0.2f64..3.0) {
        let ob = default_omega_bar(c, l);
        prop_assert!((ob * c - 3.0 / (2.0 * l)).abs() < 1e-12);
    }

    #[test]
    fn chi_bar_dominates(chi in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let cb = default_chi_bar(&chi);
        prop_assert!(chi.iter().all(|c| c + cb <= -1.0 + 1e-12));
    }
}
