use nalgebra::{DMatrix, DVector, SymmetricEigen};
use toadfront::dispersion::*;
use toadfront::model::{ThetaDomain, TraitProfile};

fn toads(n: usize) -> TraitProfile {
    TraitProfile::cane_toads(ThetaDomain::new(1.0, 2.0, n).unwrap()).unwrap()
}

/// Dense matrix of Δ_h + diag(λ²D + λA), assembled from scratch.
fn dense_operator(lambda: f64, p: &TraitProfile) -> DMatrix<f64> {
    let n = p.n_theta();
    let h = p.domain.dtheta();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        if j > 0 {
            m[(j, j - 1)] = 1.0 / (h * h);
            m[(j, j)] -= 1.0 / (h * h);
        }
        if j + 1 < n {
            m[(j, j + 1)] = 1.0 / (h * h);
            m[(j, j)] -= 1.0 / (h * h);
        }
        m[(j, j)] += lambda * lambda * p.d[j] + lambda * p.a[j];
    }
    m
}

fn dense_top(lambda: f64, p: &TraitProfile) -> (f64, Vec<f64>) {
    let eig = SymmetricEigen::new(dense_operator(lambda, p));
    let k = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(k);
    let s = v.sum() * p.domain.dtheta();
    (eig.eigenvalues[k], v.iter().map(|x| x / s).collect())
}

/// c'(λ) from the dense eigenpair via μ' = ∫(2λD + A)Q²/∫Q².
fn dense_cprime(lambda: f64, p: &TraitProfile) -> f64 {
    let (mu, q) = dense_top(lambda, p);
    let num: f64 = (0..q.len()).map(|j| (2.0 * lambda * p.d[j] + p.a[j]) * q[j] * q[j]).sum();
    let den: f64 = q.iter().map(|x| x * x).sum();
    (lambda * num / den - 1.0 - mu) / (lambda * lambda)
}

#[test]
fn constant_diffusivity_eigenpairs() {
    let dom = ThetaDomain::new(0.0, 1.0, 16).unwrap();
    let p = TraitProfile::constant(dom, 1.0).unwrap();
    let e = principal_eigenpair(1.0, &p).unwrap();
    assert!((e.mu - 1.0).abs() < 1e-12);
    assert!(e.q.iter().all(|q| (q - 1.0).abs() < 1e-10));

    let p4 = TraitProfile::constant(dom, 4.0).unwrap();
    let e = principal_eigenpair(0.5, &p4).unwrap();
    assert!((e.mu - 1.0).abs() < 1e-12);
}

#[test]
fn eigenpair_matches_dense_solver() {
    let p = toads(256);
    let e = principal_eigenpair(1.0, &p).unwrap();
    let (mu, q) = dense_top(1.0, &p);
    assert!((e.mu - mu).abs() < 1e-8, "{} vs {}", e.mu, mu);
    for j in 0..256 {
        assert!((e.q[j] - q[j]).abs() < 1e-8);
    }
    assert!((p.domain.integrate(&e.q) - 1.0).abs() < 1e-12);
}

#[test]
fn eigenvalue_converges_at_second_order() {
    let mus: Vec<f64> = [256, 512, 1024, 2048].iter().map(|&n| principal_eigenpair(1.0, &toads(n)).unwrap().mu).collect();
    // the O(dθ²) constant is small for D = θ, so the asymptotic regime
    // starts only around 256 cells
    for k in 0..2 {
        let ratio = (mus[k] - mus[k + 1]) / (mus[k + 1] - mus[k + 2]);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }
}

/// Shooting on Q'' + (λ²θ − μ)Q = 0, Q'(1) = 0, for the μ with Q'(2) = 0.
fn shooting_mu(lambda: f64) -> f64 {
    let endpoint = |mu: f64| {
        let steps = 4000;
        let h = 1.0 / steps as f64;
        let rhs = |t: f64, y: [f64; 2]| [y[1], (mu - lambda * lambda * t) * y[0]];
        let mut y = [1.0, 0.0];
        let mut t = 1.0;
        for _ in 0..steps {
            let k1 = rhs(t, y);
            let k2 = rhs(t + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
            let k3 = rhs(t + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
            let k4 = rhs(t + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            t += h;
        }
        y[1]
    };
    // the principal μ lies in [λ², 2λ²]; Q'(2) changes sign there once
    let (mut lo, mut hi) = (lambda * lambda, 2.0 * lambda * lambda);
    let flo = endpoint(lo);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if endpoint(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn curve_matches_shooting_oracle() {
    for &lambda in &[0.3, 0.6, 0.9, 1.5, 3.0] {
        let m1 = principal_eigenpair(lambda, &toads(256)).unwrap().mu;
        let m2 = principal_eigenpair(lambda, &toads(512)).unwrap().mu;
        let extrapolated = (4.0 * m2 - m1) / 3.0;
        let shot = shooting_mu(lambda);
        assert!((extrapolated - shot).abs() < 1e-8 * shot.max(1.0), "λ={lambda}: {extrapolated} vs {shot}");
    }
}

#[test]
fn constant_coefficient_curve_is_exact() {
    let dom = ThetaDomain::new(0.0, 1.0, 8).unwrap();
    for d0 in [1.0, 2.5] {
        let p = TraitProfile::constant(dom, d0).unwrap();
        let curve = dispersion_curve(&p, (0.1, 10.0), 17).unwrap();
        for (l, c) in curve.lambdas.iter().zip(&curve.speeds) {
            assert!((c - (d0 * l + 1.0 / l)).abs() < 1e-10);
        }
        let min = minimize_speed(&curve, &p).unwrap();
        assert!((min.c_star - 2.0 * d0.sqrt()).abs() < 1e-9);
        assert!((min.lambda_star - 1.0 / d0.sqrt()).abs() < 1e-6);
    }
}

#[test]
fn monotone_range_has_no_bracket() {
    let p = TraitProfile::constant(ThetaDomain::new(0.0, 1.0, 8).unwrap(), 1.0).unwrap();
    let curve = dispersion_curve(&p, (2.0, 10.0), 9).unwrap();
    assert!(matches!(minimize_speed(&curve, &p), Err(toadfront::Error::NoBracket { .. })));
}

#[test]
fn minimum_matches_bisection_on_dense_derivative() {
    let p = toads(256);
    let s = SpectralData::compute(&p).unwrap();
    let (mut lo, mut hi) = (0.3, 1.5);
    assert!(dense_cprime(lo, &p) < 0.0 && dense_cprime(hi, &p) > 0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if dense_cprime(mid, &p) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda_oracle = 0.5 * (lo + hi);
    let c_oracle = (1.0 + dense_top(lambda_oracle, &p).0) / lambda_oracle;
    assert!((s.lambda_star - lambda_oracle).abs() < 1e-6 * lambda_oracle);
    assert!((s.c_star - c_oracle).abs() < 1e-9 * c_oracle);
}

#[test]
fn spectral_invariants_for_cane_toads() {
    let p = toads(256);
    let s = SpectralData::compute(&p).unwrap();
    assert!(s.rel3_residual <= 1e-6, "rel3 {}", s.rel3_residual);
    for l in [0.3, 0.5, 0.8, 1.2, 2.0] {
        let r = rel4_residual(&p, l).unwrap();
        assert!(r <= 5e-4, "rel4 at {l}: {r}");
    }
    assert!(s.curve.min_convexity() >= -1e-10);
    assert!(s.c_second_deriv > 0.0);
    let h = 1e-4 * s.lambda_star;
    let c = |l: f64| (1.0 + principal_eigenpair(l, &p).unwrap().mu) / l;
    let cprime = (c(s.lambda_star + h) - c(s.lambda_star - h)) / (2.0 * h);
    assert!(cprime.abs() <= 1e-7, "c'(λ*) = {cprime}");
    assert!(((s.d_bar - s.dbar_from_curvature()) / s.d_bar).abs() <= 1e-3);
    let mean_w = s.weight_mu.iter().sum::<f64>() / s.weight_mu.len() as f64;
    assert!((mean_w - 1.0).abs() < 1e-12);
}

#[test]
fn speed_converges_at_second_order_in_theta() {
    let cs: Vec<f64> = [256, 512, 1024].iter().map(|&n| SpectralData::compute(&toads(n)).unwrap().c_star).collect();
    let ratio = (cs[0] - cs[1]) / (cs[1] - cs[2]);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

/// Dense least-squares solve of L_h χ = 2λ*D + A − μ′(λ*) with Σ χ Q = 0.
#[test]
fn chi_matches_direct_corrector_solve() {
    let p = toads(128);
    let s = SpectralData::compute(&p).unwrap();
    let n = p.n_theta();
    let h = p.domain.dtheta();
    let q = &s.q_star;
    let mut m = DMatrix::zeros(n + 1, n);
    let mut rhs = DVector::zeros(n + 1);
    let num: f64 = (0..n).map(|j| (2.0 * s.lambda_star * p.d[j]) * q[j] * q[j]).sum();
    let mu_prime = num / q.iter().map(|x| x * x).sum::<f64>();
    for j in 0..n {
        let qm = if j > 0 { q[j - 1] } else { 0.0 };
        let qp = if j + 1 < n { q[j + 1] } else { 0.0 };
        if j > 0 {
            m[(j, j - 1)] = qm / (q[j] * h * h);
        }
        if j + 1 < n {
            m[(j, j + 1)] = qp / (q[j] * h * h);
        }
        m[(j, j)] = -(qm + qp) / (q[j] * h * h);
        rhs[j] = 2.0 * s.lambda_star * p.d[j] - mu_prime;
        m[(n, j)] = q[j];
    }
    let chi = m.svd(true, true).solve(&rhs, 1e-14).unwrap();
    for j in 0..n {
        assert!((chi[j] - s.chi[j]).abs() < 1e-6, "j={j}: {} vs {}", chi[j], s.chi[j]);
    }
    let dq: f64 = (0..n).map(|j| s.chi[j] * q[j]).sum::<f64>() * h;
    assert!(dq.abs() < 1e-8);
}

#[test]
fn constant_profiles_have_trivial_correctors() {
    let p = TraitProfile::constant(ThetaDomain::new(0.0, 2.0, 32).unwrap(), 3.0).unwrap();
    let s = SpectralData::compute(&p).unwrap();
    assert!(s.chi.iter().all(|c| c.abs() < 1e-7));
    assert!((s.d_bar - 3.0).abs() < 1e-6);
    assert!(s.beta.iter().all(|b| b.abs() < 1e-9));
}

#[test]
fn beta_reproduces_its_right_side() {
    let errs: Vec<f64> = [64, 128]
        .iter()
        .map(|&n| {
            let p = toads(n);
            let s = SpectralData::compute(&p).unwrap();
            let h = p.domain.dtheta();
            let b = &s.beta;
            (0..n)
                .map(|j| {
                    let l = if j > 0 { b[j - 1] } else { b[j] };
                    let r = if j + 1 < n { b[j + 1] } else { b[j] };
                    let lap = (l - 2.0 * b[j] + r) / (h * h);
                    let rhs = s.weight_mu[j] * 2.0 * s.lambda_star * p.d[j] - s.c_star;
                    (lap - rhs).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(errs[0] < 1e-5 && errs[1] < 1e-5, "{errs:?}");
    let s = SpectralData::compute(&toads(64)).unwrap();
    assert!(s.beta.iter().any(|b| b.abs() > 1e-3));
    let perturbed = solve_corrector_beta(&s.profile, s.c_star * 1.001, s.lambda_star, &s.weight_mu);
    assert!(matches!(perturbed, Err(toadfront::Error::SolvabilityViolation { .. })));
}
