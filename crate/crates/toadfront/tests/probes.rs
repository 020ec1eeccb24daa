use proptest::prelude::*;
use std::f64::consts::PI;
use toadfront::probes::*;
use toadfront::Error;

fn heat(a: f64, t: f64, x: f64, y: f64) -> f64 {
    (4.0 * PI * a * t).powf(-0.5) * (-(x - y).powi(2) / (4.0 * a * t)).exp()
}

fn rel_linf(est: &KernelEstimate, exact: impl Fn(f64, f64) -> f64) -> f64 {
    let g = &est.grid;
    let mut err = 0.0f64;
    let mut top = 0.0f64;
    for j in g.sample_range() {
        for i in g.sample_range() {
            let e = exact(g.x(i), g.x(j));
            err = err.max((est.g[(i, j)] - e).abs());
            top = top.max(e);
        }
    }
    err / top
}

#[test]
fn constant_coefficient_kernels_are_heat_kernels() {
    let grid = KernelGrid::symmetric(15.0, 0.05).unwrap();
    let one = estimate_kernel(|_| 1.0, 0.5, grid).unwrap();
    assert!(rel_linf(&one, |x, y| heat(1.0, 0.5, x, y)) <= 1e-3);
    let grid4 = KernelGrid::symmetric(24.0, 0.05).unwrap().with_sample(-6.0, 6.0).unwrap();
    let four = estimate_kernel(|_| 4.0, 0.5, grid4).unwrap();
    assert!(rel_linf(&four, |x, y| heat(4.0, 0.5, x, y)) <= 1e-3);
    assert!(one.g.iter().all(|v| *v >= 0.0));
    for m in one.row_masses() {
        assert!((m - 1.0).abs() < 1e-12);
    }
    let cols = one.column_masses();
    for j in grid.sample_range() {
        assert!((cols[j] - 1.0).abs() < 1e-3);
    }
}

#[test]
fn constant_coefficient_kernel_is_symmetric() {
    let grid = KernelGrid::symmetric(10.0, 0.05).unwrap().with_sample(-2.0, 2.0).unwrap();
    let est = estimate_kernel(|_| 2.0, 0.3, grid).unwrap();
    for i in grid.sample_range() {
        for j in grid.sample_range() {
            assert!((est.g[(i, j)] - est.g[(j, i)]).abs() <= 1e-10);
        }
    }
}

#[test]
fn variable_kernel_is_refinement_consistent() {
    let a = |x: f64| 2.0 + x.sin();
    let grid = KernelGrid::symmetric(8.0, 0.05).unwrap().with_sample(-2.0, 2.0).unwrap();
    let coarse = estimate_kernel(a, 0.1, grid).unwrap();
    let fine = estimate_kernel(a, 0.1, grid.refined()).unwrap();
    let mut err = 0.0f64;
    let mut top = 0.0f64;
    for j in grid.sample_range() {
        for i in grid.sample_range() {
            let f = fine.g[(2 * i, 2 * j)];
            err = err.max((coarse.g[(i, j)] - f).abs());
            top = top.max(f);
        }
    }
    assert!(err / top <= 2e-3, "{}", err / top);
}

#[test]
fn small_domain_is_rejected() {
    let grid = KernelGrid::symmetric(3.0, 0.05).unwrap();
    assert!(matches!(estimate_kernel(|_| 1.0, 1.0, grid), Err(Error::DomainTooSmall(_))));
}

#[test]
fn dyadic_kernels_agree_with_direct_ones() {
    let grid = KernelGrid::symmetric(8.0, 0.1).unwrap().with_sample(-2.0, 2.0).unwrap();
    let engine = KernelEngine::new(|x| 2.0 + x.sin(), grid).unwrap();
    let many = estimate_kernels(&engine, &[0.1, 0.025, 0.05]).unwrap();
    let direct = estimate_kernel(|x| 2.0 + x.sin(), 0.05, grid).unwrap();
    assert_eq!(many[2].t, 0.05);
    let diff = (&many[2].g - &direct.g).amax();
    assert!(diff <= 1e-10 * direct.g.amax());
}

#[test]
fn evolve_matches_propagator() {
    let grid = KernelGrid::symmetric(5.0, 0.1).unwrap();
    let engine = KernelEngine::new(|x| 1.5 + 0.5 * x.cos(), grid).unwrap();
    let u0: Vec<f64> = (0..grid.n()).map(|i| (-grid.x(i).powi(2)).exp()).collect();
    let u = engine.evolve(&u0, 0.4, false).unwrap();
    let p = engine.propagator(0.4).unwrap();
    let v = &p * nalgebra::DVector::from_vec(u0);
    for (a, b) in u.iter().zip(v.iter()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn distances() {
    assert!((riemannian_distance(&|_| 1.0, 0.0, 3.0) - 3.0).abs() < 1e-12);
    assert!((riemannian_distance(&|_| 4.0, 0.0, 3.0) - 1.5).abs() < 1e-12);
    let a = |x: f64| 2.0 + x.sin();
    let n = 1_000_000;
    let h = 3.0 / n as f64;
    let riemann: f64 = (0..n).map(|k| h / a((k as f64 + 0.5) * h).sqrt()).sum();
    let d = riemannian_distance(&a, 0.0, 3.0);
    assert!((d - riemann).abs() < 1e-10, "{d} {riemann}");
    assert_eq!(d, riemannian_distance(&a, 3.0, 0.0));
}

#[test]
fn metric_table_is_a_metric() {
    let a = |x: f64| 2.0 + x.sin();
    let grid = KernelGrid::symmetric(4.0, 0.25).unwrap();
    let m = MetricTable::new(&a, grid);
    let n = grid.n();
    for i in 0..n {
        for j in 0..n {
            assert_eq!(m.distance(i, j), m.distance(j, i));
            for k in (0..n).step_by(5) {
                assert!(m.distance(i, j) <= m.distance(i, k) + m.distance(k, j) + 1e-10);
            }
        }
        let direct = riemannian_distance(&a, grid.x(0), grid.x(i));
        assert!((m.distance(0, i) - direct).abs() < 1e-10);
    }
}

fn heat_varadhan_error(a: f64, t: f64, d_x: f64) -> f64 {
    // −4t log G − d² = 2t log(4πat) for the exact kernel
    let d2 = d_x * d_x / a;
    (2.0 * t * (4.0 * PI * a * t).ln()).abs() / d2.max(EPS_FLOOR)
}

#[test]
fn varadhan_for_constant_coefficients() {
    // separations with metric distance in [1, 1.5], resolved finely enough
    // that the grid's rate-function error stays below 0.01; the exact
    // envelope 2t|log 4πat| is not monotone on these times, so only the
    // values are checked
    let times = [0.1, 0.05, 0.025];
    for (a, dx, half) in [(1.0, 0.01, 6.0), (4.0, 0.02, 12.0)] {
        let grid = KernelGrid::symmetric(half, dx).unwrap().with_sample(-0.5, 0.5).unwrap();
        let sq = f64::sqrt(a);
        let table = varadhan_check(&|_| a, &times, grid, (sq, 1.5 * sq), EPS_FLOOR).unwrap();
        for row in &table.rows {
            let envelope = heat_varadhan_error(a, row.t, sq);
            assert!((row.error - envelope).abs() <= 0.01, "{a} {row:?} {envelope}");
        }
    }
}

#[test]
fn harnack_for_constant_data() {
    let grid = KernelGrid::symmetric(6.0, 0.1).unwrap();
    let rep = harnack_constant(&|_| 1.0, &|x| 2.0 + x.sin(), grid, &[0.5, 1.0], 1.0, 1.5, (-3.0, 3.0)).unwrap();
    assert!((rep.c_emp - 1.0).abs() < 1e-12);
}

#[test]
fn harnack_matches_gaussian_closed_form() {
    let s0 = 1.0;
    let (p, r) = (1.5, 1.0);
    let times = [0.5, 1.0, 2.0];
    let run = |half: f64| {
        let grid = KernelGrid::symmetric(half, 0.05).unwrap();
        harnack_constant(&|x| (-x * x / (4.0 * s0)).exp(), &|_| 1.0, grid, &times, r, p, (-6.0, 6.0)).unwrap()
    };
    let small = run(20.0);
    let exact = gaussian_harnack_constant(s0, 0.5, r, p);
    assert!((small.c_emp / exact - 1.0).abs() < 0.01, "{} {exact}", small.c_emp);
    assert_eq!(small.witness.0, 0.5);
    let big = run(40.0);
    assert!((big.c_emp / small.c_emp - 1.0).abs() < 0.1);
}

#[test]
fn harnack_without_exponent_gain_is_unbounded() {
    let grid = KernelGrid::symmetric(40.0, 0.05).unwrap();
    let u0 = |x: f64| (-x * x / 4.0).exp();
    let c = |w: f64| harnack_constant(&u0, &|_| 1.0, grid, &[1.0], 1.0, 1.0, (-w, w)).unwrap().c_emp;
    assert!(c(20.0) > 10.0 * c(10.0));
}

#[test]
fn harnack_rejects_vanishing_solutions() {
    let grid = KernelGrid::symmetric(40.0, 0.5).unwrap();
    let u0 = |x: f64| (-x * x * 20.0).exp();
    let r = harnack_constant(&u0, &|_| 1.0, grid, &[0.01], 1.0, 1.5, (-39.0, 39.0));
    assert!(matches!(r, Err(Error::NonPositive(_))));
}

#[test]
fn kernel_power_bound_matches_gaussian() {
    let (t0, r, s, p) = (0.5, 1.0, 0.8, 1.5);
    let grid = KernelGrid::symmetric(16.0, 0.05).unwrap();
    let rep = kernel_power_bound_check(&|_| 1.0, grid, t0, r, s, p).unwrap();
    let exact = gaussian_kernel_power_bound(t0, r, s, p);
    assert!((rep.c_emp / exact - 1.0).abs() < 0.01, "{} {exact} {:?}", rep.c_emp, rep.witness);
    assert!((rep.witness.0.abs() - 1.0).abs() < 1e-9);
    assert!((rep.witness.1.abs() - 6.0).abs() < 0.11);
}

#[test]
fn degenerate_kernel_power_is_unbounded() {
    let c = |half: f64| {
        let grid = KernelGrid::symmetric(half, 0.1).unwrap();
        kernel_power_bound_check(&|_| 1.0, grid, 0.5, 1.0, 1.0, 1.0).unwrap().c_emp
    };
    assert!(c(16.0) > 10.0 * c(8.0));
}

fn gaussian_trial() -> Vec<Factor> {
    vec![
        Factor::Gaussians { terms: vec![(1.0, 0.0, 1.0)] },
        Factor::Cosine { coefficients: vec![1.0] },
    ]
}

#[test]
fn nash_norms_of_a_gaussian() {
    let n = separable_norms(&gaussian_trial(), 2000).unwrap();
    assert!((n.l1 - (2.0 * PI).sqrt()).abs() < 1e-10);
    assert!((n.l2_sq - PI.sqrt()).abs() < 1e-10);
    assert!((n.grad_sq - 0.5 * PI.sqrt()).abs() < 1e-10);
    let rho = PI.powf(0.25) / (2.0 * PI).sqrt();
    let exact = 0.5 * (1.0 + rho.powf(3.0)) / rho.powi(4);
    assert!((nash_functional(n, 1, 1) - exact).abs() < 1e-9);
}

#[test]
fn nash_functional_scaling() {
    // φ_λ(x) = φ(λx) has norms λ^{−k}‖φ‖₁, λ^{−k}‖φ‖₂², λ^{2−k}‖φ_x‖² + λ^{−k}‖φ_θ‖²
    let base = vec![
        Factor::Gaussians { terms: vec![(1.0, 0.3, 0.8)] },
        Factor::Gaussians { terms: vec![(1.0, -0.2, 1.1)] },
        Factor::Cosine { coefficients: vec![1.0, 0.4, -0.1] },
    ];
    let n = separable_norms(&base, 2000).unwrap();
    let theta_part = {
        let mut only_theta = base.clone();
        only_theta.truncate(2);
        let x = separable_norms(&only_theta, 2000).unwrap();
        let th = base[2].integrals(2000).unwrap();
        x.l2_sq * th.2
    };
    for lam in [0.5, 2.0, 3.0] {
        let scaled: Vec<Factor> = base
            .iter()
            .map(|f| match f {
                Factor::Gaussians { terms } => Factor::Gaussians { terms: terms.iter().map(|&(w, c, s)| (w, c / lam, s / lam)).collect() },
                other => other.clone(),
            })
            .collect();
        let m = separable_norms(&scaled, 2000).unwrap();
        let k = 2;
        let expect = NashNorms {
            l1: lam.powi(-k) * n.l1,
            l2_sq: lam.powi(-k) * n.l2_sq,
            grad_sq: lam.powi(2 - k) * (n.grad_sq - theta_part) + lam.powi(-k) * theta_part,
        };
        assert!((m.l1 / expect.l1 - 1.0).abs() < 1e-9);
        assert!((m.l2_sq / expect.l2_sq - 1.0).abs() < 1e-9);
        assert!((m.grad_sq / expect.grad_sq - 1.0).abs() < 1e-9);
        assert!((nash_functional(m, 2, 1) / nash_functional(expect, 2, 1) - 1.0).abs() < 1e-8);
    }
}

#[test]
fn nash_rejects_truncated_trials() {
    let wide = vec![Factor::Gaussians { terms: vec![(1.0, 0.0, 1.0), (1e-3, 0.0, 30.0)] }, Factor::Cosine { coefficients: vec![1.0] }];
    // a narrow truncation window would cut a wide component; here the window adapts
    assert!(separable_norms(&wide, 2000).is_ok());
    let bump = Factor::Bump { center: 0.0, radius: 1.0 };
    assert!(bump.integrals(2000).unwrap().0 > 0.0);
}

#[test]
fn nash_check_is_deterministic_and_positive() {
    let a = nash_check(2, 1, 400, 7).unwrap();
    let b = nash_check(2, 1, 400, 7).unwrap();
    assert_eq!(a, b);
    assert!(a.c_emp > 0.0);
    let first = nash_trial(2, 1, 7, a.worst_trial);
    let v = nash_functional(separable_norms(&first, 2000).unwrap(), 2, 1);
    assert_eq!(v, a.c_emp);
    assert!(matches!(nash_check(4, 1, 10, 0), Err(Error::InvalidParameter(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trial_norms_satisfy_holder(seed in 0u64..1000, idx in 0u64..1000, k in 1usize..4, d in 1usize..3) {
        let n = separable_norms(&nash_trial(k, d, seed, idx), 2000).unwrap();
        prop_assert!(n.l1 > 0.0 && n.l2_sq > 0.0 && n.grad_sq > 0.0);
        prop_assert!(nash_functional(n, k, d) > 0.0);
    }

    #[test]
    fn kernel_columns_are_nonnegative(amp in 0.0f64..0.9, t in 0.05f64..0.3) {
        let grid = KernelGrid::symmetric(6.0, 0.1).unwrap().with_sample(-1.0, 1.0).unwrap();
        let est = estimate_kernel(|x| 1.0 + amp * x.sin(), t, grid).unwrap();
        prop_assert!(est.g.iter().all(|v| *v >= 0.0));
        for m in est.row_masses() {
            prop_assert!((m - 1.0).abs() < 1e-10);
        }
    }
}
