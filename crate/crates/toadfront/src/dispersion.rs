//! Principal eigenpairs of `Δ_θ + λ²D + λA` with Neumann walls, the
//! dispersion relation `c(λ) = (1 + μ(λ))/λ`, its minimum `(c*, λ*)` and
//! the constants derived from the minimizing eigenfunction.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::TraitProfile;
use crate::stencil::ThetaOperator;

/// Default λ-range and sample count for locating the minimum.
pub const LAMBDA_RANGE: (f64, f64) = (0.05, 20.0);
pub const N_LAMBDA: usize = 64;
/// Golden-section stopping width in λ.
pub const TOL_MIN: f64 = 1e-9;
/// Relative step used for λ-derivatives of eigenpairs.
pub const H_LAMBDA: f64 = 1e-4;
/// Allowed relative violation of `c* ∫Q² = ∫(2λ*D + A) Q²`.
pub const TOL_REL3: f64 = 1e-6;
const TOL_EIG: f64 = 1e-10;
const MAX_INVERSE_ITERATIONS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPair {
    pub lambda: f64,
    pub mu: f64,
    /// Positive, normalized to `Σ Q_j dθ = 1`.
    pub q: Vec<f64>,
    pub iterations: usize,
    /// `‖(Δ + V) Q − μ Q‖∞ / ‖Q‖∞`.
    pub residual: f64,
}

fn potential(lambda: f64, profile: &TraitProfile) -> Vec<f64> {
    profile.d.iter().zip(&profile.a).map(|(d, a)| lambda * lambda * d + lambda * a).collect()
}

/// Number of eigenvalues strictly below `x` (Sturm count via LDLᵀ pivots).
fn count_below(diag: &[f64], off2: f64, x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for &d in &diag[1..] {
        let prev = if q == 0.0 { f64::MIN_POSITIVE } else { q };
        q = d - x - off2 / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `vᵀ(Δ + V)v / vᵀv`, written without the cancellation of the stencil.
fn rayleigh(v: &[f64], pot: &[f64], h: f64) -> f64 {
    let grad: f64 = v.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>() / (h * h);
    let pv: f64 = v.iter().zip(pot).map(|(a, b)| b * a * a).sum();
    let norm: f64 = v.iter().map(|a| a * a).sum();
    (pv - grad) / norm
}

/// Largest eigenvalue and its positive eigenvector.
pub fn principal_eigenpair(lambda: f64, profile: &TraitProfile) -> Result<EigenPair> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let dom = profile.domain;
    let n = dom.n_theta;
    let h = dom.dtheta();
    let pot = potential(lambda, profile);
    let op = ThetaOperator::laplacian(&dom);
    let (lower, lap_diag, upper) = op.tridiagonal();
    let diag: Vec<f64> = lap_diag.iter().zip(&pot).map(|(a, b)| a + b).collect();
    let off2 = 1.0 / (h * h * h * h);

    // The constant vector gives a lower bound, Δ ≤ 0 an upper one.
    let mut lo = pot.iter().sum::<f64>() / n as f64;
    let mut hi = pot.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = 4.0 / (h * h) + pot.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(&diag, off2, mid) == n {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // Inverse iteration just above the top of the spectrum, where the
    // shifted matrix is negative definite and needs no pivoting.
    let shift = hi + 1e-9 * scale.max(1.0);
    let shifted: Vec<f64> = diag.iter().map(|d| d - shift).collect();
    let factor = crate::tridiag::Factored::new(&lower, &shifted, &upper);
    let mut v = vec![1.0; n];
    let mut mu = hi;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_INVERSE_ITERATIONS {
        iterations += 1;
        factor.solve(&mut v);
        let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        v.iter_mut().for_each(|x| *x /= norm);
        mu = rayleigh(&v, &pot, h);
        let mv = op.apply(&v);
        residual = (0..n).map(|j| (mv[j] + pot[j] * v[j] - mu * v[j]).abs()).fold(0.0, f64::max);
        if residual <= TOL_EIG * scale && iterations >= 2 {
            break;
        }
    }
    if !(residual <= TOL_EIG * scale) {
        return Err(Error::EigenSolverFailure { iterations, residual });
    }
    let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mass = sign * v.iter().sum::<f64>() * h;
    let q: Vec<f64> = v.iter().map(|x| sign * x / mass).collect();
    if q.iter().any(|&x| x <= 0.0) {
        return Err(Error::EigenSolverFailure { iterations, residual });
    }
    Ok(EigenPair { lambda, mu, q, iterations, residual })
}

/// `dμ/dλ = ∫(2λD + A)Q² / ∫Q²` (the eigenvalue derivative of a
/// symmetric problem).
pub fn mu_derivative(pair: &EigenPair, profile: &TraitProfile) -> f64 {
    let num: f64 = (0..pair.q.len())
        .map(|j| (2.0 * pair.lambda * profile.d[j] + profile.a[j]) * pair.q[j] * pair.q[j])
        .sum();
    num / pair.q.iter().map(|x| x * x).sum::<f64>()
}

pub fn speed(lambda: f64, mu: f64) -> f64 {
    (1.0 + mu) / lambda
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionCurve {
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    pub speeds: Vec<f64>,
}

impl DispersionCurve {
    /// Smallest second divided difference of μ along the samples.
    pub fn min_convexity(&self) -> f64 {
        let l = &self.lambdas;
        let m = &self.mus;
        (1..l.len().saturating_sub(1))
            .map(|k| {
                let s1 = (m[k] - m[k - 1]) / (l[k] - l[k - 1]);
                let s2 = (m[k + 1] - m[k]) / (l[k + 1] - l[k]);
                (s2 - s1) / (l[k + 1] - l[k - 1]) * 2.0
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Samples `c(λ)` at `n_lambda` log-spaced points of `range`.
pub fn dispersion_curve(profile: &TraitProfile, range: (f64, f64), n_lambda: usize) -> Result<DispersionCurve> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo && n_lambda >= 3) {
        return Err(Error::InvalidParameter(format!("bad lambda range {range:?} / {n_lambda}")));
    }
    let lambdas: Vec<f64> = (0..n_lambda)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n_lambda - 1) as f64))
        .collect();
    let mus = lambdas
        .par_iter()
        .map(|&l| principal_eigenpair(l, profile).map(|p| p.mu))
        .collect::<Result<Vec<f64>>>()?;
    let speeds = lambdas.iter().zip(&mus).map(|(&l, &m)| speed(l, m)).collect();
    Ok(DispersionCurve { lambdas, mus, speeds })
}

/// The located minimum of `c(λ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedMinimum {
    pub c_star: f64,
    pub lambda_star: f64,
    pub q_star: EigenPair,
    pub c_second_deriv: f64,
}

fn speed_at(lambda: f64, profile: &TraitProfile) -> Result<f64> {
    Ok(speed(lambda, principal_eigenpair(lambda, profile)?.mu))
}

/// Golden-section refinement of the sampled minimum of the curve.
pub fn minimize_speed(curve: &DispersionCurve, profile: &TraitProfile) -> Result<SpeedMinimum> {
    let n = curve.speeds.len();
    let k = (0..n).min_by(|&a, &b| curve.speeds[a].total_cmp(&curve.speeds[b])).unwrap_or(0);
    if k == 0 || k + 1 >= n {
        return Err(Error::NoBracket { lo: curve.lambdas[0], hi: curve.lambdas[n - 1] });
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (curve.lambdas[k - 1], curve.lambdas[k + 1]);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = speed_at(x1, profile)?;
    let mut f2 = speed_at(x2, profile)?;
    for _ in 0..300 {
        if b - a <= TOL_MIN {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = speed_at(x1, profile)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = speed_at(x2, profile)?;
        }
    }
    let lambda_star = 0.5 * (a + b);
    let q_star = principal_eigenpair(lambda_star, profile)?;
    let c_star = speed(lambda_star, q_star.mu);
    let h = H_LAMBDA * lambda_star;
    let cp = speed_at(lambda_star + h, profile)?;
    let cm = speed_at(lambda_star - h, profile)?;
    let c_second_deriv = (cp - 2.0 * c_star + cm) / (h * h);
    Ok(SpeedMinimum { c_star, lambda_star, q_star, c_second_deriv })
}

/// `χ = −∂_λ Q / Q` at `lambda` by central differences with one
/// Richardson step.
pub fn compute_chi(profile: &TraitProfile, lambda: f64) -> Result<Vec<f64>> {
    let q0 = principal_eigenpair(lambda, profile)?.q;
    let central = |h: f64| -> Result<Vec<f64>> {
        let qp = principal_eigenpair(lambda + h, profile)?.q;
        let qm = principal_eigenpair(lambda - h, profile)?.q;
        Ok((0..q0.len()).map(|j| -(qp[j] - qm[j]) / (2.0 * h * q0[j])).collect())
    };
    let h = H_LAMBDA * lambda;
    let coarse = central(h)?;
    let fine = central(0.5 * h)?;
    Ok(coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
}

fn q2_mean(values: &[f64], q: &[f64]) -> f64 {
    let num: f64 = values.iter().zip(q).map(|(v, q)| v * q * q).sum();
    num / q.iter().map(|q| q * q).sum::<f64>()
}

/// `D̄ = ⟨D + c*χ − 2λ*Dχ − Aχ⟩` with the `Q*²`-weighted mean.
pub fn compute_dbar(profile: &TraitProfile, c_star: f64, lambda_star: f64, q_star: &[f64], chi: &[f64]) -> Result<f64> {
    let g: Vec<f64> = (0..chi.len())
        .map(|j| {
            let d = profile.d[j];
            d + c_star * chi[j] - 2.0 * lambda_star * d * chi[j] - profile.a[j] * chi[j]
        })
        .collect();
    let dbar = q2_mean(&g, q_star);
    if dbar > 0.0 {
        Ok(dbar)
    } else {
        Err(Error::NonPositiveDbar(dbar))
    }
}

/// `a·Q*²` with `a` chosen so that the weight has mean one over Θ.
pub fn self_adjoint_weight(q_star: &[f64]) -> Vec<f64> {
    let n = q_star.len() as f64;
    let mean_q2 = q_star.iter().map(|q| q * q).sum::<f64>() / n;
    q_star.iter().map(|q| q * q / mean_q2).collect()
}

/// Mean-zero Neumann solution of `Δ_θ β = w (2λ*D + A) − c*`, where `w`
/// is the self-adjoint weight. The right side has mean zero exactly when
/// `c* ∫Q*² = ∫(2λ*D + A)Q*²`; a relative defect above [`TOL_REL3`] is
/// reported as a solvability violation.
pub fn solve_corrector_beta(profile: &TraitProfile, c_star: f64, lambda_star: f64, weight: &[f64]) -> Result<Vec<f64>> {
    let op = ThetaOperator::laplacian(&profile.domain);
    let rhs: Vec<f64> = (0..weight.len())
        .map(|j| weight[j] * (2.0 * lambda_star * profile.d[j] + profile.a[j]) - c_star)
        .collect();
    let ones = vec![1.0; rhs.len()];
    op.solve_neumann(&rhs, &ones, Some((TOL_REL3, c_star))).map(|(beta, _)| beta)
}

/// `|c*∫Q² − ∫(2λD + A)Q²| / (c*∫Q²)`.
pub fn rel3_residual(profile: &TraitProfile, c_star: f64, lambda_star: f64, q: &[f64]) -> f64 {
    let v: Vec<f64> = (0..q.len()).map(|j| 2.0 * lambda_star * profile.d[j] + profile.a[j]).collect();
    (c_star - q2_mean(&v, q)).abs() / c_star.abs()
}

/// Relative residual of `∫(−λc′ − c + A + 2λD) Q_λ² = 0` with `c′` from
/// centered differences.
pub fn rel4_residual(profile: &TraitProfile, lambda: f64) -> Result<f64> {
    let pair = principal_eigenpair(lambda, profile)?;
    let c = speed(lambda, pair.mu);
    let h = H_LAMBDA * lambda;
    let cprime = (speed_at(lambda + h, profile)? - speed_at(lambda - h, profile)?) / (2.0 * h);
    let g: Vec<f64> = (0..pair.q.len())
        .map(|j| -lambda * cprime - c + profile.a[j] + 2.0 * lambda * profile.d[j])
        .collect();
    Ok(q2_mean(&g, &pair.q).abs() / c.abs())
}

/// Everything the rest of the crate needs from the eigenvalue problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralData {
    pub profile: TraitProfile,
    pub curve: DispersionCurve,
    pub c_star: f64,
    pub lambda_star: f64,
    pub q_star: Vec<f64>,
    pub mu_star: f64,
    pub chi: Vec<f64>,
    pub d_bar: f64,
    pub beta: Vec<f64>,
    pub weight_mu: Vec<f64>,
    pub c_second_deriv: f64,
    pub rel3_residual: f64,
}

impl SpectralData {
    pub fn compute(profile: &TraitProfile) -> Result<Self> {
        Self::compute_with(profile, LAMBDA_RANGE, N_LAMBDA)
    }

    pub fn compute_with(profile: &TraitProfile, range: (f64, f64), n_lambda: usize) -> Result<Self> {
        let curve = dispersion_curve(profile, range, n_lambda)?;
        let min = minimize_speed(&curve, profile)?;
        let (c_star, lambda_star) = (min.c_star, min.lambda_star);
        let q_star = min.q_star.q.clone();
        let chi = compute_chi(profile, lambda_star)?;
        let d_bar = compute_dbar(profile, c_star, lambda_star, &q_star, &chi)?;
        let weight_mu = self_adjoint_weight(&q_star);
        let beta = solve_corrector_beta(profile, c_star, lambda_star, &weight_mu)?;
        let rel3_residual = rel3_residual(profile, c_star, lambda_star, &q_star);
        Ok(Self {
            profile: profile.clone(),
            curve,
            c_star,
            lambda_star,
            mu_star: min.q_star.mu,
            q_star,
            chi,
            d_bar,
            beta,
            weight_mu,
            c_second_deriv: min.c_second_deriv,
            rel3_residual,
        })
    }

    /// `b = 2λ*D + A − c*`, the drift left after moving with speed `c*`.
    pub fn drift_b(&self) -> Vec<f64> {
        (0..self.q_star.len())
            .map(|j| 2.0 * self.lambda_star * self.profile.d[j] + self.profile.a[j] - self.c_star)
            .collect()
    }

    /// `λ* c''(λ*) / 2`, which equals `D̄`.
    pub fn dbar_from_curvature(&self) -> f64 {
        0.5 * self.lambda_star * self.c_second_deriv
    }

    /// The summary record written by the command line tool.
    pub fn report(&self, rel4_lambdas: &[f64]) -> Result<DispersionReport> {
        let rel4_residuals = rel4_lambdas
            .iter()
            .map(|&l| rel4_residual(&self.profile, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(DispersionReport {
            lambdas: self.curve.lambdas.clone(),
            mus: self.curve.mus.clone(),
            speeds: self.curve.speeds.clone(),
            c_star: self.c_star,
            lambda_star: self.lambda_star,
            q_star: self.q_star.clone(),
            chi: self.chi.clone(),
            d_bar: self.d_bar,
            beta: self.beta.clone(),
            identities: Identities {
                rel3_residual: self.rel3_residual,
                rel4_lambdas: rel4_lambdas.to_vec(),
                rel4_residuals,
                ddc: self.c_second_deriv,
                dbar_from_curvature: self.dbar_from_curvature(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Identities {
    pub rel3_residual: f64,
    pub rel4_lambdas: Vec<f64>,
    pub rel4_residuals: Vec<f64>,
    pub ddc: f64,
    pub dbar_from_curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionReport {
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    pub speeds: Vec<f64>,
    pub c_star: f64,
    pub lambda_star: f64,
    pub q_star: Vec<f64>,
    pub chi: Vec<f64>,
    pub d_bar: f64,
    pub beta: Vec<f64>,
    pub identities: Identities,
}
