//! The approximate solution of the drift-corrected linear problem
//!
//! ```text
//! (1 − ω) p_τ = D p_yy + L p − b p_y − ω c* p_y,   y = x − c*τ > 0,
//! ```
//!
//! with `L = Δ_θ + 2(Q*'/Q*)∂_θ`, `b = 2λ*D + A − c*` and `ω = ω̄/τ`,
//! built as
//!
//! ```text
//! S = τ^{-1} (S⁰(z) + S¹(z,θ) τ^{-1/2} + S²(z,θ) τ^{-1} + S³(z,θ) τ^{-3/2}),   z = y/√τ,
//! ```
//!
//! together with the decay laws of `p` near and inside the front, and the
//! moving-boundary criticality experiment.
//!
//! Collecting powers of `τ` gives, with `⟨·⟩` the `Q*²`-weighted mean:
//!
//! - `L χ = b`, `χ₀ = χ + χ̄`, `S¹ = χ₀ S⁰_z + φ₁`;
//! - `S⁰ = z e^{−z²/4D̄}` with `D̄ = ⟨D − bχ⟩`;
//! - `S² = χ₀ φ₁' + Ŝ² S⁰_zz` with `L Ŝ² = D̄ − D + bχ₀`;
//! - `−(3/2)φ₁ − (z/2)φ₁' − D̄ φ₁'' = (3β₁ − ω̄c*) S⁰_z + β₁ z S⁰_zz + β₂ S⁰_zzz`,
//!   `β₁ = ⟨χ₀⟩/2`, `β₂ = ⟨Dχ₀⟩ − ⟨bŜ²⟩`, `φ₁(0) = φ₁'(0) = 0`;
//! - `S³ = Σ hᵢ(θ) Fᵢ(z)` with `L hᵢ = gᵢ − ⟨gᵢ⟩` for the six pairs listed
//!   in [`S3_TERMS`].

use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dispersion::SpectralData;
use crate::error::{Error, Result};
use crate::model::{Field, ThetaDomain, WindowPolicy};
use crate::solver::{
    run, BoundaryShift, FrontSpectrum, InitSpec, ModelKind, ModelSpec, Operator, Reaction, Scalars, Schedule, Stepper,
    XBoundary,
};
use crate::stencil::ThetaOperator;

pub const TAU_MIN_ASSEMBLE: f64 = 50.0;
pub const SIGMA_DEFAULT: f64 = 3.0;
/// RK4 step for `φ₁`.
pub const PHI_DZ: f64 = 1e-3;
/// Half-width of the tabulated `φ₁` (beyond it the end values are used).
pub const PHI_TABLE: f64 = 20.0;
/// Relative weighted mean allowed in the right side of the `Ŝ²` problem.
pub const TOL_SOLVABILITY: f64 = 1e-8;
/// Allowed relative gap between the discrete and the spectral `D̄`.
pub const TOL_DBAR: f64 = 1e-6;

/// `(θ-coefficient, z-function)` labels of the six terms of `S³`.
pub const S3_TERMS: [(&str, &str); 6] = [
    ("-3/2 chi0 + omega_bar c*", "S0_z"),
    ("-chi0/2", "z S0_zz"),
    ("-D chi0 + b S2_hat", "S0_zzz"),
    ("-3/2", "phi1"),
    ("-1/2", "z phi1_z"),
    ("-D + b chi0", "phi1_zz"),
];

/// `−(1 + max|χ|)`, the shift used for sub-solutions.
pub fn default_chi_bar(chi: &[f64]) -> f64 {
    -(1.0 + chi.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// `ω̄ = 3/(2λ*c*)`: the `1/τ` coefficient of `ω` for the time change
/// with the critical shift `r = 3/(2λ*)`.
pub fn default_omega_bar(c_star: f64, lambda_star: f64) -> f64 {
    3.0 / (2.0 * lambda_star * c_star)
}

/// How many terms of `S` to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    S0,
    S1,
    S2,
    Full,
}

impl Truncation {
    fn terms(self) -> usize {
        match self {
            Truncation::S0 => 1,
            Truncation::S1 => 2,
            Truncation::S2 => 3,
            Truncation::Full => 4,
        }
    }
}

/// `φ₁` and `φ₁'` tabulated on `[−PHI_TABLE, PHI_TABLE]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phi1 {
    pub dz: f64,
    pub z0: f64,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
}

/// Everything needed to evaluate `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionData {
    pub domain: ThetaDomain,
    pub q_star: Vec<f64>,
    pub d: Vec<f64>,
    pub b: Vec<f64>,
    pub c_star: f64,
    pub lambda_star: f64,
    pub d_bar: f64,
    pub chi_bar: f64,
    pub omega_bar: f64,
    pub sigma: f64,
    pub z_max: f64,
    /// Solution of `L χ = b` in the gauge `Σ χ Q* = 0`.
    pub chi: Vec<f64>,
    pub chi0: Vec<f64>,
    pub s2_hat: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    /// `hᵢ` of the six terms of `S³`.
    pub s3: Vec<Vec<f64>>,
    pub phi1: Phi1,
    /// Relative weighted mean of the `Ŝ²` right side.
    pub solvability_residual: f64,
    /// `max |φ₁(z)|/z²` over `(0, σ]`.
    pub c_phi: f64,
}

/// Hermite polynomials of `S⁰`: `S⁰⁽ⁿ⁾ = Pₙ(z) e^{−z²/4D̄}`.
fn s0_polys(d_bar: f64, n: usize) -> Vec<Vec<f64>> {
    let mut polys = vec![vec![0.0, 1.0]];
    for k in 0..n {
        let p = &polys[k];
        let mut next = vec![0.0; p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            if i > 0 {
                next[i - 1] += i as f64 * c;
            }
            next[i + 1] -= c / (2.0 * d_bar);
        }
        polys.push(next);
    }
    polys
}

fn horner(p: &[f64], z: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

/// `[S⁰, S⁰', S⁰'', S⁰''']` at `z`.
pub fn s0_derivatives(d_bar: f64, z: f64) -> [f64; 4] {
    let polys = s0_polys(d_bar, 3);
    let e = (-z * z / (4.0 * d_bar)).exp();
    [0, 1, 2, 3].map(|n| horner(&polys[n], z) * e)
}

fn weighted_mean(values: &[f64], q: &[f64]) -> f64 {
    values.iter().zip(q).map(|(v, q)| v * q * q).sum::<f64>() / q.iter().map(|q| q * q).sum::<f64>()
}

fn phi_rhs(d_bar: f64, beta1: f64, beta2: f64, omega_bar: f64, c_star: f64, z: f64) -> f64 {
    let s = s0_derivatives(d_bar, z);
    (3.0 * beta1 - omega_bar * c_star) * s[1] + beta1 * z * s[2] + beta2 * s[3]
}

impl Phi1 {
    fn integrate(d_bar: f64, beta1: f64, beta2: f64, omega_bar: f64, c_star: f64) -> Self {
        let n = (PHI_TABLE / PHI_DZ).round() as usize;
        let f = |z: f64, y: [f64; 2]| -> [f64; 2] {
            let r = phi_rhs(d_bar, beta1, beta2, omega_bar, c_star, z);
            [y[1], -(r + 1.5 * y[0] + 0.5 * z * y[1]) / d_bar]
        };
        let sweep = |h: f64| -> Vec<[f64; 2]> {
            let mut out = vec![[0.0, 0.0]];
            let mut y = [0.0, 0.0];
            for k in 0..n {
                let z = k as f64 * h;
                let k1 = f(z, y);
                let k2 = f(z + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
                let k3 = f(z + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
                let k4 = f(z + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
                for i in 0..2 {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                out.push(y);
            }
            out
        };
        let fwd = sweep(PHI_DZ);
        let bwd = sweep(-PHI_DZ);
        let mut phi = Vec::with_capacity(2 * n + 1);
        let mut dphi = Vec::with_capacity(2 * n + 1);
        for y in bwd.iter().rev().chain(fwd.iter().skip(1)) {
            phi.push(y[0]);
            dphi.push(y[1]);
        }
        Self { dz: PHI_DZ, z0: -(n as f64) * PHI_DZ, phi, dphi }
    }
}

impl ExpansionData {
    /// `[φ₁, φ₁', φ₁'']` at `z` by cubic Hermite interpolation of the table
    /// and the equation itself.
    pub fn phi1_at(&self, z: f64) -> [f64; 3] {
        let t = &self.phi1;
        let n = t.phi.len();
        let second = |z: f64, p: f64, dp: f64| -> f64 {
            let r = phi_rhs(self.d_bar, self.beta1, self.beta2, self.omega_bar, self.c_star, z);
            -(r + 1.5 * p + 0.5 * z * dp) / self.d_bar
        };
        let s = ((z - t.z0) / t.dz).clamp(0.0, (n - 1) as f64);
        let k = (s.floor() as usize).min(n - 2);
        let u = s - k as f64;
        let h = t.dz;
        let (za, zb) = (t.z0 + k as f64 * h, t.z0 + (k + 1) as f64 * h);
        let hermite = |f0: f64, d0: f64, f1: f64, d1: f64| {
            let (u2, u3) = (u * u, u * u * u);
            (2.0 * u3 - 3.0 * u2 + 1.0) * f0 + (u3 - 2.0 * u2 + u) * h * d0 + (-2.0 * u3 + 3.0 * u2) * f1 + (u3 - u2) * h * d1
        };
        let (p0, p1) = (t.phi[k], t.phi[k + 1]);
        let (q0, q1) = (t.dphi[k], t.dphi[k + 1]);
        let phi = hermite(p0, q0, p1, q1);
        let dphi = hermite(q0, second(za, p0, q0), q1, second(zb, p1, q1));
        let zc = z.clamp(t.z0, t.z0 + (n - 1) as f64 * h);
        [phi, dphi, second(zc, phi, dphi)]
    }

    fn operator(&self) -> ThetaOperator {
        ThetaOperator::weighted(&self.domain, &self.q_star)
    }

    pub fn n_theta(&self) -> usize {
        self.q_star.len()
    }

    /// `[S⁰, S¹(θ), S²(θ), S³(θ)]` at `z`, the θ-dependent terms as rows.
    pub fn terms(&self, z: f64) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
        let s = s0_derivatives(self.d_bar, z);
        let [p, dp, ddp] = self.phi1_at(z);
        let nt = self.n_theta();
        let s1 = (0..nt).map(|j| self.chi0[j] * s[1] + p).collect();
        let s2 = (0..nt).map(|j| self.chi0[j] * dp + self.s2_hat[j] * s[2]).collect();
        let f = [s[1], z * s[2], s[3], p, z * dp, ddp];
        let s3 = (0..nt).map(|j| (0..6).map(|i| self.s3[i][j] * f[i]).sum()).collect();
        (s[0], s1, s2, s3)
    }

    /// `S(τ, c*τ + y, ·)` truncated as requested.
    pub fn evaluate(&self, tau: f64, y: f64, truncation: Truncation) -> Vec<f64> {
        let rt = tau.sqrt();
        let z = y / rt;
        let (s0, s1, s2, s3) = self.terms(z);
        let m = truncation.terms();
        let mut out = vec![s0 / tau; self.n_theta()];
        for (k, row) in [s1, s2, s3].iter().enumerate() {
            if k + 1 < m {
                let scale = 1.0 / (tau * rt.powi(k as i32 + 1));
                for (o, v) in out.iter_mut().zip(row) {
                    *o += scale * v;
                }
            }
        }
        out
    }

    /// The full `S` on `n_x` lab nodes `x_offset + i dx`.
    pub fn assemble(&self, tau: f64, n_x: usize, dx: f64, x_offset: f64) -> Field {
        if tau < TAU_MIN_ASSEMBLE {
            warn!("assembling S at tau = {tau} < {TAU_MIN_ASSEMBLE}; the expansion is not ordered there");
        }
        let mut field = Field::zeros(n_x, dx, x_offset, self.domain);
        let nt = self.n_theta();
        for i in 0..n_x {
            let y = field.x(i) - self.c_star * tau;
            let row = self.evaluate(tau, y, Truncation::Full);
            field.values[i * nt..(i + 1) * nt].copy_from_slice(&row);
        }
        field.t = tau;
        field
    }
}

/// Builds the expansion from spectral data. `D̄` is recomputed as
/// `⟨D − bχ₀⟩` with the discrete `χ`, so that the `Ŝ²` problem is solvable
/// to round-off; it must agree with `spectral.d_bar` to [`TOL_DBAR`].
pub fn build_expansion(spectral: &SpectralData, chi_bar: f64, omega_bar: f64, sigma: f64) -> Result<ExpansionData> {
    let op = ThetaOperator::weighted(&spectral.profile.domain, &spectral.q_star);
    let b = centered_drift(spectral, &op);
    let (chi, _) = op.solve_neumann(&b, &spectral.q_star, None)?;
    let g: Vec<f64> = (0..b.len()).map(|j| spectral.profile.d[j] - b[j] * (chi[j] + chi_bar)).collect();
    let d_bar = op.weighted_mean(&g);
    let component = (d_bar - spectral.d_bar).abs() / spectral.d_bar;
    if component > TOL_DBAR {
        return Err(Error::SolvabilityViolation { component, tolerance: TOL_DBAR });
    }
    build_expansion_with_dbar(spectral, d_bar, chi_bar, omega_bar, sigma)
}

/// `b` minus its weighted mean. The mean is `2λ*⟨D⟩ + ⟨A⟩ − c*`, zero up to
/// the accuracy of the eigenvalue solve.
fn centered_drift(spectral: &SpectralData, op: &ThetaOperator) -> Vec<f64> {
    let b = spectral.drift_b();
    let m = op.weighted_mean(&b);
    b.iter().map(|v| v - m).collect()
}

pub fn build_expansion_with_dbar(spectral: &SpectralData, d_bar: f64, chi_bar: f64, omega_bar: f64, sigma: f64) -> Result<ExpansionData> {
    if !(sigma > 0.0 && d_bar > 0.0) {
        return Err(Error::InvalidParameter(format!("need sigma > 0 and D̄ > 0, got {sigma}, {d_bar}")));
    }
    let p = &spectral.profile;
    let q = spectral.q_star.clone();
    let nt = q.len();
    let op = ThetaOperator::weighted(&p.domain, &q);
    let b = centered_drift(spectral, &op);
    let (chi, _) = op.solve_neumann(&b, &q, None)?;
    let chi0: Vec<f64> = chi.iter().map(|c| c + chi_bar).collect();
    let d = p.d.clone();

    let rhs2: Vec<f64> = (0..nt).map(|j| d_bar - d[j] + b[j] * chi0[j]).collect();
    let (s2_hat, mean2) = op.solve_neumann(&rhs2, &op.cell, None)?;
    let solvability_residual = mean2.abs() / d_bar;
    if solvability_residual > TOL_SOLVABILITY {
        return Err(Error::SolvabilityViolation { component: solvability_residual, tolerance: TOL_SOLVABILITY });
    }

    let beta1 = 0.5 * weighted_mean(&chi0, &q);
    let dchi0: Vec<f64> = (0..nt).map(|j| d[j] * chi0[j]).collect();
    let bs2: Vec<f64> = (0..nt).map(|j| b[j] * s2_hat[j]).collect();
    let beta2 = weighted_mean(&dchi0, &q) - weighted_mean(&bs2, &q);
    let c_star = spectral.c_star;
    let phi1 = Phi1::integrate(d_bar, beta1, beta2, omega_bar, c_star);

    let g: [Vec<f64>; 6] = [
        (0..nt).map(|j| -1.5 * chi0[j] + omega_bar * c_star).collect(),
        (0..nt).map(|j| -0.5 * chi0[j]).collect(),
        (0..nt).map(|j| -d[j] * chi0[j] + b[j] * s2_hat[j]).collect(),
        vec![-1.5; nt],
        vec![-0.5; nt],
        (0..nt).map(|j| -d[j] + b[j] * chi0[j]).collect(),
    ];
    let s3 = g
        .iter()
        .map(|gi| op.solve_neumann(gi, &op.cell, None).map(|(h, _)| h))
        .collect::<Result<Vec<_>>>()?;

    let mut exp = ExpansionData {
        domain: p.domain,
        q_star: q,
        d,
        b,
        c_star,
        lambda_star: spectral.lambda_star,
        d_bar,
        chi_bar,
        omega_bar,
        sigma,
        z_max: sigma + 2.0,
        chi,
        chi0,
        s2_hat,
        beta1,
        beta2,
        s3,
        phi1,
        solvability_residual,
        c_phi: 0.0,
    };
    exp.c_phi = (1..=1000)
        .map(|k| {
            let z = sigma * k as f64 / 1000.0;
            exp.phi1_at(z)[0].abs() / (z * z)
        })
        .fold(0.0, f64::max);
    Ok(exp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub truncation: Truncation,
    pub taus: Vec<f64>,
    /// Sup over `z ∈ (0, σ]` and θ of the residual.
    pub sup_residual: Vec<f64>,
    /// `residual(τₖ)/residual(τₖ₊₁)` for consecutive entries.
    pub ratios: Vec<f64>,
    /// Sup of `|S − (y + χ₀)τ^{-3/2}e^{−y²/4D̄τ}| / (τ^{-3/2} z² + τ^{-2})`.
    pub gaussian_constant: Vec<f64>,
}

/// Applies `(1−ω)∂_τ − D∂_yy − L + (b + ωc*)∂_y`, `ω = ω̄/τ`, to the
/// truncated `S` at `y = k dy ∈ (0, σ√τ]`. The `y`-derivatives use the
/// solver's centered stencils, the `τ`-derivative a fourth-order
/// difference, and `L` is the same discrete operator the expansion solved
/// with.
pub fn residual_of_s(exp: &ExpansionData, taus: &[f64], truncation: Truncation, dy: f64) -> Result<ResidualReport> {
    if taus.iter().any(|t| *t < TAU_MIN_ASSEMBLE) || !(dy > 0.0) {
        return Err(Error::InvalidParameter(format!("residual needs tau >= {TAU_MIN_ASSEMBLE} and dy > 0")));
    }
    let op = exp.operator();
    let nt = exp.n_theta();
    let mut sup_residual = Vec::with_capacity(taus.len());
    let mut gaussian_constant = Vec::with_capacity(taus.len());
    for &tau in taus {
        let omega = exp.omega_bar / tau;
        let h = 1e-3 * tau;
        let n = (exp.sigma * tau.sqrt() / dy).floor() as usize;
        let mut worst = 0.0f64;
        let mut gauss = 0.0f64;
        let mut lp = vec![0.0; nt];
        for k in 1..=n {
            let y = k as f64 * dy;
            let s = |t: f64, y: f64| exp.evaluate(t, y, truncation);
            let (sm, s0, sp) = (s(tau, y - dy), s(tau, y), s(tau, y + dy));
            let (t2m, t1m, t1p, t2p) = (s(tau - 2.0 * h, y), s(tau - h, y), s(tau + h, y), s(tau + 2.0 * h, y));
            op.apply_into(&s0, &mut lp);
            for j in 0..nt {
                let st = (t2m[j] - 8.0 * t1m[j] + 8.0 * t1p[j] - t2p[j]) / (12.0 * h);
                let syy = (sp[j] - 2.0 * s0[j] + sm[j]) / (dy * dy);
                let sy = (sp[j] - sm[j]) / (2.0 * dy);
                let r = (1.0 - omega) * st - exp.d[j] * syy - lp[j] + (exp.b[j] + omega * exp.c_star) * sy;
                worst = worst.max(r.abs());
            }
            if truncation == Truncation::Full {
                let z = y / tau.sqrt();
                let e = (-y * y / (4.0 * exp.d_bar * tau)).exp();
                let scale = z * z / tau.powf(1.5) + 1.0 / (tau * tau);
                for j in 0..nt {
                    let g = (y + exp.chi0[j]) / tau.powf(1.5) * e;
                    gauss = gauss.max((s0[j] - g).abs() / scale);
                }
            }
        }
        sup_residual.push(worst);
        gaussian_constant.push(gauss);
    }
    let ratios = sup_residual.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(ResidualReport { truncation, taus: taus.to_vec(), sup_residual, ratios, gaussian_constant })
}

/// Settings of the strip problem compared against `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityConfig {
    /// `ξ = S` at this time.
    pub tau_start: f64,
    pub tau0: f64,
    /// Cells across `z ∈ [0, σ]`.
    pub n_z: usize,
    pub dt: f64,
    /// Reports at `τ₀ 2^{k/per_dyad}`, `k = 0..=2 per_dyad`.
    pub per_dyad: usize,
}

impl Default for ProximityConfig {
    fn default() -> Self {
        Self { tau_start: TAU_MIN_ASSEMBLE, tau0: 100.0, n_z: 300, dt: 0.25, per_dyad: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityTrace {
    pub taus: Vec<f64>,
    /// `sup |ξ − S| τ^{3/2}` over the strip.
    pub weighted_deviation: Vec<f64>,
}

impl ProximityTrace {
    pub fn max_over_min(&self) -> f64 {
        let max = self.weighted_deviation.iter().cloned().fold(0.0, f64::max);
        let min = self.weighted_deviation.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Solves the strip problem `y ∈ [0, σ√τ]` with Dirichlet data from `S`
/// in the coordinate `z = y/√τ`, where it reads
///
/// ```text
/// η_τ = D η_zz / (τ(1−ω)) + (z/(2τ) − (b + ωc*)/(√τ(1−ω))) η_z + L η / (1−ω),
/// ```
///
/// starting from `S(τ_start)`, and reports the weighted deviation from `S`.
pub fn compare_xi_s(exp: &ExpansionData, config: &ProximityConfig) -> Result<ProximityTrace> {
    let ProximityConfig { tau_start, tau0, n_z, dt, per_dyad } = *config;
    if !(tau_start <= tau0 && n_z >= 2 && dt > 0.0 && per_dyad >= 1) {
        return Err(Error::InvalidParameter("bad proximity configuration".into()));
    }
    let sigma = exp.sigma;
    let dz = sigma / n_z as f64;
    let nt = exp.n_theta();
    let (c, ob) = (exp.c_star, exp.omega_bar);
    let schedule = move |tau: f64| {
        let w = ob / tau;
        let s = 1.0 / (1.0 - w);
        let rt = tau.sqrt();
        Scalars { sx: s / tau, stheta: s, sv: s / rt, w: -w * c * s / rt, kappa: 1.0 / (2.0 * tau) }
    };
    let left = {
        let e = exp.clone();
        XBoundary::DirichletData(Arc::new(move |tau| e.evaluate(tau, 0.0, Truncation::Full)))
    };
    let right = {
        let e = exp.clone();
        XBoundary::DirichletData(Arc::new(move |tau| e.evaluate(tau, sigma * tau.sqrt(), Truncation::Full)))
    };
    let op = Operator {
        diffusion: exp.d.clone(),
        drift: exp.b.iter().map(|v| -v).collect(),
        theta: exp.operator(),
        schedule: Schedule::Dynamic(Arc::new(schedule)),
        reaction: Reaction::None,
        left,
        right,
        frame: None,
        density: false,
    };
    let initial = |tau: f64| {
        let mut f = Field::zeros(n_z + 1, dz, 0.0, exp.domain);
        for i in 0..=n_z {
            let row = exp.evaluate(tau, i as f64 * dz * tau.sqrt(), Truncation::Full);
            f.values[i * nt..(i + 1) * nt].copy_from_slice(&row);
        }
        f.t = tau;
        f
    };
    let mut field = initial(tau_start);
    let mut stepper = Stepper::new(op, dt, tau_start, WindowPolicy::Fixed);
    stepper.tag(&mut field);
    let report: Vec<f64> = (0..=2 * per_dyad).map(|k| tau0 * 2f64.powf(k as f64 / per_dyad as f64)).collect();
    let mut trace = ProximityTrace { taus: Vec::new(), weighted_deviation: Vec::new() };
    for &tau in &report {
        let end = ((tau - tau_start) / dt).round() as u64;
        while field.step < end {
            stepper.step(&mut field)?;
        }
        let s = initial(field.t);
        let dev = field.values.iter().zip(&s.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        trace.taus.push(field.t);
        trace.weighted_deviation.push(dev * field.t.powf(1.5));
    }
    Ok(trace)
}

/// Linear interpolation of row values at lab position `x`.
fn sample_at(field: &Field, x: f64) -> Result<Vec<f64>> {
    let s = (x - field.x_offset) / field.dx;
    if s < 0.0 || s > (field.n_x - 1) as f64 {
        return Err(Error::WindowOutsideGrid { lo: x, hi: x });
    }
    let i = (s.floor() as usize).min(field.n_x - 2);
    let u = s - i as f64;
    Ok(field.row(i).iter().zip(field.row(i + 1)).map(|(a, b)| (1.0 - u) * a + u * b).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeTrace {
    pub sigma: f64,
    pub taus: Vec<f64>,
    /// `τ ∫ p(τ, c*τ + σ√τ, θ) dθ`.
    pub values: Vec<f64>,
}

impl AmplitudeTrace {
    /// `max/min` of the values with `τ ∈ [lo, hi]`.
    pub fn band_ratio(&self, lo: f64, hi: f64) -> f64 {
        let v: Vec<f64> = self.taus.iter().zip(&self.values).filter(|(t, _)| **t >= lo && **t <= hi).map(|(_, v)| *v).collect();
        v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Amplitude of a drift-corrected run at `c*τ + σ√τ`.
pub fn front_interior_amplitude<'a>(snapshots: impl IntoIterator<Item = &'a Field>, c_star: f64, sigma: f64) -> Result<AmplitudeTrace> {
    let mut trace = AmplitudeTrace { sigma, taus: Vec::new(), values: Vec::new() };
    for f in snapshots {
        let tau = f.t;
        let row = sample_at(f, c_star * tau + sigma * tau.sqrt())?;
        trace.taus.push(tau);
        trace.values.push(tau * f.domain.integrate(&row));
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayBand {
    pub tau: f64,
    /// Min and max of `τ^{3/2} p / (x − c*τ)` over the band and θ.
    pub lo: f64,
    pub hi: f64,
}

/// Band edges of `τ^{3/2} p/(x − c*τ)` over nodes with
/// `x − c*τ ∈ [y_min, σ√τ]`.
pub fn p_decay_band<'a>(snapshots: impl IntoIterator<Item = &'a Field>, c_star: f64, sigma: f64, y_min: f64) -> Result<Vec<DecayBand>> {
    let mut out = Vec::new();
    for f in snapshots {
        let tau = f.t;
        let (a, b) = (y_min, sigma * tau.sqrt());
        if f.x(0) - c_star * tau > a + 1e-9 || f.x_right() - c_star * tau < b - 1e-9 {
            return Err(Error::WindowOutsideGrid { lo: c_star * tau + a, hi: c_star * tau + b });
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..f.n_x {
            let y = f.x(i) - c_star * tau;
            if y < a - 1e-9 || y > b + 1e-9 {
                continue;
            }
            for &v in f.row(i) {
                let w = tau.powf(1.5) * v / y;
                lo = lo.min(w);
                hi = hi.max(w);
            }
        }
        out.push(DecayBand { tau, lo, hi });
    }
    Ok(out)
}

/// Classification of an amplitude ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Decaying,
    Bounded,
    Growing,
}

impl Verdict {
    /// `< 1/5` decaying, `> 5` growing.
    pub fn classify(ratio: f64) -> Self {
        if ratio < 0.2 {
            Verdict::Decaying
        } else if ratio > 5.0 {
            Verdict::Growing
        } else {
            Verdict::Bounded
        }
    }
}

/// Grid of the moving-boundary runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityConfig {
    pub t_end: f64,
    pub length: f64,
    pub dx: f64,
    pub dt: f64,
    pub sigma: f64,
    /// Initial block `[0, width]` of height one.
    pub init_width: f64,
}

impl Default for CriticalityConfig {
    fn default() -> Self {
        Self { t_end: 400.0, length: 150.0, dx: 0.1, dt: 0.05, sigma: SIGMA_DEFAULT, init_width: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityResult {
    pub r_shift: f64,
    pub t_big: f64,
    pub times: Vec<f64>,
    /// `A(t) = sup z e^{λ*ξ}/ξ` over `ξ = x − X(t) ∈ [1, σ√t]`.
    pub amplitude: Vec<f64>,
    /// `A(t_end)/A(t_end/8)`.
    pub ratio: f64,
    pub verdict: Verdict,
}

/// `A(t)` of one snapshot of the linearized moving-boundary run.
pub fn boundary_amplitude(f: &Field, position: f64, lambda_star: f64, sigma: f64) -> f64 {
    let hi = sigma * f.t.sqrt();
    let mut a = 0.0f64;
    for i in 0..f.n_x {
        let xi = f.x(i) - position;
        if xi < 1.0 - 1e-9 || xi > hi + 1e-9 {
            continue;
        }
        let w = (lambda_star * xi).exp() / xi;
        for &v in f.row(i) {
            a = a.max(v * w);
        }
    }
    a
}

/// Solves `z_t = D z_xx − A z_x + Δ_θ z + z` with `z = 0` at
/// `X(t) = c*t − r log(1 + t/T)` for each shift `r` and classifies the
/// amplitude ratio `A(t_end)/A(t_end/8)`.
pub fn moving_boundary_criticality(
    spectral: &SpectralData,
    r_shifts: &[f64],
    t_big: f64,
    config: &CriticalityConfig,
) -> Result<Vec<CriticalityResult>> {
    use rayon::prelude::*;
    let c = spectral.c_star;
    let l = spectral.lambda_star;
    let cfg = config.clone();
    let times: Vec<f64> = (0..=6).map(|k| cfg.t_end / 2f64.powi(6 - k)).collect();
    r_shifts
        .par_iter()
        .map(|&r| {
            let grid = crate::model::SpaceTimeGrid::new(0.0, cfg.length, cfg.dx, cfg.dt, cfg.t_end, WindowPolicy::Fixed)?;
            let shift = BoundaryShift::Log { r_shift: r, t_big };
            let init = InitSpec::Block { x_left: 0.0, x_right: cfg.init_width, amplitude: 1.0 };
            let kind = ModelKind::LinearizedDirichlet { c_star: c, shift };
            let mut model = ModelSpec::new(kind, spectral.profile.clone(), grid, init);
            model.t0 = 0.0;
            let (snaps, _) = run(&model, &times)?;
            let amplitude: Vec<f64> = snaps.iter().map(|f| boundary_amplitude(f, shift.position(c, f.t), l, cfg.sigma)).collect();
            let at = |t: f64| -> f64 {
                let k = snaps.iter().position(|f| (f.t - t).abs() < 0.5 * cfg.dt).expect("snapshot time present");
                amplitude[k]
            };
            let ratio = at(cfg.t_end) / at(cfg.t_end / 8.0);
            Ok(CriticalityResult {
                r_shift: r,
                t_big,
                times: snaps.iter().map(|f| f.t).collect(),
                amplitude,
                ratio,
                verdict: Verdict::classify(ratio),
            })
        })
        .collect()
}

/// The spectral summary used by drift-corrected runs.
pub fn front_spectrum(spectral: &SpectralData) -> FrontSpectrum {
    FrontSpectrum::from(spectral)
}
