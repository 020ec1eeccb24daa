//! Grids, coefficient profiles, fields and reaction laws shared by every
//! other module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The trait interval `[theta_min, theta_max]`, discretized by `n_theta`
/// cells with values stored at the cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaDomain {
    pub theta_min: f64,
    pub theta_max: f64,
    pub n_theta: usize,
}

impl ThetaDomain {
    pub fn new(theta_min: f64, theta_max: f64, n_theta: usize) -> Result<Self> {
        if !(theta_min.is_finite() && theta_max.is_finite() && theta_min < theta_max) {
            return Err(Error::InvalidParameter(format!(
                "trait interval [{theta_min}, {theta_max}] is empty"
            )));
        }
        if n_theta < 4 {
            return Err(Error::InvalidParameter(format!(
                "n_theta must be at least 4, got {n_theta}"
            )));
        }
        Ok(Self { theta_min, theta_max, n_theta })
    }

    pub fn width(&self) -> f64 {
        self.theta_max - self.theta_min
    }

    pub fn dtheta(&self) -> f64 {
        self.width() / self.n_theta as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        self.theta_min + (j as f64 + 0.5) * self.dtheta()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_theta).map(|j| self.center(j)).collect()
    }

    /// Midpoint rule on the cell centers.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n_theta);
        values.iter().sum::<f64>() * self.dtheta()
    }

    /// Same domain with a different resolution.
    pub fn with_cells(&self, n_theta: usize) -> Result<Self> {
        Self::new(self.theta_min, self.theta_max, n_theta)
    }
}

/// A coefficient descriptor: `const c`, `theta`, `affine a b` (meaning
/// `a + b*theta`) or `table [v0, v1, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Const(f64),
    Theta,
    Affine(f64, f64),
    Table(Vec<f64>),
}

impl Profile {
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (head, rest) = match spec.find(char::is_whitespace) {
            Some(k) => (&spec[..k], spec[k..].trim()),
            None => (spec, ""),
        };
        let numbers = |s: &str| -> Result<Vec<f64>> {
            s.trim_start_matches('[')
                .trim_end_matches(']')
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::InvalidParameter(format!("bad number `{t}` in `{spec}`")))
                })
                .collect()
        };
        let arity = |v: Vec<f64>, n: usize| -> Result<Vec<f64>> {
            if v.len() == n && v.iter().all(|x| x.is_finite()) {
                Ok(v)
            } else {
                Err(Error::InvalidParameter(format!("`{spec}` expects {n} finite numbers")))
            }
        };
        match head {
            "const" => Ok(Profile::Const(arity(numbers(rest)?, 1)?[0])),
            "theta" if rest.is_empty() => Ok(Profile::Theta),
            "affine" => {
                let v = arity(numbers(rest)?, 2)?;
                Ok(Profile::Affine(v[0], v[1]))
            }
            "table" => {
                let v = numbers(rest)?;
                if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParameter(format!("empty or non-finite table `{spec}`")));
                }
                Ok(Profile::Table(v))
            }
            _ => Err(Error::UnknownBuiltin(spec.to_string())),
        }
    }

    /// Values at the cell centers of `domain`.
    pub fn sample(&self, domain: &ThetaDomain) -> Result<Vec<f64>> {
        let centers = domain.centers();
        match self {
            Profile::Const(c) => Ok(vec![*c; domain.n_theta]),
            Profile::Theta => Ok(centers),
            Profile::Affine(a, b) => Ok(centers.iter().map(|t| a + b * t).collect()),
            Profile::Table(v) if v.len() == domain.n_theta => Ok(v.clone()),
            Profile::Table(v) => Err(Error::InvalidParameter(format!(
                "table has {} entries but the grid has {} cells",
                v.len(),
                domain.n_theta
            ))),
        }
    }
}

/// Subtracts the cell-measure mean from a drift profile. Returns the
/// centered drift and the constant that was removed.
pub fn normalize_drift(a: &[f64]) -> (Vec<f64>, f64) {
    if a.is_empty() {
        return (Vec::new(), 0.0);
    }
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    (a.iter().map(|v| v - mean).collect(), mean)
}

/// Sampled diffusivity `d` and centered drift `a` on a trait grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitProfile {
    pub domain: ThetaDomain,
    pub d: Vec<f64>,
    pub a: Vec<f64>,
    /// Mean drift removed by [`normalize_drift`]; a frame moving at this
    /// speed recovers the original equation.
    pub drift_shift: f64,
}

impl TraitProfile {
    pub fn new(domain: ThetaDomain, d: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if d.len() != domain.n_theta || a.len() != domain.n_theta {
            return Err(Error::InvalidParameter("profile length differs from n_theta".into()));
        }
        if let Some((index, &value)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveDiffusivity { index, value });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("drift must be finite".into()));
        }
        let (a, drift_shift) = normalize_drift(&a);
        Ok(Self { domain, d, a, drift_shift })
    }

    pub fn from_profiles(domain: ThetaDomain, d: &Profile, a: &Profile) -> Result<Self> {
        Self::new(domain, d.sample(&domain)?, a.sample(&domain)?)
    }

    /// Constant diffusivity, no drift.
    pub fn constant(domain: ThetaDomain, d0: f64) -> Result<Self> {
        Self::new(domain, vec![d0; domain.n_theta], vec![0.0; domain.n_theta])
    }

    /// `D(θ) = θ`, no drift.
    pub fn cane_toads(domain: ThetaDomain) -> Result<Self> {
        if domain.theta_min <= 0.0 {
            return Err(Error::InvalidParameter("cane toads need theta_min > 0".into()));
        }
        Self::new(domain, domain.centers(), vec![0.0; domain.n_theta])
    }

    /// Samples `d` and `a` on the same interval with `n_theta` cells.
    pub fn resampled(&self, n_theta: usize, d: impl Fn(f64) -> f64, a: impl Fn(f64) -> f64) -> Result<Self> {
        let dom = self.domain.with_cells(n_theta)?;
        let c = dom.centers();
        Self::new(dom, c.iter().map(|&t| d(t)).collect(), c.iter().map(|&t| a(t)).collect())
    }

    pub fn n_theta(&self) -> usize {
        self.domain.n_theta
    }
}

/// Parses a diffusivity descriptor and samples it with zero drift.
pub fn sample_profile(spec: &str, domain: ThetaDomain) -> Result<TraitProfile> {
    let d = Profile::parse(spec)?.sample(&domain)?;
    TraitProfile::new(domain, d, vec![0.0; domain.n_theta])
}

/// Boundary condition on an x-edge of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    Neumann,
    Dirichlet(f64),
    /// Zero value on a boundary that moves with the frame.
    MovingDirichlet,
}

/// A time-stamped grid `values[i * n_theta + j]` at `x = x_offset + i*dx`
/// and the j-th trait cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub t: f64,
    /// Number of completed time steps; `t` is always `step * dt` plus the
    /// initial time, which keeps resumed runs bit-identical.
    pub step: u64,
    pub x_offset: f64,
    pub dx: f64,
    pub domain: ThetaDomain,
    pub n_x: usize,
    pub values: Vec<f64>,
    pub bc_left: BoundaryCondition,
    pub bc_right: BoundaryCondition,
}

impl Field {
    pub fn zeros(n_x: usize, dx: f64, x_offset: f64, domain: ThetaDomain) -> Self {
        Self {
            t: 0.0,
            step: 0,
            x_offset,
            dx,
            domain,
            n_x,
            values: vec![0.0; n_x * domain.n_theta],
            bc_left: BoundaryCondition::Neumann,
            bc_right: BoundaryCondition::Neumann,
        }
    }

    pub fn from_fn(n_x: usize, dx: f64, x_offset: f64, domain: ThetaDomain, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut field = Self::zeros(n_x, dx, x_offset, domain);
        let thetas = domain.centers();
        for i in 0..n_x {
            let x = x_offset + i as f64 * dx;
            for (j, &th) in thetas.iter().enumerate() {
                field.values[i * domain.n_theta + j] = f(x, th);
            }
        }
        field
    }

    pub fn n_theta(&self) -> usize {
        self.domain.n_theta
    }

    pub fn dtheta(&self) -> f64 {
        self.domain.dtheta()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_offset + i as f64 * self.dx
    }

    pub fn x_right(&self) -> f64 {
        self.x(self.n_x - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_theta() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_theta();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn max_theta(&self) -> Vec<f64> {
        (0..self.n_x)
            .map(|i| self.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// Σ values·dx·dθ.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx * self.dtheta()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// ρ(x) = Σ_j n(x, θ_j)·dθ.
pub fn total_density(field: &Field) -> Vec<f64> {
    (0..field.n_x).map(|i| field.domain.integrate(field.row(i))).collect()
}

/// Fisher-KPP type nonlinearities, written as `f(u) = u·g(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReactionLaw {
    /// f(u) = u(1 − u).
    KppQuadratic,
    /// f(u) = u(1 − C u^{1/p}).
    LowerSandwich { c: f64, p: f64 },
    /// f(u) = u(1 − C^{−p} u^p).
    UpperSandwich { c: f64, p: f64 },
    /// f(u) = u − M u^{1+δ}.
    KppBounded { m_delta: f64, delta: f64 },
    /// f(u) = u(1 − u)(1 − u/m̄).
    WaveModified { m_bar: f64 },
}

impl ReactionLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ReactionLaw::KppQuadratic => true,
            ReactionLaw::LowerSandwich { c, p } | ReactionLaw::UpperSandwich { c, p } => {
                c > 0.0 && p > 0.0 && c.is_finite() && p.is_finite()
            }
            ReactionLaw::KppBounded { m_delta, delta } => m_delta >= 0.0 && delta > 2.0 / 3.0,
            ReactionLaw::WaveModified { m_bar } => m_bar > 0.0 && m_bar <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid reaction law {self:?}")))
        }
    }

    /// Per-capita rate g(u) = f(u)/u.
    pub fn rate(&self, u: f64) -> f64 {
        let u = u.max(0.0);
        match *self {
            ReactionLaw::KppQuadratic => 1.0 - u,
            ReactionLaw::LowerSandwich { c, p } => 1.0 - c * u.powf(1.0 / p),
            ReactionLaw::UpperSandwich { c, p } => 1.0 - (u / c).powf(p),
            ReactionLaw::KppBounded { m_delta, delta } => 1.0 - m_delta * u.powf(delta),
            ReactionLaw::WaveModified { m_bar } => (1.0 - u) * (1.0 - u / m_bar),
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        u * self.rate(u)
    }

    /// `(k, a)` when `f(u) = u(1 − k u^a)`.
    pub fn bernoulli(&self) -> Option<(f64, f64)> {
        match *self {
            ReactionLaw::KppQuadratic => Some((1.0, 1.0)),
            ReactionLaw::LowerSandwich { c, p } => Some((c, 1.0 / p)),
            ReactionLaw::UpperSandwich { c, p } => Some((c.powf(-p), p)),
            ReactionLaw::KppBounded { m_delta, delta } => Some((m_delta, delta)),
            ReactionLaw::WaveModified { .. } => None,
        }
    }

    /// Exact flow of `u' = f(u)` over a time `h ≥ 0` for the Bernoulli laws;
    /// an exponential midpoint step otherwise.
    pub fn flow(&self, u: f64, h: f64) -> f64 {
        Flow::new(*self, h).apply(u)
    }

    /// f′(u).
    pub fn derivative(&self, u: f64) -> f64 {
        let u = u.max(0.0);
        match *self {
            ReactionLaw::KppQuadratic => 1.0 - 2.0 * u,
            ReactionLaw::LowerSandwich { c, p } => 1.0 - c * (1.0 + 1.0 / p) * u.powf(1.0 / p),
            ReactionLaw::UpperSandwich { c, p } => 1.0 - (p + 1.0) * (u / c).powf(p),
            ReactionLaw::KppBounded { m_delta, delta } => 1.0 - m_delta * (1.0 + delta) * u.powf(delta),
            ReactionLaw::WaveModified { m_bar } => {
                (1.0 - u) * (1.0 - u / m_bar) - u * (1.0 - u / m_bar) - u * (1.0 - u) / m_bar
            }
        }
    }

    /// The stable positive zero of f (the invaded state).
    pub fn saturation(&self) -> f64 {
        match *self {
            ReactionLaw::KppQuadratic => 1.0,
            ReactionLaw::LowerSandwich { c, p } => c.powf(-p),
            ReactionLaw::UpperSandwich { c, .. } => c,
            ReactionLaw::KppBounded { m_delta, delta } => m_delta.powf(-1.0 / delta),
            ReactionLaw::WaveModified { m_bar } => m_bar,
        }
    }
}

/// The time-`h` flow map of a reaction law with its constants precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow {
    law: ReactionLaw,
    h: f64,
    k: f64,
    a: f64,
    grow: f64,
    eh: f64,
}

impl Flow {
    pub fn new(law: ReactionLaw, h: f64) -> Self {
        let (k, a) = law.bernoulli().unwrap_or((0.0, 1.0));
        Self { law, h, k, a, grow: (a * h).exp_m1(), eh: h.exp() }
    }

    #[inline]
    pub fn apply(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return u;
        }
        if let ReactionLaw::WaveModified { .. } = self.law {
            let half = u * (0.5 * self.h * self.law.rate(u)).exp();
            return u * (self.h * self.law.rate(half)).exp();
        }
        if self.a == 1.0 {
            u * self.eh / (1.0 + self.k * u * self.grow)
        } else {
            u * self.eh * (1.0 + self.k * u.powf(self.a) * self.grow).powf(-1.0 / self.a)
        }
    }
}

/// How the x-window evolves during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowPolicy {
    Fixed,
    FollowFront { margin_left: f64, margin_right: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
    pub window: WindowPolicy,
}

impl SpaceTimeGrid {
    pub fn new(x_min: f64, x_max: f64, dx: f64, dt: f64, t_end: f64, window: WindowPolicy) -> Result<Self> {
        let grid = Self { x_min, x_max, dx, dt, t_end, window };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dt > 0.0 && self.t_end >= 0.0 && self.x_max > self.x_min) {
            return Err(Error::InvalidParameter(format!("degenerate grid {self:?}")));
        }
        let cells = (self.x_max - self.x_min) / self.dx;
        if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) || cells.round() < 2.0 {
            return Err(Error::InvalidParameter(format!(
                "(x_max - x_min)/dx = {cells} is not a positive integer"
            )));
        }
        Ok(())
    }

    /// Number of grid nodes, both ends included.
    pub fn n_x(&self) -> usize {
        ((self.x_max - self.x_min) / self.dx).round() as usize + 1
    }

    pub fn n_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }
}
