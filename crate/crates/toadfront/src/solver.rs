//! Time stepping for every evolution equation of the lab.
//!
//! All models reduce to one linear operator family on a window with
//! coordinate `ξ` (the lab coordinate shifted by a frame motion `X(t)`):
//!
//! ```text
//! u_t = s_x D(θ) u_ξξ + (s_v v(θ) + w + κ ξ) u_ξ + s_θ L_θ u + reaction
//! ```
//!
//! where the scalars `s_x, s_v, w, κ, s_θ` may depend on time and `L_θ`
//! is a [`ThetaOperator`]. Diffusion and drift are advanced by
//! Peaceman–Rachford ADI (x-implicit, then θ-implicit), the first few
//! steps by implicit Euler half steps to damp rough data, and the reaction
//! in a Strang splitting around the ADI step.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundaryCondition, Field, Profile, ReactionLaw, SpaceTimeGrid, ThetaDomain, TraitProfile, WindowPolicy};
use crate::stencil::ThetaOperator;
use crate::tridiag::Factored;

pub const BLOWUP_THRESHOLD: f64 = 1e6;
/// Steps taken as two implicit Euler half steps before switching to
/// Peaceman–Rachford.
pub const STARTUP_STEPS: u64 = 2;
/// Level of `max_θ u` tracked by front-following windows.
pub const FOLLOW_LEVEL: f64 = 0.01;
/// Fraction of the total mass that clamping may remove before a run fails.
pub const CLAMP_MASS_LIMIT: f64 = 1e-6;
const NEGATIVE_TOLERANCE: f64 = 1e-12;
/// Magnitudes below this are set to zero after every step, keeping the
/// far tails out of the subnormal range.
pub const FLUSH_LEVEL: f64 = 1e-200;

/// Time-dependent scalar factors of the operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scalars {
    pub sx: f64,
    pub stheta: f64,
    pub sv: f64,
    pub w: f64,
    pub kappa: f64,
}

impl Default for Scalars {
    fn default() -> Self {
        Self { sx: 1.0, stheta: 1.0, sv: 1.0, w: 0.0, kappa: 0.0 }
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> Scalars + Send + Sync>;
pub type BoundaryFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;
pub type FrameFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Schedule {
    Constant(Scalars),
    Dynamic(ScalarFn),
}

impl Schedule {
    pub fn at(&self, t: f64) -> Scalars {
        match self {
            Schedule::Constant(s) => *s,
            Schedule::Dynamic(f) => f(t),
        }
    }
}

#[derive(Clone)]
pub enum XBoundary {
    Neumann,
    Dirichlet(f64),
    /// Per-trait Dirichlet values as a function of time.
    DirichletData(BoundaryFn),
}

impl XBoundary {
    fn values(&self, t: f64, n: usize) -> Option<Vec<f64>> {
        match self {
            XBoundary::Neumann => None,
            XBoundary::Dirichlet(c) => Some(vec![*c; n]),
            XBoundary::DirichletData(f) => Some(f(t)),
        }
    }

    fn condition(&self, moving: bool) -> BoundaryCondition {
        match self {
            XBoundary::Neumann => BoundaryCondition::Neumann,
            XBoundary::Dirichlet(c) if moving && *c == 0.0 => BoundaryCondition::MovingDirichlet,
            XBoundary::Dirichlet(c) => BoundaryCondition::Dirichlet(*c),
            XBoundary::DirichletData(_) => BoundaryCondition::MovingDirichlet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reaction {
    None,
    /// u_t = … + r u.
    Linear(f64),
    Local(ReactionLaw),
    /// u_t = … + r u (1 − ρ), ρ = ∫u dθ.
    Nonlocal { r: f64 },
}

/// A fully specified linear operator plus reaction and boundaries.
#[derive(Clone)]
pub struct Operator {
    pub diffusion: Vec<f64>,
    pub drift: Vec<f64>,
    pub theta: ThetaOperator,
    pub schedule: Schedule,
    pub reaction: Reaction,
    pub left: XBoundary,
    pub right: XBoundary,
    /// Lab position of the window origin, `X(t)`; `None` for a lab frame.
    pub frame: Option<FrameFn>,
    /// Clamp negative values and fail on large undershoots.
    pub density: bool,
}

/// Counters accumulated by a stepper.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub clamped_cells: u64,
    pub clamped_mass: f64,
    pub window_shifts: u64,
}

/// Reusable time stepper for one operator.
pub struct Stepper {
    pub op: Operator,
    pub dt: f64,
    pub t0: f64,
    pub window: WindowPolicy,
    pub stats: StepStats,
    startup: u64,
    rhs: Vec<f64>,
    lane: Vec<f64>,
    xf: XFactor,
}

/// Cached LU factors of `I − α L_x` and the scalars they were built for.
#[derive(Default)]
struct XFactor {
    key: Option<[u64; 11]>,
    lower: Vec<f64>,
    cprime: Vec<f64>,
    inv: Vec<f64>,
}

impl Stepper {
    pub fn new(op: Operator, dt: f64, t0: f64, window: WindowPolicy) -> Self {
        Self {
            op,
            dt,
            t0,
            window,
            stats: StepStats::default(),
            startup: STARTUP_STEPS,
            rhs: Vec::new(),
            lane: Vec::new(),
            xf: XFactor::default(),
        }
    }

    /// Number of leading implicit Euler steps (default [`STARTUP_STEPS`]).
    pub fn with_startup(mut self, steps: u64) -> Self {
        self.startup = steps;
        self
    }

    pub fn time_of(&self, step: u64) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    /// Applies boundary metadata of the operator to a field.
    pub fn tag(&self, field: &mut Field) {
        let moving = self.op.frame.is_some();
        field.bc_left = self.op.left.condition(moving);
        field.bc_right = self.op.right.condition(moving);
    }

    /// Advances `field` by one step of size `dt`.
    pub fn step(&mut self, field: &mut Field) -> Result<()> {
        let nt = field.n_theta();
        let nx = field.n_x;
        if self.op.theta.len() != nt || self.op.diffusion.len() != nt || self.op.drift.len() != nt {
            return Err(Error::InvalidParameter("operator and field disagree on n_theta".into()));
        }
        let t = self.time_of(field.step);
        let t1 = self.time_of(field.step + 1);
        let dt = self.dt;
        self.rhs.resize(nx * nt, 0.0);
        self.lane.resize(nt.max(nx), 0.0);

        react(&self.op.reaction, field, 0.5 * dt);
        if field.step < self.startup {
            self.implicit_euler(field, t1)?;
        } else {
            self.peaceman_rachford(field, t, t1)?;
        }
        react(&self.op.reaction, field, 0.5 * dt);
        impose_dirichlet(field, &self.op.left, &self.op.right, t1);

        let mut max_abs = 0.0f64;
        let mut clamped = 0.0;
        let mut cells = 0u64;
        let mut total = 0.0;
        for v in field.values.iter_mut() {
            if !v.is_finite() {
                return Err(Error::StabilityBlowup { t: t1, value: f64::INFINITY });
            }
            if v.abs() < FLUSH_LEVEL {
                *v = 0.0;
            }
            max_abs = max_abs.max(v.abs());
            if self.op.density && *v < 0.0 {
                if *v < -NEGATIVE_TOLERANCE {
                    cells += 1;
                }
                clamped -= *v;
                *v = 0.0;
            }
            total += v.abs();
        }
        if max_abs > BLOWUP_THRESHOLD {
            return Err(Error::StabilityBlowup { t: t1, value: max_abs });
        }
        if self.op.density {
            let cell = field.dx * field.dtheta();
            self.stats.clamped_cells += cells;
            self.stats.clamped_mass += clamped * cell;
            if clamped > CLAMP_MASS_LIMIT * total && clamped > 0.0 {
                return Err(Error::NegativeDensity {
                    t: t1,
                    clamped_mass: clamped * cell,
                    total_mass: total * cell,
                    clamped_cells: cells as usize,
                });
            }
        }

        if let Some(frame) = &self.op.frame {
            field.x_offset += frame(t1) - frame(t);
        }
        field.step += 1;
        field.t = t1;
        if let WindowPolicy::FollowFront { margin_left, margin_right } = self.window {
            if follow_front(field, margin_left, margin_right, &self.op.right, t1) {
                self.stats.window_shifts += 1;
            }
        }
        Ok(())
    }

    /// Two implicit Euler half steps.
    fn implicit_euler(&mut self, field: &mut Field, t1: f64) -> Result<()> {
        let nt = field.n_theta();
        let h = 0.5 * self.dt;
        for tk in [t1 - h, t1] {
            let s = self.op.schedule.at(tk);
            let gl = self.op.left.values(tk, nt);
            let gr = self.op.right.values(tk, nt);
            self.rhs.copy_from_slice(&field.values);
            self.x_solve(field, &s, h, gl.as_deref(), gr.as_deref());
            self.rhs.copy_from_slice(&field.values);
            self.theta_solve(field, &s, h);
        }
        Ok(())
    }

    fn peaceman_rachford(&mut self, field: &mut Field, t: f64, t1: f64) -> Result<()> {
        let th = 0.5 * (t + t1);
        let s = self.op.schedule.at(th);
        let nt = field.n_theta();
        let nx = field.n_x;
        let alpha = 0.5 * self.dt;

        // rhs = (I + α s_θ L_θ) u
        for i in 0..nx {
            let row = &field.values[i * nt..(i + 1) * nt];
            self.op.theta.apply_into(row, &mut self.lane[..nt]);
            for j in 0..nt {
                self.rhs[i * nt + j] = row[j] + alpha * s.stheta * self.lane[j];
            }
        }
        // Intermediate boundary values consistent with the splitting.
        let sides = [(0usize, &self.op.left), (nx - 1, &self.op.right)];
        let mut star: [Option<Vec<f64>>; 2] = [None, None];
        for (k, (i, side)) in sides.iter().enumerate() {
            if let (Some(g0), Some(g1)) = (side.values(t, nt), side.values(t1, nt)) {
                let l0 = self.op.theta.apply(&g0);
                let l1 = self.op.theta.apply(&g1);
                let v: Vec<f64> = (0..nt)
                    .map(|j| 0.5 * ((g0[j] + alpha * s.stheta * l0[j]) + (g1[j] - alpha * s.stheta * l1[j])))
                    .collect();
                self.rhs[i * nt..(i + 1) * nt].copy_from_slice(&v);
                star[k] = Some(v);
            }
        }
        self.x_solve(field, &s, alpha, star[0].as_deref(), star[1].as_deref());

        // rhs = (I + α L_x) u*
        self.x_apply(field, &s, alpha);
        self.theta_solve(field, &s, alpha);
        Ok(())
    }

    /// Per-lane `(diffusion/dx², advection/(2dx))` without the `κξ` part.
    fn lanes(&self, s: &Scalars, dx: f64) -> (Vec<f64>, Vec<f64>) {
        let diff = self.op.diffusion.iter().map(|d| s.sx * d / (dx * dx)).collect();
        let adv = self.op.drift.iter().map(|v| (s.sv * v + s.w) / (2.0 * dx)).collect();
        (diff, adv)
    }

    /// Factors `I − α L_x` unless the cached factors already match.
    fn factor_x(&mut self, field: &Field, s: &Scalars, alpha: f64, dirichlet: (bool, bool)) {
        let nt = field.n_theta();
        let nx = field.n_x;
        let dx = field.dx;
        let x0 = field.x_offset - self.frame_origin(field);
        let key = [
            s.sx,
            s.sv,
            s.w,
            s.kappa,
            alpha,
            dx,
            if s.kappa != 0.0 { x0 } else { 0.0 },
            nx as f64,
            nt as f64,
            dirichlet.0 as u8 as f64,
            dirichlet.1 as u8 as f64,
        ]
        .map(f64::to_bits);
        if self.xf.key == Some(key) {
            return;
        }
        let (diff, adv) = self.lanes(s, dx);
        let xf = &mut self.xf;
        xf.lower.resize(nx * nt, 0.0);
        xf.cprime.resize(nx * nt, 0.0);
        xf.inv.resize(nx * nt, 0.0);
        for i in 0..nx {
            let kx = s.kappa * (x0 + i as f64 * dx) / (2.0 * dx);
            for j in 0..nt {
                let k = i * nt + j;
                let d = diff[j];
                let a = adv[j] + kx;
                let (lo, di, up) = if i == 0 {
                    if dirichlet.0 {
                        (0.0, 1.0, 0.0)
                    } else {
                        (0.0, 1.0 + 2.0 * alpha * d, -2.0 * alpha * d)
                    }
                } else if i == nx - 1 {
                    if dirichlet.1 {
                        (0.0, 1.0, 0.0)
                    } else {
                        (-2.0 * alpha * d, 1.0 + 2.0 * alpha * d, 0.0)
                    }
                } else {
                    (-alpha * (d - a), 1.0 + 2.0 * alpha * d, -alpha * (d + a))
                };
                let denom = if i == 0 { di } else { di - lo * xf.cprime[k - nt] };
                xf.lower[k] = lo;
                xf.inv[k] = 1.0 / denom;
                xf.cprime[k] = up / denom;
            }
        }
        xf.key = Some(key);
    }

    /// Solves `(I − α L_x) u = rhs` lane-wise; Dirichlet rows take the
    /// supplied values. The result is written to `field.values`.
    fn x_solve(&mut self, field: &mut Field, s: &Scalars, alpha: f64, left: Option<&[f64]>, right: Option<&[f64]>) {
        let nt = field.n_theta();
        let nx = field.n_x;
        self.factor_x(field, s, alpha, (left.is_some(), right.is_some()));
        if let Some(g) = left {
            self.rhs[..nt].copy_from_slice(g);
        }
        if let Some(g) = right {
            self.rhs[(nx - 1) * nt..].copy_from_slice(g);
        }
        let xf = &self.xf;
        let u = &mut field.values;
        for k in 0..nt {
            u[k] = self.rhs[k] * xf.inv[k];
        }
        for k in nt..nx * nt {
            let v = (self.rhs[k] - xf.lower[k] * u[k - nt]) * xf.inv[k];
            u[k] = if v.abs() < FLUSH_LEVEL { 0.0 } else { v };
        }
        for k in (0..(nx - 1) * nt).rev() {
            let v = u[k] - xf.cprime[k] * u[k + nt];
            u[k] = if v.abs() < FLUSH_LEVEL { 0.0 } else { v };
        }
    }

    /// `rhs = (I + α L_x) u` with Neumann ghosts; Dirichlet rows are left
    /// for the θ-sweep to overwrite.
    fn x_apply(&mut self, field: &Field, s: &Scalars, alpha: f64) {
        let nt = field.n_theta();
        let nx = field.n_x;
        let dx = field.dx;
        let x0 = field.x_offset - self.frame_origin(field);
        let (diff, adv) = self.lanes(s, dx);
        let u = &field.values;
        for j in 0..nt {
            self.rhs[j] = u[j] + alpha * 2.0 * diff[j] * (u[j + nt] - u[j]);
            let k = (nx - 1) * nt + j;
            self.rhs[k] = u[k] + alpha * 2.0 * diff[j] * (u[k - nt] - u[k]);
        }
        for i in 1..nx - 1 {
            let kx = s.kappa * (x0 + i as f64 * dx) / (2.0 * dx);
            let base = i * nt;
            for j in 0..nt {
                let k = base + j;
                let (d, a) = (diff[j], adv[j] + kx);
                let lx = d * (u[k + nt] - 2.0 * u[k] + u[k - nt]) + a * (u[k + nt] - u[k - nt]);
                self.rhs[k] = u[k] + alpha * lx;
            }
        }
    }

    /// Solves `(I − α s_θ L_θ) u = rhs` row by row.
    fn theta_solve(&mut self, field: &mut Field, s: &Scalars, alpha: f64) {
        let nt = field.n_theta();
        let (lower, diag, upper) = self.op.theta.tridiagonal();
        let c = alpha * s.stheta;
        let lo: Vec<f64> = lower.iter().map(|v| -c * v).collect();
        let di: Vec<f64> = diag.iter().map(|v| 1.0 - c * v).collect();
        let up: Vec<f64> = upper.iter().map(|v| -c * v).collect();
        let factor = Factored::new(&lo, &di, &up);
        for (row_out, row_in) in field.values.chunks_mut(nt).zip(self.rhs.chunks(nt)) {
            row_out.copy_from_slice(row_in);
            factor.solve(row_out);
        }
    }

    /// Window coordinate of the field's left edge is `x_offset − X(t)`.
    fn frame_origin(&self, field: &Field) -> f64 {
        match &self.op.frame {
            Some(f) => f(field.t),
            None => 0.0,
        }
    }

    /// Window coordinate `ξ` of node `i`.
    pub fn xi(&self, field: &Field, i: usize) -> f64 {
        field.x(i) - self.frame_origin(field)
    }
}

fn impose_dirichlet(field: &mut Field, left: &XBoundary, right: &XBoundary, t: f64) {
    let nt = field.n_theta();
    let nx = field.n_x;
    if let Some(g) = left.values(t, nt) {
        field.values[..nt].copy_from_slice(&g);
    }
    if let Some(g) = right.values(t, nt) {
        field.values[(nx - 1) * nt..].copy_from_slice(&g);
    }
}

/// Advances `u_t = u g(u)` over `h`: exact flows for local laws, an
/// exponential midpoint step for the nonlocal one.
fn react(reaction: &Reaction, field: &mut Field, h: f64) {
    let nt = field.n_theta();
    let dth = field.dtheta();
    match *reaction {
        Reaction::None => {}
        Reaction::Linear(r) => {
            let f = (r * h).exp();
            field.values.iter_mut().for_each(|v| *v *= f);
        }
        Reaction::Local(law) => {
            let flow = crate::model::Flow::new(law, h);
            for v in field.values.iter_mut() {
                *v = flow.apply(*v);
            }
        }
        Reaction::Nonlocal { r } => {
            for row in field.values.chunks_mut(nt) {
                let rho: f64 = row.iter().sum::<f64>() * dth;
                let g = (0.5 * h * r * (1.0 - rho)).exp();
                let rho_half = rho * g;
                let f = (h * r * (1.0 - rho_half)).exp();
                row.iter_mut().for_each(|v| *v *= f);
            }
        }
    }
}

/// Rightmost node where `profile ≥ level`.
fn last_above(profile: &[f64], level: f64) -> Option<usize> {
    profile.iter().rposition(|&v| v >= level)
}

/// Shifts the window right by whole cells when the tracked level gets
/// within `margin_right` of the right edge. Returns whether it moved.
fn follow_front(field: &mut Field, margin_left: f64, margin_right: f64, right: &XBoundary, t: f64) -> bool {
    let profile = field.max_theta();
    let Some(i01) = last_above(&profile, FOLLOW_LEVEL) else {
        return false;
    };
    let dx = field.dx;
    let gap = (field.n_x - 1 - i01) as f64 * dx;
    if gap >= margin_right {
        return false;
    }
    let i05 = last_above(&profile, 0.5).unwrap_or(i01);
    let k_max = ((i05 as f64 * dx - margin_left) / dx).floor();
    if k_max < 1.0 {
        return false;
    }
    let k = k_max as usize;
    let nt = field.n_theta();
    let nx = field.n_x;
    field.values.copy_within(k * nt.., 0);
    let fill = right.values(t, nt).unwrap_or_else(|| vec![0.0; nt]);
    for i in nx - k..nx {
        field.values[i * nt..(i + 1) * nt].copy_from_slice(&fill);
    }
    field.x_offset += k as f64 * dx;
    true
}

/// Moving-boundary shift `X(t) = c* t − r log(1 + t/T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryShift {
    None,
    Log { r_shift: f64, t_big: f64 },
}

impl BoundaryShift {
    pub fn position(&self, c_star: f64, t: f64) -> f64 {
        match *self {
            BoundaryShift::None => c_star * t,
            BoundaryShift::Log { r_shift, t_big } => c_star * t - r_shift * (1.0 + t / t_big).ln(),
        }
    }

    pub fn velocity(&self, c_star: f64, t: f64) -> f64 {
        match *self {
            BoundaryShift::None => c_star,
            BoundaryShift::Log { r_shift, t_big } => c_star - r_shift / (t_big + t),
        }
    }
}

/// The factor ω(τ) of the drift-corrected equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaSpec {
    Zero,
    /// ω = 1 − 1/h′(τ) for the time change `τ = t − (r/c*) log(1 + t/T)`.
    Rational { r_shift: f64, c_star: f64, t_big: f64 },
    /// ω = ω̄/τ.
    Inverse { omega_bar: f64 },
}

impl OmegaSpec {
    pub fn omega(&self, tau: f64) -> f64 {
        match *self {
            OmegaSpec::Zero => 0.0,
            OmegaSpec::Inverse { omega_bar } => omega_bar / tau,
            OmegaSpec::Rational { r_shift, c_star, t_big } => {
                let k = r_shift / c_star;
                // invert τ = t − k log(1 + t/T) by Newton from t = τ
                let mut t = tau.max(0.0);
                for _ in 0..60 {
                    let g = t - k * (1.0 + t / t_big).ln() - tau;
                    let dg = 1.0 - k / (t_big + t);
                    let next = t - g / dg;
                    if (next - t).abs() <= 1e-15 * (1.0 + t.abs()) {
                        t = next;
                        break;
                    }
                    t = next;
                }
                k / (t_big + t)
            }
        }
    }
}

/// Initial data in window coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    Zero,
    Block { x_left: f64, x_right: f64, amplitude: f64 },
    LeftFilled { amplitude: f64, cutoff_x: f64 },
    /// Unit-mass Gaussian in x, constant in θ.
    DeltaApprox { x0: f64, width: f64 },
    Product { theta_profile: Profile, x_profile: Box<InitSpec> },
    Scaled { factor: f64, inner: Box<InitSpec> },
}

impl InitSpec {
    pub fn value(&self, x: f64, theta: f64) -> f64 {
        match self {
            InitSpec::Zero => 0.0,
            InitSpec::Block { x_left, x_right, amplitude } => {
                if x >= *x_left && x <= *x_right {
                    *amplitude
                } else {
                    0.0
                }
            }
            InitSpec::LeftFilled { amplitude, cutoff_x } => {
                if x <= *cutoff_x {
                    *amplitude
                } else {
                    0.0
                }
            }
            InitSpec::DeltaApprox { x0, width } => {
                let s = (x - x0) / width;
                (-0.5 * s * s).exp() / (width * (2.0 * std::f64::consts::PI).sqrt())
            }
            InitSpec::Product { theta_profile, x_profile } => theta_factor(theta_profile, theta) * x_profile.value(x, theta),
            InitSpec::Scaled { factor, inner } => factor * inner.value(x, theta),
        }
    }

    /// Average over the cell `[x − dx/2, x + dx/2]`; jumps are split
    /// between the two cells they fall in, so block moments are exact.
    pub fn cell_value(&self, x: f64, dx: f64, theta: f64) -> f64 {
        let overlap = |lo: f64, hi: f64| (hi.min(x + 0.5 * dx) - lo.max(x - 0.5 * dx)).max(0.0) / dx;
        match self {
            InitSpec::Block { x_left, x_right, amplitude } => amplitude * overlap(*x_left, *x_right),
            InitSpec::LeftFilled { amplitude, cutoff_x } => amplitude * overlap(f64::NEG_INFINITY, *cutoff_x),
            InitSpec::Product { theta_profile, x_profile } => {
                theta_factor(theta_profile, theta) * x_profile.cell_value(x, dx, theta)
            }
            InitSpec::Scaled { factor, inner } => factor * inner.cell_value(x, dx, theta),
            InitSpec::Zero | InitSpec::DeltaApprox { .. } => self.value(x, theta),
        }
    }

    /// Cell averages of the data; table profiles are taken cell by cell.
    pub fn field(&self, n_x: usize, dx: f64, x_offset: f64, domain: ThetaDomain) -> Field {
        let mut f = Field::from_fn(n_x, dx, x_offset, domain, |x, th| self.cell_value(x, dx, th));
        if let InitSpec::Product { theta_profile: Profile::Table(tab), .. } = self {
            let nt = domain.n_theta;
            for i in 0..n_x {
                for j in 0..nt {
                    f.values[i * nt + j] *= tab.get(j).copied().unwrap_or(0.0);
                }
            }
        }
        f
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            InitSpec::Block { x_left, x_right, amplitude } if !(x_left <= x_right && *amplitude >= 0.0) => {
                bad("block init needs x_left <= x_right and amplitude >= 0")
            }
            InitSpec::LeftFilled { amplitude, .. } if *amplitude < 0.0 => bad("negative amplitude"),
            InitSpec::DeltaApprox { width, .. } if *width <= 0.0 => bad("width must be positive"),
            InitSpec::Product { x_profile, .. } => x_profile.validate(),
            InitSpec::Scaled { factor, inner } => {
                if *factor < 0.0 {
                    bad("negative scale")
                } else {
                    inner.validate()
                }
            }
            _ => Ok(()),
        }
    }
}

fn theta_factor(profile: &Profile, theta: f64) -> f64 {
    match profile {
        Profile::Const(c) => *c,
        Profile::Theta => theta,
        Profile::Affine(a, b) => a + b * theta,
        Profile::Table(_) => 1.0,
    }
}

/// Spectral quantities the drift-corrected equation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontSpectrum {
    pub c_star: f64,
    pub lambda_star: f64,
    pub q_star: Vec<f64>,
}

impl From<&crate::dispersion::SpectralData> for FrontSpectrum {
    fn from(s: &crate::dispersion::SpectralData) -> Self {
        Self { c_star: s.c_star, lambda_star: s.lambda_star, q_star: s.q_star.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// n_t = D n_xx − A n_x + n_θθ + r n (1 − ρ).
    NonlocalToads { r_rate: f64 },
    /// u_t = D u_xx + u_θθ + f(u) with the profile's drift required to vanish.
    LocalToads { reaction: ReactionLaw },
    /// u_t = D u_xx − A u_x + u_θθ + f(u).
    LocalGeneral { reaction: ReactionLaw },
    /// z_t = D z_xx − A z_x + z_θθ + z, z = 0 at X(t); window coordinate ξ = x − X(t) ≥ 0.
    LinearizedDirichlet { c_star: f64, shift: BoundaryShift },
    /// (1 − ω) p_τ = D p_xx + L p − (2λ*D + A) p_x with p = 0 at x = c*τ;
    /// window coordinate y = x − c*τ ≥ 0.
    PEquation { omega: OmegaSpec, spectrum: FrontSpectrum },
    /// Relaxation in the frame ξ = x − ct with the saturation pinned on the left.
    WaveRelaxation { c: f64, reaction: ReactionLaw },
}

impl ModelKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelKind::NonlocalToads { .. } => "nonlocal_toads",
            ModelKind::LocalToads { .. } => "local_toads",
            ModelKind::LocalGeneral { .. } => "local_general",
            ModelKind::LinearizedDirichlet { .. } => "linearized_dirichlet",
            ModelKind::PEquation { .. } => "p_equation",
            ModelKind::WaveRelaxation { .. } => "wave_relaxation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub profile: TraitProfile,
    pub grid: SpaceTimeGrid,
    pub init: InitSpec,
    /// Start time (τ₀ for the drift-corrected equation).
    #[serde(default)]
    pub t0: f64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, profile: TraitProfile, grid: SpaceTimeGrid, init: InitSpec) -> Self {
        Self { kind, profile, grid, init, t0: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.init.validate()?;
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be finite")))
            }
        };
        match &self.kind {
            ModelKind::NonlocalToads { r_rate } => finite(*r_rate, "r_rate"),
            ModelKind::LocalToads { reaction } => {
                if self.profile.a.iter().any(|a| *a != 0.0) {
                    return Err(Error::InvalidParameter("local_toads has no drift; use local_general".into()));
                }
                reaction.validate()
            }
            ModelKind::LocalGeneral { reaction } | ModelKind::WaveRelaxation { reaction, .. } => reaction.validate(),
            ModelKind::LinearizedDirichlet { c_star, .. } => finite(*c_star, "c_star"),
            ModelKind::PEquation { spectrum, omega } => {
                if spectrum.q_star.len() != self.profile.n_theta() {
                    return Err(Error::InvalidParameter("q_star length differs from n_theta".into()));
                }
                let tau = self.t0.max(self.grid.dt);
                if omega.omega(tau) >= 1.0 {
                    return Err(Error::InvalidParameter("omega must stay below 1".into()));
                }
                Ok(())
            }
        }
    }

    pub fn operator(&self) -> Result<Operator> {
        self.validate()?;
        let p = &self.profile;
        let nt = p.n_theta();
        let lap = ThetaOperator::laplacian(&p.domain);
        let minus_a: Vec<f64> = p.a.iter().map(|a| -a).collect();
        let base = |reaction, left, right| Operator {
            diffusion: p.d.clone(),
            drift: minus_a.clone(),
            theta: lap.clone(),
            schedule: Schedule::Constant(Scalars::default()),
            reaction,
            left,
            right,
            frame: None,
            density: true,
        };
        let op = match &self.kind {
            ModelKind::NonlocalToads { r_rate } => {
                base(Reaction::Nonlocal { r: *r_rate }, XBoundary::Neumann, XBoundary::Neumann)
            }
            ModelKind::LocalToads { reaction } | ModelKind::LocalGeneral { reaction } => {
                base(Reaction::Local(*reaction), XBoundary::Neumann, XBoundary::Neumann)
            }
            ModelKind::LinearizedDirichlet { c_star, shift } => {
                let (c, s) = (*c_star, *shift);
                let mut op = base(Reaction::Linear(1.0), XBoundary::Dirichlet(0.0), XBoundary::Dirichlet(0.0));
                op.schedule = Schedule::Dynamic(Arc::new(move |t| Scalars { w: s.velocity(c, t), ..Scalars::default() }));
                op.frame = Some(Arc::new(move |t| s.position(c, t)));
                op
            }
            ModelKind::PEquation { omega, spectrum } => {
                let c = spectrum.c_star;
                let l = spectrum.lambda_star;
                let b: Vec<f64> = (0..nt).map(|j| 2.0 * l * p.d[j] + p.a[j] - c).collect();
                let om = *omega;
                let mut op = base(Reaction::None, XBoundary::Dirichlet(0.0), XBoundary::Dirichlet(0.0));
                op.drift = b.iter().map(|v| -v).collect();
                op.theta = ThetaOperator::weighted(&p.domain, &spectrum.q_star);
                op.schedule = Schedule::Dynamic(Arc::new(move |tau| {
                    let w = om.omega(tau);
                    let s = 1.0 / (1.0 - w);
                    Scalars { sx: s, stheta: s, sv: s, w: -w * c * s, kappa: 0.0 }
                }));
                op.frame = Some(Arc::new(move |tau| c * tau));
                op
            }
            ModelKind::WaveRelaxation { c, reaction } => {
                let c = *c;
                let mut op = base(
                    Reaction::Local(*reaction),
                    XBoundary::Dirichlet(reaction.saturation()),
                    XBoundary::Dirichlet(0.0),
                );
                op.schedule = Schedule::Constant(Scalars { w: c, ..Scalars::default() });
                op.frame = Some(Arc::new(move |t| c * t));
                op
            }
        };
        Ok(op)
    }

    pub fn initial_field(&self) -> Result<Field> {
        let op = self.operator()?;
        let x_offset = self.grid.x_min + op.frame.as_ref().map_or(0.0, |f| f(self.t0));
        let mut field = self.init.field(self.grid.n_x(), self.grid.dx, x_offset, self.profile.domain);
        field.x_offset = x_offset;
        // sample in window coordinates
        if op.frame.is_some() {
            let g = self.init.field(self.grid.n_x(), self.grid.dx, self.grid.x_min, self.profile.domain);
            field.values = g.values;
        }
        field.t = self.t0;
        impose_dirichlet(&mut field, &op.left, &op.right, self.t0);
        let stepper = Stepper::new(op, self.grid.dt, self.t0, self.grid.window);
        stepper.tag(&mut field);
        Ok(field)
    }

    /// Step index at which a run from `t0` reaches `grid.t_end`.
    pub fn end_step(&self) -> u64 {
        ((self.grid.t_end - self.t0) / self.grid.dt).round().max(0.0) as u64
    }

    pub fn stepper(&self) -> Result<Stepper> {
        Ok(Stepper::new(self.operator()?, self.grid.dt, self.t0, self.grid.window))
    }
}

/// One step of `model` from `state`.
pub fn step(state: &Field, model: &ModelSpec) -> Result<Field> {
    let mut stepper = model.stepper()?;
    let mut next = state.clone();
    stepper.step(&mut next)?;
    Ok(next)
}

/// Per-snapshot bookkeeping of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    pub step: u64,
    pub mass: f64,
    pub max_value: f64,
    pub x_offset: f64,
    pub clamped_cells: u64,
    pub clamped_mass: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub entries: Vec<LogEntry>,
    /// Running maximum of the field over every step.
    pub running_max: Vec<f64>,
}

fn entry(field: &Field, stats: &StepStats) -> LogEntry {
    LogEntry {
        t: field.t,
        step: field.step,
        mass: field.mass(),
        max_value: field.max_value(),
        x_offset: field.x_offset,
        clamped_cells: stats.clamped_cells,
        clamped_mass: stats.clamped_mass,
    }
}

/// Step indices matching a list of snapshot times.
pub fn snapshot_steps(times: &[f64], t0: f64, dt: f64) -> Vec<u64> {
    let mut steps: Vec<u64> = times
        .iter()
        .filter(|&&t| t >= t0 - 0.5 * dt)
        .map(|&t| ((t - t0) / dt).round().max(0.0) as u64)
        .collect();
    steps.dedup();
    steps
}

/// Evolves `field` to step `end_step`, calling `visit` at each requested
/// step (including the starting one if requested).
pub fn advance(
    stepper: &mut Stepper,
    field: &mut Field,
    end_step: u64,
    snapshot_steps: &[u64],
    mut visit: impl FnMut(&Field, &StepStats) -> Result<()>,
) -> Result<()> {
    let start = field.step;
    let mut next = snapshot_steps.iter().copied().filter(|&s| s >= start).peekable();
    if next.peek() == Some(&field.step) {
        visit(field, &stepper.stats)?;
        next.next();
    }
    while field.step < end_step {
        stepper.step(field)?;
        if next.peek() == Some(&field.step) {
            visit(field, &stepper.stats)?;
            next.next();
        }
    }
    Ok(())
}

/// Runs a model from `t0` to `grid.t_end`, keeping snapshots at the requested times.
pub fn run(model: &ModelSpec, snapshot_times: &[f64]) -> Result<(Vec<Field>, RunLog)> {
    let mut field = model.initial_field()?;
    let mut stepper = model.stepper()?;
    let end = model.end_step();
    let steps = snapshot_steps(snapshot_times, model.t0, model.grid.dt);
    let mut snaps = Vec::new();
    let mut log = RunLog::default();
    let mut running = field.max_value();
    let mut next = steps.iter().copied().peekable();
    while next.peek().is_some_and(|&s| s < field.step) {
        next.next();
    }
    if next.peek() == Some(&field.step) {
        snaps.push(field.clone());
        log.entries.push(entry(&field, &stepper.stats));
        log.running_max.push(running);
        next.next();
    }
    while field.step < end {
        stepper.step(&mut field)?;
        running = running.max(field.max_value());
        if next.peek() == Some(&field.step) {
            snaps.push(field.clone());
            log.entries.push(entry(&field, &stepper.stats));
            log.running_max.push(running);
            next.next();
        }
    }
    Ok((snaps, log))
}

/// A computed travelling wave `Φ(ξ, θ)` and its convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct TravellingWave {
    /// Requested speed.
    pub c: f64,
    /// Speed of the truncated-domain wave (tends to `c` as the window grows).
    pub speed: f64,
    /// Tail rate imposed on the right edge, the smaller root of `c(λ) = c`.
    pub decay_rate: f64,
    pub profile: Field,
    pub newton_iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveOptions {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    /// Sup-norm of the steady residual at which Newton stops.
    pub tol_wave: f64,
    pub max_newton: usize,
}

impl Default for WaveOptions {
    fn default() -> Self {
        Self { x_min: -30.0, x_max: 60.0, dx: 0.05, tol_wave: 1e-9, max_newton: 60 }
    }
}

/// Smaller root of `c(λ) = c`; `λ*` when `c` is the minimal speed.
fn tail_rate(profile: &TraitProfile, c: f64) -> Result<f64> {
    let spec = crate::dispersion::SpectralData::compute(profile)?;
    if c < spec.c_star * (1.0 - 1e-9) {
        return Err(Error::InvalidParameter(format!("wave speed {c} is below c* = {}", spec.c_star)));
    }
    if c <= spec.c_star * (1.0 + 1e-9) {
        return Ok(spec.lambda_star);
    }
    let speed_at = |l: f64| -> Result<f64> {
        let pair = crate::dispersion::principal_eigenpair(l, profile)?;
        Ok(crate::dispersion::speed(l, pair.mu))
    };
    let (mut lo, mut hi) = (spec.lambda_star, spec.lambda_star);
    while speed_at(lo)? < c {
        lo *= 0.5;
        if lo < 1e-12 {
            return Err(Error::NoBracket { lo, hi });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if speed_at(mid)? > c {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Computes a travelling wave of `u_t = D u_xx − A u_x + u_θθ + f(u)`.
///
/// The steady problem in the frame `ξ = x − ct` is solved by Newton's
/// method on `[x_min, x_max]`: the saturation is pinned on the left, the
/// right edge carries the tail condition `Φ_ξ = −λ_c Φ`, the θ-mean of
/// `Φ` equals half the saturation at `ξ = 0`, and the speed is an
/// unknown. The truncated speed is reported in [`TravellingWave::speed`].
pub fn solve_travelling_wave(profile: &TraitProfile, reaction: ReactionLaw, c: f64, opts: WaveOptions) -> Result<TravellingWave> {
    use nalgebra::{DMatrix, DVector};
    reaction.validate()?;
    let grid = SpaceTimeGrid::new(opts.x_min, opts.x_max, opts.dx, 1.0, 1.0, WindowPolicy::Fixed)?;
    if !(opts.x_min < 0.0 && opts.x_max > 0.0) {
        return Err(Error::InvalidParameter("wave window must contain 0".into()));
    }
    let lambda = tail_rate(profile, c)?;
    let sat = reaction.saturation();
    let nt = profile.n_theta();
    let n = grid.n_x();
    let m = n - 1;
    let dx = opts.dx;
    let lap = ThetaOperator::laplacian(&profile.domain);
    let (tl, td, tu) = lap.tridiagonal();
    let d = &profile.d;
    let a = &profile.a;
    let i0 = (-opts.x_min / dx).round() as usize;

    let mut phi = Field::from_fn(n, dx, opts.x_min, profile.domain, |x, _| sat / (1.0 + (lambda * x).exp()));
    let mut speed = c;

    let residual = |phi: &Field, speed: f64| -> (Vec<f64>, f64) {
        let u = &phi.values;
        let mut r = vec![0.0; m * nt];
        let mut lane = vec![0.0; nt];
        for i in 1..n {
            lap.apply_into(&u[i * nt..(i + 1) * nt], &mut lane);
            for j in 0..nt {
                let k = i * nt + j;
                let west = u[k - nt];
                let east = if i + 1 < n { u[k + nt] } else { west - 2.0 * dx * lambda * u[k] };
                r[(i - 1) * nt + j] = d[j] * (east - 2.0 * u[k] + west) / (dx * dx)
                    + (speed - a[j]) * (east - west) / (2.0 * dx)
                    + lane[j]
                    + reaction.f(u[k]);
            }
        }
        let mean: f64 = u[i0 * nt..(i0 + 1) * nt].iter().sum::<f64>() / nt as f64;
        (r, mean - 0.5 * sat)
    };
    let norm = |r: &[f64], p: f64| r.iter().fold(p.abs(), |acc, v| acc.max(v.abs()));

    let (mut r, mut p) = residual(&phi, speed);
    let mut res = norm(&r, p);
    let mut iterations = 0;
    while res > opts.tol_wave {
        if iterations == opts.max_newton {
            return Err(Error::NoConvergence { steps: iterations, change: res });
        }
        iterations += 1;
        let u = &phi.values;
        // block Thomas on [−r | ∂F/∂c]
        let mut cprime: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        let mut dprime: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        for row in 0..m {
            let i = row + 1;
            let mut block = DMatrix::<f64>::zeros(nt, nt);
            let mut rhs = DMatrix::<f64>::zeros(nt, 2);
            let mut lower = vec![0.0; nt];
            let mut upper = vec![0.0; nt];
            for j in 0..nt {
                let k = i * nt + j;
                let diff = d[j] / (dx * dx);
                let adv = (speed - a[j]) / (2.0 * dx);
                block[(j, j)] = td[j] + reaction.derivative(u[k]) - 2.0 * diff;
                if j > 0 {
                    block[(j, j - 1)] = tl[j];
                }
                if j + 1 < nt {
                    block[(j, j + 1)] = tu[j];
                }
                rhs[(j, 0)] = -r[row * nt + j];
                if i + 1 < n {
                    lower[j] = diff - adv;
                    upper[j] = diff + adv;
                    rhs[(j, 1)] = (u[k + nt] - u[k - nt]) / (2.0 * dx);
                } else {
                    lower[j] = 2.0 * diff;
                    block[(j, j)] -= 2.0 * diff * dx * lambda + 2.0 * adv * dx * lambda;
                    rhs[(j, 1)] = -lambda * u[k];
                }
            }
            if row > 0 {
                let cp: &DMatrix<f64> = &cprime[row - 1];
                let dp: &DMatrix<f64> = &dprime[row - 1];
                for j in 0..nt {
                    for q in 0..nt {
                        block[(j, q)] -= lower[j] * cp[(j, q)];
                    }
                    for q in 0..2 {
                        rhs[(j, q)] -= lower[j] * dp[(j, q)];
                    }
                }
            }
            let lu = block.lu();
            let up = DMatrix::from_diagonal(&DVector::from_vec(upper));
            let cp = lu.solve(&up).ok_or(Error::IllConditioned(f64::INFINITY))?;
            let dp = lu.solve(&rhs).ok_or(Error::IllConditioned(f64::INFINITY))?;
            cprime.push(cp);
            dprime.push(dp);
        }
        for row in (0..m - 1).rev() {
            let next = dprime[row + 1].clone();
            dprime[row] -= &cprime[row] * next;
        }
        // phase row: mean over θ at i0 of δΦ equals −p
        let (h1, h2) = (0..nt).fold((0.0, 0.0), |acc, j| {
            (acc.0 + dprime[i0 - 1][(j, 0)] / nt as f64, acc.1 + dprime[i0 - 1][(j, 1)] / nt as f64)
        });
        if h2.abs() < 1e-300 {
            return Err(Error::IllConditioned(f64::INFINITY));
        }
        let dc = (h1 + p) / h2;
        let mut step = 1.0;
        loop {
            let mut trial = phi.clone();
            for row in 0..m {
                for j in 0..nt {
                    let k = (row + 1) * nt + j;
                    trial.values[k] += step * (dprime[row][(j, 0)] - dc * dprime[row][(j, 1)]);
                }
            }
            let trial_speed = speed + step * dc;
            let (tr, tp) = residual(&trial, trial_speed);
            let tres = norm(&tr, tp);
            if tres < res || step < 1e-4 {
                phi = trial;
                speed = trial_speed;
                r = tr;
                p = tp;
                res = tres;
                break;
            }
            step *= 0.5;
        }
    }
    if phi.values.iter().any(|v| *v < -1e-8 * sat) {
        return Err(Error::NegativeDensity {
            t: 0.0,
            clamped_mass: phi.values.iter().filter(|v| **v < 0.0).map(|v| -v).sum::<f64>() * dx * phi.dtheta(),
            total_mass: phi.mass(),
            clamped_cells: phi.values.iter().filter(|v| **v < 0.0).count(),
        });
    }
    phi.bc_left = BoundaryCondition::Dirichlet(sat);
    Ok(TravellingWave { c, speed, decay_rate: lambda, profile: phi, newton_iterations: iterations, residual: res })
}

/// The two local comparison problems bracketing the nonlocal one.
#[derive(Debug, Clone, PartialEq)]
pub struct Sandwich {
    pub lower: ModelSpec,
    pub upper: ModelSpec,
    pub c_lower: f64,
    pub c_upper: f64,
    pub a_lower: f64,
    pub a_upper: f64,
    /// Largest `lower − n` and `n − upper` at t = 1 (non-positive when ordered).
    pub violation_at_t1: (f64, f64),
}

/// Largest positive part of `a − b` (both on the same grid).
pub fn max_excess(a: &Field, b: &Field) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max)
}

/// Builds the lower and upper local problems from a nonlocal run.
///
/// `c_harnack` and `p` are such that `n(x, θ) ≤ C n(x, θ')^{1/p}` on the
/// run, `m_bound` is its uniform bound and `n_at_1` its state at t = 1.
/// The lower problem `u(1 − |Θ| C u^{1/p})` starts from `e^{−M|Θ|} n₀`;
/// the upper one `u(1 − (C|Θ|^{−1/p})^{−p} u^p)` from `ā n₀` with `ā`
/// doubled from `e` until the ordering at t = 1 holds.
pub fn build_sandwich(nonlocal: &ModelSpec, n_at_1: &Field, c_harnack: f64, p: f64, m_bound: f64) -> Result<Sandwich> {
    if !(p > 1.0 && c_harnack > 0.0 && m_bound > 0.0) {
        return Err(Error::InvalidParameter("sandwich needs p > 1, C > 0 and M > 0".into()));
    }
    let width = nonlocal.profile.domain.width();
    let c_lower = width * c_harnack;
    let c_upper = c_harnack * width.powf(-1.0 / p);
    let a_lower = (-m_bound * width).exp();
    let one = (1.0 / nonlocal.grid.dt).round() as u64;
    let local = |law: ReactionLaw, a: f64| {
        let mut m = nonlocal.clone();
        m.kind = ModelKind::LocalGeneral { reaction: law };
        m.init = InitSpec::Scaled { factor: a, inner: Box::new(nonlocal.init.clone()) };
        m
    };
    let run_to_one = |m: &ModelSpec| -> Result<Field> {
        let mut f = m.initial_field()?;
        let mut s = m.stepper()?;
        advance(&mut s, &mut f, one, &[], |_, _| Ok(()))?;
        Ok(f)
    };
    let lower = local(ReactionLaw::LowerSandwich { c: c_lower, p }, a_lower);
    let lower_excess = max_excess(&run_to_one(&lower)?, n_at_1);

    let upper_law = ReactionLaw::UpperSandwich { c: c_upper, p };
    let mut a_upper = std::f64::consts::E;
    let mut upper = local(upper_law, a_upper);
    let mut upper_excess = max_excess(n_at_1, &run_to_one(&upper)?);
    for _ in 0..12 {
        if upper_excess <= 0.0 {
            break;
        }
        a_upper *= 2.0;
        upper = local(upper_law, a_upper);
        upper_excess = max_excess(n_at_1, &run_to_one(&upper)?);
    }
    let worst = lower_excess.max(upper_excess);
    if worst > 0.0 {
        return Err(Error::OrderingViolatedAtT1 { max_violation: worst });
    }
    Ok(Sandwich { lower, upper, c_lower, c_upper, a_lower, a_upper, violation_at_t1: (lower_excess, upper_excess) })
}

/// Largest violations of `lower ≤ mid ≤ upper` over every step in
/// `[t_from, t_to]`, running the three models in lockstep.
pub fn sandwich_ordering(lower: &ModelSpec, mid: &ModelSpec, upper: &ModelSpec, t_from: f64, t_to: f64) -> Result<(f64, f64)> {
    let mut fields = [lower.initial_field()?, mid.initial_field()?, upper.initial_field()?];
    let mut steppers = [lower.stepper()?, mid.stepper()?, upper.stepper()?];
    let dt = mid.grid.dt;
    let from = ((t_from - mid.t0) / dt).round() as u64;
    let to = ((t_to - mid.t0) / dt).round() as u64;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    while fields[1].step < to {
        for k in 0..3 {
            steppers[k].step(&mut fields[k])?;
        }
        if fields[1].step >= from {
            lo = lo.max(max_excess(&fields[0], &fields[1]));
            hi = hi.max(max_excess(&fields[1], &fields[2]));
        }
    }
    Ok((lo, hi))
}
