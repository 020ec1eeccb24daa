//! One-dimensional probes of heat-kernel inequalities for the
//! non-divergence operator `a(x) ∂²`: kernels, Varadhan asymptotics,
//! the present-time Harnack inequality, kernel power bounds and a
//! randomized search for the Nash constant on cylinders.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::front::sliding_min;

/// Degree of the Taylor block used for one substep (`hσ ≤ 1`).
const TAYLOR_DEGREE: usize = 20;
/// Kernel mass allowed in the boundary layers before a domain is rejected.
pub const BOUNDARY_MASS_TOL: f64 = 1e-8;
pub const POSITIVITY_FLOOR: f64 = 1e-300;
pub const EPS_FLOOR: f64 = 0.25;
pub const NASH_TRUNCATION_TOL: f64 = 1e-6;

/// Uniform grid `x_i = x_min + i dx` on `[x_min, x_max]` with a sample
/// region (by default the middle half) where sources and test points live.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub sample: (f64, f64),
}

impl KernelGrid {
    pub fn new(x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        let cells = (x_max - x_min) / dx;
        if !(dx > 0.0 && x_max > x_min && (cells - cells.round()).abs() < 1e-6 && cells.round() >= 4.0) {
            return Err(Error::InvalidParameter(format!("bad kernel grid [{x_min}, {x_max}] / {dx}")));
        }
        let q = 0.25 * (x_max - x_min);
        Ok(Self { x_min, x_max, dx, sample: (x_min + q, x_max - q) })
    }

    pub fn with_sample(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi && lo >= self.x_min && hi <= self.x_max) {
            return Err(Error::InvalidParameter(format!("sample region [{lo}, {hi}] outside the grid")));
        }
        self.sample = (lo, hi);
        Ok(self)
    }

    /// Node range covering the sample region.
    pub fn sample_range(&self) -> std::ops::Range<usize> {
        let lo = ((self.sample.0 - self.x_min) / self.dx - 1e-9).ceil() as usize;
        let hi = ((self.sample.1 - self.x_min) / self.dx + 1e-9).floor() as usize;
        lo..hi + 1
    }

    /// Same extent and sample region on a grid with half the spacing.
    pub fn refined(&self) -> Self {
        Self { dx: 0.5 * self.dx, ..*self }
    }

    /// Symmetric grid `[−half_width, half_width]`.
    pub fn symmetric(half_width: f64, dx: f64) -> Result<Self> {
        Self::new(-half_width, half_width, dx)
    }

    pub fn n(&self) -> usize {
        ((self.x_max - self.x_min) / self.dx).round() as usize + 1
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    /// Index of the node nearest to `x`.
    pub fn index(&self, x: f64) -> usize {
        (((x - self.x_min) / self.dx).round().max(0.0) as usize).min(self.n() - 1)
    }

    /// Nodes within a boundary layer of `max(5, n/20)` cells.
    pub fn boundary_layer(&self) -> usize {
        (self.n() / 20).max(5)
    }
}

/// Banded matrix with half-bandwidth `w`, row-major `n × (2w + 1)`.
#[derive(Debug, Clone)]
struct Banded {
    n: usize,
    w: usize,
    data: Vec<f64>,
}

impl Banded {
    fn identity(n: usize, w: usize) -> Self {
        let mut data = vec![0.0; n * (2 * w + 1)];
        for i in 0..n {
            data[i * (2 * w + 1) + w] = 1.0;
        }
        Self { n, w, data }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let off = j as isize - i as isize + self.w as isize;
        if off < 0 || off > 2 * self.w as isize {
            0.0
        } else {
            self.data[i * (2 * self.w + 1) + off as usize]
        }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let w = self.w;
        let width = 2 * w + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(w);
            let hi = (i + w).min(self.n - 1);
            let row = &self.data[i * width..(i + 1) * width];
            let mut s = 0.0;
            for j in lo..=hi {
                s += row[j + w - i] * v[j];
            }
            out[i] = s;
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.w);
            let hi = (i + self.w).min(self.n - 1);
            for j in lo..=hi {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }
}

/// The operator `M = a(x) Δ_h` with reflecting ends, and exact
/// propagators `e^{tM}` built from the entrywise non-negative matrix
/// `B = M + σI` so that no cancellation occurs in far tails.
#[derive(Debug, Clone)]
pub struct KernelEngine {
    pub grid: KernelGrid,
    pub a: Vec<f64>,
    sigma: f64,
}

impl KernelEngine {
    pub fn new(a: impl Fn(f64) -> f64, grid: KernelGrid) -> Result<Self> {
        let a: Vec<f64> = (0..grid.n()).map(|i| a(grid.x(i))).collect();
        if let Some((i, v)) = a.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveDiffusivity { index: i, value: *v });
        }
        let amax = a.iter().cloned().fold(0.0, f64::max);
        Ok(Self { grid, a, sigma: 2.0 * amax / (grid.dx * grid.dx) })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// `(lower, upper)` off-diagonals of `M` (or `Mᵀ`); the diagonal is `−2a/dx²`.
    fn off_diagonals(&self, transpose: bool) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let h2 = self.grid.dx * self.grid.dx;
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            let c = self.a[i] / h2;
            if i == 0 {
                upper[i] = 2.0 * c;
            } else if i == n - 1 {
                lower[i] = 2.0 * c;
            } else {
                lower[i] = c;
                upper[i] = c;
            }
        }
        if transpose {
            let mut lt = vec![0.0; n];
            let mut ut = vec![0.0; n];
            for i in 0..n {
                if i + 1 < n {
                    ut[i] = lower[i + 1];
                }
                if i > 0 {
                    lt[i] = upper[i - 1];
                }
            }
            (lt, ut)
        } else {
            (lower, upper)
        }
    }

    /// Banded Taylor block for `e^{hM}` with `hσ ≤ 1`.
    fn block(&self, h: f64, transpose: bool) -> Banded {
        let n = self.n();
        let k = TAYLOR_DEGREE;
        let (lower, upper) = self.off_diagonals(transpose);
        let h2 = self.grid.dx * self.grid.dx;
        let diag: Vec<f64> = self.a.iter().map(|a| self.sigma - 2.0 * a / h2).collect();
        let width = 2 * k + 1;
        let mut sum = Banded::identity(n, k);
        let mut term = Banded::identity(n, k);
        for m in 1..=k {
            let mut next = Banded { n, w: k, data: vec![0.0; n * width] };
            // next = term · (hB) / m, band grows by one per power
            for i in 0..n {
                let lo = i.saturating_sub(m.min(k));
                let hi = (i + m.min(k)).min(n - 1);
                for j in lo..=hi {
                    let mut s = term.get(i, j) * diag[j];
                    if j > 0 {
                        s += term.get(i, j - 1) * upper[j - 1];
                    }
                    if j + 1 < n {
                        s += term.get(i, j + 1) * lower[j + 1];
                    }
                    next.data[i * width + (j + k - i)] = s * h / m as f64;
                }
            }
            for (a, b) in sum.data.iter_mut().zip(&next.data) {
                *a += b;
            }
            term = next;
        }
        let damp = (-self.sigma * h).exp();
        sum.data.iter_mut().for_each(|v| *v *= damp);
        sum
    }

    /// `e^{tM} u₀` (or `e^{tMᵀ} u₀`).
    pub fn evolve(&self, u0: &[f64], t: f64, transpose: bool) -> Result<Vec<f64>> {
        if t < 0.0 || u0.len() != self.n() {
            return Err(Error::InvalidParameter("evolve needs t ≥ 0 and a full-grid vector".into()));
        }
        let mut u = u0.to_vec();
        if t == 0.0 {
            return Ok(u);
        }
        let m = (t * self.sigma).ceil().max(1.0) as usize;
        let block = self.block(t / m as f64, transpose);
        let mut out = vec![0.0; self.n()];
        for _ in 0..m {
            block.apply(&u, &mut out);
            std::mem::swap(&mut u, &mut out);
        }
        if let Some(v) = u.iter().find(|v| !v.is_finite()) {
            return Err(Error::StabilityBlowup { t, value: *v });
        }
        Ok(u)
    }

    /// Dense `e^{tM}` by squaring a Taylor block.
    pub fn propagator(&self, t: f64) -> Result<DMatrix<f64>> {
        if t <= 0.0 {
            return Err(Error::InvalidParameter("propagator needs t > 0".into()));
        }
        let s = (t * self.sigma).log2().ceil().max(0.0) as u32;
        let mut p = self.block(t / 2f64.powi(s as i32), false).to_dense();
        for _ in 0..s {
            p = &p * &p;
        }
        Ok(p)
    }
}

/// `G[(i, j)] ≈ G(t, x_i, y_j)`: the solution at `x_i` from a unit mass at `y_j`.
#[derive(Debug, Clone)]
pub struct KernelEstimate {
    pub grid: KernelGrid,
    pub a: Vec<f64>,
    pub t: f64,
    pub g: DMatrix<f64>,
}

impl KernelEstimate {
    fn from_propagator(engine: &KernelEngine, t: f64, p: DMatrix<f64>) -> Result<Self> {
        let g = p / engine.grid.dx;
        let est = Self { grid: engine.grid, a: engine.a.clone(), t, g };
        est.check_domain()?;
        Ok(est)
    }

    /// Largest boundary-layer mass among sources in the sample region.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.grid.n();
        let layer = self.grid.boundary_layer();
        let dx = self.grid.dx;
        self.grid
            .sample_range()
            .map(|j| {
                let col = self.g.column(j);
                (0..layer).chain(n - layer..n).map(|i| col[i]).sum::<f64>() * dx
            })
            .fold(0.0, f64::max)
    }

    fn check_domain(&self) -> Result<()> {
        let m = self.boundary_mass();
        if m > BOUNDARY_MASS_TOL {
            return Err(Error::DomainTooSmall(m));
        }
        Ok(())
    }

    /// `Σ_i G(t, x_j, y_i) dx` for every row `j` (equal to 1: constants are preserved).
    pub fn row_masses(&self) -> Vec<f64> {
        self.g.row_iter().map(|r| r.sum() * self.grid.dx).collect()
    }

    /// `Σ_i G(t, x_i, y_j) dx` for every source `j`; exactly 1 only when `a` is constant.
    pub fn column_masses(&self) -> Vec<f64> {
        self.g.column_iter().map(|c| c.sum() * self.grid.dx).collect()
    }
}

pub fn estimate_kernel(a: impl Fn(f64) -> f64, t: f64, grid: KernelGrid) -> Result<KernelEstimate> {
    let engine = KernelEngine::new(a, grid)?;
    KernelEstimate::from_propagator(&engine, t, engine.propagator(t)?)
}

/// Kernels at several times; a time that is a power-of-two multiple of
/// the previous one is obtained by further squaring.
pub fn estimate_kernels(engine: &KernelEngine, times: &[f64]) -> Result<Vec<KernelEstimate>> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&i, &j| times[i].total_cmp(&times[j]));
    let mut out: Vec<Option<KernelEstimate>> = vec![None; times.len()];
    let mut prev: Option<(f64, DMatrix<f64>)> = None;
    for &k in &order {
        let t = times[k];
        let p = match prev.take() {
            Some((tp, p)) => {
                let ratio = (t / tp).log2();
                if (ratio - ratio.round()).abs() < 1e-12 && ratio.round() >= 0.0 {
                    let mut q = p;
                    for _ in 0..ratio.round() as u32 {
                        q = &q * &q;
                    }
                    q
                } else {
                    engine.propagator(t)?
                }
            }
            None => engine.propagator(t)?,
        };
        out[k] = Some(KernelEstimate::from_propagator(engine, t, p.clone())?);
        prev = Some((t, p));
    }
    Ok(out.into_iter().map(|e| e.expect("every time visited")).collect())
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `d_A(x, y) = |∫_x^y a(z)^{−1/2} dz|`.
pub fn riemannian_distance(a: &dyn Fn(f64) -> f64, x: f64, y: f64) -> f64 {
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    let g = |z: f64| 1.0 / a(z).sqrt();
    // split long intervals so the tolerance is met piecewise
    let pieces = ((hi - lo) / 0.5).ceil().max(1.0) as usize;
    let h = (hi - lo) / pieces as f64;
    (0..pieces)
        .map(|k| adaptive_simpson(&g, lo + k as f64 * h, lo + (k + 1) as f64 * h, 1e-13))
        .sum()
}

/// Distances between all grid nodes from the cumulative metric length.
#[derive(Debug, Clone)]
pub struct MetricTable {
    pub x: Vec<f64>,
    cumulative: Vec<f64>,
}

impl MetricTable {
    pub fn new(a: &dyn Fn(f64) -> f64, grid: KernelGrid) -> Self {
        let x: Vec<f64> = (0..grid.n()).map(|i| grid.x(i)).collect();
        let mut cumulative = vec![0.0; x.len()];
        for i in 1..x.len() {
            cumulative[i] = cumulative[i - 1] + riemannian_distance(a, x[i - 1], x[i]);
        }
        Self { x, cumulative }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        (self.cumulative[i] - self.cumulative[j]).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaradhanRow {
    pub t: f64,
    pub error: f64,
    pub witness: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaradhanTable {
    pub rows: Vec<VaradhanRow>,
}

impl VaradhanTable {
    /// Errors strictly decrease as `t` decreases.
    pub fn is_decreasing(&self) -> bool {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| b.t.total_cmp(&a.t));
        rows.windows(2).all(|w| w[1].error < w[0].error)
    }
}

/// Relative Varadhan error `|−4t log G − d_A²| / max(d_A², ε_floor)`,
/// maximized over sources `y` in the sample region and targets `x` off the
/// boundary layers with `pair_range.0 ≤ |x − y| ≤ pair_range.1`.
pub fn varadhan_check(a: &dyn Fn(f64) -> f64, times: &[f64], grid: KernelGrid, pair_range: (f64, f64), eps_floor: f64) -> Result<VaradhanTable> {
    let engine = KernelEngine::new(a, grid)?;
    let metric = MetricTable::new(a, grid);
    let kernels = estimate_kernels(&engine, times)?;
    let n = grid.n();
    let layer = grid.boundary_layer();
    let mut rows = Vec::with_capacity(times.len());
    for est in kernels {
        let t = est.t;
        let mut worst = (0.0f64, (0.0, 0.0));
        for j in grid.sample_range() {
            for i in layer..n - layer {
                let sep = (grid.x(i) - grid.x(j)).abs();
                if sep < pair_range.0 - 1e-9 || sep > pair_range.1 + 1e-9 {
                    continue;
                }
                let g = est.g[(i, j)];
                if g < POSITIVITY_FLOOR {
                    return Err(Error::NonPositive(g));
                }
                let d2 = metric.distance(i, j).powi(2);
                let err = (-4.0 * t * g.ln() - d2).abs() / d2.max(eps_floor);
                if err > worst.0 {
                    worst = (err, (grid.x(i), grid.x(j)));
                }
            }
        }
        rows.push(VaradhanRow { t, error: worst.0, witness: worst.1 });
    }
    Ok(VaradhanTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub p: f64,
    pub radius: f64,
    pub c_emp: f64,
    /// `(t, x, y)` attaining the maximum.
    pub witness: (f64, f64, f64),
    pub per_time: Vec<(f64, f64)>,
}

/// `max u(t,x) / (‖u₀‖∞^{1−1/p} u(t,y)^{1/p})` over `t ∈ times` and node
/// pairs in `window` with `|x − y| ≤ R`; `p = 1` is allowed as a diagnostic.
pub fn harnack_constant(
    u0: &dyn Fn(f64) -> f64,
    a: &dyn Fn(f64) -> f64,
    grid: KernelGrid,
    times: &[f64],
    radius: f64,
    p: f64,
    window: (f64, f64),
) -> Result<HarnackReport> {
    if p < 1.0 || radius <= 0.0 {
        return Err(Error::InvalidParameter("harnack probe needs p ≥ 1 and R > 0".into()));
    }
    let engine = KernelEngine::new(a, grid)?;
    let init: Vec<f64> = (0..grid.n()).map(|i| u0(grid.x(i))).collect();
    if init.iter().any(|v| *v < 0.0) || init.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidParameter("initial data must be non-negative and not zero".into()));
    }
    let sup = init.iter().cloned().fold(0.0, f64::max);
    let (i0, i1) = (grid.index(window.0), grid.index(window.1));
    let w = ((radius + 1e-9) / grid.dx).floor() as usize;
    let mut sorted: Vec<f64> = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut u = init;
    let mut now = 0.0;
    let mut report = HarnackReport { p, radius, c_emp: 0.0, witness: (0.0, 0.0, 0.0), per_time: Vec::new() };
    for &t in &sorted {
        u = engine.evolve(&u, t - now, false)?;
        now = t;
        let part = &u[i0..=i1];
        if let Some(v) = part.iter().find(|v| **v < POSITIVITY_FLOOR) {
            return Err(Error::NonPositive(*v));
        }
        let mins = sliding_min(part, w);
        let mut best = (0.0f64, 0usize);
        for (k, (&ux, &m)) in part.iter().zip(&mins).enumerate() {
            let c = ux / (sup.powf(1.0 - 1.0 / p) * m.powf(1.0 / p));
            if c > best.0 {
                best = (c, k);
            }
        }
        let k = best.1;
        let lo = k.saturating_sub(w);
        let hi = (k + w).min(part.len() - 1);
        let y = (lo..=hi).min_by(|&a, &b| part[a].total_cmp(&part[b])).expect("non-empty window");
        report.per_time.push((t, best.0));
        if best.0 > report.c_emp {
            report.c_emp = best.0;
            report.witness = (t, grid.x(i0 + k), grid.x(i0 + y));
        }
    }
    Ok(report)
}

/// Closed-form Harnack optimum for `a ≡ 1` and `u₀ = e^{−x²/(4s₀)}`:
/// `√(s₀/(s₀+t))^{1−1/p} · exp(R²/(4(s₀+t)(p−1)))`.
pub fn gaussian_harnack_constant(s0: f64, t: f64, radius: f64, p: f64) -> f64 {
    let amp = (s0 / (s0 + t)).sqrt();
    amp.powf(1.0 - 1.0 / p) * (radius * radius / (4.0 * (s0 + t) * (p - 1.0))).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelPowerReport {
    pub s: f64,
    pub p: f64,
    pub c_emp: f64,
    pub witness: (f64, f64),
}

/// `max G(t₀,x,y)^{sp} / G(t₀,0,y)` over nodes `|x| ≤ R` and `y` in the
/// sample region. Rows of the kernel come from the transposed evolution
/// `e^{t Mᵀ} e_i` on the grid and on its refinement; the two log-kernels
/// are Richardson-combined, removing the `O(dx²)` error of the discrete
/// rate function that dominates far from the diagonal.
pub fn kernel_power_bound_check(a: &dyn Fn(f64) -> f64, grid: KernelGrid, t0: f64, radius: f64, s: f64, p: f64) -> Result<KernelPowerReport> {
    if !(s > 0.0 && p >= 1.0 && t0 > 0.0) {
        return Err(Error::InvalidParameter("kernel power bound needs s > 0, p ≥ 1, t0 > 0".into()));
    }
    if grid.x_min > -radius || grid.x_max < radius {
        return Err(Error::DomainTooSmall(radius));
    }
    let zero = grid.index(0.0);
    if grid.x(zero).abs() > 1e-9 {
        return Err(Error::InvalidParameter("x = 0 must be a grid node".into()));
    }
    let coarse = KernelEngine::new(a, grid)?;
    let fine = KernelEngine::new(a, grid.refined())?;
    let ys: Vec<usize> = grid.sample_range().collect();
    // log G(t0, x_i, y) at the coarse sample nodes, extrapolated
    let log_row = |i: usize| -> Result<Vec<f64>> {
        let row = |engine: &KernelEngine, k: usize, stride: usize| -> Result<Vec<f64>> {
            let mut e = vec![0.0; engine.n()];
            e[k] = 1.0;
            let r = engine.evolve(&e, t0, true)?;
            ys.iter()
                .map(|&j| {
                    let g = r[j * stride] / engine.grid.dx;
                    if g < POSITIVITY_FLOOR {
                        Err(Error::NonPositive(g))
                    } else {
                        Ok(g.ln())
                    }
                })
                .collect()
        };
        let lc = row(&coarse, i, 1)?;
        let lf = row(&fine, 2 * i, 2)?;
        Ok(lc.iter().zip(&lf).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
    };
    let base = log_row(zero)?;
    let sp = s * p;
    let xs: Vec<usize> = (0..grid.n()).filter(|&i| grid.x(i).abs() <= radius + 1e-9).collect();
    let rows: Vec<(usize, Vec<f64>)> = xs.par_iter().map(|&i| log_row(i).map(|r| (i, r))).collect::<Result<_>>()?;
    let mut report = KernelPowerReport { s, p, c_emp: 0.0, witness: (0.0, 0.0) };
    for (i, r) in rows {
        for (k, &j) in ys.iter().enumerate() {
            let c = (sp * r[k] - base[k]).exp();
            if c > report.c_emp {
                report.c_emp = c;
                report.witness = (grid.x(i), grid.x(j));
            }
        }
    }
    Ok(report)
}

/// Closed-form kernel power bound for `a ≡ 1`:
/// `(4πt)^{−(sp−1)/2} exp(sp R² / (4t(sp−1)))`.
pub fn gaussian_kernel_power_bound(t: f64, radius: f64, s: f64, p: f64) -> f64 {
    let sp = s * p;
    (4.0 * std::f64::consts::PI * t).powf(-(sp - 1.0) / 2.0) * (sp * radius * radius / (4.0 * t * (sp - 1.0))).exp()
}

/// `‖∇φ‖₂²`, `‖φ‖₂²` and `‖φ‖₁` of a trial function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NashNorms {
    pub grad_sq: f64,
    pub l2_sq: f64,
    pub l1: f64,
}

/// `‖∇φ‖²(1 + ρ^{2d(k+2)/(k(k+d))}) / (‖φ‖₂² ρ^{4/k})` with `ρ = ‖φ‖₂/‖φ‖₁`.
pub fn nash_functional(n: NashNorms, k: usize, d: usize) -> f64 {
    let (k, d) = (k as f64, d as f64);
    let rho = n.l2_sq.sqrt() / n.l1;
    n.grad_sq * (1.0 + rho.powf(2.0 * d * (k + 2.0) / (k * (k + d)))) / (n.l2_sq * rho.powf(4.0 / k))
}

/// A one-dimensional factor of a separable trial function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Factor {
    /// Σ wₖ exp(−(x−cₖ)²/(2sₖ²)).
    Gaussians { terms: Vec<(f64, f64, f64)> },
    /// exp(−1/(1 − ((x−c)/r)²)) on |x − c| < r.
    Bump { center: f64, radius: f64 },
    /// Σ cₙ cos(nπθ) on [0, 1] (Neumann-compatible).
    Cosine { coefficients: Vec<f64> },
}

impl Factor {
    fn value_and_derivative(&self, x: f64) -> (f64, f64) {
        match self {
            Factor::Gaussians { terms } => terms.iter().fold((0.0, 0.0), |(v, d), &(w, c, s)| {
                let z = (x - c) / s;
                let g = w * (-0.5 * z * z).exp();
                (v + g, d - g * z / s)
            }),
            Factor::Bump { center, radius } => {
                let z = (x - center) / radius;
                if z.abs() >= 1.0 {
                    return (0.0, 0.0);
                }
                let q = 1.0 - z * z;
                let v = (-1.0 / q).exp();
                (v, v * (-2.0 * z / (q * q)) / radius)
            }
            Factor::Cosine { coefficients } => coefficients.iter().enumerate().fold((0.0, 0.0), |(v, d), (n, &c)| {
                let w = n as f64 * std::f64::consts::PI;
                (v + c * (w * x).cos(), d - c * w * (w * x).sin())
            }),
        }
    }

    fn support(&self) -> (f64, f64) {
        match self {
            Factor::Gaussians { terms } => terms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, c, s)| {
                (lo.min(c - 12.0 * s), hi.max(c + 12.0 * s))
            }),
            Factor::Bump { center, radius } => (center - radius, center + radius),
            Factor::Cosine { .. } => (0.0, 1.0),
        }
    }

    /// `(∫|f|, ∫f², ∫f'²)` by composite Simpson; unbounded factors are
    /// truncated and rejected when the outer 2% carry too much mass.
    pub fn integrals(&self, nodes: usize) -> Result<(f64, f64, f64)> {
        let (lo, hi) = self.support();
        let n = nodes + nodes % 2;
        let h = (hi - lo) / n as f64;
        let layer = n / 50;
        let mut sums = [0.0f64; 3];
        let mut outer = [0.0f64; 3];
        for k in 0..=n {
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            let (v, d) = self.value_and_derivative(lo + k as f64 * h);
            let vals = [v.abs(), v * v, d * d];
            for q in 0..3 {
                sums[q] += w * vals[q];
                if k < layer || k > n - layer {
                    outer[q] += vals[q];
                }
            }
        }
        let sums = sums.map(|s| s * h / 3.0);
        if let Factor::Gaussians { .. } = self {
            for q in 0..3 {
                let frac = outer[q] * h / sums[q].max(f64::MIN_POSITIVE);
                if frac >= NASH_TRUNCATION_TOL {
                    return Err(Error::TruncationError(frac));
                }
            }
        }
        Ok((sums[0], sums[1], sums[2]))
    }
}

/// Norms of `φ(x, θ) = Π fᵢ(xᵢ) Π gₘ(θₘ)` from the one-dimensional factors.
pub fn separable_norms(factors: &[Factor], nodes: usize) -> Result<NashNorms> {
    let ints: Vec<(f64, f64, f64)> = factors.iter().map(|f| f.integrals(nodes)).collect::<Result<_>>()?;
    let l1 = ints.iter().map(|i| i.0).product();
    let l2_sq: f64 = ints.iter().map(|i| i.1).product();
    let grad_sq = (0..ints.len())
        .map(|m| ints[m].2 * ints.iter().enumerate().filter(|(q, _)| *q != m).map(|(_, i)| i.1).product::<f64>())
        .sum();
    Ok(NashNorms { grad_sq, l2_sq, l1 })
}

fn random_x_factor(rng: &mut ChaCha8Rng) -> Factor {
    match rng.gen_range(0..3) {
        0 => Factor::Gaussians { terms: vec![(1.0, rng.gen_range(-2.0..2.0), rng.gen_range(0.2..4.0))] },
        1 => Factor::Bump { center: rng.gen_range(-2.0..2.0), radius: rng.gen_range(0.3..5.0) },
        _ => {
            let terms = (0..rng.gen_range(2..4))
                .map(|_| (rng.gen_range(0.1..1.0), rng.gen_range(-4.0..4.0), rng.gen_range(0.2..3.0)))
                .collect();
            Factor::Gaussians { terms }
        }
    }
}

fn random_theta_factor(rng: &mut ChaCha8Rng) -> Factor {
    let mut coefficients = vec![1.0];
    if rng.gen_bool(0.7) {
        let amp: f64 = rng.gen_range(0.0..2.0);
        for _ in 1..=4 {
            coefficients.push(amp * rng.gen_range(-1.0..1.0));
        }
    }
    Factor::Cosine { coefficients }
}

/// Trial `index` of the randomized family for `(k, d)`, drawn from its own
/// ChaCha8 stream of `seed`.
pub fn nash_trial(k: usize, d: usize, seed: u64, index: u64) -> Vec<Factor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut f: Vec<Factor> = (0..k).map(|_| random_x_factor(&mut rng)).collect();
    f.extend((0..d).map(|_| random_theta_factor(&mut rng)));
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    pub k: usize,
    pub d: usize,
    pub trials: usize,
    pub seed: u64,
    pub c_emp: f64,
    pub worst_trial: u64,
}

/// Minimum of [`nash_functional`] over `trials` random separable trials.
pub fn nash_check(k: usize, d: usize, trials: usize, seed: u64) -> Result<NashReport> {
    if !(1..=3).contains(&k) || !(1..=2).contains(&d) || trials == 0 {
        return Err(Error::InvalidParameter(format!("nash check needs k ∈ 1..=3, d ∈ 1..=2, trials > 0 (got {k}, {d}, {trials})")));
    }
    let values: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| separable_norms(&nash_trial(k, d, seed, i), 2000).map(|n| nash_functional(n, k, d)))
        .collect::<Result<_>>()?;
    let (worst, c_emp) = values
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    Ok(NashReport { k, d, trials, seed, c_emp, worst_trial: worst as u64 })
}
