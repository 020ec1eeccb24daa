//! Front positions, logarithmic-delay fits, tail rates and empirical
//! Harnack constants of computed solutions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{total_density, Field};

/// Largest admissible condition number of the (column-scaled) normal
/// equations of a delay fit.
pub const MAX_CONDITION: f64 = 1e10;
pub const MIN_FIT_SAMPLES: usize = 20;
/// Offsets of the tail window ahead of the 0.01-level.
pub const TAIL_WINDOW: (f64, f64) = (5.0, 15.0);
pub const TAIL_LEVEL: f64 = 0.01;
/// Level below which points are excluded from Harnack sampling.
pub const HARNACK_FLOOR_LEVEL: f64 = 0.001;

/// Which scalar profile a front is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tracked {
    /// `ρ = ∫ n dθ`.
    Rho,
    MaxTheta,
}

impl Tracked {
    pub fn profile(&self, field: &Field) -> Vec<f64> {
        match self {
            Tracked::Rho => total_density(field),
            Tracked::MaxTheta => field.max_theta(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Tracked::Rho => "rho",
            Tracked::MaxTheta => "max_theta",
        }
    }
}

/// Rightmost crossing of `level` by linear interpolation, in the
/// coordinates `x_0 + i dx`. `None` when the level is never reached or
/// is still exceeded at the right edge.
pub fn level_position(profile: &[f64], x0: f64, dx: f64, level: f64) -> Option<f64> {
    let i = profile.iter().rposition(|&v| v >= level)?;
    if i + 1 == profile.len() {
        return None;
    }
    let (a, b) = (profile[i], profile[i + 1]);
    Some(x0 + dx * (i as f64 + (a - level) / (a - b)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontTrace {
    pub level: f64,
    pub quantity: Tracked,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    /// Snapshot times where the level was not attained inside the window.
    pub skipped: Vec<f64>,
}

impl FrontTrace {
    /// Samples with `t` in `[t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> (Vec<f64>, Vec<f64>) {
        self.times
            .iter()
            .zip(&self.positions)
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .map(|(t, x)| (*t, *x))
            .unzip()
    }

    /// Position at the sample nearest to `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(self.positions[k])
    }
}

/// Positions of the level set `{q = m}` over a sequence of snapshots.
pub fn extract_level_set<'a>(snapshots: impl IntoIterator<Item = &'a Field>, level: f64, quantity: Tracked) -> FrontTrace {
    let mut trace = FrontTrace { level, quantity, times: Vec::new(), positions: Vec::new(), skipped: Vec::new() };
    for f in snapshots {
        let q = quantity.profile(f);
        match level_position(&q, f.x_offset, f.dx, level) {
            Some(x) => {
                trace.times.push(f.t);
                trace.positions.push(x);
            }
            None => {
                log::debug!("{}", Error::LevelNotAttained { t: f.t, level });
                trace.skipped.push(f.t);
            }
        }
    }
    trace
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitMode {
    FreeC,
    FixedC { c_star: f64 },
}

/// Least-squares fit of `X(t) ≈ ĉ t − r̂ log t + x̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayFit {
    pub c_hat: f64,
    pub r_hat: f64,
    pub x_hat: f64,
    pub mode: FitMode,
    pub fit_window: (f64, f64),
    pub samples: usize,
    pub residual_sup: f64,
    /// Condition number of the column-scaled normal equations.
    pub condition: f64,
    /// `‖Aᵀ res‖∞ / (‖A‖ ‖res‖)`, zero for an exact least-squares solution.
    pub orthogonality: f64,
}

impl DelayFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.c_hat * t - self.r_hat * t.ln() + self.x_hat
    }
}

/// Fits the logarithmic delay on the samples of `trace` inside `window`.
pub fn fit_bramson(trace: &FrontTrace, mode: FitMode, window: (f64, f64)) -> Result<DelayFit> {
    let (t, x) = trace.window(window.0, window.1);
    if t.len() < MIN_FIT_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "{} samples in the fit window, need at least {MIN_FIT_SAMPLES}",
            t.len()
        )));
    }
    if t[0] <= 0.0 {
        return Err(Error::InvalidParameter("fit window must start after t = 0".into()));
    }
    let n = t.len();
    let (cols, y): (usize, Vec<f64>) = match mode {
        FitMode::FreeC => (3, x.clone()),
        FitMode::FixedC { c_star } => (2, x.iter().zip(&t).map(|(x, t)| x - c_star * t).collect()),
    };
    let mut a = DMatrix::<f64>::zeros(n, cols);
    for (k, &tk) in t.iter().enumerate() {
        let row: Vec<f64> = match mode {
            FitMode::FreeC => vec![tk, -tk.ln(), 1.0],
            FitMode::FixedC { .. } => vec![-tk.ln(), 1.0],
        };
        for (j, v) in row.into_iter().enumerate() {
            a[(k, j)] = v;
        }
    }
    // column scaling, then conditioning of AᵀA
    let scale: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut scaled = a.clone();
    for j in 0..cols {
        scaled.column_mut(j).scale_mut(1.0 / scale[j]);
    }
    let sv = scaled.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned(condition));
    }
    let yv = DVector::from_vec(y);
    let qr = scaled.clone().qr();
    let qty = qr.q().transpose() * &yv;
    let coef_scaled = qr.r().solve_upper_triangular(&qty).ok_or(Error::IllConditioned(f64::INFINITY))?;
    let coef: Vec<f64> = (0..cols).map(|j| coef_scaled[j] / scale[j]).collect();
    let res = &yv - &a * DVector::from_vec(coef.clone());
    let residual_sup = res.amax();
    let rn = res.norm();
    let orthogonality = if rn > 0.0 { (scaled.transpose() * &res).amax() / rn } else { 0.0 };
    let (c_hat, r_hat, x_hat) = match mode {
        FitMode::FreeC => (coef[0], coef[1], coef[2]),
        FitMode::FixedC { c_star } => (c_star, coef[0], coef[1]),
    };
    Ok(DelayFit {
        c_hat,
        r_hat,
        x_hat,
        mode,
        fit_window: window,
        samples: n,
        residual_sup,
        condition,
        orthogonality,
    })
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Decay rate of `max_θ u` over the nodes in `[lo, hi]` (absolute x).
pub fn tail_decay_rate_in(field: &Field, lo: f64, hi: f64) -> Result<f64> {
    if lo < field.x(0) || hi > field.x_right() || hi <= lo {
        return Err(Error::WindowOutsideGrid { lo, hi });
    }
    let m = field.max_theta();
    let i0 = ((lo - field.x_offset) / field.dx - 1e-9).ceil() as usize;
    let i1 = ((hi - field.x_offset) / field.dx + 1e-9).floor() as usize;
    if i1 < i0 + 1 {
        return Err(Error::WindowOutsideGrid { lo, hi });
    }
    let mut xs = Vec::with_capacity(i1 - i0 + 1);
    let mut ys = Vec::with_capacity(i1 - i0 + 1);
    for i in i0..=i1 {
        if m[i] <= 0.0 {
            return Err(Error::NonPositiveSample { x: field.x(i), value: m[i] });
        }
        xs.push(field.x(i));
        ys.push(m[i].ln());
    }
    Ok(-ls_slope(&xs, &ys))
}

/// Decay rate of `max_θ u` on `[X + 5, X + 15]`, `X` the rightmost
/// position of the 0.01-level of `max_θ u`.
pub fn tail_decay_rate(field: &Field) -> Result<f64> {
    let m = field.max_theta();
    let x = level_position(&m, field.x_offset, field.dx, TAIL_LEVEL)
        .ok_or(Error::LevelNotAttained { t: field.t, level: TAIL_LEVEL })?;
    tail_decay_rate_in(field, x + TAIL_WINDOW.0, x + TAIL_WINDOW.1)
}

/// Sliding minimum of `v` over `[i − w, i + w]` (clipped), by a monotone deque.
pub(crate) fn sliding_min(v: &[f64], w: usize) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    let mut dq: std::collections::VecDeque<usize> = std::collections::VecDeque::with_capacity(2 * w + 2);
    let mut next = 0;
    for i in 0..n {
        let hi = (i + w).min(n - 1);
        while next <= hi {
            while dq.back().is_some_and(|&b| v[b] >= v[next]) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        while dq.front().is_some_and(|&f| f + w < i) {
            dq.pop_front();
        }
        out[i] = v[*dq.front().expect("window is never empty")];
    }
    out
}

/// `max n(x,θ) / n(x',θ')^{1/p}` over pairs with `|x − x'| + |θ − θ'| ≤ R`
/// among the nodes `i < n_rows` of one snapshot.
pub fn harnack_ratio(field: &Field, p: f64, radius: f64, n_rows: usize) -> Result<f64> {
    let nt = field.n_theta();
    let dx = field.dx;
    let dth = field.dtheta();
    let eps = 1e-9 * radius;
    let rows = n_rows.min(field.n_x);
    if rows == 0 {
        return Err(Error::InvalidParameter("no rows to sample".into()));
    }
    let lanes: Vec<Vec<f64>> = (0..nt).map(|j| (0..rows).map(|i| field.get(i, j)).collect()).collect();
    for lane in &lanes {
        if let Some(i) = lane.iter().position(|v| *v <= 0.0) {
            return Err(Error::NonPositiveSample { x: field.x(i), value: lane[i] });
        }
    }
    let max_k = ((radius + eps) / dth).floor() as usize;
    let mut best = 0.0f64;
    // for each θ-offset k the x half-width is ⌊(R − k dθ)/dx⌋ cells
    let mut mins: Vec<Vec<f64>> = vec![vec![f64::INFINITY; rows]; nt];
    for k in 0..=max_k.min(nt - 1) {
        let w = ((radius - k as f64 * dth + eps) / dx).floor() as usize;
        for (jp, lane) in lanes.iter().enumerate() {
            let s = sliding_min(lane, w);
            for j in [jp.checked_sub(k), if k > 0 { Some(jp + k) } else { None }].into_iter().flatten() {
                if j < nt {
                    for (m, v) in mins[j].iter_mut().zip(&s) {
                        *m = m.min(*v);
                    }
                }
            }
        }
    }
    for j in 0..nt {
        for i in 0..rows {
            best = best.max(lanes[j][i] / mins[j][i].powf(1.0 / p));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackEstimate {
    pub p: f64,
    pub radius: f64,
    pub times: Vec<f64>,
    pub per_snapshot: Vec<f64>,
    pub c_emp: f64,
}

impl HarnackEstimate {
    /// Largest per-snapshot constant over `t ∈ [t0, t1]`.
    pub fn max_over(&self, t0: f64, t1: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.per_snapshot)
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .map(|(_, c)| *c)
            .fold(0.0, f64::max)
    }
}

/// Empirical Harnack constant over snapshots at `t ≥ 1`, sampling every
/// pair of grid nodes behind the 0.001-level of `ρ`.
pub fn harnack_ratio_field<'a>(snapshots: impl IntoIterator<Item = &'a Field>, p: f64, radius: f64) -> Result<HarnackEstimate> {
    if !(p > 1.0 && radius > 0.0) {
        return Err(Error::InvalidParameter("harnack sampling needs p > 1 and R > 0".into()));
    }
    let mut est = HarnackEstimate { p, radius, times: Vec::new(), per_snapshot: Vec::new(), c_emp: 0.0 };
    for f in snapshots {
        if f.t < 1.0 {
            continue;
        }
        let rho = total_density(f);
        let rows = match level_position(&rho, f.x_offset, f.dx, HARNACK_FLOOR_LEVEL) {
            Some(x) => ((x - f.x_offset) / f.dx).floor() as usize + 1,
            None => f.n_x,
        };
        let c = harnack_ratio(f, p, radius, rows)?;
        est.times.push(f.t);
        est.per_snapshot.push(c);
        est.c_emp = est.c_emp.max(c);
    }
    Ok(est)
}
