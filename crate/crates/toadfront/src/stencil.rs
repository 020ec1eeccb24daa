//! Discrete trait-direction operators on a cell-centered grid with
//! reflecting (zero-flux) walls.
//!
//! Every operator has the flux form
//!
//! ```text
//! (L f)_j = [w_{j+1/2} (f_{j+1} − f_j) − w_{j−1/2} (f_j − f_{j−1})] / (m_j h²)
//! ```
//!
//! with `w_{−1/2} = w_{n−1/2} = 0`. The plain Laplacian has `w = m = 1`;
//! the operator `Δ + 2 (Q'/Q) ∂` uses `w_{j+1/2} = Q_j Q_{j+1}` and
//! `m_j = Q_j²`, which makes it symmetric in `ℓ²(Q²)`.

use crate::error::{Error, Result};
use crate::model::ThetaDomain;

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaOperator {
    pub h: f64,
    /// Interface weights `w_{j+1/2}`, length `n − 1`.
    pub edge: Vec<f64>,
    /// Cell weights `m_j`, length `n`.
    pub cell: Vec<f64>,
}

impl ThetaOperator {
    pub fn laplacian(domain: &ThetaDomain) -> Self {
        let n = domain.n_theta;
        Self { h: domain.dtheta(), edge: vec![1.0; n - 1], cell: vec![1.0; n] }
    }

    /// `Δ + 2 (Q'/Q) ∂` for a positive profile `q`.
    pub fn weighted(domain: &ThetaDomain, q: &[f64]) -> Self {
        let n = domain.n_theta;
        assert_eq!(q.len(), n);
        Self {
            h: domain.dtheta(),
            edge: (0..n - 1).map(|j| q[j] * q[j + 1]).collect(),
            cell: q.iter().map(|v| v * v).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cell.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell.is_empty()
    }

    /// Sub-, main and super-diagonal of the matrix of `L`.
    pub fn tridiagonal(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.len();
        let h2 = self.h * self.h;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for j in 0..n {
            let s = 1.0 / (self.cell[j] * h2);
            if j > 0 {
                lower[j] = self.edge[j - 1] * s;
                diag[j] -= self.edge[j - 1] * s;
            }
            if j + 1 < n {
                upper[j] = self.edge[j] * s;
                diag[j] -= self.edge[j] * s;
            }
        }
        (lower, diag, upper)
    }

    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        let n = self.len();
        let h2 = self.h * self.h;
        for j in 0..n {
            let mut flux = 0.0;
            if j + 1 < n {
                flux += self.edge[j] * (f[j + 1] - f[j]);
            }
            if j > 0 {
                flux -= self.edge[j - 1] * (f[j] - f[j - 1]);
            }
            out[j] = flux / (self.cell[j] * h2);
        }
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply_into(f, &mut out);
        out
    }

    /// Mean of `g` under the cell weights; `L f = g` is solvable exactly
    /// when this vanishes.
    pub fn weighted_mean(&self, g: &[f64]) -> f64 {
        let num: f64 = g.iter().zip(&self.cell).map(|(a, b)| a * b).sum();
        num / self.cell.iter().sum::<f64>()
    }

    /// Solves `L f = g − ⟨g⟩` with the gauge `Σ gauge_j f_j = 0` and
    /// returns `(f, ⟨g⟩)`. If `tolerance` is given, a mean larger than it
    /// (relative to `scale`) is an error instead of being projected away.
    pub fn solve_neumann(&self, g: &[f64], gauge: &[f64], check: Option<(f64, f64)>) -> Result<(Vec<f64>, f64)> {
        let n = self.len();
        let mean = self.weighted_mean(g);
        if let Some((tolerance, scale)) = check {
            let component = mean.abs() / scale.abs().max(f64::MIN_POSITIVE);
            if component > tolerance {
                return Err(Error::SolvabilityViolation { component, tolerance });
            }
        }
        let h2 = self.h * self.h;
        let mut f = vec![0.0; n];
        let mut flux = 0.0;
        for j in 0..n - 1 {
            flux += self.cell[j] * (g[j] - mean) * h2;
            f[j + 1] = f[j] + flux / self.edge[j];
        }
        let wsum: f64 = gauge.iter().sum();
        let shift = if wsum != 0.0 {
            f.iter().zip(gauge).map(|(a, b)| a * b).sum::<f64>() / wsum
        } else {
            0.0
        };
        f.iter_mut().for_each(|v| *v -= shift);
        Ok((f, mean))
    }
}
