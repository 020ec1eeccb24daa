//! Thomas algorithm for tridiagonal systems.
//!
//! Row `k` reads `lower[k] x[k-1] + diag[k] x[k] + upper[k] x[k+1] = rhs[k]`;
//! `lower[0]` and `upper[n-1]` are ignored.

/// A factored tridiagonal matrix, reusable for many right-hand sides.
#[derive(Debug, Clone)]
pub(crate) struct Factored {
    lower: Vec<f64>,
    cprime: Vec<f64>,
    inv: Vec<f64>,
}

impl Factored {
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        let mut cprime = vec![0.0; n];
        let mut inv = vec![0.0; n];
        let mut denom = diag[0];
        inv[0] = 1.0 / denom;
        cprime[0] = if n > 1 { upper[0] * inv[0] } else { 0.0 };
        for k in 1..n {
            denom = diag[k] - lower[k] * cprime[k - 1];
            inv[k] = 1.0 / denom;
            cprime[k] = if k + 1 < n { upper[k] * inv[k] } else { 0.0 };
        }
        Self { lower: lower.to_vec(), cprime, inv }
    }

    pub fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        x[0] *= self.inv[0];
        for k in 1..n {
            x[k] = (x[k] - self.lower[k] * x[k - 1]) * self.inv[k];
        }
        for k in (0..n - 1).rev() {
            x[k] -= self.cprime[k] * x[k + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factored_solve_recovers_solution() {
        let n = 7;
        let lower: Vec<f64> = (0..n).map(|k| -1.0 - 0.1 * k as f64).collect();
        let upper: Vec<f64> = (0..n).map(|k| -0.5 + 0.05 * k as f64).collect();
        let diag: Vec<f64> = (0..n).map(|k| 4.0 + k as f64).collect();
        let x_true: Vec<f64> = (0..n).map(|k| (k as f64).sin() + 2.0).collect();
        let mut rhs = vec![0.0; n];
        for k in 0..n {
            rhs[k] = diag[k] * x_true[k];
            if k > 0 {
                rhs[k] += lower[k] * x_true[k - 1];
            }
            if k + 1 < n {
                rhs[k] += upper[k] * x_true[k + 1];
            }
        }
        let mut b = rhs;
        Factored::new(&lower, &diag, &upper).solve(&mut b);
        for k in 0..n {
            assert!((b[k] - x_true[k]).abs() < 1e-13);
        }
    }
}
