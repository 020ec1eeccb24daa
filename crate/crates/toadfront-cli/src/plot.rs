//! Plot-ready whitespace tables derived from the CSV outputs.

use std::path::PathBuf;

use crate::error::CliError;
use crate::output::{num, Context, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    /// `trace.csv` + `fit.csv` → `delay_plot.dat`.
    Delay,
    /// `dispersion.csv` → `c_lambda.dat`.
    Dispersion,
    /// `residual.csv` → `residual.dat`.
    Residual,
}

impl Recipe {
    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            Recipe::Delay => &["trace.csv", "fit.csv"],
            Recipe::Dispersion => &["dispersion.csv"],
            Recipe::Residual => &["residual.csv"],
        }
    }
}

fn named_value(table: &Table, name: &str) -> Result<f64, CliError> {
    let (q, v) = (table.index("quantity")?, table.index("value")?);
    table
        .rows
        .iter()
        .find(|r| r[q] == name)
        .and_then(|r| r[v].parse().ok())
        .ok_or_else(|| CliError::MissingColumn { file: table.file.clone(), column: name.into() })
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Writes the plot data of `recipe` and returns the written paths.
pub fn emit_plotdata(ctx: &Context, recipe: Recipe) -> Result<Vec<PathBuf>, CliError> {
    match recipe {
        Recipe::Delay => {
            let trace = Table::read(&ctx.path("trace.csv"))?;
            let fit = Table::read(&ctx.path("fit.csv"))?;
            let (t, x) = (trace.column("t")?, trace.column("x_m")?);
            let (c, r, x0) = (named_value(&fit, "c_hat")?, named_value(&fit, "r_hat")?, named_value(&fit, "x_hat")?);
            let rows: Vec<Vec<f64>> = t
                .iter()
                .zip(&x)
                .filter(|(t, _)| **t > 0.0)
                .map(|(t, x)| vec![*t, x - c * t, -r * t.ln() + x0])
                .collect();
            let comments = vec![format!("c_hat: {}", num(c)), format!("r_hat: {}", num(r)), format!("x_hat: {}", num(x0))];
            Ok(vec![ctx.write_dat("delay_plot.dat", &comments, &["t", "x_minus_ct", "model"], &rows)?])
        }
        Recipe::Dispersion => {
            let table = Table::read(&ctx.path("dispersion.csv"))?;
            let (l, c) = (table.column("lambda")?, table.column("c")?);
            let rows: Vec<Vec<f64>> = l.iter().zip(&c).map(|(l, c)| vec![*l, *c]).collect();
            Ok(vec![ctx.write_dat("c_lambda.dat", &[], &["lambda", "c"], &rows)?])
        }
        Recipe::Residual => {
            let table = Table::read(&ctx.path("residual.csv"))?;
            let (k, tau, sup) = (table.index("truncation")?, table.column("tau")?, table.column("sup_residual")?);
            let mut comments = Vec::new();
            let mut rows = Vec::new();
            let mut names: Vec<&str> = table.rows.iter().map(|r| r[k].as_str()).collect();
            names.dedup();
            for (series, name) in names.iter().enumerate() {
                let idx: Vec<usize> = (0..table.rows.len()).filter(|&i| table.rows[i][k] == *name).collect();
                let lx: Vec<f64> = idx.iter().map(|&i| tau[i].ln()).collect();
                let ly: Vec<f64> = idx.iter().map(|&i| sup[i].ln()).collect();
                if lx.len() > 1 {
                    comments.push(format!("ls_slope {name}: {}", num(ls_slope(&lx, &ly))));
                }
                rows.extend(lx.iter().zip(&ly).map(|(x, y)| vec![series as f64, *x, *y]));
            }
            comments.push(format!("series: {}", names.join(" ")));
            Ok(vec![ctx.write_dat("residual.dat", &comments, &["series", "log_tau", "log_residual"], &rows)?])
        }
    }
}
