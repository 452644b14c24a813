//! Weighted norms, rate fits and H-scaling exponents.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Entries below this are excluded from rate fits.
pub const ERROR_FLOOR: f64 = 1e-10;

/// Fits with an RMS log-residual above this are flagged as not linear.
pub const LINEAR_GOODNESS_MAX: f64 = 0.5;

/// `(|v|_{H1}^2 + ||v||^2 / (2 H^2))^{1/2}` from precomputed component norms.
pub fn star_from_parts(h1: f64, l2: f64, h_coarse: f64) -> f64 {
    (h1 * h1 + l2 * l2 / (2.0 * h_coarse * h_coarse)).sqrt()
}

/// Star norm of a velocity coefficient vector given the stiffness and mass
/// Gram matrices.
pub fn star_norm(
    k1: &crate::sparse::SparseOperator,
    mv: &crate::sparse::SparseOperator,
    v: &[f64],
    h_coarse: f64,
) -> f64 {
    star_from_parts(k1.quad_form(v).max(0.0).sqrt(), mv.quad_form(v).max(0.0).sqrt(), h_coarse)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    /// First and last iteration index (1-based) used.
    pub window: (usize, usize),
    /// RMS residual of the log-linear fit.
    pub goodness: f64,
    pub points: usize,
}

impl RateFit {
    pub fn is_linear(&self) -> bool {
        self.goodness <= LINEAR_GOODNESS_MAX
    }
}

/// Log-linear least-squares rate for `errors[k-1] = e_k`, `k = 1, 2, ...`.
/// Drops `k = 1` and everything from the first entry below the floor on.
pub fn fit_linear_rate(errors: &[f64]) -> Result<RateFit> {
    let mut pts = Vec::new();
    for (i, &e) in errors.iter().enumerate().skip(1) {
        if !(e >= ERROR_FLOOR) || !e.is_finite() {
            break;
        }
        pts.push(((i + 1) as f64, e.ln()));
    }
    if pts.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "rate fit needs at least 4 points above the floor, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - icept - slope * p.0).powi(2)).sum();
    Ok(RateFit {
        rate: slope.exp(),
        window: (pts[0].0 as usize, pts[pts.len() - 1].0 as usize),
        goodness: (ss / n).sqrt(),
        points: pts.len(),
    })
}

/// `log(rho_H / rho_2H) / log(1/2)` for consecutive pairs. Input is ordered
/// by decreasing `H`, each half the previous.
pub fn h_scaling_exponent(rates: &[(f64, f64)]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rates.len().saturating_sub(1));
    for w in rates.windows(2) {
        let ((h0, r0), (h1, r1)) = (w[0], w[1]);
        if ((h1 / h0) - 0.5).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("H sequence does not halve: {h0} -> {h1}")));
        }
        out.push((r1 / r0).ln() / 0.5f64.ln());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticFit {
    /// Geometric mean of `e_{k+1} / e_k^2`.
    pub constant: f64,
    /// Max over min of the ratios in the window.
    pub spread: f64,
    /// First and last iteration (1-based) in the window.
    pub window: (usize, usize),
    pub points: usize,
}

/// Quadratic-convergence constant over the trailing iterations whose error
/// is above the floor: at least 3 and at most 4 iterations (2 or 3 ratios)
/// inside the contracting tail with `e_k < 1`.
pub fn quadratic_constant(errors: &[f64]) -> Result<QuadraticFit> {
    let mut end = 0;
    while end < errors.len() && errors[end].is_finite() && errors[end] >= ERROR_FLOOR {
        end += 1;
    }
    if end < errors.len() && !errors[end].is_finite() {
        return Err(Error::InvalidArgument("error sequence is not finite".into()));
    }
    let mut start = end.saturating_sub(4);
    if let Some(k) = (start..end.saturating_sub(1)).rev().find(|&k| errors[k + 1] >= errors[k]) {
        start = k + 1;
    }
    while start < end && errors[start] >= 1.0 {
        start += 1;
    }
    if end < start + 3 {
        return Err(Error::InvalidArgument(format!(
            "quadratic fit needs 3 contracting iterations above the floor, got {}",
            end.saturating_sub(start)
        )));
    }
    let ratios: Vec<f64> = (start..end - 1).map(|k| errors[k + 1] / (errors[k] * errors[k])).collect();
    let constant = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    Ok(QuadraticFit {
        constant,
        spread: max / min,
        window: (start + 1, end),
        points: end - start,
    })
}

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub h: f64,
    pub iterations: usize,
    pub rate_star: Option<f64>,
    pub scaling_exponent: Option<f64>,
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.prec$}"))
}

fn h_label(h: f64) -> String {
    let inv = 1.0 / h;
    if (inv - inv.round()).abs() < 1e-9 {
        format!("1/{}", inv.round() as u64)
    } else {
        format!("{h}")
    }
}

pub fn summary_text(rows: &[SummaryRow]) -> String {
    let mut s = format!("{:>6}  {:>10}  {:>9}  {:>16}\n", "H", "iterations", "rate_star", "scaling_exponent");
    for r in rows {
        writeln!(
            s,
            "{:>6}  {:>10}  {:>9}  {:>16}",
            h_label(r.h),
            r.iterations,
            opt(r.rate_star, 4),
            opt(r.scaling_exponent, 4)
        )
        .unwrap();
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("H,iterations,rate_star,scaling_exponent\n");
    for r in rows {
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:e}"));
        writeln!(s, "{:e},{},{},{}", r.h, r.iterations, f(r.rate_star), f(r.scaling_exponent)).unwrap();
    }
    s
}
