//! Anderson acceleration of a fixed-point map `x -> g(x)`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Columns whose QR diagonal falls below this fraction of the largest are
/// treated as dependent.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InnerProduct {
    Euclidean,
    /// `(a, b) = a^T K1 b`, realised through a factor `W` with `W^T W = K1`.
    H1,
}

impl std::str::FromStr for InnerProduct {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "h1" => Ok(Self::H1),
            _ => Err(Error::Parse(format!("unknown inner product '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AndersonConfig {
    pub depth: usize,
    pub beta: f64,
    pub inner_product: InnerProduct,
}

impl Default for AndersonConfig {
    fn default() -> Self {
        Self {
            depth: 5,
            beta: 1.0,
            inner_product: InnerProduct::H1,
        }
    }
}

impl AndersonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidArgument(format!("relaxation must lie in (0, 1], got {}", self.beta)));
        }
        Ok(())
    }
}

/// Norm used by the least-squares problem. `Weighted(W)` measures `|W v|_2`.
#[derive(Clone, Debug)]
pub enum Metric {
    Euclidean,
    Weighted(SparseOperator),
}

/// Selects the metric; `h1` needs a factor `W` of the stiffness matrix on
/// the iterated unknowns (for instance area-weighted gradient samples).
pub fn choose_inner_product(mode: InnerProduct, h1_factor: Option<SparseOperator>) -> Result<Metric> {
    match mode {
        InnerProduct::Euclidean => Ok(Metric::Euclidean),
        InnerProduct::H1 => h1_factor
            .map(Metric::Weighted)
            .ok_or_else(|| Error::InvalidArgument("h1 inner product needs the stiffness factor".into())),
    }
}

impl Metric {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Metric::Euclidean => v.to_vec(),
            Metric::Weighted(w) => w.mul_vec(v),
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        l2(&self.apply(v))
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Clone, Debug)]
pub struct AaStep {
    pub x_next: Vec<f64>,
    /// Optimization gain; `None` when the residual is exactly zero.
    pub gain: Option<f64>,
    /// Number of history columns used in the least-squares problem.
    pub columns: usize,
    pub gamma: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Previous {
    x: Vec<f64>,
    y: Vec<f64>,
    wy: Vec<f64>,
    g: Vec<f64>,
}

/// Iterates, residuals and their differences for one accelerated solve.
#[derive(Clone, Debug)]
pub struct AndersonHistory {
    depth: usize,
    metric: Metric,
    prev: Option<Previous>,
    /// Oldest column first.
    e: VecDeque<Vec<f64>>,
    f: VecDeque<Vec<f64>>,
    wf: VecDeque<Vec<f64>>,
    gd: VecDeque<Vec<f64>>,
}

impl AndersonHistory {
    pub fn new(depth: usize, metric: Metric) -> Self {
        Self {
            depth,
            metric,
            prev: None,
            e: VecDeque::new(),
            f: VecDeque::new(),
            wf: VecDeque::new(),
            gd: VecDeque::new(),
        }
    }

    pub fn columns(&self) -> usize {
        self.f.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn drop_oldest(&mut self) {
        self.e.pop_front();
        self.f.pop_front();
        self.wf.pop_front();
        self.gd.pop_front();
    }

    /// Least squares `min |WF gamma - Wy|` by Householder QR, discarding the
    /// oldest columns while the triangular factor is numerically singular.
    fn least_squares(&mut self, wy: &[f64]) -> Vec<f64> {
        while !self.wf.is_empty() {
            let (rows, cols) = (wy.len(), self.wf.len());
            if rows < cols {
                self.drop_oldest();
                continue;
            }
            let a = DMatrix::from_fn(rows, cols, |i, j| self.wf[j][i]);
            let qr = a.qr();
            let r = qr.r();
            let diag: Vec<f64> = (0..cols).map(|i| r[(i, i)].abs()).collect();
            let max = diag.iter().cloned().fold(0.0, f64::max);
            if max == 0.0 || diag.iter().any(|&d| d < RANK_TOL * max) {
                self.drop_oldest();
                continue;
            }
            let mut b = DVector::from_column_slice(wy);
            qr.q_tr_mul(&mut b);
            let rhs = b.rows(0, cols).into_owned();
            match r.solve_upper_triangular(&rhs) {
                Some(g) if g.iter().all(|v| v.is_finite()) => return g.as_slice().to_vec(),
                _ => self.drop_oldest(),
            }
        }
        Vec::new()
    }

    /// One accelerated step from `x_k` given `g(x_k)`, with relaxation
    /// `beta`. With `beta == 1` the update is formed from differences of
    /// `g` values, so an empty history returns `g(x_k)` exactly.
    pub fn update(&mut self, x: &[f64], g: &[f64], beta: f64) -> AaStep {
        assert_eq!(x.len(), g.len());
        let y = sub(g, x);
        let wy = self.metric.apply(&y);
        if let Some(p) = self.prev.take() {
            if self.depth > 0 {
                self.e.push_back(sub(x, &p.x));
                self.f.push_back(sub(&y, &p.y));
                self.wf.push_back(sub(&wy, &p.wy));
                self.gd.push_back(sub(g, &p.g));
                while self.f.len() > self.depth {
                    self.drop_oldest();
                }
            }
        }
        let ynorm = l2(&wy);
        self.prev = Some(Previous {
            x: x.to_vec(),
            y: y.clone(),
            wy: wy.clone(),
            g: g.to_vec(),
        });
        if ynorm == 0.0 {
            return AaStep {
                x_next: x.to_vec(),
                gain: None,
                columns: self.f.len(),
                gamma: Vec::new(),
            };
        }

        let mut gamma = self.least_squares(&wy);
        let mut gain = 1.0;
        if !gamma.is_empty() {
            let mut r: Vec<f64> = wy.iter().map(|v| -v).collect();
            for (j, gj) in gamma.iter().enumerate() {
                for (ri, fi) in r.iter_mut().zip(&self.wf[j]) {
                    *ri += gj * fi;
                }
            }
            let theta = l2(&r) / ynorm;
            // gamma = 0 is feasible, so a larger computed residual is
            // rounding; fall back to the plain step.
            if theta.is_finite() && theta <= 1.0 {
                gain = theta;
            } else {
                gamma.iter_mut().for_each(|v| *v = 0.0);
            }
        }

        let mut next = if beta == 1.0 {
            g.to_vec()
        } else {
            x.iter().zip(&y).map(|(xi, yi)| xi + beta * yi).collect()
        };
        for (j, &gj) in gamma.iter().enumerate() {
            if gj == 0.0 {
                continue;
            }
            if beta == 1.0 {
                for (n, d) in next.iter_mut().zip(&self.gd[j]) {
                    *n -= gj * d;
                }
            } else {
                for ((n, e), f) in next.iter_mut().zip(&self.e[j]).zip(&self.f[j]) {
                    *n -= gj * (e + beta * f);
                }
            }
        }
        AaStep {
            x_next: next,
            gain: Some(gain),
            columns: gamma.len(),
            gamma,
        }
    }

    /// Residual-difference columns mapped through the metric, oldest first.
    pub fn weighted_columns(&self) -> Vec<Vec<f64>> {
        self.wf.iter().cloned().collect()
    }
}

/// Convenience wrapper matching the single-step formulation.
pub fn aa_update(history: &mut AndersonHistory, x: &[f64], g: &[f64], beta: f64) -> AaStep {
    history.update(x, g, beta)
}
