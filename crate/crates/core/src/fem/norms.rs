//! Discrete norms, the nonlinear residual and the discrete dual norm.

use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_convection, ConvectionMode, LinearBlocks};
use crate::fem::element::{degree5_rule, p2_gradients};
use crate::fem::space::{MixedSpace, State};
use crate::linsolve::SpdFactor;
use crate::sparse::SparseOperator;

/// `|v|_{H1}` from the stiffness Gram matrix.
pub fn h1_seminorm(blocks: &LinearBlocks, v: &[f64]) -> f64 {
    blocks.k1.quad_form(v).max(0.0).sqrt()
}

pub fn l2_norm(blocks: &LinearBlocks, v: &[f64]) -> f64 {
    blocks.mv.quad_form(v).max(0.0).sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn h1_distance(blocks: &LinearBlocks, a: &[f64], b: &[f64]) -> f64 {
    h1_seminorm(blocks, &diff(a, b))
}

pub fn l2_distance(blocks: &LinearBlocks, a: &[f64], b: &[f64]) -> f64 {
    l2_norm(blocks, &diff(a, b))
}

/// Euclidean norm of the algebraic residual of the discrete Navier-Stokes
/// equations at `s`: momentum rows at free velocity dofs, all continuity
/// rows, and the violation of the Dirichlet data at constrained dofs.
pub fn nonlinear_residual(
    space: &MixedSpace,
    blocks: &LinearBlocks,
    s: &State,
    lid_speed: f64,
    forcing: Option<&[f64]>,
) -> Result<f64> {
    space.check_velocity(&s.velocity)?;
    let n = assemble_convection(space, s, ConvectionMode::Picard)?;
    let mut r = blocks.a.mul_vec(&s.velocity);
    let nu = n.mul_vec(&s.velocity);
    let btp = blocks.b.mul_transpose_vec(&s.pressure);
    for i in 0..r.len() {
        r[i] += nu[i] + btp[i] - forcing.map_or(0.0, |f| f[i]);
    }
    let mask = space.dirichlet_mask();
    let mut sum = 0.0;
    for (i, ri) in r.iter().enumerate() {
        if !mask[i] {
            sum += ri * ri;
        }
    }
    for (dof, g) in space.dirichlet_values(lid_speed) {
        let d = s.velocity[dof] - g;
        sum += d * d;
    }
    sum += blocks.b.mul_vec(&s.velocity).iter().map(|v| v * v).sum::<f64>();
    Ok(sum.sqrt())
}

/// `sqrt(f^T K^{-1} f)` for a symmetric positive definite `K` (the stiffness
/// restricted to free velocity dofs), via one Cholesky solve.
pub fn discrete_dual_norm(f: &[f64], k1_free: &SparseOperator) -> Result<f64> {
    DualNorm::from_matrix(k1_free)?.norm(f)
}

/// Reusable factorization for discrete `H^{-1}` norms over the free velocity
/// dofs of a space.
pub struct DualNorm {
    free: Vec<usize>,
    factor: SpdFactor,
}

impl DualNorm {
    pub fn new(space: &MixedSpace, blocks: &LinearBlocks) -> Result<Self> {
        let free = space.free_velocity_dofs();
        let k = blocks.k1.restrict(&free, &free);
        Ok(Self {
            factor: SpdFactor::new(&k)?,
            free,
        })
    }

    fn from_matrix(k: &SparseOperator) -> Result<Self> {
        Ok(Self {
            free: (0..k.nrows()).collect(),
            factor: SpdFactor::new(k)?,
        })
    }

    /// Dual norm of a functional given on free dofs.
    pub fn norm(&self, f_free: &[f64]) -> Result<f64> {
        if f_free.len() != self.free.len() {
            return Err(Error::DimensionMismatch {
                expected: self.free.len(),
                actual: f_free.len(),
            });
        }
        let x = self.factor.solve(f_free);
        Ok(f_free.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
    }

    /// Dual norm of a full-length load vector (constrained rows ignored).
    pub fn norm_of_load(&self, load: &[f64]) -> Result<f64> {
        let f: Vec<f64> = self.free.iter().map(|&i| load[i]).collect();
        self.norm(&f)
    }
}

/// Linear map from velocity coefficients to area-weighted gradient samples at
/// quadrature points, so that `|G v|_2 = |v|_{H1}` exactly.
pub fn gradient_sampler(space: &MixedSpace) -> SparseOperator {
    let rule = degree5_rule();
    let ns = space.scalar_dof_count();
    let mut triplets = Vec::with_capacity(space.element_count() * rule.len() * 4 * 6);
    let mut row = 0;
    for t in 0..space.element_count() {
        let geo = space.element_geometry(t);
        let dofs = space.element_dofs(t);
        for q in &rule {
            let s = (q.weight * geo.area).sqrt();
            let g = p2_gradients(q.bary, &geo.grad_bary);
            for c in 0..2 {
                for dir in 0..2 {
                    for a in 0..6 {
                        triplets.push((row, c * ns + dofs[a], s * g[a][dir]));
                    }
                    row += 1;
                }
            }
        }
    }
    SparseOperator::from_triplets(row, 2 * ns, &triplets)
}
