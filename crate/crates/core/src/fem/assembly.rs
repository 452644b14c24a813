//! Element loops for the Stokes blocks, the skew-symmetric convection
//! operator and its Newton linearization.
//!
//! Scalar operators are assembled as value arrays on the space's shared
//! patterns; [`LinearBlocks`] and [`assemble_convection`] wrap them as
//! velocity-level [`SparseOperator`]s.

use crate::error::{Error, Result};
use crate::fem::element::{degree5_rule, p2_gradients, p2_values, QuadPoint};
use crate::fem::space::{MixedSpace, State};
use crate::sparse::SparseOperator;

struct QuadTable {
    points: [QuadPoint; 7],
    p2: [[f64; 6]; 7],
}

impl QuadTable {
    fn new() -> Self {
        let points = degree5_rule();
        let p2 = points.map(|q| p2_values(q.bary));
        Self { points, p2 }
    }
}

/// Runs `local` on every element and scatters the row-major local matrix
/// into a value array on the scalar P2 pattern.
fn assemble_scalar(space: &MixedSpace, mut local: impl FnMut(usize, &QuadTable, &mut [f64; 36])) -> Vec<f64> {
    let table = QuadTable::new();
    let mut values = vec![0.0; space.scalar_pattern().nnz()];
    let mut buf = [0.0; 36];
    for (t, slots) in space.scalar_slots().iter().enumerate() {
        buf.fill(0.0);
        local(t, &table, &mut buf);
        for (k, &slot) in slots.iter().enumerate() {
            values[slot] += buf[k];
        }
    }
    values
}

/// Scalar P2 stiffness `(grad phi_a, grad phi_b)`.
pub fn scalar_stiffness_values(space: &MixedSpace) -> Vec<f64> {
    assemble_scalar(space, |t, table, out| {
        let geo = space.element_geometry(t);
        for q in &table.points {
            let g = p2_gradients(q.bary, &geo.grad_bary);
            let w = q.weight * geo.area;
            for b in 0..6 {
                for a in 0..6 {
                    out[b * 6 + a] += w * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
        }
    })
}

/// Scalar P2 mass `(phi_a, phi_b)`.
pub fn scalar_mass_values(space: &MixedSpace) -> Vec<f64> {
    assemble_scalar(space, |t, table, out| {
        let area = space.element_geometry(t).area;
        for (q, n) in table.points.iter().zip(&table.p2) {
            let w = q.weight * area;
            for b in 0..6 {
                for a in 0..6 {
                    out[b * 6 + a] += w * n[a] * n[b];
                }
            }
        }
    })
}

/// P1 pressure mass on the space's linear pattern.
pub fn pressure_mass_values(space: &MixedSpace) -> Vec<f64> {
    let table = QuadTable::new();
    let mut values = vec![0.0; space.linear_pattern().nnz()];
    for (t, slots) in space.linear_slots().iter().enumerate() {
        let area = space.element_geometry(t).area;
        for q in &table.points {
            let w = q.weight * area;
            for i in 0..3 {
                for j in 0..3 {
                    values[slots[i * 3 + j]] += w * q.bary[i] * q.bary[j];
                }
            }
        }
    }
    values
}

/// Divergence components `B_c[q][s] = -(psi_q, d_c phi_s)` on the coupling
/// pattern, for `c = x, y`.
pub fn divergence_values(space: &MixedSpace) -> [Vec<f64>; 2] {
    let table = QuadTable::new();
    let nnz = space.coupling_pattern().nnz();
    let mut bx = vec![0.0; nnz];
    let mut by = vec![0.0; nnz];
    for (t, slots) in space.coupling_slots().iter().enumerate() {
        let geo = space.element_geometry(t);
        for q in &table.points {
            let g = p2_gradients(q.bary, &geo.grad_bary);
            let w = q.weight * geo.area;
            for i in 0..3 {
                for a in 0..6 {
                    let slot = slots[i * 6 + a];
                    bx[slot] -= w * q.bary[i] * g[a][0];
                    by[slot] -= w * q.bary[i] * g[a][1];
                }
            }
        }
    }
    [bx, by]
}

fn field_at(space: &MixedSpace, w: &[f64], dofs: &[usize; 6], n: &[f64; 6], g: &[[f64; 2]; 6]) -> ([f64; 2], [[f64; 2]; 2]) {
    let ns = space.scalar_dof_count();
    let mut val = [0.0; 2];
    let mut grad = [[0.0; 2]; 2];
    for a in 0..6 {
        for c in 0..2 {
            let coef = w[c * ns + dofs[a]];
            val[c] += coef * n[a];
            grad[c][0] += coef * g[a][0];
            grad[c][1] += coef * g[a][1];
        }
    }
    (val, grad)
}

/// Scalar skew convection `N_s[b][a] = 1/2 ((w . grad phi_a), phi_b) -
/// 1/2 ((w . grad phi_b), phi_a)`; the velocity operator is this block on
/// both components.
pub fn convection_values(space: &MixedSpace, w: &[f64]) -> Vec<f64> {
    assemble_scalar(space, |t, table, out| {
        let geo = space.element_geometry(t);
        let dofs = space.element_dofs(t);
        for (q, n) in table.points.iter().zip(&table.p2) {
            let g = p2_gradients(q.bary, &geo.grad_bary);
            let (wv, _) = field_at(space, w, dofs, n, &g);
            let wt = 0.5 * q.weight * geo.area;
            let adv: [f64; 6] = std::array::from_fn(|a| wv[0] * g[a][0] + wv[1] * g[a][1]);
            for b in 0..6 {
                for a in 0..6 {
                    out[b * 6 + a] += wt * (adv[a] * n[b] - adv[b] * n[a]);
                }
            }
        }
    })
}

/// Matrix of `b(phi_j, w, phi_i)` split into component blocks; element
/// `2 * d + c` holds rows of component `d` against columns of component `c`.
pub fn newton_values(space: &MixedSpace, w: &[f64]) -> [Vec<f64>; 4] {
    let table = QuadTable::new();
    let nnz = space.scalar_pattern().nnz();
    let mut blocks: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; nnz]);
    for (t, slots) in space.scalar_slots().iter().enumerate() {
        let geo = space.element_geometry(t);
        let dofs = space.element_dofs(t);
        for (q, n) in table.points.iter().zip(&table.p2) {
            let g = p2_gradients(q.bary, &geo.grad_bary);
            let (wv, wg) = field_at(space, w, dofs, n, &g);
            let wt = 0.5 * q.weight * geo.area;
            for d in 0..2 {
                for c in 0..2 {
                    let block = &mut blocks[2 * d + c];
                    let dw = wg[d][c];
                    for b in 0..6 {
                        for a in 0..6 {
                            block[slots[b * 6 + a]] += wt * n[a] * (n[b] * dw - g[b][c] * wv[d]);
                        }
                    }
                }
            }
        }
    }
    blocks
}

/// Load vector `(f, phi_i)` for a body force.
pub fn load_vector(space: &MixedSpace, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let table = QuadTable::new();
    let ns = space.scalar_dof_count();
    let mut out = vec![0.0; space.velocity_dof_count()];
    for t in 0..space.element_count() {
        let geo = space.element_geometry(t);
        let dofs = space.element_dofs(t);
        for (q, n) in table.points.iter().zip(&table.p2) {
            let fx = f(geo.point(q.bary));
            let w = q.weight * geo.area;
            for a in 0..6 {
                out[dofs[a]] += w * fx[0] * n[a];
                out[ns + dofs[a]] += w * fx[1] * n[a];
            }
        }
    }
    out
}

/// Velocity-level (2x2 component block) operator from scalar blocks on the
/// scalar pattern; `blocks[d][c]` couples rows of component `d` to columns of
/// component `c`.
pub fn vector_operator(space: &MixedSpace, blocks: [[Option<&[f64]>; 2]; 2]) -> SparseOperator {
    let pat = space.scalar_pattern();
    let ns = space.scalar_dof_count();
    let mut row_ptr = Vec::with_capacity(2 * ns + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for row_blocks in &blocks {
        for r in 0..ns {
            for (c, blk) in row_blocks.iter().enumerate() {
                if let Some(vals) = blk {
                    for k in pat.row_ptr()[r]..pat.row_ptr()[r + 1] {
                        col_idx.push(c * ns + pat.col_idx()[k]);
                        values.push(vals[k]);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    SparseOperator::from_csr(2 * ns, 2 * ns, row_ptr, col_idx, values).expect("block pattern is sorted")
}

/// Linear Stokes blocks for viscosity `nu`.
#[derive(Clone, Debug)]
pub struct LinearBlocks {
    pub nu: f64,
    /// `nu * K1`.
    pub a: SparseOperator,
    /// Divergence, pressure rows by velocity columns.
    pub b: SparseOperator,
    /// Velocity mass.
    pub mv: SparseOperator,
    /// Pressure mass.
    pub mp: SparseOperator,
    /// Unscaled velocity stiffness (H1 seminorm Gram matrix).
    pub k1: SparseOperator,
    pub(crate) stiffness_scalar: Vec<f64>,
    pub(crate) divergence: [Vec<f64>; 2],
}

pub fn assemble_linear_blocks(space: &MixedSpace, nu: f64) -> Result<LinearBlocks> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidArgument(format!("viscosity must be positive, got {nu}")));
    }
    let stiffness_scalar = scalar_stiffness_values(space);
    let mass_scalar = scalar_mass_values(space);
    let divergence = divergence_values(space);
    let k1 = vector_operator(space, [[Some(&stiffness_scalar), None], [None, Some(&stiffness_scalar)]]);
    let mv = vector_operator(space, [[Some(&mass_scalar), None], [None, Some(&mass_scalar)]]);
    let mp = space.linear_pattern().with_values(pressure_mass_values(space));

    let cp = space.coupling_pattern();
    let ns = space.scalar_dof_count();
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    for q in 0..space.pressure_dof_count() {
        for (c, vals) in divergence.iter().enumerate() {
            for k in cp.row_ptr()[q]..cp.row_ptr()[q + 1] {
                col_idx.push(c * ns + cp.col_idx()[k]);
                values.push(vals[k]);
            }
        }
        row_ptr.push(col_idx.len());
    }
    let b = SparseOperator::from_csr(space.pressure_dof_count(), 2 * ns, row_ptr, col_idx, values)?;

    Ok(LinearBlocks {
        nu,
        a: k1.scaled(nu),
        b,
        mv,
        mp,
        k1,
        stiffness_scalar,
        divergence,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvectionMode {
    /// `N(w)[i][j] = b(w, phi_j, phi_i)`.
    Picard,
    /// `N'(w)[i][j] = b(phi_j, w, phi_i)`.
    NewtonExtra,
}

pub fn assemble_convection(space: &MixedSpace, w: &State, mode: ConvectionMode) -> Result<SparseOperator> {
    space.check_velocity(&w.velocity)?;
    Ok(match mode {
        ConvectionMode::Picard => {
            let v = convection_values(space, &w.velocity);
            vector_operator(space, [[Some(&v), None], [None, Some(&v)]])
        }
        ConvectionMode::NewtonExtra => {
            let [xx, xy, yx, yy] = newton_values(space, &w.velocity);
            vector_operator(space, [[Some(&xx), Some(&xy)], [Some(&yx), Some(&yy)]])
        }
    })
}
