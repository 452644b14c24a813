//! Essential constraints on the coupled system: Dirichlet velocity data, the
//! pressure pin, and (through the `cda` module) directly enforced
//! observations.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::space::MixedSpace;
use crate::linsolve::{DirectSolver, Elimination};
use crate::sparse::SparseOperator;

/// Prescribed values for a subset of the coupled-system unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraints {
    mask: Vec<bool>,
    values: Vec<f64>,
}

impl Constraints {
    pub fn none(n: usize) -> Self {
        Self {
            mask: vec![false; n],
            values: vec![0.0; n],
        }
    }

    /// Lid-driven cavity boundary data plus pressure dof 0 pinned to zero.
    pub fn dirichlet(space: &MixedSpace, lid_speed: f64) -> Self {
        let mut c = Self::none(space.system_size());
        for (dof, v) in space.dirichlet_values(lid_speed) {
            c.fix(dof, v);
        }
        c.fix(space.pressure_index(0), 0.0);
        c
    }

    pub fn fix(&mut self, dof: usize, value: f64) {
        self.mask[dof] = true;
        self.values[dof] = value;
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.mask[dof]
    }

    pub fn value(&self, dof: usize) -> f64 {
        self.values[dof]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Full-length vector of prescribed values (zero at free entries).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn fixed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// A coupled system with its constrained unknowns eliminated.
///
/// Solving it is equivalent to solving the full system after replacing the
/// constrained rows by identity rows with the prescribed values on the
/// right-hand side and eliminating the constrained columns symmetrically.
#[derive(Clone, Debug)]
pub struct ConstrainedSystem {
    elimination: Arc<Elimination>,
    csc_values: Vec<f64>,
    rhs: Vec<f64>,
    prescribed: Vec<f64>,
}

impl ConstrainedSystem {
    /// Uses a precomputed elimination for `matrix`'s pattern.
    pub fn with_elimination(
        elimination: Arc<Elimination>,
        values: &[f64],
        rhs: &[f64],
        constraints: &Constraints,
    ) -> Self {
        let (csc_values, rhs) = elimination.reduce(values, rhs, constraints.values());
        Self {
            elimination,
            csc_values,
            rhs,
            prescribed: constraints.values().to_vec(),
        }
    }

    /// Solves for the full vector; constrained entries are copied verbatim
    /// from the prescribed values.
    pub fn solve(&self, solver: &mut DirectSolver) -> Result<Vec<f64>> {
        let e = &self.elimination;
        let x = solver.solve_csc(e.n_free(), e.col_ptr(), e.row_idx(), &self.csc_values, &self.rhs)?;
        Ok(e.expand(&x, &self.prescribed))
    }

    /// Matrix over the free unknowns (rows and columns in ascending full
    /// index order).
    pub fn reduced_matrix(&self) -> SparseOperator {
        self.elimination.reduced_operator(&self.csc_values)
    }

    pub fn reduced_rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn free_dofs(&self) -> &[usize] {
        self.elimination.free()
    }
}

/// Eliminates `constraints` from `matrix x = rhs`.
pub fn apply_constraints(matrix: &SparseOperator, rhs: &[f64], constraints: &Constraints) -> Result<ConstrainedSystem> {
    if matrix.nrows() != constraints.len() || matrix.ncols() != constraints.len() {
        return Err(Error::DimensionMismatch {
            expected: constraints.len(),
            actual: matrix.nrows(),
        });
    }
    if rhs.len() != constraints.len() {
        return Err(Error::DimensionMismatch {
            expected: constraints.len(),
            actual: rhs.len(),
        });
    }
    let elimination = Arc::new(Elimination::new(matrix, constraints.mask()));
    Ok(ConstrainedSystem::with_elimination(elimination, matrix.values(), rhs, constraints))
}

/// Cavity Dirichlet data (`(lid_speed, 0)` on the lid, zero on the walls) and
/// the pressure pin applied to a coupled system.
pub fn apply_dirichlet(
    matrix: &SparseOperator,
    rhs: &[f64],
    space: &MixedSpace,
    lid_speed: f64,
) -> Result<ConstrainedSystem> {
    apply_constraints(matrix, rhs, &Constraints::dirichlet(space, lid_speed))
}

/// Shifts a pressure vector to zero mean with respect to the mass matrix.
pub fn normalize_pressure(pressure: &mut [f64], mp: &SparseOperator) {
    let ones = vec![1.0; pressure.len()];
    let area = mp.quad_form(&ones);
    let mean = mp.bilinear(&ones, pressure) / area;
    for p in pressure.iter_mut() {
        *p -= mean;
    }
}
