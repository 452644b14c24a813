//! Fixed-pattern assembly of the coupled velocity-pressure matrix
//! `[A + N (+ N') (+ P), B^T; B, 0]`.

use crate::fem::assembly::LinearBlocks;
use crate::fem::space::MixedSpace;
use crate::sparse::SparseOperator;

/// Sparsity pattern of the coupled system plus the slot maps that let each
/// iteration refill values without rebuilding the structure.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pattern: SparseOperator,
    coupled: bool,
    /// Scalar-pattern slot to full slot, per velocity block `2 * d + c`.
    velocity_slots: Vec<Vec<usize>>,
    b_slots: [Vec<usize>; 2],
    bt_slots: [Vec<usize>; 2],
    extra_slots: Option<Vec<usize>>,
}

impl SaddleSystem {
    /// `coupled` reserves the off-diagonal velocity component blocks needed
    /// by the Newton linearization; `extra` is a velocity-level operator
    /// (such as a nudging penalty) whose pattern is merged in.
    pub fn new(space: &MixedSpace, coupled: bool, extra: Option<&SparseOperator>) -> Self {
        let n = space.system_size();
        let ns = space.scalar_dof_count();
        let sp = space.scalar_pattern();
        let cp = space.coupling_pattern();
        let mut triplets = Vec::with_capacity(4 * sp.nnz() + 4 * cp.nnz());
        let blocks: &[(usize, usize)] = if coupled {
            &[(0, 0), (0, 1), (1, 0), (1, 1)]
        } else {
            &[(0, 0), (1, 1)]
        };
        for &(d, c) in blocks {
            for r in 0..ns {
                for k in sp.row_ptr()[r]..sp.row_ptr()[r + 1] {
                    triplets.push((d * ns + r, c * ns + sp.col_idx()[k], 0.0));
                }
            }
        }
        for q in 0..space.pressure_dof_count() {
            for k in cp.row_ptr()[q]..cp.row_ptr()[q + 1] {
                for c in 0..2 {
                    let col = c * ns + cp.col_idx()[k];
                    triplets.push((space.pressure_index(q), col, 0.0));
                    triplets.push((col, space.pressure_index(q), 0.0));
                }
            }
        }
        if let Some(e) = extra {
            for r in 0..e.nrows() {
                for (c, _) in e.row(r) {
                    triplets.push((r, c, 0.0));
                }
            }
        }
        let pattern = SparseOperator::from_triplets(n, n, &triplets);

        let mut velocity_slots = vec![Vec::new(); 4];
        for &(d, c) in blocks {
            let mut map = Vec::with_capacity(sp.nnz());
            for r in 0..ns {
                for k in sp.row_ptr()[r]..sp.row_ptr()[r + 1] {
                    map.push(pattern.slot(d * ns + r, c * ns + sp.col_idx()[k]).unwrap());
                }
            }
            velocity_slots[2 * d + c] = map;
        }
        let mut b_slots: [Vec<usize>; 2] = Default::default();
        let mut bt_slots: [Vec<usize>; 2] = Default::default();
        for c in 0..2 {
            for q in 0..space.pressure_dof_count() {
                for k in cp.row_ptr()[q]..cp.row_ptr()[q + 1] {
                    let col = c * ns + cp.col_idx()[k];
                    b_slots[c].push(pattern.slot(space.pressure_index(q), col).unwrap());
                    bt_slots[c].push(pattern.slot(col, space.pressure_index(q)).unwrap());
                }
            }
        }
        let extra_slots = extra.map(|e| {
            let mut map = Vec::with_capacity(e.nnz());
            for r in 0..e.nrows() {
                for (c, _) in e.row(r) {
                    map.push(pattern.slot(r, c).unwrap());
                }
            }
            map
        });
        Self {
            pattern,
            coupled,
            velocity_slots,
            b_slots,
            bt_slots,
            extra_slots,
        }
    }

    pub fn pattern(&self) -> &SparseOperator {
        &self.pattern
    }

    pub fn is_coupled(&self) -> bool {
        self.coupled
    }

    /// Values of the Stokes part `[nu K1, B^T; B, 0]`.
    pub fn stokes_values(&self, blocks: &LinearBlocks) -> Vec<f64> {
        let mut values = vec![0.0; self.pattern.nnz()];
        for d in 0..2 {
            self.add_velocity_block(&mut values, d, d, &blocks.stiffness_scalar, blocks.nu);
        }
        for c in 0..2 {
            for (k, &v) in blocks.divergence[c].iter().enumerate() {
                values[self.b_slots[c][k]] += v;
                values[self.bt_slots[c][k]] += v;
            }
        }
        values
    }

    /// Adds `scale * block` (scalar-pattern values) to velocity block `(d, c)`.
    pub fn add_velocity_block(&self, values: &mut [f64], d: usize, c: usize, block: &[f64], scale: f64) {
        let map = &self.velocity_slots[2 * d + c];
        assert!(!map.is_empty(), "velocity block ({d}, {c}) not in pattern");
        for (k, &v) in block.iter().enumerate() {
            values[map[k]] += scale * v;
        }
    }

    /// Adds `scale * extra`; `extra` must be the operator given at
    /// construction (or share its pattern).
    pub fn add_extra(&self, values: &mut [f64], extra: &SparseOperator, scale: f64) {
        let map = self.extra_slots.as_ref().expect("no extra operator in pattern");
        assert_eq!(map.len(), extra.nnz());
        for (k, &v) in extra.values().iter().enumerate() {
            values[map[k]] += scale * v;
        }
    }

    pub fn to_operator(&self, values: Vec<f64>) -> SparseOperator {
        self.pattern.with_values(values)
    }
}
