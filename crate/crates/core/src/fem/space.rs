use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::element::ElementGeometry;
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::SparseOperator;

/// Taylor-Hood (P2 velocity, P1 pressure) degrees of freedom over a mesh.
///
/// Scalar quadratic dofs are numbered vertices first, then edges. Velocity
/// vectors store the x-component block followed by the y-component block;
/// pressure dofs are the mesh vertices. In the coupled system the pressure
/// unknowns follow the velocity unknowns.
#[derive(Clone, Debug)]
pub struct MixedSpace {
    mesh: Arc<Mesh>,
    n_scalar: usize,
    n_pressure: usize,
    elem_dofs: Vec<[usize; 6]>,
    geometry: Vec<ElementGeometry>,
    scalar_pattern: SparseOperator,
    scalar_slots: Vec<[usize; 36]>,
    coupling_pattern: SparseOperator,
    coupling_slots: Vec<[usize; 18]>,
    linear_pattern: SparseOperator,
    linear_slots: Vec<[usize; 9]>,
    boundary: Vec<(usize, BoundaryTag)>,
}

fn pattern_with_slots<const L: usize, const R: usize, const LR: usize>(
    nrows: usize,
    ncols: usize,
    rows: impl Fn(usize) -> [usize; L],
    cols: impl Fn(usize) -> [usize; R],
    n_elem: usize,
) -> (SparseOperator, Vec<[usize; LR]>) {
    let mut triplets = Vec::with_capacity(n_elem * LR);
    for t in 0..n_elem {
        for &r in &rows(t) {
            for &c in &cols(t) {
                triplets.push((r, c, 0.0));
            }
        }
    }
    let pattern = SparseOperator::from_triplets(nrows, ncols, &triplets);
    let slots = (0..n_elem)
        .map(|t| {
            let mut s = [0usize; LR];
            let (rs, cs) = (rows(t), cols(t));
            for (a, &r) in rs.iter().enumerate() {
                for (b, &c) in cs.iter().enumerate() {
                    s[a * R + b] = pattern.slot(r, c).unwrap();
                }
            }
            s
        })
        .collect();
    (pattern, slots)
}

impl MixedSpace {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let nv = mesh.vertices().len();
        let ne = mesh.edges().len();
        let n_scalar = nv + ne;
        let elem_dofs: Vec<[usize; 6]> = mesh
            .triangles()
            .iter()
            .zip(mesh.triangle_edges())
            .map(|(t, e)| [t[0], t[1], t[2], nv + e[0], nv + e[1], nv + e[2]])
            .collect();
        let geometry: Vec<ElementGeometry> = mesh
            .triangles()
            .iter()
            .map(|t| ElementGeometry::new([mesh.vertices()[t[0]], mesh.vertices()[t[1]], mesh.vertices()[t[2]]]))
            .collect();
        let n_elem = elem_dofs.len();
        let tris = mesh.triangles().to_vec();

        let (scalar_pattern, scalar_slots) =
            pattern_with_slots::<6, 6, 36>(n_scalar, n_scalar, |t| elem_dofs[t], |t| elem_dofs[t], n_elem);
        let (coupling_pattern, coupling_slots) =
            pattern_with_slots::<3, 6, 18>(nv, n_scalar, |t| tris[t], |t| elem_dofs[t], n_elem);
        let (linear_pattern, linear_slots) =
            pattern_with_slots::<3, 3, 9>(nv, nv, |t| tris[t], |t| tris[t], n_elem);

        let mut boundary = Vec::new();
        for v in 0..nv {
            let tag = mesh.vertex_tag(v);
            if tag.is_boundary() {
                boundary.push((v, tag));
            }
        }
        for e in 0..ne {
            let tag = mesh.edge_tag(e);
            if tag.is_boundary() {
                boundary.push((nv + e, tag));
            }
        }

        Self {
            mesh,
            n_scalar,
            n_pressure: nv,
            elem_dofs,
            geometry,
            scalar_pattern,
            scalar_slots,
            coupling_pattern,
            coupling_slots,
            linear_pattern,
            linear_slots,
            boundary,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Quadratic scalar dofs (vertices + edges).
    pub fn scalar_dof_count(&self) -> usize {
        self.n_scalar
    }

    pub fn velocity_dof_count(&self) -> usize {
        2 * self.n_scalar
    }

    pub fn pressure_dof_count(&self) -> usize {
        self.n_pressure
    }

    /// Size of the coupled velocity-pressure system.
    pub fn system_size(&self) -> usize {
        self.velocity_dof_count() + self.n_pressure
    }

    /// Velocity dof of component `c` at scalar dof `s`.
    #[inline]
    pub fn velocity_dof(&self, c: usize, s: usize) -> usize {
        c * self.n_scalar + s
    }

    /// Position of pressure dof `q` in the coupled system.
    #[inline]
    pub fn pressure_index(&self, q: usize) -> usize {
        self.velocity_dof_count() + q
    }

    pub fn element_count(&self) -> usize {
        self.elem_dofs.len()
    }

    pub fn element_dofs(&self, t: usize) -> &[usize; 6] {
        &self.elem_dofs[t]
    }

    pub fn element_geometry(&self, t: usize) -> &ElementGeometry {
        &self.geometry[t]
    }

    /// Pattern of scalar P2-P2 operators, and per-element slots (row-major
    /// 6x6) into its value array.
    pub fn scalar_pattern(&self) -> &SparseOperator {
        &self.scalar_pattern
    }

    pub fn scalar_slots(&self) -> &[[usize; 36]] {
        &self.scalar_slots
    }

    /// Pattern of P1-row, P2-column operators (divergence components).
    pub fn coupling_pattern(&self) -> &SparseOperator {
        &self.coupling_pattern
    }

    pub fn coupling_slots(&self) -> &[[usize; 18]] {
        &self.coupling_slots
    }

    pub fn linear_pattern(&self) -> &SparseOperator {
        &self.linear_pattern
    }

    pub fn linear_slots(&self) -> &[[usize; 9]] {
        &self.linear_slots
    }

    /// Scalar dofs on the boundary (vertices and edge midpoints) with tags.
    pub fn boundary_scalar_dofs(&self) -> &[(usize, BoundaryTag)] {
        &self.boundary
    }

    /// Constrained velocity dofs and their values for a lid moving with
    /// tangential speed `lid_speed`.
    pub fn dirichlet_values(&self, lid_speed: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.boundary.len());
        for &(s, tag) in &self.boundary {
            let ux = if tag == BoundaryTag::Lid { lid_speed } else { 0.0 };
            out.push((self.velocity_dof(0, s), ux));
            out.push((self.velocity_dof(1, s), 0.0));
        }
        out.sort_by_key(|p| p.0);
        out
    }

    /// Mask over velocity dofs: true where a Dirichlet condition applies.
    pub fn dirichlet_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.velocity_dof_count()];
        for &(s, _) in &self.boundary {
            mask[self.velocity_dof(0, s)] = true;
            mask[self.velocity_dof(1, s)] = true;
        }
        mask
    }

    /// Velocity dofs without a Dirichlet condition, ascending.
    pub fn free_velocity_dofs(&self) -> Vec<usize> {
        let mask = self.dirichlet_mask();
        (0..mask.len()).filter(|&i| !mask[i]).collect()
    }

    /// Coordinates of scalar dof `s`.
    pub fn scalar_dof_point(&self, s: usize) -> [f64; 2] {
        if s < self.n_pressure {
            self.mesh.vertices()[s]
        } else {
            self.mesh.edge_midpoint(s - self.n_pressure)
        }
    }

    /// Nodal interpolant of a vector field into the velocity space.
    pub fn interpolate_velocity(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut v = vec![0.0; self.velocity_dof_count()];
        for s in 0..self.n_scalar {
            let val = f(self.scalar_dof_point(s));
            v[self.velocity_dof(0, s)] = val[0];
            v[self.velocity_dof(1, s)] = val[1];
        }
        v
    }

    pub fn check_velocity(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.velocity_dof_count() {
            return Err(Error::DimensionMismatch {
                expected: self.velocity_dof_count(),
                actual: v.len(),
            });
        }
        Ok(())
    }
}

/// A velocity-pressure coefficient pair.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl State {
    pub fn new(space: &MixedSpace, velocity: Vec<f64>, pressure: Vec<f64>) -> Result<Self> {
        space.check_velocity(&velocity)?;
        if pressure.len() != space.pressure_dof_count() {
            return Err(Error::DimensionMismatch {
                expected: space.pressure_dof_count(),
                actual: pressure.len(),
            });
        }
        if velocity.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("velocity"));
        }
        if pressure.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pressure"));
        }
        Ok(Self { velocity, pressure })
    }

    pub fn zero(space: &MixedSpace) -> Self {
        Self {
            velocity: vec![0.0; space.velocity_dof_count()],
            pressure: vec![0.0; space.pressure_dof_count()],
        }
    }

    /// Splits a coupled-system vector.
    pub fn from_system_vector(space: &MixedSpace, x: &[f64]) -> Result<Self> {
        let nv = space.velocity_dof_count();
        if x.len() != space.system_size() {
            return Err(Error::DimensionMismatch {
                expected: space.system_size(),
                actual: x.len(),
            });
        }
        Self::new(space, x[..nv].to_vec(), x[nv..].to_vec())
    }

    pub fn to_system_vector(&self) -> Vec<f64> {
        let mut x = self.velocity.clone();
        x.extend_from_slice(&self.pressure);
        x
    }
}
