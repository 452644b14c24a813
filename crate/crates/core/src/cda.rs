//! Observation operator `I_H`, the nudging penalty and direct enforcement of
//! observed values.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::bc::Constraints;
use crate::fem::element::{degree5_rule, ElementGeometry};
use crate::fem::space::MixedSpace;
use crate::mesh::{observation_nodes, BoundaryTag, Mesh, ObservationNodeSet};
use crate::sparse::SparseOperator;

/// Consistency tolerance between measured values and boundary data at
/// observation nodes that lie on the boundary.
pub const BOUNDARY_CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NudgingMode {
    Off,
    Penalty,
    Direct,
}

impl std::str::FromStr for NudgingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Self::Off),
            "penalty" => Ok(Self::Penalty),
            "direct" => Ok(Self::Direct),
            _ => Err(Error::Parse(format!("unknown nudging mode '{s}'"))),
        }
    }
}

impl std::fmt::Display for NudgingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Off => "off",
            Self::Penalty => "penalty",
            Self::Direct => "direct",
        })
    }
}

/// Smallest nudging parameter covered by the contraction theory, with the
/// interpolation constant taken as 1.
pub fn mu_min(nu: f64, h_coarse: f64) -> f64 {
    nu / (4.0 * h_coarse * h_coarse)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NudgingConfig {
    pub mode: NudgingMode,
    pub mu: f64,
    /// Accept `mu < mu_min`; the run is flagged instead of rejected.
    pub allow_small_mu: bool,
    /// Also enforce observations at boundary nodes (direct mode).
    pub include_boundary: bool,
}

impl NudgingConfig {
    pub fn off() -> Self {
        Self {
            mode: NudgingMode::Off,
            mu: 0.0,
            allow_small_mu: false,
            include_boundary: false,
        }
    }

    pub fn direct() -> Self {
        Self {
            mode: NudgingMode::Direct,
            ..Self::off()
        }
    }

    pub fn penalty(mu: f64) -> Self {
        Self {
            mode: NudgingMode::Penalty,
            mu,
            ..Self::off()
        }
    }

    /// Checks the parameters for the given viscosity and observation spacing.
    /// Returns `Ok(true)` when `mu` is below `mu_min` but explicitly allowed.
    pub fn validate(&self, nu: f64, h_coarse: f64) -> Result<bool> {
        if self.mode != NudgingMode::Penalty {
            return Ok(false);
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidArgument(format!("nudging parameter must be positive, got {}", self.mu)));
        }
        let min = mu_min(nu, h_coarse);
        if self.mu < min {
            if self.allow_small_mu {
                log::warn!("mu = {} is below mu_min = {min}", self.mu);
                return Ok(true);
            }
            return Err(Error::InvalidArgument(format!(
                "mu = {} is below mu_min = nu/(4 H^2) = {min}",
                self.mu
            )));
        }
        Ok(false)
    }
}

/// Nodal velocity samples of a reference field at the observation nodes.
#[derive(Clone, Debug)]
pub struct ObservationData {
    nodes: Arc<ObservationNodeSet>,
    values: Vec<[f64; 2]>,
}

impl ObservationData {
    pub fn new(nodes: Arc<ObservationNodeSet>, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                actual: values.len(),
            });
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation values"));
        }
        Ok(Self { nodes, values })
    }

    /// Samples vertex values of `velocity`.
    pub fn sample(space: &MixedSpace, nodes: Arc<ObservationNodeSet>, velocity: &[f64]) -> Result<Self> {
        space.check_velocity(velocity)?;
        let values = nodes
            .fine_vertex_indices()
            .iter()
            .map(|&v| [velocity[space.velocity_dof(0, v)], velocity[space.velocity_dof(1, v)]])
            .collect();
        Self::new(nodes, values)
    }

    pub fn nodes(&self) -> &Arc<ObservationNodeSet> {
        &self.nodes
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        self.nodes.spacing()
    }

    /// Values stacked as `[ux_0, ux_1, ..., uy_0, uy_1, ...]`, matching the
    /// rows of the sampling operator.
    pub fn stacked(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(2 * self.values.len());
        g.extend(self.values.iter().map(|v| v[0]));
        g.extend(self.values.iter().map(|v| v[1]));
        g
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("H {:.16e}\n", self.spacing());
        for (&v, val) in self.nodes.fine_vertex_indices().iter().zip(&self.values) {
            writeln!(s, "{v} {:.16e} {:.16e}", val[0], val[1]).unwrap();
        }
        s
    }

    /// Parses the text form; the node set is rebuilt on `fine`.
    pub fn from_text(text: &str, fine: &Mesh) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty observation file".into()))?;
        let h: f64 = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["H", v] => v.parse().map_err(|e| Error::Parse(format!("bad H value: {e}")))?,
            _ => return Err(Error::Parse(format!("expected 'H <value>' header, got '{header}'"))),
        };
        if !(h > 0.0) {
            return Err(Error::Parse(format!("H must be positive, got {h}")));
        }
        let n_coarse = (1.0 / h).round() as usize;
        let nodes = Arc::new(observation_nodes(fine, n_coarse)?);
        let mut values = Vec::with_capacity(nodes.len());
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("expected 'node_index ux uy', got '{line}'")));
            }
            let idx: usize = f[0].parse().map_err(|e| Error::Parse(format!("bad node index: {e}")))?;
            if nodes.fine_vertex_indices().get(i) != Some(&idx) {
                return Err(Error::Parse(format!("node {idx} out of order or not an observation node")));
            }
            let ux: f64 = f[1].parse().map_err(|e| Error::Parse(format!("bad value: {e}")))?;
            let uy: f64 = f[2].parse().map_err(|e| Error::Parse(format!("bad value: {e}")))?;
            values.push([ux, uy]);
        }
        Self::new(nodes, values)
    }
}

/// `S`: row `c * len + i` extracts component `c` at observation node `i`.
pub fn build_sampling_operator(space: &MixedSpace, nodes: &ObservationNodeSet) -> SparseOperator {
    let len = nodes.len();
    let mut t = Vec::with_capacity(2 * len);
    for c in 0..2 {
        for (i, &v) in nodes.fine_vertex_indices().iter().enumerate() {
            t.push((c * len + i, space.velocity_dof(c, v), 1.0));
        }
    }
    SparseOperator::from_triplets(2 * len, space.velocity_dof_count(), &t)
}

/// Scalar P1 mass matrix on the coarse triangulation.
pub fn build_coarse_mass(nodes: &ObservationNodeSet) -> SparseOperator {
    let mut t = Vec::with_capacity(9 * nodes.coarse_triangles().len());
    for (k, tri) in nodes.coarse_triangles().iter().enumerate() {
        let area = nodes.coarse_signed_area(k);
        for a in 0..3 {
            for b in 0..3 {
                let m = if a == b { area / 6.0 } else { area / 12.0 };
                t.push((tri[a], tri[b], m));
            }
        }
    }
    SparseOperator::from_triplets(nodes.len(), nodes.len(), &t)
}

/// Penalty addends `mu S^T M_H S` and `mu S^T M_H g`, with `M_H` applied to
/// each component block.
pub fn nudging_contribution(
    s: &SparseOperator,
    m_h: &SparseOperator,
    mu: f64,
    data: &ObservationData,
) -> Result<(SparseOperator, Vec<f64>)> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("nudging parameter must be positive, got {mu}")));
    }
    let len = m_h.nrows();
    if s.nrows() != 2 * len || data.values().len() != len {
        return Err(Error::DimensionMismatch {
            expected: 2 * len,
            actual: s.nrows(),
        });
    }
    let g = data.stacked();
    let mut mg = vec![0.0; 2 * len];
    for c in 0..2 {
        let block = m_h.mul_vec(&g[c * len..(c + 1) * len]);
        for (i, v) in block.into_iter().enumerate() {
            mg[c * len + i] = mu * v;
        }
    }
    let rhs = s.mul_transpose_vec(&mg);

    let mut t = Vec::with_capacity(2 * m_h.nnz());
    for c in 0..2 {
        for i in 0..len {
            for (j, m) in m_h.row(i) {
                for (ci, si) in s.row(c * len + i) {
                    for (cj, sj) in s.row(c * len + j) {
                        t.push((ci, cj, mu * si * m * sj));
                    }
                }
            }
        }
    }
    Ok((SparseOperator::from_triplets(s.ncols(), s.ncols(), &t), rhs))
}

/// Fixes the velocity dofs at observation nodes to the measured values.
///
/// Boundary nodes keep their Dirichlet values. With `include_boundary` they
/// are checked against the measurement instead of being skipped.
pub fn apply_direct_enforcement(
    constraints: &mut Constraints,
    space: &MixedSpace,
    lid_speed: f64,
    data: &ObservationData,
    include_boundary: bool,
) -> Result<()> {
    let mesh = space.mesh();
    for (&v, val) in data.nodes().fine_vertex_indices().iter().zip(data.values()) {
        let tag = mesh.vertex_tag(v);
        if tag.is_boundary() {
            if include_boundary {
                let bc = [if tag == BoundaryTag::Lid { lid_speed } else { 0.0 }, 0.0];
                if (val[0] - bc[0]).abs() > BOUNDARY_CONSISTENCY_TOL || (val[1] - bc[1]).abs() > BOUNDARY_CONSISTENCY_TOL {
                    return Err(Error::InconsistentData {
                        vertex: v,
                        measured: *val,
                        boundary: bc,
                    });
                }
            }
            continue;
        }
        constraints.fix(space.velocity_dof(0, v), val[0]);
        constraints.fix(space.velocity_dof(1, v), val[1]);
    }
    Ok(())
}

/// Interpolation diagnostics for a smooth scalar field `v` with gradient
/// `grad`: `||v - I_H v||`, `|v|_{H1}`, `||I_H v||` and `||v||` (L2 norms),
/// integrated with the degree-5 rule on the fine mesh.
#[derive(Clone, Copy, Debug)]
pub struct InterpolationEstimate {
    pub error_l2: f64,
    pub seminorm_h1: f64,
    pub interpolant_l2: f64,
    pub field_l2: f64,
    pub spacing: f64,
}

impl InterpolationEstimate {
    /// `C` in `||v - I_H v|| <= C H |v|_{H1}`.
    pub fn error_constant(&self) -> f64 {
        self.error_l2 / (self.spacing * self.seminorm_h1)
    }

    /// `C` in `||I_H v|| <= C ||v||`.
    pub fn stability_constant(&self) -> f64 {
        self.interpolant_l2 / self.field_l2
    }
}

pub fn estimate_interpolation(
    fine: &Mesh,
    nodes: &ObservationNodeSet,
    v: impl Fn([f64; 2]) -> f64,
    grad: impl Fn([f64; 2]) -> [f64; 2],
) -> InterpolationEstimate {
    let nodal: Vec<f64> = nodes.coordinates().iter().map(|&p| v(p)).collect();
    let rule = degree5_rule();
    let (mut e2, mut g2, mut i2, mut v2) = (0.0, 0.0, 0.0, 0.0);
    for tri in fine.triangles() {
        let geo = ElementGeometry::new([fine.vertices()[tri[0]], fine.vertices()[tri[1]], fine.vertices()[tri[2]]]);
        for q in &rule {
            let p = geo.point(q.bary);
            let w = q.weight * geo.area;
            let (val, ih) = (v(p), nodes.interpolate(&nodal, p));
            let g = grad(p);
            e2 += w * (val - ih) * (val - ih);
            g2 += w * (g[0] * g[0] + g[1] * g[1]);
            i2 += w * ih * ih;
            v2 += w * val * val;
        }
    }
    InterpolationEstimate {
        error_l2: e2.sqrt(),
        seminorm_h1: g2.sqrt(),
        interpolant_l2: i2.sqrt(),
        field_l2: v2.sqrt(),
        spacing: nodes.spacing(),
    }
}
