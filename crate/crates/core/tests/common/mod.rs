//! Independent oracles shared by the integration tests: a Duffy-collapsed
//! Gauss-Legendre triangle rule, a P2 basis built from its nodal
//! conditions, and the manufactured Stokes solution.
#![allow(dead_code)]

use std::sync::Arc;

use cdanse::fem::{MixedSpace, State};
use cdanse::mesh::build_uniform_triangulation;
use nalgebra::{DMatrix, Matrix6, Vector6};
use rand::Rng;

pub fn space(n: usize) -> MixedSpace {
    MixedSpace::new(Arc::new(build_uniform_triangulation(n).unwrap()))
}

/// Gauss-Legendre nodes and weights on [0, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out
}

/// Points and absolute weights on a triangle, exact well beyond degree 10.
pub fn triangle_rule(v: [[f64; 2]; 3]) -> Vec<([f64; 2], f64)> {
    let gl = gauss_legendre(8);
    let area = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs();
    let mut out = Vec::new();
    for &(s, ws) in &gl {
        for &(t, wt) in &gl {
            let l1 = s;
            let l2 = (1.0 - s) * t;
            let l0 = 1.0 - l1 - l2;
            let p = [
                l0 * v[0][0] + l1 * v[1][0] + l2 * v[2][0],
                l0 * v[0][1] + l1 * v[1][1] + l2 * v[2][1],
            ];
            out.push((p, ws * wt * (1.0 - s) * 2.0 * area));
        }
    }
    out
}

/// Quadratic Lagrange basis on one element, built from the coordinates of
/// its six global dofs via a monomial Vandermonde solve.
pub struct LocalP2 {
    pub dofs: [usize; 6],
    coef: [Vector6<f64>; 6],
}

impl LocalP2 {
    pub fn new(space: &MixedSpace, t: usize) -> Self {
        let dofs = *space.element_dofs(t);
        let mut v = Matrix6::zeros();
        for (r, &d) in dofs.iter().enumerate() {
            let [x, y] = space.scalar_dof_point(d);
            let row = [1.0, x, y, x * x, x * y, y * y];
            for c in 0..6 {
                v[(r, c)] = row[c];
            }
        }
        let inv = v.try_inverse().expect("unisolvent nodes");
        let coef = std::array::from_fn(|a| inv.column(a).into_owned());
        Self { dofs, coef }
    }

    pub fn value(&self, a: usize, p: [f64; 2]) -> f64 {
        let [x, y] = p;
        let c = &self.coef[a];
        c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
    }

    pub fn grad(&self, a: usize, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        let c = &self.coef[a];
        [c[1] + 2.0 * c[3] * x + c[4] * y, c[2] + c[4] * x + 2.0 * c[5] * y]
    }

    /// Velocity value and gradient (`grad[c][d] = d_d u_c`) of a coefficient vector.
    pub fn field(&self, space: &MixedSpace, u: &[f64], p: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let ns = space.scalar_dof_count();
        let mut val = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for a in 0..6 {
            let (phi, g) = (self.value(a, p), self.grad(a, p));
            for c in 0..2 {
                let coef = u[c * ns + self.dofs[a]];
                val[c] += coef * phi;
                grad[c][0] += coef * g[0];
                grad[c][1] += coef * g[1];
            }
        }
        (val, grad)
    }
}

pub fn element_vertices(space: &MixedSpace, t: usize) -> [[f64; 2]; 3] {
    let mesh = space.mesh();
    let tri = mesh.triangles()[t];
    [mesh.vertices()[tri[0]], mesh.vertices()[tri[1]], mesh.vertices()[tri[2]]]
}

/// P1 hat function of local vertex `i` on element `t`.
pub fn hat(v: [[f64; 2]; 3], i: usize, p: [f64; 2]) -> f64 {
    let (j, k) = ((i + 1) % 3, (i + 2) % 3);
    let cross = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    cross(v[j], v[k], p) / cross(v[j], v[k], v[i])
}

/// Dense oracle matrices on the velocity space (component-blocked like the
/// library: dof `c * Ns + s`).
pub struct Oracle {
    pub k1: DMatrix<f64>,
    pub mv: DMatrix<f64>,
    pub mp: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

pub fn oracle_linear(space: &MixedSpace) -> Oracle {
    let ns = space.scalar_dof_count();
    let nv = 2 * ns;
    let np = space.pressure_dof_count();
    let mut k1 = DMatrix::zeros(nv, nv);
    let mut mv = DMatrix::zeros(nv, nv);
    let mut mp = DMatrix::zeros(np, np);
    let mut b = DMatrix::zeros(np, nv);
    let tris = space.mesh().triangles().to_vec();
    for t in 0..space.element_count() {
        let loc = LocalP2::new(space, t);
        let v = element_vertices(space, t);
        for (p, w) in triangle_rule(v) {
            for a in 0..6 {
                for bb in 0..6 {
                    let (ga, gb) = (loc.grad(a, p), loc.grad(bb, p));
                    let s = w * (ga[0] * gb[0] + ga[1] * gb[1]);
                    let m = w * loc.value(a, p) * loc.value(bb, p);
                    for c in 0..2 {
                        k1[(c * ns + loc.dofs[bb], c * ns + loc.dofs[a])] += s;
                        mv[(c * ns + loc.dofs[bb], c * ns + loc.dofs[a])] += m;
                    }
                }
            }
            for i in 0..3 {
                let hi = hat(v, i, p);
                for j in 0..3 {
                    mp[(tris[t][i], tris[t][j])] += w * hi * hat(v, j, p);
                }
                for a in 0..6 {
                    let g = loc.grad(a, p);
                    for c in 0..2 {
                        b[(tris[t][i], c * ns + loc.dofs[a])] -= w * hi * g[c];
                    }
                }
            }
        }
    }
    Oracle { k1, mv, mp, b }
}

/// `N(w)[i][j] = b(w, phi_j, phi_i)` in the skew form
/// `b(w, u, v) = 1/2 ((w . grad u, v) - (w . grad v, u))`.
pub fn oracle_convection(space: &MixedSpace, w: &[f64]) -> DMatrix<f64> {
    let ns = space.scalar_dof_count();
    let mut n = DMatrix::zeros(2 * ns, 2 * ns);
    for t in 0..space.element_count() {
        let loc = LocalP2::new(space, t);
        for (p, wt) in triangle_rule(element_vertices(space, t)) {
            let (wv, _) = loc.field(space, w, p);
            for a in 0..6 {
                for bb in 0..6 {
                    let (ga, gb) = (loc.grad(a, p), loc.grad(bb, p));
                    let adv_a = wv[0] * ga[0] + wv[1] * ga[1];
                    let adv_b = wv[0] * gb[0] + wv[1] * gb[1];
                    let val = 0.5 * wt * (adv_a * loc.value(bb, p) - adv_b * loc.value(a, p));
                    for c in 0..2 {
                        n[(c * ns + loc.dofs[bb], c * ns + loc.dofs[a])] += val;
                    }
                }
            }
        }
    }
    n
}

/// `N'(w)[i][j] = b(phi_j, w, phi_i)` in the skew form.
pub fn oracle_newton(space: &MixedSpace, w: &[f64]) -> DMatrix<f64> {
    let ns = space.scalar_dof_count();
    let mut n = DMatrix::zeros(2 * ns, 2 * ns);
    for t in 0..space.element_count() {
        let loc = LocalP2::new(space, t);
        for (p, wt) in triangle_rule(element_vertices(space, t)) {
            let (wv, wg) = loc.field(space, w, p);
            for a in 0..6 {
                for bb in 0..6 {
                    let (pa, pb) = (loc.value(a, p), loc.value(bb, p));
                    let gb = loc.grad(bb, p);
                    // column phi_a e_c, row phi_b e_d
                    for d in 0..2 {
                        for c in 0..2 {
                            // (phi_a e_c . grad) w . phi_b e_d = pa * d_c w_d * pb
                            let first = pa * wg[d][c] * pb;
                            // (phi_a e_c . grad)(phi_b e_d) . w = pa * d_c pb * w_d
                            let second = pa * gb[c] * wv[d];
                            n[(d * ns + loc.dofs[bb], c * ns + loc.dofs[a])] += 0.5 * wt * (first - second);
                        }
                    }
                }
            }
        }
    }
    n
}

pub fn dense(op: &cdanse::sparse::SparseOperator) -> DMatrix<f64> {
    op.to_dense()
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_state<R: Rng>(rng: &mut R, space: &MixedSpace, scale: f64) -> State {
    State {
        velocity: random_vec(rng, space.velocity_dof_count(), scale),
        pressure: random_vec(rng, space.pressure_dof_count(), scale),
    }
}

/// `f(s) = s^2 (1 - s)^2` and its first three derivatives.
fn quartic(s: f64) -> [f64; 4] {
    [
        s * s * (1.0 - s) * (1.0 - s),
        2.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
        2.0 * (1.0 - 6.0 * s + 6.0 * s * s),
        24.0 * s - 12.0,
    ]
}

/// Velocity `curl(f(x) f(y))`.
pub fn mms_velocity(p: [f64; 2]) -> [f64; 2] {
    let (fx, fy) = (quartic(p[0]), quartic(p[1]));
    [fx[0] * fy[1], -fx[1] * fy[0]]
}

/// `grad[c][d] = d_d u_c`.
pub fn mms_gradient(p: [f64; 2]) -> [[f64; 2]; 2] {
    let (fx, fy) = (quartic(p[0]), quartic(p[1]));
    [[fx[1] * fy[1], fx[0] * fy[2]], [-fx[2] * fy[0], -fx[1] * fy[1]]]
}

/// Stokes forcing `-nu lap u + grad p` with `p = x^2 - 1/3`.
pub fn mms_forcing(nu: f64) -> impl Fn([f64; 2]) -> [f64; 2] {
    move |p| {
        let (fx, fy) = (quartic(p[0]), quartic(p[1]));
        let lap1 = fx[2] * fy[1] + fx[0] * fy[3];
        let lap2 = -fx[3] * fy[0] - fx[1] * fy[2];
        [-nu * lap1 + 2.0 * p[0], -nu * lap2]
    }
}

/// `|u_exact - u_h|_{H1}` with the oracle rule.
pub fn mms_h1_error(space: &MixedSpace, u: &[f64]) -> f64 {
    let mut e2 = 0.0;
    for t in 0..space.element_count() {
        let loc = LocalP2::new(space, t);
        for (p, w) in triangle_rule(element_vertices(space, t)) {
            let (_, g) = loc.field(space, u, p);
            let ge = mms_gradient(p);
            for c in 0..2 {
                for d in 0..2 {
                    e2 += w * (ge[c][d] - g[c][d]).powi(2);
                }
            }
        }
    }
    e2.sqrt()
}

/// Largest absolute entry of `a - b`.
pub fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
