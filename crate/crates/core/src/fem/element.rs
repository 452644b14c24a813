//! Reference-triangle quadrature and the quadratic/linear Lagrange bases in
//! barycentric coordinates.

/// A quadrature point: barycentric coordinates and a weight normalized so
/// that the weights sum to one (multiply by the element area).
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// Seven-point rule, exact for polynomials of total degree 5.
pub fn degree5_rule() -> [QuadPoint; 7] {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let b1 = (9.0 + 2.0 * s15) / 21.0;
    let a2 = (6.0 + s15) / 21.0;
    let b2 = (9.0 - 2.0 * s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    let w2 = (155.0 + s15) / 1200.0;
    let third = 1.0 / 3.0;
    [
        QuadPoint { bary: [third, third, third], weight: 9.0 / 40.0 },
        QuadPoint { bary: [a1, a1, b1], weight: w1 },
        QuadPoint { bary: [a1, b1, a1], weight: w1 },
        QuadPoint { bary: [b1, a1, a1], weight: w1 },
        QuadPoint { bary: [a2, a2, b2], weight: w2 },
        QuadPoint { bary: [a2, b2, a2], weight: w2 },
        QuadPoint { bary: [b2, a2, a2], weight: w2 },
    ]
}

/// Local edge `k` joins the two vertices other than `k`.
pub const EDGE_VERTICES: [[usize; 2]; 3] = [[1, 2], [2, 0], [0, 1]];

/// Quadratic Lagrange basis values: three vertex functions then three edge
/// functions (edge `k` opposite vertex `k`).
#[inline]
pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
        4.0 * l[0] * l[1],
    ]
}

/// Gradients of the quadratic basis given barycentric gradients.
#[inline]
pub fn p2_gradients(l: [f64; 3], gl: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut g = [[0.0; 2]; 6];
    for i in 0..3 {
        let s = 4.0 * l[i] - 1.0;
        g[i] = [s * gl[i][0], s * gl[i][1]];
    }
    for (k, [i, j]) in EDGE_VERTICES.iter().copied().enumerate() {
        g[3 + k] = [
            4.0 * (l[i] * gl[j][0] + l[j] * gl[i][0]),
            4.0 * (l[i] * gl[j][1] + l[j] * gl[i][1]),
        ];
    }
    g
}

/// Affine element geometry.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub vertices: [[f64; 2]; 3],
    pub area: f64,
    /// Constant gradients of the barycentric coordinates.
    pub grad_bary: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(vertices: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = vertices;
        let (ax, ay) = (p1[0] - p0[0], p1[1] - p0[1]);
        let (bx, by) = (p2[0] - p0[0], p2[1] - p0[1]);
        let det = ax * by - bx * ay;
        // rows of J^{-T}: gradients of lambda_1 and lambda_2
        let g1 = [by / det, -bx / det];
        let g2 = [-ay / det, ax / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        Self {
            vertices,
            area: 0.5 * det,
            grad_bary: [g0, g1, g2],
        }
    }

    pub fn point(&self, l: [f64; 3]) -> [f64; 2] {
        let v = &self.vertices;
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }
}
