//! Structured meshes, bilinear shape functions and Gauss rules.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementKind {
    Line2,
    Quad4,
}

impl ElementKind {
    pub fn nodes_per_element(self) -> usize {
        match self {
            ElementKind::Line2 => 2,
            ElementKind::Quad4 => 4,
        }
    }
}

/// Nodes, connectivity and named node sets. 1-D meshes keep y = 0.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub kind: ElementKind,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<Vec<usize>>,
    pub node_sets: BTreeMap<String, Vec<usize>>,
}

impl Mesh {
    /// Validates connectivity and element Jacobians
    pub fn new(kind: ElementKind, nodes: Vec<[f64; 2]>, elements: Vec<Vec<usize>>, node_sets: BTreeMap<String, Vec<usize>>) -> Result<Self> {
        let npe = kind.nodes_per_element();
        for (e, conn) in elements.iter().enumerate() {
            if conn.len() != npe || conn.iter().any(|&n| n >= nodes.len()) {
                return Err(Error::InvalidParameter(format!("element {e} has invalid connectivity")));
            }
        }
        for (name, set) in &node_sets {
            if set.iter().any(|&n| n >= nodes.len()) {
                return Err(Error::InvalidParameter(format!("node set {name} references a missing node")));
            }
        }
        let mesh = Mesh { kind, nodes, elements, node_sets };
        mesh.check_jacobians()?;
        Ok(mesh)
    }

    /// Uniform 1-D mesh of `n` elements on (0, length) with sets `left` and `right`
    pub fn line(length: f64, n: usize) -> Result<Self> {
        if n == 0 || !(length > 0.0) {
            return Err(Error::InvalidParameter("line mesh needs n > 0 and a positive length".into()));
        }
        let nodes = (0..=n).map(|i| [length * i as f64 / n as f64, 0.0]).collect();
        let elements = (0..n).map(|e| vec![e, e + 1]).collect();
        let sets = BTreeMap::from([("left".to_string(), vec![0]), ("right".to_string(), vec![n])]);
        Mesh::new(ElementKind::Line2, nodes, elements, sets)
    }

    /// Structured `nx × ny` quad mesh of the rectangle (x0, x0+lx) × (y0, y0+ly)
    /// with sets `left`, `right`, `bottom` and `top`. Nodes are numbered row by
    /// row from the bottom-left corner; elements run counterclockwise.
    pub fn rectangle(origin: [f64; 2], lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || !(lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidParameter("rectangle mesh needs positive sizes and divisions".into()));
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([origin[0] + lx * i as f64 / nx as f64, origin[1] + ly * j as f64 / ny as f64]);
            }
        }
        let mut elements = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                elements.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let sets = BTreeMap::from([
            ("left".to_string(), (0..=ny).map(|j| id(0, j)).collect()),
            ("right".to_string(), (0..=ny).map(|j| id(nx, j)).collect()),
            ("bottom".to_string(), (0..=nx).map(|i| id(i, 0)).collect()),
            ("top".to_string(), (0..=nx).map(|i| id(i, ny)).collect()),
        ]);
        Mesh::new(ElementKind::Quad4, nodes, elements, sets)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn node_set(&self, name: &str) -> Result<&[usize]> {
        self.node_sets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown node set {name}")))
    }

    pub fn element_coords(&self, e: usize) -> Vec<[f64; 2]> {
        self.elements[e].iter().map(|&n| self.nodes[n]).collect()
    }

    pub fn element_center(&self, e: usize) -> [f64; 2] {
        let c = self.element_coords(e);
        let n = c.len() as f64;
        [c.iter().map(|p| p[0]).sum::<f64>() / n, c.iter().map(|p| p[1]).sum::<f64>() / n]
    }

    /// Nearest node to `x` within `tol`
    pub fn node_at(&self, x: [f64; 2], tol: f64) -> Option<usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p[0] - x[0]).hypot(p[1] - x[1])))
            .filter(|&(_, d)| d <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Fails with the element id if any quadrature point has det J ≤ 0
    pub fn check_jacobians(&self) -> Result<()> {
        for e in 0..self.n_elements() {
            let c = self.element_coords(e);
            match self.kind {
                ElementKind::Line2 => {
                    if !(c[1][0] > c[0][0]) {
                        return Err(Error::NonPositiveJacobian(format!("element {e}")));
                    }
                }
                ElementKind::Quad4 => {
                    let xy: [[f64; 2]; 4] = [c[0], c[1], c[2], c[3]];
                    for qp in quad_rule(2) {
                        quad4_eval(&xy, qp.xi).map_err(|_| Error::NonPositiveJacobian(format!("element {e}")))?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Gauss-Legendre points and weights on (−1, 1)
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    match n {
        1 => vec![(0.0, 2.0)],
        2 => {
            let a = 1.0 / 3f64.sqrt();
            vec![(-a, 1.0), (a, 1.0)]
        }
        3 => {
            let a = (0.6f64).sqrt();
            vec![(-a, 5.0 / 9.0), (0.0, 8.0 / 9.0), (a, 5.0 / 9.0)]
        }
        _ => panic!("Gauss rule with {n} points is not tabulated"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadPoint {
    pub xi: [f64; 2],
    pub weight: f64,
}

/// Tensor-product Gauss rule with `n × n` points on the reference square
pub fn quad_rule(n: usize) -> Vec<QuadPoint> {
    let g = gauss_legendre(n);
    let mut out = Vec::with_capacity(n * n);
    for &(eta, wy) in &g {
        for &(xi, wx) in &g {
            out.push(QuadPoint { xi: [xi, eta], weight: wx * wy });
        }
    }
    out
}

const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Bilinear shape functions and their natural derivatives
pub fn quad4_shape(xi: [f64; 2]) -> ([f64; 4], [[f64; 2]; 4]) {
    let mut n = [0.0; 4];
    let mut dn = [[0.0; 2]; 4];
    for (a, c) in CORNERS.iter().enumerate() {
        n[a] = 0.25 * (1.0 + c[0] * xi[0]) * (1.0 + c[1] * xi[1]);
        dn[a] = [0.25 * c[0] * (1.0 + c[1] * xi[1]), 0.25 * c[1] * (1.0 + c[0] * xi[0])];
    }
    (n, dn)
}

/// Shape data at a point of a bilinear element
#[derive(Clone, Copy, Debug)]
pub struct ShapeEval {
    pub n: [f64; 4],
    /// Physical gradients ∂N_a/∂X_i
    pub dn: [[f64; 2]; 4],
    pub det_j: f64,
    /// J_ij = ∂X_i/∂ξ_j
    pub jac: [[f64; 2]; 2],
}

pub fn quad4_eval(coords: &[[f64; 2]; 4], xi: [f64; 2]) -> Result<ShapeEval> {
    let (n, dnx) = quad4_shape(xi);
    let mut jac = [[0.0; 2]; 2];
    for a in 0..4 {
        for i in 0..2 {
            for j in 0..2 {
                jac[i][j] += coords[a][i] * dnx[a][j];
            }
        }
    }
    let det_j = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    if !(det_j > 0.0) {
        return Err(Error::NonPositiveJacobian(format!("det J = {det_j:e}")));
    }
    let inv = [[jac[1][1] / det_j, -jac[0][1] / det_j], [-jac[1][0] / det_j, jac[0][0] / det_j]];
    let mut dn = [[0.0; 2]; 4];
    for a in 0..4 {
        for i in 0..2 {
            dn[a][i] = dnx[a][0] * inv[0][i] + dnx[a][1] * inv[1][i];
        }
    }
    Ok(ShapeEval { n, dn, det_j, jac })
}
