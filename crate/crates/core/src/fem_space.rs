//! Continuous P2 (vector) and P1 (scalar) Lagrange spaces on triangles.
//!
//! Node numbering: mesh vertices first, then edge midpoints in order of first
//! appearance when scanning the triangles (edges keyed by their sorted vertex
//! pair). Local P2 node order is `[v0, v1, v2, m01, m12, m20]`. Vector DOFs
//! are interleaved per node: `dof = 2 * node + component`.

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::Arc;

use crate::mesh::{Mesh, PointLocation};
use crate::par::{map_range, Execution};
use crate::quadrature::QuadratureRule;
use crate::{Error, Point, Result, Tensor, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    P2Vector,
    P1Scalar,
}

impl SpaceKind {
    pub fn nodes_per_element(self) -> usize {
        match self {
            SpaceKind::P2Vector => 6,
            SpaceKind::P1Scalar => 3,
        }
    }

    pub fn components(self) -> usize {
        match self {
            SpaceKind::P2Vector => 2,
            SpaceKind::P1Scalar => 1,
        }
    }
}

/// DOF layout of a Lagrange space over a mesh.
#[derive(Debug)]
pub struct FeSpace {
    kind: SpaceKind,
    mesh: Arc<Mesh>,
    element_nodes: Vec<usize>,
    node_coords: Vec<Point>,
    /// Vertex pairs of the edges carrying midpoint nodes (P2 only).
    edges: Vec<[usize; 2]>,
    edge_ids: HashMap<(usize, usize), usize>,
}

impl FeSpace {
    pub fn p2_vector(mesh: Arc<Mesh>) -> Arc<Self> {
        let nv = mesh.n_vertices();
        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut element_nodes = Vec::with_capacity(6 * mesh.n_triangles());
        for tri in mesh.triangles() {
            element_nodes.extend_from_slice(tri);
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                let key = (a.min(b), a.max(b));
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edges.len() - 1
                });
                element_nodes.push(nv + id);
            }
        }
        let mut node_coords = mesh.vertices().to_vec();
        node_coords.extend(edges.iter().map(|[a, b]| nalgebra::center(&mesh.vertices()[*a], &mesh.vertices()[*b])));
        Arc::new(Self {
            kind: SpaceKind::P2Vector,
            mesh,
            element_nodes,
            node_coords,
            edges,
            edge_ids,
        })
    }

    pub fn p1_scalar(mesh: Arc<Mesh>) -> Arc<Self> {
        let element_nodes = mesh.triangles().iter().flatten().copied().collect();
        let node_coords = mesh.vertices().to_vec();
        Arc::new(Self {
            kind: SpaceKind::P1Scalar,
            mesh,
            element_nodes,
            node_coords,
            edges: Vec::new(),
            edge_ids: HashMap::new(),
        })
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn dof_count(&self) -> usize {
        self.n_nodes() * self.kind.components()
    }

    pub fn node_coords(&self) -> &[Point] {
        &self.node_coords
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Global node indices of element `e`, in local order.
    pub fn element_nodes(&self, e: usize) -> &[usize] {
        let n = self.kind.nodes_per_element();
        &self.element_nodes[n * e..n * (e + 1)]
    }

    /// Global DOF indices of element `e` (node-major, interleaved components).
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        let c = self.kind.components();
        self.element_nodes(e)
            .iter()
            .flat_map(|&n| (0..c).map(move |k| c * n + k))
            .collect()
    }

    /// P2 node sitting at the midpoint of the mesh edge `(a, b)`.
    pub fn midpoint_node(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_ids
            .get(&(a.min(b), a.max(b)))
            .map(|id| self.mesh.n_vertices() + id)
    }

    /// Nodes on a boundary edge: its two vertices, then the midpoint (P2).
    pub fn boundary_edge_nodes(&self, edge: &crate::mesh::BoundaryEdge) -> Vec<usize> {
        let mut nodes = edge.vertices.to_vec();
        if self.kind == SpaceKind::P2Vector {
            // local midpoint order m01, m12, m20: the edge opposite vertex j
            // is midpoint slot (j + 1) % 3
            nodes.push(self.element_nodes(edge.triangle)[3 + (edge.opposite + 1) % 3]);
        }
        nodes
    }

    /// Sorted nodes lying on boundary edges with the given tag.
    pub fn boundary_nodes(&self, tag: crate::mesh::BoundaryTag) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .mesh
            .boundary_edges()
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| self.boundary_edge_nodes(e))
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }
}

/// Gradients of the barycentric coordinates of a triangle, plus its area.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub area: f64,
    pub grad_lambda: [Vector; 3],
}

impl ElementGeometry {
    pub fn new(mesh: &Mesh, e: usize) -> Self {
        let [a, b, c] = mesh.triangle_points(e);
        let area = mesh.triangle_area(e);
        let s = 1.0 / (2.0 * area);
        Self {
            area,
            grad_lambda: [
                Vector::new(b.y - c.y, c.x - b.x) * s,
                Vector::new(c.y - a.y, a.x - c.x) * s,
                Vector::new(a.y - b.y, b.x - a.x) * s,
            ],
        }
    }
}

/// Reference gradients of the barycentric coordinates with respect to
/// `(xi, eta) = (lambda_1, lambda_2)`.
const REF_GRAD_LAMBDA: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// Values and reference gradients of a basis at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisValues {
    pub values: Vec<f64>,
    pub ref_gradients: Vec<[f64; 2]>,
}

pub fn eval_basis(kind: SpaceKind, l: &[f64; 3]) -> BasisValues {
    match kind {
        SpaceKind::P1Scalar => BasisValues {
            values: l.to_vec(),
            ref_gradients: REF_GRAD_LAMBDA.to_vec(),
        },
        SpaceKind::P2Vector => {
            let g = REF_GRAD_LAMBDA.map(|v| Vector::new(v[0], v[1]));
            let (values, grads) = p2_basis(l, &g);
            BasisValues {
                values: values.to_vec(),
                ref_gradients: grads.iter().map(|v| [v.x, v.y]).collect(),
            }
        }
    }
}

/// Quadratic nodal basis and its gradients given the gradients of the
/// barycentric coordinates (reference or physical).
#[inline]
pub fn p2_basis(l: &[f64; 3], gl: &[Vector; 3]) -> ([f64; 6], [Vector; 6]) {
    let values = [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ];
    let grads = [
        gl[0] * (4.0 * l[0] - 1.0),
        gl[1] * (4.0 * l[1] - 1.0),
        gl[2] * (4.0 * l[2] - 1.0),
        (gl[0] * l[1] + gl[1] * l[0]) * 4.0,
        (gl[1] * l[2] + gl[2] * l[1]) * 4.0,
        (gl[2] * l[0] + gl[0] * l[2]) * 4.0,
    ];
    (values, grads)
}

/// A finite element function: coefficients over a space.
#[derive(Clone, Debug)]
pub struct FeField {
    space: Arc<FeSpace>,
    coefficients: Vec<f64>,
    /// Time the field represents (s), when meaningful.
    pub time: Option<f64>,
}

impl FeField {
    pub fn zeros(space: Arc<FeSpace>) -> Self {
        let coefficients = vec![0.0; space.dof_count()];
        Self {
            space,
            coefficients,
            time: None,
        }
    }

    pub fn from_coefficients(space: Arc<FeSpace>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != space.dof_count() {
            return Err(Error::InvalidInput(format!(
                "coefficient length {} does not match dof count {}",
                coefficients.len(),
                space.dof_count()
            )));
        }
        Ok(Self {
            space,
            coefficients,
            time: None,
        })
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn kind(&self) -> SpaceKind {
        self.space.kind
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    /// Nodal vector of a P2 field.
    pub fn node_vector(&self, node: usize) -> Vector {
        Vector::new(self.coefficients[2 * node], self.coefficients[2 * node + 1])
    }

    /// `a * self + b * other` on the same space.
    pub fn combine(&self, a: f64, other: &FeField, b: f64) -> FeField {
        assert!(Arc::ptr_eq(&self.space, &other.space), "fields live on different spaces");
        let coefficients = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(x, y)| a * x + b * y)
            .collect();
        FeField {
            space: self.space.clone(),
            coefficients,
            time: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coefficients.iter().all(|c| c.is_finite())
    }

    /// Value of a P2 vector field on element `e` at barycentric `l`.
    pub fn vector_in_element(&self, e: usize, l: &[f64; 3]) -> Vector {
        debug_assert_eq!(self.kind(), SpaceKind::P2Vector);
        let nodes = self.space.element_nodes(e);
        let vals = [
            l[0] * (2.0 * l[0] - 1.0),
            l[1] * (2.0 * l[1] - 1.0),
            l[2] * (2.0 * l[2] - 1.0),
            4.0 * l[0] * l[1],
            4.0 * l[1] * l[2],
            4.0 * l[2] * l[0],
        ];
        nodes
            .iter()
            .zip(vals)
            .fold(Vector::zeros(), |acc, (&n, v)| acc + self.node_vector(n) * v)
    }

    /// Value and gradient (`grad[(i, j)] = d u_i / d x_j`) of a P2 field.
    pub fn vector_gradient_in_element(&self, e: usize, l: &[f64; 3], geom: &ElementGeometry) -> (Vector, Tensor) {
        debug_assert_eq!(self.kind(), SpaceKind::P2Vector);
        let nodes = self.space.element_nodes(e);
        let (vals, grads) = p2_basis(l, &geom.grad_lambda);
        let mut u = Vector::zeros();
        let mut g = Tensor::zeros();
        for k in 0..6 {
            let c = self.node_vector(nodes[k]);
            u += c * vals[k];
            g += c * grads[k].transpose();
        }
        (u, g)
    }

    /// Value of a P1 scalar field on element `e` at barycentric `l`.
    pub fn scalar_in_element(&self, e: usize, l: &[f64; 3]) -> f64 {
        debug_assert_eq!(self.kind(), SpaceKind::P1Scalar);
        let nodes = self.space.element_nodes(e);
        (0..3).map(|k| self.coefficients[nodes[k]] * l[k]).sum()
    }

    pub fn scalar_gradient_in_element(&self, e: usize, geom: &ElementGeometry) -> Vector {
        let nodes = self.space.element_nodes(e);
        (0..3).fold(Vector::zeros(), |acc, k| acc + geom.grad_lambda[k] * self.coefficients[nodes[k]])
    }

    pub fn vector_at(&self, loc: &PointLocation) -> Vector {
        self.vector_in_element(loc.triangle, &loc.barycentric)
    }

    pub fn vector_and_gradient_at(&self, loc: &PointLocation) -> (Vector, Tensor) {
        let geom = ElementGeometry::new(self.space.mesh(), loc.triangle);
        self.vector_gradient_in_element(loc.triangle, &loc.barycentric, &geom)
    }

    pub fn scalar_at(&self, loc: &PointLocation) -> f64 {
        self.scalar_in_element(loc.triangle, &loc.barycentric)
    }

    pub fn scalar_and_gradient_at(&self, loc: &PointLocation) -> (f64, Vector) {
        let geom = ElementGeometry::new(self.space.mesh(), loc.triangle);
        (
            self.scalar_in_element(loc.triangle, &loc.barycentric),
            self.scalar_gradient_in_element(loc.triangle, &geom),
        )
    }

    /// Integral of a P1 scalar field.
    pub fn integral(&self) -> f64 {
        debug_assert_eq!(self.kind(), SpaceKind::P1Scalar);
        let mesh = self.space.mesh();
        (0..mesh.n_triangles())
            .map(|e| {
                let nodes = self.space.element_nodes(e);
                mesh.triangle_area(e) * (0..3).map(|k| self.coefficients[nodes[k]]).sum::<f64>() / 3.0
            })
            .sum()
    }
}

/// Nodal interpolant of a vector function on a P2 space.
pub fn interpolate_vector<F>(space: &Arc<FeSpace>, f: F) -> FeField
where
    F: Fn(&Point) -> Vector,
{
    assert_eq!(space.kind(), SpaceKind::P2Vector);
    let mut coefficients = Vec::with_capacity(space.dof_count());
    for p in space.node_coords() {
        let v = f(p);
        coefficients.extend_from_slice(&[v.x, v.y]);
    }
    FeField {
        space: space.clone(),
        coefficients,
        time: None,
    }
}

/// Nodal interpolant of a scalar function on a P1 space.
pub fn interpolate_scalar<F>(space: &Arc<FeSpace>, f: F) -> FeField
where
    F: Fn(&Point) -> f64,
{
    assert_eq!(space.kind(), SpaceKind::P1Scalar);
    let coefficients = space.node_coords().iter().map(f).collect();
    FeField {
        space: space.clone(),
        coefficients,
        time: None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1,
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(NormKind::L2),
            "h1" => Ok(NormKind::H1),
            _ => Err(Error::Unknown {
                what: "norm kind",
                name: s.to_string(),
            }),
        }
    }
}

/// Squared L2 norm of the values and of the gradients.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NormParts {
    pub value_sq: f64,
    pub gradient_sq: f64,
}

impl NormParts {
    pub fn l2(&self) -> f64 {
        self.value_sq.sqrt()
    }

    pub fn h1_seminorm(&self) -> f64 {
        self.gradient_sq.sqrt()
    }

    pub fn h1(&self) -> f64 {
        (self.value_sq + self.gradient_sq).sqrt()
    }

    pub fn get(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::L2 => self.l2(),
            NormKind::H1 => self.h1(),
        }
    }
}

/// Norm pieces of `u_h - u` for a P2 field against an exact value/gradient.
pub fn vector_error_parts<F>(field: &FeField, exact: F, rule: &QuadratureRule, exec: Execution) -> NormParts
where
    F: Fn(&Point) -> (Vector, Tensor) + Sync,
{
    let mesh = field.space().mesh().clone();
    let per_element = map_range(exec, mesh.n_triangles(), |e| {
        let geom = ElementGeometry::new(&mesh, e);
        let mut parts = NormParts::default();
        for (l, w) in rule.iter() {
            let x = mesh.point_at(e, l);
            let (u, g) = field.vector_gradient_in_element(e, l, &geom);
            let (ue, ge) = exact(&x);
            parts.value_sq += w * geom.area * (u - ue).norm_squared();
            parts.gradient_sq += w * geom.area * (g - ge).norm_squared();
        }
        parts
    });
    sum_parts(&per_element)
}

/// Norm pieces of `p_h - p` for a P1 field against an exact value/gradient.
pub fn scalar_error_parts<F>(field: &FeField, exact: F, rule: &QuadratureRule, exec: Execution) -> NormParts
where
    F: Fn(&Point) -> (f64, Vector) + Sync,
{
    let mesh = field.space().mesh().clone();
    let per_element = map_range(exec, mesh.n_triangles(), |e| {
        let geom = ElementGeometry::new(&mesh, e);
        let grad = field.scalar_gradient_in_element(e, &geom);
        let mut parts = NormParts::default();
        for (l, w) in rule.iter() {
            let x = mesh.point_at(e, l);
            let (pe, ge) = exact(&x);
            let p = field.scalar_in_element(e, l);
            parts.value_sq += w * geom.area * (p - pe).powi(2);
            parts.gradient_sq += w * geom.area * (grad - ge).norm_squared();
        }
        parts
    });
    sum_parts(&per_element)
}

/// Norm pieces of a field itself.
pub fn norm_parts(field: &FeField, rule: &QuadratureRule, exec: Execution) -> NormParts {
    match field.kind() {
        SpaceKind::P2Vector => vector_error_parts(field, |_| (Vector::zeros(), Tensor::zeros()), rule, exec),
        SpaceKind::P1Scalar => scalar_error_parts(field, |_| (0.0, Vector::zeros()), rule, exec),
    }
}

pub fn norm(field: &FeField, kind: NormKind, rule: &QuadratureRule) -> f64 {
    norm_parts(field, rule, Execution::default()).get(kind)
}

/// Norm of the difference of two fields on the same space.
pub fn difference_norm(a: &FeField, b: &FeField, kind: NormKind, rule: &QuadratureRule) -> f64 {
    norm(&a.combine(1.0, b, -1.0), kind, rule)
}

fn sum_parts(parts: &[NormParts]) -> NormParts {
    parts.iter().fold(NormParts::default(), |acc, p| NormParts {
        value_sq: acc.value_sq + p.value_sq,
        gradient_sq: acc.gradient_sq + p.gradient_sq,
    })
}
