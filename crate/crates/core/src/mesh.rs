//! Conforming triangulations of rectangles with tagged boundary edges.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Point, Result};

/// Kind of boundary condition carried by a boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryTag {
    /// Prescribed velocity.
    Gamma0,
    /// Stress-free outflow.
    Gamma1,
    /// Slip: zero normal velocity, zero tangential stress.
    Gamma2,
}

/// A boundary edge, oriented counterclockwise with respect to its triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
    pub triangle: usize,
    /// Local index of the triangle vertex opposite to this edge.
    pub opposite: usize,
}

/// Result of a successful point location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLocation {
    pub triangle: usize,
    pub barycentric: [f64; 3],
}

/// Barycentric coordinates above `-LOCATE_TOL` count as inside.
pub const LOCATE_TOL: f64 = 1e-12;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Rect {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self { x, y }
    }

    pub fn width(&self) -> f64 {
        self.x.1 - self.x.0
    }

    pub fn height(&self) -> f64 {
        self.y.1 - self.y.0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x.0 && p.x <= self.x.1 && p.y >= self.y.0 && p.y <= self.y.1
    }
}

/// Refinement of the mesh rows around a horizontal line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGrading {
    /// Height of the refined line.
    pub y: f64,
    /// Row spacing on the line.
    pub target_size: f64,
    /// Rate at which the spacing grows with distance from the line,
    /// `d(size)/dy`.
    pub growth: f64,
}

impl LayerGrading {
    pub fn new(y: f64, target_size: f64) -> Self {
        Self {
            y,
            target_size,
            growth: 0.25,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    neighbors: Vec<[Option<usize>; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    vertex_triangles: Vec<Vec<usize>>,
    h_max: f64,
    convex: bool,
}

impl Mesh {
    /// Builds a mesh from counterclockwise triangles. Boundary edges are
    /// found from the connectivity and tagged by `tag_rule(midpoint)`.
    ///
    /// `convex` lets point location stop as soon as a walk leaves through a
    /// boundary edge.
    pub fn new<F>(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, convex: bool, tag_rule: F) -> Result<Self>
    where
        F: Fn(&Point) -> BoundaryTag,
    {
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidInput(format!("triangle {t} references a missing vertex")));
            }
            let area = signed_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if area <= 0.0 {
                return Err(Error::InvalidInput(format!("triangle {t} has non-positive area {area}")));
            }
        }

        let mut edge_owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        let mut neighbors = vec![[None; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for j in 0..3 {
                let (a, b) = (tri[(j + 1) % 3], tri[(j + 2) % 3]);
                let key = (a.min(b), a.max(b));
                if let Some((s, k)) = edge_owner.remove(&key) {
                    neighbors[t][j] = Some(s);
                    neighbors[s][k] = Some(t);
                } else {
                    edge_owner.insert(key, (t, j));
                }
            }
        }

        let mut boundary_edges: Vec<BoundaryEdge> = edge_owner
            .into_values()
            .map(|(t, j)| {
                let tri = triangles[t];
                let vertices_ab = [tri[(j + 1) % 3], tri[(j + 2) % 3]];
                let mid = nalgebra::center(&vertices[vertices_ab[0]], &vertices[vertices_ab[1]]);
                BoundaryEdge {
                    vertices: vertices_ab,
                    tag: tag_rule(&mid),
                    triangle: t,
                    opposite: j,
                }
            })
            .collect();
        boundary_edges.sort_by_key(|e| (e.triangle, e.opposite));

        let mut vertex_triangles = vec![Vec::new(); vertices.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_triangles[v].push(t);
            }
        }

        let h_max = triangles
            .iter()
            .map(|tri| {
                (0..3)
                    .map(|j| (vertices[tri[j]] - vertices[tri[(j + 1) % 3]]).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);

        Ok(Self {
            vertices,
            triangles,
            neighbors,
            boundary_edges,
            vertex_triangles,
            h_max,
            convex,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Neighbor `j` of a triangle shares the edge opposite its vertex `j`.
    pub fn neighbors(&self) -> &[[Option<usize>; 3]] {
        &self.neighbors
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn has_tag(&self, tag: BoundaryTag) -> bool {
        self.boundary_edges.iter().any(|e| e.tag == tag)
    }

    /// Physical point with barycentric coordinates `l` in triangle `t`.
    pub fn point_at(&self, t: usize, l: &[f64; 3]) -> Point {
        let [a, b, c] = self.triangle_points(t);
        Point::from(a.coords * l[0] + b.coords * l[1] + c.coords * l[2])
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`, each
    /// computed from its own sub-triangle.
    pub fn barycentric(&self, t: usize, p: &Point) -> [f64; 3] {
        let [a, b, c] = self.triangle_points(t);
        let det = cross(&(b - a), &(c - a));
        [
            cross(&(b - p), &(c - p)) / det,
            cross(&(c - p), &(a - p)) / det,
            cross(&(a - p), &(b - p)) / det,
        ]
    }

    /// Finds the triangle containing `p`, walking from `hint` and falling
    /// back to an exhaustive scan. Points on shared edges or vertices
    /// resolve to the lowest-index triangle containing them.
    pub fn locate_point(&self, p: &Point, hint: Option<usize>) -> Option<PointLocation> {
        if self.triangles.is_empty() {
            return None;
        }
        let mut t = hint.filter(|&h| h < self.triangles.len()).unwrap_or(0);
        let max_steps = self.triangles.len() + 2;
        for _ in 0..max_steps {
            let l = self.barycentric(t, p);
            let (j, lmin) = argmin3(&l);
            if lmin >= -LOCATE_TOL {
                return Some(self.resolve_ties(t, p, l));
            }
            match self.neighbors[t][j] {
                Some(n) => t = n,
                None if self.convex => return None,
                None => break,
            }
        }
        self.locate_exhaustive(p)
    }

    /// Linear scan over all triangles; the first hit is the lowest index.
    pub fn locate_exhaustive(&self, p: &Point) -> Option<PointLocation> {
        (0..self.triangles.len()).find_map(|t| {
            let l = self.barycentric(t, p);
            (argmin3(&l).1 >= -LOCATE_TOL).then(|| PointLocation {
                triangle: t,
                barycentric: clamp_barycentric(l),
            })
        })
    }

    fn resolve_ties(&self, t: usize, p: &Point, l: [f64; 3]) -> PointLocation {
        if argmin3(&l).1 > LOCATE_TOL {
            return PointLocation {
                triangle: t,
                barycentric: clamp_barycentric(l),
            };
        }
        // on an edge or vertex: every triangle containing p shares a vertex
        // with t whose barycentric coordinate is not small
        let tri = self.triangles[t];
        let mut best = (t, l);
        for (k, &v) in tri.iter().enumerate() {
            if l[k] <= LOCATE_TOL {
                continue;
            }
            for &s in &self.vertex_triangles[v] {
                if s < best.0 {
                    let ls = self.barycentric(s, p);
                    if argmin3(&ls).1 >= -LOCATE_TOL {
                        best = (s, ls);
                    }
                }
            }
        }
        PointLocation {
            triangle: best.0,
            barycentric: clamp_barycentric(best.1),
        }
    }

    /// First crossing of the segment `[from, to]` with the boundary and
    /// the tag of the crossed edge. `from` must lie in the closed domain
    /// and `to` outside it.
    pub fn boundary_exit_point(&self, from: &Point, to: &Point) -> Result<(Point, BoundaryTag)> {
        let d = to - from;
        if d.norm() == 0.0 {
            return Err(Error::InvalidInput("degenerate segment: from == to".into()));
        }
        if self.locate_point(from, None).is_none() {
            return Err(Error::InvalidInput(format!("segment start ({}, {}) is outside the domain", from.x, from.y)));
        }
        if self.locate_point(to, None).is_some() {
            return Err(Error::InvalidInput(format!("segment end ({}, {}) is inside the domain", to.x, to.y)));
        }
        let tol = 1e-12;
        let mut best: Option<(f64, BoundaryTag)> = None;
        for edge in &self.boundary_edges {
            let a = self.vertices[edge.vertices[0]];
            let e = self.vertices[edge.vertices[1]] - a;
            let denom = cross(&d, &e);
            if denom.abs() <= f64::EPSILON * d.norm() * e.norm() {
                continue;
            }
            let s = cross(&(a - from), &e) / denom;
            let r = cross(&(a - from), &d) / denom;
            if !(-tol..=1.0 + tol).contains(&s) || !(-tol..=1.0 + tol).contains(&r) {
                continue;
            }
            if best.is_none_or(|(sb, _)| s < sb - f64::EPSILON) {
                best = Some((s, edge.tag));
            }
        }
        let (mut s, tag) = best.ok_or_else(|| Error::InvalidInput("segment does not cross the boundary".into()))?;
        s = s.clamp(0.0, 1.0);
        let mut point = from + d * s;
        // tangent or round-off crossings: nudge back toward `from`
        let mut nudge = 1e-12;
        while self.locate_point(&point, None).is_none() && s > 0.0 {
            s = (s - nudge).max(0.0);
            point = from + d * s;
            nudge *= 2.0;
        }
        Ok((point, tag))
    }

    /// Smallest spacing between vertices on mesh edges touching the line
    /// `y = line_y`.
    pub fn min_edge_length_near(&self, line_y: f64, band: f64) -> f64 {
        let mut best = f64::INFINITY;
        for tri in &self.triangles {
            for j in 0..3 {
                let (a, b) = (self.vertices[tri[j]], self.vertices[tri[(j + 1) % 3]]);
                if (a.y - line_y).abs() <= band || (b.y - line_y).abs() <= band {
                    best = best.min((a - b).norm());
                }
            }
        }
        best
    }
}

/// Structured triangulation of `x_extent x y_extent`.
///
/// The cell size is the longer side divided by `n_divisions`; each cell is
/// split along a diagonal whose direction alternates in a checkerboard
/// pattern. With `grading`, the rows are concentrated around the given
/// line by a monotone map whose spacing is `target_size` on the line and
/// grows linearly with distance until it reaches the cell size.
pub fn generate_rect_mesh<F>(
    x_extent: (f64, f64),
    y_extent: (f64, f64),
    n_divisions: usize,
    grading: Option<&LayerGrading>,
    tag_rule: F,
) -> Result<Mesh>
where
    F: Fn(&Point) -> BoundaryTag,
{
    for &(lo, hi) in &[x_extent, y_extent] {
        if !(hi - lo).is_finite() || hi - lo <= 0.0 {
            return Err(Error::DegenerateExtent(lo, hi));
        }
    }
    if n_divisions < 2 {
        return Err(Error::InvalidInput(format!("n_divisions must be at least 2, got {n_divisions}")));
    }
    let (lx, ly) = (x_extent.1 - x_extent.0, y_extent.1 - y_extent.0);
    let cell = lx.max(ly) / n_divisions as f64;
    let nx = ((lx / cell).round() as usize).max(1);
    let xs = uniform_nodes(x_extent, nx);
    let ys = match grading {
        None => uniform_nodes(y_extent, ((ly / cell).round() as usize).max(1)),
        Some(g) => graded_nodes(y_extent, cell, g)?,
    };
    let ny = ys.len() - 1;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for &y in &ys {
        for &x in &xs {
            vertices.push(Point::new(x, y));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }
    Mesh::new(vertices, triangles, true, tag_rule)
}

fn uniform_nodes((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| if i == n { hi } else { lo + (hi - lo) * i as f64 / n as f64 })
        .collect()
}

/// Node placement from the spacing function `s(y) = min(h, t + g |y - y0|)`:
/// the count of rows on each side of `y0` is the rounded-up integral of
/// `1 / s`, and nodes sit at equal increments of that integral. `y0` itself
/// is always a node.
fn graded_nodes((lo, hi): (f64, f64), coarse: f64, g: &LayerGrading) -> Result<Vec<f64>> {
    if !(g.y > lo && g.y < hi) {
        return Err(Error::InvalidInput(format!("graded line y = {} is not inside ({lo}, {hi})", g.y)));
    }
    if !(g.target_size > 0.0 && g.growth > 0.0) {
        return Err(Error::InvalidInput("grading target size and growth must be positive".into()));
    }
    let target = g.target_size.min(coarse);
    // cumulative integral of 1/s from the line outwards, in closed form
    let knee = (coarse - target) / g.growth;
    let density_integral = |dist: f64| {
        if dist <= knee {
            ((target + g.growth * dist) / target).ln() / g.growth
        } else {
            (coarse / target).ln() / g.growth + (dist - knee) / coarse
        }
    };
    let inverse = |value: f64| {
        let at_knee = (coarse / target).ln() / g.growth;
        if value <= at_knee {
            target * ((g.growth * value).exp() - 1.0) / g.growth
        } else {
            knee + (value - at_knee) * coarse
        }
    };
    let side = |length: f64| -> Vec<f64> {
        let total = density_integral(length);
        let n = (total.ceil() as usize).max(1);
        (0..=n)
            .map(|i| if i == n { length } else { inverse(total * i as f64 / n as f64) })
            .collect()
    };
    let below = side(g.y - lo);
    let above = side(hi - g.y);
    let mut ys: Vec<f64> = below.iter().rev().map(|d| if *d == g.y - lo { lo } else { g.y - d }).collect();
    ys.extend(above.iter().skip(1).map(|d| if *d == hi - g.y { hi } else { g.y + d }));
    Ok(ys)
}

pub(crate) fn signed_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * cross(&(b - a), &(c - a))
}

pub(crate) fn cross(a: &crate::Vector, b: &crate::Vector) -> f64 {
    a.x * b.y - a.y * b.x
}

fn argmin3(l: &[f64; 3]) -> (usize, f64) {
    let mut j = 0;
    for k in 1..3 {
        if l[k] < l[j] {
            j = k;
        }
    }
    (j, l[j])
}

fn clamp_barycentric(l: [f64; 3]) -> [f64; 3] {
    let c = l.map(|v| v.max(0.0));
    let s: f64 = c.iter().sum();
    c.map(|v| v / s)
}

/// Tag rule putting every boundary edge in `Gamma0`.
pub fn all_dirichlet(_: &Point) -> BoundaryTag {
    BoundaryTag::Gamma0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::QuadratureRule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit_square(n: usize) -> Mesh {
        generate_rect_mesh((0.0, 1.0), (0.0, 1.0), n, None, all_dirichlet).unwrap()
    }

    #[test]
    fn pi_square_counts() {
        let mesh = generate_rect_mesh((0.0, PI), (0.0, PI), 4, None, all_dirichlet).unwrap();
        assert_eq!(mesh.n_triangles(), 32);
        assert!((mesh.h_max() - 2f64.sqrt() * PI / 4.0).abs() < 1e-14);
        assert_eq!(mesh.boundary_edges().len(), 16);
    }

    #[test]
    fn tiling_and_orientation() {
        let mesh = unit_square(2);
        assert!((mesh.total_area() - 1.0).abs() < 1e-12);
        for t in 0..mesh.n_triangles() {
            assert!(mesh.triangle_area(t) > 0.0);
        }
    }

    #[test]
    fn neighbors_are_symmetric() {
        let mesh = generate_rect_mesh((0.0, 3.0), (0.0, 1.0), 12, Some(&LayerGrading::new(0.5, 1.0 / 90.0)), all_dirichlet).unwrap();
        for (t, nb) in mesh.neighbors().iter().enumerate() {
            for s in nb.iter().flatten() {
                assert!(mesh.neighbors()[*s].contains(&Some(t)));
            }
        }
        let boundary_count = mesh.neighbors().iter().flatten().filter(|n| n.is_none()).count();
        assert_eq!(boundary_count, mesh.boundary_edges().len());
    }

    #[test]
    fn graded_mesh_hits_target_size() {
        let mesh = generate_rect_mesh((0.0, 3.0), (0.0, 1.0), 120, Some(&LayerGrading::new(0.5, 1.0 / 720.0)), all_dirichlet).unwrap();
        let size = mesh.min_edge_length_near(0.5, 1e-12);
        assert!((1.0 / 1440.0..=1.0 / 360.0).contains(&size), "size {size}");
        let uniform = generate_rect_mesh((0.0, 3.0), (0.0, 1.0), 120, None, all_dirichlet).unwrap();
        assert!((mesh.total_area() - uniform.total_area()).abs() <= 1e-12 * 3.0);
        assert!((mesh.total_area() - 3.0).abs() <= 1e-12 * 3.0);
    }

    #[test]
    fn graded_rows_are_monotone() {
        let mesh = generate_rect_mesh((0.0, 1.0), (0.0, 1.0), 10, Some(&LayerGrading::new(0.3, 0.005)), all_dirichlet).unwrap();
        let mut ys: Vec<f64> = mesh.vertices().iter().map(|p| p.y).collect();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        assert!(ys.windows(2).all(|w| w[1] > w[0]));
        assert!(ys.contains(&0.3));
        assert_eq!(ys[0], 0.0);
        assert_eq!(*ys.last().unwrap(), 1.0);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(matches!(
            generate_rect_mesh((1.0, 1.0), (0.0, 1.0), 4, None, all_dirichlet),
            Err(Error::DegenerateExtent(..))
        ));
        assert!(generate_rect_mesh((0.0, 1.0), (0.0, 1.0), 1, None, all_dirichlet).is_err());
    }

    #[test]
    fn tag_rule_applies_to_midpoints() {
        let mesh = generate_rect_mesh((0.0, 3.0), (0.0, 1.0), 6, None, |p: &Point| {
            if (p.x - 3.0).abs() < 1e-12 {
                BoundaryTag::Gamma1
            } else {
                BoundaryTag::Gamma0
            }
        })
        .unwrap();
        let outflow = mesh.boundary_edges().iter().filter(|e| e.tag == BoundaryTag::Gamma1).count();
        assert_eq!(outflow, 2);
        assert_eq!(mesh.boundary_edges().len(), 2 * (6 + 2));
    }

    #[test]
    fn centroid_and_vertex_location() {
        let mesh = unit_square(4);
        let c = mesh.point_at(0, &[1.0 / 3.0; 3]);
        let loc = mesh.locate_point(&c, Some(17)).unwrap();
        assert_eq!(loc.triangle, 0);
        for l in loc.barycentric {
            assert!((l - 1.0 / 3.0).abs() < 1e-12);
        }
        // interior vertex (0.5, 0.5) is shared by several triangles
        let v = Point::new(0.5, 0.5);
        let lowest = (0..mesh.n_triangles())
            .filter(|&t| mesh.triangles()[t].iter().any(|&i| mesh.vertices()[i] == v))
            .min()
            .unwrap();
        for hint in 0..mesh.n_triangles() {
            assert_eq!(mesh.locate_point(&v, Some(hint)).unwrap().triangle, lowest);
        }
        assert!(mesh.locate_point(&Point::new(-0.1, 0.5), None).is_none());
    }

    #[test]
    fn walking_agrees_with_exhaustive_search() {
        let mesh = generate_rect_mesh((0.0, 3.0), (0.0, 1.0), 30, Some(&LayerGrading::new(0.5, 1.0 / 240.0)), all_dirichlet).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = Point::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..1.0));
            let hint = rng.gen_range(0..mesh.n_triangles());
            let walk = mesh.locate_point(&p, Some(hint)).unwrap();
            let scan = mesh.locate_exhaustive(&p).unwrap();
            assert_eq!(walk.triangle, scan.triangle);
            let s: f64 = walk.barycentric.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(walk.barycentric.iter().all(|&l| l >= -1e-12));
        }
    }

    #[test]
    fn quadrature_points_locate_to_their_triangle() {
        let mesh = unit_square(6);
        let rule = QuadratureRule::degree5();
        for t in 0..mesh.n_triangles() {
            for l in rule.points() {
                let p = mesh.point_at(t, l);
                assert_eq!(mesh.locate_point(&p, None).unwrap().triangle, t);
            }
        }
    }

    #[test]
    fn boundary_exit_points() {
        let mesh = generate_rect_mesh((0.0, 3.0), (0.0, 1.0), 12, None, |p: &Point| {
            if p.y > 1.0 - 1e-12 {
                BoundaryTag::Gamma2
            } else {
                BoundaryTag::Gamma0
            }
        })
        .unwrap();
        let (p, tag) = mesh.boundary_exit_point(&Point::new(0.05, 0.5), &Point::new(-0.05, 0.5)).unwrap();
        assert!((p - Point::new(0.0, 0.5)).norm() < 1e-12);
        assert_eq!(tag, BoundaryTag::Gamma0);
        let (p, tag) = mesh.boundary_exit_point(&Point::new(0.5, 0.5), &Point::new(0.5, 1.5)).unwrap();
        assert!((p - Point::new(0.5, 1.0)).norm() < 1e-12);
        assert_eq!(tag, BoundaryTag::Gamma2);
        let q = Point::new(0.5, 0.5);
        assert!(mesh.boundary_exit_point(&q, &q).is_err());
    }

    #[test]
    fn exit_points_stay_in_closed_domain() {
        let mesh = unit_square(8);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let from = Point::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let to = from + crate::Vector::new(angle.cos(), angle.sin()) * 2.0;
            let (p, _) = mesh.boundary_exit_point(&from, &to).unwrap();
            assert!(mesh.locate_point(&p, None).is_some());
        }
    }
}
