//! Element-wise assembly of the bilinear forms and right-hand sides.
//!
//! All velocity-velocity matrices share one sparsity pattern so they can be
//! combined value-wise. Element contributions are computed with
//! [`map_range`] and scattered sequentially in element order, which keeps
//! results identical between sequential and parallel execution.

use std::sync::Arc;

use crate::fem_space::{p2_basis, ElementGeometry, FeField, FeSpace};
use crate::mesh::{BoundaryTag, Mesh};
use crate::par::{map_range, Execution};
use crate::porous_media::{forchheimer_coeff, linear_drag_coeff, PhysicalParams, PorosityField};
use crate::quadrature::QuadratureRule;
use crate::sparse::{SparseMatrix, SparsityPattern};
use crate::{Error, Point, Result, Tensor, Vector};

/// Velocity DOFs per element (6 nodes x 2 components).
pub const NV: usize = 12;
/// Pressure DOFs per element.
pub const NP: usize = 3;

/// Elements are processed in chunks of this size to bound the memory held
/// by local matrices.
const CHUNK: usize = 4096;

/// Which variant of the time step is being assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    /// First-order step from `u^0`.
    Initial,
    /// Two-step Adams-Bashforth step.
    General,
}

impl StepKind {
    /// Coefficient of `(u^k, v)` in units of the density.
    pub fn mass_scale(self, tau: f64) -> f64 {
        match self {
            StepKind::Initial => 1.0 / tau,
            StepKind::General => 1.5 / tau,
        }
    }

    /// Coefficient of the composed history term.
    pub fn history_scale(self, tau: f64) -> f64 {
        match self {
            StepKind::Initial => 1.0 / tau,
            StepKind::General => 0.5 / tau,
        }
    }

    /// Number of previous levels the step needs.
    pub fn history_len(self) -> usize {
        match self {
            StepKind::Initial => 1,
            StepKind::General => 2,
        }
    }
}

/// One quadrature point of one element.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub element: usize,
    pub x: Point,
    pub barycentric: [f64; 3],
    /// Quadrature weight times element area.
    pub weight: f64,
    pub phi: f64,
}

/// Known composed term of the material derivative, evaluated at quadrature
/// points.
pub trait MaterialTerm: Sync {
    fn kind(&self) -> StepKind;
    fn value(&self, qp: &QuadPoint) -> Vector;
}

/// Spaces, coefficients and cached quadrature data shared by all forms.
#[derive(Debug)]
pub struct FormContext {
    velocity: Arc<FeSpace>,
    pressure: Arc<FeSpace>,
    porosity: PorosityField,
    params: PhysicalParams,
    rule: QuadratureRule,
    exec: Execution,
    geometry: Vec<ElementGeometry>,
    qp_x: Vec<Point>,
    qp_phi: Vec<f64>,
    qp_linear: Vec<f64>,
    qp_forch: Vec<f64>,
    vv_pattern: Arc<SparsityPattern>,
    vv_map: Vec<u32>,
    pv_pattern: Arc<SparsityPattern>,
    pv_map: Vec<u32>,
}

impl FormContext {
    pub fn new(
        mesh: Arc<Mesh>,
        porosity: PorosityField,
        params: PhysicalParams,
        rule: QuadratureRule,
        exec: Execution,
    ) -> Result<Self> {
        params.validate()?;
        let velocity = FeSpace::p2_vector(mesh.clone());
        let pressure = FeSpace::p1_scalar(mesh.clone());
        let ne = mesh.n_triangles();
        let nq = rule.len();
        let geometry: Vec<ElementGeometry> = (0..ne).map(|e| ElementGeometry::new(&mesh, e)).collect();
        let qp_x: Vec<Point> = (0..ne)
            .flat_map(|e| rule.points().iter().map(move |l| (e, *l)))
            .map(|(e, l)| mesh.point_at(e, &l))
            .collect();
        let qp_phi: Vec<f64> = map_slice_points(exec, &qp_x, |x| porosity.value(x));
        let mut qp_linear = Vec::with_capacity(qp_phi.len());
        let mut qp_forch = Vec::with_capacity(qp_phi.len());
        for &phi in &qp_phi {
            qp_linear.push(linear_drag_coeff(phi, &params)?);
            qp_forch.push(forchheimer_coeff(phi, &params)?);
        }
        debug_assert_eq!(qp_x.len(), ne * nq);

        let nu = velocity.dof_count();
        let np = pressure.dof_count();
        let mut vv_rows = vec![Vec::new(); nu];
        let mut pv_rows = vec![Vec::new(); np];
        let element_dofs: Vec<(Vec<usize>, Vec<usize>)> = (0..ne)
            .map(|e| (velocity.element_dofs(e), pressure.element_dofs(e)))
            .collect();
        for (vd, pd) in &element_dofs {
            for &r in vd {
                vv_rows[r].extend_from_slice(vd);
            }
            for &r in pd {
                pv_rows[r].extend_from_slice(vd);
            }
        }
        let vv_pattern = Arc::new(SparsityPattern::from_rows(nu, vv_rows));
        let pv_pattern = Arc::new(SparsityPattern::from_rows(nu, pv_rows));
        let mut vv_map = Vec::with_capacity(ne * NV * NV);
        let mut pv_map = Vec::with_capacity(ne * NP * NV);
        for (vd, pd) in &element_dofs {
            for &r in vd {
                for &c in vd {
                    vv_map.push(vv_pattern.position(r, c).expect("pattern covers element") as u32);
                }
            }
            for &r in pd {
                for &c in vd {
                    pv_map.push(pv_pattern.position(r, c).expect("pattern covers element") as u32);
                }
            }
        }
        if vv_pattern.nnz() > u32::MAX as usize {
            return Err(Error::InvalidInput("mesh too large for 32-bit pattern positions".into()));
        }

        Ok(Self {
            velocity,
            pressure,
            porosity,
            params,
            rule,
            exec,
            geometry,
            qp_x,
            qp_phi,
            qp_linear,
            qp_forch,
            vv_pattern,
            vv_map,
            pv_pattern,
            pv_map,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.velocity.mesh()
    }

    pub fn velocity_space(&self) -> &Arc<FeSpace> {
        &self.velocity
    }

    pub fn pressure_space(&self) -> &Arc<FeSpace> {
        &self.pressure
    }

    pub fn porosity(&self) -> &PorosityField {
        &self.porosity
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn set_execution(&mut self, exec: Execution) {
        self.exec = exec;
    }

    pub fn geometry(&self, e: usize) -> &ElementGeometry {
        &self.geometry[e]
    }

    pub fn n_elements(&self) -> usize {
        self.geometry.len()
    }

    pub fn quad_point(&self, e: usize, q: usize) -> QuadPoint {
        let i = e * self.rule.len() + q;
        QuadPoint {
            element: e,
            x: self.qp_x[i],
            barycentric: self.rule.points()[q],
            weight: self.rule.weights()[q] * self.geometry[e].area,
            phi: self.qp_phi[i],
        }
    }

    pub fn quad_points(&self, e: usize) -> impl Iterator<Item = QuadPoint> + '_ {
        (0..self.rule.len()).map(move |q| self.quad_point(e, q))
    }

    /// Scatters element matrices into a velocity-velocity matrix.
    fn assemble_vv<F>(&self, local: F) -> SparseMatrix
    where
        F: Fn(usize) -> [[f64; NV]; NV] + Sync + Send,
    {
        let mut out = SparseMatrix::zeros(self.vv_pattern.clone());
        let ne = self.n_elements();
        for start in (0..ne).step_by(CHUNK) {
            let end = (start + CHUNK).min(ne);
            let blocks = map_range(self.exec, end - start, |i| local(start + i));
            let values = out.values_mut();
            for (i, block) in blocks.iter().enumerate() {
                let map = &self.vv_map[(start + i) * NV * NV..(start + i + 1) * NV * NV];
                for a in 0..NV {
                    for b in 0..NV {
                        values[map[a * NV + b] as usize] += block[a][b];
                    }
                }
            }
        }
        out
    }

    /// Scatters element vectors into a velocity vector.
    fn assemble_velocity_vector<F>(&self, local: F) -> Vec<f64>
    where
        F: Fn(usize) -> [f64; NV] + Sync + Send,
    {
        let mut out = vec![0.0; self.velocity.dof_count()];
        let ne = self.n_elements();
        for start in (0..ne).step_by(CHUNK) {
            let end = (start + CHUNK).min(ne);
            let blocks = map_range(self.exec, end - start, |i| local(start + i));
            for (i, block) in blocks.iter().enumerate() {
                for (a, &node) in self.velocity.element_nodes(start + i).iter().enumerate() {
                    out[2 * node] += block[2 * a];
                    out[2 * node + 1] += block[2 * a + 1];
                }
            }
        }
        out
    }

    /// Mass-type matrix `(c u, v)` with a weight per quadrature point.
    fn weighted_mass<W>(&self, weight: W) -> SparseMatrix
    where
        W: Fn(usize, usize) -> f64 + Sync + Send,
    {
        let ref_values: Vec<[f64; 6]> = self
            .rule
            .points()
            .iter()
            .map(|l| p2_basis(l, &[Vector::zeros(); 3]).0)
            .collect();
        self.assemble_vv(|e| {
            let area = self.geometry[e].area;
            let mut s = [[0.0; 6]; 6];
            for (q, vals) in ref_values.iter().enumerate() {
                let c = weight(e, q) * self.rule.weights()[q] * area;
                if c == 0.0 {
                    continue;
                }
                for i in 0..6 {
                    let ci = c * vals[i];
                    for j in 0..6 {
                        s[i][j] += ci * vals[j];
                    }
                }
            }
            expand_scalar_block(&s)
        })
    }

    /// Plain velocity mass matrix `(u, v)`.
    pub fn assemble_mass(&self) -> SparseMatrix {
        self.weighted_mass(|_, _| 1.0)
    }

    /// `a0(u, v) = 2 mu (D(u), D(v))`.
    pub fn assemble_a0(&self) -> SparseMatrix {
        let mu = self.params.mu;
        self.assemble_vv(|e| {
            let geom = &self.geometry[e];
            let mut k = [[0.0; NV]; NV];
            for (l, w) in self.rule.iter() {
                let (_, g) = p2_basis(l, &geom.grad_lambda);
                let c = mu * w * geom.area;
                for i in 0..6 {
                    for j in 0..6 {
                        let dot = g[i].dot(&g[j]);
                        for ci in 0..2 {
                            for dj in 0..2 {
                                let delta = if ci == dj { dot } else { 0.0 };
                                k[2 * i + ci][2 * j + dj] += c * (delta + g[i][dj] * g[j][ci]);
                            }
                        }
                    }
                }
            }
            k
        })
    }

    /// `(grad u, grad v)` for each component, the H1 seminorm Gram matrix.
    pub fn assemble_stiffness(&self) -> SparseMatrix {
        self.assemble_vv(|e| {
            let geom = &self.geometry[e];
            let mut s = [[0.0; 6]; 6];
            for (l, w) in self.rule.iter() {
                let (_, g) = p2_basis(l, &geom.grad_lambda);
                for i in 0..6 {
                    for j in 0..6 {
                        s[i][j] += w * geom.area * g[i].dot(&g[j]);
                    }
                }
            }
            expand_scalar_block(&s)
        })
    }

    /// `b(v, q) = -(div v, q)` as a pressure x velocity matrix.
    pub fn assemble_b(&self) -> SparseMatrix {
        let mut out = SparseMatrix::zeros(self.pv_pattern.clone());
        let locals = map_range(self.exec, self.n_elements(), |e| {
            let geom = &self.geometry[e];
            let mut b = [[0.0; NV]; NP];
            for (l, w) in self.rule.iter() {
                let (_, g) = p2_basis(l, &geom.grad_lambda);
                for p in 0..NP {
                    let c = -w * geom.area * l[p];
                    for j in 0..6 {
                        b[p][2 * j] += c * g[j].x;
                        b[p][2 * j + 1] += c * g[j].y;
                    }
                }
            }
            b
        });
        let values = out.values_mut();
        for (e, b) in locals.iter().enumerate() {
            let map = &self.pv_map[e * NP * NV..(e + 1) * NP * NV];
            for p in 0..NP {
                for j in 0..NV {
                    values[map[p * NV + j] as usize] += b[p][j];
                }
            }
        }
        out
    }

    /// `c0(u, v) = mu (phi / K(phi) u, v)`.
    pub fn assemble_c0(&self) -> SparseMatrix {
        let nq = self.rule.len();
        let mu = self.params.mu;
        self.weighted_mass(|e, q| mu * self.qp_linear[e * nq + q])
    }

    /// `c1(|theta|, u, v) = rho (F(phi) phi |theta| / sqrt(K(phi)) u, v)`.
    pub fn assemble_c1(&self, theta: &FeField) -> SparseMatrix {
        let nq = self.rule.len();
        let rho = self.params.rho;
        self.weighted_mass(|e, q| {
            let forch = self.qp_forch[e * nq + q];
            if forch == 0.0 {
                return 0.0;
            }
            rho * forch * theta.vector_in_element(e, &self.rule.points()[q]).norm()
        })
    }

    /// `(f(t), v)` with `f` evaluated at quadrature points.
    pub fn assemble_load<F>(&self, f: F, t: f64) -> Vec<f64>
    where
        F: Fn(&Point, f64) -> Vector + Sync + Send,
    {
        self.assemble_velocity_vector(|e| {
            let mut b = [0.0; NV];
            for qp in self.quad_points(e) {
                let fx = f(&qp.x, t);
                if fx == Vector::zeros() {
                    continue;
                }
                let (vals, _) = p2_basis(&qp.barycentric, &[Vector::zeros(); 3]);
                for i in 0..6 {
                    b[2 * i] += qp.weight * vals[i] * fx.x;
                    b[2 * i + 1] += qp.weight * vals[i] * fx.y;
                }
            }
            b
        })
    }

    /// Time-derivative part of a step: the density-weighted mass matrix
    /// scaled by `1/tau` or `3/(2 tau)`, and the right-hand side
    /// contribution of the composed history term scaled by `1/tau` or
    /// `1/(2 tau)`.
    pub fn assemble_mass_phi_rhs(
        &self,
        term: &dyn MaterialTerm,
        tau: f64,
        kind: StepKind,
    ) -> Result<(Vec<f64>, SparseMatrix)> {
        if term.kind() != kind {
            return Err(Error::StepKindMismatch {
                expected: kind,
                found: term.kind(),
            });
        }
        let mut mass = self.assemble_mass();
        mass.scale(self.params.rho * kind.mass_scale(tau));
        Ok((self.assemble_history_rhs(term, tau), mass))
    }

    /// Right-hand side part of [`assemble_mass_phi_rhs`](Self::assemble_mass_phi_rhs):
    /// `rho * scale * (term, v)`.
    pub fn assemble_history_rhs(&self, term: &dyn MaterialTerm, tau: f64) -> Vec<f64> {
        let scale = self.params.rho * term.kind().history_scale(tau);
        self.assemble_velocity_vector(|e| {
            let mut b = [0.0; NV];
            for qp in self.quad_points(e) {
                let m = term.value(&qp) * (scale * qp.weight);
                let (vals, _) = p2_basis(&qp.barycentric, &[Vector::zeros(); 3]);
                for i in 0..6 {
                    b[2 * i] += vals[i] * m.x;
                    b[2 * i + 1] += vals[i] * m.y;
                }
            }
            b
        })
    }

    /// Element-wise assembly of an arbitrary velocity vector.
    pub fn assemble_vector<F>(&self, local: F) -> Vec<f64>
    where
        F: Fn(usize) -> [f64; NV] + Sync + Send,
    {
        self.assemble_velocity_vector(local)
    }

    /// Pressure mass vector `m_p = (1, psi_p)`.
    pub fn pressure_mean_weights(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.pressure.dof_count()];
        for e in 0..self.n_elements() {
            let a = self.geometry[e].area / 3.0;
            for &n in self.pressure.element_nodes(e) {
                m[n] += a;
            }
        }
        m
    }

    /// Estimate of the discrete Korn constant: the square root of the
    /// smallest generalized eigenvalue of `a0(u, u) = lambda 2 mu |u|_{H1}^2`
    /// over velocities vanishing on `Gamma0`. Dense, meant for coarse meshes.
    pub fn discrete_korn_estimate(&self) -> Result<f64> {
        let fixed = self.velocity.boundary_nodes(BoundaryTag::Gamma0);
        let n = self.velocity.dof_count();
        let mut free = vec![true; n];
        for node in fixed {
            free[2 * node] = false;
            free[2 * node + 1] = false;
        }
        let index: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        if index.is_empty() {
            return Err(Error::InvalidInput("no free velocity DOFs".into()));
        }
        let a0 = self.assemble_a0().to_dense().select_rows(&index).select_columns(&index);
        let mut gram = self.assemble_mass();
        gram.add_scaled(1.0, &self.assemble_stiffness());
        let gram = gram.to_dense().select_rows(&index).select_columns(&index) * (2.0 * self.params.mu);
        let chol = nalgebra::Cholesky::new(gram)
            .ok_or_else(|| Error::SingularSystem("H1 Gram matrix is not positive definite".into()))?;
        let l = chol.l();
        let linv = l
            .clone()
            .solve_lower_triangular(&nalgebra::DMatrix::identity(index.len(), index.len()))
            .ok_or_else(|| Error::SingularSystem("Cholesky factor is singular".into()))?;
        let c = &linv * a0 * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(c);
        let lambda = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(lambda.max(0.0).sqrt())
    }
}

fn map_slice_points<F>(exec: Execution, xs: &[Point], f: F) -> Vec<f64>
where
    F: Fn(&Point) -> f64 + Sync + Send,
{
    crate::par::map_slice(exec, xs, f)
}

/// Expands a scalar 6x6 block to the interleaved 12x12 vector block.
fn expand_scalar_block(s: &[[f64; 6]; 6]) -> [[f64; NV]; NV] {
    let mut k = [[0.0; NV]; NV];
    for i in 0..6 {
        for j in 0..6 {
            k[2 * i][2 * j] = s[i][j];
            k[2 * i + 1][2 * j + 1] = s[i][j];
        }
    }
    k
}

/// `rho ((u . grad) w, v)` for analytic fields, by quadrature on `mesh`.
/// `grad_w` returns `grad[(i, j)] = d w_i / d x_j`.
pub fn trilinear_a1_quadrature<U, W, V>(mesh: &Mesh, rule: &QuadratureRule, rho: f64, u: U, grad_w: W, v: V) -> f64
where
    U: Fn(&Point) -> Vector + Sync,
    W: Fn(&Point) -> Tensor + Sync,
    V: Fn(&Point) -> Vector + Sync,
{
    let per_element = map_range(Execution::default(), mesh.n_triangles(), |e| {
        let area = mesh.triangle_area(e);
        rule.iter()
            .map(|(l, w)| {
                let x = mesh.point_at(e, l);
                w * area * (grad_w(&x) * u(&x)).dot(&v(&x))
            })
            .sum::<f64>()
    });
    rho * per_element.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem_space::{interpolate_scalar, interpolate_vector};
    use crate::mesh::{all_dirichlet, generate_rect_mesh, Rect};
    use crate::porous_media::BuiltinPorosity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn context(n: usize, phi: f64) -> FormContext {
        let mesh = Arc::new(generate_rect_mesh((0.0, 1.0), (0.0, 1.0), n, None, all_dirichlet).unwrap());
        let porosity = PorosityField::new(
            Arc::new(BuiltinPorosity::Constant { value: phi }),
            Rect::new((0.0, 1.0), (0.0, 1.0)),
        );
        FormContext::new(mesh, porosity, PhysicalParams::default(), QuadratureRule::default(), Execution::default())
            .unwrap()
    }

    fn random_coeffs(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn a0_examples() {
        let ctx = context(4, 1.0);
        let a0 = ctx.assemble_a0();
        let u = interpolate_vector(ctx.velocity_space(), |p| Vector::new(p.x, -p.y));
        let val = a0.quadratic_form(u.coefficients());
        assert!((val - 3.556e-2).abs() < 1e-12, "{val}");
        let c = interpolate_vector(ctx.velocity_space(), |_| Vector::new(0.7, -1.3));
        assert!(a0.quadratic_form(c.coefficients()).abs() < 1e-14);
        assert!(a0.asymmetry() <= 1e-12);
        // rotations are rigid motions too
        let r = interpolate_vector(ctx.velocity_space(), |p| Vector::new(-p.y, p.x));
        assert!(a0.quadratic_form(r.coefficients()).abs() < 1e-13);
    }

    #[test]
    fn b_examples() {
        let ctx = context(4, 1.0);
        let b = ctx.assemble_b();
        let one = interpolate_scalar(ctx.pressure_space(), |_| 1.0);
        let v = interpolate_vector(ctx.velocity_space(), |p| Vector::new(p.x, 0.0));
        let bv = b.matvec(v.coefficients());
        let val: f64 = bv.iter().zip(one.coefficients()).map(|(a, b)| a * b).sum();
        assert!((val + 1.0).abs() < 1e-13);
        // stream function psi = x^2 y + x y^3 / 3 ... take psi = x^2 y - y^3: u = (psi_y, -psi_x)
        let w = interpolate_vector(ctx.velocity_space(), |p| Vector::new(p.x * p.x - 3.0 * p.y * p.y, -2.0 * p.x * p.y));
        assert!(b.matvec(w.coefficients()).iter().all(|r| r.abs() < 1e-12));
        let c = interpolate_vector(ctx.velocity_space(), |_| Vector::new(2.0, 3.0));
        assert!(b.matvec(c.coefficients()).iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn c0_examples() {
        assert_eq!(context(3, 1.0).assemble_c0().max_abs(), 0.0);
        let ctx = context(4, 0.5);
        let c0 = ctx.assemble_c0();
        let u = interpolate_vector(ctx.velocity_space(), |_| Vector::new(1.0, 0.0));
        let expected = 8.89e-3 * 60000.0;
        assert!((c0.quadratic_form(u.coefficients()) - expected).abs() < 1e-9 * expected);
        assert!(c0.asymmetry() <= 1e-12 * c0.max_abs());

        let mass = ctx.assemble_mass();
        let alpha = crate::porous_media::alpha_constant(ctx.porosity(), ctx.params());
        for seed in 0..5 {
            let x = random_coeffs(ctx.velocity_space().dof_count(), seed);
            let lhs = c0.quadratic_form(&x);
            let rhs = ctx.params().mu * alpha * mass.quadratic_form(&x);
            assert!(lhs >= rhs * (1.0 - 1e-12));
        }
    }

    #[test]
    fn c1_examples() {
        let ctx = context(4, 0.5);
        let zero = FeField::zeros(ctx.velocity_space().clone());
        assert_eq!(ctx.assemble_c1(&zero).max_abs(), 0.0);
        let theta = interpolate_vector(ctx.velocity_space(), |_| Vector::new(1.0, 0.0));
        let c1 = ctx.assemble_c1(&theta);
        let val = c1.quadratic_form(theta.coefficients());
        assert!((val - 0.9951 * 70.0).abs() < 1e-10, "{val}");
        let wavy = interpolate_vector(ctx.velocity_space(), |p| Vector::new(p.x.sin(), p.y * p.x - 0.3));
        let c1 = ctx.assemble_c1(&wavy);
        assert!(c1.asymmetry() <= 1e-12 * c1.max_abs());
        for seed in 0..5 {
            let x = random_coeffs(ctx.velocity_space().dof_count(), 100 + seed);
            assert!(c1.quadratic_form(&x) >= 0.0);
        }
    }

    struct Constant(StepKind, Vector);

    impl MaterialTerm for Constant {
        fn kind(&self) -> StepKind {
            self.0
        }
        fn value(&self, _: &QuadPoint) -> Vector {
            self.1
        }
    }

    #[test]
    fn mass_and_history_scaling() {
        let ctx = context(3, 0.5);
        let tau = 0.1;
        let (rhs0, m1) = ctx
            .assemble_mass_phi_rhs(&Constant(StepKind::Initial, Vector::zeros()), tau, StepKind::Initial)
            .unwrap();
        assert!(rhs0.iter().all(|&r| r == 0.0));
        let (_, m2) = ctx
            .assemble_mass_phi_rhs(&Constant(StepKind::General, Vector::zeros()), tau, StepKind::General)
            .unwrap();
        for i in 0..ctx.velocity_space().dof_count() {
            assert!((m2.get(i, i) - 1.5 * m1.get(i, i)).abs() <= 1e-14 * m2.get(i, i));
        }
        let err = ctx.assemble_mass_phi_rhs(&Constant(StepKind::Initial, Vector::zeros()), tau, StepKind::General);
        assert!(matches!(err, Err(Error::StepKindMismatch { .. })));

        // steady uniform state: 3/(2 tau) M u - rhs(3 phi c) = 0
        let c = Vector::new(0.2, -0.1);
        let phi = 0.5;
        let (rhs, m) = ctx
            .assemble_mass_phi_rhs(&Constant(StepKind::General, 3.0 * phi * c), tau, StepKind::General)
            .unwrap();
        let u = interpolate_vector(ctx.velocity_space(), |_| c * phi);
        let mu = m.matvec(u.coefficients());
        let worst = mu.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-14, "{worst}");
    }

    #[test]
    fn load_vector_examples() {
        let ctx = context(4, 1.0);
        assert!(ctx.assemble_load(|_, _| Vector::zeros(), 0.0).iter().all(|&v| v == 0.0));
        let c = Vector::new(1.5, -2.0);
        let load = ctx.assemble_load(move |_, _| c, 0.0);
        let mass = ctx.assemble_mass();
        for i in 0..ctx.velocity_space().dof_count() {
            let row_sum: f64 = mass.row(i).map(|(_, v)| v).sum();
            let expected = row_sum * if i % 2 == 0 { c.x } else { c.y };
            assert!((load[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut ctx = context(6, 0.5);
        let theta = interpolate_vector(ctx.velocity_space(), |p| Vector::new(p.y, p.x * p.x));
        let par = (ctx.assemble_a0(), ctx.assemble_c1(&theta), ctx.assemble_b());
        ctx.set_execution(Execution::Sequential);
        let seq = (ctx.assemble_a0(), ctx.assemble_c1(&theta), ctx.assemble_b());
        assert_eq!(par.0.values(), seq.0.values());
        assert_eq!(par.1.values(), seq.1.values());
        assert_eq!(par.2.values(), seq.2.values());
    }

    #[test]
    fn trilinear_examples() {
        let mesh = generate_rect_mesh((0.0, 1.0), (0.0, 1.0), 4, None, all_dirichlet).unwrap();
        let rule = QuadratureRule::default();
        let v = |p: &Point| Vector::new(p.x, p.y * p.y);
        let grad_w = |p: &Point| Tensor::new(p.y, 1.0, 0.0, p.x);
        assert_eq!(trilinear_a1_quadrature(&mesh, &rule, 1.0, |_| Vector::zeros(), grad_w, v), 0.0);
        assert_eq!(trilinear_a1_quadrature(&mesh, &rule, 1.0, v, |_| Tensor::zeros(), v), 0.0);
        // u = (1, 0), w = (x y, 0): (u.grad) w = (y, 0); int y * x over unit square = 1/4
        let val = trilinear_a1_quadrature(&mesh, &rule, 2.0, |_| Vector::new(1.0, 0.0), |p| Tensor::new(p.y, p.x, 0.0, 0.0), v);
        assert!((val - 0.5).abs() < 1e-14);
    }

    #[test]
    fn korn_estimate_is_positive() {
        let ctx = context(3, 1.0);
        let beta = ctx.discrete_korn_estimate().unwrap();
        assert!(beta > 0.0 && beta < 1.0, "{beta}");
    }
}
