//! Boundary conditions, pressure gauge and the direct solve of
//!
//! ```text
//! [ A  B^T ] [u]   [f]
//! [ B   0  ] [p] = [h]
//! ```
//!
//! Dirichlet rows are replaced by identity rows and the matching columns are
//! moved to the right-hand side, so the velocity block stays symmetric. The
//! zero-mean pressure constraint is a single Lagrange multiplier. The
//! factorization is a sparse LU with partial pivoting; its symbolic part is
//! cached across time steps while the constraint set is unchanged.

use std::collections::BTreeMap;

use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::Mat;

use crate::fem_space::FeSpace;
use crate::mesh::BoundaryTag;
use crate::sparse::SparseMatrix;
use crate::{Error, Point, Result, Vector};

/// Tolerance for two prescriptions of one DOF to count as equal.
pub const CONSTRAINT_TOL: f64 = 1e-12;
/// Required relative algebraic residual of an accepted solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SaddleSystem {
    a: SparseMatrix,
    b: SparseMatrix,
    rhs_u: Vec<f64>,
    rhs_p: Vec<f64>,
    constraints: BTreeMap<usize, f64>,
    gauge: Option<Vec<f64>>,
}

/// Diagnostics of one solve.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResidualReport {
    /// `|K x - r| / |r|` of the constrained system.
    pub relative_residual: f64,
    /// `max_p |(B u - h)_p|`, the discrete incompressibility defect.
    pub divergence_residual: f64,
    pub refinement_steps: usize,
    /// Constant removed from the pressure to make its mean exactly zero.
    pub pressure_shift: f64,
    /// Value of the gauge multiplier, zero without gauge.
    pub multiplier: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub report: ResidualReport,
}

impl SaddleSystem {
    /// `a`: velocity x velocity, `b`: pressure x velocity.
    pub fn new(a: SparseMatrix, b: SparseMatrix, rhs_u: Vec<f64>, rhs_p: Vec<f64>) -> Result<Self> {
        let (nu, nu2) = a.shape();
        let (np, nu3) = b.shape();
        if nu != nu2 || nu3 != nu || rhs_u.len() != nu || rhs_p.len() != np {
            return Err(Error::InvalidInput(format!(
                "inconsistent saddle blocks: A {nu}x{nu2}, B {np}x{nu3}, rhs {}+{}",
                rhs_u.len(),
                rhs_p.len()
            )));
        }
        Ok(Self {
            a,
            b,
            rhs_u,
            rhs_p,
            constraints: BTreeMap::new(),
            gauge: None,
        })
    }

    pub fn n_velocity(&self) -> usize {
        self.rhs_u.len()
    }

    pub fn n_pressure(&self) -> usize {
        self.rhs_p.len()
    }

    pub fn constraints(&self) -> &BTreeMap<usize, f64> {
        &self.constraints
    }

    pub fn has_gauge(&self) -> bool {
        self.gauge.is_some()
    }

    pub fn rhs_pressure_mut(&mut self) -> &mut [f64] {
        &mut self.rhs_p
    }

    /// Prescribes one velocity DOF.
    pub fn constrain(&mut self, dof: usize, value: f64) -> Result<()> {
        if dof >= self.n_velocity() {
            return Err(Error::InvalidInput(format!("constrained dof {dof} out of range")));
        }
        if !value.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite boundary value at dof {dof}")));
        }
        match self.constraints.get(&dof) {
            Some(&first) if (first - value).abs() > CONSTRAINT_TOL => Err(Error::ConflictingConstraint {
                dof,
                first,
                second: value,
            }),
            Some(_) => Ok(()),
            None => {
                self.constraints.insert(dof, value);
                Ok(())
            }
        }
    }

    /// Prescribes the nodal values of `g` on every node of `tag` edges.
    pub fn apply_dirichlet<G>(&mut self, space: &FeSpace, tag: BoundaryTag, g: G) -> Result<()>
    where
        G: Fn(&Point) -> Vector,
    {
        for node in space.boundary_nodes(tag) {
            let v = g(&space.node_coords()[node]);
            self.constrain(2 * node, v.x)?;
            self.constrain(2 * node + 1, v.y)?;
        }
        Ok(())
    }

    /// Zero normal velocity on the `Gamma2` edges, which must be axis
    /// aligned.
    pub fn apply_slip(&mut self, space: &FeSpace) -> Result<()> {
        let mesh = space.mesh();
        let mut fixed = Vec::new();
        for edge in mesh.boundary_edges().iter().filter(|e| e.tag == BoundaryTag::Gamma2) {
            let [a, b] = edge.vertices;
            let d = mesh.vertices()[b] - mesh.vertices()[a];
            let scale = d.norm();
            let component = if d.x.abs() <= 1e-12 * scale {
                0
            } else if d.y.abs() <= 1e-12 * scale {
                1
            } else {
                return Err(Error::UnsupportedSlipEdge(a, b));
            };
            for node in space.boundary_edge_nodes(edge) {
                fixed.push(2 * node + component);
            }
        }
        for dof in fixed {
            self.constrain(dof, 0.0)?;
        }
        Ok(())
    }

    /// Zero-mean pressure through one multiplier with weights
    /// `m_p = (1, psi_p)`. Not allowed when the boundary has outflow edges.
    pub fn apply_gauge(&mut self, space: &FeSpace, mean_weights: Vec<f64>) -> Result<()> {
        if space.mesh().has_tag(BoundaryTag::Gamma1) {
            return Err(Error::GaugeWithOutflow(BoundaryTag::Gamma1));
        }
        if mean_weights.len() != self.n_pressure() {
            return Err(Error::InvalidInput("gauge weights do not match the pressure space".into()));
        }
        self.gauge = Some(mean_weights);
        Ok(())
    }

    /// Assembles the constrained system in compressed columns together with
    /// its right-hand side.
    fn build(&self) -> (Csc, Vec<f64>) {
        let nu = self.n_velocity();
        let np = self.n_pressure();
        let n = nu + np + usize::from(self.gauge.is_some());
        let mut rhs = vec![0.0; n];
        rhs[..nu].copy_from_slice(&self.rhs_u);
        rhs[nu..nu + np].copy_from_slice(&self.rhs_p);
        let fixed = |j: usize| self.constraints.get(&j).copied();

        // columns of the full matrix, built column by column: since A is
        // structurally symmetric, column j of A is row j; column j of B^T
        // is row j of B^T = column j of B.
        let bt = transpose(&self.b);
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0usize);
        for j in 0..nu {
            if let Some(g) = fixed(j) {
                // column moves to the right-hand side
                for (i, _) in self.a.row(j) {
                    if fixed(i).is_none() {
                        rhs[i] -= self.a.get(i, j) * g;
                    }
                }
                for &(p, v) in &bt[j] {
                    rhs[nu + p] -= v * g;
                }
                row_idx.push(j);
                values.push(1.0);
            } else {
                for (i, _) in self.a.row(j) {
                    if fixed(i).is_none() {
                        row_idx.push(i);
                        values.push(self.a.get(i, j));
                    }
                }
                for &(p, v) in &bt[j] {
                    row_idx.push(nu + p);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        for p in 0..np {
            for (i, v) in self.b.row(p) {
                if fixed(i).is_none() {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            if let Some(m) = &self.gauge {
                row_idx.push(nu + np);
                values.push(m[p]);
            }
            col_ptr.push(row_idx.len());
        }
        if let Some(m) = &self.gauge {
            for (p, &w) in m.iter().enumerate() {
                row_idx.push(nu + p);
                values.push(w);
            }
            col_ptr.push(row_idx.len());
        }
        for &j in self.constraints.keys() {
            rhs[j] = self.constraints[&j];
        }
        (
            Csc {
                n,
                col_ptr,
                row_idx,
                values,
            },
            rhs,
        )
    }

    pub fn solve(&self, solver: &mut SaddleSolver) -> Result<Solution> {
        if let Some(i) = self.rhs_u.iter().chain(&self.rhs_p).position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite right-hand side entry {i}")));
        }
        let (k, rhs) = self.build();
        let lu = solver.factorize(&k)?;
        let mut x = lu_solve(&lu, &rhs);
        let rhs_norm = norm2(&rhs);
        let relative = |x: &[f64]| {
            let r = residual(&k, x, &rhs);
            (norm2(&r) / if rhs_norm > 0.0 { rhs_norm } else { 1.0 }, r)
        };
        let (mut rel, mut r) = relative(&x);
        let mut steps = 0;
        while rel.is_finite() && rel > 1e-14 && steps < 3 {
            let dx = lu_solve(&lu, &r);
            let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let (rel_new, r_new) = relative(&candidate);
            steps += 1;
            if !(rel_new < rel) {
                break;
            }
            x = candidate;
            rel = rel_new;
            r = r_new;
        }
        if !x.iter().all(|v| v.is_finite()) || !rel.is_finite() {
            return Err(Error::SingularSystem("factorization produced non-finite values".into()));
        }
        if rel > RESIDUAL_TOL {
            return Err(Error::SingularSystem(format!("relative residual {rel:e} exceeds {RESIDUAL_TOL:e}")));
        }
        if solver.fresh {
            // a singular operator can still fit a consistent right-hand side;
            // an unrelated one exposes it
            let probe: Vec<f64> = (0..k.n).map(|i| ((i * 7919 % 1009) as f64 / 1009.0) - 0.5).collect();
            let y = lu_solve(&lu, &probe);
            let pr = norm2(&residual(&k, &y, &probe)) / norm2(&probe);
            if !pr.is_finite() || pr > RESIDUAL_TOL {
                return Err(Error::SingularSystem(format!("operator is singular (probe residual {pr:e})")));
            }
            solver.fresh = false;
        }

        let nu = self.n_velocity();
        let np = self.n_pressure();
        let mut velocity = x[..nu].to_vec();
        for (&j, &g) in &self.constraints {
            velocity[j] = g;
        }
        let mut pressure = x[nu..nu + np].to_vec();
        let multiplier = if self.gauge.is_some() { x[nu + np] } else { 0.0 };
        let mut shift = 0.0;
        if let Some(m) = &self.gauge {
            let area: f64 = m.iter().sum();
            shift = m.iter().zip(&pressure).map(|(w, p)| w * p).sum::<f64>() / area;
            for p in &mut pressure {
                *p -= shift;
            }
        }
        let bu = self.b.matvec(&velocity);
        let divergence_residual = bu.iter().zip(&self.rhs_p).map(|(a, h)| (a - h).abs()).fold(0.0, f64::max);
        Ok(Solution {
            velocity,
            pressure,
            report: ResidualReport {
                relative_residual: rel,
                divergence_residual,
                refinement_steps: steps,
                pressure_shift: shift,
                multiplier,
            },
        })
    }
}

/// Square matrix in compressed sparse columns.
#[derive(Clone, Debug)]
struct Csc {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Rows of `b^T` as lists of `(column, value)`.
fn transpose(b: &SparseMatrix) -> Vec<Vec<(usize, f64)>> {
    let (np, nu) = b.shape();
    let mut out = vec![Vec::new(); nu];
    for p in 0..np {
        for (j, v) in b.row(p) {
            out[j].push((p, v));
        }
    }
    out
}

fn residual(k: &Csc, x: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut r = rhs.to_vec();
    for j in 0..k.n {
        let xj = x[j];
        for idx in k.col_ptr[j]..k.col_ptr[j + 1] {
            r[k.row_idx[idx]] -= k.values[idx] * xj;
        }
    }
    r
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn lu_solve(lu: &Lu<usize, f64>, rhs: &[f64]) -> Vec<f64> {
    use faer::prelude::Solve;
    let mut b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    lu.solve_in_place(b.as_mut());
    (0..rhs.len()).map(|i| b[(i, 0)]).collect()
}

/// Sparse LU with a cached symbolic analysis.
#[derive(Default)]
pub struct SaddleSolver {
    cache: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
    fresh: bool,
    factorizations: usize,
}

impl std::fmt::Debug for SaddleSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SaddleSolver")
            .field("cached", &self.cache.is_some())
            .field("factorizations", &self.factorizations)
            .finish()
    }
}

impl SaddleSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    fn factorize(&mut self, k: &Csc) -> Result<Lu<usize, f64>> {
        let symbolic = SymbolicSparseColMat::new_checked(k.n, k.n, k.col_ptr.clone(), None, k.row_idx.clone());
        let matrix = SparseColMat::new(symbolic, k.values.clone());
        let reuse = matches!(&self.cache, Some((cp, ri, _)) if *cp == k.col_ptr && *ri == k.row_idx);
        if !reuse {
            let sym = SymbolicLu::try_new(matrix.symbolic())
                .map_err(|e| Error::SingularSystem(format!("symbolic analysis failed: {e:?}")))?;
            self.cache = Some((k.col_ptr.clone(), k.row_idx.clone(), sym));
            self.fresh = true;
        }
        let sym = self.cache.as_ref().map(|c| c.2.clone()).expect("symbolic factorization cached");
        self.factorizations += 1;
        Lu::try_new_with_symbolic(sym, matrix.as_ref())
            .map_err(|e| Error::SingularSystem(format!("numeric factorization failed: {e:?}")))
    }
}
