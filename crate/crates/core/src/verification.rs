//! Manufactured solutions, convergence orders, stability monitors and
//! identity checks.
//!
//! The manufactured problem lives on `(0, pi)^2` with the stream function
//! `psi = sin^3 x sin^3 y e^{-2t}`, pressure `p = sin x sin y e^{-2t}` and
//! porosity `phi = [2 + sin(2y/5)] / 3`; its body force is derived in
//! closed form by [`mms_forcing`].

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::assembly::FormContext;
use crate::characteristics::{ab2_bracket, upwind_point, VectorField};
use crate::fem_space::{interpolate_scalar, interpolate_vector, norm_parts, vector_error_parts, ElementGeometry, FeField};
use crate::lg_scheme::{ProblemSetup, Scheme, SchemeOptions, StepDiagnostics, StepObserver};
use crate::mesh::{all_dirichlet, generate_rect_mesh, BoundaryTag, Mesh, Rect};
use crate::par::{map_range, Execution};
use crate::porous_media::{
    alpha_constant, forchheimer_coeff, linear_drag_coeff, validate_hypothesis2, BuiltinPorosity, PhysicalParams,
    Porosity, PorosityField,
};
use crate::quadrature::{GaussLegendre, QuadratureRule};
use crate::saddle_solver::{SaddleSolver, SaddleSystem};
use crate::{Error, Point, Result, Tensor, Vector};

/// The manufactured solution used for convergence studies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MmsCase {
    pub params: PhysicalParams,
    pub t_final: f64,
}

impl Default for MmsCase {
    fn default() -> Self {
        Self {
            params: PhysicalParams::default(),
            t_final: 1.0,
        }
    }
}

impl MmsCase {
    pub const POROSITY: BuiltinPorosity = BuiltinPorosity::MmsSine;

    pub fn domain() -> Rect {
        Rect::new((0.0, PI), (0.0, PI))
    }

    pub fn stream(x: &Point, t: f64) -> f64 {
        (x.x.sin() * x.y.sin()).powi(3) * (-2.0 * t).exp()
    }

    /// `u = (-d psi/dy, d psi/dx)`.
    pub fn velocity(x: &Point, t: f64) -> Vector {
        let (sx, cx) = x.x.sin_cos();
        let (sy, cy) = x.y.sin_cos();
        let e = (-2.0 * t).exp();
        Vector::new(-3.0 * sx.powi(3) * sy * sy * cy * e, 3.0 * sx * sx * cx * sy.powi(3) * e)
    }

    /// `grad[(i, j)] = d u_i / d x_j`.
    pub fn velocity_gradient(x: &Point, t: f64) -> Tensor {
        let (sx, cx) = x.x.sin_cos();
        let (sy, cy) = x.y.sin_cos();
        let e = (-2.0 * t).exp();
        Tensor::new(
            -9.0 * sx * sx * cx * sy * sy * cy * e,
            -3.0 * sx.powi(3) * sy * (2.0 * cy * cy - sy * sy) * e,
            3.0 * sx * sy.powi(3) * (2.0 * cx * cx - sx * sx) * e,
            9.0 * sx * sx * cx * sy * sy * cy * e,
        )
    }

    pub fn velocity_laplacian(x: &Point, t: f64) -> Vector {
        let (sx, cx) = x.x.sin_cos();
        let (sy, cy) = x.y.sin_cos();
        let e = (-2.0 * t).exp();
        let u1_xx = -9.0 * sy * sy * cy * (2.0 * sx * cx * cx - sx.powi(3));
        let u1_yy = -3.0 * sx.powi(3) * (2.0 * cy.powi(3) - 7.0 * sy * sy * cy);
        let u2_xx = 3.0 * sy.powi(3) * (2.0 * cx.powi(3) - 7.0 * sx * sx * cx);
        let u2_yy = 9.0 * sx * sx * cx * (2.0 * sy * cy * cy - sy.powi(3));
        Vector::new(u1_xx + u1_yy, u2_xx + u2_yy) * e
    }

    pub fn pressure(x: &Point, t: f64) -> f64 {
        x.x.sin() * x.y.sin() * (-2.0 * t).exp()
    }

    pub fn pressure_gradient(x: &Point, t: f64) -> Vector {
        let (sx, cx) = x.x.sin_cos();
        let (sy, cy) = x.y.sin_cos();
        Vector::new(cx * sy, sx * cy) * (-2.0 * t).exp()
    }

    pub fn forcing(&self, x: &Point, t: f64) -> Vector {
        mms_forcing(x, t, &self.params, &Self::POROSITY)
    }

    pub fn porosity_field() -> PorosityField {
        PorosityField::new(Arc::new(Self::POROSITY), Self::domain())
    }

    /// All-Dirichlet problem on an `n x n` mesh with `h = tau = pi / n`
    /// and the zero-mean pressure gauge.
    pub fn setup(&self, n: usize) -> Result<ProblemSetup> {
        let domain = Self::domain();
        let mesh = Arc::new(generate_rect_mesh(domain.x, domain.y, n, None, all_dirichlet)?);
        let case = *self;
        Ok(ProblemSetup {
            mesh,
            porosity: Self::porosity_field(),
            params: self.params,
            forcing: Some(Arc::new(move |x: &Point, t: f64| case.forcing(x, t))),
            boundary: Arc::new(Self::velocity),
            initial: Arc::new(|x: &Point| Self::velocity(x, 0.0)),
            t_final: self.t_final,
            tau: PI / n as f64,
            gauge: true,
        })
    }
}

/// Body force making the manufactured fields an exact solution:
/// `f = rho [du/dt + (u . grad)(u / phi)] - mu lap u + grad p - B(u, phi)`.
///
/// The viscous term uses `div(2 D(u)) = lap u`, valid because `u` is
/// solenoidal.
pub fn mms_forcing(x: &Point, t: f64, params: &PhysicalParams, phi: &dyn Porosity) -> Vector {
    let u = MmsCase::velocity(x, t);
    let grad_u = MmsCase::velocity_gradient(x, t);
    let phi_x = phi.value(x);
    let grad_phi = phi.gradient(x);
    let du_dt = -2.0 * u;
    let convection = grad_u * u / phi_x - u * u.dot(&grad_phi) / (phi_x * phi_x);
    let lin = linear_drag_coeff(phi_x, params).expect("manufactured porosity lies in (0, 1]");
    let forch = forchheimer_coeff(phi_x, params).expect("manufactured porosity lies in (0, 1]");
    params.rho * (du_dt + convection) - params.mu * MmsCase::velocity_laplacian(x, t)
        + MmsCase::pressure_gradient(x, t)
        + u * (params.mu * lin + params.rho * forch * u.norm())
}

/// `min_c || p_h - p - c ||_{L2}`.
pub fn l2_error_modulo_constants<F>(field: &FeField, exact: F, rule: &QuadratureRule, exec: Execution) -> f64
where
    F: Fn(&Point) -> f64 + Sync,
{
    let mesh = field.space().mesh().clone();
    let parts = map_range(exec, mesh.n_triangles(), |e| {
        let area = mesh.triangle_area(e);
        let mut acc = [0.0; 3];
        for (l, w) in rule.iter() {
            let d = field.scalar_in_element(e, l) - exact(&mesh.point_at(e, l));
            acc[0] += w * area * d * d;
            acc[1] += w * area * d;
            acc[2] += w * area;
        }
        acc
    });
    let [sq, int, vol] = parts
        .iter()
        .fold([0.0; 3], |a, p| [a[0] + p[0], a[1] + p[1], a[2] + p[2]]);
    (sq - int * int / vol).max(0.0).sqrt()
}

/// One row of a convergence table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EocRecord {
    pub n: usize,
    pub h: f64,
    pub tau: f64,
    pub steps: usize,
    /// `max_n ||u_h^n - u^n||_{H1}`, including `n = 0`.
    pub er1: f64,
    /// `max_n ||p_h^n - p^n||_{L2}` modulo constants, including `n = 0`.
    pub er2: f64,
    pub slope1: Option<f64>,
    pub slope2: Option<f64>,
    /// Errors at the last step `t = N_T tau` alone.
    pub er1_final: f64,
    pub er2_final: f64,
    pub slope1_final: Option<f64>,
    pub slope2_final: Option<f64>,
    pub max_divergence_residual: f64,
    pub seconds: f64,
}

/// `log(e_prev / e_cur) / log(h_prev / h_cur)`.
pub fn eoc_slope(h_prev: f64, e_prev: f64, h_cur: f64, e_cur: f64) -> f64 {
    (e_prev / e_cur).ln() / (h_prev / h_cur).ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EocOptions {
    pub case: MmsCase,
    pub scheme: SchemeOptions,
    /// Quadrature degree for the error norms.
    pub error_degree: usize,
}

impl Default for EocOptions {
    fn default() -> Self {
        Self {
            case: MmsCase::default(),
            scheme: SchemeOptions::default(),
            error_degree: 9,
        }
    }
}

/// Tracks the running maxima of the velocity and pressure errors.
struct ErrorTracker {
    rule: QuadratureRule,
    exec: Execution,
    er1: f64,
    er2: f64,
    last: (f64, f64),
}

impl ErrorTracker {
    fn record(&mut self, u: &FeField, p: &FeField, t: f64) {
        let eu = vector_error_parts(
            u,
            |x| (MmsCase::velocity(x, t), MmsCase::velocity_gradient(x, t)),
            &self.rule,
            self.exec,
        );
        let ep = l2_error_modulo_constants(p, |x| MmsCase::pressure(x, t), &self.rule, self.exec);
        self.er1 = self.er1.max(eu.h1());
        self.er2 = self.er2.max(ep);
        self.last = (eu.h1(), ep);
    }
}

impl StepObserver for ErrorTracker {
    fn on_start(&mut self, u0: &FeField, _p0: &FeField, ctx: &FormContext) -> Result<()> {
        // the scheme never uses p^0, so the interpolant stands in for it
        let p0 = interpolate_scalar(ctx.pressure_space(), |x| MmsCase::pressure(x, 0.0));
        self.record(u0, &p0, 0.0);
        Ok(())
    }

    fn on_step(&mut self, _k: usize, t: f64, u: &FeField, p: &FeField, _diag: &StepDiagnostics) -> Result<()> {
        self.record(u, p, t);
        Ok(())
    }
}

/// Runs the manufactured problem for each `N` with `h = tau = pi / N`.
pub fn run_eoc(n_list: &[usize], options: &EocOptions) -> Result<Vec<EocRecord>> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!("N list must be non-empty and ascending, got {n_list:?}")));
    }
    let rule = QuadratureRule::with_degree(options.error_degree)
        .ok_or_else(|| Error::InvalidInput(format!("no quadrature rule of degree {}", options.error_degree)))?;
    let mut records: Vec<EocRecord> = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let started = Instant::now();
        let setup = options.case.setup(n)?;
        let (tau, steps) = (setup.tau, setup.n_steps());
        let mut scheme = Scheme::new(setup, options.scheme)?;
        let mut tracker = ErrorTracker {
            rule: rule.clone(),
            exec: options.scheme.execution,
            er1: 0.0,
            er2: 0.0,
            last: (0.0, 0.0),
        };
        let summary = scheme.run(&mut [&mut tracker])?;
        let h = PI / n as f64;
        let slope = |f: fn(&EocRecord) -> f64, cur: f64| records.last().map(|prev| eoc_slope(prev.h, f(prev), h, cur));
        let (er1_final, er2_final) = tracker.last;
        records.push(EocRecord {
            n,
            h,
            tau,
            steps,
            er1: tracker.er1,
            er2: tracker.er2,
            slope1: slope(|r| r.er1, tracker.er1),
            slope2: slope(|r| r.er2, tracker.er2),
            er1_final,
            er2_final,
            slope1_final: slope(|r| r.er1_final, er1_final),
            slope2_final: slope(|r| r.er2_final, er2_final),
            max_divergence_residual: summary.max_divergence_residual,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

/// Best-approximation errors of the manufactured fields at `t`: the
/// H1-projection error of `u` onto the P2 space and the L2-projection
/// error of `p` onto the P1 space. Every discrete velocity (pressure) at
/// time `t` is at least this far from the exact one, which bounds `Er1`
/// (`Er2`) from below.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BestApproximation {
    pub n: usize,
    pub t: f64,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
}

pub fn best_approximation(n: usize, t: f64) -> Result<BestApproximation> {
    let domain = MmsCase::domain();
    let mesh = Arc::new(generate_rect_mesh(domain.x, domain.y, n, None, all_dirichlet)?);
    let rule = QuadratureRule::degree9();
    let ctx = FormContext::new(mesh.clone(), MmsCase::porosity_field(), PhysicalParams::default(), rule.clone(), Execution::default())?;
    let exec = ctx.execution();

    let mut gram = ctx.assemble_mass();
    gram.add_scaled(1.0, &ctx.assemble_stiffness());
    let rhs = ctx.assemble_vector(|e| {
        let geom = ctx.geometry(e);
        let mut b = [0.0; crate::assembly::NV];
        for (l, w) in rule.iter() {
            let x = mesh.point_at(e, l);
            let (u, g) = (MmsCase::velocity(&x, t), MmsCase::velocity_gradient(&x, t));
            let (vals, grads) = crate::fem_space::p2_basis(l, &geom.grad_lambda);
            let c = w * geom.area;
            for i in 0..6 {
                for comp in 0..2 {
                    b[2 * i + comp] += c * (u[comp] * vals[i] + g.row(comp).transpose().dot(&grads[i]));
                }
            }
        }
        b
    });
    let diag: Vec<f64> = (0..rhs.len()).map(|i| gram.get(i, i)).collect();
    let coeffs = conjugate_gradient(|x| gram.matvec(x), &diag, &rhs)?;
    let uh = FeField::from_coefficients(ctx.velocity_space().clone(), coeffs)?;
    let velocity_h1 = vector_error_parts(
        &uh,
        |x| (MmsCase::velocity(x, t), MmsCase::velocity_gradient(x, t)),
        &rule,
        exec,
    )
    .h1();

    let space = ctx.pressure_space().clone();
    let np = space.dof_count();
    let mut rhs = vec![0.0; np];
    let mut diag = vec![0.0; np];
    for e in 0..mesh.n_triangles() {
        let area = mesh.triangle_area(e);
        let nodes = space.element_nodes(e);
        for (l, w) in rule.iter() {
            let p = MmsCase::pressure(&mesh.point_at(e, l), t);
            for k in 0..3 {
                rhs[nodes[k]] += w * area * p * l[k];
            }
        }
        for &k in nodes {
            diag[k] += area / 6.0;
        }
    }
    let apply = |x: &[f64]| {
        let mut y = vec![0.0; np];
        for e in 0..mesh.n_triangles() {
            let c = mesh.triangle_area(e) / 12.0;
            let nodes = space.element_nodes(e);
            let sum: f64 = nodes.iter().map(|&k| x[k]).sum();
            for &k in nodes {
                y[k] += c * (sum + x[k]);
            }
        }
        y
    };
    let ph = FeField::from_coefficients(space.clone(), conjugate_gradient(apply, &diag, &rhs)?)?;
    let pressure_l2 = l2_error_modulo_constants(&ph, |x| MmsCase::pressure(x, t), &rule, exec);
    Ok(BestApproximation {
        n,
        t,
        velocity_h1,
        pressure_l2,
    })
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
fn conjugate_gradient<A>(apply: A, diag: &[f64], b: &[f64]) -> Result<Vec<f64>>
where
    A: Fn(&[f64]) -> Vec<f64>,
{
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let target = 1e-14 * dot(b, b).sqrt();
    for _ in 0..10 * n.max(10) {
        if dot(&r, &r).sqrt() <= target {
            return Ok(x);
        }
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = r.iter().zip(diag).map(|(r, d)| r / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SingularSystem("conjugate gradients did not converge".into()))
}

/// Quantities entering the energy inequality at one time level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub k: usize,
    pub t: f64,
    pub velocity_l2: f64,
    pub velocity_h1: f64,
    /// `rho/2 ||u||^2`.
    pub kinetic: f64,
    /// `mu beta0^2 ||u||_{H1}^2`.
    pub dissipation: f64,
    /// `mu alpha ||u||^2`.
    pub drag: f64,
    /// `rho/2 int_{Gamma1} |u|^2 / phi u . n ds`.
    pub outflow_flux: f64,
    pub forcing_l2: f64,
    /// `||f||^2 / (4 mu beta0^2)`.
    pub forcing_budget: f64,
}

/// Outcome of one stability bound, `lhs <= rhs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative on failure.
    pub margin: f64,
    /// Time level with the smallest margin.
    pub worst_k: usize,
    pub pass: bool,
}

impl Verdict {
    fn new(lhs: f64, rhs: f64, worst_k: usize) -> Self {
        Self {
            lhs,
            rhs,
            margin: rhs - lhs,
            worst_k,
            pass: lhs <= rhs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyVerdicts {
    /// `sqrt(rho) max ||u^k|| + sqrt(mu) beta0 ||u||_{L2(H1)}
    /// <= 2 (sqrt(rho) ||u^0|| + ||f||_{L2(L2)} / (sqrt(mu) beta0))`.
    pub uniform: Verdict,
    /// `||u^k|| <= exp(-mu alpha t^k / rho) ||u^0||
    /// + ||f||_{L2(0,t^k;L2)} / (sqrt(2 rho mu) beta0)` for every `k`.
    pub decay: Verdict,
}

struct MonitorState {
    mesh: Arc<Mesh>,
    rule: QuadratureRule,
    exec: Execution,
    porosity: PorosityField,
    params: PhysicalParams,
    alpha: f64,
}

/// Observer recording the energy balance of a run. Time integrals use the
/// trapezoidal rule over the step levels.
pub struct EnergyMonitor {
    beta0: f64,
    forcing: Option<Arc<VectorField>>,
    state: Option<MonitorState>,
    records: Vec<EnergyRecord>,
}

impl std::fmt::Debug for EnergyMonitor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnergyMonitor")
            .field("beta0", &self.beta0)
            .field("records", &self.records.len())
            .finish()
    }
}

impl EnergyMonitor {
    /// `beta0` is a Korn constant estimate, e.g. from
    /// [`FormContext::discrete_korn_estimate`] on a coarse mesh.
    pub fn new(beta0: f64, forcing: Option<Arc<VectorField>>) -> Result<Self> {
        if !(beta0 > 0.0 && beta0.is_finite()) {
            return Err(Error::InvalidInput(format!("Korn constant must be positive, got {beta0}")));
        }
        Ok(Self {
            beta0,
            forcing,
            state: None,
            records: Vec::new(),
        })
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn alpha(&self) -> Option<f64> {
        self.state.as_ref().map(|s| s.alpha)
    }

    pub fn records(&self) -> &[EnergyRecord] {
        &self.records
    }

    fn record(&mut self, k: usize, t: f64, u: &FeField) -> Result<()> {
        let st = self
            .state
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("energy monitor used before on_start".into()))?;
        let parts = norm_parts(u, &st.rule, st.exec);
        let forcing_l2 = match &self.forcing {
            Some(f) => field_l2(&st.mesh, &st.rule, st.exec, |x| f(x, t)),
            None => 0.0,
        };
        let (mu, rho, b2) = (st.params.mu, st.params.rho, self.beta0 * self.beta0);
        self.records.push(EnergyRecord {
            k,
            t,
            velocity_l2: parts.l2(),
            velocity_h1: parts.h1(),
            kinetic: 0.5 * rho * parts.value_sq,
            dissipation: mu * b2 * (parts.value_sq + parts.gradient_sq),
            drag: mu * st.alpha * parts.value_sq,
            outflow_flux: 0.5 * rho * outflow_flux(u, &st.porosity),
            forcing_l2,
            forcing_budget: forcing_l2 * forcing_l2 / (4.0 * mu * b2),
        });
        Ok(())
    }

    /// Evaluates both stability bounds over the recorded levels.
    pub fn verdicts(&self) -> Option<EnergyVerdicts> {
        let st = self.state.as_ref()?;
        let first = self.records.first()?;
        let (mu, rho, beta0) = (st.params.mu, st.params.rho, self.beta0);
        let u0 = first.velocity_l2;

        let mut f_sq = 0.0;
        let mut h1_sq = 0.0;
        let mut max_l2 = u0;
        let mut decay = Verdict::new(u0, u0, first.k);
        for pair in self.records.windows(2) {
            let dt = pair[1].t - pair[0].t;
            f_sq += 0.5 * dt * (pair[0].forcing_l2.powi(2) + pair[1].forcing_l2.powi(2));
            h1_sq += 0.5 * dt * (pair[0].velocity_h1.powi(2) + pair[1].velocity_h1.powi(2));
            let r = &pair[1];
            max_l2 = max_l2.max(r.velocity_l2);
            let bound = (-mu * st.alpha * r.t / rho).exp() * u0 + f_sq.sqrt() / ((2.0 * rho * mu).sqrt() * beta0);
            if bound - r.velocity_l2 < decay.margin {
                decay = Verdict::new(r.velocity_l2, bound, r.k);
            }
        }
        let worst = self
            .records
            .iter()
            .max_by(|a, b| a.velocity_l2.total_cmp(&b.velocity_l2))
            .map_or(0, |r| r.k);
        let uniform = Verdict::new(
            rho.sqrt() * max_l2 + mu.sqrt() * beta0 * h1_sq.sqrt(),
            2.0 * (rho.sqrt() * u0 + f_sq.sqrt() / (mu.sqrt() * beta0)),
            worst,
        );
        Some(EnergyVerdicts { uniform, decay })
    }
}

impl StepObserver for EnergyMonitor {
    fn on_start(&mut self, u0: &FeField, _p0: &FeField, ctx: &FormContext) -> Result<()> {
        self.records.clear();
        self.state = Some(MonitorState {
            mesh: ctx.mesh().clone(),
            rule: ctx.rule().clone(),
            exec: ctx.execution(),
            porosity: ctx.porosity().clone(),
            params: *ctx.params(),
            alpha: alpha_constant(ctx.porosity(), ctx.params()),
        });
        self.record(0, 0.0, u0)
    }

    fn on_step(&mut self, k: usize, t: f64, u: &FeField, _p: &FeField, _diag: &StepDiagnostics) -> Result<()> {
        self.record(k, t, u)
    }
}

fn field_l2<F>(mesh: &Mesh, rule: &QuadratureRule, exec: Execution, f: F) -> f64
where
    F: Fn(&Point) -> Vector + Sync,
{
    map_range(exec, mesh.n_triangles(), |e| {
        let area = mesh.triangle_area(e);
        rule.iter()
            .map(|(l, w)| w * area * f(&mesh.point_at(e, l)).norm_squared())
            .sum::<f64>()
    })
    .iter()
    .sum::<f64>()
    .sqrt()
}

/// Outward unit normal and length of a boundary edge.
fn edge_normal(mesh: &Mesh, a: usize, b: usize) -> (Vector, f64) {
    let d = mesh.vertices()[b] - mesh.vertices()[a];
    let len = d.norm();
    (Vector::new(d.y, -d.x) / len, len)
}

/// `int_{Gamma1} |u|^2 / phi u . n ds` for a P2 field, with a Gauss rule
/// exact for the polynomial part.
pub fn outflow_flux(u: &FeField, phi: &PorosityField) -> f64 {
    let mesh = u.space().mesh();
    let gl = GaussLegendre::new(6);
    let mut total = 0.0;
    for edge in mesh.boundary_edges().iter().filter(|e| e.tag == BoundaryTag::Gamma1) {
        let [a, b] = edge.vertices;
        let (n, len) = edge_normal(mesh, a, b);
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        for (s, w) in gl.iter() {
            let x = pa + (pb - pa) * s;
            let l = mesh.barycentric(edge.triangle, &x);
            let v = u.vector_in_element(edge.triangle, &l);
            total += w * len * v.norm_squared() / phi.value(&x) * v.dot(&n);
        }
    }
    total
}

/// Both sides of `((u . grad)(u / phi), u) = 1/2 int |u|^2/phi u.n ds
/// + 1/2 (|u|^2, (u . grad)(1/phi))` for a solenoidal field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Lemma2Report {
    pub divisions: usize,
    pub degree: usize,
    pub lhs: f64,
    pub boundary_term: f64,
    pub interior_term: f64,
    pub rhs: f64,
    pub absolute: f64,
    /// Sum of the integrals of the absolute values of the three integrands.
    pub magnitude: f64,
    /// `|lhs - rhs| / magnitude`. Both sides can vanish by symmetry while
    /// the integrands do not, so the sides themselves are a poor scale.
    pub relative: f64,
}

/// Evaluates both sides of the convective identity by composite
/// quadrature: a degree-`degree` triangle rule on an `n x n` mesh of the
/// rectangle, and `(degree + 1) / 2 + 1` Gauss points per boundary
/// segment.
pub fn lemma2_identity_check<U, G>(
    u: U,
    grad_u: G,
    phi: &dyn Porosity,
    domain: Rect,
    divisions: usize,
    degree: usize,
) -> Result<Lemma2Report>
where
    U: Fn(&Point) -> Vector + Sync,
    G: Fn(&Point) -> Tensor + Sync,
{
    let rule = QuadratureRule::with_degree(degree)
        .ok_or_else(|| Error::InvalidInput(format!("no quadrature rule of degree {degree}")))?;
    let mesh = generate_rect_mesh(domain.x, domain.y, divisions, None, all_dirichlet)?;
    let sums = map_range(Execution::default(), mesh.n_triangles(), |e| {
        let area = mesh.triangle_area(e);
        let mut acc = [0.0; 3];
        for (l, w) in rule.iter() {
            let x = mesh.point_at(e, l);
            let (v, g) = (u(&x), grad_u(&x));
            let (f, gf) = (phi.value(&x), phi.gradient(&x));
            let along = v.dot(&gf) / (f * f);
            // (u . grad)(u / phi) = (grad u) u / phi - u (u . grad phi) / phi^2
            let left = (g * v).dot(&v) / f - v.norm_squared() * along;
            let right = -0.5 * v.norm_squared() * along;
            acc[0] += w * area * left;
            acc[1] += w * area * right;
            acc[2] += w * area * (left.abs() + right.abs());
        }
        acc
    });
    let lhs: f64 = sums.iter().map(|s| s[0]).sum();
    let interior_term: f64 = sums.iter().map(|s| s[1]).sum();
    let mut magnitude: f64 = sums.iter().map(|s| s[2]).sum();

    let gl = GaussLegendre::new(degree.div_ceil(2) + 1);
    let mut boundary_term = 0.0;
    for edge in mesh.boundary_edges() {
        let [a, b] = edge.vertices;
        let (n, len) = edge_normal(&mesh, a, b);
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        for (s, w) in gl.iter() {
            let x = pa + (pb - pa) * s;
            let v = u(&x);
            let flux = 0.5 * w * len * v.norm_squared() / phi.value(&x) * v.dot(&n);
            boundary_term += flux;
            magnitude += flux.abs();
        }
    }
    let rhs = boundary_term + interior_term;
    let absolute = (lhs - rhs).abs();
    Ok(Lemma2Report {
        divisions,
        degree,
        lhs,
        boundary_term,
        interior_term,
        rhs,
        absolute,
        magnitude,
        relative: if magnitude > 0.0 { absolute / magnitude } else { absolute },
    })
}

/// Observed order of the two-step material derivative.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ab2Report {
    pub taus: Vec<f64>,
    /// Max pointwise error over the sample points, per `tau`.
    pub errors: Vec<f64>,
    /// Orders between consecutive `tau`.
    pub orders: Vec<f64>,
    /// Least-squares slope of `log error` against `log tau`.
    pub fitted_order: f64,
}

/// Compares `(1/2tau)[3 w^k - 4 w^{k-1} o X_1(w*, tau) + w^{k-2} o X_1(w*, 2tau)]`
/// with the exact material derivative `dw/dt + (w . grad) w` at time `t`
/// and the given points, for each `tau`.
pub fn ab2_consistency_check<W, D>(w: W, material: D, points: &[Point], t: f64, taus: &[f64]) -> Ab2Report
where
    W: Fn(&Point, f64) -> Vector,
    D: Fn(&Point, f64) -> Vector,
{
    let errors: Vec<f64> = taus
        .iter()
        .map(|&tau| {
            points
                .iter()
                .map(|x| {
                    let bracket = ab2_bracket(
                        &w(x, t - tau),
                        &w(x, t - 2.0 * tau),
                        tau,
                        |v, s| w(&upwind_point(x, v, s), t - tau),
                        |v, s| w(&upwind_point(x, v, s), t - 2.0 * tau),
                    );
                    let approx = (3.0 * w(x, t) - bracket) / (2.0 * tau);
                    (approx - material(x, t)).norm()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let orders = taus
        .windows(2)
        .zip(errors.windows(2))
        .map(|(t, e)| eoc_slope(t[0], e[0], t[1], e[1]))
        .collect();
    Ab2Report {
        taus: taus.to_vec(),
        fitted_order: fit_slope(taus, &errors),
        errors,
        orders,
    }
}

/// `w = (sin(y + t), cos(x - t))` and its material derivative.
pub fn smooth_test_field(x: &Point, t: f64) -> Vector {
    Vector::new((x.y + t).sin(), (x.x - t).cos())
}

pub fn smooth_test_material(x: &Point, t: f64) -> Vector {
    let w = smooth_test_field(x, t);
    let dt = Vector::new((x.y + t).cos(), (x.x - t).sin());
    let conv = Vector::new(w.y * (x.y + t).cos(), -w.x * (x.x - t).sin());
    dt + conv
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Nodal errors of the steady Stokes-type patch test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PatchReport {
    pub n: usize,
    pub velocity_error: f64,
    /// Nodal pressure error after removing the mean difference.
    pub pressure_error: f64,
    pub divergence_residual: f64,
}

/// Solves `a0(u, v) + b(v, p) + b(u, q) = (f, v)` on the unit square with
/// `u = (x^2 + y^2, -2xy)`, `p = x + 2y`, `f = (1 - 4 mu, 2)`, Dirichlet
/// data from `u` and the pressure gauge. Taylor-Hood reproduces this pair
/// exactly.
pub fn patch_test(n: usize, exec: Execution) -> Result<PatchReport> {
    let domain = Rect::new((0.0, 1.0), (0.0, 1.0));
    let mesh = Arc::new(generate_rect_mesh(domain.x, domain.y, n, None, all_dirichlet)?);
    let params = PhysicalParams::default();
    let porosity = PorosityField::new(Arc::new(BuiltinPorosity::Constant { value: 1.0 }), domain);
    let ctx = FormContext::new(mesh, porosity, params, QuadratureRule::default(), exec)?;
    let exact_u = |x: &Point| Vector::new(x.x * x.x + x.y * x.y, -2.0 * x.x * x.y);
    let exact_p = |x: &Point| x.x + 2.0 * x.y;
    let force = Vector::new(1.0 - 4.0 * params.mu, 2.0);
    let rhs = ctx.assemble_load(|_, _| force, 0.0);
    let np = ctx.pressure_space().dof_count();
    let mut system = SaddleSystem::new(ctx.assemble_a0(), ctx.assemble_b(), rhs, vec![0.0; np])?;
    system.apply_dirichlet(ctx.velocity_space(), BoundaryTag::Gamma0, exact_u)?;
    system.apply_gauge(ctx.velocity_space(), ctx.pressure_mean_weights())?;
    let sol = system.solve(&mut SaddleSolver::new())?;

    let u_ref = interpolate_vector(ctx.velocity_space(), exact_u);
    let p_ref = interpolate_scalar(ctx.pressure_space(), exact_p);
    let velocity_error = sol
        .velocity
        .iter()
        .zip(u_ref.coefficients())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let p_h = FeField::from_coefficients(ctx.pressure_space().clone(), sol.pressure)?;
    let shift = (p_ref.integral() - p_h.integral()) / domain.area();
    let pressure_error = p_h
        .coefficients()
        .iter()
        .zip(p_ref.coefficients())
        .map(|(a, b)| (a + shift - b).abs())
        .fold(0.0, f64::max);
    Ok(PatchReport {
        n,
        velocity_error,
        pressure_error,
        divergence_residual: sol.report.divergence_residual,
    })
}

/// Decay run with zero data and constant porosity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub n: usize,
    pub phi: f64,
    pub steps: usize,
    pub initial_l2: f64,
    pub max_l2: f64,
    pub final_l2: f64,
    pub max_divergence_residual: f64,
    pub verdicts: Option<EnergyVerdicts>,
    pub beta0: f64,
}

impl StabilityReport {
    /// `max_k ||u^k|| <= 2 ||u^0||` and `||u^{N_T}|| < ||u^0||`.
    pub fn pass(&self) -> bool {
        self.max_l2 <= 2.0 * self.initial_l2 && self.final_l2 < self.initial_l2
    }
}

/// Runs `f = 0`, `g = 0` on `(0, pi)^2` with constant porosity, starting
/// from the solenoidal manufactured velocity at `t = 0`, with `tau = pi/n`.
pub fn stability_run(n: usize, phi: f64, t_final: f64, options: SchemeOptions) -> Result<StabilityReport> {
    let domain = MmsCase::domain();
    let mesh = Arc::new(generate_rect_mesh(domain.x, domain.y, n, None, all_dirichlet)?);
    let setup = ProblemSetup {
        mesh,
        porosity: PorosityField::new(Arc::new(BuiltinPorosity::Constant { value: phi }), domain),
        params: PhysicalParams::default(),
        forcing: None,
        boundary: Arc::new(|_: &Point, _: f64| Vector::zeros()),
        initial: Arc::new(|x: &Point| MmsCase::velocity(x, 0.0)),
        t_final,
        tau: PI / n as f64,
        gauge: true,
    };
    let mut scheme = Scheme::new(setup, options)?;
    let beta0 = korn_estimate_coarse(&domain, scheme.setup(), options.execution)?;
    let mut monitor = EnergyMonitor::new(beta0, None)?;
    let summary = scheme.run(&mut [&mut monitor])?;
    let rec = monitor.records();
    let initial_l2 = rec.first().map_or(0.0, |r| r.velocity_l2);
    Ok(StabilityReport {
        n,
        phi,
        steps: summary.steps.len(),
        initial_l2,
        max_l2: rec.iter().map(|r| r.velocity_l2).fold(0.0, f64::max),
        final_l2: rec.last().map_or(0.0, |r| r.velocity_l2),
        max_divergence_residual: summary.max_divergence_residual,
        verdicts: monitor.verdicts(),
        beta0,
    })
}

/// Korn constant of `setup`'s boundary decomposition on a coarse mesh of
/// `domain` with at most 8 cells along the longer side.
pub fn korn_estimate_coarse(domain: &Rect, setup: &ProblemSetup, exec: Execution) -> Result<f64> {
    let tags = setup.mesh.clone();
    let tag_rule = move |x: &Point| nearest_tag(&tags, x);
    let coarse = Arc::new(generate_rect_mesh(domain.x, domain.y, 8, None, tag_rule)?);
    let ctx = FormContext::new(coarse, setup.porosity.clone(), setup.params, QuadratureRule::default(), exec)?;
    ctx.discrete_korn_estimate()
}

/// Tag of the boundary edge of `mesh` closest to `x`.
fn nearest_tag(mesh: &Mesh, x: &Point) -> BoundaryTag {
    let dist = |e: &crate::mesh::BoundaryEdge| {
        let a = mesh.vertices()[e.vertices[0]];
        let b = mesh.vertices()[e.vertices[1]];
        let ab = b - a;
        let s = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        (x - (a + ab * s)).norm()
    };
    mesh.boundary_edges()
        .iter()
        .min_by(|e, f| dist(e).total_cmp(&dist(f)))
        .map_or(BoundaryTag::Gamma0, |e| e.tag)
}

/// Relative gap between the closed-form drag coefficients and the
/// composition through `K` and `F`, over `count` porosities spread over
/// `(0.01, 0.999)` by a golden-ratio sequence.
pub fn drag_equivalence(count: usize, params: &PhysicalParams) -> Result<f64> {
    use crate::porous_media::{forchheimer_constant, kozeny_carman_permeability};
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let phi = 0.01 + 0.989 * ((i as f64 + 0.5) * golden).fract();
        let k = kozeny_carman_permeability(phi, params)?;
        let f = forchheimer_constant(phi, params)?;
        let lin = linear_drag_coeff(phi, params)?;
        let forch = forchheimer_coeff(phi, params)?;
        worst = worst
            .max((lin - phi / k).abs() / lin.abs())
            .max((forch - f * phi / k.sqrt()).abs() / forch.abs());
    }
    Ok(worst)
}

/// One line of the invariant suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn outcome(name: &'static str, result: Result<(bool, String)>) -> CheckOutcome {
    match result {
        Ok((pass, detail)) => CheckOutcome { name, pass, detail },
        Err(e) => CheckOutcome {
            name,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Quick self-checks of the discretization, all at coarse resolution.
pub fn invariant_suite(exec: Execution) -> Vec<CheckOutcome> {
    let params = PhysicalParams::default();
    let mut out = Vec::new();

    out.push(outcome(
        "drag-equivalence",
        drag_equivalence(1000, &params).map(|gap| {
            let exact_one = linear_drag_coeff(1.0, &params).ok() == Some(0.0)
                && forchheimer_coeff(1.0, &params).ok() == Some(0.0);
            (gap <= 1e-12 && exact_one, format!("max relative gap {gap:.3e}, phi = 1 gives zero: {exact_one}"))
        }),
    ));

    out.push(outcome(
        "patch-test",
        patch_test(4, exec).map(|r| {
            (
                r.velocity_error <= 1e-10 && r.pressure_error <= 1e-10,
                format!("nodal errors u {:.3e}, p {:.3e}", r.velocity_error, r.pressure_error),
            )
        }),
    ));

    out.push(outcome("a1-identity", {
        let phi = MmsCase::POROSITY;
        let run = |domain, n| {
            lemma2_identity_check(
                |x| MmsCase::velocity(x, 0.0),
                |x| MmsCase::velocity_gradient(x, 0.0),
                &phi,
                domain,
                n,
                9,
            )
        };
        (|| {
            let full = run(MmsCase::domain(), 8)?;
            let half = Rect::new((0.0, PI / 2.0), (0.0, PI));
            let coarse = run(half, 2)?;
            let fine = run(half, 8)?;
            Ok((
                full.relative <= 1e-6 && fine.relative < coarse.relative,
                format!(
                    "relative residual {:.3e}; half square {:.3e} -> {:.3e} under refinement",
                    full.relative, coarse.relative, fine.relative
                ),
            ))
        })()
    }));

    out.push(outcome("ab2-order", {
        let report = ab2_consistency_check(
            smooth_test_field,
            smooth_test_material,
            &sample_points(&Rect::new((0.0, 1.0), (0.0, 1.0)), 5),
            1.0,
            &[0.1, 0.05, 0.025, 0.0125],
        );
        let order = report.fitted_order;
        Ok(((1.8..=2.2).contains(&order), format!("fitted order {order:.3}")))
    }));

    out.push(outcome(
        "stability-and-divergence",
        stability_run(8, 0.5, 1.0, SchemeOptions { execution: exec, ..Default::default() }).map(|r| {
            (
                r.pass() && r.max_divergence_residual <= 1e-10,
                format!(
                    "|u^0| {:.3e}, max {:.3e}, final {:.3e}, divergence residual {:.3e}",
                    r.initial_l2, r.max_l2, r.final_l2, r.max_divergence_residual
                ),
            )
        }),
    ));

    out.push(outcome("porosity-validator", {
        let two_layer = PorosityField::new(Arc::new(BuiltinPorosity::two_layer()), Rect::new((0.0, 3.0), (0.0, 1.0)));
        let sinus = PorosityField::new(Arc::new(BuiltinPorosity::sinusoidal()), Rect::new((0.0, 3.0 * PI), (0.0, PI)));
        let a = validate_hypothesis2(&two_layer, &params, 512);
        let b = validate_hypothesis2(&sinus, &params, 512);
        Ok((
            !a.pass && b.pass,
            format!("two-layer margin {:.3e} (expected to fail), sinusoidal margin {:.3e}", a.max_margin, b.max_margin),
        ))
    }));

    out.push(outcome("mesh-tiling", {
        (|| {
            let m = generate_rect_mesh((0.0, 3.0), (0.0, 1.0), 12, Some(&crate::mesh::LayerGrading::new(0.5, 1.0 / 72.0)), all_dirichlet)?;
            let rel = (m.total_area() - 3.0).abs() / 3.0;
            Ok((rel <= 1e-12, format!("graded mesh area error {rel:.3e}")))
        })()
    }));

    out
}

/// `(m + 1)^2` interior points on a regular grid inset from the edges.
pub fn sample_points(domain: &Rect, m: usize) -> Vec<Point> {
    let mut pts = Vec::with_capacity((m + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=m {
            let s = (i as f64 + 0.5) / (m as f64 + 1.0);
            let r = (j as f64 + 0.5) / (m as f64 + 1.0);
            pts.push(Point::new(
                domain.x.0 + s * domain.width(),
                domain.y.0 + r * domain.height(),
            ));
        }
    }
    pts
}

/// Area-weighted mean of `|u|` over the elements whose centroid satisfies
/// `select`.
pub fn mean_speed<S>(u: &FeField, rule: &QuadratureRule, select: S) -> f64
where
    S: Fn(&Point) -> bool,
{
    let mesh = u.space().mesh();
    let mut num = 0.0;
    let mut den = 0.0;
    for e in 0..mesh.n_triangles() {
        if !select(&mesh.point_at(e, &[1.0 / 3.0; 3])) {
            continue;
        }
        let geom = ElementGeometry::new(mesh, e);
        for (l, w) in rule.iter() {
            num += w * geom.area * u.vector_in_element(e, l).norm();
            den += w * geom.area;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Sixth-order central difference of a scalar function.
    fn d1(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x - 3.0 * h) + 9.0 * f(x - 2.0 * h) - 45.0 * f(x - h) + 45.0 * f(x + h) - 9.0 * f(x + 2.0 * h)
            + f(x + 3.0 * h))
            / (60.0 * h)
    }

    fn d2(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (2.0 * f(x - 3.0 * h) - 27.0 * f(x - 2.0 * h) + 270.0 * f(x - h) - 490.0 * f(x) + 270.0 * f(x + h)
            - 27.0 * f(x + 2.0 * h)
            + 2.0 * f(x + 3.0 * h))
            / (180.0 * h * h)
    }

    /// Strong-form residual with every derivative taken numerically from
    /// the stream function, the pressure and the porosity, and the drag
    /// composed from `K` and `F`.
    fn fd_residual(x: Point, t: f64, params: &PhysicalParams) -> Vector {
        use crate::porous_media::{forchheimer_constant, kozeny_carman_permeability};
        let h = 1e-3;
        let psi = |x: f64, y: f64, t: f64| MmsCase::stream(&Point::new(x, y), t);
        let u_of = |x: f64, y: f64, t: f64| {
            Vector::new(
                -d1(&|s| psi(x, s, t), y, h),
                d1(&|s| psi(s, y, t), x, h),
            )
        };
        let phi = |y: f64| (2.0 + (2.0 * y / 5.0).sin()) / 3.0;
        let u = u_of(x.x, x.y, t);
        let du_dt = Vector::new(d1(&|s| u_of(x.x, x.y, s).x, t, h), d1(&|s| u_of(x.x, x.y, s).y, t, h));
        let w = |x: f64, y: f64, c: usize| u_of(x, y, t)[c] / phi(y);
        let conv = Vector::from_fn(|c, _| {
            u.x * d1(&|s| w(s, x.y, c), x.x, h) + u.y * d1(&|s| w(x.x, s, c), x.y, h)
        });
        let lap = Vector::from_fn(|c, _| {
            d2(&|s| u_of(s, x.y, t)[c], x.x, h) + d2(&|s| u_of(x.x, s, t)[c], x.y, h)
        });
        let p = |x: f64, y: f64| MmsCase::pressure(&Point::new(x, y), t);
        let grad_p = Vector::new(d1(&|s| p(s, x.y), x.x, h), d1(&|s| p(x.x, s), x.y, h));
        let f_phi = phi(x.y);
        let k = kozeny_carman_permeability(f_phi, params).unwrap();
        let ff = forchheimer_constant(f_phi, params).unwrap();
        let drag = -params.mu * f_phi / k * u - params.rho * ff * f_phi / k.sqrt() * u.norm() * u;
        let f = mms_forcing(&x, t, params, &MmsCase::POROSITY);
        params.rho * (du_dt + conv) - params.mu * lap + grad_p - drag - f
    }

    #[test]
    fn forcing_matches_finite_difference_oracle() {
        let params = PhysicalParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = Point::new(rng.gen_range(0.1..PI - 0.1), rng.gen_range(0.1..PI - 0.1));
            let t = rng.gen_range(0.0..1.0);
            worst = worst.max(fd_residual(x, t, &params).amax());
        }
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn exact_fields_examples() {
        let x = Point::new(PI / 2.0, PI / 4.0);
        let u = MmsCase::velocity(&x, 0.0);
        assert!((u.x + 1.0606601717798212).abs() < 1e-12);
        assert!(u.y.abs() < 1e-15);
        assert!((MmsCase::pressure(&x, 0.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = Point::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..PI));
            let g = MmsCase::velocity_gradient(&x, rng.gen_range(0.0..1.0));
            assert!(g.trace().abs() <= 1e-12);
        }
    }

    #[test]
    fn gradient_and_laplacian_match_differences() {
        let h = 1e-3;
        let x = Point::new(0.7, 2.1);
        let t = 0.3;
        let g = MmsCase::velocity_gradient(&x, t);
        let lap = MmsCase::velocity_laplacian(&x, t);
        for c in 0..2 {
            let ux = |s: f64| MmsCase::velocity(&Point::new(s, x.y), t)[c];
            let uy = |s: f64| MmsCase::velocity(&Point::new(x.x, s), t)[c];
            assert!((d1(&ux, x.x, h) - g[(c, 0)]).abs() < 1e-9);
            assert!((d1(&uy, x.y, h) - g[(c, 1)]).abs() < 1e-9);
            assert!((d2(&ux, x.x, h) + d2(&uy, x.y, h) - lap[c]).abs() < 1e-7);
        }
    }

    #[test]
    fn modulo_constant_error_ignores_shifts() {
        let mesh = Arc::new(generate_rect_mesh((0.0, 1.0), (0.0, 1.0), 4, None, all_dirichlet).unwrap());
        let space = crate::fem_space::FeSpace::p1_scalar(mesh);
        let p = interpolate_scalar(&space, |x| x.x + 2.0 * x.y + 5.0);
        let rule = QuadratureRule::default();
        let e = l2_error_modulo_constants(&p, |x| x.x + 2.0 * x.y, &rule, Execution::Sequential);
        assert!(e < 1e-7, "{e}");
        let q = interpolate_scalar(&space, |_| 1.0);
        // || 1 - x - c || minimized at c = 1/2: sqrt(1/12)
        let e = l2_error_modulo_constants(&q, |x| x.x, &rule, Execution::Sequential);
        assert!((e - (1.0f64 / 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lemma2_trivial_and_manufactured() {
        let phi = BuiltinPorosity::Constant { value: 0.5 };
        let zero = lemma2_identity_check(|_| Vector::zeros(), |_| Tensor::zeros(), &phi, MmsCase::domain(), 4, 9).unwrap();
        assert_eq!((zero.lhs, zero.rhs), (0.0, 0.0));
        let c = Vector::new(0.3, -0.2);
        let konst = lemma2_identity_check(|_| c, |_| Tensor::zeros(), &phi, Rect::new((0.0, 2.0), (0.0, 1.0)), 4, 9).unwrap();
        assert_eq!(konst.interior_term, 0.0);
        // net flux of a constant field through a closed boundary vanishes
        assert!(konst.boundary_term.abs() < 1e-14);
        assert!(konst.absolute < 1e-14);

        let phi = MmsCase::POROSITY;
        let full = lemma2_identity_check(
            |x| MmsCase::velocity(x, 0.0),
            |x| MmsCase::velocity_gradient(x, 0.0),
            &phi,
            MmsCase::domain(),
            8,
            9,
        )
        .unwrap();
        assert!(full.relative <= 1e-6, "{full:?}");
        assert!(full.magnitude > 1e-2, "{full:?}");
        // u2 is odd and |u|^2 even about x = pi/2, so on the half square
        // neither side vanishes
        let half = Rect::new((0.0, PI / 2.0), (0.0, PI));
        let reports: Vec<_> = [2, 4, 8, 16]
            .iter()
            .map(|&n| {
                lemma2_identity_check(
                    |x| MmsCase::velocity(x, 0.0),
                    |x| MmsCase::velocity_gradient(x, 0.0),
                    &phi,
                    half,
                    n,
                    9,
                )
                .unwrap()
            })
            .collect();
        assert!(reports[0].boundary_term.abs() > 1e-2 && reports[0].interior_term.abs() > 1e-3);
        assert!(reports[3].relative <= 1e-6);
        for pair in reports.windows(2) {
            assert!(pair[1].relative < pair[0].relative, "{pair:?}");
        }
    }

    #[test]
    fn lemma2_with_boundary_flux() {
        // solenoidal and nonzero on the boundary
        let u = |x: &Point| Vector::new(1.0 + x.y * x.y, 0.5 + x.x);
        let g = |x: &Point| Tensor::new(0.0, 2.0 * x.y, 1.0, 0.0);
        let phi = BuiltinPorosity::Sinusoidal { gamma0: 0.15, gamma1: 0.65 };
        let r = lemma2_identity_check(u, g, &phi, Rect::new((0.0, 1.0), (0.0, 1.0)), 16, 9).unwrap();
        assert!(r.boundary_term.abs() > 1e-2);
        assert!(r.relative <= 1e-9, "{r:?}");
    }

    #[test]
    fn ab2_exact_cases_and_order() {
        let pts = sample_points(&Rect::new((0.0, 1.0), (0.0, 1.0)), 3);
        let c = Vector::new(0.4, -0.7);
        let konst = ab2_consistency_check(|_, _| c, |_, _| Vector::zeros(), &pts, 1.0, &[0.1, 0.05]);
        assert!(konst.errors.iter().all(|e| *e < 1e-13));
        let linear = ab2_consistency_check(|_, t| c * t, |_, _| c, &pts, 1.0, &[0.1, 0.05]);
        assert!(linear.errors.iter().all(|e| *e < 1e-12), "{linear:?}");
        let smooth = ab2_consistency_check(smooth_test_field, smooth_test_material, &pts, 1.0, &[0.1, 0.05, 0.025, 0.0125]);
        assert!((1.8..=2.2).contains(&smooth.fitted_order), "{smooth:?}");
    }

    #[test]
    fn patch_test_is_exact() {
        let r = patch_test(3, Execution::default()).unwrap();
        assert!(r.velocity_error <= 1e-10 && r.pressure_error <= 1e-10, "{r:?}");
        assert!(r.divergence_residual <= 1e-10);
    }

    #[test]
    fn zero_run_has_zero_energy() {
        let domain = MmsCase::domain();
        let mesh = Arc::new(generate_rect_mesh(domain.x, domain.y, 4, None, all_dirichlet).unwrap());
        let setup = ProblemSetup {
            mesh,
            porosity: PorosityField::new(Arc::new(BuiltinPorosity::Constant { value: 0.5 }), domain),
            params: PhysicalParams::default(),
            forcing: None,
            boundary: Arc::new(|_: &Point, _: f64| Vector::zeros()),
            initial: Arc::new(|_: &Point| Vector::zeros()),
            t_final: 1.0,
            tau: 0.25,
            gauge: true,
        };
        let mut scheme = Scheme::new(setup, SchemeOptions::default()).unwrap();
        let mut monitor = EnergyMonitor::new(0.3, None).unwrap();
        scheme.run(&mut [&mut monitor]).unwrap();
        assert_eq!(monitor.records().len(), 5);
        assert!(monitor.records().iter().all(|r| r.kinetic == 0.0 && r.dissipation == 0.0));
        let v = monitor.verdicts().unwrap();
        assert!(v.uniform.pass && v.decay.pass);
    }

    #[test]
    fn decay_run_shrinks() {
        let r = stability_run(8, 0.5, 1.0, SchemeOptions::default()).unwrap();
        assert!(r.pass(), "{r:?}");
        assert!(r.beta0 > 0.0 && r.beta0 < 1.0);
        assert!(r.max_divergence_residual <= 1e-10);
        assert!(r.verdicts.unwrap().uniform.pass);
    }

    #[test]
    fn best_approximation_is_below_interpolation() {
        let b = best_approximation(8, 0.0).unwrap();
        let setup = MmsCase::default().setup(8).unwrap();
        let space = crate::fem_space::FeSpace::p2_vector(setup.mesh.clone());
        let ui = interpolate_vector(&space, |x| MmsCase::velocity(x, 0.0));
        let rule = QuadratureRule::degree9();
        let ei = vector_error_parts(&ui, |x| (MmsCase::velocity(x, 0.0), MmsCase::velocity_gradient(x, 0.0)), &rule, Execution::default());
        assert!(b.velocity_h1 <= ei.h1() && b.velocity_h1 > 0.3 * ei.h1(), "{b:?} {}", ei.h1());
        let pspace = crate::fem_space::FeSpace::p1_scalar(setup.mesh.clone());
        let pi = interpolate_scalar(&pspace, |x| MmsCase::pressure(x, 0.0));
        let ep = l2_error_modulo_constants(&pi, |x| MmsCase::pressure(x, 0.0), &rule, Execution::default());
        assert!(b.pressure_l2 <= ep && b.pressure_l2 > 0.1 * ep, "{b:?} {ep}");
    }

    #[test]
    fn eoc_rejects_bad_lists() {
        assert!(run_eoc(&[], &EocOptions::default()).is_err());
        assert!(run_eoc(&[8, 4], &EocOptions::default()).is_err());
    }

    #[test]
    fn eoc_coarse_errors_shrink() {
        let rec = run_eoc(&[8, 16], &EocOptions::default()).unwrap();
        assert!(rec[1].er1 < rec[0].er1 && rec[1].er2 < rec[0].er2, "{rec:?}");
        assert!(rec.iter().all(|r| r.max_divergence_residual <= 1e-10));
    }

    #[test]
    fn outflow_flux_of_uniform_stream() {
        let rect = Rect::new((0.0, 2.0), (0.0, 1.0));
        let mesh = Arc::new(
            generate_rect_mesh(rect.x, rect.y, 4, None, |p: &Point| {
                if p.x > 2.0 - 1e-9 {
                    BoundaryTag::Gamma1
                } else {
                    BoundaryTag::Gamma0
                }
            })
            .unwrap(),
        );
        let space = crate::fem_space::FeSpace::p2_vector(mesh);
        let u = interpolate_vector(&space, |_| Vector::new(2.0, 0.3));
        let phi = PorosityField::new(Arc::new(BuiltinPorosity::Constant { value: 0.5 }), rect);
        // |u|^2 / phi * u.n * length = 4.09 / 0.5 * 2 * 1
        assert!((outflow_flux(&u, &phi) - 16.36).abs() < 1e-12);
    }

    #[test]
    fn invariant_suite_passes() {
        for o in invariant_suite(Execution::default()) {
            assert!(o.pass, "{o}");
        }
    }
}
