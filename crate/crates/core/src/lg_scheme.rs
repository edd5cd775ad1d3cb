//! The time loop: a first-order Lagrange-Galerkin initial step followed by
//! second-order Adams-Bashforth steps along characteristics of `u / phi`.
//!
//! Each step solves one linear saddle-point system
//!
//! ```text
//! rho s_k (u^k, v) + a0(u^k, v) + c0(u^k, v) + c1(|theta|, u^k, v)
//!     + b(v, p^k) + b(u^k, q) = (f^k, v) + rho r_k (H^k, v)
//! ```
//!
//! with `s_1 = 1/tau`, `r_1 = 1/tau`, `H^1 = phi w^0 o X_1(w^0, tau)`,
//! `theta = u^0` on the initial step, and `s_k = 3/(2 tau)`,
//! `r_k = 1/(2 tau)`, `H^k = phi [4 w^{k-1} o X_1(w*, tau) - w^{k-2} o
//! X_1(w*, 2 tau)]`, `theta = 2 u^{k-1} - u^{k-2}` afterwards.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::assembly::{FormContext, MaterialTerm, QuadPoint, StepKind};
use crate::characteristics::{VectorField, VelocityHistory};
use crate::fem_space::{interpolate_vector, norm_parts, FeField};
use crate::mesh::{BoundaryTag, Mesh};
use crate::par::Execution;
use crate::porous_media::{PhysicalParams, PorosityField};
use crate::quadrature::QuadratureRule;
use crate::saddle_solver::{ResidualReport, SaddleSolver, SaddleSystem};
use crate::sparse::SparseMatrix;
use crate::{Error, Point, Result, Vector};

/// Initial velocity `u^0(x)`.
pub type InitialField = dyn Fn(&Point) -> Vector + Send + Sync;

/// Everything that defines a problem instance.
#[derive(Clone)]
pub struct ProblemSetup {
    pub mesh: Arc<Mesh>,
    pub porosity: PorosityField,
    pub params: PhysicalParams,
    /// Body force `f(x, t)`; `None` means zero.
    pub forcing: Option<Arc<VectorField>>,
    /// Dirichlet datum `g(x, t)` on `Gamma0`.
    pub boundary: Arc<VectorField>,
    pub initial: Arc<InitialField>,
    pub t_final: f64,
    pub tau: f64,
    /// Zero-mean pressure constraint; only valid without outflow edges.
    pub gauge: bool,
}

impl std::fmt::Debug for ProblemSetup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSetup")
            .field("vertices", &self.mesh.n_vertices())
            .field("triangles", &self.mesh.n_triangles())
            .field("params", &self.params)
            .field("t_final", &self.t_final)
            .field("tau", &self.tau)
            .field("gauge", &self.gauge)
            .finish()
    }
}

impl ProblemSetup {
    /// `N_T = floor(T / tau)`, guarded against round-off in `T / tau`.
    pub fn n_steps(&self) -> usize {
        let ratio = self.t_final / self.tau;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.floor() as usize
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {}", self.tau)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidInput(format!("final time must be positive, got {}", self.t_final)));
        }
        if self.n_steps() == 0 {
            return Err(Error::NoTimeSteps {
                tau: self.tau,
                t_final: self.t_final,
            });
        }
        if !self.mesh.has_tag(BoundaryTag::Gamma0) && !self.gauge {
            return Err(Error::InvalidInput(
                "the boundary needs a Dirichlet part or the pressure gauge".into(),
            ));
        }
        if self.gauge && self.mesh.has_tag(BoundaryTag::Gamma1) {
            return Err(Error::GaugeWithOutflow(BoundaryTag::Gamma1));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeOptions {
    pub quadrature_degree: usize,
    pub execution: Execution,
    /// Include the Forchheimer term `c1`.
    pub forchheimer: bool,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            quadrature_degree: 5,
            execution: Execution::default(),
            forchheimer: true,
        }
    }
}

/// The two previous velocity levels and the step counter.
#[derive(Clone, Debug)]
pub struct SchemeState {
    pub u_prev: FeField,
    pub u_prev2: Option<FeField>,
    pub p_prev: FeField,
    /// Index of `u_prev`.
    pub k: usize,
    pub tau: f64,
    pub t_final: f64,
    pub n_steps: usize,
}

impl SchemeState {
    pub fn time(&self) -> f64 {
        self.k as f64 * self.tau
    }

    pub fn is_finished(&self) -> bool {
        self.k >= self.n_steps
    }
}

/// Per-step diagnostics handed to observers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub k: usize,
    pub t: f64,
    pub relative_residual: f64,
    pub divergence_residual: f64,
    /// Characteristic feet that left the domain and were clamped.
    pub clamped_feet: usize,
    pub velocity_l2: f64,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
    /// Wall-clock time of the step (assembly and solve), seconds.
    pub seconds: f64,
}

/// Result of one step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub u: FeField,
    pub p: FeField,
    pub diagnostics: StepDiagnostics,
    pub residual: ResidualReport,
}

/// Callbacks invoked by [`Scheme::run`].
pub trait StepObserver {
    /// Called once with the initial data (`k = 0`).
    fn on_start(&mut self, _u0: &FeField, _p0: &FeField, _ctx: &FormContext) -> Result<()> {
        Ok(())
    }

    fn on_step(&mut self, k: usize, t: f64, u: &FeField, p: &FeField, diag: &StepDiagnostics) -> Result<()>;
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RunSummary {
    pub steps: Vec<StepDiagnostics>,
    pub total_seconds: f64,
    pub max_divergence_residual: f64,
    pub max_relative_residual: f64,
}

impl RunSummary {
    pub fn mean_step_seconds(&self) -> f64 {
        if self.steps.is_empty() {
            0.0
        } else {
            self.steps.iter().map(|s| s.seconds).sum::<f64>() / self.steps.len() as f64
        }
    }
}

/// Time-independent operators of a problem plus the solver cache.
pub struct Scheme {
    setup: ProblemSetup,
    options: SchemeOptions,
    ctx: FormContext,
    mass: SparseMatrix,
    a_static: SparseMatrix,
    b: SparseMatrix,
    mean_weights: Vec<f64>,
    solver: SaddleSolver,
    records: Vec<StepDiagnostics>,
}

impl std::fmt::Debug for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scheme")
            .field("setup", &self.setup)
            .field("options", &self.options)
            .field("steps_done", &self.records.len())
            .finish()
    }
}

impl Scheme {
    pub fn new(setup: ProblemSetup, options: SchemeOptions) -> Result<Self> {
        setup.validate()?;
        let rule = QuadratureRule::with_degree(options.quadrature_degree).ok_or_else(|| {
            Error::InvalidInput(format!("no quadrature rule of degree {}", options.quadrature_degree))
        })?;
        let ctx = FormContext::new(
            setup.mesh.clone(),
            setup.porosity.clone(),
            setup.params,
            rule,
            options.execution,
        )?;
        let mass = ctx.assemble_mass();
        let mut a_static = ctx.assemble_a0();
        a_static.add_scaled(1.0, &ctx.assemble_c0());
        let b = ctx.assemble_b();
        let mean_weights = ctx.pressure_mean_weights();
        Ok(Self {
            setup,
            options,
            ctx,
            mass,
            a_static,
            b,
            mean_weights,
            solver: SaddleSolver::new(),
            records: Vec::new(),
        })
    }

    pub fn context(&self) -> &FormContext {
        &self.ctx
    }

    pub fn setup(&self) -> &ProblemSetup {
        &self.setup
    }

    /// Diagnostics of every accepted step so far, also after a failure.
    pub fn records(&self) -> &[StepDiagnostics] {
        &self.records
    }

    /// `u_h^0` as the nodal interpolant of `u^0`, with zero pressure.
    pub fn initial_state(&self) -> SchemeState {
        let u0 = interpolate_vector(self.ctx.velocity_space(), |x| (self.setup.initial)(x)).with_time(0.0);
        SchemeState {
            u_prev: u0,
            u_prev2: None,
            p_prev: FeField::zeros(self.ctx.pressure_space().clone()).with_time(0.0),
            k: 0,
            tau: self.setup.tau,
            t_final: self.setup.t_final,
            n_steps: self.setup.n_steps(),
        }
    }


    /// Solves for `(u^1, p^1)` from `u^0`.
    pub fn initial_step(&mut self, u0: &FeField) -> Result<StepOutput> {
        let tau = self.setup.tau;
        let phi = self.ctx.porosity().clone();
        let g = self.setup.boundary.clone();
        let hist = VelocityHistory { phi: &phi, g: g.as_ref() };
        let term = Lg1Term {
            u0,
            hist,
            tau,
            clamped: AtomicUsize::new(0),
        };
        self.solve_step(1, StepKind::Initial, &term, u0, || term.clamped.load(Ordering::Relaxed))
    }

    /// Solves for `(u^k, p^k)` from `u^{k-1}`, `u^{k-2}`.
    pub fn general_step(&mut self, k: usize, u1: &FeField, u2: &FeField) -> Result<StepOutput> {
        if k < 2 {
            return Err(Error::StepKindMismatch {
                expected: StepKind::Initial,
                found: StepKind::General,
            });
        }
        let tau = self.setup.tau;
        let phi = self.ctx.porosity().clone();
        let g = self.setup.boundary.clone();
        let hist = VelocityHistory { phi: &phi, g: g.as_ref() };
        let term = Ab2Term {
            u1,
            u2,
            hist,
            tau,
            clamped: AtomicUsize::new(0),
        };
        let theta = u1.combine(2.0, u2, -1.0);
        self.solve_step(k, StepKind::General, &term, &theta, || term.clamped.load(Ordering::Relaxed))
    }

    /// Advances `state` by one step with the appropriate variant.
    pub fn step(&mut self, state: &mut SchemeState) -> Result<StepOutput> {
        let k = state.k + 1;
        let out = match &state.u_prev2 {
            None if state.k == 0 => self.initial_step(&state.u_prev)?,
            Some(u2) => self.general_step(k, &state.u_prev, u2)?,
            None => {
                return Err(Error::StepKindMismatch {
                    expected: StepKind::General,
                    found: StepKind::Initial,
                })
            }
        };
        let previous = std::mem::replace(&mut state.u_prev, out.u.clone());
        state.u_prev2 = Some(previous);
        state.p_prev = out.p.clone();
        state.k = k;
        Ok(out)
    }

    fn solve_step<C>(
        &mut self,
        k: usize,
        kind: StepKind,
        term: &dyn MaterialTerm,
        theta: &FeField,
        clamped: C,
    ) -> Result<StepOutput>
    where
        C: Fn() -> usize,
    {
        let started = Instant::now();
        let tau = self.setup.tau;
        let t = k as f64 * tau;
        let rho = self.setup.params.rho;

        let mut a = self.a_static.clone();
        a.add_scaled(rho * kind.mass_scale(tau), &self.mass);
        if self.options.forchheimer {
            a.add_scaled(1.0, &self.ctx.assemble_c1(theta));
        }
        let mut rhs = self.ctx.assemble_history_rhs(term, tau);
        if let Some(f) = &self.setup.forcing {
            let load = self.ctx.assemble_load(|x, s| f(x, s), t);
            for (r, l) in rhs.iter_mut().zip(load) {
                *r += l;
            }
        }
        let np = self.ctx.pressure_space().dof_count();
        let mut system = SaddleSystem::new(a, self.b.clone(), rhs, vec![0.0; np])?;
        let g = self.setup.boundary.clone();
        system.apply_dirichlet(self.ctx.velocity_space(), BoundaryTag::Gamma0, |x| g(x, t))?;
        system.apply_slip(self.ctx.velocity_space())?;
        if self.setup.gauge {
            system.apply_gauge(self.ctx.velocity_space(), self.mean_weights.clone())?;
        }
        let solution = system.solve(&mut self.solver)?;
        let u = FeField::from_coefficients(self.ctx.velocity_space().clone(), solution.velocity)?.with_time(t);
        let p = FeField::from_coefficients(self.ctx.pressure_space().clone(), solution.pressure)?.with_time(t);
        if !u.is_finite() || !p.is_finite() {
            return Err(Error::NonFinite { step: k });
        }
        let un = norm_parts(&u, self.ctx.rule(), self.options.execution);
        let pn = norm_parts(&p, self.ctx.rule(), self.options.execution);
        let diagnostics = StepDiagnostics {
            k,
            t,
            relative_residual: solution.report.relative_residual,
            divergence_residual: solution.report.divergence_residual,
            clamped_feet: clamped(),
            velocity_l2: un.l2(),
            velocity_h1: un.h1(),
            pressure_l2: pn.l2(),
            seconds: started.elapsed().as_secs_f64(),
        };
        Ok(StepOutput {
            u,
            p,
            diagnostics,
            residual: solution.report,
        })
    }

    /// Runs `N_T` steps, notifying observers after each accepted step.
    /// On failure the diagnostics of the accepted steps remain available
    /// through [`records`](Self::records).
    pub fn run(&mut self, observers: &mut [&mut dyn StepObserver]) -> Result<RunSummary> {
        let started = Instant::now();
        self.records.clear();
        let mut state = self.initial_state();
        for obs in observers.iter_mut() {
            obs.on_start(&state.u_prev, &state.p_prev, &self.ctx)?;
        }
        while !state.is_finished() {
            let k = state.k + 1;
            let out = self.step(&mut state).map_err(|e| Error::StepFailed {
                step: k,
                source: Box::new(e),
            })?;
            self.records.push(out.diagnostics);
            for obs in observers.iter_mut() {
                obs.on_step(k, out.diagnostics.t, &out.u, &out.p, &out.diagnostics)?;
            }
        }
        let steps = self.records.clone();
        Ok(RunSummary {
            max_divergence_residual: steps.iter().map(|s| s.divergence_residual).fold(0.0, f64::max),
            max_relative_residual: steps.iter().map(|s| s.relative_residual).fold(0.0, f64::max),
            steps,
            total_seconds: started.elapsed().as_secs_f64(),
        })
    }
}

struct Lg1Term<'a> {
    u0: &'a FeField,
    hist: VelocityHistory<'a>,
    tau: f64,
    clamped: AtomicUsize,
}

impl MaterialTerm for Lg1Term<'_> {
    fn kind(&self) -> StepKind {
        StepKind::Initial
    }

    fn value(&self, qp: &QuadPoint) -> Vector {
        let here = self.u0.vector_in_element(qp.element, &qp.barycentric);
        let (v, c) = self.hist.lg1_material_term(self.u0, &qp.x, &here, self.tau, Some(qp.element));
        if c > 0 {
            self.clamped.fetch_add(c, Ordering::Relaxed);
        }
        v
    }
}

struct Ab2Term<'a> {
    u1: &'a FeField,
    u2: &'a FeField,
    hist: VelocityHistory<'a>,
    tau: f64,
    clamped: AtomicUsize,
}

impl MaterialTerm for Ab2Term<'_> {
    fn kind(&self) -> StepKind {
        StepKind::General
    }

    fn value(&self, qp: &QuadPoint) -> Vector {
        let h1 = self.u1.vector_in_element(qp.element, &qp.barycentric);
        let h2 = self.u2.vector_in_element(qp.element, &qp.barycentric);
        let (v, c) = self
            .hist
            .ab2_material_term(self.u1, self.u2, &qp.x, &h1, &h2, self.tau, Some(qp.element));
        if c > 0 {
            self.clamped.fetch_add(c, Ordering::Relaxed);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{all_dirichlet, generate_rect_mesh, Rect};
    use crate::porous_media::BuiltinPorosity;

    fn square_setup(n: usize, phi: f64, tau: f64, t_final: f64) -> ProblemSetup {
        let mesh = Arc::new(generate_rect_mesh((0.0, 1.0), (0.0, 1.0), n, None, all_dirichlet).unwrap());
        ProblemSetup {
            mesh,
            porosity: PorosityField::new(
                Arc::new(BuiltinPorosity::Constant { value: phi }),
                Rect::new((0.0, 1.0), (0.0, 1.0)),
            ),
            params: PhysicalParams::default(),
            forcing: None,
            boundary: Arc::new(|_, _| Vector::zeros()),
            initial: Arc::new(|_| Vector::zeros()),
            t_final,
            tau,
            gauge: true,
        }
    }

    struct Recorder(Vec<usize>);

    impl StepObserver for Recorder {
        fn on_step(&mut self, k: usize, _: f64, _: &FeField, _: &FeField, _: &StepDiagnostics) -> Result<()> {
            self.0.push(k);
            Ok(())
        }
    }

    #[test]
    fn step_count_and_observer_order() {
        let setup = square_setup(3, 1.0, 0.25, 1.0);
        assert_eq!(setup.n_steps(), 4);
        let mut scheme = Scheme::new(setup, SchemeOptions::default()).unwrap();
        let mut rec = Recorder(Vec::new());
        let summary = scheme.run(&mut [&mut rec]).unwrap();
        assert_eq!(rec.0, vec![1, 2, 3, 4]);
        assert_eq!(summary.steps.len(), 4);
    }

    #[test]
    fn tau_larger_than_final_time_is_rejected() {
        let setup = square_setup(2, 1.0, 2.0, 1.0);
        assert!(matches!(Scheme::new(setup, SchemeOptions::default()), Err(Error::NoTimeSteps { .. })));
    }

    #[test]
    fn zero_data_stays_zero() {
        let setup = square_setup(4, 0.5, 0.1, 0.3);
        let mut scheme = Scheme::new(setup, SchemeOptions::default()).unwrap();
        let mut state = scheme.initial_state();
        while !state.is_finished() {
            let out = scheme.step(&mut state).unwrap();
            assert!(out.u.coefficients().iter().all(|v| v.abs() <= 1e-10));
            assert!(out.p.coefficients().iter().all(|v| v.abs() <= 1e-10));
        }
    }

    #[test]
    fn uniform_dirichlet_state_is_preserved() {
        let c = Vector::new(0.3, 0.1);
        let mut setup = square_setup(4, 1.0, 0.1, 0.5);
        setup.boundary = Arc::new(move |_, _| c);
        setup.initial = Arc::new(move |_| c);
        let mut scheme = Scheme::new(setup, SchemeOptions::default()).unwrap();
        let mut state = scheme.initial_state();
        while !state.is_finished() {
            let out = scheme.step(&mut state).unwrap();
            for node in 0..out.u.space().n_nodes() {
                assert!((out.u.node_vector(node) - c).norm() <= 1e-9);
            }
            assert!(out.diagnostics.divergence_residual <= 1e-10);
        }
    }

    #[test]
    fn initial_step_is_linear_in_forcing() {
        let solve = |scale: f64| {
            let mut setup = square_setup(4, 1.0, 0.1, 0.2);
            setup.forcing = Some(Arc::new(move |x: &Point, _| Vector::new(x.y.sin(), x.x * x.y) * scale));
            let options = SchemeOptions {
                forchheimer: false,
                ..SchemeOptions::default()
            };
            let mut scheme = Scheme::new(setup, options).unwrap();
            let state = scheme.initial_state();
            scheme.initial_step(&state.u_prev).unwrap()
        };
        let one = solve(1.0);
        let two = solve(2.0);
        let gap = |a: &FeField, b: &FeField| {
            let scale = a.coefficients().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = a
                .coefficients()
                .iter()
                .zip(b.coefficients())
                .map(|(x, y)| (2.0 * x - y).abs())
                .fold(0.0, f64::max);
            diff / scale
        };
        assert!(gap(&one.u, &two.u) <= 1e-10);
        assert!(gap(&one.p, &two.p) <= 1e-10);
        assert!(one.diagnostics.velocity_l2 > 0.0);
    }

    #[test]
    fn dirichlet_trace_matches_data_each_step() {
        let mut setup = square_setup(4, 0.7, 0.1, 0.3);
        setup.boundary = Arc::new(|x: &Point, t| Vector::new(x.y * (1.0 - x.y) * (1.0 + t), 0.0));
        setup.initial = Arc::new(|x: &Point| Vector::new(x.y * (1.0 - x.y), 0.0));
        setup.gauge = true;
        let mut scheme = Scheme::new(setup.clone(), SchemeOptions::default()).unwrap();
        let mut state = scheme.initial_state();
        while !state.is_finished() {
            let out = scheme.step(&mut state).unwrap();
            let t = out.diagnostics.t;
            let space = out.u.space().clone();
            for node in space.boundary_nodes(BoundaryTag::Gamma0) {
                let g = (setup.boundary)(&space.node_coords()[node], t);
                assert_eq!(out.u.node_vector(node), g);
            }
        }
    }
}
