//! Sequential and data-parallel execution give bit-identical results.

use std::sync::Arc;

use porous_flow::assembly::FormContext;
use porous_flow::fem_space::interpolate_vector;
use porous_flow::lg_scheme::{Scheme, SchemeOptions};
use porous_flow::mesh::{all_dirichlet, generate_rect_mesh, LayerGrading, Rect};
use porous_flow::par::Execution;
use porous_flow::porous_media::{BuiltinPorosity, PhysicalParams, PorosityField};
use porous_flow::quadrature::QuadratureRule;
use porous_flow::verification::MmsCase;
use porous_flow::Vector;

fn context(exec: Execution) -> FormContext {
    let domain = Rect::new((0.0, 3.0), (0.0, 1.0));
    let grading = LayerGrading::new(0.5, 1.0 / 60.0);
    let mesh = Arc::new(generate_rect_mesh(domain.x, domain.y, 12, Some(&grading), all_dirichlet).unwrap());
    let porosity = PorosityField::new(Arc::new(BuiltinPorosity::two_layer()), domain);
    FormContext::new(mesh, porosity, PhysicalParams::default(), QuadratureRule::default(), exec).unwrap()
}

#[test]
fn assembly_is_identical() {
    let (seq, par) = (context(Execution::Sequential), context(Execution::Parallel));
    assert_eq!(seq.assemble_a0().values(), par.assemble_a0().values());
    assert_eq!(seq.assemble_b().values(), par.assemble_b().values());
    assert_eq!(seq.assemble_c0().values(), par.assemble_c0().values());
    let theta_s = interpolate_vector(seq.velocity_space(), |x| Vector::new(x.y.sin(), x.x * x.y));
    let theta_p = interpolate_vector(par.velocity_space(), |x| Vector::new(x.y.sin(), x.x * x.y));
    assert_eq!(seq.assemble_c1(&theta_s).values(), par.assemble_c1(&theta_p).values());
    let f = |x: &porous_flow::Point, t: f64| Vector::new(x.x + t, x.y.cos());
    assert_eq!(seq.assemble_load(f, 0.3), par.assemble_load(f, 0.3));
}

#[test]
fn runs_are_identical() {
    let run = |exec| {
        let options = SchemeOptions {
            execution: exec,
            ..Default::default()
        };
        let mut scheme = Scheme::new(MmsCase::default().setup(8).unwrap(), options).unwrap();
        let mut state = scheme.initial_state();
        let mut levels = Vec::new();
        while !state.is_finished() {
            let out = scheme.step(&mut state).unwrap();
            levels.push((out.u.into_coefficients(), out.p.into_coefficients()));
        }
        levels
    };
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}
