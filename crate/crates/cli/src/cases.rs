//! The experiment library: problem setups built from a [`RunConfig`].

use std::f64::consts::PI;
use std::sync::Arc;

use porous_flow::lg_scheme::ProblemSetup;
use porous_flow::mesh::{generate_rect_mesh, BoundaryTag, LayerGrading, Rect};
use porous_flow::porous_media::PorosityField;
use porous_flow::verification::MmsCase;
use porous_flow::{Point, Vector};

use crate::config::{CaseName, RunConfig};

/// Inlet cut-off: `cos(pi x)` for `x <= 0.5`, zero beyond.
pub fn eta(x: f64) -> f64 {
    if x <= 0.5 {
        (PI * x).cos()
    } else {
        0.0
    }
}

/// Parabolic inlet profile `eta(x) c ((H/2)^2 - (y - y_c)^2, 0)` across
/// the height `H` of `domain`.
pub fn inflow_profile(domain: &Rect, scale: f64, x: &Point) -> Vector {
    let half = 0.5 * domain.height();
    let yc = domain.y.0 + half;
    Vector::new(eta(x.x - domain.x.0) * scale * (half * half - (x.y - yc).powi(2)), 0.0)
}

/// `Gamma1` on the right edge when `outflow` is set, `Gamma0` elsewhere.
pub fn tag_rule(domain: Rect, outflow: bool) -> impl Fn(&Point) -> BoundaryTag {
    let tol = 1e-9 * domain.width();
    move |x: &Point| {
        if outflow && x.x >= domain.x.1 - tol {
            BoundaryTag::Gamma1
        } else {
            BoundaryTag::Gamma0
        }
    }
}

/// Mesh grading of the configuration, if any.
pub fn grading(config: &RunConfig) -> Option<LayerGrading> {
    config.layer_ratio.map(|r| LayerGrading::new(config.layer_y, config.h() / r))
}

/// Builds the problem of `config`, which must be valid.
pub fn build_setup(config: &RunConfig) -> anyhow::Result<ProblemSetup> {
    config.validate()?;
    if config.case == CaseName::MmsEoc {
        let case = MmsCase {
            params: config.params(),
            t_final: config.t_final,
        };
        let mut setup = case.setup(config.n)?;
        setup.tau = config.tau();
        return Ok(setup);
    }
    let domain = config.domain();
    let grading = grading(config);
    let mesh = generate_rect_mesh(domain.x, domain.y, config.n, grading.as_ref(), tag_rule(domain, config.outflow))?;
    let porosity = PorosityField::new(Arc::new(config.porosity_model()?), domain);
    let scale = config.inflow_scale;
    let initial = move |x: &Point| inflow_profile(&domain, scale, x);
    Ok(ProblemSetup {
        mesh: Arc::new(mesh),
        porosity,
        params: config.params(),
        forcing: None,
        boundary: Arc::new(move |x: &Point, _t: f64| initial(x)),
        initial: Arc::new(initial),
        t_final: config.t_final,
        tau: config.tau(),
        gauge: !config.outflow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use porous_flow::porous_media::Porosity;

    #[test]
    fn two_layer_data() {
        let c = RunConfig::defaults(CaseName::TwoLayer);
        let d = c.domain();
        assert_eq!(inflow_profile(&d, c.inflow_scale, &Point::new(0.0, 0.5)), Vector::new(0.25, 0.0));
        assert_eq!(inflow_profile(&d, c.inflow_scale, &Point::new(1.0, 0.3)), Vector::zeros());
        assert!(eta(0.5).abs() < 1e-16);
        let phi = c.porosity_model().unwrap();
        assert_eq!(phi.value(&Point::new(1.0, 0.49)), 0.4);
        assert_eq!(phi.value(&Point::new(1.0, 0.51)), 0.8);
    }

    #[test]
    fn sinusoidal_data() {
        let c = RunConfig::defaults(CaseName::Sinusoidal);
        let u = inflow_profile(&c.domain(), c.inflow_scale, &Point::new(0.0, PI / 2.0));
        assert!((u.x - 0.01 * PI * PI / 4.0).abs() < 1e-15);
        assert!((u.x - 0.02467).abs() < 1e-5);
        let phi = c.porosity_model().unwrap();
        assert!((phi.value(&Point::new(0.0, 0.0)) - 0.4).abs() < 1e-15);
        for p in porous_flow::verification::sample_points(&c.domain(), 40) {
            let v = phi.value(&p);
            assert!((0.15..=0.65).contains(&v));
        }
    }

    #[test]
    fn boundary_decomposition() {
        let mut c = RunConfig::defaults(CaseName::TwoLayer);
        c.n = 12;
        let setup = build_setup(&c).unwrap();
        let mesh = &setup.mesh;
        for e in mesh.boundary_edges() {
            let a = mesh.vertices()[e.vertices[0]];
            let b = mesh.vertices()[e.vertices[1]];
            let right = a.x == 3.0 && b.x == 3.0;
            assert_eq!(e.tag == BoundaryTag::Gamma1, right);
        }
        assert!(!setup.gauge);
        // g vanishes on the walls, so it matches u0 on every Dirichlet edge
        for e in mesh.boundary_edges() {
            for &v in &e.vertices {
                let x = mesh.vertices()[v];
                assert_eq!((setup.boundary)(&x, 1.0), (setup.initial)(&x));
            }
        }
        assert!(mesh.min_edge_length_near(0.5, 0.01) < 1.1 * c.h() / 18.0);
    }

    #[test]
    fn mms_setup_uses_the_manufactured_problem() {
        let mut c = RunConfig::defaults(CaseName::MmsEoc);
        c.n = 8;
        let s = build_setup(&c).unwrap();
        assert!(s.gauge && s.forcing.is_some());
        assert_eq!(s.tau, PI / 8.0);
    }
}
