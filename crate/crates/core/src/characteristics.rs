//! Upwind points and the composed terms of the material derivative.
//!
//! The scheme follows characteristics of `w = u / phi`. Composed values
//! `w o X_1(v, tau)` are evaluated pointwise at quadrature points: the foot
//! `x - v(x) tau` is located in the mesh and the velocity field evaluated
//! there, then divided by `phi` at the foot. A foot outside the domain is
//! pulled back to the first boundary crossing of the segment from `x`; on
//! Dirichlet edges the prescribed velocity replaces the discrete field.

use crate::fem_space::FeField;
use crate::mesh::BoundaryTag;
use crate::porous_media::PorosityField;
use crate::{Point, Vector};

/// Time-dependent vector field `g(x, t)`.
pub type VectorField = dyn Fn(&Point, f64) -> Vector + Send + Sync;

/// `X_1(v, tau)(x) = x - v(x) tau`, without any clipping to the domain.
#[inline]
pub fn upwind_point(x: &Point, v: &Vector, tau: f64) -> Point {
    x - v * tau
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FootStatus {
    Inside,
    /// The foot left the domain and was moved back to the boundary edge
    /// with this tag.
    Clamped(BoundaryTag),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpwindEvaluation {
    /// Velocity at the (possibly clamped) foot.
    pub value: Vector,
    /// Where the value was taken.
    pub point: Point,
    pub status: FootStatus,
}

impl UpwindEvaluation {
    pub fn clamped_tag(&self) -> Option<BoundaryTag> {
        match self.status {
            FootStatus::Inside => None,
            FootStatus::Clamped(tag) => Some(tag),
        }
    }
}

/// Evaluates the velocity `field` at the upwind point of `x` with respect
/// to the advecting velocity `v` (already evaluated at `x`).
///
/// `hint` is a triangle containing or close to `x`; `g` is the Dirichlet
/// datum, evaluated at `g_time` when the foot is clamped to a `Gamma0` edge.
pub fn eval_at_upwind(
    field: &FeField,
    x: &Point,
    v: &Vector,
    tau: f64,
    hint: Option<usize>,
    g: &VectorField,
    g_time: f64,
) -> UpwindEvaluation {
    let mesh = field.space().mesh();
    let foot = upwind_point(x, v, tau);
    if let Some(loc) = mesh.locate_point(&foot, hint) {
        return UpwindEvaluation {
            value: field.vector_at(&loc),
            point: foot,
            status: FootStatus::Inside,
        };
    }
    // `x` itself may sit on the boundary with the foot just outside; the
    // exit point is then `x`.
    let (point, tag) = match mesh.boundary_exit_point(x, &foot) {
        Ok(hit) => hit,
        Err(_) => {
            let loc = mesh
                .locate_point(x, hint)
                .expect("departure point of a characteristic must lie in the mesh");
            let tag = nearest_boundary_tag(mesh, x);
            return UpwindEvaluation {
                value: match tag {
                    BoundaryTag::Gamma0 => g(x, g_time),
                    _ => field.vector_at(&loc),
                },
                point: *x,
                status: FootStatus::Clamped(tag),
            };
        }
    };
    let value = match tag {
        BoundaryTag::Gamma0 => g(&point, g_time),
        _ => {
            let loc = mesh
                .locate_point(&point, hint)
                .expect("boundary exit point must locate");
            field.vector_at(&loc)
        }
    };
    UpwindEvaluation {
        value,
        point,
        status: FootStatus::Clamped(tag),
    }
}

fn nearest_boundary_tag(mesh: &crate::mesh::Mesh, x: &Point) -> BoundaryTag {
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

/// `w = u / phi` at the upwind point of `x`.
pub fn w_at_upwind(
    u: &FeField,
    phi: &PorosityField,
    x: &Point,
    v: &Vector,
    tau: f64,
    hint: Option<usize>,
    g: &VectorField,
    g_time: f64,
) -> (Vector, UpwindEvaluation) {
    let ev = eval_at_upwind(u, x, v, tau, hint, g, g_time);
    (ev.value / phi.value(&ev.point), ev)
}

/// Known part of the two-step material derivative at `x`:
/// `4 w1(X_1(w*, tau)) - w2(X_1(w*, 2 tau))` with `w* = 2 w1(x) - w2(x)`.
///
/// `w1` and `w2` return the macroscopic velocity at a foot given the
/// advecting velocity and the backtracking time.
pub fn ab2_bracket<F1, F2>(w1_here: &Vector, w2_here: &Vector, tau: f64, w1: F1, w2: F2) -> Vector
where
    F1: FnOnce(&Vector, f64) -> Vector,
    F2: FnOnce(&Vector, f64) -> Vector,
{
    let w_star = 2.0 * w1_here - w2_here;
    4.0 * w1(&w_star, tau) - w2(&w_star, 2.0 * tau)
}

/// The previous two velocity levels as seen from the characteristics.
#[derive(Clone, Copy)]
pub struct VelocityHistory<'a> {
    pub phi: &'a PorosityField,
    pub g: &'a VectorField,
}

impl VelocityHistory<'_> {
    /// `phi(x) [4 w^{k-1} o X_1(w*, tau) - w^{k-2} o X_1(w*, 2 tau)](x)`.
    ///
    /// `u1_here`, `u2_here` are the two velocity levels at `x` and `hint`
    /// the element containing `x`. Returns the term and the number of feet
    /// that had to be clamped.
    #[allow(clippy::too_many_arguments)]
    pub fn ab2_material_term(
        &self,
        u1: &FeField,
        u2: &FeField,
        x: &Point,
        u1_here: &Vector,
        u2_here: &Vector,
        tau: f64,
        hint: Option<usize>,
    ) -> (Vector, usize) {
        let phi_x = self.phi.value(x);
        let t1 = u1.time.unwrap_or(0.0);
        let t2 = u2.time.unwrap_or(0.0);
        let clamped = std::cell::Cell::new(0);
        let bracket = ab2_bracket(
            &(u1_here / phi_x),
            &(u2_here / phi_x),
            tau,
            |v, s| {
                let (w, ev) = w_at_upwind(u1, self.phi, x, v, s, hint, self.g, t1);
                clamped.set(clamped.get() + usize::from(ev.status != FootStatus::Inside));
                w
            },
            |v, s| {
                let (w, ev) = w_at_upwind(u2, self.phi, x, v, s, hint, self.g, t2);
                clamped.set(clamped.get() + usize::from(ev.status != FootStatus::Inside));
                w
            },
        );
        (bracket * phi_x, clamped.get())
    }

    /// `phi(x) (w^0 o X_1(w^0, tau))(x)`, the first-order composed term.
    pub fn lg1_material_term(
        &self,
        u0: &FeField,
        x: &Point,
        u0_here: &Vector,
        tau: f64,
        hint: Option<usize>,
    ) -> (Vector, usize) {
        let phi_x = self.phi.value(x);
        let w0 = u0_here / phi_x;
        let (w, ev) = w_at_upwind(u0, self.phi, x, &w0, tau, hint, self.g, u0.time.unwrap_or(0.0));
        (w * phi_x, usize::from(ev.status != FootStatus::Inside))
    }
}
