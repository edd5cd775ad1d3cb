//! Finite element solver for non-stationary Navier-Stokes type flow in
//! non-homogeneous porous media.
//!
//! The velocity is discretized with continuous P2 elements and the pressure
//! with continuous P1 elements (Taylor-Hood) on structured triangulations of
//! rectangles. The inertial term is handled along characteristics of the
//! macroscopic average velocity `w = u / phi`, with a first-order initial
//! step followed by a two-step Adams-Bashforth approximation of the material
//! derivative. Drag from the pore structure follows the Ergun relation with
//! Kozeny-Carman permeability.
//!
//! Module map:
//!
//! * [`mesh`]: triangulations, boundary tags, point location.
//! * [`quadrature`]: triangle and edge quadrature rules.
//! * [`fem_space`]: P2 vector / P1 scalar spaces, fields, norms.
//! * [`porous_media`]: porosity models and drag coefficients.
//! * [`characteristics`]: upwind points and composed material terms.
//! * [`assembly`]: bilinear/trilinear forms and right-hand sides.
//! * [`saddle_solver`]: boundary conditions, pressure gauge, direct solve.
//! * [`lg_scheme`]: the time loop.
//! * [`verification`]: manufactured solutions, convergence orders, monitors.

pub mod assembly;
pub mod characteristics;
pub mod error;
pub mod fem_space;
pub mod lg_scheme;
pub mod mesh;
pub mod par;
pub mod porous_media;
pub mod quadrature;
pub mod saddle_solver;
pub mod sparse;
pub mod verification;
pub mod vtk;

pub use error::{Error, Result};

/// Positions in the plane (cm).
pub type Point = nalgebra::Point2<f64>;
/// Velocities, forces and gradients in the plane.
pub type Vector = nalgebra::Vector2<f64>;
/// 2x2 tensors, e.g. velocity gradients with `grad[(i, j)] = d u_i / d x_j`.
pub type Tensor = nalgebra::Matrix2<f64>;
