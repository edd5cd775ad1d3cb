//! Porosity models, Ergun drag coefficients and the admissibility check on
//! porosity gradients used by the stability estimate.
//!
//! Kozeny-Carman permeability `K = d_p^2 phi^3 / (a (1 - phi)^2)` and the
//! Forchheimer constant `F = b / sqrt(a phi^3)` enter the drag only through
//! `phi / K` and `F phi / sqrt(K)`. Both are evaluated in simplified closed
//! form so that `phi = 1` (infinite permeability) gives exactly zero.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mesh::Rect;
use crate::{Error, Point, Result, Vector};

/// Fluid and medium constants in CGS units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Dynamic viscosity (dyn s / cm^2).
    pub mu: f64,
    /// Density (g / cm^3).
    pub rho: f64,
    /// Particle diameter (cm).
    pub d_p: f64,
    /// Ergun viscous constant.
    pub a: f64,
    /// Ergun inertial constant.
    pub b: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            mu: 8.89e-3,
            rho: 9.951e-1,
            d_p: 5e-2,
            a: 150.0,
            b: 1.75,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu", self.mu), ("rho", self.rho), ("d_p", self.d_p), ("a", self.a), ("b", self.b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if phi > 0.0 && phi <= 1.0 {
        Ok(())
    } else {
        Err(Error::PorosityOutOfRange(phi))
    }
}

/// `phi / K(phi) = a (1 - phi)^2 / (d_p^2 phi^2)` in cm^-2.
pub fn linear_drag_coeff(phi: f64, params: &PhysicalParams) -> Result<f64> {
    check_phi(phi)?;
    Ok(linear_drag_unchecked(phi, params))
}

/// `F(phi) phi / sqrt(K(phi)) = b (1 - phi) / (d_p phi^2)` in cm^-1.
pub fn forchheimer_coeff(phi: f64, params: &PhysicalParams) -> Result<f64> {
    check_phi(phi)?;
    Ok(forchheimer_unchecked(phi, params))
}

#[inline]
pub(crate) fn linear_drag_unchecked(phi: f64, params: &PhysicalParams) -> f64 {
    let s = 1.0 - phi;
    params.a * s * s / (params.d_p * params.d_p * phi * phi)
}

#[inline]
pub(crate) fn forchheimer_unchecked(phi: f64, params: &PhysicalParams) -> f64 {
    params.b * (1.0 - phi) / (params.d_p * phi * phi)
}

/// Kozeny-Carman permeability (cm^2); infinite at `phi = 1`.
pub fn kozeny_carman_permeability(phi: f64, params: &PhysicalParams) -> Result<f64> {
    check_phi(phi)?;
    let s = 1.0 - phi;
    Ok(params.d_p * params.d_p * phi.powi(3) / (params.a * s * s))
}

/// Forchheimer constant `b / sqrt(a phi^3)`.
pub fn forchheimer_constant(phi: f64, params: &PhysicalParams) -> Result<f64> {
    check_phi(phi)?;
    Ok(params.b / (params.a * phi.powi(3)).sqrt())
}

/// Total drag force density
/// `B(u, phi) = -mu (phi/K) u - rho (F phi / sqrt K) |u| u`.
pub fn drag_force(u: &Vector, phi: f64, params: &PhysicalParams) -> Result<Vector> {
    let lin = linear_drag_coeff(phi, params)?;
    let forch = forchheimer_coeff(phi, params)?;
    Ok(-u * (params.mu * lin + params.rho * forch * u.norm()))
}

/// A scalar porosity model with its exact gradient.
pub trait Porosity: fmt::Debug + Send + Sync {
    fn value(&self, x: &Point) -> f64;
    fn gradient(&self, x: &Point) -> Vector;
}

/// The porosity models used by the built-in experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BuiltinPorosity {
    Constant { value: f64 },
    /// `[2 + sin(2 y / 5)] / 3`.
    MmsSine,
    /// `0.4 + 0.4 H_eps(y - 0.5)` with a sine-smoothed Heaviside step.
    TwoLayer { eps: f64 },
    /// `(g1 - g0)/2 sin(2y) cos(2x) + (g1 + g0)/2`.
    Sinusoidal { gamma0: f64, gamma1: f64 },
}

impl BuiltinPorosity {
    pub const TWO_LAYER_EPS: f64 = 1.0 / 360.0;
    pub const GAMMA0: f64 = 0.15;
    pub const GAMMA1: f64 = 0.65;

    pub fn two_layer() -> Self {
        BuiltinPorosity::TwoLayer {
            eps: Self::TWO_LAYER_EPS,
        }
    }

    pub fn sinusoidal() -> Self {
        BuiltinPorosity::Sinusoidal {
            gamma0: Self::GAMMA0,
            gamma1: Self::GAMMA1,
        }
    }

    pub fn name(&self) -> String {
        match self {
            BuiltinPorosity::Constant { value } => format!("constant:{value}"),
            BuiltinPorosity::MmsSine => "mms-sine".into(),
            BuiltinPorosity::TwoLayer { eps } => format!("two-layer:{eps}"),
            BuiltinPorosity::Sinusoidal { gamma0, gamma1 } => format!("sinusoidal:{gamma0},{gamma1}"),
        }
    }
}

/// Approximate Heaviside function, sine-smoothed on `|s| < eps`.
pub fn smoothed_heaviside(s: f64, eps: f64) -> f64 {
    if s >= eps {
        1.0
    } else if s <= -eps {
        0.0
    } else {
        0.5 + 0.5 * (s / eps + (std::f64::consts::PI * s / eps).sin() / std::f64::consts::PI)
    }
}

/// Derivative of [`smoothed_heaviside`]: `(1 + cos(pi s / eps)) / (2 eps)`
/// inside the band.
pub fn smoothed_heaviside_derivative(s: f64, eps: f64) -> f64 {
    if s.abs() >= eps {
        0.0
    } else {
        (1.0 + (std::f64::consts::PI * s / eps).cos()) / (2.0 * eps)
    }
}

impl Porosity for BuiltinPorosity {
    fn value(&self, x: &Point) -> f64 {
        match *self {
            BuiltinPorosity::Constant { value } => value,
            BuiltinPorosity::MmsSine => (2.0 + (0.4 * x.y).sin()) / 3.0,
            BuiltinPorosity::TwoLayer { eps } => 0.4 + 0.4 * smoothed_heaviside(x.y - 0.5, eps),
            BuiltinPorosity::Sinusoidal { gamma0, gamma1 } => {
                0.5 * (gamma1 - gamma0) * (2.0 * x.y).sin() * (2.0 * x.x).cos() + 0.5 * (gamma1 + gamma0)
            }
        }
    }

    fn gradient(&self, x: &Point) -> Vector {
        match *self {
            BuiltinPorosity::Constant { .. } => Vector::zeros(),
            BuiltinPorosity::MmsSine => Vector::new(0.0, 0.4 * (0.4 * x.y).cos() / 3.0),
            BuiltinPorosity::TwoLayer { eps } => Vector::new(0.0, 0.4 * smoothed_heaviside_derivative(x.y - 0.5, eps)),
            BuiltinPorosity::Sinusoidal { gamma0, gamma1 } => {
                let amp = gamma1 - gamma0;
                Vector::new(
                    -amp * (2.0 * x.y).sin() * (2.0 * x.x).sin(),
                    amp * (2.0 * x.y).cos() * (2.0 * x.x).cos(),
                )
            }
        }
    }
}

impl FromStr for BuiltinPorosity {
    type Err = Error;

    /// Parses `constant:<c>`, `mms-sine`, `two-layer[:eps]`,
    /// `sinusoidal[:g0,g1]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad = || Error::InvalidInput(format!("bad porosity arguments in `{s}`"));
        let num = |a: &str| a.trim().parse::<f64>().map_err(|_| bad());
        let model = match (name, args) {
            ("constant", Some(a)) => BuiltinPorosity::Constant { value: num(a)? },
            ("mms-sine", None) => BuiltinPorosity::MmsSine,
            ("two-layer", None) => Self::two_layer(),
            ("two-layer", Some(a)) => BuiltinPorosity::TwoLayer { eps: num(a)? },
            ("sinusoidal", None) => Self::sinusoidal(),
            ("sinusoidal", Some(a)) => {
                let (g0, g1) = a.split_once(',').ok_or_else(bad)?;
                BuiltinPorosity::Sinusoidal {
                    gamma0: num(g0)?,
                    gamma1: num(g1)?,
                }
            }
            _ => {
                return Err(Error::Unknown {
                    what: "porosity",
                    name: s.to_string(),
                })
            }
        };
        if let BuiltinPorosity::Constant { value } = model {
            check_phi(value)?;
        }
        Ok(model)
    }
}

/// A porosity model restricted to a rectangular domain, with sampled
/// estimates of its essential infimum and supremum.
#[derive(Clone, Debug)]
pub struct PorosityField {
    pub model: Arc<dyn Porosity>,
    pub domain: Rect,
    /// Estimate of `ess inf phi`.
    pub phi0: f64,
    /// Estimate of `ess sup phi`.
    pub phi1: f64,
}

impl PorosityField {
    pub const DEFAULT_RESOLUTION: usize = 512;

    pub fn new(model: Arc<dyn Porosity>, domain: Rect) -> Self {
        Self::with_resolution(model, domain, Self::DEFAULT_RESOLUTION)
    }

    /// Samples `phi` on a `(n + 1) x (n + 1)` node grid to estimate bounds.
    pub fn with_resolution(model: Arc<dyn Porosity>, domain: Rect, n: usize) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in grid(&domain, n) {
            let v = model.value(&p);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Self {
            model,
            domain,
            phi0: lo,
            phi1: hi,
        }
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.model.value(x)
    }

    pub fn gradient(&self, x: &Point) -> Vector {
        self.model.gradient(x)
    }
}

fn grid(domain: &Rect, n: usize) -> impl Iterator<Item = Point> + '_ {
    let n = n.max(1);
    (0..=n).flat_map(move |j| {
        (0..=n).map(move |i| {
            Point::new(
                domain.x.0 + domain.width() * i as f64 / n as f64,
                domain.y.0 + domain.height() * j as f64 / n as f64,
            )
        })
    })
}

/// `alpha = a (1 - phi1)^2 / (d_p^2 phi1^2)`, a lower bound of `phi / K`.
pub fn alpha_constant(field: &PorosityField, params: &PhysicalParams) -> f64 {
    linear_drag_unchecked(field.phi1.min(1.0), params)
}

/// `G_phi = [|grad phi| - (2b/d_p)(1 - phi)] / (2 phi^2)`.
pub fn g_phi(phi: f64, grad_phi: &Vector, params: &PhysicalParams) -> f64 {
    (grad_phi.norm() - 2.0 * params.b / params.d_p * (1.0 - phi)) / (2.0 * phi * phi)
}

/// Outcome of the grid check of `|grad phi| <= (2b/d_p)(1 - phi)` and
/// `inf phi > 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hypothesis2Report {
    pub porosity: String,
    pub resolution: usize,
    /// `max (|grad phi| - (2b/d_p)(1 - phi))` over the grid (cm^-1).
    pub max_margin: f64,
    pub argmax: [f64; 2],
    /// `|grad phi|` at the argmax.
    pub gradient_at_argmax: f64,
    /// `(2b/d_p)(1 - phi)` at the argmax.
    pub bound_at_argmax: f64,
    pub violation_count: usize,
    /// Up to 32 violating grid points.
    pub violations: Vec<[f64; 2]>,
    pub phi0: f64,
    pub phi0_positive: bool,
    pub gradient_condition: bool,
    pub pass: bool,
}

impl fmt::Display for Hypothesis2Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "porosity:            {}", self.porosity)?;
        writeln!(f, "grid:                {0}x{0}", self.resolution)?;
        writeln!(f, "min phi:             {:.6e} ({})", self.phi0, if self.phi0_positive { "positive" } else { "NOT positive" })?;
        writeln!(
            f,
            "max margin:          {:.6e} cm^-1 at ({:.6}, {:.6}) (|grad phi| = {:.6e}, bound = {:.6e})",
            self.max_margin, self.argmax[0], self.argmax[1], self.gradient_at_argmax, self.bound_at_argmax
        )?;
        writeln!(f, "violating samples:   {}", self.violation_count)?;
        write!(f, "result:              {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Samples the gradient condition on a `(n + 1) x (n + 1)` node grid.
pub fn validate_hypothesis2(field: &PorosityField, params: &PhysicalParams, resolution: usize) -> Hypothesis2Report {
    let factor = 2.0 * params.b / params.d_p;
    let mut report = Hypothesis2Report {
        porosity: format!("{:?}", field.model),
        resolution,
        max_margin: f64::NEG_INFINITY,
        argmax: [0.0; 2],
        gradient_at_argmax: 0.0,
        bound_at_argmax: 0.0,
        violation_count: 0,
        violations: Vec::new(),
        phi0: f64::INFINITY,
        phi0_positive: false,
        gradient_condition: false,
        pass: false,
    };
    for p in grid(&field.domain, resolution) {
        let phi = field.value(&p);
        let grad = field.gradient(&p).norm();
        let bound = factor * (1.0 - phi);
        let margin = grad - bound;
        report.phi0 = report.phi0.min(phi);
        if margin > report.max_margin {
            report.max_margin = margin;
            report.argmax = [p.x, p.y];
            report.gradient_at_argmax = grad;
            report.bound_at_argmax = bound;
        }
        if margin > 0.0 {
            report.violation_count += 1;
            if report.violations.len() < 32 {
                report.violations.push([p.x, p.y]);
            }
        }
    }
    report.phi0_positive = report.phi0 > 0.0;
    report.gradient_condition = report.max_margin <= 0.0;
    report.pass = report.phi0_positive && report.gradient_condition;
    report
}
