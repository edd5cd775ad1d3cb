//! Quadrature on triangles (barycentric points) and on segments.

/// A symmetric quadrature rule on triangles.
///
/// Points are barycentric triples; weights are fractions of the triangle
/// area and sum to one, so `integral ~= area * sum(w_q f(x_q))`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    degree: usize,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Degrees for which a rule is tabulated.
    pub const AVAILABLE: [usize; 5] = [1, 2, 3, 5, 9];

    /// Smallest tabulated rule that is exact for polynomials of `degree`.
    pub fn with_degree(degree: usize) -> Option<Self> {
        match degree {
            0 | 1 => Some(Self::centroid()),
            2 => Some(Self::degree2()),
            3 => Some(Self::degree3()),
            4 | 5 => Some(Self::degree5()),
            6..=9 => Some(Self::degree9()),
            _ => None,
        }
    }

    pub fn centroid() -> Self {
        Self {
            degree: 1,
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        }
    }

    pub fn degree2() -> Self {
        let mut rule = Self::empty(2);
        rule.orbit3(2.0 / 3.0, 1.0 / 3.0);
        rule
    }

    /// Six-point degree-3 rule with positive weights (Strang-Fix).
    pub fn degree3() -> Self {
        let mut rule = Self::empty(3);
        rule.orbit6(0.659_027_622_374_092, 0.231_933_368_553_031, 1.0 / 6.0);
        rule
    }

    /// Seven-point degree-5 rule (Radon), closed form.
    pub fn degree5() -> Self {
        let s15 = 15f64.sqrt();
        let mut rule = Self::empty(5);
        rule.points.push([1.0 / 3.0; 3]);
        rule.weights.push(9.0 / 40.0);
        let a = (6.0 - s15) / 21.0;
        rule.orbit3(1.0 - 2.0 * a, (155.0 - s15) / 1200.0);
        let b = (6.0 + s15) / 21.0;
        rule.orbit3(1.0 - 2.0 * b, (155.0 + s15) / 1200.0);
        rule
    }

    /// Nineteen-point degree-9 rule (Dunavant).
    pub fn degree9() -> Self {
        let mut rule = Self::empty(9);
        rule.points.push([1.0 / 3.0; 3]);
        rule.weights.push(0.097_135_796_282_799);
        rule.orbit3(0.020_634_961_602_525, 0.031_334_700_227_139);
        rule.orbit3(0.125_820_817_014_127, 0.077_827_541_004_774);
        rule.orbit3(0.623_592_928_761_935, 0.079_647_738_927_210);
        rule.orbit3(0.910_540_973_211_095, 0.025_577_675_658_698);
        rule.orbit6(
            0.036_838_412_054_736,
            0.221_962_989_160_766,
            0.043_283_539_377_289,
        );
        // renormalize the tabulated 15-digit weights to an exact partition
        let total: f64 = rule.weights.iter().sum();
        for w in &mut rule.weights {
            *w /= total;
        }
        rule
    }

    fn empty(degree: usize) -> Self {
        Self {
            degree,
            points: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Adds the three permutations of `(a, b, b)` with `b = (1 - a) / 2`.
    fn orbit3(&mut self, a: f64, w: f64) {
        let b = 0.5 * (1.0 - a);
        for p in [[a, b, b], [b, a, b], [b, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    /// Adds the six permutations of `(a, b, c)` with `c = 1 - a - b`.
    fn orbit6(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::degree5()
    }
}

/// Gauss-Legendre rule on `[0, 1]` with weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Newton iteration on P_n starting from the Chebyshev guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Integral of `x^a y^b` over the reference triangle (0,0),(1,0),(0,1):
    /// `a! b! / (a + b + 2)!`.
    fn monomial_integral(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    fn integrate(rule: &QuadratureRule, a: u32, b: u32) -> f64 {
        rule.iter()
            .map(|(l, w)| w * l[1].powi(a as i32) * l[2].powi(b as i32))
            .sum::<f64>()
            * 0.5
    }

    #[test]
    fn rules_integrate_monomials_exactly() {
        for &d in &QuadratureRule::AVAILABLE {
            let rule = QuadratureRule::with_degree(d).unwrap();
            assert_eq!(rule.degree(), d);
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let err = (integrate(&rule, a, b) - monomial_integral(a, b)).abs();
                    assert!(err <= 1e-14, "degree {d}: x^{a} y^{b} err {err:e}");
                }
            }
        }
    }

    #[test]
    fn x2y2_is_one_over_180() {
        assert!((monomial_integral(2, 2) - 1.0 / 180.0).abs() < 1e-16);
        let rule = QuadratureRule::degree5();
        assert!((integrate(&rule, 2, 2) - 1.0 / 180.0).abs() < 1e-14);
    }

    #[test]
    fn barycentric_points_are_valid() {
        for &d in &QuadratureRule::AVAILABLE {
            let rule = QuadratureRule::with_degree(d).unwrap();
            let wsum: f64 = rule.weights().iter().sum();
            assert!((wsum - 1.0).abs() < 1e-14);
            for p in rule.points() {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                assert!(p.iter().all(|&c| c >= 0.0));
            }
        }
    }

    #[test]
    fn degree_too_high_is_unavailable() {
        assert!(QuadratureRule::with_degree(10).is_none());
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in 1..8 {
            let rule = GaussLegendre::new(n);
            for k in 0..(2 * n) as i32 {
                let approx: f64 = rule.iter().map(|(x, w)| w * x.powi(k)).sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!((approx - exact).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }
}
