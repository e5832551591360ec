//! Domain primitives shared by every model: measurement axes, ±1 outcomes,
//! hidden states and the distributions they are drawn from.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{sphere_nodes, QuadratureSpec};
use crate::rng::RandomStream;

/// A measurement direction, always unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    x: f64,
    y: f64,
    z: f64,
}

impl Axis {
    /// Builds an axis from any non-zero finite vector, renormalizing it.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(invalid(format!("axis components must be finite, got ({x}, {y}, {z})")));
        }
        let norm = (x * x + y * y + z * z).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(invalid("axis vector must be non-zero"));
        }
        Ok(Self { x: x / norm, y: y / norm, z: z / norm })
    }

    /// Axis in the x–z measurement plane at angle `theta` (radians) from +z.
    pub fn from_planar_angle(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(invalid(format!("planar angle must be finite, got {theta}")));
        }
        Self::new(theta.sin(), 0.0, theta.cos())
    }

    pub fn from_planar_degrees(degrees: f64) -> Result<Self> {
        Self::from_planar_angle(degrees.to_radians())
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Inner product clamped to `[-1, 1]`; identical axes give exactly 1.
    pub fn dot(&self, other: &Axis) -> f64 {
        if self == other {
            return 1.0;
        }
        (self.x * other.x + self.y * other.y + self.z * other.z).clamp(-1.0, 1.0)
    }

    /// Projection of a hidden state's first three coordinates onto this axis.
    #[inline]
    pub fn project(&self, lambda: &HiddenState) -> f64 {
        let c = lambda.coords();
        self.x * c[0] + self.y * c[1] + self.z * c[2]
    }

    /// Included angle in `[0, π]`.
    pub fn angle_to(&self, other: &Axis) -> f64 {
        self.dot(other).acos()
    }

    /// The planar angle in `[0, 2π)`, if the axis lies in the x–z plane.
    pub fn planar_angle(&self) -> Option<f64> {
        if self.y.abs() > 1e-9 {
            return None;
        }
        Some(self.x.atan2(self.z).rem_euclid(2.0 * PI))
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6}, {:.6})", self.x, self.y, self.z)
    }
}

/// `axis_from_planar_angle` as a free function.
pub fn axis_from_planar_angle(theta: f64) -> Result<Axis> {
    Axis::from_planar_angle(theta)
}

pub fn dot(a: &Axis, b: &Axis) -> f64 {
    a.dot(b)
}

/// A measurement outcome, ±1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    /// `sign(t)` with the convention `sign(0) = +1`.
    #[inline]
    pub fn from_sign(t: f64) -> Self {
        if t >= 0.0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    pub fn from_value(value: i32) -> Result<Self> {
        match value {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            v => Err(invalid(format!("outcome must be +1 or -1, got {v}"))),
        }
    }

    #[inline]
    pub fn value(self) -> i32 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        self.value() as f64
    }

    #[inline]
    pub fn flip(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }
}

impl std::ops::Neg for Outcome {
    type Output = Outcome;

    fn neg(self) -> Outcome {
        self.flip()
    }
}

/// A point λ in a model's hidden-state space.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    coords: SmallVec<[f64; 4]>,
}

impl HiddenState {
    pub fn new(coords: impl IntoIterator<Item = f64>) -> Self {
        Self { coords: coords.into_iter().collect() }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dimension(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

type Sampler = dyn Fn(&mut RandomStream) -> HiddenState + Send + Sync;

/// The preparation distribution ρ(λ).
///
/// A distribution either carries its own quadrature nodes, or declares itself
/// supported on the unit sphere so nodes can be generated from a
/// [`QuadratureSpec`].
#[derive(Clone)]
pub struct HiddenDistribution {
    dimension: usize,
    sampler: Arc<Sampler>,
    quadrature_nodes: Option<Arc<[(HiddenState, f64)]>>,
    sphere_supported: bool,
}

impl fmt::Debug for HiddenDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HiddenDistribution")
            .field("dimension", &self.dimension)
            .field("quadrature_nodes", &self.quadrature_nodes.as_ref().map(|n| n.len()))
            .field("sphere_supported", &self.sphere_supported)
            .finish()
    }
}

impl HiddenDistribution {
    /// Uniform measure on the unit sphere in three dimensions.
    pub fn uniform_sphere() -> Self {
        Self { dimension: 3, sampler: Arc::new(sample_uniform_sphere), quadrature_nodes: None, sphere_supported: true }
    }

    /// Every draw returns `lambda`.
    pub fn point_mass(lambda: HiddenState) -> Self {
        let dimension = lambda.dimension();
        let nodes: Arc<[(HiddenState, f64)]> = vec![(lambda.clone(), 1.0)].into();
        Self {
            dimension,
            sampler: Arc::new(move |_| lambda.clone()),
            quadrature_nodes: Some(nodes),
            sphere_supported: false,
        }
    }

    /// Finite distribution over weighted states. Weights must be non-negative
    /// and sum to one.
    pub fn discrete(nodes: Vec<(HiddenState, f64)>) -> Result<Self> {
        let dimension = validate_nodes(&nodes)?;
        let nodes: Arc<[(HiddenState, f64)]> = nodes.into();
        let table = nodes.clone();
        let sampler = move |stream: &mut RandomStream| {
            let u = stream.uniform();
            let mut acc = 0.0;
            for (lambda, w) in table.iter() {
                acc += w;
                if u < acc {
                    return lambda.clone();
                }
            }
            table
                .iter()
                .rev()
                .find(|(_, w)| *w > 0.0)
                .map(|(l, _)| l.clone())
                .unwrap_or_else(|| table[table.len() - 1].0.clone())
        };
        Ok(Self { dimension, sampler: Arc::new(sampler), quadrature_nodes: Some(nodes), sphere_supported: false })
    }

    /// A distribution known only through its sampler. It has no quadrature
    /// support, so only Monte Carlo estimators accept it.
    pub fn from_sampler(
        dimension: usize,
        sampler: impl Fn(&mut RandomStream) -> HiddenState + Send + Sync + 'static,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(invalid("hidden-state dimension must be positive"));
        }
        Ok(Self { dimension, sampler: Arc::new(sampler), quadrature_nodes: None, sphere_supported: false })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_sphere_supported(&self) -> bool {
        self.sphere_supported
    }

    pub fn quadrature_nodes(&self) -> Option<&[(HiddenState, f64)]> {
        self.quadrature_nodes.as_deref()
    }

    /// Draws one λ; a pure function of the stream state.
    pub fn sample(&self, stream: &mut RandomStream) -> HiddenState {
        (self.sampler)(stream)
    }

    /// Quadrature nodes for ∫dλ ρ(λ): the distribution's own nodes if it has
    /// them, otherwise the sphere product rule.
    pub fn nodes(&self, quad: &QuadratureSpec) -> Result<Vec<(HiddenState, f64)>> {
        if let Some(nodes) = &self.quadrature_nodes {
            return Ok(nodes.to_vec());
        }
        if self.sphere_supported {
            return Ok(sphere_nodes(quad));
        }
        Err(Error::UnsupportedDistribution("distribution has neither quadrature nodes nor sphere support".into()))
    }
}

/// `sample_hidden` as a free function.
pub fn sample_hidden(dist: &HiddenDistribution, stream: &mut RandomStream) -> HiddenState {
    dist.sample(stream)
}

fn sample_uniform_sphere(stream: &mut RandomStream) -> HiddenState {
    // Archimedes: z uniform on [-1, 1], azimuth uniform.
    let z = 2.0 * stream.uniform() - 1.0;
    let phi = 2.0 * PI * stream.uniform();
    let r = (1.0 - z * z).max(0.0).sqrt();
    HiddenState::new([r * phi.cos(), r * phi.sin(), z])
}

fn validate_nodes(nodes: &[(HiddenState, f64)]) -> Result<usize> {
    let Some((first, _)) = nodes.first() else {
        return Err(invalid("discrete distribution needs at least one node"));
    };
    let dimension = first.dimension();
    if dimension == 0 {
        return Err(invalid("hidden-state dimension must be positive"));
    }
    let mut total = 0.0;
    for (lambda, w) in nodes {
        if lambda.dimension() != dimension {
            return Err(invalid(format!("node dimension {} differs from {dimension}", lambda.dimension())));
        }
        if !(w.is_finite() && *w >= 0.0) {
            return Err(invalid(format!("quadrature weight {w} must be finite and non-negative")));
        }
        total += w;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("quadrature weights sum to {total}, expected 1")));
    }
    Ok(dimension)
}

/// How a [`CorrelationEstimate`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

/// A value of E(â, b̂) with its error metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub method: Method,
}

impl CorrelationEstimate {
    pub fn exact(value: f64, method: Method) -> Self {
        Self { value, stderr: 0.0, n_samples: 0, method }
    }

    /// Whether the estimate respects `|E| ≤ 1` up to its error model.
    pub fn is_physical(&self) -> bool {
        match self.method {
            Method::MonteCarlo => self.value.abs() <= 1.0 + 3.0 * self.stderr,
            _ => self.value.abs() <= 1.0 + 1e-9,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamFactory;
    use std::f64::consts::FRAC_PI_2;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn planar_axis_examples() {
        let a = axis_from_planar_angle(0.0).unwrap();
        assert_eq!(a.components(), [0.0, 0.0, 1.0]);
        let b = axis_from_planar_angle(FRAC_PI_2).unwrap();
        assert!((b.x() - 1.0).abs() < 1e-15 && b.z().abs() < 1e-15);
        let c = axis_from_planar_angle(FRAC_PI_4).unwrap();
        assert!((c.x() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((c.z() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(c.y(), 0.0);
    }

    #[test]
    fn planar_angle_rejects_non_finite() {
        assert!(matches!(axis_from_planar_angle(f64::NAN), Err(Error::InvalidArgument(_))));
        assert!(axis_from_planar_angle(f64::INFINITY).is_err());
        assert!(Axis::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn dot_examples() {
        let z = Axis::new(0.0, 0.0, 1.0).unwrap();
        let x = Axis::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(dot(&z, &z), 1.0);
        assert_eq!(dot(&z, &x), 0.0);
        let d = axis_from_planar_angle(FRAC_PI_4).unwrap();
        assert!((dot(&z, &d) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn planar_angle_round_trip() {
        for deg in [0.0, 45.0, 90.0, 181.0, 359.0] {
            let a = Axis::from_planar_degrees(deg).unwrap();
            assert!((a.planar_angle().unwrap().to_degrees() - deg).abs() < 1e-9);
        }
        assert!(Axis::new(0.0, 1.0, 0.0).unwrap().planar_angle().is_none());
    }

    #[test]
    fn outcome_values() {
        assert_eq!(Outcome::from_sign(0.0), Outcome::Plus);
        assert_eq!(Outcome::from_sign(-0.0), Outcome::Plus);
        assert_eq!(Outcome::from_sign(-1e-300), Outcome::Minus);
        assert_eq!((-Outcome::Plus).value(), -1);
        assert!(Outcome::from_value(0).is_err());
        assert_eq!(Outcome::from_value(-1).unwrap(), Outcome::Minus);
    }

    #[test]
    fn uniform_sphere_samples_are_unit() {
        let dist = HiddenDistribution::uniform_sphere();
        let mut s = StreamFactory::new(3).stream(0);
        for _ in 0..1000 {
            let l = sample_hidden(&dist, &mut s);
            assert_eq!(l.dimension(), 3);
            assert!((l.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_always_returns_its_state() {
        let l0 = HiddenState::new([0.1, -0.2, 0.3, 0.4]);
        let dist = HiddenDistribution::point_mass(l0.clone());
        for seed in 0..20 {
            assert_eq!(dist.sample(&mut RandomStream::new(seed, seed)), l0);
        }
        assert_eq!(dist.quadrature_nodes().unwrap().len(), 1);
    }

    #[test]
    fn uniform_sphere_mean_is_zero() {
        let dist = HiddenDistribution::uniform_sphere();
        let mut s = RandomStream::new(11, 0);
        let n = 100_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let l = dist.sample(&mut s);
            for (m, c) in mean.iter_mut().zip(l.coords()) {
                *m += c;
            }
        }
        let bound = 5.0 / (n as f64).sqrt();
        for m in mean {
            assert!((m / n as f64).abs() < bound, "coordinate mean {}", m / n as f64);
        }
    }

    #[test]
    fn discrete_distribution_validates_weights() {
        let a = HiddenState::new([1.0]);
        let b = HiddenState::new([-1.0]);
        assert!(HiddenDistribution::discrete(vec![(a.clone(), 0.5), (b.clone(), 0.4)]).is_err());
        assert!(HiddenDistribution::discrete(vec![(a.clone(), 1.5), (b.clone(), -0.5)]).is_err());
        let d = HiddenDistribution::discrete(vec![(a, 0.25), (b, 0.75)]).unwrap();
        let mut s = RandomStream::new(5, 0);
        let n = 40_000;
        let minus = (0..n).filter(|_| d.sample(&mut s).coords()[0] < 0.0).count();
        let p = minus as f64 / n as f64;
        assert!((p - 0.75).abs() < 5.0 * (0.75f64 * 0.25 / n as f64).sqrt());
    }

    #[test]
    fn sampler_only_distribution_has_no_nodes() {
        let d = HiddenDistribution::from_sampler(1, |s| HiddenState::new([s.uniform()])).unwrap();
        assert!(matches!(d.nodes(&QuadratureSpec::default()), Err(Error::UnsupportedDistribution(_))));
    }
}
