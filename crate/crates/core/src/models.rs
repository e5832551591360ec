//! Concrete theories: deterministic and stochastic local hidden-variable
//! models, the quantum singlet reference and a signaling negative control.
//!
//! Locality is carried by the procedure signatures. Alice's outcome or
//! probability function is handed only her own axis and λ, never Bob's
//! setting. The signaling control is the one type whose Alice-side function
//! also receives the distant axis.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::domain::{Axis, HiddenDistribution, HiddenState, Outcome};
use crate::error::{invalid, Error, Result};
use crate::rng::RandomStream;

/// Tolerance on probability normalization.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

pub type OutcomeFn = Arc<dyn Fn(&Axis, &HiddenState) -> Outcome + Send + Sync>;
pub type ProbabilityFn = Arc<dyn Fn(Outcome, &Axis, &HiddenState) -> f64 + Send + Sync>;
pub type SignalingOutcomeFn = Arc<dyn Fn(&Axis, &Axis, &HiddenState) -> Outcome + Send + Sync>;
/// Analytic correlation `E(â, b̂)` when a model has one.
pub type CorrelationFn = Arc<dyn Fn(&Axis, &Axis) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Alice,
    Bob,
}

/// Outcome functions `A(â, λ)`, `B(b̂, λ)` plus the preparation distribution.
#[derive(Clone)]
pub struct DeterministicLocalModel {
    name: String,
    dist: HiddenDistribution,
    alice: OutcomeFn,
    bob: OutcomeFn,
    claims_anticorrelation: bool,
    closed_form: Option<CorrelationFn>,
}

impl DeterministicLocalModel {
    pub fn new(
        name: impl Into<String>,
        dist: HiddenDistribution,
        alice: impl Fn(&Axis, &HiddenState) -> Outcome + Send + Sync + 'static,
        bob: impl Fn(&Axis, &HiddenState) -> Outcome + Send + Sync + 'static,
        claims_anticorrelation: bool,
    ) -> Self {
        Self {
            name: name.into(),
            dist,
            alice: Arc::new(alice),
            bob: Arc::new(bob),
            claims_anticorrelation,
            closed_form: None,
        }
    }

    pub fn with_closed_form(mut self, f: impl Fn(&Axis, &Axis) -> f64 + Send + Sync + 'static) -> Self {
        self.closed_form = Some(Arc::new(f));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn distribution(&self) -> &HiddenDistribution {
        &self.dist
    }

    pub fn claims_anticorrelation(&self) -> bool {
        self.claims_anticorrelation
    }

    #[inline]
    pub fn alice_outcome(&self, axis: &Axis, lambda: &HiddenState) -> Outcome {
        (self.alice)(axis, lambda)
    }

    #[inline]
    pub fn bob_outcome(&self, axis: &Axis, lambda: &HiddenState) -> Outcome {
        (self.bob)(axis, lambda)
    }

    pub fn outcome(&self, side: Side, axis: &Axis, lambda: &HiddenState) -> Outcome {
        match side {
            Side::Alice => self.alice_outcome(axis, lambda),
            Side::Bob => self.bob_outcome(axis, lambda),
        }
    }

    pub fn closed_form(&self, a: &Axis, b: &Axis) -> Option<f64> {
        self.closed_form.as_ref().map(|f| f(a, b))
    }
}

impl fmt::Debug for DeterministicLocalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeterministicLocalModel")
            .field("name", &self.name)
            .field("dist", &self.dist)
            .field("claims_anticorrelation", &self.claims_anticorrelation)
            .finish_non_exhaustive()
    }
}

/// Local probability tables `P(A | â, λ)`, `P(B | b̂, λ)` plus the
/// preparation distribution.
#[derive(Clone)]
pub struct StochasticLocalModel {
    name: String,
    dist: HiddenDistribution,
    alice: ProbabilityFn,
    bob: ProbabilityFn,
    closed_form: Option<CorrelationFn>,
}

impl StochasticLocalModel {
    pub fn new(
        name: impl Into<String>,
        dist: HiddenDistribution,
        alice_prob: impl Fn(Outcome, &Axis, &HiddenState) -> f64 + Send + Sync + 'static,
        bob_prob: impl Fn(Outcome, &Axis, &HiddenState) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), dist, alice: Arc::new(alice_prob), bob: Arc::new(bob_prob), closed_form: None }
    }

    pub fn with_closed_form(mut self, f: impl Fn(&Axis, &Axis) -> f64 + Send + Sync + 'static) -> Self {
        self.closed_form = Some(Arc::new(f));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn distribution(&self) -> &HiddenDistribution {
        &self.dist
    }

    #[inline]
    pub fn alice_prob(&self, outcome: Outcome, axis: &Axis, lambda: &HiddenState) -> f64 {
        (self.alice)(outcome, axis, lambda)
    }

    #[inline]
    pub fn bob_prob(&self, outcome: Outcome, axis: &Axis, lambda: &HiddenState) -> f64 {
        (self.bob)(outcome, axis, lambda)
    }

    pub fn prob(&self, side: Side, outcome: Outcome, axis: &Axis, lambda: &HiddenState) -> f64 {
        match side {
            Side::Alice => self.alice_prob(outcome, axis, lambda),
            Side::Bob => self.bob_prob(outcome, axis, lambda),
        }
    }

    /// Validated `(P(+1), P(−1))` for one side.
    pub fn probabilities(&self, side: Side, axis: &Axis, lambda: &HiddenState) -> Result<(f64, f64)> {
        let plus = self.prob(side, Outcome::Plus, axis, lambda);
        let minus = self.prob(side, Outcome::Minus, axis, lambda);
        let in_range = |p: f64| (-PROBABILITY_TOLERANCE..=1.0 + PROBABILITY_TOLERANCE).contains(&p);
        if !in_range(plus) || !in_range(minus) {
            return Err(Error::ModelInvariant(format!(
                "{}: {side:?} probabilities ({plus}, {minus}) leave [0, 1] at axis {axis}",
                self.name
            )));
        }
        if ((plus + minus) - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::ModelInvariant(format!(
                "{}: {side:?} probabilities sum to {} at axis {axis}",
                self.name,
                plus + minus
            )));
        }
        Ok((plus, minus))
    }

    pub fn closed_form(&self, a: &Axis, b: &Axis) -> Option<f64> {
        self.closed_form.as_ref().map(|f| f(a, b))
    }
}

impl fmt::Debug for StochasticLocalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StochasticLocalModel")
            .field("name", &self.name)
            .field("dist", &self.dist)
            .finish_non_exhaustive()
    }
}

/// Average outcome `P(+1 | axis, λ) − P(−1 | axis, λ)` on one side.
pub fn mean_value(model: &StochasticLocalModel, side: Side, axis: &Axis, lambda: &HiddenState) -> Result<f64> {
    let (plus, minus) = model.probabilities(side, axis, lambda)?;
    Ok(plus - minus)
}

/// Views a deterministic model as point-mass probability tables.
pub fn lift_deterministic(model: &DeterministicLocalModel) -> StochasticLocalModel {
    let point_mass = |f: OutcomeFn| {
        move |o: Outcome, axis: &Axis, lambda: &HiddenState| {
            if f(axis, lambda) == o {
                1.0
            } else {
                0.0
            }
        }
    };
    StochasticLocalModel {
        name: format!("lifted_{}", model.name),
        dist: model.dist.clone(),
        alice: Arc::new(point_mass(model.alice.clone())),
        bob: Arc::new(point_mass(model.bob.clone())),
        closed_form: model.closed_form.clone(),
    }
}

/// λ uniform on the sphere, `A = sign(â·λ)`, `B = −sign(b̂·λ)`.
///
/// Satisfies perfect anti-correlation; its correlation is `−1 + 2θ/π`.
pub fn make_sign_sphere_model() -> DeterministicLocalModel {
    DeterministicLocalModel::new(
        "sign_sphere",
        HiddenDistribution::uniform_sphere(),
        |a, l| Outcome::from_sign(a.project(l)),
        |b, l| -Outcome::from_sign(b.project(l)),
        true,
    )
    .with_closed_form(|a, b| -1.0 + 2.0 * a.angle_to(b) / PI)
}

/// A deterministic anti-correlated family: `A(x̂, λ) = sign((W x̂)·λ − offset)`
/// and `B = −A`, λ uniform on the sphere.
pub fn make_warped_sign_model(warp: [[f64; 3]; 3], offset: f64) -> Result<DeterministicLocalModel> {
    if !offset.is_finite() || warp.iter().flatten().any(|w| !w.is_finite()) {
        return Err(invalid("warp matrix and offset must be finite"));
    }
    let outcome = move |x: &Axis, l: &HiddenState| {
        let v = x.components();
        let c = l.coords();
        let mut t = -offset;
        for (row, lc) in warp.iter().zip(c) {
            t += (row[0] * v[0] + row[1] * v[1] + row[2] * v[2]) * lc;
        }
        Outcome::from_sign(t)
    };
    Ok(DeterministicLocalModel::new(
        "warped_sign",
        HiddenDistribution::uniform_sphere(),
        outcome,
        move |x, l| -outcome(x, l),
        true,
    ))
}

/// λ uniform on the sphere; `P(±1 | â, λ) = (1 ± bias·â·λ)/2` for Alice and
/// the same with the sign of the bias flipped for Bob.
pub fn make_local_noise_model(bias: f64) -> Result<StochasticLocalModel> {
    if !bias.is_finite() || bias.abs() > 1.0 {
        return Err(invalid(format!("bias must lie in [-1, 1], got {bias}")));
    }
    let table = move |sign: f64| {
        move |o: Outcome, axis: &Axis, l: &HiddenState| 0.5 * (1.0 + o.as_f64() * sign * bias * axis.project(l))
    };
    Ok(StochasticLocalModel::new("local_noise", HiddenDistribution::uniform_sphere(), table(1.0), table(-1.0))
        .with_closed_form(move |a, b| -bias * bias * a.dot(b) / 3.0))
}

/// The singlet-state reference: closed-form correlation `−â·b̂` and a trial
/// sampler. It has no hidden state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QuantumSingletReference;

impl QuantumSingletReference {
    pub fn correlation(&self, a: &Axis, b: &Axis) -> f64 {
        quantum_correlation(a, b)
    }

    /// `P(A, B | â, b̂) = (1 − A·B·(â·b̂))/4`.
    pub fn joint_probability(&self, alice: Outcome, bob: Outcome, a: &Axis, b: &Axis) -> f64 {
        0.25 * (1.0 - (alice.value() * bob.value()) as f64 * a.dot(b))
    }

    pub fn marginal(&self, side: Side, outcome: Outcome, a: &Axis, b: &Axis) -> f64 {
        Outcome::BOTH
            .iter()
            .map(|&other| match side {
                Side::Alice => self.joint_probability(outcome, other, a, b),
                Side::Bob => self.joint_probability(other, outcome, a, b),
            })
            .sum()
    }

    pub fn sample_pair(&self, a: &Axis, b: &Axis, stream: &mut RandomStream) -> (Outcome, Outcome) {
        quantum_sample_pair(a, b, stream)
    }
}

pub fn quantum_correlation(a: &Axis, b: &Axis) -> f64 {
    -a.dot(b)
}

/// Draws one joint outcome from the singlet statistics.
pub fn quantum_sample_pair(a: &Axis, b: &Axis, stream: &mut RandomStream) -> (Outcome, Outcome) {
    let alice = if stream.coin() { Outcome::Plus } else { Outcome::Minus };
    // P(B = A) = (1 − â·b̂)/2
    let same = stream.uniform() < 0.5 * (1.0 - a.dot(b));
    let bob = if same { alice } else { -alice };
    (alice, bob)
}

/// Negative control: Alice's outcome function reads Bob's setting.
#[derive(Clone)]
pub struct SignalingReferenceModel {
    name: String,
    dist: HiddenDistribution,
    alice: SignalingOutcomeFn,
    bob: OutcomeFn,
}

impl SignalingReferenceModel {
    pub fn new(
        name: impl Into<String>,
        dist: HiddenDistribution,
        alice: impl Fn(&Axis, &Axis, &HiddenState) -> Outcome + Send + Sync + 'static,
        bob: impl Fn(&Axis, &HiddenState) -> Outcome + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), dist, alice: Arc::new(alice), bob: Arc::new(bob) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn distribution(&self) -> &HiddenDistribution {
        &self.dist
    }

    #[inline]
    pub fn alice_outcome(&self, a: &Axis, b: &Axis, lambda: &HiddenState) -> Outcome {
        (self.alice)(a, b, lambda)
    }

    #[inline]
    pub fn bob_outcome(&self, b: &Axis, lambda: &HiddenState) -> Outcome {
        (self.bob)(b, lambda)
    }
}

impl fmt::Debug for SignalingReferenceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SignalingReferenceModel")
            .field("name", &self.name)
            .field("dist", &self.dist)
            .finish_non_exhaustive()
    }
}

/// Reproduces the singlet correlation `−â·b̂` by letting Alice read b̂.
///
/// λ uniform on the sphere. Bob answers `sign(λₓ)`; Alice copies the opposite
/// answer when `λ_y < â·b̂` and Bob's answer otherwise. `λ_y` is uniform on
/// `[-1, 1]` and independent of `sign(λₓ)`.
pub fn make_signaling_demo() -> SignalingReferenceModel {
    let bob = |_: &Axis, l: &HiddenState| Outcome::from_sign(l.coords()[0]);
    SignalingReferenceModel::new(
        "signaling_demo",
        HiddenDistribution::uniform_sphere(),
        move |a, b, l| {
            let answer = bob(b, l);
            if l.coords()[1] < a.dot(b) {
                -answer
            } else {
                answer
            }
        },
        bob,
    )
}

/// Anything a correlation can be computed for.
#[derive(Debug, Clone)]
pub enum Theory {
    Deterministic(DeterministicLocalModel),
    Stochastic(StochasticLocalModel),
    Signaling(SignalingReferenceModel),
    QuantumSinglet,
}

/// Names accepted by [`Theory::by_name`].
pub const BUILTIN_MODELS: [&str; 4] = ["sign_sphere", "local_noise", "quantum_singlet", "signaling_demo"];

impl Theory {
    /// Built-in theories. `local_noise` uses bias 1.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "sign_sphere" => Ok(Theory::Deterministic(make_sign_sphere_model())),
            "local_noise" => Ok(Theory::Stochastic(make_local_noise_model(1.0)?)),
            "quantum_singlet" => Ok(Theory::QuantumSinglet),
            "signaling_demo" => Ok(Theory::Signaling(make_signaling_demo())),
            other => Err(invalid(format!("unknown model '{other}' (expected one of {})", BUILTIN_MODELS.join(", ")))),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Theory::Deterministic(m) => m.name(),
            Theory::Stochastic(m) => m.name(),
            Theory::Signaling(m) => m.name(),
            Theory::QuantumSinglet => "quantum_singlet",
        }
    }

    /// Analytic correlation if the theory provides one.
    pub fn closed_form(&self, a: &Axis, b: &Axis) -> Option<f64> {
        match self {
            Theory::Deterministic(m) => m.closed_form(a, b),
            Theory::Stochastic(m) => m.closed_form(a, b),
            Theory::Signaling(_) => None,
            Theory::QuantumSinglet => Some(quantum_correlation(a, b)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamFactory;
    use std::f64::consts::FRAC_PI_4;

    fn random_axis(s: &mut RandomStream) -> Axis {
        let z = 2.0 * s.uniform() - 1.0;
        let phi = 2.0 * PI * s.uniform();
        let r = (1.0 - z * z).sqrt();
        Axis::new(r * phi.cos(), r * phi.sin(), z).unwrap()
    }

    fn constant_table(p_plus: f64) -> StochasticLocalModel {
        StochasticLocalModel::new(
            "const",
            HiddenDistribution::uniform_sphere(),
            move |o, _, _| if o == Outcome::Plus { p_plus } else { 1.0 - p_plus },
            |_, _, _| 0.5,
        )
    }

    #[test]
    fn mean_value_examples() {
        let z = Axis::new(0.0, 0.0, 1.0).unwrap();
        let l = HiddenState::new([0.0, 0.0, 1.0]);
        assert_eq!(mean_value(&constant_table(1.0), Side::Alice, &z, &l).unwrap(), 1.0);
        assert_eq!(mean_value(&constant_table(0.5), Side::Alice, &z, &l).unwrap(), 0.0);
        assert_eq!(mean_value(&constant_table(0.75), Side::Alice, &z, &l).unwrap(), 0.5);
    }

    #[test]
    fn mean_value_rejects_malformed_tables() {
        let z = Axis::new(0.0, 0.0, 1.0).unwrap();
        let l = HiddenState::new([0.0, 0.0, 1.0]);
        let bad = StochasticLocalModel::new(
            "bad",
            HiddenDistribution::uniform_sphere(),
            |o, _, _| if o == Outcome::Plus { 1.2 } else { -0.2 },
            |_, _, _| 0.5,
        );
        assert!(matches!(mean_value(&bad, Side::Alice, &z, &l), Err(Error::ModelInvariant(_))));
        let unnormalized = StochasticLocalModel::new(
            "unnormalized",
            HiddenDistribution::uniform_sphere(),
            |_, _, _| 0.5,
            |_, _, _| 0.6,
        );
        assert!(mean_value(&unnormalized, Side::Alice, &z, &l).is_ok());
        assert!(matches!(mean_value(&unnormalized, Side::Bob, &z, &l), Err(Error::ModelInvariant(_))));
    }

    #[test]
    fn lift_of_constant_model_is_point_mass() {
        let always_plus = DeterministicLocalModel::new(
            "plus",
            HiddenDistribution::uniform_sphere(),
            |_, _| Outcome::Plus,
            |_, _| Outcome::Minus,
            false,
        );
        let lifted = lift_deterministic(&always_plus);
        let a = Axis::from_planar_degrees(30.0).unwrap();
        let l = HiddenState::new([1.0, 0.0, 0.0]);
        assert_eq!(lifted.alice_prob(Outcome::Plus, &a, &l), 1.0);
        assert_eq!(lifted.alice_prob(Outcome::Minus, &a, &l), 0.0);
    }

    #[test]
    fn lift_preserves_deterministic_outcomes() {
        let model = make_sign_sphere_model();
        let lifted = lift_deterministic(&model);
        let mut s = StreamFactory::new(9).stream(0);
        for _ in 0..1000 {
            let a = random_axis(&mut s);
            let l = model.distribution().sample(&mut s);
            for side in [Side::Alice, Side::Bob] {
                let m = mean_value(&lifted, side, &a, &l).unwrap();
                assert_eq!(m, model.outcome(side, &a, &l).as_f64());
            }
        }
    }

    #[test]
    fn stochastic_models_are_normalized() {
        let mut s = StreamFactory::new(21).stream(0);
        let models = [
            make_local_noise_model(1.0).unwrap(),
            make_local_noise_model(-0.3).unwrap(),
            lift_deterministic(&make_sign_sphere_model()),
        ];
        for m in &models {
            for _ in 0..1000 {
                let a = random_axis(&mut s);
                let l = m.distribution().sample(&mut s);
                for side in [Side::Alice, Side::Bob] {
                    let (p, q) = m.probabilities(side, &a, &l).unwrap();
                    assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
                    assert!((p + q - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn local_noise_examples() {
        assert!(matches!(make_local_noise_model(1.01), Err(Error::InvalidArgument(_))));
        assert!(make_local_noise_model(f64::NAN).is_err());
        let m = make_local_noise_model(1.0).unwrap();
        let a = Axis::new(0.0, 0.0, 1.0).unwrap();
        let l = HiddenState::new([0.0, 0.0, 1.0]);
        assert_eq!(m.alice_prob(Outcome::Plus, &a, &l), 1.0);
        assert_eq!(m.bob_prob(Outcome::Plus, &a, &l), 0.0);
        let zero_bias = make_local_noise_model(0.0).unwrap();
        assert_eq!(zero_bias.closed_form(&a, &a), Some(0.0));
    }

    #[test]
    fn quantum_closed_form_examples() {
        let z = Axis::new(0.0, 0.0, 1.0).unwrap();
        let x = Axis::new(1.0, 0.0, 0.0).unwrap();
        let d = Axis::from_planar_angle(FRAC_PI_4).unwrap();
        assert_eq!(quantum_correlation(&z, &z), -1.0);
        assert_eq!(quantum_correlation(&z, &x), 0.0);
        assert!((quantum_correlation(&z, &d) + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn quantum_joint_table_is_valid_with_flat_marginals() {
        let q = QuantumSingletReference;
        let mut s = StreamFactory::new(2).stream(0);
        for _ in 0..1000 {
            let a = random_axis(&mut s);
            let b = random_axis(&mut s);
            let mut total = 0.0;
            for x in Outcome::BOTH {
                for y in Outcome::BOTH {
                    let p = q.joint_probability(x, y, &a, &b);
                    assert!(p >= 0.0);
                    total += p;
                }
                assert!((q.marginal(Side::Alice, x, &a, &b) - 0.5).abs() <= 1e-12);
                assert!((q.marginal(Side::Bob, x, &a, &b) - 0.5).abs() <= 1e-12);
            }
            assert!((total - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn quantum_sampler_same_axis_always_opposite() {
        let mut s = StreamFactory::new(4).stream(0);
        for _ in 0..100 {
            let a = random_axis(&mut s);
            for _ in 0..100 {
                let (x, y) = quantum_sample_pair(&a, &a, &mut s);
                assert_eq!(x, -y);
            }
        }
    }

    #[test]
    fn signaling_demo_reads_bobs_setting() {
        let m = make_signaling_demo();
        let a = Axis::from_planar_degrees(0.0).unwrap();
        let b1 = Axis::from_planar_degrees(0.0).unwrap();
        let b2 = Axis::from_planar_degrees(180.0).unwrap();
        let l = HiddenState::new([0.6, 0.0, 0.8]);
        assert_ne!(m.alice_outcome(&a, &b1, &l), m.alice_outcome(&a, &b2, &l));
    }

    #[test]
    fn builtin_names_resolve() {
        for name in BUILTIN_MODELS {
            assert_eq!(Theory::by_name(name).unwrap().name(), name);
        }
        assert!(matches!(Theory::by_name("bohm"), Err(Error::InvalidArgument(_))));
    }
}
