//! Correlation functions `E(â, b̂)`: closed form, quadrature over λ, and
//! seeded Monte Carlo trial simulation.
//!
//! Monte Carlo trials are cut into fixed blocks of [`TRIALS_PER_STREAM`]; block
//! `k` always draws from stream `k` of the master seed. The estimate is
//! therefore the same no matter how many workers process the blocks.

use rayon::prelude::*;

use crate::domain::{Axis, CorrelationEstimate, HiddenState, Method, Outcome};
use crate::error::{invalid, Result};
use crate::models::{mean_value, Side, StochasticLocalModel, Theory};
use crate::models::{quantum_correlation, quantum_sample_pair, DeterministicLocalModel};
use crate::quadrature::QuadratureSpec;
use crate::rng::{RandomStream, StreamFactory};

pub const TRIALS_PER_STREAM: u64 = 1 << 16;

/// `E(â, b̂)` integrated over λ with quadrature (closed form for the quantum
/// reference). Deterministic outcomes enter as their own means.
pub fn correlation_exact(theory: &Theory, a: &Axis, b: &Axis, quad: &QuadratureSpec) -> Result<CorrelationEstimate> {
    let value = match theory {
        Theory::QuantumSinglet => return Ok(CorrelationEstimate::exact(quantum_correlation(a, b), Method::ClosedForm)),
        Theory::Deterministic(m) => {
            let nodes = m.distribution().nodes(quad)?;
            deterministic_integral(m, a, b, &nodes)
        }
        Theory::Stochastic(m) => {
            let nodes = m.distribution().nodes(quad)?;
            stochastic_integral(m, a, b, &nodes)?
        }
        Theory::Signaling(m) => {
            let nodes = m.distribution().nodes(quad)?;
            nodes.iter().map(|(l, w)| w * (m.alice_outcome(a, b, l).value() * m.bob_outcome(b, l).value()) as f64).sum()
        }
    };
    Ok(CorrelationEstimate::exact(value, Method::Quadrature))
}

/// `Σᵢ wᵢ A(â, λᵢ) B(b̂, λᵢ)` on the given nodes.
pub fn deterministic_integral(
    model: &DeterministicLocalModel,
    a: &Axis,
    b: &Axis,
    nodes: &[(HiddenState, f64)],
) -> f64 {
    nodes.iter().map(|(l, w)| w * (model.alice_outcome(a, l).value() * model.bob_outcome(b, l).value()) as f64).sum()
}

/// `Σᵢ wᵢ Ā(â, λᵢ) B̄(b̂, λᵢ)` on the given nodes.
pub fn stochastic_integral(
    model: &StochasticLocalModel,
    a: &Axis,
    b: &Axis,
    nodes: &[(HiddenState, f64)],
) -> Result<f64> {
    let mut total = 0.0;
    for (l, w) in nodes {
        total += w * mean_value(model, Side::Alice, a, l)? * mean_value(model, Side::Bob, b, l)?;
    }
    Ok(total)
}

/// The closed form when the theory has one, quadrature otherwise.
pub fn reference_correlation(
    theory: &Theory,
    a: &Axis,
    b: &Axis,
    quad: &QuadratureSpec,
) -> Result<CorrelationEstimate> {
    match theory.closed_form(a, b) {
        Some(v) => Ok(CorrelationEstimate::exact(v, Method::ClosedForm)),
        None => correlation_exact(theory, a, b, quad),
    }
}

/// Monte Carlo estimate of `E(â, b̂)` from `n` simulated trials.
///
/// Stochastic models draw Alice's and Bob's outcomes independently given λ.
/// `stderr` is the sample standard deviation over `√n` (zero when `n = 1`).
pub fn correlation_mc(theory: &Theory, a: &Axis, b: &Axis, n: u64, seed: u64) -> Result<CorrelationEstimate> {
    if n == 0 {
        return Err(invalid("Monte Carlo needs at least one trial"));
    }
    let factory = StreamFactory::new(seed);
    let blocks = n.div_ceil(TRIALS_PER_STREAM);
    let partial: Vec<Result<i64>> = (0..blocks)
        .into_par_iter()
        .map(|k| {
            let len = TRIALS_PER_STREAM.min(n - k * TRIALS_PER_STREAM);
            let mut stream = factory.stream(k);
            let mut sum = 0i64;
            for _ in 0..len {
                let (x, y) = trial(theory, a, b, &mut stream)?;
                sum += (x.value() * y.value()) as i64;
            }
            Ok(sum)
        })
        .collect();
    let mut sum = 0i64;
    for s in partial {
        sum += s?;
    }
    let nf = n as f64;
    let value = sum as f64 / nf;
    let stderr = if n > 1 {
        // products are ±1, so Σp² = n
        let var = ((nf - (sum as f64) * (sum as f64) / nf) / (nf - 1.0)).max(0.0);
        (var / nf).sqrt()
    } else {
        0.0
    };
    Ok(CorrelationEstimate { value, stderr, n_samples: n, method: Method::MonteCarlo })
}

fn draw(p_plus: f64, stream: &mut RandomStream) -> Outcome {
    if stream.uniform() < p_plus {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

fn trial(theory: &Theory, a: &Axis, b: &Axis, stream: &mut RandomStream) -> Result<(Outcome, Outcome)> {
    Ok(match theory {
        Theory::Deterministic(m) => {
            let l = m.distribution().sample(stream);
            (m.alice_outcome(a, &l), m.bob_outcome(b, &l))
        }
        Theory::Stochastic(m) => {
            let l = m.distribution().sample(stream);
            let (pa, _) = m.probabilities(Side::Alice, a, &l)?;
            let (pb, _) = m.probabilities(Side::Bob, b, &l)?;
            (draw(pa, stream), draw(pb, stream))
        }
        Theory::Signaling(m) => {
            let l = m.distribution().sample(stream);
            (m.alice_outcome(a, b, &l), m.bob_outcome(b, &l))
        }
        Theory::QuantumSinglet => quantum_sample_pair(a, b, stream),
    })
}

/// One probe where `A(x̂, λ) ≠ −B(x̂, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnticorrelationViolation {
    pub axis_index: usize,
    pub axis: Axis,
    pub lambda: HiddenState,
    pub alice: Outcome,
    pub bob: Outcome,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnticorrelationReport {
    pub probes: usize,
    pub violations: Vec<AnticorrelationViolation>,
}

impl AnticorrelationReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks perfect anti-correlation on every `(axis, λ)` pair.
pub fn check_anticorrelation_on<'a>(
    model: &DeterministicLocalModel,
    axes: &[Axis],
    lambdas: impl IntoIterator<Item = &'a HiddenState>,
) -> AnticorrelationReport {
    let mut report = AnticorrelationReport::default();
    for l in lambdas {
        for (axis_index, axis) in axes.iter().enumerate() {
            report.probes += 1;
            let alice = model.alice_outcome(axis, l);
            let bob = model.bob_outcome(axis, l);
            if alice != -bob {
                report.violations.push(AnticorrelationViolation {
                    axis_index,
                    axis: *axis,
                    lambda: l.clone(),
                    alice,
                    bob,
                });
            }
        }
    }
    report
}

/// Samples `n_lambda` hidden states from stream 0 of `seed` and checks
/// `A(x̂, λ) = −B(x̂, λ)` for every axis.
pub fn anticorrelation_check(
    model: &DeterministicLocalModel,
    axes: &[Axis],
    n_lambda: usize,
    seed: u64,
) -> AnticorrelationReport {
    let mut stream = StreamFactory::new(seed).stream(0);
    let lambdas: Vec<HiddenState> = (0..n_lambda).map(|_| model.distribution().sample(&mut stream)).collect();
    check_anticorrelation_on(model, axes, &lambdas)
}

/// Witness that Alice's outcome depends on Bob's setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalingWitness {
    pub alice_axis: Axis,
    pub bob_axes: (Axis, Axis),
    pub lambda: HiddenState,
}

/// Searches for a λ at which changing Bob's axis changes Alice's outcome.
pub fn find_signaling(
    model: &crate::models::SignalingReferenceModel,
    axes: &[Axis],
    n_lambda: usize,
    seed: u64,
) -> Option<SignalingWitness> {
    let mut stream = StreamFactory::new(seed).stream(0);
    for _ in 0..n_lambda {
        let l = model.distribution().sample(&mut stream);
        for a in axes {
            for (i, b1) in axes.iter().enumerate() {
                for b2 in &axes[i + 1..] {
                    if model.alice_outcome(a, b1, &l) != model.alice_outcome(a, b2, &l) {
                        return Some(SignalingWitness { alice_axis: *a, bob_axes: (*b1, *b2), lambda: l });
                    }
                }
            }
        }
    }
    None
}

/// One row of a convergence scan. `stderr` is NaN when `n = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub n: u64,
    pub estimate: f64,
    pub abs_error: f64,
    pub stderr: f64,
}

/// Runs `correlation_mc` at each `n` against the reference correlation.
pub fn mc_convergence_scan(
    theory: &Theory,
    a: &Axis,
    b: &Axis,
    n_list: &[u64],
    seed: u64,
    quad: &QuadratureSpec,
) -> Result<Vec<ScanRow>> {
    if n_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("n_list must be ascending"));
    }
    let exact = reference_correlation(theory, a, b, quad)?.value;
    n_list
        .iter()
        .map(|&n| {
            let est = correlation_mc(theory, a, b, n, seed)?;
            Ok(ScanRow {
                n,
                estimate: est.value,
                abs_error: (est.value - exact).abs(),
                stderr: if n == 1 { f64::NAN } else { est.stderr },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{lift_deterministic, make_local_noise_model, make_sign_sphere_model};
    use std::f64::consts::PI;

    fn planar(deg: f64) -> Axis {
        Axis::from_planar_degrees(deg).unwrap()
    }

    #[test]
    fn quantum_exact_is_closed_form() {
        let est = correlation_exact(&Theory::QuantumSinglet, &planar(0.0), &planar(45.0), &QuadratureSpec::default())
            .unwrap();
        assert_eq!(est.method, Method::ClosedForm);
        assert!((est.value + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn sign_sphere_exact_examples() {
        let t = Theory::Deterministic(make_sign_sphere_model());
        let q = QuadratureSpec::default();
        let e0 = correlation_exact(&t, &planar(10.0), &planar(10.0), &q).unwrap();
        assert!((e0.value + 1.0).abs() < 1e-9);
        assert_eq!(e0.method, Method::Quadrature);
        assert_eq!(e0.stderr, 0.0);
        let e90 = correlation_exact(&t, &planar(0.0), &planar(90.0), &q).unwrap();
        assert!(e90.value.abs() < 2e-3);
    }

    #[test]
    fn local_noise_same_axis() {
        let t = Theory::Stochastic(make_local_noise_model(1.0).unwrap());
        let e = correlation_exact(&t, &planar(0.0), &planar(0.0), &QuadratureSpec::default()).unwrap();
        assert!((e.value + 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn mc_rejects_zero_trials() {
        let t = Theory::QuantumSinglet;
        assert!(correlation_mc(&t, &planar(0.0), &planar(0.0), 0, 1).is_err());
    }

    #[test]
    fn mc_sign_sphere_same_axis_is_exact() {
        let t = Theory::Deterministic(make_sign_sphere_model());
        for n in [1, 2, 1000, 70_000] {
            let e = correlation_mc(&t, &planar(33.0), &planar(33.0), n, 5).unwrap();
            assert_eq!(e.value, -1.0);
            assert_eq!(e.stderr, 0.0);
            assert_eq!(e.n_samples, n);
        }
    }

    #[test]
    fn mc_is_reproducible() {
        let t = Theory::Stochastic(make_local_noise_model(0.8).unwrap());
        let a = planar(12.0);
        let b = planar(77.0);
        let x = correlation_mc(&t, &a, &b, 200_000, 3).unwrap();
        let y = correlation_mc(&t, &a, &b, 200_000, 3).unwrap();
        assert_eq!(x.value.to_bits(), y.value.to_bits());
        assert_eq!(x.stderr.to_bits(), y.stderr.to_bits());
        let z = correlation_mc(&t, &a, &b, 200_000, 4).unwrap();
        assert_ne!(x.value, z.value);
    }

    #[test]
    fn mc_independent_of_worker_count() {
        let t = Theory::Deterministic(make_sign_sphere_model());
        let a = planar(0.0);
        let b = planar(50.0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| correlation_mc(&t, &a, &b, 300_001, 17).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn lifted_exact_matches_deterministic_bitwise() {
        let m = make_sign_sphere_model();
        let det = Theory::Deterministic(m.clone());
        let lifted = Theory::Stochastic(lift_deterministic(&m));
        let q = QuadratureSpec::new(16, 24).unwrap();
        let mut s = RandomStream::new(8, 0);
        for _ in 0..100 {
            let a = planar(360.0 * s.uniform());
            let b = Axis::new(s.uniform() - 0.5, s.uniform() - 0.5, s.uniform() - 0.5).unwrap();
            let x = correlation_exact(&det, &a, &b, &q).unwrap().value;
            let y = correlation_exact(&lifted, &a, &b, &q).unwrap().value;
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn anticorrelation_examples() {
        let m = make_sign_sphere_model();
        let axes: Vec<Axis> = (0..100).map(|i| planar(3.6 * i as f64 + 0.1)).collect();
        let report = anticorrelation_check(&m, &axes, 100, 1);
        assert!(report.holds());
        assert_eq!(report.probes, 10_000);

        let same = DeterministicLocalModel::new(
            "same",
            m.distribution().clone(),
            |a, l| Outcome::from_sign(a.project(l)),
            |b, l| Outcome::from_sign(b.project(l)),
            false,
        );
        let report = anticorrelation_check(&same, &axes[..10], 20, 1);
        assert_eq!(report.violations.len(), 200);

        assert!(anticorrelation_check(&same, &[], 20, 1).holds());
    }

    #[test]
    fn signaling_detected_only_for_signaling_model() {
        let axes: Vec<Axis> = [0.0, 60.0, 120.0].iter().map(|&d| planar(d)).collect();
        let m = crate::models::make_signaling_demo();
        assert!(find_signaling(&m, &axes, 100, 2).is_some());
    }

    #[test]
    fn scan_reports_nan_for_single_trial() {
        let t = Theory::Deterministic(make_sign_sphere_model());
        let rows =
            mc_convergence_scan(&t, &planar(0.0), &planar(60.0), &[1, 16, 256], 3, &QuadratureSpec::default()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].stderr.is_nan());
        assert!(rows[1].stderr > 0.0);
        let exact = -1.0 + 2.0 * (PI / 3.0) / PI;
        assert!(((rows[2].estimate - exact).abs() - rows[2].abs_error).abs() < 1e-12);
        assert!(mc_convergence_scan(&t, &planar(0.0), &planar(1.0), &[4, 2], 3, &QuadratureSpec::default()).is_err());
    }
}
