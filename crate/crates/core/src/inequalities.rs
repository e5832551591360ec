//! The Bell and CHSH functionals, and step-by-step audits of their
//! derivations for a concrete model.
//!
//! Each audit evaluates every integral on one shared node set. The
//! intermediate identities are then algebraic and hold to rounding, so a
//! residual above [`AUDIT_TOLERANCE`] points at an implementation bug rather
//! than at discretization error.

use crate::correlator::check_anticorrelation_on;
use crate::domain::{Axis, HiddenState};
use crate::error::{invalid, Error, Result};
use crate::models::{mean_value, DeterministicLocalModel, Side, StochasticLocalModel};
use crate::quadrature::QuadratureSpec;

/// Tolerance for comparisons of closed-form values.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-9;
/// Tolerance for comparisons of quadrature values.
pub const QUADRATURE_TOLERANCE: f64 = 1e-6;
/// Largest acceptable residual of an audited identity.
pub const AUDIT_TOLERANCE: f64 = 1e-9;
/// Correlations further than this outside `[-1, 1]` are rejected.
const INPUT_SLACK: f64 = 0.01;

/// `|E(â,b̂) − E(â,ĉ)| ≤ 1 + E(b̂,ĉ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub satisfied: bool,
}

impl BellReport {
    pub fn evaluate(e_ab: f64, e_ac: f64, e_bc: f64, tolerance: f64) -> Result<Self> {
        check_inputs(&[e_ab, e_ac, e_bc])?;
        let lhs = (e_ab - e_ac).abs();
        let rhs = 1.0 + e_bc;
        let margin = rhs - lhs;
        Ok(Self { lhs, rhs, margin, satisfied: margin >= -tolerance })
    }
}

/// `|E(â,b̂) − E(â,b̂′)| + |E(â′,b̂′) + E(â′,b̂)| ≤ 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshReport {
    pub s_value: f64,
    pub bound: f64,
    pub margin: f64,
    pub satisfied: bool,
}

impl ChshReport {
    pub const BOUND: f64 = 2.0;

    pub fn evaluate(e_ab: f64, e_ab2: f64, e_a2b: f64, e_a2b2: f64, tolerance: f64) -> Result<Self> {
        check_inputs(&[e_ab, e_ab2, e_a2b, e_a2b2])?;
        let s_value = (e_ab - e_ab2).abs() + (e_a2b2 + e_a2b).abs();
        let margin = Self::BOUND - s_value;
        Ok(Self { s_value, bound: Self::BOUND, margin, satisfied: s_value <= Self::BOUND + tolerance })
    }
}

fn check_inputs(values: &[f64]) -> Result<()> {
    for &v in values {
        if !v.is_finite() || v.abs() > 1.0 + INPUT_SLACK {
            return Err(invalid(format!("correlation {v} outside [-1.01, 1.01]")));
        }
    }
    Ok(())
}

/// Bell functional with the closed-form tolerance.
pub fn bell_functional(e_ab: f64, e_ac: f64, e_bc: f64) -> Result<BellReport> {
    BellReport::evaluate(e_ab, e_ac, e_bc, CLOSED_FORM_TOLERANCE)
}

/// CHSH functional with the closed-form tolerance.
pub fn chsh_functional(e_ab: f64, e_ab2: f64, e_a2b: f64, e_a2b2: f64) -> Result<ChshReport> {
    ChshReport::evaluate(e_ab, e_ab2, e_a2b, e_a2b2, CLOSED_FORM_TOLERANCE)
}

/// Residuals of each audited identity plus the cross term that needs
/// simultaneous values at incompatible settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivationAudit {
    pub step_names: Vec<String>,
    pub step_residuals: Vec<f64>,
    pub four_term_value: f64,
    pub max_residual: f64,
}

impl DerivationAudit {
    fn new() -> Self {
        Self { step_names: Vec::new(), step_residuals: Vec::new(), four_term_value: 0.0, max_residual: 0.0 }
    }

    fn record(&mut self, name: &str, residual: f64) {
        self.step_names.push(name.to_string());
        let r = if residual.is_nan() { f64::INFINITY } else { residual.abs() };
        self.step_residuals.push(r);
        self.max_residual = self.max_residual.max(r);
    }

    pub fn residual(&self, name: &str) -> Option<f64> {
        self.step_names.iter().position(|n| n == name).map(|i| self.step_residuals[i])
    }

    pub fn passes(&self) -> bool {
        self.max_residual <= AUDIT_TOLERANCE
    }
}

/// Result of [`audit_bell_derivation`].
#[derive(Debug, Clone, PartialEq)]
pub struct BellAudit {
    pub audit: DerivationAudit,
    pub report: BellReport,
    pub e_ab: f64,
    pub e_ac: f64,
    pub e_bc: f64,
}

fn integrate(nodes: &[(HiddenState, f64)], f: impl Fn(&HiddenState) -> f64) -> f64 {
    nodes.iter().map(|(l, w)| w * f(l)).sum()
}

/// Audits the Bell derivation for a deterministic model.
///
/// Steps:
/// - `s1_*`: `E(â,b̂)` from outcome products against `−∫ρ A(â)A(b̂)`, reading
///   `A(b̂)` both directly and as `−B(b̂)`.
/// - `s2_difference`: `E(â,b̂) − E(â,ĉ)` against `∫ρ [A(â)A(ĉ) − A(â)A(b̂)]`.
/// - `s3_unit_square`: `A(b̂, λ)² = 1` on every node.
/// - `s4_*`: the expansion with the four-factor term `∫ρ A(â)A(b̂)A(b̂)A(ĉ)`,
///   its factored form, and `−∫ρ A(b̂)A(ĉ) = E(b̂,ĉ)`.
/// - `s5_*`: the absolute-value bound and consistency of the final report.
///
/// Perfect anti-correlation along b̂ and ĉ is a premise and is checked on every
/// node first.
pub fn audit_bell_derivation(
    model: &DeterministicLocalModel,
    a: &Axis,
    b: &Axis,
    c: &Axis,
    quad: &QuadratureSpec,
) -> Result<BellAudit> {
    let nodes = model.distribution().nodes(quad)?;
    let premise = check_anticorrelation_on(model, &[*a, *b, *c], nodes.iter().map(|(l, _)| l));
    if let Some(v) = premise.violations.first() {
        return Err(Error::PremiseViolation(format!(
            "{}: A(x,λ) = {} but B(x,λ) = {} along axis {} at λ = {:?} ({} of {} probes fail)",
            model.name(),
            v.alice.value(),
            v.bob.value(),
            v.axis,
            v.lambda.coords(),
            premise.violations.len(),
            premise.probes
        )));
    }

    let alice = |x: &Axis, l: &HiddenState| model.alice_outcome(x, l).as_f64();
    let bob = |x: &Axis, l: &HiddenState| model.bob_outcome(x, l).as_f64();
    let mut audit = DerivationAudit::new();

    let e_ab = integrate(&nodes, |l| alice(a, l) * bob(b, l));
    let e_ac = integrate(&nodes, |l| alice(a, l) * bob(c, l));
    let e_bc = integrate(&nodes, |l| alice(b, l) * bob(c, l));

    let e_ab_alice_only = -integrate(&nodes, |l| alice(a, l) * alice(b, l));
    let e_ab_via_bob = -integrate(&nodes, |l| alice(a, l) * -bob(b, l));
    audit.record("s1_alice_only_form", e_ab - e_ab_alice_only);
    audit.record("s1_bob_reading", e_ab - e_ab_via_bob);

    let difference = integrate(&nodes, |l| alice(a, l) * alice(c, l) - alice(a, l) * alice(b, l));
    audit.record("s2_difference", (e_ab - e_ac) - difference);

    let unit = nodes.iter().map(|(l, _)| (alice(b, l) * alice(b, l) - 1.0).abs()).fold(0.0, f64::max);
    audit.record("s3_unit_square", unit);

    let four_term = integrate(&nodes, |l| alice(a, l) * alice(b, l) * alice(b, l) * alice(c, l));
    let pair_ab = integrate(&nodes, |l| alice(a, l) * alice(b, l));
    audit.record("s4_four_factor_expansion", (e_ab - e_ac) - (four_term - pair_ab));
    let factored = integrate(&nodes, |l| alice(a, l) * alice(b, l) * (alice(b, l) * alice(c, l) - 1.0));
    audit.record("s4_factored", (e_ab - e_ac) - factored);
    let identified = -integrate(&nodes, |l| alice(b, l) * alice(c, l));
    audit.record("s4_identify_e_bc", identified - e_bc);
    audit.four_term_value = four_term;

    let report = BellReport::evaluate(e_ab, e_ac, e_bc, QUADRATURE_TOLERANCE)?;
    let abs_bound = integrate(&nodes, |l| (alice(a, l) * alice(b, l)).abs() * (alice(b, l) * alice(c, l) - 1.0).abs());
    audit.record("s5_absolute_bound", (report.lhs - abs_bound).max(0.0));
    audit.record("s5_bound_equals_rhs", abs_bound - report.rhs);
    audit.record("s5_report_satisfied", (-report.margin).max(0.0));

    Ok(BellAudit { audit, report, e_ab, e_ac, e_bc })
}

/// Result of [`audit_chsh_derivation`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChshAudit {
    pub audit: DerivationAudit,
    pub report: ChshReport,
    /// Correlations in the order `(â,b̂), (â,b̂′), (â′,b̂), (â′,b̂′)`.
    pub correlations: [f64; 4],
}

struct MeanTable {
    a: f64,
    a2: f64,
    b: f64,
    b2: f64,
}

/// Audits the CHSH derivation for a stochastic local model.
///
/// Steps:
/// - `s1_*`: for each setting pair, `E` from the outcome sum
///   `Σ A·B·P(A)P(B)` against the mean-value product `∫ρ Ā B̄`.
/// - `s2_difference`: `E(â,b̂) − E(â,b̂′)` against `∫ρ [Ā(â)B̄(b̂) − Ā(â)B̄(b̂′)]`.
/// - `s3_*`: the added zero `±X ∓ X` per node and the rearranged integrand,
///   for both sign branches.
/// - `s4_four_average_finite`: the four-average term `∫ρ Ā(â)Ā(â′)B̄(b̂)B̄(b̂′)`
///   is finite and bounded by one.
/// - `s5_*`: `|Ā|, |B̄| ≤ 1` and `1 ± ĀB̄ ≥ 0` on every node, and the bound
///   `|E(â,b̂) − E(â,b̂′)| ≤ 2 ± (E(â′,b̂′) + E(â′,b̂))` for both branches.
/// - `s6_chsh_bound`: the final `S ≤ 2`.
pub fn audit_chsh_derivation(
    model: &StochasticLocalModel,
    a: &Axis,
    a2: &Axis,
    b: &Axis,
    b2: &Axis,
    quad: &QuadratureSpec,
) -> Result<ChshAudit> {
    let nodes = model.distribution().nodes(quad)?;
    let mut means = Vec::with_capacity(nodes.len());
    for (l, _) in &nodes {
        means.push(MeanTable {
            a: mean_value(model, Side::Alice, a, l)?,
            a2: mean_value(model, Side::Alice, a2, l)?,
            b: mean_value(model, Side::Bob, b, l)?,
            b2: mean_value(model, Side::Bob, b2, l)?,
        });
    }
    let weights: Vec<f64> = nodes.iter().map(|(_, w)| *w).collect();
    let integrate = |f: &dyn Fn(&MeanTable) -> f64| -> f64 { weights.iter().zip(&means).map(|(w, m)| w * f(m)).sum() };
    let mut audit = DerivationAudit::new();

    let pairs: [(&str, &Axis, &Axis); 4] = [("ab", a, b), ("ab2", a, b2), ("a2b", a2, b), ("a2b2", a2, b2)];
    let mut outcome_sums = [0.0; 4];
    for (k, (_, x, y)) in pairs.iter().enumerate() {
        let mut total = 0.0;
        for (l, w) in &nodes {
            let (pa_plus, pa_minus) = model.probabilities(Side::Alice, x, l)?;
            let (pb_plus, pb_minus) = model.probabilities(Side::Bob, y, l)?;
            let sum = pa_plus * pb_plus - pa_plus * pb_minus - pa_minus * pb_plus + pa_minus * pb_minus;
            total += w * sum;
        }
        outcome_sums[k] = total;
    }
    let e = [
        integrate(&|m| m.a * m.b),
        integrate(&|m| m.a * m.b2),
        integrate(&|m| m.a2 * m.b),
        integrate(&|m| m.a2 * m.b2),
    ];
    for (k, (name, _, _)) in pairs.iter().enumerate() {
        audit.record(&format!("s1_mean_value_form_{name}"), outcome_sums[k] - e[k]);
    }

    let difference = integrate(&|m| m.a * m.b - m.a * m.b2);
    audit.record("s2_difference", (e[0] - e[1]) - difference);

    for (label, sign) in [("plus", 1.0), ("minus", -1.0)] {
        let zero = means
            .iter()
            .map(|m| {
                let plain = m.a * m.b - m.a * m.b2;
                let padded = plain + sign * m.a * m.b * m.a2 * m.b2 - sign * m.a * m.b2 * m.a2 * m.b;
                (plain - padded).abs()
            })
            .fold(0.0, f64::max);
        audit.record(&format!("s3_add_zero_{label}"), zero);
        let rearranged =
            integrate(&|m| m.a * m.b * (1.0 + sign * m.a2 * m.b2) - m.a * m.b2 * (1.0 + sign * m.a2 * m.b));
        audit.record(&format!("s3_rearranged_{label}"), (e[0] - e[1]) - rearranged);
    }

    let four_term = integrate(&|m| m.a * m.a2 * m.b * m.b2);
    audit.four_term_value = four_term;
    audit.record(
        "s4_four_average_finite",
        if four_term.is_finite() { (four_term.abs() - 1.0).max(0.0) } else { f64::INFINITY },
    );

    let mean_excess = means
        .iter()
        .map(|m| [m.a, m.a2, m.b, m.b2].iter().map(|v| v.abs() - 1.0).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    audit.record("s5_means_bounded", mean_excess);
    let negative_factor = means
        .iter()
        .map(|m| {
            [1.0 + m.a2 * m.b2, 1.0 - m.a2 * m.b2, 1.0 + m.a2 * m.b, 1.0 - m.a2 * m.b]
                .iter()
                .map(|f| (-f).max(0.0))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    audit.record("s5_factors_nonnegative", negative_factor);
    for (label, sign) in [("plus", 1.0), ("minus", -1.0)] {
        let bound = integrate(&|m| (1.0 + sign * m.a2 * m.b2) + (1.0 + sign * m.a2 * m.b));
        audit.record(&format!("s5_branch_bound_{label}"), ((e[0] - e[1]).abs() - bound).max(0.0));
        let closed = 2.0 + sign * (e[3] + e[2]);
        audit.record(&format!("s5_branch_integral_{label}"), bound - closed);
    }

    let report = ChshReport::evaluate(e[0], e[1], e[2], e[3], AUDIT_TOLERANCE)?;
    audit.record("s6_chsh_bound", (report.s_value - ChshReport::BOUND).max(0.0));

    Ok(ChshAudit { audit, report, correlations: e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{HiddenDistribution, Outcome};
    use crate::models::{lift_deterministic, make_local_noise_model, make_sign_sphere_model};

    const R: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn bell_functional_examples() {
        let r = bell_functional(-1.0, -1.0, -1.0).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(r.satisfied);

        let r = bell_functional(-R, 0.0, -R).unwrap();
        assert!((r.lhs - R).abs() < 1e-12);
        assert!((r.rhs - (1.0 - R)).abs() < 1e-12);
        assert!(!r.satisfied);

        let r = bell_functional(-0.5, 0.0, -0.5).unwrap();
        assert_eq!((r.lhs, r.rhs, r.margin), (0.5, 0.5, 0.0));
        assert!(r.satisfied);
    }

    #[test]
    fn chsh_functional_examples() {
        let r = chsh_functional(-1.0, -1.0, -1.0, -1.0).unwrap();
        assert_eq!(r.s_value, 2.0);
        assert!(r.satisfied);
        let r = chsh_functional(-R, R, -R, -R).unwrap();
        assert!((r.s_value - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(!r.satisfied);
        let r = chsh_functional(0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(r.s_value, 0.0);
        assert!(r.satisfied);
    }

    #[test]
    fn functionals_reject_out_of_range() {
        assert!(matches!(bell_functional(1.02, 0.0, 0.0), Err(Error::InvalidArgument(_))));
        assert!(bell_functional(1.005, 0.0, 0.0).is_ok());
        assert!(chsh_functional(0.0, f64::NAN, 0.0, 0.0).is_err());
        assert!(chsh_functional(0.0, 0.0, -1.2, 0.0).is_err());
    }

    fn planar(deg: f64) -> Axis {
        Axis::from_planar_degrees(deg).unwrap()
    }

    #[test]
    fn bell_audit_sign_sphere_60_degree_triple() {
        // 96 azimuthal nodes put 60° sign boundaries between nodes.
        let quad = QuadratureSpec::new(32, 96).unwrap();
        let out = audit_bell_derivation(&make_sign_sphere_model(), &planar(0.0), &planar(60.0), &planar(120.0), &quad)
            .unwrap();
        assert!(out.audit.passes(), "{:?}", out.audit);
        assert!((out.e_ab + 1.0 / 3.0).abs() < 1e-9);
        assert!((out.e_ac - 1.0 / 3.0).abs() < 1e-9);
        assert!((out.report.lhs - 2.0 / 3.0).abs() < 1e-9);
        assert!((out.report.rhs - 2.0 / 3.0).abs() < 1e-9);
        assert!(out.report.margin.abs() < 1e-9 && out.report.satisfied);
        assert_eq!(out.audit.step_names.len(), out.audit.step_residuals.len());
    }

    #[test]
    fn bell_audit_requires_anticorrelation() {
        let same = DeterministicLocalModel::new(
            "same",
            HiddenDistribution::uniform_sphere(),
            |a, l| Outcome::from_sign(a.project(l)),
            |b, l| Outcome::from_sign(b.project(l)),
            false,
        );
        let err = audit_bell_derivation(&same, &planar(0.0), &planar(45.0), &planar(90.0), &QuadratureSpec::default())
            .unwrap_err();
        assert!(matches!(err, Error::PremiseViolation(_)));
    }

    #[test]
    fn chsh_audit_lifted_sign_sphere_standard_angles() {
        let model = lift_deterministic(&make_sign_sphere_model());
        let out = audit_chsh_derivation(
            &model,
            &planar(0.0),
            &planar(90.0),
            &planar(45.0),
            &planar(135.0),
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!(out.audit.passes(), "{:?}", out.audit);
        // E = −1 + 2θ/π: (−½, ½, −½, −½) gives S = 2 exactly.
        assert!((out.report.s_value - 2.0).abs() < 1e-9);
        assert!(out.report.satisfied);
    }

    #[test]
    fn chsh_audit_local_noise() {
        let model = make_local_noise_model(1.0).unwrap();
        let out = audit_chsh_derivation(
            &model,
            &planar(10.0),
            &planar(100.0),
            &planar(55.0),
            &planar(145.0),
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!(out.audit.passes());
        assert!(out.report.satisfied);
        assert!(out.audit.residual("s3_add_zero_minus").unwrap() <= 1e-15);
    }

    #[test]
    fn chsh_audit_rejects_malformed_table() {
        let bad = StochasticLocalModel::new(
            "bad",
            HiddenDistribution::uniform_sphere(),
            |o, _, _| if o == Outcome::Plus { 1.2 } else { -0.2 },
            |_, _, _| 0.5,
        );
        let err = audit_chsh_derivation(
            &bad,
            &planar(0.0),
            &planar(90.0),
            &planar(45.0),
            &planar(135.0),
            &QuadratureSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ModelInvariant(_)));
    }
}
