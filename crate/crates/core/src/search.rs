//! The local bound by exhaustive enumeration of deterministic strategies, and
//! the quantum maximum by derivative-free search over planar angles.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::correlator::correlation_exact;
use crate::domain::{Axis, Method};
use crate::error::{invalid, Result};
use crate::inequalities::{chsh_functional, BellReport, ChshReport, CLOSED_FORM_TOLERANCE, QUADRATURE_TOLERANCE};
use crate::models::{quantum_correlation, Theory};
use crate::quadrature::QuadratureSpec;
use crate::table::{Cell, Table};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    Bell,
    Chsh,
}

impl Functional {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "bell" => Ok(Functional::Bell),
            "chsh" => Ok(Functional::Chsh),
            other => Err(invalid(format!("unknown functional '{other}' (expected bell or chsh)"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Functional::Bell => "bell",
            Functional::Chsh => "chsh",
        }
    }
}

/// Measurement settings available to each party.
///
/// CHSH uses Alice `[â, â′]` and Bob `[b̂, b̂′]`. The Bell layout is Alice
/// `[â, b̂]` and Bob `[b̂, ĉ]`: the shared axis b̂ is where perfect
/// anti-correlation applies.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    alice_settings: Vec<Axis>,
    bob_settings: Vec<Axis>,
}

impl ScenarioSpec {
    pub fn new(alice_settings: Vec<Axis>, bob_settings: Vec<Axis>) -> Result<Self> {
        if alice_settings.is_empty() || bob_settings.is_empty() {
            return Err(invalid("each party needs at least one setting"));
        }
        Ok(Self { alice_settings, bob_settings })
    }

    pub fn chsh(a: Axis, a2: Axis, b: Axis, b2: Axis) -> Self {
        Self { alice_settings: vec![a, a2], bob_settings: vec![b, b2] }
    }

    pub fn bell(a: Axis, b: Axis, c: Axis) -> Self {
        Self { alice_settings: vec![a, b], bob_settings: vec![b, c] }
    }

    /// CHSH scenario from planar angles `(a, a′, b, b′)` in radians.
    pub fn chsh_planar(angles: [f64; 4]) -> Result<Self> {
        Ok(Self::chsh(
            Axis::from_planar_angle(angles[0])?,
            Axis::from_planar_angle(angles[1])?,
            Axis::from_planar_angle(angles[2])?,
            Axis::from_planar_angle(angles[3])?,
        ))
    }

    pub fn alice_settings(&self) -> &[Axis] {
        &self.alice_settings
    }

    pub fn bob_settings(&self) -> &[Axis] {
        &self.bob_settings
    }

    /// Planar angles `(a, a′, b, b′)` of a 2×2 scenario.
    pub fn chsh_angles(&self) -> Result<[f64; 4]> {
        if self.alice_settings.len() != 2 || self.bob_settings.len() != 2 {
            return Err(invalid("CHSH needs two settings per party"));
        }
        let angle = |x: &Axis| x.planar_angle().ok_or_else(|| invalid(format!("axis {x} is not in the x-z plane")));
        Ok([
            angle(&self.alice_settings[0])?,
            angle(&self.alice_settings[1])?,
            angle(&self.bob_settings[0])?,
            angle(&self.bob_settings[1])?,
        ])
    }
}

/// A deterministic strategy restricted to the scenario's settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyTable {
    pub alice_values: Vec<i8>,
    pub bob_values: Vec<i8>,
}

impl StrategyTable {
    fn from_bits(bits: u64, n_alice: usize, n_bob: usize) -> Self {
        let value = |i: usize| if bits >> i & 1 == 0 { 1 } else { -1 };
        Self {
            alice_values: (0..n_alice).map(value).collect(),
            bob_values: (n_alice..n_alice + n_bob).map(value).collect(),
        }
    }

    fn correlation(&self, i: usize, j: usize) -> i32 {
        (self.alice_values[i] * self.bob_values[j]) as i32
    }

    /// CHSH value `|E₀₀ − E₀₁| + |E₁₁ + E₁₀|`, in integers.
    pub fn chsh_value(&self) -> i32 {
        (self.correlation(0, 0) - self.correlation(0, 1)).abs()
            + (self.correlation(1, 1) + self.correlation(1, 0)).abs()
    }

    /// Bell excess `|E(a,b) − E(a,c)| − (1 + E(b,c))`; non-positive when the
    /// inequality holds.
    pub fn bell_excess(&self) -> i32 {
        let e_ab = self.correlation(0, 0);
        let e_ac = self.correlation(0, 1);
        let e_bc = self.correlation(1, 1);
        (e_ab - e_ac).abs() - (1 + e_bc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalBound {
    pub max_value: i32,
    pub argmax: StrategyTable,
    pub strategies: usize,
}

/// Every admissible deterministic strategy with its functional value, in
/// enumeration order.
pub fn enumerate_strategies(scenario: &ScenarioSpec, functional: Functional) -> Result<Vec<(StrategyTable, i32)>> {
    let n_alice = scenario.alice_settings.len();
    let n_bob = scenario.bob_settings.len();
    if n_alice != 2 || n_bob != 2 {
        return Err(invalid(format!(
            "{} needs 2 Alice and 2 Bob settings, got {n_alice} and {n_bob}",
            functional.as_str()
        )));
    }
    if functional == Functional::Bell && scenario.alice_settings[1] != scenario.bob_settings[0] {
        return Err(invalid("bell layout needs Alice's second axis equal to Bob's first"));
    }
    // Perfect anti-correlation: Bob answers opposite to Alice on shared axes.
    let shared: Vec<(usize, usize)> = match functional {
        Functional::Chsh => Vec::new(),
        Functional::Bell => (0..n_alice)
            .flat_map(|i| (0..n_bob).map(move |j| (i, j)))
            .filter(|&(i, j)| scenario.alice_settings[i] == scenario.bob_settings[j])
            .collect(),
    };
    let total = 1u64 << (n_alice + n_bob);
    Ok((0..total)
        .map(|bits| StrategyTable::from_bits(bits, n_alice, n_bob))
        .filter(|s| shared.iter().all(|&(i, j)| s.bob_values[j] == -s.alice_values[i]))
        .map(|s| {
            let v = match functional {
                Functional::Chsh => s.chsh_value(),
                Functional::Bell => s.bell_excess(),
            };
            (s, v)
        })
        .collect())
}

/// Exact maximum of the functional over deterministic strategies. Ties go to
/// the first strategy enumerated.
pub fn enumerate_local_bound(scenario: &ScenarioSpec, functional: Functional) -> Result<LocalBound> {
    let all = enumerate_strategies(scenario, functional)?;
    let strategies = all.len();
    let mut best: Option<(StrategyTable, i32)> = None;
    for (s, v) in all {
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((s, v));
        }
    }
    let (argmax, max_value) = best.ok_or_else(|| invalid("no admissible strategy"))?;
    Ok(LocalBound { max_value, argmax, strategies })
}

/// CHSH value of the singlet correlations at planar angles `(a, a′, b, b′)`.
pub fn quantum_chsh_value(angles: &[f64; 4]) -> f64 {
    let axis = |t: f64| Axis::from_planar_angle(t).expect("finite angle");
    let [a, a2, b, b2] = angles.map(axis);
    let e = |x: &Axis, y: &Axis| quantum_correlation(x, y);
    chsh_functional(e(&a, &b), e(&a, &b2), e(&a2, &b), e(&a2, &b2))
        .expect("quantum correlations lie in [-1, 1]")
        .s_value
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub s_value: f64,
    pub settings: ScenarioSpec,
    pub angles: [f64; 4],
    pub evaluations: usize,
    pub sweeps: usize,
    pub converged: bool,
}

/// Minimum evaluation budget accepted by [`optimize_quantum_chsh`].
pub const MIN_BUDGET: usize = 100;
/// A sweep that moves no angle further than this counts as stationary.
pub const STATIONARITY: f64 = 1e-6;
const GRID_POINTS: usize = 24;
const LINE_TOLERANCE: f64 = 1e-9;

struct Objective<'a> {
    f: &'a dyn Fn(&[f64; 4]) -> f64,
    evaluations: usize,
    budget: usize,
}

impl Objective<'_> {
    fn eval(&mut self, x: &[f64; 4]) -> Option<f64> {
        if self.evaluations >= self.budget {
            return None;
        }
        self.evaluations += 1;
        Some((self.f)(x))
    }
}

/// Golden-section maximization of `g` on `[lo, hi]`; returns the best point
/// seen. `None` once the budget runs out.
fn golden_section_max(
    obj: &mut Objective<'_>,
    mut point: [f64; 4],
    coord: usize,
    mut lo: f64,
    mut hi: f64,
) -> Option<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut eval_at = |obj: &mut Objective<'_>, t: f64| {
        point[coord] = t;
        obj.eval(&point)
    };
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = eval_at(obj, x1)?;
    let mut f2 = eval_at(obj, x2)?;
    while hi - lo > LINE_TOLERANCE {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = eval_at(obj, x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = eval_at(obj, x2)?;
        }
    }
    Some(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Coordinate-wise maximization of a function of four angles.
///
/// Each coordinate step scans a coarse grid over the full circle, then
/// refines the best cell by golden-section search. Moves are accepted only on
/// strict improvement, so the first maximum found is kept.
pub fn coordinate_ascent(
    f: &dyn Fn(&[f64; 4]) -> f64,
    start: [f64; 4],
    budget: usize,
) -> (f64, [f64; 4], usize, usize, bool) {
    let mut obj = Objective { f, evaluations: 0, budget };
    let mut x = start.map(|t| t.rem_euclid(TWO_PI));
    let Some(mut fx) = obj.eval(&x) else {
        return (f64::NAN, x, 0, 0, false);
    };
    let cell = TWO_PI / GRID_POINTS as f64;
    let mut sweeps = 0;
    'outer: loop {
        sweeps += 1;
        let mut largest_move: f64 = 0.0;
        for coord in 0..4 {
            let origin = x[coord];
            let mut best_t = origin;
            let mut best_f = fx;
            let mut trial = x;
            for k in 1..GRID_POINTS {
                trial[coord] = origin + k as f64 * cell;
                let Some(v) = obj.eval(&trial) else { break 'outer };
                if v > best_f {
                    best_f = v;
                    best_t = trial[coord];
                }
            }
            let Some((t, v)) = golden_section_max(&mut obj, x, coord, best_t - cell, best_t + cell) else {
                if best_f > fx {
                    x[coord] = best_t.rem_euclid(TWO_PI);
                    fx = best_f;
                }
                break 'outer;
            };
            if v > best_f {
                best_f = v;
                best_t = t;
            }
            if best_f > fx {
                let moved = (best_t - origin).rem_euclid(TWO_PI);
                largest_move = largest_move.max(moved.min(TWO_PI - moved));
                x[coord] = best_t.rem_euclid(TWO_PI);
                fx = best_f;
            }
        }
        if largest_move < STATIONARITY {
            return (fx, x, obj.evaluations, sweeps, true);
        }
    }
    (fx, x, obj.evaluations, sweeps, false)
}

/// Searches for the largest CHSH value of the singlet correlations, starting
/// from a planar 2×2 scenario.
pub fn optimize_quantum_chsh(initial: &ScenarioSpec, budget: usize) -> Result<OptimizeResult> {
    if budget < MIN_BUDGET {
        return Err(invalid(format!("budget must be at least {MIN_BUDGET} evaluations, got {budget}")));
    }
    let start = initial.chsh_angles()?;
    let (s_value, angles, evaluations, sweeps, converged) = coordinate_ascent(&quantum_chsh_value, start, budget);
    Ok(OptimizeResult { s_value, settings: ScenarioSpec::chsh_planar(angles)?, angles, evaluations, sweeps, converged })
}

/// Settings of the one-parameter sweep family at parameter `phi`.
///
/// Bell: `(a, b, c) = (0, φ, 2φ)`. CHSH: `(a, a′, b, b′) = (0, 2φ, φ, 3φ)`.
pub fn sweep_angles(functional: Functional, phi: f64) -> Vec<f64> {
    match functional {
        Functional::Bell => vec![0.0, phi, 2.0 * phi],
        Functional::Chsh => vec![0.0, 2.0 * phi, phi, 3.0 * phi],
    }
}

/// Evaluates a functional for `source` along the sweep family, with `φ` on the
/// grid `0, step, 2·step, …` below 360°.
pub fn angle_sweep(functional: Functional, source: &Theory, grid_step: f64, quad: &QuadratureSpec) -> Result<Table> {
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(invalid(format!("grid step must be positive, got {grid_step}")));
    }
    let count = ((TWO_PI / grid_step).ceil() as usize).max(1);
    let phis: Vec<f64> = (0..count).map(|k| k as f64 * grid_step).filter(|&p| p < TWO_PI).collect();
    let phis = if phis.is_empty() { vec![0.0] } else { phis };

    let rows: Vec<Result<Vec<Cell>>> = phis
        .par_iter()
        .map(|&phi| {
            let angles = sweep_angles(functional, phi);
            let axes = angles.iter().map(|&t| Axis::from_planar_angle(t)).collect::<Result<Vec<_>>>()?;
            let mut closed = true;
            let mut e = |x: &Axis, y: &Axis| -> Result<f64> {
                let est = correlation_exact(source, x, y, quad)?;
                closed &= est.method == Method::ClosedForm;
                Ok(est.value)
            };
            let mut row: Vec<Cell> = vec![Cell::Real(phi.to_degrees())];
            row.extend(angles.iter().map(|t| Cell::Real(t.to_degrees())));
            match functional {
                Functional::Bell => {
                    let (ab, ac, bc) = (e(&axes[0], &axes[1])?, e(&axes[0], &axes[2])?, e(&axes[1], &axes[2])?);
                    let tol = if closed { CLOSED_FORM_TOLERANCE } else { QUADRATURE_TOLERANCE };
                    let r = BellReport::evaluate(ab, ac, bc, tol)?;
                    row.extend([Cell::Real(r.lhs), Cell::Real(r.rhs), Cell::Real(r.margin), Cell::Flag(r.satisfied)]);
                }
                Functional::Chsh => {
                    let (a, a2, b, b2) = (&axes[0], &axes[1], &axes[2], &axes[3]);
                    let vals = [e(a, b)?, e(a, b2)?, e(a2, b)?, e(a2, b2)?];
                    let tol = if closed { CLOSED_FORM_TOLERANCE } else { QUADRATURE_TOLERANCE };
                    let r = ChshReport::evaluate(vals[0], vals[1], vals[2], vals[3], tol)?;
                    row.extend([Cell::Real(r.s_value), Cell::Real(r.margin), Cell::Flag(r.satisfied)]);
                }
            }
            Ok(row)
        })
        .collect();

    let mut table = match functional {
        Functional::Bell => Table::new(["phi_deg", "a_deg", "b_deg", "c_deg", "lhs", "rhs", "margin", "satisfied"]),
        Functional::Chsh => {
            Table::new(["phi_deg", "a_deg", "a2_deg", "b_deg", "b2_deg", "s_value", "margin", "satisfied"])
        }
    };
    for row in rows {
        table.push(row?);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::make_sign_sphere_model;

    fn deg(d: [f64; 4]) -> [f64; 4] {
        d.map(f64::to_radians)
    }

    fn z() -> Axis {
        Axis::from_planar_angle(0.0).unwrap()
    }

    #[test]
    fn chsh_strategy_direct_arithmetic() {
        let s = StrategyTable { alice_values: vec![1, 1], bob_values: vec![-1, -1] };
        assert_eq!(s.chsh_value(), 2);
    }

    #[test]
    fn chsh_local_bound_is_two() {
        let sc = ScenarioSpec::chsh_planar(deg([0.0, 90.0, 45.0, 135.0])).unwrap();
        let bound = enumerate_local_bound(&sc, Functional::Chsh).unwrap();
        assert_eq!(bound.max_value, 2);
        assert_eq!(bound.strategies, 16);
        assert_eq!(bound.argmax.chsh_value(), 2);
        // first-found tie break: all +1
        assert_eq!(bound.argmax.alice_values, vec![1, 1]);
    }

    #[test]
    fn bell_enumeration_respects_anticorrelation() {
        let b = Axis::from_planar_degrees(45.0).unwrap();
        let sc = ScenarioSpec::bell(z(), b, Axis::from_planar_degrees(90.0).unwrap());
        let all = enumerate_strategies(&sc, Functional::Bell).unwrap();
        assert_eq!(all.len(), 8);
        assert!(all.iter().all(|(_, v)| *v <= 0));
        assert_eq!(enumerate_local_bound(&sc, Functional::Bell).unwrap().max_value, 0);
    }

    #[test]
    fn arity_mismatch() {
        let sc = ScenarioSpec::new(vec![z()], vec![z(), z()]).unwrap();
        assert!(enumerate_local_bound(&sc, Functional::Chsh).is_err());
        let chsh = ScenarioSpec::chsh_planar(deg([0.0, 90.0, 45.0, 135.0])).unwrap();
        assert!(enumerate_local_bound(&chsh, Functional::Bell).is_err());
        assert!(ScenarioSpec::new(vec![], vec![z()]).is_err());
    }

    #[test]
    fn optimizer_at_optimum_stays() {
        let sc = ScenarioSpec::chsh_planar(deg([0.0, 90.0, 45.0, 135.0])).unwrap();
        let r = optimize_quantum_chsh(&sc, 10_000).unwrap();
        assert!((r.s_value - 2.828_427_12).abs() < 1e-8);
        assert!(r.converged);
    }

    #[test]
    fn optimizer_budget_precondition() {
        let sc = ScenarioSpec::chsh_planar(deg([0.0, 90.0, 45.0, 135.0])).unwrap();
        assert!(optimize_quantum_chsh(&sc, 0).is_err());
        assert!(optimize_quantum_chsh(&sc, 99).is_err());
        let r =
            optimize_quantum_chsh(&ScenarioSpec::chsh_planar(deg([3.0, 40.0, 170.0, 300.0])).unwrap(), 100).unwrap();
        assert!(r.evaluations <= 100);
        assert!(!r.converged);
    }

    #[test]
    fn optimizer_rejects_non_planar_axes() {
        let y = Axis::new(0.0, 1.0, 0.0).unwrap();
        let sc = ScenarioSpec::chsh(y, z(), z(), z());
        assert!(optimize_quantum_chsh(&sc, 1000).is_err());
    }

    #[test]
    fn quantum_sweep_peaks_at_standard_angles() {
        let t = angle_sweep(Functional::Chsh, &Theory::QuantumSinglet, 5f64.to_radians(), &QuadratureSpec::default())
            .unwrap();
        assert_eq!(t.len(), 72);
        let (best, s) = (0..t.len()).map(|i| (i, t.real(i, "s_value").unwrap())).fold((0, f64::MIN), |acc, (i, v)| {
            if v > acc.1 {
                (i, v)
            } else {
                acc
            }
        });
        assert!(s >= 2.81);
        assert!((t.real(best, "phi_deg").unwrap() - 45.0).abs() <= 5.0);
        assert!((t.real(best, "a2_deg").unwrap() - 90.0).abs() <= 10.0);
        assert!(!t.flag(best, "satisfied").unwrap());
    }

    #[test]
    fn sign_sphere_sweeps_always_satisfied() {
        let t = Theory::Deterministic(make_sign_sphere_model());
        let q = QuadratureSpec::new(16, 32).unwrap();
        for f in [Functional::Chsh, Functional::Bell] {
            let table = angle_sweep(f, &t, 15f64.to_radians(), &q).unwrap();
            assert_eq!(table.len(), 24);
            assert!((0..table.len()).all(|i| table.flag(i, "satisfied").unwrap()));
        }
    }

    #[test]
    fn degenerate_sweep_grid() {
        let t = angle_sweep(Functional::Chsh, &Theory::QuantumSinglet, 7.0, &QuadratureSpec::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.real(0, "phi_deg"), Some(0.0));
        assert!(angle_sweep(Functional::Chsh, &Theory::QuantumSinglet, 0.0, &QuadratureSpec::default()).is_err());
    }
}
