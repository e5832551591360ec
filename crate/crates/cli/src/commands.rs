//! Command dispatch. Each command produces summary lines and a table; the
//! caller prints the former and writes the latter as CSV.

use std::io::Write;

use bell_lab::correlator::find_signaling;
use bell_lab::inequalities::{
    BellReport, ChshReport, DerivationAudit, AUDIT_TOLERANCE, CLOSED_FORM_TOLERANCE, QUADRATURE_TOLERANCE,
};
use bell_lab::search::{enumerate_strategies, quantum_chsh_value};
use bell_lab::*;

use crate::config::{Command, ExperimentConfig};
use crate::csv;
use crate::error::CliError;

/// Output of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: Vec<String>,
    pub table: Table,
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "SATISFIED"
    } else {
        "VIOLATED"
    }
}

struct Setup {
    theory: Theory,
    axes: Vec<Axis>,
    quad: QuadratureSpec,
}

fn setup(config: &ExperimentConfig) -> Result<Setup, CliError> {
    let theory = Theory::by_name(&config.model)?;
    let axes = config.angles_deg.iter().map(|&d| Axis::from_planar_degrees(d)).collect::<Result<Vec<_>>>()?;
    let quad = QuadratureSpec::new(config.quad.0, config.quad.1)?;
    Ok(Setup { theory, axes, quad })
}

/// Quantity/value rows for scalar reports.
fn key_values(rows: &[(&str, Cell)]) -> Table {
    let mut t = Table::new(["quantity", "value"]);
    for (k, v) in rows {
        t.push(vec![Cell::Text(k.to_string()), v.clone()]);
    }
    t
}

/// Correlation and its tolerance (closed form vs quadrature).
fn correlation(s: &Setup, a: &Axis, b: &Axis) -> Result<(f64, f64), CliError> {
    let e = reference_correlation(&s.theory, a, b, &s.quad)?;
    let tol = if e.method == Method::ClosedForm { CLOSED_FORM_TOLERANCE } else { QUADRATURE_TOLERANCE };
    Ok((e.value, tol))
}

pub fn execute(config: &ExperimentConfig) -> Result<Report, CliError> {
    match config.command {
        Command::Correlate => correlate(config),
        Command::Bell => bell(config),
        Command::Chsh => chsh(config),
        Command::AuditBell => audit_bell(config),
        Command::AuditChsh => audit_chsh(config),
        Command::LocalBound => local_bound(config),
        Command::Optimize => optimize(config),
        Command::Sweep => sweep(config),
        Command::McScan => mc_scan(config),
    }
}

fn correlate(config: &ExperimentConfig) -> Result<Report, CliError> {
    let s = setup(config)?;
    let (a, b) = (&s.axes[0], &s.axes[1]);
    let quadrature = correlation_exact(&s.theory, a, b, &s.quad)?;
    let exact = reference_correlation(&s.theory, a, b, &s.quad)?;
    let mc = correlation_mc(&s.theory, a, b, config.n_samples, config.seed)?;
    let mut table = Table::new(["method", "value", "stderr", "n_samples"]);
    let mut rows = vec![quadrature, mc];
    if exact.method != quadrature.method {
        rows.insert(0, exact);
    }
    for e in rows {
        table.push(vec![
            Cell::Text(e.method.as_str().into()),
            Cell::Real(e.value),
            Cell::Real(e.stderr),
            Cell::Int(e.n_samples as i64),
        ]);
    }
    let summary = format!(
        "E = {:.6} ({}), MC = {:.6} +/- {:.6} (n = {}), {} (bound |E| <= 1)",
        exact.value,
        exact.method.as_str(),
        mc.value,
        mc.stderr,
        mc.n_samples,
        verdict(exact.is_physical() && mc.is_physical())
    );
    Ok(Report { summary: vec![summary], table })
}

fn bell(config: &ExperimentConfig) -> Result<Report, CliError> {
    let s = setup(config)?;
    let (a, b, c) = (&s.axes[0], &s.axes[1], &s.axes[2]);
    let (e_ab, tol) = correlation(&s, a, b)?;
    let (e_ac, _) = correlation(&s, a, c)?;
    let (e_bc, _) = correlation(&s, b, c)?;
    let r = BellReport::evaluate(e_ab, e_ac, e_bc, tol)?;
    let table = key_values(&[
        ("e_ab", e_ab.into()),
        ("e_ac", e_ac.into()),
        ("e_bc", e_bc.into()),
        ("lhs", r.lhs.into()),
        ("rhs", r.rhs.into()),
        ("margin", r.margin.into()),
        ("satisfied", r.satisfied.into()),
    ]);
    let summary = format!("LHS = {:.4}, RHS = {:.4}, {}", r.lhs, r.rhs, verdict(r.satisfied));
    Ok(Report { summary: vec![summary], table })
}

fn chsh(config: &ExperimentConfig) -> Result<Report, CliError> {
    let s = setup(config)?;
    let (a, a2, b, b2) = (&s.axes[0], &s.axes[1], &s.axes[2], &s.axes[3]);
    let (e_ab, tol) = correlation(&s, a, b)?;
    let (e_ab2, _) = correlation(&s, a, b2)?;
    let (e_a2b, _) = correlation(&s, a2, b)?;
    let (e_a2b2, _) = correlation(&s, a2, b2)?;
    let r = ChshReport::evaluate(e_ab, e_ab2, e_a2b, e_a2b2, tol)?;
    let table = key_values(&[
        ("e_ab", e_ab.into()),
        ("e_ab2", e_ab2.into()),
        ("e_a2b", e_a2b.into()),
        ("e_a2b2", e_a2b2.into()),
        ("s_value", r.s_value.into()),
        ("bound", r.bound.into()),
        ("margin", r.margin.into()),
        ("satisfied", r.satisfied.into()),
    ]);
    let summary = format!("S = {:.6}, {} (bound 2)", r.s_value, verdict(r.satisfied));
    Ok(Report { summary: vec![summary], table })
}

fn audit_table(audit: &DerivationAudit) -> Table {
    let mut t = Table::new(["step", "residual"]);
    for (name, r) in audit.step_names.iter().zip(&audit.step_residuals) {
        t.push(vec![Cell::Text(name.clone()), Cell::Real(*r)]);
    }
    t.push(vec!["four_term_value".into(), Cell::Real(audit.four_term_value)]);
    t.push(vec!["max_residual".into(), Cell::Real(audit.max_residual)]);
    t
}

fn locality_violation(model: &models::SignalingReferenceModel, axes: &[Axis], seed: u64) -> CliError {
    match find_signaling(model, axes, 10_000, seed) {
        Some(w) => CliError::Premise(format!(
            "locality: {} changes Alice's outcome along {} when Bob switches from {} to {}",
            model.name(),
            w.alice_axis,
            w.bob_axes.0,
            w.bob_axes.1
        )),
        None => CliError::Premise(format!("locality: {} lets Alice's outcome read Bob's setting", model.name())),
    }
}

fn audit_bell(config: &ExperimentConfig) -> Result<Report, CliError> {
    let s = setup(config)?;
    let model = match &s.theory {
        Theory::Deterministic(m) => m,
        Theory::Stochastic(m) => {
            return Err(CliError::Premise(format!(
                "determinism: {} assigns outcome probabilities, not outcomes",
                m.name()
            )))
        }
        Theory::Signaling(m) => return Err(locality_violation(m, &s.axes, config.seed)),
        Theory::QuantumSinglet => {
            return Err(CliError::Premise("quantum_singlet has no hidden state to integrate over".into()))
        }
    };
    let out = audit_bell_derivation(model, &s.axes[0], &s.axes[1], &s.axes[2], &s.quad)?;
    let summary = vec![
        format!(
            "max residual = {:.3e} (tolerance {:.0e}), four-factor term = {:.6}",
            out.audit.max_residual, AUDIT_TOLERANCE, out.audit.four_term_value
        ),
        format!(
            "LHS = {:.4}, RHS = {:.4}, {}",
            out.report.lhs,
            out.report.rhs,
            verdict(out.report.satisfied && out.audit.passes())
        ),
    ];
    Ok(Report { summary, table: audit_table(&out.audit) })
}

fn audit_chsh(config: &ExperimentConfig) -> Result<Report, CliError> {
    let s = setup(config)?;
    let model = match &s.theory {
        Theory::Stochastic(m) => m.clone(),
        Theory::Deterministic(m) => lift_deterministic(m),
        Theory::Signaling(m) => return Err(locality_violation(m, &s.axes, config.seed)),
        Theory::QuantumSinglet => {
            return Err(CliError::Premise("quantum_singlet has no hidden state to integrate over".into()))
        }
    };
    let out = audit_chsh_derivation(&model, &s.axes[0], &s.axes[1], &s.axes[2], &s.axes[3], &s.quad)?;
    let summary = vec![
        format!(
            "max residual = {:.3e} (tolerance {:.0e}), four-average term = {:.6}",
            out.audit.max_residual, AUDIT_TOLERANCE, out.audit.four_term_value
        ),
        format!("S = {:.6}, {} (bound 2)", out.report.s_value, verdict(out.report.satisfied && out.audit.passes())),
    ];
    Ok(Report { summary, table: audit_table(&out.audit) })
}

fn local_bound(config: &ExperimentConfig) -> Result<Report, CliError> {
    let degrees = |d: &[f64]| d.iter().map(|&x| Axis::from_planar_degrees(x)).collect::<Result<Vec<_>>>();
    let scenario = match config.functional {
        Functional::Chsh => {
            let d = if config.angles_deg.is_empty() { vec![0.0, 90.0, 45.0, 135.0] } else { config.angles_deg.clone() };
            let x = degrees(&d)?;
            ScenarioSpec::chsh(x[0], x[1], x[2], x[3])
        }
        Functional::Bell => {
            let d = if config.angles_deg.is_empty() { vec![0.0, 45.0, 90.0] } else { config.angles_deg.clone() };
            let x = degrees(&d)?;
            ScenarioSpec::bell(x[0], x[1], x[2])
        }
    };
    let all = enumerate_strategies(&scenario, config.functional)?;
    let bound = enumerate_local_bound(&scenario, config.functional)?;
    let mut table = Table::new(["strategy", "alice_0", "alice_1", "bob_0", "bob_1", "value"]);
    for (i, (s, v)) in all.iter().enumerate() {
        table.push(vec![
            Cell::Int(i as i64),
            Cell::Int(s.alice_values[0] as i64),
            Cell::Int(s.alice_values[1] as i64),
            Cell::Int(s.bob_values[0] as i64),
            Cell::Int(s.bob_values[1] as i64),
            Cell::Int(*v as i64),
        ]);
    }
    let (label, limit) = match config.functional {
        Functional::Chsh => ("S", 2),
        Functional::Bell => ("LHS - RHS", 0),
    };
    let summary = format!(
        "local bound: max {label} = {} over {} strategies (witness alice = {:?}, bob = {:?}), {} (bound {limit})",
        bound.max_value,
        bound.strategies,
        bound.argmax.alice_values,
        bound.argmax.bob_values,
        verdict(bound.max_value <= limit)
    );
    Ok(Report { summary: vec![summary], table })
}

fn optimize(config: &ExperimentConfig) -> Result<Report, CliError> {
    if config.model != "quantum_singlet" {
        return Err(CliError::Usage(format!(
            "optimize searches the quantum_singlet correlations, got model '{}'",
            config.model
        )));
    }
    let start: Vec<f64> = config.angles_deg.iter().map(|d| d.to_radians()).collect();
    let scenario = ScenarioSpec::chsh_planar([start[0], start[1], start[2], start[3]])?;
    let initial = quantum_chsh_value(&[start[0], start[1], start[2], start[3]]);
    let r = optimize_quantum_chsh(&scenario, config.budget)?;
    let deg = r.angles.map(f64::to_degrees);
    let tsirelson = 2.0 * 2f64.sqrt();
    let table = key_values(&[
        ("initial_s", initial.into()),
        ("s_value", r.s_value.into()),
        ("tsirelson", tsirelson.into()),
        ("a_deg", deg[0].into()),
        ("a2_deg", deg[1].into()),
        ("b_deg", deg[2].into()),
        ("b2_deg", deg[3].into()),
        ("evaluations", Cell::Int(r.evaluations as i64)),
        ("sweeps", Cell::Int(r.sweeps as i64)),
        ("converged", r.converged.into()),
    ]);
    let summary = vec![
        format!(
            "S = {:.6} at (a, a', b, b') = ({:.4}, {:.4}, {:.4}, {:.4}) deg, {} (bound 2)",
            r.s_value,
            deg[0],
            deg[1],
            deg[2],
            deg[3],
            verdict(r.s_value <= 2.0 + CLOSED_FORM_TOLERANCE)
        ),
        format!(
            "{} after {} evaluations; distance to 2*sqrt(2) = {:.3e}",
            if r.converged { "converged" } else { "NOT converged" },
            r.evaluations,
            tsirelson - r.s_value
        ),
    ];
    Ok(Report { summary, table })
}

fn sweep(config: &ExperimentConfig) -> Result<Report, CliError> {
    let s = setup(config)?;
    let table = angle_sweep(config.functional, &s.theory, config.step_deg.to_radians(), &s.quad)?;
    let violated = (0..table.len()).filter(|&i| table.flag(i, "satisfied") == Some(false)).count();
    let summary = match config.functional {
        Functional::Chsh => {
            let (best, s_max) = (0..table.len())
                .map(|i| (i, table.real(i, "s_value").unwrap_or(f64::NAN)))
                .fold((0, f64::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            format!(
                "sweep: {} rows, max S = {:.6} at phi = {} deg, {} of {} rows VIOLATED, {} (bound 2)",
                table.len(),
                s_max,
                table.real(best, "phi_deg").unwrap_or(f64::NAN),
                violated,
                table.len(),
                verdict(violated == 0)
            )
        }
        Functional::Bell => {
            let (worst, m) = (0..table.len())
                .map(|i| (i, table.real(i, "margin").unwrap_or(f64::NAN)))
                .fold((0, f64::MAX), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
            format!(
                "sweep: {} rows, min margin = {:.6} at phi = {} deg, {} of {} rows VIOLATED, {} (bound RHS - LHS >= 0)",
                table.len(),
                m,
                table.real(worst, "phi_deg").unwrap_or(f64::NAN),
                violated,
                table.len(),
                verdict(violated == 0)
            )
        }
    };
    Ok(Report { summary: vec![summary], table })
}

/// `1, 4, 16, …` up to `n`, ending with `n` itself.
pub fn scan_sizes(n: u64) -> Vec<u64> {
    let mut sizes: Vec<u64> =
        std::iter::successors(Some(1u64), |&k| k.checked_mul(4)).take_while(|&k| k <= n).collect();
    if sizes.last() != Some(&n) {
        sizes.push(n);
    }
    sizes
}

fn mc_scan(config: &ExperimentConfig) -> Result<Report, CliError> {
    let s = setup(config)?;
    let (a, b) = (&s.axes[0], &s.axes[1]);
    let exact = reference_correlation(&s.theory, a, b, &s.quad)?;
    let rows = mc_convergence_scan(&s.theory, a, b, &scan_sizes(config.n_samples), config.seed, &s.quad)?;
    let mut table = Table::new(["n", "estimate", "abs_error", "stderr"]);
    for r in &rows {
        table.push(vec![Cell::Int(r.n as i64), Cell::Real(r.estimate), Cell::Real(r.abs_error), Cell::Real(r.stderr)]);
    }
    let last = rows.last().expect("at least one scan row");
    let within = last.abs_error <= 5.0 * last.stderr || (last.stderr == 0.0 && last.abs_error == 0.0);
    let summary = format!(
        "mc-scan: reference E = {:.6} ({}), n = {}: |error| = {:.3e}, stderr = {:.3e}, {} (bound 5 stderr)",
        exact.value,
        exact.method.as_str(),
        last.n,
        last.abs_error,
        last.stderr,
        verdict(within)
    );
    Ok(Report { summary: vec![summary], table })
}

pub fn provenance(config: &ExperimentConfig) -> String {
    format!(
        "bell-lab {} command={} model={} seed={}",
        env!("CARGO_PKG_VERSION"),
        config.command,
        if config.model.is_empty() { "-" } else { &config.model },
        config.seed
    )
}

/// Executes the command, prints its summary and writes the CSV. Returns the
/// process exit status.
pub fn run(config: &ExperimentConfig) -> i32 {
    let report = match execute(config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let mut out = std::io::stdout().lock();
    for line in &report.summary {
        // Stop quietly once stdout is closed.
        if writeln!(out, "{line}").is_err() {
            break;
        }
    }
    if let Some(path) = &config.output_path {
        if let Err(e) = csv::emit_csv(&report.table, &provenance(config), path) {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    }
    0
}
