//! Simulation and verification of Bell-type inequalities.
//!
//! Local hidden-variable models (deterministic and stochastic) and the quantum
//! singlet reference feed correlation estimators; the Bell and CHSH
//! functionals are evaluated on the results, and each step of their
//! derivations can be audited numerically for a given model.

pub mod correlator;
pub mod domain;
pub mod error;
pub mod inequalities;
pub mod models;
pub mod quadrature;
pub mod rng;
pub mod search;
pub mod table;

pub use correlator::{
    anticorrelation_check, correlation_exact, correlation_mc, mc_convergence_scan, reference_correlation,
    AnticorrelationReport, ScanRow,
};
pub use domain::{axis_from_planar_angle, dot, sample_hidden, Axis, CorrelationEstimate, HiddenDistribution};
pub use domain::{HiddenState, Method, Outcome};
pub use error::{Error, Result};
pub use inequalities::{
    audit_bell_derivation, audit_chsh_derivation, bell_functional, chsh_functional, BellReport, ChshReport,
    DerivationAudit,
};
pub use models::{
    lift_deterministic, make_local_noise_model, make_sign_sphere_model, make_signaling_demo, mean_value,
    quantum_correlation, quantum_sample_pair, DeterministicLocalModel, Side, StochasticLocalModel, Theory,
};
pub use quadrature::QuadratureSpec;
pub use rng::{RandomStream, StreamFactory};
pub use search::{angle_sweep, enumerate_local_bound, optimize_quantum_chsh, Functional, ScenarioSpec};
pub use table::{Cell, Table};
