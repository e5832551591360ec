//! Experiment configuration: flat `key = value` files overlaid by flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bell_lab::Functional;
use clap::Parser;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_QUAD: (usize, usize) = (64, 64);
pub const DEFAULT_STEP_DEG: f64 = 5.0;
pub const DEFAULT_BUDGET: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Correlate,
    Bell,
    Chsh,
    AuditBell,
    AuditChsh,
    LocalBound,
    Optimize,
    Sweep,
    McScan,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Correlate,
        Command::Bell,
        Command::Chsh,
        Command::AuditBell,
        Command::AuditChsh,
        Command::LocalBound,
        Command::Optimize,
        Command::Sweep,
        Command::McScan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Correlate => "correlate",
            Command::Bell => "bell",
            Command::Chsh => "chsh",
            Command::AuditBell => "audit-bell",
            Command::AuditChsh => "audit-chsh",
            Command::LocalBound => "local-bound",
            Command::Optimize => "optimize",
            Command::Sweep => "sweep",
            Command::McScan => "mc-scan",
        }
    }

    /// Number of angles the command needs, if it takes any.
    pub fn angle_arity(self) -> Option<usize> {
        match self {
            Command::Correlate | Command::McScan => Some(2),
            Command::Bell | Command::AuditBell => Some(3),
            Command::Chsh | Command::AuditChsh | Command::Optimize => Some(4),
            Command::LocalBound | Command::Sweep => None,
        }
    }

    fn needs_model(self) -> bool {
        !matches!(self, Command::LocalBound | Command::Optimize)
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Command::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Command::ALL.iter().map(|c| c.as_str()).collect();
            CliError::Usage(format!("unknown command '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub model: String,
    pub angles_deg: Vec<f64>,
    pub n_samples: u64,
    pub seed: u64,
    pub quad: (usize, usize),
    pub output_path: Option<PathBuf>,
    pub functional: Functional,
    pub step_deg: f64,
    pub budget: usize,
}

/// Command-line flags. Any flag also given in `--config` wins over the file.
#[derive(Debug, Default, Parser)]
#[command(name = "bell-lab", version, about = "Bell and CHSH inequality laboratory")]
pub struct CliArgs {
    /// correlate | bell | chsh | audit-bell | audit-chsh | local-bound | optimize | sweep | mc-scan
    pub command: Option<String>,
    /// sign_sphere | local_noise | quantum_singlet | signaling_demo
    #[arg(long)]
    pub model: Option<String>,
    /// Comma-separated setting angles in degrees
    #[arg(long, allow_hyphen_values = true)]
    pub angles: Option<String>,
    /// Monte Carlo trials
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Quadrature resolution NTHETA,NPHI
    #[arg(long)]
    pub quad: Option<String>,
    /// CSV output path
    #[arg(long)]
    pub out: Option<String>,
    /// Flat key = value experiment file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// bell | chsh (local-bound and sweep)
    #[arg(long)]
    pub functional: Option<String>,
    /// Sweep grid step in degrees
    #[arg(long)]
    pub step: Option<String>,
    /// Optimizer evaluation budget
    #[arg(long)]
    pub budget: Option<String>,
}

const KEYS: [&str; 10] = ["command", "model", "angles", "n", "seed", "quad", "out", "functional", "step", "budget"];

/// Parses `key = value` lines. `#`/`;` start comments; `[section]` headers
/// are ignored.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Parse { line: line_no, message: format!("expected 'key = value', got '{line}'") });
        };
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        let key = match key.as_str() {
            "n-samples" => "n".to_string(),
            "output-path" | "output" => "out".to_string(),
            "angles-deg" => "angles".to_string(),
            _ => key,
        };
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Parse { line: line_no, message: format!("unknown key '{key}'") });
        }
        let value = value.trim().trim_matches('"').to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(CliError::Parse { line: line_no, message: format!("duplicate key '{key}'") });
        }
    }
    Ok(map)
}

fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    parse_config_text(&text)
}

fn parse_number<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| CliError::Usage(format!("invalid value '{value}' for {key}")))
}

fn parse_angles(value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(|s| {
            let v: f64 = parse_number("angles", s)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::Usage(format!("angle '{s}' is not finite")))
            }
        })
        .collect()
}

/// Merges the optional config file with the flags and validates the result.
pub fn parse_config(args: &CliArgs) -> Result<ExperimentConfig, CliError> {
    let mut values = match &args.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    let flags = [
        ("command", &args.command),
        ("model", &args.model),
        ("angles", &args.angles),
        ("n", &args.n),
        ("seed", &args.seed),
        ("quad", &args.quad),
        ("out", &args.out),
        ("functional", &args.functional),
        ("step", &args.step),
        ("budget", &args.budget),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            values.insert(key.to_string(), v.clone());
        }
    }
    from_values(&values)
}

fn from_values(values: &BTreeMap<String, String>) -> Result<ExperimentConfig, CliError> {
    let get = |k: &str| values.get(k).map(String::as_str);
    let command: Command =
        get("command").ok_or_else(|| CliError::Usage("missing required key 'command'".into()))?.parse()?;

    let model = match get("model") {
        Some(m) => m.to_string(),
        None if command == Command::Optimize => "quantum_singlet".to_string(),
        None if !command.needs_model() => String::new(),
        None => return Err(CliError::Usage(format!("{command} requires --model"))),
    };

    let angles_deg = match get("angles") {
        Some(a) if !a.trim().is_empty() => parse_angles(a)?,
        _ => Vec::new(),
    };
    if let Some(arity) = command.angle_arity() {
        if angles_deg.is_empty() {
            return Err(CliError::Usage(format!("{command} requires --angles with {arity} values")));
        }
        if angles_deg.len() != arity {
            return Err(CliError::Usage(format!("{command} expects {arity} angles, got {}", angles_deg.len())));
        }
    }

    let functional = match get("functional") {
        Some(f) => Functional::parse(f).map_err(|e| CliError::Usage(e.to_string()))?,
        None => Functional::Chsh,
    };
    if command == Command::LocalBound && !angles_deg.is_empty() {
        let arity = if functional == Functional::Bell { 3 } else { 4 };
        if angles_deg.len() != arity {
            return Err(CliError::Usage(format!(
                "local-bound with {} expects {arity} angles, got {}",
                functional.as_str(),
                angles_deg.len()
            )));
        }
    }

    let n_samples = match get("n") {
        Some(v) => parse_number("n", v)?,
        None => DEFAULT_SAMPLES,
    };
    if n_samples == 0 {
        return Err(CliError::Usage("n must be at least 1".into()));
    }
    let seed = match get("seed") {
        Some(v) => parse_number("seed", v)?,
        None => DEFAULT_SEED,
    };
    let quad = match get("quad") {
        Some(v) => {
            let parts: Vec<&str> = v.split(',').collect();
            if parts.len() != 2 {
                return Err(CliError::Usage(format!("quad expects NTHETA,NPHI, got '{v}'")));
            }
            (parse_number("quad", parts[0])?, parse_number("quad", parts[1])?)
        }
        None => DEFAULT_QUAD,
    };
    let step_deg = match get("step") {
        Some(v) => parse_number("step", v)?,
        None => DEFAULT_STEP_DEG,
    };
    if !(step_deg.is_finite() && step_deg > 0.0) {
        return Err(CliError::Usage(format!("step must be positive, got {step_deg}")));
    }
    let budget = match get("budget") {
        Some(v) => parse_number("budget", v)?,
        None => DEFAULT_BUDGET,
    };
    let output_path = get("out").filter(|p| !p.is_empty()).map(PathBuf::from);

    Ok(ExperimentConfig {
        command,
        model,
        angles_deg,
        n_samples,
        seed,
        quad,
        output_path,
        functional,
        step_deg,
        budget,
    })
}
