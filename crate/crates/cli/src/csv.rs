//! CSV emission: one provenance comment line, a header row, then data rows.
//! Reals are printed with nine significant digits.

use std::io::Write;
use std::path::Path;

use bell_lab::{Cell, Table};

use crate::error::CliError;

/// Formats a real like C's `%.9g`.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-5..9).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn format_cell(cell: &Cell) -> String {
    match cell {
        Cell::Int(v) => v.to_string(),
        Cell::Real(v) => format_real(*v),
        Cell::Flag(v) => v.to_string(),
        Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::Text(s) => s.clone(),
    }
}

/// Renders a table; `provenance` becomes a leading `# ` comment line.
pub fn render(table: &Table, provenance: &str) -> String {
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(provenance);
    out.push('\n');
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(format_cell).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn emit_csv(table: &Table, provenance: &str, path: &Path) -> Result<(), CliError> {
    let write = || -> std::io::Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(render(table, provenance).as_bytes())?;
        file.flush()
    };
    write().map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}
