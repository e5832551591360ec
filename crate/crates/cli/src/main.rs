use bell_lab_cli::{parse_config, run, CliArgs};
use clap::Parser;
use std::io::Write;

fn worker_count() -> usize {
    std::env::var("BELL_LAB_WORKERS").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0)
}

fn main() {
    let args = match CliArgs::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = write!(std::io::stdout(), "{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    let config = match parse_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            std::process::exit(1);
        }
    };
    std::process::exit(pool.install(|| run(&config)));
}
