//! `plc-lab` command-line tool: corpus degradation, concealment, evaluation,
//! trace inspection and the MUSHRA listening-test workflow.

pub mod commands;
pub mod config;
pub mod server;

use clap::Parser;

pub use commands::Cli;

/// Toolkit version followed by the on-disk format versions.
pub fn version_line() -> String {
    format!(
        "plc-lab {} (formats: {}, {}, {}, wav pcm16 mono)",
        plc_lab::VERSION,
        plc_lab::TRACE_PLAN_FORMAT,
        plc_lab::MANIFEST_FORMAT,
        plc_lab::RATINGS_FORMAT
    )
}

/// Runs the CLI and returns the process exit status: 0 on success, 1 on a
/// domain error, 2 on a usage error.
pub fn run(argv: Vec<String>) -> i32 {
    if argv.len() == 2 && matches!(argv[1].as_str(), "--version" | "-V") {
        println!("{}", version_line());
        return 0;
    }
    let argv = match config::expand_args(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
