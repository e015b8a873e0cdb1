mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use holospeck::Error;
use serde_json::json;

use args::Cli;

/// What a command hands back: data for `--json`, a human summary for stderr,
/// and the exit code.
pub struct Outcome {
    pub json: serde_json::Value,
    pub text: String,
    pub code: u8,
}

impl Outcome {
    pub fn ok(json: serde_json::Value, text: impl Into<String>) -> Self {
        Self {
            json,
            text: text.into(),
            code: 0,
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Dimension { .. } => "dimension",
        Error::Shape(_) => "shape",
        Error::Parameter(_) => "parameter",
        Error::Geometry(_) => "geometry",
        Error::Config(_) => "config",
        Error::Domain(_) => "domain",
        Error::Degenerate(_) => "degenerate",
        Error::Divergence { .. } => "divergence",
        Error::NonConvergence(_) => "non_convergence",
        Error::Format { .. } => "format",
        Error::MissingBasis { .. } => "missing_basis",
        Error::Io { .. } => "io",
        Error::Json { .. } => "json",
    }
}

fn print_json(v: &serde_json::Value) {
    let mut out = std::io::stdout().lock();
    let _ = serde_json::to_writer_pretty(&mut out, v);
    let _ = writeln!(out);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (json, quiet) = (cli.global.json, cli.global.quiet);
    match commands::run(&cli) {
        Ok(o) => {
            if json {
                print_json(&o.json);
            }
            if !quiet && !o.text.is_empty() {
                eprintln!("{}", o.text.trim_end());
            }
            ExitCode::from(o.code)
        }
        Err(e) => {
            let code = e.exit_code();
            if json {
                print_json(&json!({
                    "error": { "kind": error_kind(&e), "message": e.to_string(), "exit_code": code }
                }));
            }
            eprintln!("error: {e}");
            ExitCode::from(code as u8)
        }
    }
}
