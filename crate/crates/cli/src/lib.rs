//! Command-line front end for the `laplace-core` approximations.
//!
//! Every subcommand reads model files (see [`modelfile`]), runs one
//! computation and prints a report, or a CSV grid for the density commands.
//! Failures print one `error: code=<Code> message=<text>` line on standard
//! error and exit with 2 (usage), 3 (model or data file) or 4 (numerical).

pub mod args;
pub mod commands;
pub mod error;
pub mod grid;
pub mod modelfile;
pub mod oracle;
pub mod report;

use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Output;
pub use error::{CliError, CliResult, EXIT_MODEL_FILE, EXIT_NUMERICAL, EXIT_USAGE};

/// Run with the process's standard streams. `argv[0]` is the program name.
pub fn run(argv: &[String]) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let paragraph = text.split("\n\n").next().unwrap_or("invalid arguments");
            let joined = paragraph.split_whitespace().collect::<Vec<_>>().join(" ");
            let message = joined.strip_prefix("error: ").unwrap_or(&joined);
            let _ = writeln!(err, "{}", CliError::usage(message).line());
            return EXIT_USAGE;
        }
    };
    match dispatch(&cli).and_then(|o| emit(&o, cli.json, out)) {
        Ok(()) => 0,
        // a reader such as `head` went away; nothing left to report to
        Err(CliError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.line());
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<Output> {
    match &cli.command {
        Command::Moments(a) => commands::moments(a),
        Command::Marginal(a) => commands::marginal(a, cli.json),
        Command::Density(a) => commands::density(a, cli.json),
        Command::BayesFactor(a) => commands::bayes(a),
        Command::ModelPosterior(a) => commands::model_posterior(a),
        Command::MixtureSelect(a) => commands::mixture(a),
        Command::Compare(a) => commands::compare(a, cli),
    }
}

fn emit(o: &Output, json: bool, out: &mut dyn Write) -> CliResult<()> {
    if let Some((grid, dest)) = &o.grid {
        match dest {
            Some(path) => {
                let mut f = commands::open_output(path)?;
                grid::write_csv(grid, &mut f)?;
            }
            // the CSV is the output; the report only goes out as JSON
            None if !json => return grid::write_csv(grid, out),
            None => {}
        }
    }
    if let (Some(t), false) = (&o.table, json) {
        write!(out, "{t}")?;
        writeln!(out)?;
    }
    o.report.write(out, json)?;
    Ok(())
}
