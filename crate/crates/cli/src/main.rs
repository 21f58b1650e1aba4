use std::io;
use std::process::ExitCode;

use clap::Parser;
use melnikov_cli::args::{Cli, Command, FamilyArgs};
use melnikov_cli::commands::{self, Exit};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { Exit::Usage.code() as u8 } else { 0 });
        }
    };
    let common = &cli.common;
    let mut out = io::stdout().lock();
    let result = match &cli.command {
        Command::Bound { family } => commands::cmd_bound(family, common, &mut out),
        Command::Verify { family, samples, certificate } => {
            commands::cmd_verify(family, *samples, certificate.as_deref(), common, &mut out)
        }
        Command::Build { family } => commands::cmd_build(family, common, &mut out),
        Command::Zeros { family, n, instance, grid } => {
            let family = family.clone().zip(*n).map(|(family, n)| FamilyArgs { family, n });
            commands::cmd_zeros(family.as_ref(), instance.as_deref(), *grid, common, &mut out)
        }
        Command::Melnikov { system, n, spec, zero, h_min, h_max, samples, spacing, reversed } => commands::cmd_melnikov(
            system.as_deref(),
            *n,
            spec.as_deref(),
            *zero,
            (*h_min, *h_max),
            *samples,
            *spacing,
            *reversed,
            common,
            &mut out,
        ),
        Command::Fit { family, input } => commands::cmd_fit(family, input, common, &mut out),
    };
    match result {
        Ok(exit) => ExitCode::from(exit.code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Exit::Error.code() as u8)
        }
    }
}
