use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use dpaudit_cli::commands::{self, DecodeMechanism};

#[derive(Parser)]
#[command(
    name = "dpaudit",
    version,
    about = "Black-box differential-privacy auditing for on-device telemetry mechanisms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a membership-inference audit described by a JSON config.
    Audit {
        #[arg(long)]
        config: PathBuf,
        /// Master seed override; beats the config value and DPAUDIT_SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; the per-run trace lands alongside it as .csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode an exported analytics log against a candidate list.
    Decode {
        #[arg(long)]
        log: PathBuf,
        /// Text file with one candidate string per line.
        #[arg(long)]
        guesses: PathBuf,
        #[arg(long, value_enum)]
        mechanism: DecodeMechanism,
        #[arg(long)]
        out: PathBuf,
        /// Confirm the log came from your own device or simulation.
        #[arg(long)]
        i_own_this_log: bool,
    },
    /// Run the two-server secure-aggregation simulator.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a rate experiment (input reconstruction, Hamming spread).
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_VIOLATION: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Exit code 2 is reserved for audit violations, so usage errors
            // leave through 1 instead of clap's default 2.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_ERROR,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Audit { config, seed, out } => commands::cmd_audit(&config, seed, &out)
            .map(|violation| if violation { EXIT_VIOLATION } else { EXIT_OK }),
        Command::Decode { log, guesses, mechanism, out, i_own_this_log } => {
            commands::cmd_decode(&log, &guesses, mechanism, &out, i_own_this_log).map(|_| EXIT_OK)
        }
        Command::Simulate { config, out } => {
            commands::cmd_simulate(&config, &out).map(|_| EXIT_OK)
        }
        Command::Experiment { config, out } => {
            commands::cmd_experiment(&config, &out).map(|_| EXIT_OK)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
