use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kltrunc_cli::{run, Command, Options};

/// Truncated Karhunen-Loève MAP estimation experiments.
///
/// The output directory is taken from `--out`, else from the
/// KLTRUNC_OUT_DIR environment variable, else from `[output] directory`.
#[derive(Parser)]
#[command(name = "kltrunc", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config file.
    config: PathBuf,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the K-L spectrum and eigenfunctions.
    KlEigs(Common),
    /// Minimize J over all retained modes, or over the first N with --n.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Sweep truncation dimensions and check the error bounds.
    Verify(Common),
    /// Finite-difference checks of the objective gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[cfg(debug_assertions)]
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common, opts) = match cli.command {
        Cmd::KlEigs(c) => (Command::KlEigs, c, Options::default()),
        Cmd::Solve { common, n } => (Command::Solve, common, Options { n, ..Options::default() }),
        Cmd::Verify(c) => (Command::Verify, c, Options::default()),
        #[cfg(debug_assertions)]
        Cmd::Gradcheck {
            common,
            corrupt_gradient,
        } => (
            Command::Gradcheck,
            common,
            Options {
                corrupt_gradient,
                ..Options::default()
            },
        ),
        #[cfg(not(debug_assertions))]
        Cmd::Gradcheck { common } => (Command::Gradcheck, common, Options::default()),
    };
    let opts = Options {
        out: common.out,
        ..opts
    };
    let code = run(
        command,
        &common.config,
        &opts,
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    ExitCode::from(code as u8)
}
