use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use waveguide_bec_cli::output::out_root;
use waveguide_bec_cli::{run, CliError, Command, RunConfig};

#[derive(Parser)]
#[command(name = "wgbec", version, about = "Bosons in thin curved waveguides")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Arc-length frame, curvature and overlap margin of the guide.
    Frame(Opts),
    /// Dirichlet modes of the cross-section.
    Modes(Opts),
    /// Effective coefficients: E0, gap, quartic integral, b, V_geom.
    Coeffs(Opts),
    /// Effective one-dimensional evolution.
    Evolve(Opts),
    /// One many-body run against the effective dynamics.
    Manybody(Opts),
    /// Many-body against effective dynamics along the sequence plan.
    Converge(Opts),
    /// Every invariant check; exits 3 on any failure.
    Verify(Opts),
}

#[derive(Args)]
struct Opts {
    /// TOML or JSON (by extension); the shipped default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root, overriding WGBEC_OUT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, opts) = match cli.command {
        Sub::Frame(o) => (Command::Frame, o),
        Sub::Modes(o) => (Command::Modes, o),
        Sub::Coeffs(o) => (Command::Coeffs, o),
        Sub::Evolve(o) => (Command::Evolve, o),
        Sub::Manybody(o) => (Command::Manybody, o),
        Sub::Converge(o) => (Command::Converge, o),
        Sub::Verify(o) => (Command::Verify, o),
    };
    let result = (|| {
        let cfg = match &opts.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::shipped(),
        };
        let root = out_root(opts.out.as_deref(), &cfg);
        let record = run(cmd, &cfg, &root)?;
        println!("{}", serde_json::to_string_pretty(&record)?);
        if !record.passed {
            return Err(CliError::Verification(format!("see {}", record.scalars.display())));
        }
        Ok::<_, CliError>(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
