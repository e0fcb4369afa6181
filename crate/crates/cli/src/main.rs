use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;

use sdecert_cli::commands::{parse_rational, EXIT_INPUT};
use sdecert_cli::problem::ModeName;
use sdecert_cli::{run, Command, Options};

#[derive(Parser)]
#[command(name = "sdecert", version, about = "Density certificates for polynomial SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Check a given density certificate.
    Verify(Common),
    /// Search for a feedback controller and its density.
    Synthesize(Common),
    /// Monte Carlo simulation of the (closed-loop) system.
    Simulate(Common),
    /// Side-condition checks and the symbolic adjoint generator.
    Check(Common),
    /// Synthesis over a grid of gamma and controller degree.
    Sweep(Common),
}

fn mode(s: &str) -> Result<ModeName, String> {
    ModeName::parse(s).ok_or_else(|| format!("unknown mode `{s}` (stabilize, escape, invariant-set)"))
}

#[derive(Args)]
struct Common {
    /// Problem file.
    file: PathBuf,
    #[arg(long, value_parser = mode)]
    mode: Option<ModeName>,
    /// Write the SDP in SDPA sparse format.
    #[arg(long)]
    sdpa_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Treat Marginal side conditions as blocking.
    #[arg(long)]
    strict_side_conditions: bool,
    /// Require the target minus eps*|x|^deg to be SOS.
    #[arg(long, value_parser = parse_rational)]
    eps_pos: Option<BigRational>,
    /// Per-path CSV dump (simulate).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Number of paths in the CSV dump.
    #[arg(long, default_value_t = 10)]
    csv_paths: usize,
    /// Comma-separated gamma values (sweep).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_rational)]
    gammas: Option<Vec<BigRational>>,
    /// Comma-separated controller degrees (sweep).
    #[arg(long, value_delimiter = ',')]
    deg_c: Option<Vec<u32>>,
    /// Exponent p of the growth check (check).
    #[arg(long, default_value_t = 1)]
    growth_p: u32,
    /// Suppress the summary on stdout.
    #[arg(long, short)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, c) = match cli.command {
        Sub::Verify(c) => (Command::Verify, c),
        Sub::Synthesize(c) => (Command::Synthesize, c),
        Sub::Simulate(c) => (Command::Simulate, c),
        Sub::Check(c) => (Command::Check, c),
        Sub::Sweep(c) => (Command::Sweep, c),
    };
    let text = match std::fs::read_to_string(&c.file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", c.file.display());
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    let opts = Options {
        mode: c.mode,
        sdpa_out: c.sdpa_out,
        seed: c.seed,
        json: c.json,
        strict: c.strict_side_conditions,
        eps_pos: c.eps_pos,
        csv: c.csv,
        csv_paths: c.csv_paths,
        gammas: c.gammas,
        deg_c: c.deg_c,
        growth_p: c.growth_p,
    };
    let out = run(cmd, &text, &opts);
    if out.code == EXIT_INPUT {
        eprint!("{}", out.summary);
    } else if !c.quiet {
        print!("{}", out.summary);
    }
    ExitCode::from(out.code as u8)
}
