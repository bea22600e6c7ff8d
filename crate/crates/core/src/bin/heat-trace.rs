use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use heat_trace::io::{
    cmd_detect, cmd_fit, cmd_trace, cmd_verify, ResultBundle, RunConfig, EXIT_CHECK_FAILED,
    EXIT_CONFIG,
};
use heat_trace::Error;

#[derive(Parser)]
#[command(
    name = "heat-trace",
    version,
    about = "Relative heat traces of Schrödinger operators on flat tori"
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the default configuration and exit.
    #[arg(long)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Evaluate the selected methods on the time grid.
    Trace,
    /// Fit small-time expansion coefficients.
    Fit,
    /// Detect the Sobolev order of the potential.
    Detect,
    /// Run the invariant suite.
    Verify,
}

fn run(cli: &Cli, command: Command) -> Result<ResultBundle, Error> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    config.validate()?;
    let bundle = match command {
        Command::Trace => cmd_trace(&config)?,
        Command::Fit => cmd_fit(&config)?,
        Command::Detect => cmd_detect(&config)?,
        Command::Verify => cmd_verify(&config)?,
    };
    bundle.write(&config.output.dir)?;
    Ok(bundle)
}

fn print_summary(bundle: &ResultBundle) {
    for c in &bundle.checks {
        println!(
            "{:<22} {:>12.3e}  tol {:>9.1e}  {}",
            c.name,
            c.value,
            c.tolerance,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    for v in &bundle.verdicts {
        let nominal = v
            .nominal_m
            .map(|m| format!(" (nominal {m})"))
            .unwrap_or_default();
        println!("{:<10} m = {}{nominal}", v.source, v.m_detected);
    }
    for f in &bundle.fits {
        for row in &f.coefficients {
            let oracle = row
                .oracle
                .map(|o| format!("  oracle {o:.10e}"))
                .unwrap_or_default();
            println!(
                "{:<12} c{} = {:.10e} ± {:.2e}{oracle}",
                f.method, row.k, row.coefficient, row.error_bar
            );
        }
    }
    if !bundle.samples.is_empty() && bundle.fits.is_empty() {
        println!("{} samples", bundle.samples.len());
    }
    for flag in &bundle.flags {
        eprintln!("flag: {flag}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_defaults {
        print!("{}", RunConfig::default().to_toml());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (trace, fit, detect, verify)");
        return ExitCode::from(EXIT_CONFIG as u8);
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    match run(&cli, command) {
        Ok(bundle) => {
            print_summary(&bundle);
            ExitCode::from(bundle.exit_code as u8)
        }
        Err(e @ (Error::Config { .. } | Error::InvalidArgument { .. } | Error::Parse(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CHECK_FAILED as u8)
        }
    }
}
