use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mcrts_core::harness::{
    cmd_compare, cmd_gen, cmd_run, cmd_validate, compare_csv, HarnessError, LoadProfile, ReportFormat, RunConfig,
};
use mcrts_core::kernel::Variant;

#[derive(Parser)]
#[command(name = "mcrts", version, about = "Emergency vehicle routing as mixed-criticality scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace and compliance reports.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "mcrts")]
        variant: Variant,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Preset key (nz, uk, usa, au, hk) or policy file.
        #[arg(long)]
        policy: Option<String>,
        /// Report formats; both when omitted.
        #[arg(long = "format")]
        formats: Vec<ReportFormat>,
    },
    /// Generate an n x n grid scenario.
    Gen {
        #[arg(long)]
        grid_n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "default")]
        load: LoadProfile,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (seed, variant) pair and emit a CSV table.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long = "seed", value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long = "variant", value_delimiter = ',', default_value = "mcrts,no_preemption")]
        variants: Vec<Variant>,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn write_or_print(out: Option<PathBuf>, body: &str) -> Result<(), HarnessError> {
    match out {
        Some(path) => std::fs::write(&path, body).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { scenario, seed, variant, out, policy, formats } => {
            let res = cmd_run(&RunConfig { scenario, seed, out, variant, policy, formats })?;
            println!("{}", res.summary);
        }
        Command::Gen { grid_n, seed, load, out } => write_or_print(out, &cmd_gen(grid_n, seed, load)?)?,
        Command::Compare { scenario, seeds, variants, policy, out } => {
            let (rows, policy) = cmd_compare(&scenario, &seeds, &variants, policy.as_deref())?;
            write_or_print(out, &compare_csv(&rows, &policy))?;
        }
        Command::Validate { scenario } => println!("{}", cmd_validate(&scenario)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
