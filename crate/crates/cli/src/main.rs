use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use taylorgrad_core::experiment::{
    run_compare, run_lemma_suite, run_sweep, ExperimentConfig, Format, DEFAULT_LEMMA_SAMPLES,
};

#[derive(Parser)]
#[command(name = "taylorgrad", version, about = "Compare SmoothGrad/VarGrad Monte Carlo estimates with their derivative series")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// One (sigma, n) comparison of MC estimates against the series.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Outer product of the sigma and n lists.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Monte Carlo and fuzz checks of the Gaussian moment identities.
    Lemmata {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_LEMMA_SAMPLES)]
        n: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::from_json(&text).with_context(|| format!("in {}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Number of failed assertions.
fn run(cli: Cli) -> Result<usize> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Compare { config, out, format } => {
            let c = load(&config)?;
            let report = run_compare(&c)?;
            let format = format.map(Format::from).unwrap_or(c.outputs.format);
            emit(&report.render(format), out.as_deref())?;
            Ok(report.failures())
        }
        Command::Sweep { config, out, format } => {
            let c = load(&config)?;
            let report = run_sweep(&c)?;
            let format = format.map(Format::from).unwrap_or(c.outputs.format);
            emit(&report.render(format), out.as_deref())?;
            Ok(report.failures())
        }
        Command::Lemmata { seed, n, out, format } => {
            let report = run_lemma_suite(seed, n)?;
            emit(&report.render(format.into()), out.as_deref())?;
            Ok(report.failures())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} assertion(s) failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
