use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nint::commands::{self, Region};
use nint::config::RunConfig;
use nint::parallel::Parallelism;
use nint::sampler::Strategy;
use nint::Error;

/// Fit coordinate networks with selectable coordinate-sampling strategies.
///
/// Any config key can be overridden with `--section.key=value`, for example
/// `--train.iterations=500` or `--sampler.xi=0.5`. NINT_THREADS sets the
/// worker count (0 runs sequentially).
#[derive(Parser, Debug)]
#[command(name = "nint", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one signal with one strategy.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        /// Seed for both initialization and sampling.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        strategy: Option<Strategy>,
    },
    /// Run several strategies from shared initializations and tabulate
    /// iterations to each threshold.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Repeatable or comma-separated; at least two.
        #[arg(long = "strategy", value_delimiter = ',', required = true)]
        strategies: Vec<Strategy>,
        /// Repeatable or comma-separated; defaults to the configured seed.
        #[arg(long = "seed", value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Write the tangent kernel of a checkpoint over an image region.
    DumpNtk {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// `row,col,rows,cols`.
        #[arg(long)]
        region: Region,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Target in dB; repeatable. Replaces the configured list.
    #[arg(long = "threshold")]
    thresholds: Vec<f64>,
}

type Overrides = Vec<(String, String)>;

/// Splits `--section.key=value` overrides from the arguments clap handles.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides), Error> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    for arg in args {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let name = body.split('=').next().unwrap_or_default();
        if !name.contains('.') {
            rest.push(arg);
            continue;
        }
        match body.split_once('=') {
            Some((key, value)) => overrides.push((key.to_string(), value.to_string())),
            None => return Err(Error::Config(format!("override `{arg}` needs the form --{name}=value"))),
        }
    }
    Ok((rest, overrides))
}

fn build_config(run: &RunArgs, overrides: &[(String, String)]) -> Result<RunConfig, Error> {
    let mut config = match &run.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply_overrides(overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    if let Some(out) = &run.out {
        config.output_dir = out.clone();
    }
    if !run.thresholds.is_empty() {
        config.settings.train.thresholds = run.thresholds.clone();
    }
    Ok(config)
}

fn run(command: Command, overrides: &[(String, String)]) -> Result<(), Error> {
    let par = Parallelism::from_env()?;
    match command {
        Command::Fit { run, seed, strategy } => {
            let mut config = build_config(&run, overrides)?;
            if let Some(seed) = seed {
                config.set_seed(seed);
            }
            if let Some(strategy) = strategy {
                config.settings.sampler.strategy = strategy;
            }
            let summary = commands::fit(&config, &par)?;
            println!("{}", summary.line());
        }
        Command::Compare { run, strategies, seeds } => {
            let config = build_config(&run, overrides)?;
            let seeds = if seeds.is_empty() {
                vec![config.settings.sampler.seed]
            } else {
                seeds
            };
            let summary = commands::compare(&config, &strategies, &seeds, &par)?;
            print!("{}", summary.csv);
        }
        Command::DumpNtk {
            checkpoint,
            input,
            region,
            out,
        } => {
            if !overrides.is_empty() {
                return Err(Error::Config("dump-ntk takes no config overrides".into()));
            }
            let summary = commands::dump_ntk(&checkpoint, &input, region, &out)?;
            println!(
                "wrote {0}x{0} kernel for {1} coordinates to {2}",
                summary.kernel.entries().nrows(),
                summary.kernel.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(split) => split,
        Err(err) => return fail(&err),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => fail(&err),
    }
}
