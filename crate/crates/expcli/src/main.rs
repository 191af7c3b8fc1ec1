use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdl_core::Distribution;
use sdl_expcli::config::{ConfigError, ExperimentConfig, SerialConfig};
use sdl_expcli::experiment::thread_count;
use sdl_expcli::reference::{record_references, write_references, REFERENCE_FILE};
use sdl_expcli::{render_heatmap, run_forward_reverse, run_schedule_sweep, run_serial_demo, RunError, RunManifest};

/// Exact discrete diffusion and serial-reproduction experiments on a 2D grid.
#[derive(Debug, Parser)]
#[command(name = "sdl", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Validate against brute-force oracles on small grids, then pin the
    /// full-size regression references into `<out>/references.txt`.
    #[arg(long)]
    record_reference: bool,

    /// Output directory for `--record-reference`.
    #[arg(long, requires = "record_reference")]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// `key = value` config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed, overriding `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward marginals and exact reverse process for one schedule.
    ForwardReverse(RunArgs),
    /// The forward/reverse pipeline once per value of `sweep.T_values`.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated step counts, overriding `sweep.T_values`.
        #[arg(long, value_delimiter = ',')]
        t_values: Option<Vec<usize>>,
    },
    /// A serial-reproduction chain.
    Serial(RunArgs),
    /// Render a distribution CSV (`ix,iy,mass`) as a PGM heatmap.
    Render {
        input: PathBuf,
        /// Output file; defaults to the input with a `.pgm` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn experiment_config(args: &RunArgs, sweep: bool) -> Result<ExperimentConfig, RunError> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if sweep => ExperimentConfig::sweep_default(),
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn report(manifest: &RunManifest, dir: &Path, quiet: bool) {
    if quiet {
        return;
    }
    for (k, v) in &manifest.summary {
        eprintln!("{k} = {v}");
    }
    eprintln!("wrote {} files to {} in {:.2}s", manifest.files.len() + 1, dir.display(), manifest.wall_clock_seconds);
}

fn run(cli: Cli) -> Result<(), RunError> {
    let quiet = cli.quiet;
    if cli.record_reference {
        let dir = cli.out.unwrap_or_else(|| PathBuf::from("."));
        let refs = record_references(&|msg| {
            if !quiet {
                eprintln!("{msg}");
            }
        })?;
        write_references(&refs, &dir)?;
        if !quiet {
            eprintln!("wrote {}", dir.join(REFERENCE_FILE).display());
        }
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(ConfigError::new("command", "a subcommand or --record-reference is required").into());
    };
    match command {
        Command::ForwardReverse(args) => {
            let config = experiment_config(&args, false)?;
            let manifest = run_forward_reverse(&config, &config.output_dir)?;
            report(&manifest, &config.output_dir, quiet);
        }
        Command::Sweep { run, t_values } => {
            let mut config = experiment_config(&run, true)?;
            if let Some(t) = t_values {
                config.sweep_steps = t;
            }
            if !quiet {
                eprintln!("sweeping T = {:?} on {} threads", config.sweep_steps, thread_count());
            }
            let manifest = run_schedule_sweep(&config, &config.sweep_steps, &config.output_dir)?;
            report(&manifest, &config.output_dir, quiet);
        }
        Command::Serial(args) => {
            let mut config = match &args.config {
                Some(path) => SerialConfig::load(path)?,
                None => SerialConfig::default(),
            };
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            if let Some(out) = args.out {
                config.output_dir = out;
            }
            let manifest = run_serial_demo(&config, &config.output_dir)?;
            report(&manifest, &config.output_dir, quiet);
        }
        Command::Render { input, out } => {
            let file = File::open(&input).map_err(|e| ConfigError::new(input.display().to_string(), e))?;
            let dist = Distribution::read_csv(BufReader::new(file), None)?;
            let out = out.unwrap_or_else(|| input.with_extension("pgm"));
            render_heatmap(&dist, &out)?;
            if !quiet {
                eprintln!("wrote {}", out.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let _ = rayon::ThreadPoolBuilder::new().num_threads(thread_count()).build_global();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
