use std::path::PathBuf;
use std::process::ExitCode;

use bubblelab::ground_state::RadialMesh;
use bubblelab::io::cached_ground_state;
use bubblelab_harness::config::{Kind, RunConfig};
use bubblelab_harness::report::{collect, report};
use bubblelab_harness::run::run;
use bubblelab_harness::selftest::selftest;
use bubblelab_harness::{HarnessError, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bubblelab", version, about = "Multi-bubble blow-up constructions for the mass-critical NLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    config: PathBuf,
    /// Noise seed, replacing the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Root under which the run directory is created.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    /// Checkpoint spacing, replacing the configured one.
    #[arg(long)]
    checkpoints: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Backward construction from the pseudo-conformal data at t_n.
    Construct(RunArgs),
    /// Base and perturbed runs with the difference functional.
    Pair(RunArgs),
    /// Approximants from several t_n compared at the final time.
    Cauchy(RunArgs),
    /// Seed sweep over child runs.
    Sweep(RunArgs),
    /// Summary tables over run directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Kernel identities, ground-state and conservation checks.
    Selftest {
        /// Ground-state cache directory.
        #[arg(long, default_value = "runs/.cache")]
        cache: PathBuf,
    },
}

fn load(args: &RunArgs, kind: Kind) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if cfg.kind != kind {
        return Err(HarnessError::Validation {
            field: "kind".into(),
            message: format!("config is a `{}` run, not `{kind}`", cfg.kind),
        });
    }
    if let Some(seed) = args.seed {
        match cfg.noise.as_mut() {
            Some(n) => n.seed = seed,
            None => {
                return Err(HarnessError::Validation {
                    field: "noise.seed".into(),
                    message: "--seed needs a noise section".into(),
                })
            }
        }
    }
    if let Some(h) = args.checkpoints {
        cfg.controller.checkpoint_spacing = h;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let (args, kind) = match &cli.command {
        Command::Construct(a) => (a, Kind::Construct),
        Command::Pair(a) => (a, Kind::Pair),
        Command::Cauchy(a) => (a, Kind::Cauchy),
        Command::Sweep(a) => (a, Kind::Sweep),
        Command::Report { dirs } => {
            print!("{}", report(&collect(dirs)?)?.to_text());
            return Ok(());
        }
        Command::Selftest { cache } => {
            let gs1 = cached_ground_state(1, &RadialMesh::default(), cache)?;
            let gs2 = cached_ground_state(2, &RadialMesh::default(), cache)?;
            let checks = selftest(&gs1, &gs2)?;
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed()).count();
            if failed > 0 {
                return Err(HarnessError::Report(format!("{failed} self-test checks failed")));
            }
            return Ok(());
        }
    };
    let cfg = load(args, kind)?;
    let record = run(&cfg, &args.out_dir)?;
    for w in &record.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", record.dir.display());
    print!("{}", record.summary.to_text());
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
