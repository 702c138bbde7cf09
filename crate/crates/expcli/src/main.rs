use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use memfront::{front, kernel_check, sweep, twoscale, ExperimentConfig, Kind, RunError};

#[derive(Parser)]
#[command(name = "memfront", version, about = "Front speeds of bistable equations with memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// β-sweep of measured and fixed-point front speeds.
    Sweep(Common),
    /// A single traveling front (fixed point plus optional time stepping).
    Front(Common),
    /// The two-scale homogenization example and its scalar reduction.
    Twoscale(Common),
    /// Validate a kernel block and report its moments.
    KernelCheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the config's `output`, then `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path edit applied before validation, e.g. `sweep.step=0.01`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(cli: Cli) -> Result<(), RunError> {
    memfront::init_thread_pool()?;
    let (verb, common) = match &cli.command {
        Command::Sweep(c) => ("sweep", c),
        Command::Front(c) => ("front", c),
        Command::Twoscale(c) => ("twoscale", c),
        Command::KernelCheck(c) => ("kernel-check", c),
    };
    let cfg = ExperimentConfig::load(&common.config, &common.overrides)?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let expect = |ok: bool, what: &str| -> Result<(), RunError> {
        if ok {
            Ok(())
        } else {
            Err(memfront::ConfigError::Invalid(format!("'{verb}' needs {what}")).into())
        }
    };
    match verb {
        "sweep" => {
            expect(
                matches!(cfg.kind, Kind::SpeedSweep | Kind::FixedPointSweep),
                "kind speed_sweep or fixed_point_sweep",
            )?;
            let s = sweep::run_sweep(&cfg, &out)?;
            println!("{} rows, {} failed; output in {}", s.rows, s.failed, out.display());
            for c in &s.sign_changes_fixed_point {
                println!("fixed-point speed changes sign near beta = {:.6}", c.estimate);
            }
        }
        "front" => {
            expect(cfg.kind == Kind::SingleRun, "kind single_run")?;
            let r = front::run_front(&cfg, &out)?;
            println!("fixed-point speed {:.6}", r.speed);
            if let Some(m) = &r.measured {
                println!("measured speed {:.6} (fit residual {:.1e})", m.speed, m.fit_residual);
            }
        }
        "twoscale" => {
            expect(cfg.kind == Kind::TwoScaleDemo, "kind two_scale_demo")?;
            let s = twoscale::run_two_scale_demo(&cfg, &out)?;
            println!("kernel gamma {:.6}", s.kernel.gamma);
            println!("two-scale speed {:.6}, max |avg W| {:.1e}", s.two_scale_speed, s.max_w_average);
            if let Some(c) = s.scalar_speed {
                println!("scalar memory speed {c:.6}");
            }
        }
        _ => {
            let k = kernel_check::run_kernel_check(&cfg, &out)?;
            println!("kernel {} gamma {} g1 {}", k.kernel, k.gamma, k.g1_hat);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("memfront: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
