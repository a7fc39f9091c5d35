use clap::Parser;
use pantilt_cli::{load_scenario, run, RunError, PRESETS};
use pantilt_core::diagnostics::discrepancy_report;
use pantilt_core::JacobianMode;
use std::path::PathBuf;
use std::process::ExitCode;

/// Closed-loop simulation of a pan-tilt person-following robot.
#[derive(Debug, Parser)]
#[command(name = "pantilt-sim", version)]
struct Args {
    /// Preset name (circle-sim, indoor, outdoor) or path to a TOML scenario.
    #[arg(long, default_value = "circle-sim")]
    scenario: String,
    /// Output directory for timeseries.csv and summary.toml.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Run length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Tick length in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Interaction-term evaluation: as-printed or re-derived.
    #[arg(long)]
    mode: Option<JacobianMode>,
    /// Skip the CSV and write only the summary.
    #[arg(long)]
    summary_only: bool,
    /// Print the config that would run, as TOML, and exit.
    #[arg(long)]
    print_config: bool,
    /// Instead of running, check the interaction terms against finite
    /// differences on this many random states.
    #[arg(long, value_name = "SAMPLES")]
    jacobian_report: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, RunError::Config(pantilt_cli::LoadError::Read { .. }))
                && !args.scenario.contains(['/', '.'])
            {
                eprintln!("known presets: {}", PRESETS.join(", "));
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<(), RunError> {
    let mut cfg = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(d) = args.duration {
        cfg.duration = d;
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    cfg.validate().map_err(pantilt_cli::LoadError::from)?;

    if args.print_config {
        print!("{}", pantilt_cli::config::to_toml(&cfg));
        return Ok(());
    }
    if let Some(samples) = args.jacobian_report {
        let rep = discrepancy_report(samples, cfg.seed, &cfg.body, &cfg.intrinsics, 1e-4, 0.01);
        print!("{rep}");
        return Ok(());
    }

    let out = run(&cfg, &args.out, args.summary_only)?;
    if let Some(p) = &out.csv_path {
        eprintln!("wrote {}", p.display());
    }
    eprintln!("wrote {}", out.summary_path.display());
    print!("{}", out.summary.to_toml());
    Ok(())
}
