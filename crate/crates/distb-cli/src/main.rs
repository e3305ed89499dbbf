//! `distb` — batch front-end for the simulator.
//!
//! Every subcommand loads a scenario file, optionally overrides the seed,
//! runs deterministically, and either writes the report set into an output
//! directory or prints structured text. Exit codes classify failures:
//! 2 for configuration problems, 3 for runtime failures, 4 for I/O.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use distb_core::runner::{self, RunOutput};
use distb_core::scenario::{Scenario, VariantChoice};
use distb_core::world::World;
use distb_core::Variant;

#[derive(Parser)]
#[command(
    name = "distb",
    about = "Deterministic simulator comparing a centralized IoT deployment \
             against one secured by threshold-consent ledger checks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the scenario's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Where reports land (default: $DISTB_OUT_DIR, then ./out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Also write the per-variant event trace (`trace_<variant>.tsv`).
    #[arg(long, global = true)]
    trace: bool,

    /// Accept scenario values outside the reference bands.
    #[arg(long, global = true)]
    allow_nonpaper: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write CSV, charts, and chain export.
    Run {
        /// Scenario file.
        cfg: PathBuf,
    },
    /// Run the scenario once per value of one parameter, all runs isolated.
    Sweep {
        /// Scenario file.
        cfg: PathBuf,
        /// Scenario key to vary (any scalar key, e.g. `sensors` or `tau`).
        #[arg(long)]
        param: String,
        /// Comma-separated values, one isolated run each.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Simulate, then print the controller's northbound view (topology,
    /// flow tables, counters) and the run summary.
    Inspect {
        /// Scenario file.
        cfg: PathBuf,
    },
    /// Simulate, then print the sealed chain, one block per line.
    ExportChain {
        /// Scenario file.
        cfg: PathBuf,
    },
    /// Parse and validate a scenario; print the effective configuration.
    Validate {
        /// Scenario file.
        cfg: PathBuf,
    },
}

/// Failure classification behind the documented exit codes.
enum Failure {
    Config(String),
    Runtime(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) | Failure::Io(m) => m,
        }
    }
}

fn load_scenario(path: &Path, cli: &Cli) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg =
        Scenario::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate(cli.allow_nonpaper)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| {
        std::env::var_os("DISTB_OUT_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"))
    })
}

/// Runs the simulation with panics downgraded to runtime failures, so a
/// violated internal invariant reports as exit 3 instead of a crash.
fn guarded<T>(work: impl FnOnce() -> T + std::panic::UnwindSafe) -> Result<T, Failure> {
    std::panic::catch_unwind(work).map_err(|cause| {
        let text = cause
            .downcast_ref::<String>()
            .map(String::as_str)
            .or_else(|| cause.downcast_ref::<&str>().copied())
            .unwrap_or("simulation panicked");
        Failure::Runtime(text.to_string())
    })
}

fn check_health(output: &RunOutput) -> Result<(), Failure> {
    for report in &output.reports {
        if !report.conservation.holds() {
            return Err(Failure::Runtime(format!(
                "packet conservation violated in variant {}",
                report.variant
            )));
        }
        if let Some(chain) = &report.chain {
            if !chain.verify() {
                return Err(Failure::Runtime(format!(
                    "chain audit failed in variant {}",
                    report.variant
                )));
            }
        }
    }
    Ok(())
}

fn cmd_run(cli: &Cli, cfg_path: &Path) -> Result<(), Failure> {
    let cfg = load_scenario(cfg_path, cli)?;
    let output = guarded(move || runner::run_scenario(&cfg, cli.trace))?;
    check_health(&output)?;
    let dir = out_dir(cli);
    let files = runner::emit_outputs(&dir, &output)
        .map_err(|e| Failure::Io(format!("cannot write into {}: {e}", dir.display())))?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn cmd_sweep(cli: &Cli, cfg_path: &Path, param: &str, values: &[String]) -> Result<(), Failure> {
    if values.is_empty() {
        return Err(Failure::Config("sweep needs at least one value".into()));
    }
    let cfg = load_scenario(cfg_path, cli)?;
    let allow = cli.allow_nonpaper;
    let points = guarded(move || runner::sweep(&cfg, param, values, allow))?
        .map_err(|e| Failure::Config(e.to_string()))?;
    for point in &points {
        check_health(&point.output)?;
    }
    let dir = out_dir(cli);
    let files = runner::emit_sweep(&dir, param, &points)
        .map_err(|e| Failure::Io(format!("cannot write into {}: {e}", dir.display())))?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn cmd_inspect(cli: &Cli, cfg_path: &Path) -> Result<(), Failure> {
    let cfg = load_scenario(cfg_path, cli)?;
    let variants: Vec<Variant> = match cfg.variant {
        VariantChoice::Core => vec![Variant::Core],
        VariantChoice::Distb => vec![Variant::Distb],
        VariantChoice::Both => vec![Variant::Core, Variant::Distb],
    };
    let (dumps, output) = guarded(move || {
        let mut dumps = Vec::new();
        let mut reports = Vec::new();
        for v in variants {
            let mut world = World::new(&cfg, v);
            reports.push(world.run_to_end());
            dumps.push(world.northbound_dump());
        }
        let output = RunOutput {
            scenario: cfg,
            reports,
            csv: String::new(),
        };
        (dumps, output)
    })?;
    check_health(&output)?;
    for dump in dumps {
        print!("{dump}");
    }
    print!("{}", runner::describe(&output));
    Ok(())
}

fn cmd_export_chain(cli: &Cli, cfg_path: &Path) -> Result<(), Failure> {
    let mut cfg = load_scenario(cfg_path, cli)?;
    if cfg.variant == VariantChoice::Core {
        return Err(Failure::Config(
            "scenario runs only the centralized variant; no chain to export \
             (set variant = distb or both)"
                .into(),
        ));
    }
    cfg.variant = VariantChoice::Distb;
    let output = guarded(move || runner::run_scenario(&cfg, false))?;
    check_health(&output)?;
    let chain = output.reports[0]
        .chain
        .as_ref()
        .expect("ledger variant always carries a chain");
    for line in chain.export_lines() {
        println!("{line}");
    }
    Ok(())
}

fn cmd_validate(cli: &Cli, cfg_path: &Path) -> Result<(), Failure> {
    let cfg = load_scenario(cfg_path, cli)?;
    print!("{}", cfg.dump_effective());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { cfg } => cmd_run(&cli, cfg),
        Command::Sweep { cfg, param, values } => cmd_sweep(&cli, cfg, param, values),
        Command::Inspect { cfg } => cmd_inspect(&cli, cfg),
        Command::ExportChain { cfg } => cmd_export_chain(&cli, cfg),
        Command::Validate { cfg } => cmd_validate(&cli, cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}
