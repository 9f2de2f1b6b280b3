use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fermibgk::commands;
use fermibgk::{AppError, AppResult, ScenarioId, Settings};
use fermibgk_core::Moments;

/// Fermionic quantum BGK solver and identity checks.
///
/// Exit codes: 0 ok, 2 configuration error, 3 admissibility violation,
/// 4 verification failed, 5 I/O error, 6 numerical failure.
/// Logging level from FERMIBGK_LOG (error, info, debug).
#[derive(Parser, Debug)]
#[command(name = "fermibgk", version)]
struct Cli {
    /// TOML configuration (scenario preset plus overrides).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for the random test vectors.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate c, beta(c), beta'(c).
    Betatable {
        #[arg(long, allow_hyphen_values = true)]
        c_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        c_max: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Invert one moment triple, or run the random round-trip batch.
    Invert {
        #[arg(long)]
        density: Option<f64>,
        /// Three comma-separated components.
        #[arg(long, value_delimiter = ',', num_args = 3, allow_hyphen_values = true)]
        momentum: Option<Vec<f64>>,
        #[arg(long)]
        energy: Option<f64>,
    },
    /// Run a time-integration scenario (relax0d, decay1x3v, ...).
    Simulate {
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Check the linearization identities at the configured equilibrium.
    Lincheck,
    /// Run the Picard iteration and compare with the direct solve.
    Picard,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("FERMIBGK_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_target(false).try_init();
}

fn init_threads(n: usize) -> AppResult<()> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Config(format!("cannot start {n} threads: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        log::warn!("built without the `parallel` feature; running on one thread");
    }
    Ok(())
}

fn run(cli: Cli) -> AppResult<String> {
    let name = match &cli.command {
        Command::Betatable { .. } => "betatable",
        Command::Invert { .. } => "invert",
        Command::Simulate { .. } => "simulate",
        Command::Lincheck => "lincheck",
        Command::Picard => "picard",
    };
    let forced = match &cli.command {
        Command::Simulate { scenario: Some(s) } => Some(s.parse::<ScenarioId>()?),
        _ => None,
    };
    let mut settings = Settings::load(cli.config.as_deref(), commands::default_scenario(name), forced)?;
    if let Some(seed) = cli.seed {
        settings.seed = seed;
    }
    if let Some(t) = cli.threads {
        settings.threads = t;
    }
    init_threads(settings.threads)?;
    log::info!("scenario {} seed {}", settings.scenario, settings.seed);

    let out = cli.out.as_path();
    match cli.command {
        Command::Betatable { c_min, c_max, n } => {
            let bt = &mut settings.betatable;
            bt.c_min = c_min.unwrap_or(bt.c_min);
            bt.c_max = c_max.unwrap_or(bt.c_max);
            bt.n = n.unwrap_or(bt.n);
            settings.validate()?;
            Ok(commands::betatable(&settings, out)?.1)
        }
        Command::Invert {
            density,
            momentum,
            energy,
        } => match (density, energy) {
            (Some(n), Some(e)) => {
                let p = momentum.unwrap_or_else(|| vec![0.0; 3]);
                commands::invert_single(&settings, &Moments::new(n, [p[0], p[1], p[2]], e))
            }
            (None, None) => Ok(commands::invert_roundtrip(&settings, out)?.1),
            _ => Err(AppError::Config("invert needs both --density and --energy".into())),
        },
        Command::Simulate { .. } => match settings.scenario {
            ScenarioId::Picard => Ok(commands::picard(&settings, out)?.1),
            ScenarioId::Relax0d | ScenarioId::Decay1x3v => Ok(commands::simulate(&settings, out)?.1),
            other => Err(AppError::Config(format!(
                "scenario {other} is not a time integration; use its own subcommand"
            ))),
        },
        Command::Lincheck => Ok(commands::lincheck(&settings, out)?.1),
        Command::Picard => Ok(commands::picard(&settings, out)?.1),
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status().code() as u8)
        }
    }
}
