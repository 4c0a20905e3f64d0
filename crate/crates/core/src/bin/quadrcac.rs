use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use quadrcac::config::ScenarioConfig;
use quadrcac::harness::{compare, run_to_dir, Variant};
use quadrcac::log::{fmt_f64, FlightLog};
use quadrcac::metrics::{drift_trace, evaluate, pitch_moment_spectrum, MetricsConfig};
use quadrcac::Error;

/// Environment variable prefixed to relative output directories.
const OUTPUT_ROOT_ENV: &str = "QUADRCAC_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "quadrcac", version, about = "Adaptive quadcopter autopilot simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario.
    Run(ScenarioArgs),
    /// Run the fixed-gain and adaptive variants on the same scenario.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Variants to run, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "fixed,none,n1,n2,n3")]
        variants: Vec<VariantArg>,
    },
    /// Recompute metrics for an existing flight log.
    Metrics {
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write spectrum and drift-trace CSVs into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the pitching-moment spectrum of a flight log as CSV.
    Spectrum {
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default scenario configuration.
    DefaultConfig,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    deadzone: Option<VariantArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    None,
    N1,
    N2,
    N3,
    Fixed,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::None => Variant::None,
            VariantArg::N1 => Variant::N1,
            VariantArg::N2 => Variant::N2,
            VariantArg::N3 => Variant::N3,
            VariantArg::Fixed => Variant::Fixed,
        }
    }
}

fn load_config(path: Option<&Path>) -> quadrcac::Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn output_dir(arg: Option<&Path>, cfg: &ScenarioConfig) -> PathBuf {
    let dir = arg.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir,
    }
}

fn scenario(args: &ScenarioArgs) -> quadrcac::Result<ScenarioConfig> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.noise.seed = seed;
    }
    if let Some(d) = args.duration {
        cfg.duration_s = d;
    }
    if let Some(v) = args.deadzone {
        cfg = Variant::from(v).apply(&cfg);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn metrics_config(path: Option<&Path>) -> quadrcac::Result<MetricsConfig> {
    Ok(match path {
        Some(p) => ScenarioConfig::load(p)?.metrics,
        None => MetricsConfig::default(),
    })
}

fn run(cli: Cli) -> quadrcac::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = scenario(&args)?;
            let dir = output_dir(args.out.as_deref(), &cfg);
            let report = run_to_dir(&cfg, &dir)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Compare { scenario: args, variants } => {
            let cfg = scenario(&args)?;
            let dir = output_dir(args.out.as_deref(), &cfg);
            let variants: Vec<Variant> = variants.into_iter().map(Variant::from).collect();
            let table = compare(&cfg, &variants, Some(&dir))?;
            print!("{}", table.to_csv()?);
        }
        Command::Metrics { log, config, out } => {
            let mcfg = metrics_config(config.as_deref())?;
            let flight = FlightLog::load_csv(&log)?;
            let report = evaluate(&flight, &mcfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                write_spectrum(&flight, &mcfg, &dir.join("spectrum.csv"))?;
                let trace = drift_trace(&flight)?;
                let mut w = csv::Writer::from_path(dir.join("drift.csv"))?;
                w.write_record(["t", "theta_w_norm"])?;
                for (t, n) in trace.t.iter().zip(&trace.norms) {
                    w.write_record([fmt_f64(*t), fmt_f64(*n)])?;
                }
                w.flush().map_err(|e| Error::Io { path: dir.join("drift.csv"), source: e })?;
            }
        }
        Command::Spectrum { log, config, out } => {
            let mcfg = metrics_config(config.as_deref())?;
            let flight = FlightLog::load_csv(&log)?;
            match out {
                Some(p) => write_spectrum(&flight, &mcfg, &p)?,
                None => {
                    let spec = pitch_moment_spectrum(&flight, &mcfg)?;
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    spectrum_rows(&mut w, &spec)?;
                }
            }
        }
        Command::DefaultConfig => print!("{}", ScenarioConfig::default().to_toml_string()?),
    }
    Ok(())
}

fn spectrum_rows<W: std::io::Write>(w: &mut csv::Writer<W>, spec: &quadrcac::metrics::Spectrum) -> quadrcac::Result<()> {
    w.write_record(["freq_hz", "magnitude"])?;
    for (f, m) in spec.freqs.iter().zip(&spec.magnitudes) {
        w.write_record([fmt_f64(*f), fmt_f64(*m)])?;
    }
    Ok(())
}

fn write_spectrum(flight: &FlightLog, mcfg: &MetricsConfig, path: &Path) -> quadrcac::Result<()> {
    let spec = pitch_moment_spectrum(flight, mcfg)?;
    let mut w = csv::Writer::from_path(path)?;
    spectrum_rows(&mut w, &spec)?;
    w.flush().map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::InvalidParameter { .. } => ExitCode::from(2),
                Error::Divergence { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
