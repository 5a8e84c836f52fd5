use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rsrobust::experiment::{run, run_selftest, ExperimentSpec, Mode, Scheme};

#[derive(Parser)]
#[command(name = "rsrobust", version, about = "Robust rate-splitting precoder studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Worst-case max-min rate over an SNR grid.
    Maxmin(RunArgs),
    /// Minimum power for a worst-case rate target.
    Qos(RunArgs),
    /// High-SNR slopes next to the optimal DoF.
    Dof(RunArgs),
    /// Solver run times.
    Timing(RunArgs),
    /// Quick end-to-end checks.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// SNR grid in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    /// Uncertainty radius; several values sweep the QoS and timing studies.
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// CSIT scaling exponent per user.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Schemes among nors-con, nors-cs, rs-con, rs-cs.
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<Scheme>>,
    /// Directory for records.csv, timings.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn spec(&self, mode: Mode) -> rsrobust::Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::load(path)?,
            None => ExperimentSpec::new(mode),
        };
        spec.mode = mode;
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        if let Some(v) = self.trials {
            spec.trials = v;
        }
        if let Some(v) = &self.snr {
            spec.snr_db = v.clone();
        }
        if let Some(v) = &self.delta {
            if let [d] = v[..] {
                spec.csit.delta = d;
                spec.sweep.deltas.clear();
            } else {
                spec.sweep.deltas = v.clone();
            }
        }
        if let Some(v) = &self.alpha {
            spec.csit.alpha = v.clone();
        }
        if let Some(v) = &self.scheme {
            spec.schemes = v.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn experiment(args: &RunArgs, mode: Mode) -> rsrobust::Result<()> {
    let spec = args.spec(mode)?;
    let (records, summary) = run(&spec, args.out.as_deref())?;
    let failed = records.iter().filter(|r| r.status == "error").count();
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if failed > 0 {
        return Err(rsrobust::Error::InvalidInput(format!("{failed} of {} solver runs failed", records.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Maxmin(a) => experiment(a, Mode::Maxmin),
        Command::Qos(a) => experiment(a, Mode::Qos),
        Command::Dof(a) => experiment(a, Mode::Dof),
        Command::Timing(a) => experiment(a, Mode::Timing),
        Command::Selftest => {
            let cases = run_selftest();
            for c in &cases {
                println!("{} {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
            }
            return if cases.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
