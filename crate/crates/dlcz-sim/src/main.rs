use clap::{Args, Parser, Subcommand};
use dlcz_sim::cli::{
    cmd_bell, cmd_decay, cmd_model, cmd_simulate, cmd_swap, CliError, RunConfig, EXIT_OK,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dlcz-sim", version, about = "Cavity-enhanced quantum-memory node simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file; omitted sections fall back to the reference values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the RNG seed from the config
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for reports and data files
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the trial count from the config
    #[arg(long)]
    trials: Option<u64>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(trials) = self.trials {
            config.trials = Some(trials);
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Emit the single-mode → double-mode efficiency model curve as CSV
    Model {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit the double-exponential decay model to a (t_ms, eta, sigma) CSV
    Decay {
        #[command(flatten)]
        common: CommonArgs,
        /// Input CSV; falls back to the fit.input_csv config field
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// CHSH analysis: optimal S, settings, counting statistics, significance
    Bell {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Monte Carlo simulation of the experimental cycle
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compose two nodes through a Bell-state measurement
    Swap {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn run(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Model { common } => {
            let config = common.load()?;
            let report = cmd_model(&config, &common.out)?;
            println!(
                "model: finesse {} -> cavity factor {:.4}; curve written to {}",
                report.finesse,
                report.cavity_factor,
                report.curve_csv.display()
            );
            if let Some(op) = &report.operating_point {
                println!(
                    "operating point: C = {} -> R_sg = {:.4}, R_db = {:.4}",
                    op.cooperativity, op.r_single, op.r_double
                );
            }
            Ok(())
        }
        Command::Decay { common, input } => {
            let config = common.load()?;
            let input = input
                .clone()
                .or_else(|| config.fit.as_ref().and_then(|f| f.input_csv.clone()))
                .ok_or_else(|| {
                    CliError::Validation("decay needs --input or fit.input_csv".into())
                })?;
            let report = cmd_decay(&config, &input, &common.out)?;
            println!(
                "decay fit: A1 = {:.4}, A2 = {:.4}, tau1 = {:.4} ms, tau2 = {:.1} ms",
                report.params.a1, report.params.a2, report.params.tau1_ms, report.params.tau2_ms
            );
            println!(
                "1/e lifetime = {:.1} ms, chi2/dof = {:.3}; report written to {}",
                report.lifetime_ms,
                report.reduced_chi2,
                common.out.join("decay_report.json").display()
            );
            Ok(())
        }
        Command::Bell { common } => {
            let config = common.load()?;
            let report = cmd_bell(&config, &common.out)?;
            println!("bell: S_max = {:.4}", report.s_max);
            if let Some(mc) = &report.monte_carlo {
                println!(
                    "counting statistics: S = {:.3} ± {:.3} ({:.2} σ above 2)",
                    mc.s, mc.sigma_s, mc.significance
                );
            }
            if let Some(sig) = &report.significance_input {
                println!(
                    "supplied S = {} ± {}: violation by {:.2} standard deviations",
                    sig.s, sig.sigma_s, sig.significance
                );
            }
            Ok(())
        }
        Command::Simulate { common } => {
            let config = common.load()?;
            let n_trials = config.trials.unwrap_or(10_000);
            let report = cmd_simulate(&config, n_trials, &common.out)?;
            let s = &report.summary;
            println!(
                "simulate: {} trials, herald fraction {:.4}, {:.1} Hz excluding loading, {:.3} Hz including",
                s.n_trials, s.herald_fraction, s.rate_excluding_loading_hz, s.rate_including_loading_hz
            );
            if let Some(v) = s.visibility {
                println!("coincidence visibility: {v:.4} from {} coincidences", s.coincidences);
            }
            Ok(())
        }
        Command::Swap { common } => {
            let config = common.load()?;
            let report = cmd_swap(&config, &common.out)?;
            println!(
                "swap: success probability {:.4}, rate {:.4} Hz, joint S = {:.4}",
                report.success_prob, report.end_to_end_rate_hz, report.joint_chsh_s
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
