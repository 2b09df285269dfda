//! Thin command-line front end over the library; the real interfaces live in
//! the crate and its examples/ directory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vadmm::harness::baseline::{baseline_centralized, baseline_local, BaselineOptions};
use vadmm::harness::config::{ExperimentConfig, Role};
use vadmm::harness::fixtures::ensure_fixtures;
use vadmm::harness::sweep::{mean_by_multiplier, noise_sweep, write_sweep_csv};
use vadmm::harness::{run_experiment, HarnessError};
use vadmm::privacy::total_budget;

#[derive(Parser)]
#[command(name = "vadmm", version, about = "ADMM sharing over vertically partitioned features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment (local simulation, coordinator or party role).
    Run(RunArgs),
    /// Train the centralized and local-only reference models.
    Baseline(BaselineArgs),
    /// Repeat a private run across noise multipliers and seeds.
    Sweep(SweepArgs),
    /// Evaluate the total privacy budget after a number of epochs.
    Budget(BudgetArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow materializing the full-size synthetic fixtures.
    #[arg(long)]
    full_data: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Override the configured role.
    #[arg(long, value_parser = parse_role)]
    role: Option<Role>,
    /// Wire party id (1-based); required for the party role.
    #[arg(long)]
    party_id: Option<u16>,
    /// Coordinator listen address, e.g. 127.0.0.1:7070.
    #[arg(long)]
    listen: Option<String>,
    /// Coordinator address a party connects to.
    #[arg(long)]
    connect: Option<String>,
    /// I/O deadline in seconds for the transport backends.
    #[arg(long)]
    io_timeout: Option<u64>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Which reference model to train.
    #[arg(long, default_value = "both", value_parser = ["centralized", "local", "both"])]
    scope: String,
    /// Gradient-descent step cap.
    #[arg(long, default_value_t = 5000)]
    max_steps: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated noise multipliers.
    #[arg(long, default_value = "0,0.5,1,2,4", value_delimiter = ',')]
    multipliers: Vec<f64>,
    /// Repetitions per multiplier.
    #[arg(long, default_value_t = 5)]
    seeds: usize,
}

#[derive(Args)]
struct BudgetArgs {
    /// Per-iteration epsilon.
    #[arg(long)]
    epsilon: f64,
    /// Per-iteration delta.
    #[arg(long)]
    delta: f64,
    /// Number of epochs (releases) to compose over.
    #[arg(long)]
    epochs: usize,
    /// Composition slack delta'.
    #[arg(long)]
    delta_prime: f64,
}

fn parse_role(s: &str) -> Result<Role, String> {
    match s {
        "local-sim" => Ok(Role::LocalSim),
        "coordinator" => Ok(Role::Coordinator),
        "party" => Ok(Role::Party),
        other => Err(format!("unknown role {other:?} (expected local-sim, coordinator or party)")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut config = ExperimentConfig::from_json_file(&common.config)?;
    if let Some(seed) = common.seed {
        config.hyper.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_csv = out.clone();
    }
    ensure_fixtures(&config.train_path, &config.test_path, common.full_data)?;
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let mut config = load_config(&args.common)?;
            if let Some(role) = args.role {
                config.role = role;
            }
            if let Some(id) = args.party_id {
                config.party_id = Some(id);
            }
            if let Some(listen) = args.listen {
                config.listen = Some(listen);
            }
            if let Some(connect) = args.connect {
                config.connect = Some(connect);
            }
            if let Some(t) = args.io_timeout {
                config.io_timeout_secs = t;
            }
            config.validate()?;
            let summary = run_experiment(&config)?;
            match config.role {
                Role::Party => {
                    println!("party {} finished; model block written next to {}", config.party_id.unwrap(), config.output_csv.display());
                }
                _ => {
                    if let Some(pass) = summary.assumption_pass {
                        println!("penalty feasibility: {} (rho = {:.6e})", if pass { "pass" } else { "fail (warning only)" }, summary.rho);
                    }
                    if let Some(last) = summary.metrics.last() {
                        println!(
                            "epochs: {}  train objective: {:.6}  test log loss: {:.6}  test accuracy: {:.4}",
                            last.epoch, last.train_objective, last.test_log_loss, last.test_accuracy
                        );
                    }
                    println!("metrics: {}", config.output_csv.display());
                }
            }
            Ok(())
        }
        Command::Baseline(args) => {
            let config = load_config(&args.common)?;
            let prep_input = read_datasets(&config)?;
            let opts = BaselineOptions {
                lambda: effective_lambda(&config, prep_input.0.n_samples()),
                loss_scale: effective_scale(&config, prep_input.0.n_samples()),
                max_steps: args.max_steps,
                ..Default::default()
            };
            let (train, test) = prep_input;
            let mut lines = Vec::new();
            if args.scope == "centralized" || args.scope == "both" {
                let fit = baseline_centralized(&train, &test, &opts)?;
                println!(
                    "centralized: steps {} grad {:.3e} train objective {:.6} test log loss {:.6} accuracy {:.4}",
                    fit.steps, fit.grad_norm, fit.train_objective, fit.test_log_loss, fit.test_accuracy
                );
                lines.push(format!("centralized,{},{},{},{},{}", fit.steps, fit.grad_norm, fit.train_objective, fit.test_log_loss, fit.test_accuracy));
            }
            if args.scope == "local" || args.scope == "both" {
                let local_cols = config.partition[0];
                let fit = baseline_local(&train, &test, &opts, local_cols)?;
                println!(
                    "local (first {} columns): steps {} grad {:.3e} train objective {:.6} test log loss {:.6} accuracy {:.4}",
                    local_cols, fit.steps, fit.grad_norm, fit.train_objective, fit.test_log_loss, fit.test_accuracy
                );
                lines.push(format!("local,{},{},{},{},{}", fit.steps, fit.grad_norm, fit.train_objective, fit.test_log_loss, fit.test_accuracy));
            }
            if let Some(out) = &args.common.out {
                let mut text = String::from("scope,steps,grad_norm,train_objective,test_log_loss,test_accuracy\n");
                for l in lines {
                    text.push_str(&l);
                    text.push('\n');
                }
                std::fs::write(out, text)?;
            }
            Ok(())
        }
        Command::Sweep(args) => {
            let config = load_config(&args.common)?;
            let (train, test) = read_datasets(&config)?;
            let rows = noise_sweep(&config, &train, &test, &args.multipliers, args.seeds)?;
            for (m, mean) in mean_by_multiplier(&rows, &args.multipliers) {
                println!("multiplier {m}: mean final test log loss {mean:.6}");
            }
            let out = args.common.out.unwrap_or_else(|| {
                let mut p = config.output_csv.clone();
                p.set_extension("sweep.csv");
                p
            });
            write_sweep_csv(&out, &rows)?;
            println!("sweep rows: {}", out.display());
            Ok(())
        }
        Command::Budget(args) => {
            if args.epochs == 0 {
                return Err(HarnessError::Config("budget: epochs must be at least 1".into()));
            }
            let (eps, delta) = total_budget(args.epsilon, args.delta, args.epochs, args.delta_prime);
            println!("epsilon_total = {eps}");
            println!("delta_total = {delta}");
            Ok(())
        }
    }
}

fn read_datasets(config: &ExperimentConfig) -> Result<(vadmm::LabeledDataset, vadmm::LabeledDataset), HarnessError> {
    use vadmm::dataset::parse_libsvm;
    let read = |path: &PathBuf| -> Result<vadmm::LabeledDataset, HarnessError> {
        let file = std::fs::File::open(path).map_err(HarnessError::Io)?;
        parse_libsvm(std::io::BufReader::new(file), config.force_dim).map_err(HarnessError::Dataset)
    };
    let train = read(&config.train_path)?;
    let test = read(&config.test_path)?;
    Ok((train, test))
}

fn effective_lambda(config: &ExperimentConfig, n: usize) -> f64 {
    config
        .hyper
        .lambda
        .unwrap_or(1e-4 * n as f64 * effective_scale(config, n))
}

fn effective_scale(config: &ExperimentConfig, n: usize) -> f64 {
    match config.loss_scale {
        vadmm::harness::config::LossScaleConfig::One => 1.0,
        vadmm::harness::config::LossScaleConfig::InverseN => 1.0 / n as f64,
    }
}
