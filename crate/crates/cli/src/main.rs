use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use contradice::experiment::{
    evaluate_saved, generate_and_save, sweep, sweep_csv, sweep_means, train_and_save, write_text, ExperimentConfig,
    Method, RunResult, SweepAxis,
};
use contradice::objectives::Mutation;
use contradice::oracle::{run_all_probes, ProbeReport};
use contradice::Error;

const CONFIG_HELP: &str = "\
Config files are flat `key = value` TOML. Unknown keys are errors.

Environment: name, env (gridworld|random), layout (suite|checker|corridor|diagonal),
  slip, random_states, random_actions, env_seed
Data: n_good, n_bad, n_mix_bad, n_mix_expert, horizon, beta_good, beta_bad, bad_overlap
Run: seeds, seed, method, exact_psi
Training: alpha, beta, gamma, tau, lr_q, lr_v, lr_disc, steps_disc, steps_main,
  epsilon, clip_lo, clip_hi, min_r, max_r, mode, occupancy_weighting,
  discriminator_input, log_every, exact_v_solve, chi2_target_v, chi2_weight, off_support_q";

#[derive(Parser)]
#[command(name = "contradice", version, about = "Tabular ContraDICE experiments", after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Method: contradice, contradice_g, bc_mix, bc_good, alpha_one, large_alpha, clipped_exp.
    #[arg(long)]
    mode: Option<Method>,
    /// Use exact occupancy ratios instead of trained discriminators.
    #[arg(long)]
    exact_psi: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write mdp.json and good/bad/mix datasets for every task.
    GenData(Common),
    /// Train over all tasks and seeds, writing metrics and result.json.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Save trained discriminators next to each seed's metrics.
        #[arg(long)]
        save_disc: bool,
        /// Load discriminators from a previous run directory.
        #[arg(long, conflicts_with = "exact_psi")]
        load_disc: Option<PathBuf>,
    },
    /// Re-score the policies saved by `train`.
    Eval(RunArgs),
    /// Run every oracle probe and write a JSON report.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, hide = true, default_value = "none")]
        mutation: Mutation,
    },
    /// Sweep one axis and write a tidy CSV.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// alpha, bad_size, beta or mix_quality.
        #[arg(long)]
        axis: SweepAxis,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e.root() {
            Error::Config(_) | Error::Parse { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e.root() {
            Error::Io { .. } => Failure::Usage(e.to_string()),
            _ => e.into(),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.train.seed = seed;
    }
    Ok(config)
}

fn run_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut config = load_config(&args.common)?;
    if let Some(seeds) = args.seeds {
        config.seeds = seeds;
    }
    if let Some(method) = args.mode {
        config.method = method;
    }
    config.exact_psi |= args.exact_psi;
    config.validate()?;
    Ok(config)
}

fn print_result(result: &RunResult) {
    let tasks = result.tasks();
    println!("{:<14} {} {:>16}", "method", tasks.iter().map(|t| format!("{t:>10}")).collect::<String>(), "mean ± std");
    let cells: String = tasks.iter().map(|t| format!("{:>10.3}", result.task_mean(t).unwrap_or(f64::NAN))).collect();
    println!("{:<14} {} {:>8.3} ± {:.3}", result.method.name(), cells, result.mean, result.std);
}

fn print_reports(reports: &[ProbeReport]) {
    println!("{:<28} {:>7} {:>13} {:>10}  result", "probe", "trials", "max_viol", "tol");
    for r in reports {
        println!(
            "{:<28} {:>7} {:>13.3e} {:>10.1e}  {}",
            r.name,
            r.n_trials,
            r.max_violation,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_text(path, &text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData(common) => {
            let config = load_config(&common)?;
            for path in generate_and_save(&config, &common.out, config.train.seed)? {
                println!("{}", path.display());
            }
        }
        Command::Train { run, save_disc, load_disc } => {
            let config = run_config(&run)?;
            let result = train_and_save(&config, &run.common.out, save_disc, load_disc.as_deref())?;
            print_result(&result);
            log::info!("finished in {:.1}s", result.wall_clock_seconds);
        }
        Command::Eval(run) => {
            let config = run_config(&run)?;
            let entries = evaluate_saved(&config, &run.common.out)?;
            println!("{:<10} {:>5} {:>12} {:>10}", "task", "seed", "return", "score");
            for e in &entries {
                println!("{:<10} {:>5} {:>12.4} {:>10.4}", e.task, e.seed, e.policy_return, e.normalized_score);
            }
            write_json(&run.common.out.join(&config.name).join("eval.json"), &entries)?;
        }
        Command::Verify { seed, out, mutation } => {
            let reports = run_all_probes(seed, mutation);
            print_reports(&reports);
            write_json(&out.join("verify.json"), &reports)?;
            if reports.iter().any(|r| !r.passed) {
                return Err(Failure::Verification);
            }
        }
        Command::Sweep { run, axis } => {
            let config = run_config(&run)?;
            let rows = sweep(&config, axis)?;
            let path = run.common.out.join(&config.name).join(format!("sweep_{}.csv", axis.name()));
            write_text(&path, &sweep_csv(&rows))?;
            for (value, mean) in sweep_means(&rows) {
                println!("{} = {value:<6} {mean:.4}", axis.name());
            }
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verification) => ExitCode::from(3),
    }
}
