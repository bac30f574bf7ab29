use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use cmdp_lab::environments::{generate, GenSpec};
use cmdp_lab::harness::{csv_string, run_experiment, write_csv, ExperimentConfig};
use cmdp_lab::io::{read_env, write_env};
use cmdp_lab::planning::min_reach_probability;
use cmdp_lab::validate_cmdp;

#[derive(Parser)]
#[command(
    name = "cmdp-lab",
    version,
    about = "Regret experiments on layered contextual MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write the per-round CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output path; `-` writes to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate an instance from a spec file and serialize it.
    GenEnv {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a serialized instance and report its minimum reachability.
    Verify {
        #[arg(long)]
        env: PathBuf,
    },
}

fn run(config: PathBuf, output: Option<PathBuf>) -> Result<ExitCode> {
    let cfg = ExperimentConfig::from_file(&config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let log = run_experiment(&cfg)?;
    match output.or_else(|| cfg.output.clone()) {
        Some(path) if path.as_os_str() == "-" => print!("{}", csv_string(&log)),
        Some(path) => {
            write_csv(&log, &path).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} rows to {}", log.rows.len(), path.display());
        }
        None => print!("{}", csv_string(&log)),
    }
    for s in &log.summaries {
        let mut line = format!("seed {}: cumulative regret {:.6}", s.seed, s.cum_regret);
        if let Some(bound) = s.potential_bound {
            line.push_str(&format!(
                ", potential {:.4} (bound {:.4})",
                s.potential_sum, bound
            ));
        }
        if s.lsr_checks > 0 {
            line.push_str(&format!(
                ", lsr violations {}/{}",
                s.lsr_violations, s.lsr_checks
            ));
        }
        if let Some(o) = s.optimism {
            line.push_str(&format!(
                ", confidence event {}/{} rounds, optimistic {}/{}",
                o.event_rounds, o.rounds, o.optimistic_rounds, o.event_rounds
            ));
        }
        eprintln!("{line}");
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_env(spec: PathBuf, out: PathBuf) -> Result<ExitCode> {
    let text =
        std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec = GenSpec::from_toml(&text).context("parsing generator spec")?;
    let env = generate(&spec)?;
    write_env(&env, &out).with_context(|| format!("writing {}", out.display()))?;
    eprintln!(
        "wrote {} states, {} actions, {} contexts to {}",
        env.cmdp.n_states,
        env.cmdp.n_actions,
        env.cmdp.n_contexts(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn verify(env: PathBuf) -> Result<ExitCode> {
    let bundle = read_env(&env).with_context(|| format!("reading {}", env.display()))?;
    let cmdp = &bundle.cmdp;
    let report = validate_cmdp(cmdp);
    println!(
        "states {}, actions {}, horizon {}, contexts {}",
        cmdp.n_states,
        cmdp.n_actions,
        cmdp.horizon(),
        cmdp.n_contexts()
    );
    if !report.is_ok() {
        println!("invalid:\n{report}");
        return Ok(ExitCode::FAILURE);
    }
    println!("valid");
    println!("min reachability {}", min_reach_probability(cmdp));
    if let Some(f) = &bundle.reward_class {
        println!(
            "reward class: {} members, truth {:?}",
            f.len(),
            f.truth_index()
        );
    }
    if let Some(fp) = &bundle.dynamics_class {
        println!(
            "dynamics class: {} members, truth {:?}",
            fp.len(),
            fp.truth_index()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, output } => run(config, output),
        Command::GenEnv { spec, out } => gen_env(spec, out),
        Command::Verify { env } => verify(env),
    }
}
