use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use cof_core::bounds::bound_report;
use cof_core::instance::{
    analyze, ingest_ratings, parse_instance, BanditInstance, InstanceAnalysis,
};
use cof_core::runner::{aggregate_dir, run_sweep, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "cof",
    version,
    about = "Bandits with a cost subsidy: simulation, analysis and bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print every derived symbol of an instance as JSON (arms are 1-based).
    Analyze {
        instance: PathBuf,
        /// Overrides the alpha stored in the instance file.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Print the bound table as CSV.
    Bounds {
        instance: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        horizon: u64,
        /// Defaults to 1/T^2.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Run the sweep described by a JSON config.
    Simulate { config: PathBuf },
    /// Build an instance file from ratings and an item-to-genre map.
    Ingest {
        ratings: PathBuf,
        genres: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        scale_max: f64,
        #[arg(long)]
        cost_seed: u64,
        /// Alpha written into the instance file.
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Recompute aggregate.csv and terminal.csv from a sweep's curve files.
    Aggregate { dir: PathBuf },
}

struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, e: impl ToString) -> Self {
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

fn load_instance(path: &Path, alpha: Option<f64>) -> Result<BanditInstance, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    let parsed = parse_instance(&text).map_err(|e| CliError::new("instance", e))?;
    if parsed.resorted {
        log::warn!(
            "{}: arms were not in cost order and have been re-sorted",
            path.display()
        );
    }
    match alpha {
        Some(a) => parsed
            .instance
            .with_alpha(a)
            .map_err(|e| CliError::new("instance", e)),
        None => Ok(parsed.instance),
    }
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|k| k + 1).collect()
}

fn analysis_json(inst: &BanditInstance, a: &InstanceAnalysis) -> Value {
    json!({
        "num_arms": a.num_arms(),
        "alpha": a.alpha,
        "means": inst.means(),
        "costs": inst.costs(),
        "mu_star": a.mu_star,
        "i_star": a.i_star + 1,
        "mu_cs": a.mu_cs,
        "feasible_set": one_based(&a.feasible_set),
        "a_star": a.a_star + 1,
        "cheap_arms": one_based(&a.cheap_arms),
        "expensive_arms": one_based(&a.expensive_arms),
        "a_dagger": a.a_dagger.map(|k| k + 1),
        "mu_dagger": a.mu_dagger,
        "dagger_set": one_based(&a.dagger_set),
        "quality_gaps": a.quality_gaps,
        "cost_gaps": a.cost_gaps,
        "reward_gaps": a.reward_gaps,
        "dagger_gaps": a.dagger_gaps,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let write_err = |e: io::Error| CliError::new("io", e);
    match cli.command {
        Command::Analyze { instance, alpha } => {
            let inst = load_instance(&instance, alpha)?;
            let a = analyze(&inst);
            let text = serde_json::to_string_pretty(&analysis_json(&inst, &a))
                .map_err(|e| CliError::new("io", e))?;
            writeln!(out, "{text}").map_err(write_err)?;
        }
        Command::Bounds {
            instance,
            alpha,
            horizon,
            delta,
        } => {
            let inst = load_instance(&instance, alpha)?;
            if horizon < 2 {
                return Err(CliError::new("bounds", "horizon must be at least 2"));
            }
            let delta = delta.unwrap_or_else(|| (horizon as f64).powi(-2));
            let report = bound_report(&analyze(&inst), horizon, delta)
                .map_err(|e| CliError::new("bounds", e))?;
            for d in &report.diagnostics {
                log::warn!("{d}");
            }
            out.write_all(report.to_csv().as_bytes())
                .map_err(write_err)?;
        }
        Command::Simulate { config } => {
            let cfg = ExperimentConfig::load(&config).map_err(|e| CliError::new("config", e))?;
            let summary = run_sweep(&cfg).map_err(|e| CliError::new("simulate", e))?;
            let mismatches: u64 = summary
                .traces
                .iter()
                .map(|t| t.decomposition_mismatches)
                .sum();
            if mismatches > 0 {
                log::warn!("{mismatches} checkpoints disagreed between regret routes");
            }
            let line = json!({
                "runs": summary.traces.len(),
                "files_written": summary.files_written,
                "output_dir": cfg.output_dir,
            });
            writeln!(out, "{line}").map_err(write_err)?;
        }
        Command::Ingest {
            ratings,
            genres,
            scale_max,
            cost_seed,
            alpha,
            output,
        } => {
            let open = |p: &Path| {
                File::open(p).map_err(|e| CliError::new("io", format!("{}: {e}", p.display())))
            };
            let arms = ingest_ratings(open(&ratings)?, open(&genres)?, scale_max, cost_seed)
                .map_err(|e| CliError::new("ingest", e))?;
            for w in &arms.warnings {
                log::warn!("{w}");
            }
            let labels = arms.labels.clone();
            let inst = arms
                .into_instance(alpha)
                .map_err(|e| CliError::new("ingest", e))?;
            let mut text = String::from("# arms in cost order:");
            for l in &labels {
                text.push(' ');
                text.push_str(l);
            }
            text.push('\n');
            text.push_str(&inst.to_file_string());
            fs::write(&output, text)
                .map_err(|e| CliError::new("io", format!("{}: {e}", output.display())))?;
            writeln!(out, "{}", json!({ "arms": labels.len(), "output": output }))
                .map_err(write_err)?;
        }
        Command::Aggregate { dir } => {
            let rows = aggregate_dir(&dir).map_err(|e| CliError::new("aggregate", e))?;
            writeln!(out, "{}", json!({ "rows": rows.len(), "dir": dir })).map_err(write_err)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind, "message": e.message }));
            ExitCode::FAILURE
        }
    }
}
