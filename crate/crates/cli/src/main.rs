//! `invport` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use invport::harness::{
    emit, fmt_f64, prepare_dir, run_experiment, shock_study, stream, summarize, tags, write_coverage, write_recovery,
    write_shock_losses, ExperimentConfig, RegretStudy, ALL_TYPES,
};
use invport::ingest::{block_analysis, load_prices_csv, log_returns, shock_column, write_block_outputs, BlockConfig};
use invport::inverse::{identifiability_check, InverseProblem, ParamGrid};
use invport::stats::bootstrap_ci;
use invport::synthetic::{generate_observations, GeneratorConfig, ObservationSet};
use invport::Error;
use serde_json::json;

const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Parser)]
#[command(name = "invport", version, about = "Inverse portfolio optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: results/<command>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Overwrite an existing output directory.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic observation set by forward-solving each period.
    Simulate,
    /// Recover (rho, tau, eta) from an observation set.
    Estimate {
        /// `dataset.json` written by `simulate`.
        #[arg(long)]
        data: PathBuf,
        /// Nonparametric bootstrap resamples; 0 skips intervals.
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
    },
    /// Full Monte Carlo protocol with every artifact.
    Experiment,
    /// Recovery and bootstrap coverage tables only.
    Coverage,
    /// Dynamic-regret study across horizons.
    Regret,
    /// Relative welfare loss under cost and volatility shocks.
    Shock,
    /// Block utility analysis of a daily price CSV.
    Realdata {
        /// CSV with a `date` column followed by one price column per ticker.
        #[arg(long)]
        prices: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::OutputExists(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))? + "\n";
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn experiment_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config: ExperimentConfig = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    config.check()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = &cli.common;
    let name = match &cli.command {
        Command::Simulate => "simulate",
        Command::Estimate { .. } => "estimate",
        Command::Experiment => "experiment",
        Command::Coverage => "coverage",
        Command::Regret => "regret",
        Command::Shock => "shock",
        Command::Realdata { .. } => "realdata",
    };
    let out = common.out.clone().unwrap_or_else(|| Path::new("results").join(name));
    // Refuse before any long computation; writers below may then overwrite.
    if out.exists() && !common.force {
        return Err(Error::OutputExists(out).into());
    }

    match cli.command {
        Command::Simulate => simulate(common, &out),
        Command::Estimate { data, bootstrap } => estimate(common, &out, &data, bootstrap),
        Command::Experiment => {
            let config = experiment_config(common)?;
            let artifact = run_experiment(&config, common.workers)?;
            let summaries = emit(&artifact, &out, true)?;
            println!("{} trials ({} failed) written to {}", artifact.trials.len(), artifact.failed(), out.display());
            print!("{}", recovery_table(&summaries.recovery));
            Ok(())
        }
        Command::Coverage => {
            let config = experiment_config(common)?;
            prepare_dir(&out, true)?;
            let summaries = summarize(&run_experiment(&config, common.workers)?)?;
            write_recovery(&summaries.recovery, &out)?;
            write_coverage(&summaries.coverage, &out)?;
            print!("{}", recovery_table(&summaries.recovery));
            for row in summaries.coverage.iter().filter(|r| r.scope == ALL_TYPES) {
                println!(
                    "{:<12} {:<4} coverage {:.3} mean length {:.4}",
                    row.shock, row.parameter, row.report.coverage, row.report.mean_length
                );
            }
            Ok(())
        }
        Command::Regret => regret(common, &out),
        Command::Shock => {
            let config = experiment_config(common)?;
            prepare_dir(&out, true)?;
            let study = shock_study(&config, common.workers)?;
            write_shock_losses(&study.rows, &out)?;
            for s in &study.shocks {
                if let Some(m) = study.population_mean(s) {
                    println!("{:<12} mean relative welfare loss {m:.4}", s.label());
                }
            }
            Ok(())
        }
        Command::Realdata { prices } => realdata(common, &out, &prices),
    }
}

fn recovery_table(rows: &[invport::harness::RecoveryRow]) -> String {
    let mut s = String::from("parameter       bias   variance        mse  coverage\n");
    for r in rows {
        let cov = r.coverage.map_or("-".to_string(), |c| format!("{c:.2}"));
        let _ = writeln!(
            s,
            "{:<9} {:>10.4} {:>10.4} {:>10.4} {cov:>9}",
            r.parameter, r.stats.bias, r.stats.variance, r.stats.mse
        );
    }
    s
}

fn simulate(common: &Common, out: &Path) -> Result<(), Failure> {
    let config: GeneratorConfig = load_config(common.config.as_deref())?;
    config.check().map_err(|e| Failure::Usage(e.to_string()))?;
    let seed = common.seed.unwrap_or(DEFAULT_SEED);
    let trial = generate_observations(&mut stream(seed, 0, tags::DATA), &config)?;
    prepare_dir(out, true)?;
    write_json(&out.join("dataset.json"), &json!(trial.data))?;
    write_json(
        &out.join("truth.json"),
        &json!({ "seed": seed, "truth": trial.truth, "rho_path": trial.rho_path, "model": trial.model }),
    )?;
    let id = identifiability_check(&trial.data);
    println!(
        "{} periods, {} assets, {} distinct active sets; written to {}",
        trial.data.len(),
        trial.data.n_assets(),
        id.distinct_active_sets,
        out.display()
    );
    for w in &id.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn estimate(common: &Common, out: &Path, data: &Path, bootstrap: usize) -> Result<(), Failure> {
    let grid: ParamGrid = load_config(common.config.as_deref())?;
    grid.check().map_err(|e| Failure::Usage(e.to_string()))?;
    let text = std::fs::read_to_string(data).map_err(|e| Failure::Usage(format!("{}: {e}", data.display())))?;
    let set: ObservationSet =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", data.display())))?;
    let problem = InverseProblem::new(&set);
    let ones = vec![1.0; set.len()];
    let result = problem.estimate(&grid, None, &ones)?;
    let intervals = if bootstrap > 0 {
        let mut rng = stream(common.seed.unwrap_or(DEFAULT_SEED), 0, tags::BOOT_NP);
        let ci = bootstrap_ci(&mut rng, set.len(), bootstrap, 0.95, |w| {
            Ok(problem.estimate(&grid, None, w)?.params().to_vec())
        })?;
        Some(ci)
    } else {
        None
    };
    let id = identifiability_check(&set);
    prepare_dir(out, true)?;
    let [rho, tau, eta] = result.params();
    write_json(
        &out.join("estimate.json"),
        &json!({
            "rho": rho,
            "tau": tau,
            "eta": eta,
            "loss": result.loss,
            "grid_evals": result.grid_evals,
            "resolution": result.resolution,
            "warnings": result.warnings,
            "intervals": intervals,
            "identifiability": {
                "pd_ok": id.pd_ok,
                "distinct_active_sets": id.distinct_active_sets,
                "redundant_pairs": id.redundant_pairs,
                "warnings": id.warnings,
            },
        }),
    )?;
    println!("rho {rho:.4}  tau {tau:.4}  eta {eta:.4}  loss {:.3e}", result.loss);
    if let Some(ci) = intervals {
        for (name, c) in ["rho", "tau", "eta"].iter().zip(ci) {
            println!("{name} 95% interval [{:.4}, {:.4}]", c.lo, c.hi);
        }
    }
    Ok(())
}

fn regret(common: &Common, out: &Path) -> Result<(), Failure> {
    let mut study: RegretStudy = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        study.master_seed = seed;
    }
    let report = study.run(common.workers)?;
    prepare_dir(out, true)?;
    let mut csv = String::from("T,seed,rho_true,tau_true,eta_true,regret,normalized,static,drift\n");
    for (s, seed) in report.seeds.iter().enumerate() {
        for (t, series) in report.sizes.iter().zip(&seed.series) {
            let fields = [
                t.to_string(),
                s.to_string(),
                fmt_f64(seed.truth[0]),
                fmt_f64(seed.truth[1]),
                fmt_f64(seed.truth[2]),
                fmt_f64(series.total()),
                fmt_f64(series.normalized_final),
                fmt_f64(series.static_component),
                fmt_f64(series.drift_component),
            ];
            csv.push_str(&fields.join(","));
            csv.push('\n');
        }
    }
    std::fs::write(out.join("regret.csv"), csv).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_json(
        &out.join("regret_summary.json"),
        &json!({
            "sizes": report.sizes,
            "median_normalized": report.median_normalized,
            "max_decomposition_residual": report.max_decomposition_residual,
        }),
    )?;
    for (t, m) in report.sizes.iter().zip(&report.median_normalized) {
        println!("T={t:<5} median R_T/sqrt(T) {m:.4}");
    }
    Ok(())
}

fn realdata(common: &Common, out: &Path, prices: &Path) -> Result<(), Failure> {
    let cfg: BlockConfig = load_config(common.config.as_deref())?;
    let loaded = load_prices_csv(prices)?;
    let returns = log_returns(&loaded.series)?;
    let blocks = block_analysis(&returns, &loaded.series.dates[1..], &cfg)?;
    prepare_dir(out, true)?;
    write_block_outputs(out, &blocks, &loaded.series.tickers, &cfg.shocks)?;
    if loaded.dropped_rows > 0 {
        println!("dropped {} rows with missing prices", loaded.dropped_rows);
    }
    let mut header = format!("{:<10} {:>12}", "block", "baseline_u");
    for (i, s) in cfg.shocks.iter().enumerate() {
        let _ = write!(header, " {:>12}", shock_column(s, i));
    }
    println!("{header}");
    for b in &blocks {
        let mut line = format!("{:<10} {:>12.6}", b.label, b.baseline_utility);
        for u in &b.shocked_utilities {
            let _ = write!(line, " {u:>12.6}");
        }
        println!("{line}");
    }
    Ok(())
}
