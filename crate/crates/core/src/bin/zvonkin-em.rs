use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use zvonkin_em::harness::{
    assumption_reports, emit_report, obtain_corrector, run_experiment_with_progress, ExperimentConfig,
};
use zvonkin_em::model::registry::PRESETS;
use zvonkin_em::{Error, Result};

/// Invariant-measure sampling for SDEs with singular drift.
#[derive(Parser)]
#[command(name = "zvonkin-em", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV, plot and summary files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides `master_seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve the corrector with the lambda search and save it.
    SolveCorrector {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cache: PathBuf,
    },
    /// Print the sampled assumption reports for the configured problem.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the registered problems.
    ListProblems,
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("ZVONKIN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("ZVONKIN_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Config(e.to_string()))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            let result = run_experiment_with_progress(&cfg, &|msg| eprintln!("[zvonkin-em] {msg}"))?;
            let paths = emit_report(&result, &dir, &cfg.output)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {}", paths.csv.display());
            if let Some(p) = &paths.plot {
                println!("wrote {}", p.display());
            }
            println!("wrote {}", paths.summary.display());
            Ok(())
        }
        Command::SolveCorrector { config, cache } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.corrector.cache = None;
            let problem = cfg.validate()?;
            let (field, _) = obtain_corrector(&cfg, &problem).map_err(|e| e.at_stage("corrector", None))?;
            field.save(&cache)?;
            println!(
                "lambda = {}, sup|u| = {:.6e}, sup|grad u| = {:.6}; wrote {}",
                field.lambda,
                field.sup_u,
                field.sup_grad_u,
                cache.display()
            );
            Ok(())
        }
        Command::Check { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let problem = cfg.validate()?;
            let grid = cfg.grid(problem.dim)?;
            let radius = grid.radius - 4.0f64.max(grid.radius / 3.0);
            let reports = assumption_reports(&problem, radius, cfg.master_seed)?;
            println!("{}", to_json(&reports)?);
            let ok = reports.dissipativity.holds() && !reports.lipschitz_b2.flagged && reports.ellipticity.passed;
            if ok {
                Ok(())
            } else {
                Err(Error::Config("sampled assumption checks failed".into()))
            }
        }
        Command::ListProblems => {
            for p in PRESETS {
                println!("{:<10} {}", p.name, p.description);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = configure_threads().and_then(|_| execute(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
