use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ses_core::harness::bench::bench;
use ses_core::harness::config::{RunConfig, Strategy};
use ses_core::harness::protocol::{protocol_spec, FlowBridge};
use ses_core::harness::run::{default_out_dir, run};
use ses_core::harness::theory::validate_theory;
use ses_core::harness::write_atomic;
use ses_core::Error;

#[derive(Parser)]
#[command(name = "ses", version, about = "Spectral evolution search over initial noise")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one search and write a run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluate candidates in parallel (results are unchanged).
        #[arg(long)]
        parallel: bool,
    },
    /// Gain-versus-frequency report for the simulated flow.
    ValidateTheory {
        #[arg(long, default_value_t = 1.3)]
        beta: f64,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 8)]
        bands: usize,
        #[arg(long, default_value_t = 400)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for gain_curve.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare strategies over budgets and seeds.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "ses,bon")]
        strategies: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "200")]
        budgets: Vec<u64>,
        /// Number of seeds, counting up from the config's seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Common settings; the strategy and budget in it are ignored.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "bench")]
        out: PathBuf,
        #[arg(long)]
        parallel: bool,
    },
    /// Print the bridge wire protocol.
    ProtocolSpec,
    /// Serve the configured flowsim generator and reward over stdin/stdout.
    Bridge {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Run {
            config,
            seed,
            out,
            parallel,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.parallel |= parallel;
            let dir = out.unwrap_or_else(|| default_out_dir(&cfg));
            let summary = run(&cfg, &dir)?;
            println!(
                "{} seed {}: best score {} at eval {} ({} of {} evaluations) -> {}",
                summary.strategy.name(),
                summary.seed,
                summary.best_score,
                summary.best_eval_index,
                summary.nre_used,
                summary.budget_nre,
                dir.display()
            );
        }
        Cmd::ValidateTheory {
            beta,
            size,
            bands,
            steps,
            seed,
            out,
        } => {
            let report = validate_theory(beta, size, bands, steps, seed)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            write_atomic(&out.join("gain_curve.csv"), report.to_csv().as_bytes())?;
            print!("{}", report.summary());
        }
        Cmd::Bench {
            strategies,
            budgets,
            seeds,
            config,
            out,
            parallel,
        } => {
            let mut base = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::new(Strategy::Ses, 0),
            };
            base.parallel |= parallel;
            let strategies = strategies
                .iter()
                .map(|s| Strategy::parse(s.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            let seeds: Vec<u64> = (0..seeds).map(|i| base.seed + i).collect();
            let report = bench(&base, &strategies, &budgets, &seeds)?;
            report.write(&out)?;
            print!("{}", report.summary_csv());
        }
        Cmd::ProtocolSpec => print!("{}", protocol_spec()),
        Cmd::Bridge { config } => {
            let cfg = RunConfig::load(&config)?;
            let mut bridge = FlowBridge::new(&cfg)?;
            let stdin = io::stdin();
            bridge.serve(BufReader::new(stdin.lock()), io::stdout().lock())?;
        }
    }
    Ok(())
}
