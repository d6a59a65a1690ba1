//! One configured search, persisted to a self-describing run directory.
//!
//! Layout:
//!
//! ```text
//! manifest.toml      resolved config; `ses run --config manifest.toml` reruns it
//! records.csv        one row per generation / iteration
//! evals.csv          every reward evaluation in eval_index order
//! timings.csv        wall-clock seconds per row of records.csv
//! distribution.csv   final (mu, sigma2), ses only
//! best.f32/.toml     best evaluated noise
//! final.f32/.toml    noise handed to the generator for the final sample
//! summary.toml       outcome
//! FAILED             present only when the run aborted; holds the error
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::baselines::{best_of_n, random_search_subspace, zero_order};
use crate::cem::{run_ses, Budget};
use crate::error::{Error, Result};
use crate::harness::config::{RunConfig, Strategy};
use crate::harness::fieldfile::{write_field, FieldMeta};
use crate::harness::records::{distribution_csv, evals_csv, records_csv, timings_csv};
use crate::harness::write_atomic;
use crate::reward::Scorer;
use crate::search::{Aborted, SearchResult};

pub const FAILED_MARKER: &str = "FAILED";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub strategy: Strategy,
    pub seed: u64,
    pub budget_nre: u64,
    pub nre_used: u64,
    pub best_score: f64,
    pub best_eval_index: u64,
    pub config_digest: String,
}

/// Run the configured strategy against `scorer` with a fresh budget.
pub fn execute(config: &RunConfig, scorer: &dyn Scorer) -> SearchResult {
    let budget = Budget::new(config.budget_nre);
    let parallel = config.parallel;
    match config.strategy {
        Strategy::Ses => run_ses(scorer, &budget, &config.cem_config(), parallel),
        Strategy::Bon => best_of_n(scorer, &budget, config.seed, config.baseline.batch, parallel),
        Strategy::Zon => zero_order(scorer, &budget, &config.zo_config(), parallel),
        Strategy::RandomSubspace => random_search_subspace(
            scorer,
            &budget,
            config.baseline.subspace,
            config.baseline.level,
            config.seed,
            config.baseline.batch,
            parallel,
        ),
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    write_atomic(&dir.join(name), text.as_bytes())
}

fn fail(dir: &Path, error: Error) -> Error {
    // the original error matters more than a failure to record it
    let _ = write_text(dir, FAILED_MARKER, &format!("{error}\n"));
    error
}

/// Validate, run and persist. Config errors surface before anything is
/// written; later failures leave partial records and a `FAILED` marker.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    let resolved = config.resolved();
    let digest = resolved.digest()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let marker = out_dir.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    let mut manifest = resolved.clone();
    manifest.out_dir = None;
    write_text(out_dir, "manifest.toml", &manifest.to_toml_string()?)?;

    let scorer = resolved.scorer().map_err(|e| fail(out_dir, e))?;
    let outcome = match execute(&resolved, scorer.as_ref()) {
        Ok(o) => o,
        Err(aborted) => {
            let Aborted { error, records, log } = *aborted;
            let partial = write_text(out_dir, "records.csv", &records_csv(&records))
                .and_then(|_| write_text(out_dir, "evals.csv", &evals_csv(&log)))
                .and_then(|_| write_text(out_dir, "timings.csv", &timings_csv(&records)));
            if let Err(e) = partial {
                eprintln!("could not write partial records: {e}");
            }
            return Err(fail(out_dir, error));
        }
    };

    write_text(out_dir, "records.csv", &records_csv(&outcome.records))?;
    write_text(out_dir, "evals.csv", &evals_csv(&outcome.log))?;
    write_text(out_dir, "timings.csv", &timings_csv(&outcome.records))?;
    if let Some(d) = &outcome.distribution {
        write_text(out_dir, "distribution.csv", &distribution_csv(d))?;
    }
    let shape = scorer.shape();
    write_field(
        &out_dir.join("best.f32"),
        &outcome.best_noise,
        &FieldMeta::new(shape, "best", &resolved)?,
    )?;
    write_field(
        &out_dir.join("final.f32"),
        &outcome.final_noise,
        &FieldMeta::new(shape, "final", &resolved)?,
    )?;
    let summary = RunSummary {
        strategy: resolved.strategy,
        seed: resolved.seed,
        budget_nre: resolved.budget_nre,
        nre_used: outcome.nre_used(),
        best_score: outcome.best.score,
        best_eval_index: outcome.best.eval_index,
        config_digest: digest,
    };
    write_text(
        out_dir,
        "summary.toml",
        &toml::to_string(&summary).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    Ok(summary)
}

/// `runs/<strategy>-seed<seed>` unless the config names a directory.
pub fn default_out_dir(config: &RunConfig) -> PathBuf {
    config
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-seed{}", config.strategy.name(), config.seed)))
}
