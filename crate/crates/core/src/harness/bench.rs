//! Strategy × budget × seed sweeps with mean ± std summaries.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::config::{RunConfig, Strategy};
use crate::harness::records::real;
use crate::harness::run::execute;
use crate::harness::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub strategy: Strategy,
    pub budget: u64,
    pub seed: u64,
    pub best_score: Option<f64>,
    pub nre_used: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub strategy: Strategy,
    pub budget: u64,
    pub runs: usize,
    pub failures: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single run.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub cells: Vec<BenchCell>,
    pub summary: Vec<BenchSummary>,
}

fn run_cell(base: &RunConfig, strategy: Strategy, budget: u64, seed: u64) -> BenchCell {
    let mut cfg = base.clone();
    cfg.strategy = strategy;
    cfg.budget_nre = budget;
    cfg.seed = seed;
    cfg.zo.n_iter = None;
    let mut cell = BenchCell {
        strategy,
        budget,
        seed,
        best_score: None,
        nre_used: 0,
        error: None,
    };
    let result = cfg
        .validate()
        .and_then(|_| cfg.scorer())
        .and_then(|scorer| execute(&cfg, scorer.as_ref()).map_err(|a| a.error));
    match result {
        Ok(out) => {
            // the cell value must be reproducible from the evaluation log
            let replay = out.log.iter().map(|e| e.score).fold(f64::NEG_INFINITY, f64::max);
            if replay != out.best.score {
                cell.error = Some(format!("replay mismatch: best {} vs log max {replay}", out.best.score));
            } else {
                cell.best_score = Some(out.best.score);
            }
            cell.nre_used = out.nre_used();
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

/// Every (strategy, budget, seed) combination. Individual failures are
/// recorded in their cell.
pub fn bench(base: &RunConfig, strategies: &[Strategy], budgets: &[u64], seeds: &[u64]) -> Result<BenchReport> {
    if strategies.is_empty() || budgets.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("bench needs at least one strategy, budget and seed".into()));
    }
    let jobs: Vec<(Strategy, u64, u64)> = strategies
        .iter()
        .flat_map(|&s| budgets.iter().flat_map(move |&b| seeds.iter().map(move |&seed| (s, b, seed))))
        .collect();
    let cells: Vec<BenchCell> = if base.parallel {
        let mut serial = base.clone();
        serial.parallel = false;
        jobs.par_iter().map(|&(s, b, seed)| run_cell(&serial, s, b, seed)).collect()
    } else {
        jobs.iter().map(|&(s, b, seed)| run_cell(base, s, b, seed)).collect()
    };
    let mut summary = Vec::new();
    for &s in strategies {
        for &b in budgets {
            let group: Vec<&BenchCell> = cells.iter().filter(|c| c.strategy == s && c.budget == b).collect();
            let scores: Vec<f64> = group.iter().filter_map(|c| c.best_score).collect();
            let n = scores.len();
            let mean = if n == 0 { f64::NAN } else { scores.iter().sum::<f64>() / n as f64 };
            let std = if n < 2 {
                0.0
            } else {
                (scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            summary.push(BenchSummary {
                strategy: s,
                budget: b,
                runs: n,
                failures: group.len() - n,
                mean,
                std,
            });
        }
    }
    Ok(BenchReport { cells, summary })
}

impl BenchReport {
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("strategy,budget,seed,best_score,nre_used,error\n");
        for c in &self.cells {
            out += &format!(
                "{},{},{},{},{},{}\n",
                c.strategy.name(),
                c.budget,
                c.seed,
                c.best_score.map(real).unwrap_or_default(),
                c.nre_used,
                c.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            );
        }
        out
    }

    /// `mean±std` in the last column, as in the usual results tables.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("strategy,budget,runs,failures,mean,std,mean_pm_std\n");
        for s in &self.summary {
            out += &format!(
                "{},{},{},{},{},{},{:.4}±{:.4}\n",
                s.strategy.name(),
                s.budget,
                s.runs,
                s.failures,
                real(s.mean),
                real(s.std),
                s.mean,
                s.std
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("bench_runs.csv"), self.runs_csv().as_bytes())?;
        write_atomic(&dir.join("bench_summary.csv"), self.summary_csv().as_bytes())
    }
}
