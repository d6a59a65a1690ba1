//! Bookkeeping shared by every search strategy: per-generation records,
//! the evaluation log and abort handling.

use std::time::Instant;

use crate::cem::{Candidate, SearchDistribution};
use crate::error::Error;
use crate::field::NoiseField;
use crate::reward::ScoredEval;

/// Statistics for one generation (SES) or iteration/batch (baselines).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub generation: usize,
    pub nre_used: u64,
    pub best_score_so_far: f64,
    pub generation_mean_score: f64,
    /// `‖μ‖₂` after the generation's update.
    pub mu_norm: Option<f64>,
    /// `Tr(Σ)/D′` after the generation's update.
    pub var_trace_mean: Option<f64>,
    /// Mean pairwise L2 distance between the generation's outputs.
    pub diversity: Option<f64>,
    /// Seconds since the search started.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalEntry {
    pub eval_index: u64,
    pub generation: usize,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Best evaluated candidate; `u` holds the strategy's search coordinates.
    pub best: Candidate,
    pub best_noise: NoiseField,
    /// Noise handed to the generator for the final sample.
    pub final_noise: NoiseField,
    pub distribution: Option<SearchDistribution>,
    pub records: Vec<RunRecord>,
    pub log: Vec<EvalEntry>,
}

impl SearchOutcome {
    pub fn nre_used(&self) -> u64 {
        self.records.last().map_or(0, |r| r.nre_used)
    }
}

/// A search that stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct Aborted {
    pub error: Error,
    pub records: Vec<RunRecord>,
    pub log: Vec<EvalEntry>,
}

pub type SearchResult = std::result::Result<SearchOutcome, Box<Aborted>>;

pub fn mean_pairwise_distance(fields: &[&NoiseField]) -> Option<f64> {
    if fields.len() < 2 {
        return None;
    }
    let mut acc = 0.0;
    let mut pairs = 0usize;
    for i in 0..fields.len() {
        for j in i + 1..fields.len() {
            acc += fields[i].distance(fields[j]).ok()?;
            pairs += 1;
        }
    }
    Some(acc / pairs as f64)
}

/// Running best and log for a strategy.
pub(crate) struct Tracker {
    start: Instant,
    pub records: Vec<RunRecord>,
    pub log: Vec<EvalEntry>,
    pub best: Option<(Candidate, NoiseField)>,
}

impl Tracker {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            records: Vec::new(),
            log: Vec::new(),
            best: None,
        }
    }

    /// Commit a batch in candidate order; `coords[i]` and `noises[i]` belong to
    /// `evals[i]`.
    pub fn commit(
        &mut self,
        generation: usize,
        coords: &[Vec<f64>],
        noises: &[NoiseField],
        evals: &[ScoredEval],
        nre_used: u64,
        dist: Option<&SearchDistribution>,
    ) -> Vec<Candidate> {
        let mut out = Vec::with_capacity(evals.len());
        for ((u, noise), e) in coords.iter().zip(noises).zip(evals) {
            self.log.push(EvalEntry {
                eval_index: e.eval_index,
                generation,
                score: e.score,
            });
            let cand = Candidate {
                u: u.clone(),
                score: e.score,
                eval_index: e.eval_index,
            };
            let better = match &self.best {
                None => true,
                Some((b, _)) => cand.ranks_before(b),
            };
            if better {
                self.best = Some((cand.clone(), noise.clone()));
            }
            out.push(cand);
        }
        let outputs: Option<Vec<&NoiseField>> = evals.iter().map(|e| e.output.as_ref()).collect();
        let mean = evals.iter().map(|e| e.score).sum::<f64>() / evals.len().max(1) as f64;
        self.records.push(RunRecord {
            generation,
            nre_used,
            best_score_so_far: self.best.as_ref().map_or(f64::NEG_INFINITY, |(b, _)| b.score),
            generation_mean_score: mean,
            mu_norm: dist.map(SearchDistribution::mu_norm),
            var_trace_mean: dist.map(SearchDistribution::mean_variance),
            diversity: outputs.and_then(|o| mean_pairwise_distance(&o)),
            wall_time: self.start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn abort(self, error: Error) -> Box<Aborted> {
        Box::new(Aborted {
            error,
            records: self.records,
            log: self.log,
        })
    }
}
