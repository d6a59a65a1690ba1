//! Cross-entropy search over the low-frequency coordinates.

use std::cmp::Ordering;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::NoiseField;
use crate::reward::{evaluate_batch, Scorer};
use crate::rng::SeedStreams;
use crate::search::{SearchOutcome, SearchResult, Tracker};
use crate::subspace::{decouple, reconstruct, LowFreqVector, SpectralSubspace, DEFAULT_LEVEL};

pub const DEFAULT_POPULATION: usize = 10;
pub const DEFAULT_ELITES: usize = 5;
pub const DEFAULT_GAMMA: f64 = 1e-5;
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;

/// Diagonal Gaussian `N(μ, diag(σ²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchDistribution {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl SearchDistribution {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu_norm(&self) -> f64 {
        self.mu.iter().map(|m| m * m).sum::<f64>().sqrt()
    }

    /// `Tr(Σ) / D′`.
    pub fn mean_variance(&self) -> f64 {
        self.sigma2.iter().sum::<f64>() / self.sigma2.len() as f64
    }

    /// One draw `μ + sqrt(σ²) ⊙ z`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LowFreqVector {
        LowFreqVector(
            self.mu
                .iter()
                .zip(&self.sigma2)
                .map(|(m, s2)| m + s2.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )
    }
}

/// An evaluated point of the search space.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub u: Vec<f64>,
    pub score: f64,
    pub eval_index: u64,
}

impl Candidate {
    /// Elite order: higher score first, then earlier evaluation.
    pub fn elite_order(&self, other: &Candidate) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.eval_index.cmp(&other.eval_index))
    }

    pub fn ranks_before(&self, other: &Candidate) -> bool {
        self.elite_order(other) == Ordering::Less
    }
}

/// Cumulative top-K candidates.
#[derive(Debug, Clone)]
pub struct ElitePool {
    members: Vec<Candidate>,
    capacity: usize,
}

impl ElitePool {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("elite capacity must be at least 1".into()));
        }
        Ok(Self {
            members: Vec::new(),
            capacity,
        })
    }

    pub fn members(&self) -> &[Candidate] {
        &self.members
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.members.first()
    }

    /// Merge `candidates` into the pool and prune back to capacity; returns the
    /// discarded candidates.
    pub fn absorb(&mut self, candidates: impl IntoIterator<Item = Candidate>) -> Vec<Candidate> {
        self.members.extend(candidates);
        self.members.sort_by(Candidate::elite_order);
        if self.members.len() > self.capacity {
            self.members.split_off(self.capacity)
        } else {
            Vec::new()
        }
    }
}

/// Reward-evaluation budget (NRE). `used` never exceeds `total`.
#[derive(Debug)]
pub struct Budget {
    total: u64,
    used: AtomicU64,
}

impl Budget {
    pub fn new(total: u64) -> Self {
        Self {
            total,
            used: AtomicU64::new(0),
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn used(&self) -> u64 {
        self.used.load(AtomicOrdering::SeqCst)
    }

    pub fn remaining(&self) -> u64 {
        self.total - self.used()
    }

    /// Atomically reserve `n` evaluations, returning their ordinals.
    pub fn reserve(&self, n: u64) -> Result<Range<u64>> {
        let mut current = self.used.load(AtomicOrdering::SeqCst);
        loop {
            if current + n > self.total {
                return Err(Error::BudgetExhausted {
                    requested: n,
                    remaining: self.total - current,
                });
            }
            match self.used.compare_exchange(
                current,
                current + n,
                AtomicOrdering::SeqCst,
                AtomicOrdering::SeqCst,
            ) {
                Ok(_) => return Ok(current..current + n),
                Err(actual) => current = actual,
            }
        }
    }
}

pub fn init_distribution(dim: usize) -> SearchDistribution {
    SearchDistribution {
        mu: vec![0.0; dim],
        sigma2: vec![1.0; dim],
    }
}

/// Draw `n` candidates sequentially from `rng`.
pub fn sample_generation<R: Rng + ?Sized>(
    d: &SearchDistribution,
    n: usize,
    rng: &mut R,
) -> Vec<LowFreqVector> {
    (0..n).map(|_| d.sample(rng)).collect()
}

/// Momentum update towards the elite mean and biased elite variance,
/// `θ' = (1 − γ)·θ̂_elite + γ·θ`, with `σ²` clamped to `variance_floor`.
pub fn update_distribution(
    d: &SearchDistribution,
    elites: &ElitePool,
    gamma: f64,
    variance_floor: f64,
) -> Result<SearchDistribution> {
    if elites.is_empty() {
        return Err(Error::EmptyElites);
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let k = elites.len() as f64;
    let dim = d.dim();
    let mut mean = vec![0.0; dim];
    for c in elites.members() {
        if c.u.len() != dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                actual: c.u.len(),
            });
        }
        for (m, v) in mean.iter_mut().zip(&c.u) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k);
    let mut var = vec![0.0; dim];
    for c in elites.members() {
        for ((s, v), m) in var.iter_mut().zip(&c.u).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= k);
    Ok(SearchDistribution {
        mu: mean
            .iter()
            .zip(&d.mu)
            .map(|(e, m)| (1.0 - gamma) * e + gamma * m)
            .collect(),
        sigma2: var
            .iter()
            .zip(&d.sigma2)
            .map(|(e, s)| ((1.0 - gamma) * e + gamma * s).max(variance_floor))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalizeMode {
    /// Draw `u* ~ N(μ, diag(σ²))`.
    SampleDistribution,
    /// Top member of the elite pool.
    BestSeen,
}

pub fn finalize<R: Rng + ?Sized>(
    d: &SearchDistribution,
    pool: &ElitePool,
    mode: FinalizeMode,
    rng: &mut R,
) -> Result<LowFreqVector> {
    match mode {
        FinalizeMode::SampleDistribution => Ok(d.sample(rng)),
        FinalizeMode::BestSeen => pool
            .best()
            .map(|c| LowFreqVector(c.u.clone()))
            .ok_or(Error::EmptyElites),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CemConfig {
    pub n_per_gen: usize,
    pub elite_k: usize,
    pub gamma: f64,
    pub level: usize,
    pub seed: u64,
    pub finalize_mode: FinalizeMode,
    pub variance_floor: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            n_per_gen: DEFAULT_POPULATION,
            elite_k: DEFAULT_ELITES,
            gamma: DEFAULT_GAMMA,
            level: DEFAULT_LEVEL,
            seed: 0,
            finalize_mode: FinalizeMode::SampleDistribution,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_gen == 0 {
            return Err(Error::InvalidArgument("population size must be at least 1".into()));
        }
        if self.elite_k == 0 || self.elite_k > self.n_per_gen {
            return Err(Error::InvalidArgument(format!(
                "elite size must lie in [1, {}], got {}",
                self.n_per_gen, self.elite_k
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.variance_floor.is_nan() || self.variance_floor <= 0.0 {
            return Err(Error::InvalidArgument("variance floor must be positive".into()));
        }
        if self.level == 0 {
            return Err(Error::ZeroLevels);
        }
        Ok(())
    }

    pub fn generations(&self, budget_total: u64) -> u64 {
        budget_total / self.n_per_gen as u64
    }
}

/// Reference noise, the subspace it spans, and its low-frequency coordinates.
pub fn reference_subspace(
    scorer: &dyn Scorer,
    level: usize,
    streams: &SeedStreams,
) -> Result<(NoiseField, LowFreqVector, SpectralSubspace)> {
    let reference = NoiseField::standard_normal(scorer.shape(), &mut streams.stream("reference", 0));
    let (u, s) = decouple(&reference, level)?;
    Ok((reference, u, s))
}

/// Spectral evolution search: sample → evaluate → cumulative elite pruning →
/// momentum update, for `⌊total / n⌋` generations, then finalize.
pub fn run_ses(scorer: &dyn Scorer, budget: &Budget, cfg: &CemConfig, parallel: bool) -> SearchResult {
    let mut tracker = Tracker::new();
    if let Err(e) = cfg.validate() {
        return Err(tracker.abort(e));
    }
    let generations = cfg.generations(budget.remaining());
    if generations == 0 {
        return Err(tracker.abort(Error::BudgetTooSmall {
            total: budget.remaining(),
            generation: cfg.n_per_gen as u64,
        }));
    }
    let streams = SeedStreams::new(cfg.seed);
    let (_, _, subspace) = match reference_subspace(scorer, cfg.level, &streams) {
        Ok(r) => r,
        Err(e) => return Err(tracker.abort(e)),
    };
    let mut dist = init_distribution(subspace.low_dim());
    let mut pool = match ElitePool::new(cfg.elite_k) {
        Ok(p) => p,
        Err(e) => return Err(tracker.abort(e)),
    };

    for generation in 0..generations as usize {
        let us = sample_generation(&dist, cfg.n_per_gen, &mut streams.stream("sample", generation as u64));
        let noises = match us
            .iter()
            .map(|u| reconstruct(u, &subspace))
            .collect::<Result<Vec<_>>>()
        {
            Ok(n) => n,
            Err(e) => return Err(tracker.abort(e)),
        };
        let evals = match evaluate_batch(scorer, budget, &noises, parallel) {
            Ok(e) => e,
            Err(e) => return Err(tracker.abort(e)),
        };
        let coords: Vec<Vec<f64>> = us.into_iter().map(|u| u.0).collect();
        // the record reflects the distribution after this generation's update
        let scored: Vec<Candidate> = coords
            .iter()
            .zip(&evals)
            .map(|(u, e)| Candidate {
                u: u.clone(),
                score: e.score,
                eval_index: e.eval_index,
            })
            .collect();
        pool.absorb(scored);
        dist = match update_distribution(&dist, &pool, cfg.gamma, cfg.variance_floor) {
            Ok(d) => d,
            Err(e) => return Err(tracker.abort(e)),
        };
        tracker.commit(generation, &coords, &noises, &evals, budget.used(), Some(&dist));
    }

    let finalized = finalize(&dist, &pool, cfg.finalize_mode, &mut streams.stream("finalize", 0))
        .and_then(|u| reconstruct(&u, &subspace));
    let final_noise = match finalized {
        Ok(n) => n,
        Err(e) => return Err(tracker.abort(e)),
    };
    let (best, best_noise) = tracker.best.take().expect("at least one generation ran");
    Ok(SearchOutcome {
        best,
        best_noise,
        final_noise,
        distribution: Some(dist),
        records: tracker.records,
        log: tracker.log,
    })
}
