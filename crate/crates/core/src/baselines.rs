//! Reference strategies: best-of-N, zero-order neighborhood search and
//! random search inside a fixed subspace.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::cem::Budget;
use crate::error::{Error, Result};
use crate::field::NoiseField;
use crate::reward::{evaluate_batch, Scorer};
use crate::rng::SeedStreams;
use crate::search::{SearchOutcome, SearchResult, Tracker};
use crate::subspace::{ablation_reconstruct, AblationKind, AblationSubspace};

pub const DEFAULT_BATCH: usize = 10;
pub const DEFAULT_STEP_LAMBDA: f64 = 0.25;

fn check_batch(batch: usize) -> Result<()> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    Ok(())
}

/// Split `total` into batches of at most `batch`.
fn batches(total: u64, batch: usize) -> Vec<usize> {
    let b = batch as u64;
    let mut out = vec![batch; (total / b) as usize];
    if !total.is_multiple_of(b) {
        out.push((total % b) as usize);
    }
    out
}

fn finish(mut tracker: Tracker) -> SearchResult {
    match tracker.best.take() {
        Some((best, best_noise)) => Ok(SearchOutcome {
            best,
            final_noise: best_noise.clone(),
            best_noise,
            distribution: None,
            records: tracker.records,
            log: tracker.log,
        }),
        None => Err(tracker.abort(Error::BudgetTooSmall { total: 0, generation: 1 })),
    }
}

/// Score independent prior draws until the budget is spent; one record per
/// batch. Spends the whole budget.
pub fn best_of_n(scorer: &dyn Scorer, budget: &Budget, seed: u64, batch: usize, parallel: bool) -> SearchResult {
    random_draws(scorer, budget, seed, batch, parallel, None)
}

/// Random search over the coordinates of `kind` around a fixed reference
/// noise. Every candidate keeps the reference's coordinates outside the
/// subspace; coordinates inside are standard normal. Candidates come from the
/// same streams as [`best_of_n`], so the `Full` kind reproduces it up to
/// roundoff.
pub fn random_search_subspace(
    scorer: &dyn Scorer,
    budget: &Budget,
    kind: AblationKind,
    level: usize,
    seed: u64,
    batch: usize,
    parallel: bool,
) -> SearchResult {
    let streams = SeedStreams::new(seed);
    let shape = scorer.shape();
    let reference = NoiseField::standard_normal(shape, &mut streams.stream("reference", 0));
    match AblationSubspace::new(kind, shape, level, &mut streams.stream("ablation", 0)) {
        Ok(a) => random_draws(scorer, budget, seed, batch, parallel, Some((&a, &reference))),
        Err(e) => Err(Tracker::new().abort(e)),
    }
}

fn random_draws(
    scorer: &dyn Scorer,
    budget: &Budget,
    seed: u64,
    batch: usize,
    parallel: bool,
    subspace: Option<(&AblationSubspace, &NoiseField)>,
) -> SearchResult {
    let mut tracker = Tracker::new();
    if let Err(e) = check_batch(batch) {
        return Err(tracker.abort(e));
    }
    if budget.remaining() == 0 {
        return Err(tracker.abort(Error::BudgetTooSmall { total: 0, generation: 1 }));
    }
    let streams = SeedStreams::new(seed);
    let shape = scorer.shape();
    for (b, n) in batches(budget.remaining(), batch).into_iter().enumerate() {
        let mut rng = streams.stream("candidate", b as u64);
        let mut coords = Vec::with_capacity(n);
        let mut noises = Vec::with_capacity(n);
        for _ in 0..n {
            let x = NoiseField::standard_normal(shape, &mut rng);
            let step = match subspace {
                None => Ok((x.as_slice().to_vec(), x)),
                Some((a, reference)) => a
                    .coordinates_of(&x)
                    .and_then(|v| ablation_reconstruct(&v, a, reference).map(|noise| (v, noise))),
            };
            match step {
                Ok((v, noise)) => {
                    coords.push(v);
                    noises.push(noise);
                }
                Err(e) => return Err(tracker.abort(e)),
            }
        }
        let evals = match evaluate_batch(scorer, budget, &noises, parallel) {
            Ok(e) => e,
            Err(e) => return Err(tracker.abort(e)),
        };
        tracker.commit(b, &coords, &noises, &evals, budget.used(), None);
    }
    finish(tracker)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoConfig {
    pub n_iter: usize,
    pub batch: usize,
    pub step_lambda: f64,
    pub seed: u64,
}

impl ZoConfig {
    /// Iterations sized to spend `budget` with `batch` neighbors each.
    pub fn for_budget(budget: u64, batch: usize, seed: u64) -> Self {
        Self {
            n_iter: (budget / batch.max(1) as u64) as usize,
            batch,
            step_lambda: DEFAULT_STEP_LAMBDA,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_batch(self.batch)?;
        if self.n_iter == 0 {
            return Err(Error::InvalidArgument("zero-order search needs at least one iteration".into()));
        }
        if !(self.step_lambda > 0.0 && self.step_lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "step lambda must lie in (0, 1], got {}",
                self.step_lambda
            )));
        }
        Ok(())
    }
}

/// Variance-preserving neighbor `sqrt(1 − λ²)·x + λ·ε`.
pub fn neighbor<R: Rng + ?Sized>(center: &NoiseField, lambda: f64, rng: &mut R) -> NoiseField {
    let keep = (1.0 - lambda * lambda).sqrt();
    let data = center
        .as_slice()
        .iter()
        .map(|&c| keep * c + lambda * rng.sample::<f64, _>(StandardNormal))
        .collect();
    NoiseField::from_vec(center.shape(), data).expect("neighbor keeps the center's shape")
}

/// Greedy zero-order search: each iteration scores `batch` neighbors of the
/// center and moves the center to the best point seen. The initial center is
/// an unscored prior draw. Spends `n_iter · batch` evaluations.
pub fn zero_order(scorer: &dyn Scorer, budget: &Budget, cfg: &ZoConfig, parallel: bool) -> SearchResult {
    let mut tracker = Tracker::new();
    if let Err(e) = cfg.validate() {
        return Err(tracker.abort(e));
    }
    let needed = cfg.n_iter as u64 * cfg.batch as u64;
    if needed > budget.remaining() {
        return Err(tracker.abort(Error::BudgetExhausted {
            requested: needed,
            remaining: budget.remaining(),
        }));
    }
    let streams = SeedStreams::new(cfg.seed);
    let mut center = NoiseField::standard_normal(scorer.shape(), &mut streams.stream("center", 0));
    for iter in 0..cfg.n_iter {
        let mut rng = streams.stream("neighbor", iter as u64);
        let noises: Vec<NoiseField> = (0..cfg.batch)
            .map(|_| neighbor(&center, cfg.step_lambda, &mut rng))
            .collect();
        let evals = match evaluate_batch(scorer, budget, &noises, parallel) {
            Ok(e) => e,
            Err(e) => return Err(tracker.abort(e)),
        };
        let coords: Vec<Vec<f64>> = noises.iter().map(|n| n.as_slice().to_vec()).collect();
        tracker.commit(iter, &coords, &noises, &evals, budget.used(), None);
        if let Some((_, best)) = &tracker.best {
            center = best.clone();
        }
    }
    finish(tracker)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Shape;
    use crate::reward::Evaluation;
    use crate::wavelet::dwt2;

    struct Quadratic {
        target: NoiseField,
    }

    impl Scorer for Quadratic {
        fn shape(&self) -> Shape {
            self.target.shape()
        }
        fn evaluate(&self, noise: &NoiseField) -> Result<Evaluation> {
            Ok(Evaluation {
                score: -noise.sub(&self.target)?.energy(),
                output: Some(noise.clone()),
            })
        }
    }

    fn scorer() -> Quadratic {
        let shape = Shape::new(1, 16, 16);
        Quadratic {
            target: NoiseField::standard_normal(shape, &mut SeedStreams::new(77).stream("t", 0)).scaled(0.3),
        }
    }

    #[test]
    fn bon_spends_budget_and_keeps_max() {
        let s = scorer();
        let budget = Budget::new(37);
        let out = best_of_n(&s, &budget, 1, 10, false).unwrap();
        assert_eq!(budget.used(), 37);
        assert_eq!(out.log.len(), 37);
        assert_eq!(out.records.len(), 4);
        let max = out.log.iter().map(|e| e.score).fold(f64::MIN, f64::max);
        assert_eq!(out.best.score, max);
        assert!(out.records.iter().all(|r| r.diversity.is_some()));

        let one = best_of_n(&s, &Budget::new(1), 1, 10, false).unwrap();
        assert_eq!(one.log.len(), 1);
        assert_eq!(one.best.score, out.log[0].score);
        assert!(best_of_n(&s, &Budget::new(0), 1, 10, false).is_err());
    }

    #[test]
    fn bon_parallel_matches_serial() {
        let s = scorer();
        let a = best_of_n(&s, &Budget::new(30), 4, 10, false).unwrap();
        let b = best_of_n(&s, &Budget::new(30), 4, 10, true).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.best_noise, b.best_noise);
    }

    #[test]
    fn zo_budget_and_monotone() {
        let s = scorer();
        let budget = Budget::new(100);
        let cfg = ZoConfig::for_budget(100, 10, 3);
        let out = zero_order(&s, &budget, &cfg, false).unwrap();
        assert_eq!(budget.used(), 100);
        assert_eq!(out.records.len(), 10);
        assert!(out.records.windows(2).all(|w| w[1].best_score_so_far >= w[0].best_score_so_far));
        let over = ZoConfig { n_iter: 11, ..cfg };
        assert!(zero_order(&s, &Budget::new(100), &over, false).is_err());
        let bad = ZoConfig { step_lambda: 0.0, ..cfg };
        assert!(zero_order(&s, &Budget::new(100), &bad, false).is_err());
    }

    #[test]
    fn zo_tiny_step_stays_at_center() {
        let s = scorer();
        let cfg = ZoConfig {
            n_iter: 5,
            batch: 4,
            step_lambda: 1e-12,
            seed: 8,
        };
        let out = zero_order(&s, &Budget::new(20), &cfg, false).unwrap();
        let first = out.records[0].best_score_so_far;
        for r in &out.records {
            assert!((r.best_score_so_far - first).abs() < 1e-9 * first.abs());
        }
    }

    #[test]
    fn neighbor_preserves_variance() {
        let shape = Shape::new(1, 64, 64);
        let mut rng = SeedStreams::new(2).stream("n", 0);
        let x = NoiseField::standard_normal(shape, &mut rng);
        let y = neighbor(&x, 0.6, &mut rng);
        let var = y.energy() / shape.len() as f64;
        assert!((var - 1.0).abs() < 0.1, "variance {var}");
        assert_eq!(neighbor(&x, 1.0, &mut rng).shape(), shape);
    }

    #[test]
    fn subspace_search_freezes_details() {
        let s = scorer();
        let out = random_search_subspace(&s, &Budget::new(20), AblationKind::LowFreq, 2, 5, 10, false).unwrap();
        assert_eq!(out.best.u.len(), 16);
        let streams = SeedStreams::new(5);
        let reference = NoiseField::standard_normal(s.shape(), &mut streams.stream("reference", 0));
        let want = dwt2(&reference, 2).unwrap().detail_coefficients();
        let got = dwt2(&out.best_noise, 2).unwrap().detail_coefficients();
        for (a, b) in want.iter().zip(&got) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_subspace_reproduces_bon() {
        let s = scorer();
        let a = best_of_n(&s, &Budget::new(20), 6, 10, false).unwrap();
        let b = random_search_subspace(&s, &Budget::new(20), AblationKind::Full, 2, 6, 10, false).unwrap();
        for (x, y) in a.log.iter().zip(&b.log) {
            assert!((x.score - y.score).abs() < 1e-10 * x.score.abs().max(1.0));
        }
        assert!(a.best_noise.distance(&b.best_noise).unwrap() < 1e-10);
    }
}
