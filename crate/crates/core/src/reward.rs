//! Black-box scoring of noise fields.
//!
//! A [`Scorer`] maps an initial noise field to a scalar reward (higher is
//! better) and, when it runs in-process, the generated output. Every call made
//! through [`score`] or [`evaluate_batch`] charges exactly one unit of the
//! evaluation budget.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::cem::Budget;
use crate::error::{Error, Result};
use crate::field::{NoiseField, Shape};
use crate::flowsim::WienerFlowGenerator;
use crate::spectral::{band_energy, RadialBand};
use crate::wavelet::dwt2;

pub const DEFAULT_ACCURATE_STEPS: usize = 50;
pub const DEFAULT_PROXY_STEPS: usize = 10;

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub score: f64,
    pub output: Option<NoiseField>,
}

pub trait Scorer: Send + Sync {
    fn shape(&self) -> Shape;

    fn evaluate(&self, noise: &NoiseField) -> Result<Evaluation>;
}

/// ODE step count used when scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalMode {
    pub steps: usize,
}

impl EvalMode {
    pub fn new(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("evaluation steps must be at least 1".into()));
        }
        Ok(Self { steps })
    }

    pub fn proxy() -> Self {
        Self {
            steps: DEFAULT_PROXY_STEPS,
        }
    }

    pub fn accurate() -> Self {
        Self {
            steps: DEFAULT_ACCURATE_STEPS,
        }
    }
}

#[derive(Debug, Clone)]
pub enum RewardSpec {
    /// `−‖LL_J(output) − LL_J(template)‖²`.
    TemplateLowFreq { template: NoiseField, level: usize },
    /// Spectral energy of the output inside `band`.
    BandEnergy { band: RadialBand },
    /// `−‖output − target‖²`.
    NegL2 { target: NoiseField },
    /// Generator and reward live in a child process speaking the bridge protocol.
    External { command: Vec<String>, cwd: Option<PathBuf> },
}

#[derive(Debug, Clone)]
enum Functional {
    TemplateLowFreq { template_ll: NoiseField, level: usize },
    BandEnergy { band: RadialBand },
    NegL2 { target: NoiseField },
}

impl Functional {
    fn apply(&self, output: &NoiseField) -> Result<f64> {
        match self {
            Functional::TemplateLowFreq { template_ll, level } => {
                let ll = dwt2(output, *level)?.ll().clone();
                Ok(-ll.sub(template_ll)?.energy())
            }
            Functional::BandEnergy { band } => Ok(band_energy(output, *band)),
            Functional::NegL2 { target } => Ok(-output.sub(target)?.energy()),
        }
    }
}

/// In-process flow simulator followed by a synthetic reward.
#[derive(Debug, Clone)]
pub struct FlowRewardScorer {
    generator: WienerFlowGenerator,
    functional: Functional,
    mode: EvalMode,
}

impl FlowRewardScorer {
    pub fn new(generator: WienerFlowGenerator, spec: &RewardSpec, mode: EvalMode) -> Result<Self> {
        let shape = generator.shape();
        let check = |f: &NoiseField, what: &str| -> Result<()> {
            if f.shape() != shape {
                return Err(Error::ShapeMismatch {
                    expected: shape.to_string(),
                    actual: format!("{} ({what})", f.shape()),
                });
            }
            Ok(())
        };
        let functional = match spec {
            RewardSpec::TemplateLowFreq { template, level } => {
                check(template, "template")?;
                Functional::TemplateLowFreq {
                    template_ll: dwt2(template, *level)?.ll().clone(),
                    level: *level,
                }
            }
            RewardSpec::BandEnergy { band } => Functional::BandEnergy { band: *band },
            RewardSpec::NegL2 { target } => {
                check(target, "target")?;
                Functional::NegL2 {
                    target: target.clone(),
                }
            }
            RewardSpec::External { .. } => {
                return Err(Error::InvalidArgument(
                    "external rewards are scored by the bridge process".into(),
                ))
            }
        };
        Ok(Self {
            generator,
            functional,
            mode,
        })
    }

    pub fn generator(&self) -> &WienerFlowGenerator {
        &self.generator
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    /// Same generator and reward, different step count.
    pub fn with_mode(&self, mode: EvalMode) -> Self {
        Self {
            mode,
            ..self.clone()
        }
    }
}

impl Scorer for FlowRewardScorer {
    fn shape(&self) -> Shape {
        self.generator.shape()
    }

    fn evaluate(&self, noise: &NoiseField) -> Result<Evaluation> {
        let output = self.generator.integrate_steps(noise, self.mode.steps)?;
        let score = self.functional.apply(&output)?;
        Ok(Evaluation {
            score,
            output: Some(output),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScoredEval {
    pub eval_index: u64,
    pub score: f64,
    pub output: Option<NoiseField>,
}

fn check_input(scorer: &dyn Scorer, noise: &NoiseField) -> Result<()> {
    if noise.shape() != scorer.shape() {
        return Err(Error::ShapeMismatch {
            expected: scorer.shape().to_string(),
            actual: noise.shape().to_string(),
        });
    }
    Ok(())
}

fn finite(e: Evaluation, eval_index: u64) -> Result<ScoredEval> {
    if !e.score.is_finite() {
        return Err(Error::NonFinite(format!(
            "score of evaluation {eval_index} is {}",
            e.score
        )));
    }
    Ok(ScoredEval {
        eval_index,
        score: e.score,
        output: e.output,
    })
}

/// Score one noise field, charging one budget unit.
pub fn score(noise: &NoiseField, scorer: &dyn Scorer, budget: &Budget) -> Result<ScoredEval> {
    check_input(scorer, noise)?;
    let index = budget.reserve(1)?.start;
    finite(scorer.evaluate(noise)?, index)
}

/// Score a pre-sampled batch. Evaluation indices follow batch order; with
/// `parallel` the evaluations fan out over the rayon pool but results are
/// returned (and therefore committed) in the same order.
pub fn evaluate_batch(
    scorer: &dyn Scorer,
    budget: &Budget,
    noises: &[NoiseField],
    parallel: bool,
) -> Result<Vec<ScoredEval>> {
    for n in noises {
        check_input(scorer, n)?;
    }
    let range = budget.reserve(noises.len() as u64)?;
    let run = |(i, n): (usize, &NoiseField)| -> Result<ScoredEval> {
        finite(scorer.evaluate(n)?, range.start + i as u64)
    };
    if parallel {
        noises.par_iter().enumerate().map(run).collect()
    } else {
        noises.iter().enumerate().map(run).collect()
    }
}

/// Kendall tau-b rank correlation, tie-aware.
pub fn ranking_consistency(scores_proxy: &[f64], scores_accurate: &[f64]) -> Result<f64> {
    if scores_proxy.len() != scores_accurate.len() {
        return Err(Error::LengthMismatch {
            expected: scores_proxy.len(),
            actual: scores_accurate.len(),
        });
    }
    let n = scores_proxy.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two scores".into()));
    }
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut tie_x, mut tie_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = scores_proxy[i].total_cmp(&scores_proxy[j]) as i64;
            let dy = scores_accurate[i].total_cmp(&scores_accurate[j]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tie_x += 1,
                (_, 0) => tie_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = concordant + discordant;
    let denom = (((n0 + tie_x) as f64) * ((n0 + tie_y) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("tau-b undefined for constant input".into()));
    }
    Ok((concordant - discordant) as f64 / denom)
}
