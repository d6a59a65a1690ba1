//! Run configuration, parsed from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{ZoConfig, DEFAULT_BATCH, DEFAULT_STEP_LAMBDA};
use crate::cem::{
    CemConfig, FinalizeMode, DEFAULT_ELITES, DEFAULT_GAMMA, DEFAULT_POPULATION, DEFAULT_VARIANCE_FLOOR,
};
use crate::error::{Error, Result};
use crate::field::{NoiseField, Shape};
use crate::flowsim::{FlowSchedule, PowerLawPrior, WienerFlowGenerator, DEFAULT_AMPLITUDE, DEFAULT_BETA, DEFAULT_DELTA};
use crate::harness::protocol::ExternalScorer;
use crate::reward::{EvalMode, FlowRewardScorer, RewardSpec, Scorer, DEFAULT_ACCURATE_STEPS};
use crate::rng::SeedStreams;
use crate::spectral::RadialBand;
use crate::subspace::{AblationKind, DEFAULT_LEVEL};

pub const DEFAULT_BUDGET: u64 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Ses,
    Bon,
    Zon,
    RandomSubspace,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Ses => "ses",
            Strategy::Bon => "bon",
            Strategy::Zon => "zon",
            Strategy::RandomSubspace => "random_subspace",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ses" => Ok(Strategy::Ses),
            "bon" => Ok(Strategy::Bon),
            "zon" => Ok(Strategy::Zon),
            "random_subspace" => Ok(Strategy::RandomSubspace),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected ses, bon, zon or random_subspace)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Flowsim,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    #[serde(default = "GeneratorConfig::default_kind")]
    pub kind: GeneratorKind,
    /// `[C, H, W]`.
    #[serde(default = "GeneratorConfig::default_shape")]
    pub shape: [usize; 3],
    #[serde(default = "GeneratorConfig::default_beta")]
    pub beta: f64,
    #[serde(default = "GeneratorConfig::default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "GeneratorConfig::default_delta")]
    pub delta: f64,
    /// Program and arguments of an external bridge process.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub command: Vec<String>,
}

impl GeneratorConfig {
    fn default_kind() -> GeneratorKind {
        GeneratorKind::Flowsim
    }
    fn default_shape() -> [usize; 3] {
        [4, 64, 64]
    }
    fn default_beta() -> f64 {
        DEFAULT_BETA
    }
    fn default_amplitude() -> f64 {
        DEFAULT_AMPLITUDE
    }
    fn default_delta() -> f64 {
        DEFAULT_DELTA
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.shape[0], self.shape[1], self.shape[2])
    }

    /// The in-process simulator described by this section.
    pub fn flowsim(&self, steps: usize) -> Result<WienerFlowGenerator> {
        WienerFlowGenerator::new(
            self.shape(),
            PowerLawPrior::new(self.beta, self.amplitude)?,
            FlowSchedule::rectified(self.delta)?,
            steps,
        )
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            kind: Self::default_kind(),
            shape: Self::default_shape(),
            beta: Self::default_beta(),
            amplitude: Self::default_amplitude(),
            delta: Self::default_delta(),
            command: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    TemplateLowfreq,
    BandEnergy,
    NegL2,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    #[serde(default = "RewardConfig::default_kind")]
    pub kind: RewardKind,
    /// Wavelet level of the template comparison.
    #[serde(default = "RewardConfig::default_level")]
    pub level: usize,
    /// Steps used to generate the template / target from its noise.
    #[serde(default = "RewardConfig::default_template_steps")]
    pub template_steps: usize,
    /// Seed of the template / target noise; derived from the run seed if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_seed: Option<u64>,
    /// `[lo, hi]` in radians per sample, for `band_energy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<[f64; 2]>,
}

impl RewardConfig {
    fn default_kind() -> RewardKind {
        RewardKind::TemplateLowfreq
    }
    fn default_level() -> usize {
        DEFAULT_LEVEL
    }
    fn default_template_steps() -> usize {
        DEFAULT_ACCURATE_STEPS
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            kind: Self::default_kind(),
            level: Self::default_level(),
            template_steps: Self::default_template_steps(),
            target_seed: None,
            band: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Euler steps per reward evaluation.
    #[serde(default = "EvalConfig::default_steps")]
    pub steps: usize,
}

impl EvalConfig {
    fn default_steps() -> usize {
        DEFAULT_ACCURATE_STEPS
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            steps: Self::default_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CemSection {
    #[serde(default = "CemSection::default_n")]
    pub n: usize,
    #[serde(default = "CemSection::default_k")]
    pub k: usize,
    #[serde(default = "CemSection::default_gamma")]
    pub gamma: f64,
    #[serde(default = "RewardConfig::default_level")]
    pub level: usize,
    #[serde(default = "CemSection::default_finalize")]
    pub finalize_mode: FinalizeMode,
    #[serde(default = "CemSection::default_floor")]
    pub variance_floor: f64,
}

impl CemSection {
    fn default_n() -> usize {
        DEFAULT_POPULATION
    }
    fn default_k() -> usize {
        DEFAULT_ELITES
    }
    fn default_gamma() -> f64 {
        DEFAULT_GAMMA
    }
    fn default_finalize() -> FinalizeMode {
        FinalizeMode::SampleDistribution
    }
    fn default_floor() -> f64 {
        DEFAULT_VARIANCE_FLOOR
    }
}

impl Default for CemSection {
    fn default() -> Self {
        Self {
            n: Self::default_n(),
            k: Self::default_k(),
            gamma: Self::default_gamma(),
            level: RewardConfig::default_level(),
            finalize_mode: Self::default_finalize(),
            variance_floor: Self::default_floor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoSection {
    /// Defaults to `⌊budget / batch⌋`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_iter: Option<usize>,
    #[serde(default = "ZoSection::default_batch")]
    pub batch: usize,
    #[serde(default = "ZoSection::default_lambda")]
    pub step_lambda: f64,
}

impl ZoSection {
    fn default_batch() -> usize {
        DEFAULT_BATCH
    }
    fn default_lambda() -> f64 {
        DEFAULT_STEP_LAMBDA
    }
}

impl Default for ZoSection {
    fn default() -> Self {
        Self {
            n_iter: None,
            batch: Self::default_batch(),
            step_lambda: Self::default_lambda(),
        }
    }
}

/// Settings for `bon` and `random_subspace`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    /// Evaluations per record row.
    #[serde(default = "ZoSection::default_batch")]
    pub batch: usize,
    #[serde(default = "BaselineSection::default_subspace")]
    pub subspace: AblationKind,
    #[serde(default = "RewardConfig::default_level")]
    pub level: usize,
}

impl BaselineSection {
    fn default_subspace() -> AblationKind {
        AblationKind::LowFreq
    }
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            batch: ZoSection::default_batch(),
            subspace: Self::default_subspace(),
            level: RewardConfig::default_level(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub seed: u64,
    #[serde(default = "RunConfig::default_budget")]
    pub budget_nre: u64,
    /// Evaluate candidates on the rayon pool. Never changes results.
    #[serde(default)]
    pub parallel: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub cem: CemSection,
    #[serde(default)]
    pub zo: ZoSection,
    #[serde(default)]
    pub baseline: BaselineSection,
}

impl RunConfig {
    fn default_budget() -> u64 {
        DEFAULT_BUDGET
    }

    /// Defaults for everything except the strategy and seed.
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        Self {
            strategy,
            seed,
            budget_nre: DEFAULT_BUDGET,
            parallel: false,
            out_dir: None,
            generator: GeneratorConfig::default(),
            reward: RewardConfig::default(),
            eval: EvalConfig::default(),
            cem: CemSection::default(),
            zo: ZoSection::default(),
            baseline: BaselineSection::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fill in values that depend on other fields, so the serialized config
    /// states everything the run used.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if c.strategy == Strategy::Zon && c.zo.n_iter.is_none() {
            c.zo.n_iter = Some((c.budget_nre / c.zo.batch.max(1) as u64) as usize);
        }
        if c.target_needed() && c.reward.target_seed.is_none() {
            c.reward.target_seed = Some(derived_target_seed(c.seed));
        }
        c
    }

    /// SHA-256 (hex) of the resolved config, ignoring where the output goes.
    pub fn digest(&self) -> Result<String> {
        let mut c = self.resolved();
        c.out_dir = None;
        c.parallel = false;
        let text = c.to_toml_string()?;
        Ok(Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect())
    }

    fn target_needed(&self) -> bool {
        matches!(self.reward.kind, RewardKind::TemplateLowfreq | RewardKind::NegL2)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.budget_nre == 0 {
            return bad("budget_nre must be at least 1".into());
        }
        let g = &self.generator;
        if g.shape.contains(&0) {
            return bad(format!("generator.shape must be positive, got {:?}", g.shape));
        }
        let external_gen = g.kind == GeneratorKind::External;
        let external_reward = self.reward.kind == RewardKind::External;
        if external_gen != external_reward {
            return bad("generator.kind = \"external\" and reward.kind = \"external\" must be used together".into());
        }
        if external_gen {
            if g.command.is_empty() {
                return bad("generator.command is required for an external generator".into());
            }
        } else {
            if !g.command.is_empty() {
                return bad("generator.command is only valid for an external generator".into());
            }
            PowerLawPrior::new(g.beta, g.amplitude).map_err(|e| Error::Config(format!("generator: {e}")))?;
            FlowSchedule::rectified(g.delta).map_err(|e| Error::Config(format!("generator: {e}")))?;
        }
        if self.eval.steps == 0 {
            return bad("eval.steps must be at least 1".into());
        }
        if self.reward.template_steps == 0 {
            return bad("reward.template_steps must be at least 1".into());
        }
        if self.reward.level == 0 {
            return bad("reward.level must be at least 1".into());
        }
        match (self.reward.kind, self.reward.band) {
            (RewardKind::BandEnergy, None) => return bad("reward.band is required for band_energy".into()),
            (RewardKind::BandEnergy, Some([lo, hi])) => {
                RadialBand::new(lo, hi).map_err(|e| Error::Config(format!("reward.band: {e}")))?;
            }
            (_, Some(_)) => return bad("reward.band is only valid for band_energy".into()),
            _ => {}
        }
        let divisible = |level: usize, what: &str| -> Result<()> {
            let f = 1usize << level.min(63);
            if level == 0 || !g.shape[1].is_multiple_of(f) || !g.shape[2].is_multiple_of(f) {
                return Err(Error::Config(format!(
                    "{what} = {level}: height and width must be divisible by 2^{what_level}",
                    what_level = level
                )));
            }
            Ok(())
        };
        if self.reward.kind == RewardKind::TemplateLowfreq {
            divisible(self.reward.level, "reward.level")?;
        }
        match self.strategy {
            Strategy::Ses => {
                divisible(self.cem.level, "cem.level")?;
                self.cem_config().validate().map_err(|e| Error::Config(format!("cem: {e}")))?;
                if self.budget_nre < self.cem.n as u64 {
                    return bad(format!(
                        "budget smaller than one generation (budget_nre {} < cem.n {})",
                        self.budget_nre, self.cem.n
                    ));
                }
            }
            Strategy::Zon => {
                let zo = self.zo_config();
                zo.validate().map_err(|e| Error::Config(format!("zo: {e}")))?;
                if zo.n_iter as u64 * zo.batch as u64 > self.budget_nre {
                    return bad(format!(
                        "zo.n_iter * zo.batch = {} exceeds budget_nre {}",
                        zo.n_iter * zo.batch,
                        self.budget_nre
                    ));
                }
            }
            Strategy::Bon | Strategy::RandomSubspace => {
                if self.baseline.batch == 0 {
                    return bad("baseline.batch must be at least 1".into());
                }
                if self.strategy == Strategy::RandomSubspace {
                    divisible(self.baseline.level, "baseline.level")?;
                }
            }
        }
        Ok(())
    }

    pub fn cem_config(&self) -> CemConfig {
        CemConfig {
            n_per_gen: self.cem.n,
            elite_k: self.cem.k,
            gamma: self.cem.gamma,
            level: self.cem.level,
            seed: self.seed,
            finalize_mode: self.cem.finalize_mode,
            variance_floor: self.cem.variance_floor,
        }
    }

    pub fn zo_config(&self) -> ZoConfig {
        let batch = self.zo.batch;
        ZoConfig {
            n_iter: self
                .zo
                .n_iter
                .unwrap_or((self.budget_nre / batch.max(1) as u64) as usize),
            batch,
            step_lambda: self.zo.step_lambda,
            seed: self.seed,
        }
    }

    /// Template (or target) field: the flow's output for a seeded noise draw.
    pub fn target_field(&self) -> Result<NoiseField> {
        let seed = self.reward.target_seed.unwrap_or_else(|| derived_target_seed(self.seed));
        let noise = NoiseField::standard_normal(self.generator.shape(), &mut SeedStreams::new(seed).stream("target", 0));
        self.generator.flowsim(self.reward.template_steps)?.integrate(&noise)
    }

    pub fn reward_spec(&self) -> Result<RewardSpec> {
        Ok(match self.reward.kind {
            RewardKind::TemplateLowfreq => RewardSpec::TemplateLowFreq {
                template: self.target_field()?,
                level: self.reward.level,
            },
            RewardKind::NegL2 => RewardSpec::NegL2 {
                target: self.target_field()?,
            },
            RewardKind::BandEnergy => {
                let [lo, hi] = self
                    .reward
                    .band
                    .ok_or_else(|| Error::Config("reward.band is required for band_energy".into()))?;
                RewardSpec::BandEnergy {
                    band: RadialBand::new(lo, hi)?,
                }
            }
            RewardKind::External => RewardSpec::External {
                command: self.generator.command.clone(),
                cwd: None,
            },
        })
    }

    /// In-process scorer at `steps` Euler steps (flowsim only).
    pub fn flow_scorer(&self, steps: usize) -> Result<FlowRewardScorer> {
        let mode = EvalMode::new(steps)?;
        FlowRewardScorer::new(self.generator.flowsim(steps)?, &self.reward_spec()?, mode)
    }

    /// The scorer this config describes, at `eval.steps`.
    pub fn scorer(&self) -> Result<Box<dyn Scorer>> {
        match self.generator.kind {
            GeneratorKind::Flowsim => Ok(Box::new(self.flow_scorer(self.eval.steps)?)),
            GeneratorKind::External => Ok(Box::new(ExternalScorer::spawn(
                &self.generator.command,
                None,
                self.generator.shape(),
                self.eval.steps,
            )?)),
        }
    }
}

fn derived_target_seed(seed: u64) -> u64 {
    use rand::Rng;
    // keep it a valid TOML integer
    SeedStreams::new(seed).stream("target_seed", 0).random::<u64>() >> 1
}
