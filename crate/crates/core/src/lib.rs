//! Spectral evolution search: cross-entropy search over the coarse Haar
//! wavelet coefficients of the initial noise of a flow-based generator, with
//! an analytic Wiener-flow generator to test it against.

pub mod baselines;
pub mod cem;
pub mod error;
pub mod field;
pub mod flowsim;
pub mod fourier;
pub mod harness;
pub mod reward;
pub mod rng;
pub mod search;
pub mod spectral;
pub mod subspace;
pub mod wavelet;

pub use baselines::{best_of_n, random_search_subspace, zero_order, ZoConfig};
pub use cem::{run_ses, Budget, CemConfig, FinalizeMode, SearchDistribution};
pub use error::{Error, Result};
pub use field::{NoiseField, Shape};
pub use flowsim::{FlowSchedule, PowerLawPrior, WienerFlowGenerator};
pub use reward::{EvalMode, FlowRewardScorer, RewardSpec, Scorer};
pub use search::{Aborted, RunRecord, SearchOutcome};
pub use subspace::{decouple, reconstruct, LowFreqVector, SpectralSubspace};
pub use wavelet::{dwt2, idwt2, WaveletPyramid};
