//! Analytic generative flow with a frequency-domain Wiener denoiser.
//!
//! Data is modelled as a stationary Gaussian field with radial power
//! spectrum `P(ω) = A·‖ω‖^(−β)`. Along the interpolation
//! `x_t = α(t)·x₁ + σ(t)·x₀` the MMSE denoiser is diagonal in frequency with
//! response `h(ω, t) = (1/α)·SNR/(SNR + 1)`, `SNR = α²P/σ²`, and the
//! sampler follows `v = μ(t)·x̂ + ν(t)·x_t` with `μ = α̇ − σ̇α/σ`,
//! `ν = σ̇/σ`. The whole flow is linear, so perturbation gains can be
//! measured exactly and compared with quadrature of the growth rate.

use std::collections::HashMap;

use rand::Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{NoiseField, Shape};
use crate::fourier::{Fft2, FrequencyGrid};
use crate::spectral::{bandpass_perturbation, weighted_line_fit, PowerLawFit, RadialBand};

pub const DEFAULT_DELTA: f64 = 1e-3;
pub const DEFAULT_BETA: f64 = 1.3;
pub const DEFAULT_AMPLITUDE: f64 = 1.0;
/// Composite Simpson intervals used for the gain integral.
const QUADRATURE_INTERVALS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `α = t`, `σ = 1 − t`.
    Rectified,
}

/// Interpolation schedule, integrated over the clipped window `[δ, 1 − δ]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSchedule {
    kind: ScheduleKind,
    delta: f64,
}

impl FlowSchedule {
    pub fn rectified(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 0.1) {
            return Err(Error::InvalidArgument(format!(
                "clip delta must lie in (0, 0.1], got {delta}"
            )));
        }
        Ok(Self {
            kind: ScheduleKind::Rectified,
            delta,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn t_start(&self) -> f64 {
        self.delta
    }

    pub fn t_end(&self) -> f64 {
        1.0 - self.delta
    }

    pub fn alpha(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Rectified => t,
        }
    }

    pub fn sigma(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Rectified => 1.0 - t,
        }
    }

    pub fn alpha_dot(&self, _t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Rectified => 1.0,
        }
    }

    pub fn sigma_dot(&self, _t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Rectified => -1.0,
        }
    }

    /// `(μ(t), ν(t))` for `t ∈ [0, t_end]`.
    pub fn coefficients(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=self.t_end()).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                t_end: self.t_end(),
            });
        }
        let (a, s, ad, sd) = (self.alpha(t), self.sigma(t), self.alpha_dot(t), self.sigma_dot(t));
        let nu = sd / s;
        Ok((ad - sd * a / s, nu))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawPrior {
    pub beta: f64,
    pub amplitude: f64,
}

impl PowerLawPrior {
    pub fn new(beta: f64, amplitude: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "amplitude must be positive, got {amplitude}"
            )));
        }
        Ok(Self { beta, amplitude })
    }

    /// `P_data(ω) = A·‖ω‖^(−β)`.
    pub fn power(&self, omega_norm: f64) -> f64 {
        self.amplitude * omega_norm.powf(-self.beta)
    }

    pub fn snr(&self, schedule: &FlowSchedule, omega_norm: f64, t: f64) -> f64 {
        let (a, s) = (schedule.alpha(t), schedule.sigma(t));
        a * a * self.power(omega_norm) / (s * s)
    }
}

/// `h(ω, t) = (1/α)·SNR/(SNR + 1)`, evaluated as `αP / (α²P + σ²)` so that
/// both `t → 0` (h → 0) and `σ → 0` (h → 1/α) are finite.
pub fn wiener_response(prior: &PowerLawPrior, schedule: &FlowSchedule, omega_norm: f64, t: f64) -> f64 {
    let (a, s) = (schedule.alpha(t), schedule.sigma(t));
    if a <= 0.0 {
        return 0.0;
    }
    let p = prior.power(omega_norm);
    a * p / (a * a * p + s * s)
}

/// Instantaneous spectral growth rate `λ = μ·h + ν`, rewritten as
/// `(α̇αP + σ̇σ) / (α²P + σ²)`, which stays bounded over the whole window.
pub fn growth_rate(prior: &PowerLawPrior, schedule: &FlowSchedule, omega_norm: f64, t: f64) -> f64 {
    let (a, s, ad, sd) = (
        schedule.alpha(t),
        schedule.sigma(t),
        schedule.alpha_dot(t),
        schedule.sigma_dot(t),
    );
    let p = prior.power(omega_norm);
    (ad * a * p + sd * s) / (a * a * p + s * s)
}

/// Deterministic noise-to-output map `x₀ ↦ x₁` of the simulated flow.
#[derive(Debug, Clone)]
pub struct WienerFlowGenerator {
    shape: Shape,
    schedule: FlowSchedule,
    prior: PowerLawPrior,
    steps: usize,
    grid: FrequencyGrid,
    fft: Fft2,
}

impl WienerFlowGenerator {
    pub fn new(shape: Shape, prior: PowerLawPrior, schedule: FlowSchedule, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("step count must be at least 1".into()));
        }
        if shape.is_empty() {
            return Err(Error::InvalidArgument(format!("empty shape {shape}")));
        }
        Ok(Self {
            shape,
            schedule,
            prior,
            steps,
            grid: FrequencyGrid::new(shape.height, shape.width),
            fft: Fft2::new(shape.height, shape.width),
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn schedule(&self) -> &FlowSchedule {
        &self.schedule
    }

    pub fn prior(&self) -> &PowerLawPrior {
        &self.prior
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::new(self.shape, self.prior, self.schedule, steps)
    }

    fn check_shape(&self, x: &NoiseField) -> Result<()> {
        if x.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.to_string(),
                actual: x.shape().to_string(),
            });
        }
        Ok(())
    }

    fn spectra(&self, x: &NoiseField) -> Vec<Vec<Complex64>> {
        (0..self.shape.channels)
            .map(|c| self.fft.forward(x.channel(c)))
            .collect()
    }

    fn field_from_spectra(&self, spectra: Vec<Vec<Complex64>>) -> Result<NoiseField> {
        let mut data = Vec::with_capacity(self.shape.len());
        for spec in spectra {
            data.extend(self.fft.inverse_real(spec));
        }
        NoiseField::from_vec(self.shape, data)
    }

    /// Wiener estimate `x̂₁(x_t)`.
    pub fn denoise(&self, x_t: &NoiseField, t: f64) -> Result<NoiseField> {
        self.check_shape(x_t)?;
        if !(t > 0.0 && t <= self.schedule.t_end()) {
            return Err(Error::TimeOutOfRange {
                t,
                t_end: self.schedule.t_end(),
            });
        }
        let mut spectra = self.spectra(x_t);
        for spec in &mut spectra {
            for (i, z) in spec.iter_mut().enumerate() {
                *z *= wiener_response(&self.prior, &self.schedule, self.grid.effective_norm(i), t);
            }
        }
        self.field_from_spectra(spectra)
    }

    /// Velocity field `μ(t)·x̂ + ν(t)·x_t`.
    pub fn velocity(&self, x_t: &NoiseField, t: f64) -> Result<NoiseField> {
        let (mu, nu) = self.schedule.coefficients(t)?;
        self.denoise(x_t, t)?.combine(mu, x_t, nu)
    }

    pub fn integrate(&self, x0: &NoiseField) -> Result<NoiseField> {
        self.integrate_steps(x0, self.steps)
    }

    /// Forward Euler with `steps` uniform steps over `[δ, 1 − δ]`.
    ///
    /// The velocity is diagonal in frequency, so each step is applied to the
    /// spectra directly: one transform in, one out.
    pub fn integrate_steps(&self, x0: &NoiseField, steps: usize) -> Result<NoiseField> {
        self.check_shape(x0)?;
        if steps == 0 {
            return Err(Error::InvalidArgument("step count must be at least 1".into()));
        }
        let (t0, t1) = (self.schedule.t_start(), self.schedule.t_end());
        let dt = (t1 - t0) / steps as f64;
        let mut spectra = self.spectra(x0);
        let mut factors = vec![0.0; self.grid.norms().len()];
        for step in 0..steps {
            let t = t0 + step as f64 * dt;
            let (mu, nu) = self.schedule.coefficients(t)?;
            for (i, f) in factors.iter_mut().enumerate() {
                let h = wiener_response(&self.prior, &self.schedule, self.grid.effective_norm(i), t);
                *f = 1.0 + dt * (mu * h + nu);
            }
            for spec in &mut spectra {
                for (z, f) in spec.iter_mut().zip(&factors) {
                    *z *= *f;
                }
            }
            if spectra.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Diverged { step });
            }
        }
        self.field_from_spectra(spectra)
    }
}

/// `‖Φ(x₀ + ε·ξ) − Φ(x₀)‖ / ε` for a unit-norm perturbation `ξ` drawn in `band`.
pub fn cumulative_gain_empirical<R: Rng + ?Sized>(
    g: &WienerFlowGenerator,
    band: RadialBand,
    x0: &NoiseField,
    eps: f64,
    rng: &mut R,
) -> Result<f64> {
    let xi = bandpass_perturbation(g.shape(), band, rng)?;
    perturbation_gain(g, x0, &xi, eps)
}

/// Gain of a given perturbation direction.
pub fn perturbation_gain(g: &WienerFlowGenerator, x0: &NoiseField, xi: &NoiseField, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1e-2], got {eps}")));
    }
    let base = g.integrate(x0)?;
    let pert = g.integrate(&x0.combine(1.0, xi, eps)?)?;
    Ok(pert.distance(&base)? / (eps * xi.norm()))
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// `ln G(ω) = ∫ (μh + ν) dτ` over the clipped window, by quadrature.
pub fn log_gain_closed_form(g: &WienerFlowGenerator, omega_norm: f64) -> f64 {
    let s = g.schedule();
    simpson(
        |t| growth_rate(g.prior(), s, omega_norm, t),
        s.t_start(),
        s.t_end(),
        QUADRATURE_INTERVALS,
    )
}

pub fn cumulative_gain_closed_form(g: &WienerFlowGenerator, omega_norm: f64) -> f64 {
    log_gain_closed_form(g, omega_norm).exp()
}

/// Time at which `SNR(ω, t) = 1`, i.e. `σ(t)/α(t) = sqrt(P(ω))`, by bisection.
pub fn critical_time(prior: &PowerLawPrior, schedule: &FlowSchedule, omega_norm: f64) -> Result<f64> {
    let root_p = prior.power(omega_norm).sqrt();
    let f = |t: f64| schedule.sigma(t) - root_p * schedule.alpha(t);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if !(root_p.is_finite() && root_p > 0.0) || !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::NoCriticalTime { omega: omega_norm });
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    if t <= 0.0 || t >= 1.0 {
        return Err(Error::NoCriticalTime { omega: omega_norm });
    }
    Ok(t)
}

/// Step-function approximation of the gain:
/// `ln G ≈ ln(σ(t_ω)/α(t_ω)) + ln(α(t_end)/σ(t_start))`.
pub fn piecewise_gain_approx(prior: &PowerLawPrior, schedule: &FlowSchedule, omega_norm: f64) -> Result<f64> {
    let t = critical_time(prior, schedule, omega_norm)?;
    let c_const = (schedule.alpha(schedule.t_end()) / schedule.sigma(schedule.t_start())).ln();
    Ok(((schedule.sigma(t) / schedule.alpha(t)).ln() + c_const).exp())
}

/// Spectral summary of a perturbation: energy weights per distinct lattice norm.
#[derive(Debug, Clone)]
pub struct SpectralWeights {
    pub weights: Vec<(f64, f64)>,
}

impl SpectralWeights {
    /// Normalized `|ξ̃(ω)|²` aggregated over channels and grouped by `‖ω‖`.
    pub fn of(g: &WienerFlowGenerator, xi: &NoiseField) -> Result<Self> {
        g.check_shape(xi)?;
        let mut by_norm: HashMap<u64, (f64, f64)> = HashMap::new();
        let mut total = 0.0;
        for c in 0..xi.shape().channels {
            for (i, z) in g.fft.forward(xi.channel(c)).iter().enumerate() {
                let r = g.grid.effective_norm(i);
                let e = z.norm_sqr();
                total += e;
                by_norm.entry(r.to_bits()).or_insert((r, 0.0)).1 += e;
            }
        }
        if total <= 0.0 {
            return Err(Error::InvalidArgument("perturbation has zero energy".into()));
        }
        let mut weights: Vec<(f64, f64)> = by_norm
            .into_values()
            .filter(|(_, e)| *e > 0.0)
            .map(|(r, e)| (r, e / total))
            .collect();
        weights.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { weights })
    }

    /// Energy-weighted geometric mean of the norms.
    pub fn representative_norm(&self) -> f64 {
        self.weights.iter().map(|(r, w)| w * r.ln()).sum::<f64>().exp()
    }

    /// `sqrt(Σ w·G(ω)²)`: the gain a linear flow with per-frequency gain `G`
    /// applies to this perturbation.
    pub fn aggregate(&self, gain: impl Fn(f64) -> Result<f64>) -> Result<f64> {
        let mut acc = 0.0;
        for &(r, w) in &self.weights {
            let gv = gain(r)?;
            acc += w * gv * gv;
        }
        Ok(acc.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBand {
    pub lo: f64,
    pub hi: f64,
    pub omega_rep: f64,
}

/// Gains per radial band with a log-log line fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve {
    pub bands: Vec<GainBand>,
    pub gains: Vec<f64>,
    pub fit: PowerLawFit,
}

impl GainCurve {
    pub fn new(bands: Vec<GainBand>, gains: Vec<f64>) -> Result<Self> {
        if bands.len() != gains.len() {
            return Err(Error::LengthMismatch {
                expected: bands.len(),
                actual: gains.len(),
            });
        }
        if gains.iter().any(|g| g.is_nan() || *g <= 0.0) {
            return Err(Error::InvalidArgument("gains must be positive".into()));
        }
        let xs: Vec<f64> = bands.iter().map(|b| b.omega_rep.ln()).collect();
        let ys: Vec<f64> = gains.iter().map(|g| g.ln()).collect();
        let fit = weighted_line_fit(&xs, &ys, &vec![1.0; xs.len()])?;
        Ok(Self { bands, gains, fit })
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.gains.windows(2).all(|w| w[1] < w[0])
    }
}
