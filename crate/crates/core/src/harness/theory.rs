//! Gain-versus-frequency report for the simulated flow: empirical
//! perturb-and-integrate gains next to the quadrature and piecewise
//! predictions, per radial band.

use crate::error::{Error, Result};
use crate::field::{NoiseField, Shape};
use crate::flowsim::{
    cumulative_gain_closed_form, perturbation_gain, piecewise_gain_approx, FlowSchedule, GainBand, GainCurve,
    PowerLawPrior, SpectralWeights, WienerFlowGenerator, DEFAULT_AMPLITUDE, DEFAULT_DELTA,
};
use crate::harness::records::real;
use crate::rng::SeedStreams;
use crate::spectral::{bandpass_perturbation, partition_bands};

pub const PERTURBATION_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub beta: f64,
    /// `−β/2`.
    pub target_slope: f64,
    pub empirical: GainCurve,
    pub closed_form: GainCurve,
    pub piecewise: GainCurve,
}

impl TheoryReport {
    /// Largest `|empirical / closed_form − 1|` over bands.
    pub fn max_relative_error(&self) -> f64 {
        self.empirical
            .gains
            .iter()
            .zip(&self.closed_form.gains)
            .map(|(e, c)| (e / c - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_decreasing(&self) -> bool {
        self.empirical.strictly_decreasing() && self.closed_form.strictly_decreasing() && self.piecewise.strictly_decreasing()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("band_lo,band_hi,omega_rep,gain_empirical,gain_closed_form,gain_piecewise\n");
        for (i, b) in self.closed_form.bands.iter().enumerate() {
            out += &format!(
                "{},{},{},{},{},{}\n",
                real(b.lo),
                real(b.hi),
                real(b.omega_rep),
                real(self.empirical.gains[i]),
                real(self.closed_form.gains[i]),
                real(self.piecewise.gains[i])
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "beta = {}\ntarget slope = {:.6}\nslope empirical = {:.6}\nslope closed_form = {:.6}\nslope piecewise = {:.6}\nmax relative error (empirical vs closed form) = {:.6}\nstrictly decreasing = {}\n",
            self.beta,
            self.target_slope,
            self.empirical.fit.exponent,
            self.closed_form.fit.exponent,
            self.piecewise.fit.exponent,
            self.max_relative_error(),
            self.all_decreasing()
        )
    }
}

/// Gain curves on a single-channel `size × size` grid with `n_bands`
/// log-spaced bands, integrating with `steps` Euler steps.
///
/// Each band gets one unit-norm band-limited perturbation. The empirical gain
/// is `‖Φ(x₀ + εξ) − Φ(x₀)‖ / ε`; the predicted gains are aggregated over the
/// same perturbation's spectrum, and `omega_rep` is its energy-weighted
/// geometric-mean frequency.
pub fn validate_theory(beta: f64, size: usize, n_bands: usize, steps: usize, seed: u64) -> Result<TheoryReport> {
    if !size.is_power_of_two() || size < 8 {
        return Err(Error::InvalidArgument(format!("grid size must be a power of two >= 8, got {size}")));
    }
    if n_bands < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 bands, got {n_bands}")));
    }
    let prior = PowerLawPrior::new(beta, DEFAULT_AMPLITUDE)?;
    let schedule = FlowSchedule::rectified(DEFAULT_DELTA)?;
    let g = WienerFlowGenerator::new(Shape::new(1, size, size), prior, schedule, steps)?;
    let bands = partition_bands(g.grid(), n_bands)?;
    let streams = SeedStreams::new(seed);
    let x0 = NoiseField::standard_normal(g.shape(), &mut streams.stream("x0", 0));

    let mut gain_bands = Vec::with_capacity(n_bands);
    let (mut emp, mut cf, mut pw) = (Vec::new(), Vec::new(), Vec::new());
    for (i, band) in bands.iter().enumerate() {
        let xi = bandpass_perturbation(g.shape(), *band, &mut streams.stream("perturbation", i as u64))?;
        let w = SpectralWeights::of(&g, &xi)?;
        gain_bands.push(GainBand {
            lo: band.lo,
            hi: band.hi,
            omega_rep: w.representative_norm(),
        });
        emp.push(perturbation_gain(&g, &x0, &xi, PERTURBATION_EPS)?);
        cf.push(w.aggregate(|r| Ok(cumulative_gain_closed_form(&g, r)))?);
        pw.push(w.aggregate(|r| piecewise_gain_approx(&prior, &schedule, r))?);
    }
    Ok(TheoryReport {
        beta,
        target_slope: -beta / 2.0,
        empirical: GainCurve::new(gain_bands.clone(), emp)?,
        closed_form: GainCurve::new(gain_bands.clone(), cf)?,
        piecewise: GainCurve::new(gain_bands, pw)?,
    })
}
