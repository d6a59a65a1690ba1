//! Radial spectral measurements: log-spaced annuli, power spectra,
//! power-law fits and band-pass perturbations.

use rand::Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{NoiseField, Shape};
use crate::fourier::{Fft2, FrequencyGrid};

/// Annulus `lo < ‖ω‖ ≤ hi` in radians per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialBand {
    pub lo: f64,
    pub hi: f64,
}

impl RadialBand {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid band ({lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, norm: f64) -> bool {
        norm > self.lo && norm <= self.hi
    }

    /// Geometric mean of the edges.
    pub fn center(&self) -> f64 {
        (self.lo * self.hi).sqrt()
    }

    pub fn lattice_count(&self, grid: &FrequencyGrid) -> usize {
        grid.norms().iter().filter(|&&r| self.contains(r)).count()
    }
}

/// `n + 1` edges, equal width in log radius, spanning every nonzero lattice
/// frequency of `grid`.
fn log_edges(grid: &FrequencyGrid, n: usize) -> Vec<f64> {
    let r_max = grid.max_norm();
    let lo = grid.min_nonzero() * (1.0 - 1e-9);
    let span = (r_max / lo).ln();
    let mut edges: Vec<f64> = (0..=n)
        .map(|i| lo * (span * i as f64 / n as f64).exp())
        .collect();
    edges[n] = r_max;
    edges
}

pub fn partition_bands(grid: &FrequencyGrid, n_bands: usize) -> Result<Vec<RadialBand>> {
    if n_bands < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 bands, got {n_bands}"
        )));
    }
    let edges = log_edges(grid, n_bands);
    let bands: Vec<RadialBand> = edges
        .windows(2)
        .map(|e| RadialBand { lo: e[0], hi: e[1] })
        .collect();
    if bands.iter().any(|b| b.lattice_count(grid) == 0) {
        return Err(Error::GridTooSmall {
            height: grid.height(),
            width: grid.width(),
            bands: n_bands,
        });
    }
    Ok(bands)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub band: RadialBand,
    /// Mean of `|x̃(ω)|²` over the bin's lattice points and all channels.
    pub mean_power: f64,
    /// Lattice points in the bin (per channel).
    pub count: usize,
    /// Geometric mean of the bin's lattice norms.
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub bins: Vec<ProfileBin>,
}

impl RadialProfile {
    /// Elementwise average of profiles sharing the same bins.
    pub fn average(profiles: &[RadialProfile]) -> Result<RadialProfile> {
        let first = profiles
            .first()
            .ok_or_else(|| Error::InvalidArgument("no profiles to average".into()))?;
        let mut bins = first.bins.clone();
        for p in &profiles[1..] {
            if p.bins.len() != bins.len() {
                return Err(Error::InvalidArgument("profiles have different bins".into()));
            }
            for (acc, b) in bins.iter_mut().zip(&p.bins) {
                acc.mean_power += b.mean_power;
            }
        }
        for b in &mut bins {
            b.mean_power /= profiles.len() as f64;
        }
        Ok(RadialProfile { bins })
    }

    /// Largest over smallest bin power.
    pub fn flatness_ratio(&self) -> f64 {
        let max = self.bins.iter().map(|b| b.mean_power).fold(f64::MIN, f64::max);
        let min = self.bins.iter().map(|b| b.mean_power).fold(f64::MAX, f64::min);
        max / min
    }
}

/// Squared spectral magnitudes of each channel, unitary normalization.
pub fn power_spectrum(x: &NoiseField) -> Vec<Vec<f64>> {
    let s = x.shape();
    let fft = Fft2::new(s.height, s.width);
    (0..s.channels)
        .map(|c| fft.forward(x.channel(c)).iter().map(Complex64::norm_sqr).collect())
        .collect()
}

pub fn radial_psd(x: &NoiseField, n_bins: usize) -> Result<RadialProfile> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 bins, got {n_bins}"
        )));
    }
    let s = x.shape();
    let grid = FrequencyGrid::new(s.height, s.width);
    let spectra = power_spectrum(x);
    let edges = log_edges(&grid, n_bins);
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    let mut log_norms = vec![0.0; n_bins];
    for (i, &r) in grid.norms().iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        // binary search over edges; last edge is inclusive
        let bin = edges[1..].partition_point(|&e| e < r).min(n_bins - 1);
        counts[bin] += 1;
        log_norms[bin] += r.ln();
        sums[bin] += spectra.iter().map(|p| p[i]).sum::<f64>();
    }
    let bins = (0..n_bins)
        .filter(|&b| counts[b] > 0)
        .map(|b| ProfileBin {
            band: RadialBand {
                lo: edges[b],
                hi: edges[b + 1],
            },
            mean_power: sums[b] / (counts[b] * s.channels) as f64,
            count: counts[b],
            omega: (log_norms[b] / counts[b] as f64).exp(),
        })
        .collect();
    Ok(RadialProfile { bins })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Slope of `log P` against `log ‖ω‖`; negative for decaying spectra.
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Weighted least squares line through `(x, y)`.
pub fn weighted_line_fit(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<PowerLawFit> {
    if xs.len() != ys.len() || xs.len() != ws.len() {
        return Err(Error::InvalidArgument("fit inputs differ in length".into()));
    }
    if xs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 points to fit, got {}",
            xs.len()
        )));
    }
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
        syy += w * (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy <= f64::EPSILON * sw * (1.0 + my * my) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(PowerLawFit {
        exponent: slope,
        intercept,
        r2,
    })
}

/// Count-weighted log-log fit at each bin's geometric-mean frequency.
pub fn fit_power_law(p: &RadialProfile) -> Result<PowerLawFit> {
    let bins: Vec<&ProfileBin> = p.bins.iter().filter(|b| b.count > 0).collect();
    if bins.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 nonempty bins, got {}",
            bins.len()
        )));
    }
    let xs: Vec<f64> = bins.iter().map(|b| b.omega.ln()).collect();
    let ys: Vec<f64> = bins.iter().map(|b| b.mean_power.ln()).collect();
    let ws: Vec<f64> = bins.iter().map(|b| b.count as f64).collect();
    weighted_line_fit(&xs, &ys, &ws)
}

/// Unit-norm real field whose spectrum is white noise restricted to `band`.
pub fn bandpass_perturbation<R: Rng + ?Sized>(
    shape: Shape,
    band: RadialBand,
    rng: &mut R,
) -> Result<NoiseField> {
    let grid = FrequencyGrid::new(shape.height, shape.width);
    if band.lattice_count(&grid) == 0 {
        return Err(Error::EmptyBand {
            lo: band.lo,
            hi: band.hi,
        });
    }
    let fft = Fft2::new(shape.height, shape.width);
    let white = NoiseField::standard_normal(shape, rng);
    let mut out = NoiseField::zeros(shape);
    for c in 0..shape.channels {
        let mut spec = fft.forward(white.channel(c));
        for (z, &r) in spec.iter_mut().zip(grid.norms()) {
            if !band.contains(r) {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        out.channel_mut(c).copy_from_slice(&fft.inverse_real(spec));
    }
    let n = out.norm();
    if n == 0.0 {
        return Err(Error::EmptyBand {
            lo: band.lo,
            hi: band.hi,
        });
    }
    Ok(out.scaled(1.0 / n))
}

/// Gaussian field with radial power spectrum `‖ω‖^(−decay)` and zero DC.
pub fn synthesize_power_law_field<R: Rng + ?Sized>(
    shape: Shape,
    decay: f64,
    rng: &mut R,
) -> NoiseField {
    let grid = FrequencyGrid::new(shape.height, shape.width);
    let fft = Fft2::new(shape.height, shape.width);
    let white = NoiseField::standard_normal(shape, rng);
    let mut out = NoiseField::zeros(shape);
    for c in 0..shape.channels {
        let mut spec = fft.forward(white.channel(c));
        for (z, &r) in spec.iter_mut().zip(grid.norms()) {
            *z = if r == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                *z * r.powf(-decay / 2.0)
            };
        }
        out.channel_mut(c).copy_from_slice(&fft.inverse_real(spec));
    }
    out
}

/// Spectral energy of `x` inside `band`, summed over channels.
pub fn band_energy(x: &NoiseField, band: RadialBand) -> f64 {
    let s = x.shape();
    let grid = FrequencyGrid::new(s.height, s.width);
    power_spectrum(x)
        .iter()
        .map(|p| {
            p.iter()
                .zip(grid.norms())
                .filter(|(_, &r)| band.contains(r))
                .map(|(v, _)| v)
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn eight_bands_partition_64_grid() {
        let grid = FrequencyGrid::new(64, 64);
        let bands = partition_bands(&grid, 8).unwrap();
        assert_eq!(bands.len(), 8);
        for w in bands.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
            assert!(w[1].center() > w[0].center());
        }
        // every nonzero lattice frequency in exactly one band
        for &r in grid.norms().iter().filter(|&&r| r > 0.0) {
            assert_eq!(bands.iter().filter(|b| b.contains(r)).count(), 1);
        }
        assert!(bands.iter().all(|b| !b.contains(0.0)));
    }

    #[test]
    fn partition_errors() {
        let grid = FrequencyGrid::new(4, 4);
        assert!(matches!(partition_bands(&grid, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(partition_bands(&grid, 12), Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn psd_partitions_energy() {
        let x = NoiseField::standard_normal(Shape::new(3, 32, 32), &mut rng(1));
        let p = radial_psd(&x, 6).unwrap();
        let binned: f64 = p.bins.iter().map(|b| b.mean_power * (b.count * 3) as f64).sum();
        let dc: f64 = power_spectrum(&x).iter().map(|s| s[0]).sum();
        assert!((binned - (x.energy() - dc)).abs() < 1e-9 * x.energy());
    }

    #[test]
    fn exact_power_law_fit() {
        let bins = (1..=6)
            .map(|i| {
                let lo = 0.1 * 1.5f64.powi(i);
                let band = RadialBand { lo, hi: lo * 1.5 };
                ProfileBin {
                    band,
                    mean_power: 3.0 * band.center().powf(-1.7),
                    count: i as usize * 3,
                    omega: band.center(),
                }
            })
            .collect();
        let fit = fit_power_law(&RadialProfile { bins }).unwrap();
        assert!((fit.exponent + 1.7).abs() < 1e-10);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_profile_fit_and_too_few_bins() {
        let mk = |n: usize| RadialProfile {
            bins: (0..n)
                .map(|i| ProfileBin {
                    band: RadialBand { lo: 1.0 + i as f64, hi: 2.0 + i as f64 },
                    mean_power: 2.5,
                    count: 4,
                    omega: 1.5 + i as f64,
                })
                .collect(),
        };
        let fit = fit_power_law(&mk(5)).unwrap();
        assert!(fit.exponent.abs() < 1e-12);
        assert!(fit_power_law(&mk(2)).is_err());
    }

    #[test]
    fn perturbation_is_unit_norm_and_band_limited() {
        let shape = Shape::new(2, 32, 32);
        let grid = FrequencyGrid::new(32, 32);
        let bands = partition_bands(&grid, 6).unwrap();
        let xi = bandpass_perturbation(shape, bands[2], &mut rng(2)).unwrap();
        assert!((xi.norm() - 1.0).abs() < 1e-12);
        let inside = band_energy(&xi, bands[2]);
        assert!(inside > 0.99);
        let other = bandpass_perturbation(shape, bands[4], &mut rng(3)).unwrap();
        assert!(xi.dot(&other).unwrap().abs() < 1e-10);
    }

    #[test]
    fn empty_band_rejected_with_bounds() {
        let err = bandpass_perturbation(
            Shape::new(1, 8, 8),
            RadialBand { lo: 0.01, hi: 0.02 },
            &mut rng(4),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0.01") && msg.contains("0.02"), "{msg}");
    }

    #[test]
    fn white_noise_is_flat_on_average() {
        let shape = Shape::new(4, 64, 64);
        let mut r = rng(5);
        let profiles: Vec<_> = (0..32)
            .map(|_| radial_psd(&NoiseField::standard_normal(shape, &mut r), 8).unwrap())
            .collect();
        let avg = RadialProfile::average(&profiles).unwrap();
        assert!(avg.flatness_ratio() < 1.5, "{}", avg.flatness_ratio());
    }

    #[test]
    fn synthetic_decay_recovered() {
        let shape = Shape::new(1, 64, 64);
        let mut r = rng(6);
        let profiles: Vec<_> = (0..32)
            .map(|_| radial_psd(&synthesize_power_law_field(shape, 2.0, &mut r), 8).unwrap())
            .collect();
        let fit = fit_power_law(&RadialProfile::average(&profiles).unwrap()).unwrap();
        assert!((fit.exponent + 2.0).abs() < 0.1, "{fit:?}");
    }
}
