//! Low-frequency search coordinates over a frozen high-frequency anchor.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{NoiseField, Shape};
use crate::wavelet::{dwt2, idwt2, DetailBands, WaveletPyramid};

pub const DEFAULT_LEVEL: usize = 4;

/// Flattened LL block, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LowFreqVector(pub Vec<f64>);

impl LowFreqVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// The affine slice `u ↦ IDWT(u ⊕ frozen details)` of the noise prior.
#[derive(Debug, Clone)]
pub struct SpectralSubspace {
    frozen_details: Vec<DetailBands>,
    level: usize,
    full_shape: Shape,
    ll_shape: Shape,
}

impl SpectralSubspace {
    pub fn level(&self) -> usize {
        self.level
    }

    /// `C·H·W / 4^level`.
    pub fn low_dim(&self) -> usize {
        self.ll_shape.len()
    }

    pub fn full_shape(&self) -> Shape {
        self.full_shape
    }

    pub fn ll_shape(&self) -> Shape {
        self.ll_shape
    }

    pub fn frozen_details(&self) -> &[DetailBands] {
        &self.frozen_details
    }
}

pub fn decouple(x_init: &NoiseField, level: usize) -> Result<(LowFreqVector, SpectralSubspace)> {
    let (ll, details) = dwt2(x_init, level)?.into_parts();
    let subspace = SpectralSubspace {
        frozen_details: details,
        level,
        full_shape: x_init.shape(),
        ll_shape: ll.shape(),
    };
    Ok((LowFreqVector(ll.into_vec()), subspace))
}

pub fn reconstruct(u: &LowFreqVector, s: &SpectralSubspace) -> Result<NoiseField> {
    if u.len() != s.low_dim() {
        return Err(Error::LengthMismatch {
            expected: s.low_dim(),
            actual: u.len(),
        });
    }
    let ll = NoiseField::from_vec(s.ll_shape, u.0.clone())?;
    idwt2(&WaveletPyramid::new(ll, s.frozen_details.clone())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    LowFreq,
    HighFreq,
    Full,
    Random,
}

/// Alternative search coordinates for subspace ablations.
///
/// `Random` picks `D′` raw noise coordinates (not wavelet coefficients)
/// uniformly without replacement; the other kinds address wavelet
/// coefficients in [`WaveletPyramid::to_flat`] order.
#[derive(Debug, Clone)]
pub struct AblationSubspace {
    kind: AblationKind,
    shape: Shape,
    level: usize,
    indices: Option<Vec<usize>>,
}

impl AblationSubspace {
    pub fn new<R: Rng + ?Sized>(
        kind: AblationKind,
        shape: Shape,
        level: usize,
        rng: &mut R,
    ) -> Result<Self> {
        // validates divisibility for every kind
        WaveletPyramid::zeros(shape, level)?;
        let low_dim = shape.len() >> (2 * level);
        let indices = match kind {
            AblationKind::Random => {
                let mut idx = index::sample(rng, shape.len(), low_dim).into_vec();
                idx.sort_unstable();
                Some(idx)
            }
            _ => None,
        };
        Ok(Self {
            kind,
            shape,
            level,
            indices,
        })
    }

    pub fn kind(&self) -> AblationKind {
        self.kind
    }

    pub fn indices(&self) -> Option<&[usize]> {
        self.indices.as_deref()
    }

    pub fn coordinate_count(&self) -> usize {
        let d = self.shape.len();
        let low = d >> (2 * self.level);
        match self.kind {
            AblationKind::LowFreq | AblationKind::Random => low,
            AblationKind::HighFreq => d - low,
            AblationKind::Full => d,
        }
    }

    /// The coordinates that reproduce `reference` exactly.
    pub fn coordinates_of(&self, reference: &NoiseField) -> Result<Vec<f64>> {
        reference.check_same(&NoiseField::zeros(self.shape))?;
        Ok(match self.kind {
            AblationKind::LowFreq => dwt2(reference, self.level)?.ll().as_slice().to_vec(),
            AblationKind::HighFreq => dwt2(reference, self.level)?.detail_coefficients(),
            AblationKind::Full => dwt2(reference, self.level)?.to_flat(),
            AblationKind::Random => self
                .indices
                .as_ref()
                .expect("random ablation carries indices")
                .iter()
                .map(|&i| reference.as_slice()[i])
                .collect(),
        })
    }
}

pub fn ablation_reconstruct(
    v: &[f64],
    a: &AblationSubspace,
    reference: &NoiseField,
) -> Result<NoiseField> {
    if v.len() != a.coordinate_count() {
        return Err(Error::LengthMismatch {
            expected: a.coordinate_count(),
            actual: v.len(),
        });
    }
    reference.check_same(&NoiseField::zeros(a.shape))?;
    match a.kind {
        AblationKind::LowFreq => {
            let (_, s) = decouple(reference, a.level)?;
            reconstruct(&LowFreqVector(v.to_vec()), &s)
        }
        AblationKind::HighFreq => {
            let mut p = dwt2(reference, a.level)?;
            p.set_detail_coefficients(v)?;
            idwt2(&p)
        }
        AblationKind::Full => idwt2(&WaveletPyramid::from_flat(a.shape, a.level, v)?),
        AblationKind::Random => {
            let mut out = reference.clone();
            let idx = a.indices.as_ref().expect("random ablation carries indices");
            for (&i, &value) in idx.iter().zip(v) {
                out.as_mut_slice()[i] = value;
            }
            NoiseField::from_vec(a.shape, out.into_vec())
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn dimensionality_reduction() {
        let x = NoiseField::standard_normal(Shape::new(4, 64, 64), &mut rng(1));
        let (u, s) = decouple(&x, 4).unwrap();
        assert_eq!(s.low_dim(), 64);
        assert_eq!(u.len(), 64);
        assert_eq!(16384 / s.low_dim(), 256);
    }

    #[test]
    fn constant_input() {
        let x = NoiseField::filled(Shape::new(2, 16, 16), -0.75);
        let (u, s) = decouple(&x, 2).unwrap();
        assert!(u.0.iter().all(|v| (v - u.0[0]).abs() < 1e-12));
        for level in s.frozen_details() {
            for band in level.bands() {
                assert!(band.max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn roundtrip_and_zero() {
        let x = NoiseField::standard_normal(Shape::new(3, 32, 32), &mut rng(2));
        let (u, s) = decouple(&x, 3).unwrap();
        let back = reconstruct(&u, &s).unwrap();
        assert!(back.sub(&x).unwrap().max_abs() < 1e-10);

        let (_, zs) = decouple(&NoiseField::zeros(Shape::new(1, 8, 8)), 2).unwrap();
        let z = reconstruct(&LowFreqVector(vec![0.0; zs.low_dim()]), &zs).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn length_mismatch_rejected() {
        let (_, s) = decouple(&NoiseField::zeros(Shape::new(1, 8, 8)), 1).unwrap();
        assert!(matches!(
            reconstruct(&LowFreqVector(vec![0.0; 3]), &s),
            Err(Error::LengthMismatch { expected: 16, actual: 3 })
        ));
    }

    #[test]
    fn isometry_on_affine_slice() {
        let mut r = rng(3);
        let x = NoiseField::standard_normal(Shape::new(2, 32, 32), &mut r);
        let (_, s) = decouple(&x, 2).unwrap();
        for _ in 0..20 {
            let u1 = LowFreqVector((0..s.low_dim()).map(|_| r.sample(StandardNormal)).collect());
            let u2 = LowFreqVector((0..s.low_dim()).map(|_| r.sample(StandardNormal)).collect());
            let d_field = reconstruct(&u1, &s)
                .unwrap()
                .distance(&reconstruct(&u2, &s).unwrap())
                .unwrap();
            let d_u: f64 = u1.0.iter().zip(&u2.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!((d_field - d_u).abs() < 1e-10 * d_u);
        }
    }

    #[test]
    fn frozen_anchor_invariance_and_linearity() {
        let mut r = rng(4);
        let x = NoiseField::standard_normal(Shape::new(1, 16, 16), &mut r);
        let (_, s) = decouple(&x, 2).unwrap();
        let u1 = LowFreqVector((0..s.low_dim()).map(|_| r.sample(StandardNormal)).collect());
        let u2 = LowFreqVector((0..s.low_dim()).map(|_| r.sample(StandardNormal)).collect());
        let y = reconstruct(&u1, &s).unwrap();
        let p = dwt2(&y, 2).unwrap();
        for (got, want) in p.details().iter().zip(s.frozen_details()) {
            for (g, w) in got.bands().iter().zip(want.bands()) {
                assert!(g.sub(w).unwrap().max_abs() < 1e-10);
            }
        }
        assert!(p.ll().as_slice().iter().zip(&u1.0).all(|(a, b)| (a - b).abs() < 1e-10));

        // reconstruct(a u1 + b u2) - anchor part is linear in u
        let (a, b) = (0.3, -1.7);
        let zero = reconstruct(&LowFreqVector(vec![0.0; s.low_dim()]), &s).unwrap();
        let mixed = LowFreqVector(u1.0.iter().zip(&u2.0).map(|(p, q)| a * p + b * q).collect());
        let lhs = reconstruct(&mixed, &s).unwrap().sub(&zero).unwrap();
        let r1 = reconstruct(&u1, &s).unwrap().sub(&zero).unwrap();
        let r2 = reconstruct(&u2, &s).unwrap().sub(&zero).unwrap();
        let rhs = r1.combine(a, &r2, b).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn ablation_random_reference_is_identity() {
        let mut r = rng(5);
        let shape = Shape::new(2, 16, 16);
        let reference = NoiseField::standard_normal(shape, &mut r);
        let a = AblationSubspace::new(AblationKind::Random, shape, 2, &mut r).unwrap();
        let idx = a.indices().unwrap();
        assert_eq!(idx.len(), 32);
        let mut dedup = idx.to_vec();
        dedup.dedup();
        assert_eq!(dedup.len(), 32);
        let v = a.coordinates_of(&reference).unwrap();
        assert_eq!(ablation_reconstruct(&v, &a, &reference).unwrap(), reference);
    }

    #[test]
    fn ablation_full_roundtrip() {
        let mut r = rng(6);
        let shape = Shape::new(1, 32, 32);
        let reference = NoiseField::standard_normal(shape, &mut r);
        let a = AblationSubspace::new(AblationKind::Full, shape, 3, &mut r).unwrap();
        let v = a.coordinates_of(&reference).unwrap();
        assert_eq!(v.len(), shape.len());
        let back = ablation_reconstruct(&v, &a, &reference).unwrap();
        assert!(back.sub(&reference).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn ablation_high_freq_zero_keeps_ll() {
        let mut r = rng(7);
        let shape = Shape::new(2, 16, 16);
        let reference = NoiseField::standard_normal(shape, &mut r);
        let a = AblationSubspace::new(AblationKind::HighFreq, shape, 2, &mut r).unwrap();
        let out = ablation_reconstruct(&vec![0.0; a.coordinate_count()], &a, &reference).unwrap();
        let p = dwt2(&out, 2).unwrap();
        let p_ref = dwt2(&reference, 2).unwrap();
        assert!(p.ll().sub(p_ref.ll()).unwrap().max_abs() < 1e-10);
        assert!(p.detail_coefficients().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn ablation_length_mismatch() {
        let mut r = rng(8);
        let shape = Shape::new(1, 8, 8);
        let a = AblationSubspace::new(AblationKind::HighFreq, shape, 1, &mut r).unwrap();
        assert!(ablation_reconstruct(&[0.0; 5], &a, &NoiseField::zeros(shape)).is_err());
    }
}
