//! Multi-level orthonormal Haar (db1) transform of noise fields.
//!
//! Each analysis step maps a 2×2 block `[[a, b], [c, d]]` to
//!
//! ```text
//! LL = (a + b + c + d) / 2    LH = (a - b + c - d) / 2
//! HL = (a + b - c - d) / 2    HH = (a - b - c + d) / 2
//! ```
//!
//! which is orthonormal, so energy is preserved exactly. Channels are
//! transformed independently. Inputs whose sides are not divisible by
//! `2^levels` are rejected rather than padded.

use crate::error::{Error, Result};
use crate::field::{NoiseField, Shape};

/// Detail subbands of one decomposition level.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailBands {
    pub lh: NoiseField,
    pub hl: NoiseField,
    pub hh: NoiseField,
}

impl DetailBands {
    fn zeros(shape: Shape) -> Self {
        Self {
            lh: NoiseField::zeros(shape),
            hl: NoiseField::zeros(shape),
            hh: NoiseField::zeros(shape),
        }
    }

    pub fn shape(&self) -> Shape {
        self.lh.shape()
    }

    pub fn bands(&self) -> [&NoiseField; 3] {
        [&self.lh, &self.hl, &self.hh]
    }

    fn bands_mut(&mut self) -> [&mut NoiseField; 3] {
        [&mut self.lh, &mut self.hl, &mut self.hh]
    }
}

/// `details[0]` is the finest level (half resolution), `details[levels - 1]`
/// the coarsest, which shares its dimensions with `ll`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    ll: NoiseField,
    details: Vec<DetailBands>,
}

impl WaveletPyramid {
    pub fn new(ll: NoiseField, details: Vec<DetailBands>) -> Result<Self> {
        let p = Self { ll, details };
        p.validate()?;
        Ok(p)
    }

    /// All-zero pyramid for a field of `shape`.
    pub fn zeros(shape: Shape, levels: usize) -> Result<Self> {
        check_divisible(shape, levels)?;
        let details = (1..=levels)
            .map(|l| DetailBands::zeros(level_shape(shape, l)))
            .collect();
        Ok(Self {
            ll: NoiseField::zeros(level_shape(shape, levels)),
            details,
        })
    }

    pub fn ll(&self) -> &NoiseField {
        &self.ll
    }

    pub fn ll_mut(&mut self) -> &mut NoiseField {
        &mut self.ll
    }

    pub fn details(&self) -> &[DetailBands] {
        &self.details
    }

    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn into_parts(self) -> (NoiseField, Vec<DetailBands>) {
        (self.ll, self.details)
    }

    /// Shape of the field this pyramid synthesizes.
    pub fn field_shape(&self) -> Shape {
        let s = self.ll.shape();
        let f = 1 << self.levels();
        Shape::new(s.channels, s.height * f, s.width * f)
    }

    pub fn coefficient_count(&self) -> usize {
        self.ll.shape().len()
            + self
                .details
                .iter()
                .map(|d| 3 * d.shape().len())
                .sum::<usize>()
    }

    /// Detail coefficients concatenated from the coarsest level to the finest,
    /// `lh, hl, hh` within each level.
    pub fn detail_coefficients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.coefficient_count() - self.ll.shape().len());
        for level in self.details.iter().rev() {
            for band in level.bands() {
                out.extend_from_slice(band.as_slice());
            }
        }
        out
    }

    pub fn set_detail_coefficients(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.coefficient_count() - self.ll.shape().len();
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: values.len(),
            });
        }
        let mut offset = 0;
        for level in self.details.iter_mut().rev() {
            for band in level.bands_mut() {
                let n = band.shape().len();
                band.as_mut_slice()
                    .copy_from_slice(&values[offset..offset + n]);
                offset += n;
            }
        }
        Ok(())
    }

    /// LL block followed by [`detail_coefficients`](Self::detail_coefficients).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.ll.as_slice().to_vec();
        out.extend(self.detail_coefficients());
        out
    }

    pub fn from_flat(shape: Shape, levels: usize, values: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(shape, levels)?;
        if values.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                actual: values.len(),
            });
        }
        let n_ll = p.ll.shape().len();
        p.ll.as_mut_slice().copy_from_slice(&values[..n_ll]);
        p.set_detail_coefficients(&values[n_ll..])?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.details.is_empty() {
            return Err(Error::ZeroLevels);
        }
        let ll = self.ll.shape();
        for (i, level) in self.details.iter().enumerate() {
            let s = level.shape();
            if level.hl.shape() != s || level.hh.shape() != s {
                return Err(Error::InconsistentPyramid(format!(
                    "level {} subbands disagree in shape",
                    i + 1
                )));
            }
            let f = 1 << (self.details.len() - 1 - i);
            let expected = Shape::new(ll.channels, ll.height * f, ll.width * f);
            if s != expected {
                return Err(Error::InconsistentPyramid(format!(
                    "level {} has shape {s}, expected {expected}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

fn level_shape(shape: Shape, level: usize) -> Shape {
    Shape::new(shape.channels, shape.height >> level, shape.width >> level)
}

fn check_divisible(shape: Shape, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::ZeroLevels);
    }
    let block = 1usize
        .checked_shl(levels as u32)
        .filter(|b| *b != 0)
        .ok_or_else(|| Error::InvalidArgument(format!("level {levels} is too large")))?;
    for (axis, size) in [("height", shape.height), ("width", shape.width)] {
        if size == 0 || size % block != 0 {
            return Err(Error::DimensionNotDivisible { axis, size, levels });
        }
    }
    Ok(())
}

/// One analysis step on every channel of `x`.
fn analyze(x: &NoiseField) -> (NoiseField, DetailBands) {
    let s = x.shape();
    let half = Shape::new(s.channels, s.height / 2, s.width / 2);
    let mut ll = NoiseField::zeros(half);
    let mut d = DetailBands::zeros(half);
    for c in 0..s.channels {
        for y in 0..half.height {
            for x_ in 0..half.width {
                let a = x.get(c, 2 * y, 2 * x_);
                let b = x.get(c, 2 * y, 2 * x_ + 1);
                let cc = x.get(c, 2 * y + 1, 2 * x_);
                let dd = x.get(c, 2 * y + 1, 2 * x_ + 1);
                ll.set(c, y, x_, 0.5 * (a + b + cc + dd));
                d.lh.set(c, y, x_, 0.5 * (a - b + cc - dd));
                d.hl.set(c, y, x_, 0.5 * (a + b - cc - dd));
                d.hh.set(c, y, x_, 0.5 * (a - b - cc + dd));
            }
        }
    }
    (ll, d)
}

fn synthesize(ll: &NoiseField, d: &DetailBands) -> NoiseField {
    let s = ll.shape();
    let mut out = NoiseField::zeros(Shape::new(s.channels, 2 * s.height, 2 * s.width));
    for c in 0..s.channels {
        for y in 0..s.height {
            for x in 0..s.width {
                let l = ll.get(c, y, x);
                let lh = d.lh.get(c, y, x);
                let hl = d.hl.get(c, y, x);
                let hh = d.hh.get(c, y, x);
                out.set(c, 2 * y, 2 * x, 0.5 * (l + lh + hl + hh));
                out.set(c, 2 * y, 2 * x + 1, 0.5 * (l - lh + hl - hh));
                out.set(c, 2 * y + 1, 2 * x, 0.5 * (l + lh - hl - hh));
                out.set(c, 2 * y + 1, 2 * x + 1, 0.5 * (l - lh - hl + hh));
            }
        }
    }
    out
}

pub fn dwt2(x: &NoiseField, levels: usize) -> Result<WaveletPyramid> {
    check_divisible(x.shape(), levels)?;
    let mut details = Vec::with_capacity(levels);
    let mut current = x.clone();
    for _ in 0..levels {
        let (ll, d) = analyze(&current);
        details.push(d);
        current = ll;
    }
    Ok(WaveletPyramid {
        ll: current,
        details,
    })
}

pub fn idwt2(p: &WaveletPyramid) -> Result<NoiseField> {
    p.validate()?;
    let mut current = p.ll.clone();
    for d in p.details.iter().rev() {
        current = synthesize(&current, d);
    }
    Ok(current)
}

pub fn pyramid_energy(p: &WaveletPyramid) -> f64 {
    p.ll.energy()
        + p.details
            .iter()
            .flat_map(|d| d.bands())
            .map(NoiseField::energy)
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Direct per-pixel evaluation of the Haar basis: coefficient = <x, basis>,
    /// built independently of the recursive implementation.
    fn basis_oracle_ll(x: &NoiseField, levels: usize) -> Vec<f64> {
        let s = x.shape();
        let b = 1 << levels;
        let scale = 1.0 / (b as f64);
        let mut out = Vec::new();
        for c in 0..s.channels {
            for by in 0..s.height / b {
                for bx in 0..s.width / b {
                    let mut acc = 0.0;
                    for y in 0..b {
                        for x_ in 0..b {
                            acc += x.get(c, by * b + y, bx * b + x_);
                        }
                    }
                    out.push(acc * scale);
                }
            }
        }
        out
    }

    #[test]
    fn two_by_two_example() {
        let x = NoiseField::from_vec(Shape::new(1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = dwt2(&x, 1).unwrap();
        assert_eq!(p.ll().as_slice(), &[5.0]);
        assert_eq!(p.details()[0].lh.as_slice(), &[-1.0]);
        assert_eq!(p.details()[0].hl.as_slice(), &[-2.0]);
        assert_eq!(p.details()[0].hh.as_slice(), &[0.0]);
        assert_eq!(pyramid_energy(&p), 30.0);
        assert_eq!(x.energy(), 30.0);
        assert_eq!(idwt2(&p).unwrap(), x);
    }

    #[test]
    fn constant_field() {
        for levels in 1..=4 {
            let x = NoiseField::filled(Shape::new(2, 16, 32), 1.5);
            let p = dwt2(&x, levels).unwrap();
            let expected = 1.5 * (1 << levels) as f64;
            assert!(p.ll().as_slice().iter().all(|v| (v - expected).abs() < 1e-12));
            assert!(p.detail_coefficients().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn ll_matches_block_average_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = NoiseField::standard_normal(Shape::new(3, 32, 16), &mut rng);
        for levels in 1..=4 {
            let p = dwt2(&x, levels).unwrap();
            let oracle = basis_oracle_ll(&x, levels);
            for (a, b) in p.ll().as_slice().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        let x = NoiseField::zeros(Shape::new(1, 8, 12));
        assert!(matches!(dwt2(&x, 0), Err(Error::ZeroLevels)));
        match dwt2(&x, 3) {
            Err(Error::DimensionNotDivisible { axis, .. }) => assert_eq!(axis, "width"),
            other => panic!("unexpected {other:?}"),
        }
        let x = NoiseField::zeros(Shape::new(1, 6, 8));
        match dwt2(&x, 2) {
            Err(Error::DimensionNotDivisible { axis, .. }) => assert_eq!(axis, "height"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_inconsistent_pyramid() {
        let p = WaveletPyramid::zeros(Shape::new(1, 8, 8), 2).unwrap();
        let (ll, mut details) = p.into_parts();
        details[0].hh = NoiseField::zeros(Shape::new(1, 2, 2));
        assert!(matches!(
            WaveletPyramid::new(ll, details),
            Err(Error::InconsistentPyramid(_))
        ));
    }

    #[test]
    fn zero_pyramid_synthesizes_zero_field() {
        let p = WaveletPyramid::zeros(Shape::new(2, 16, 16), 3).unwrap();
        assert_eq!(pyramid_energy(&p), 0.0);
        assert_eq!(idwt2(&p).unwrap(), NoiseField::zeros(Shape::new(2, 16, 16)));
    }

    #[test]
    fn flat_layout_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let shape = Shape::new(2, 16, 16);
        let x = NoiseField::standard_normal(shape, &mut rng);
        let p = dwt2(&x, 3).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), shape.len());
        assert_eq!(WaveletPyramid::from_flat(shape, 3, &flat).unwrap(), p);
    }

    fn field_strategy() -> impl Strategy<Value = (NoiseField, usize)> {
        (1usize..=2, 1usize..=3, 1usize..=3, 1usize..=3).prop_flat_map(|(c, hb, wb, levels)| {
            let shape = Shape::new(c, hb << levels, wb << levels);
            proptest::collection::vec(-1e3f64..1e3, shape.len())
                .prop_map(move |v| (NoiseField::from_vec(shape, v).unwrap(), levels))
        })
    }

    proptest! {
        #[test]
        fn perfect_reconstruction_and_parseval((x, levels) in field_strategy()) {
            let p = dwt2(&x, levels).unwrap();
            prop_assert_eq!(p.coefficient_count(), x.shape().len());
            let back = idwt2(&p).unwrap();
            let err = back.sub(&x).unwrap().max_abs();
            prop_assert!(err < 1e-10 * x.max_abs().max(1.0));
            let e = x.energy();
            if e > 0.0 {
                prop_assert!((pyramid_energy(&p) - e).abs() / e < 1e-10);
            }
        }

        #[test]
        fn linearity((x, levels) in field_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let y = x.scaled(0.5).combine(1.0, &NoiseField::filled(x.shape(), 0.25), 1.0).unwrap();
            let lhs = dwt2(&x.combine(a, &y, b).unwrap(), levels).unwrap().to_flat();
            let px = dwt2(&x, levels).unwrap().to_flat();
            let py = dwt2(&y, levels).unwrap().to_flat();
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (a * px[i] + b * py[i])).abs() < 1e-9 * (1.0 + lhs[i].abs()));
            }
        }
    }
}
