//! Nested Gaussian-integer lattices.
//!
//! The coarse lattice `Δ·Z[j]` bounds the transmit amplitude through the
//! centered modulo reduction, and the offset fine grid `δ·(Z[j] + ε(1+j))`
//! with `δ = Δ/√M` supplies the `M` data points inside one coarse cell. The
//! computing constellation is the data constellation rotated by 45 degrees.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A complex baseband sample.
pub type ComplexSample = Complex64;

const MEMBERSHIP_TOL: f64 = 1e-9;

/// Coarse/fine lattice pair parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    delta: f64,
    m_points: usize,
    side: usize,
    fine_spacing: f64,
    offset: f64,
    rate_bits: u32,
}

impl LatticeConfig {
    /// Builds a configuration from the coarse cell side `delta` and the
    /// number of fine points per coarse cell `m_points`.
    ///
    /// `m_points` must be a power of two and a perfect square (4, 16, 64, ...).
    pub fn new(delta: f64, m_points: usize) -> Result<Self> {
        if !delta.is_finite() || delta <= 0.0 {
            return Err(Error::invalid(format!(
                "coarse spacing must be positive and finite, got {delta}"
            )));
        }
        if m_points < 4 || !m_points.is_power_of_two() || m_points.trailing_zeros() % 2 != 0 {
            return Err(Error::invalid(format!(
                "points per cell must be a power of two and a perfect square (>= 4), got {m_points}"
            )));
        }
        let side = 1usize << (m_points.trailing_zeros() / 2);
        let offset = ((side as f64 - 1.0) / 2.0).rem_euclid(1.0);
        Ok(Self {
            delta,
            m_points,
            side,
            fine_spacing: delta / side as f64,
            offset,
            rate_bits: m_points.trailing_zeros(),
        })
    }

    /// `Δ = 2`, `M = 4`: the scaled QPSK setup with unit-power data and
    /// computing constellations of power 0.5 each.
    pub fn qpsk() -> Self {
        Self::new(2.0, 4).expect("valid QPSK lattice")
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn m_points(&self) -> usize {
        self.m_points
    }

    /// Number of fine levels per real dimension, `√M`.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn fine_spacing(&self) -> f64 {
        self.fine_spacing
    }

    /// Fractional grid offset in units of the fine spacing.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Bits per complex data symbol, `log2 M`.
    pub fn rate_bits(&self) -> u32 {
        self.rate_bits
    }

    /// Centered modulo reduction into the coarse cell `[-Δ/2, Δ/2)²`.
    #[inline]
    pub fn modulo(&self, a: ComplexSample) -> ComplexSample {
        let (re, _) = wrap_component(a.re, self.delta);
        let (im, _) = wrap_component(a.im, self.delta);
        ComplexSample::new(re, im)
    }

    /// Coarse lattice point `Δ(p + qj)` removed by [`Self::modulo`], returned
    /// as the integer pair `(p, q)`.
    #[inline]
    pub fn coarse_shift(&self, a: ComplexSample) -> (i64, i64) {
        let (_, p) = wrap_component(a.re, self.delta);
        let (_, q) = wrap_component(a.im, self.delta);
        (p, q)
    }

    /// Nearest point of the offset fine grid.
    #[inline]
    pub fn quantize(&self, a: ComplexSample) -> ComplexSample {
        let d = self.fine_spacing;
        let e = self.offset;
        ComplexSample::new(
            d * ((a.re / d - e).round() + e),
            d * ((a.im / d - e).round() + e),
        )
    }

    /// Fine levels along one axis inside `[-Δ/2, Δ/2)`, ascending.
    fn axis_levels(&self) -> Vec<f64> {
        let half = self.delta / 2.0;
        let d = self.fine_spacing;
        let lo = (-half / d - self.offset).floor() as i64 - 1;
        let hi = (half / d).ceil() as i64 + 1;
        (lo..=hi)
            .map(|n| d * (n as f64 + self.offset))
            .filter(|&v| v >= -half && v < half)
            .collect()
    }
}

/// Reduces `x` into `[-Δ/2, Δ/2)` and returns the integer multiple of `Δ`
/// that was subtracted.
#[inline]
fn wrap_component(x: f64, delta: f64) -> (f64, i64) {
    let half = delta / 2.0;
    if (-half..half).contains(&x) {
        return (x, 0);
    }
    let mut n = ((x + half) / delta).floor();
    let mut r = x - n * delta;
    if r >= half {
        r -= delta;
        n += 1.0;
    } else if r < -half {
        r += delta;
        n -= 1.0;
    }
    (r, n as i64)
}

/// `modL(a, Δ)`: component-wise centered modulo with the half-open
/// convention, so `±Δ/2` both map to `-Δ/2`.
pub fn mod_lattice(a: ComplexSample, delta: f64) -> Result<ComplexSample> {
    if !a.re.is_finite() || !a.im.is_finite() {
        return Err(Error::invalid(format!("non-finite sample {a}")));
    }
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::invalid(format!(
            "modulo base must be positive and finite, got {delta}"
        )));
    }
    Ok(ComplexSample::new(
        wrap_component(a.re, delta).0,
        wrap_component(a.im, delta).0,
    ))
}

/// Nearest-neighbor quantizer onto the offset fine grid
/// `δ·(round(x/δ - ε) + ε)` per real dimension.
pub fn quantize_fine(a: ComplexSample, cfg: &LatticeConfig) -> Result<ComplexSample> {
    if !a.re.is_finite() || !a.im.is_finite() {
        return Err(Error::invalid(format!("non-finite sample {a}")));
    }
    Ok(cfg.quantize(a))
}

/// 45-degree rotation `R = (1/√2)[[1, -1], [1, 1]]` acting on `(re, im)`.
#[inline]
pub fn rotate(p: ComplexSample) -> ComplexSample {
    ComplexSample::new(
        (p.re - p.im) * std::f64::consts::FRAC_1_SQRT_2,
        (p.re + p.im) * std::f64::consts::FRAC_1_SQRT_2,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstellationKind {
    Data,
    Computing,
}

/// An ordered point set. Points are stored row-major by `(im, re)` level,
/// so index `i = im_level·√M + re_level`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<ComplexSample>,
    kind: ConstellationKind,
    side: usize,
    bits_per_symbol: u32,
}

impl Constellation {
    pub fn points(&self) -> &[ComplexSample] {
        &self.points
    }

    pub fn point(&self, index: usize) -> ComplexSample {
        self.points[index]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    pub fn mean_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Index of the point equal to `p` within a small tolerance.
    pub fn index_of(&self, p: ComplexSample) -> Option<usize> {
        self.points
            .iter()
            .position(|q| (q - p).norm() <= MEMBERSHIP_TOL)
    }

    /// Gray label of point `index`: the real-axis level code occupies the
    /// high bits, the imaginary-axis level code the low bits.
    pub fn label(&self, index: usize) -> u32 {
        let half = self.bits_per_symbol / 2;
        let re_level = (index % self.side) as u32;
        let im_level = (index / self.side) as u32;
        (gray(re_level) << half) | gray(im_level)
    }

    /// Inverse of [`Self::label`].
    pub fn index_of_label(&self, label: u32) -> usize {
        let half = self.bits_per_symbol / 2;
        let mask = (1u32 << half) - 1;
        let re_level = gray_inverse(label >> half) as usize;
        let im_level = gray_inverse(label & mask) as usize;
        im_level * self.side + re_level
    }

    /// Nearest point by Euclidean distance; ties go to the lowest index.
    pub fn hard_decide(&self, a: ComplexSample) -> (usize, ComplexSample) {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (a - p).norm_sqr();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        (best, self.points[best])
    }
}

#[inline]
fn gray(n: u32) -> u32 {
    n ^ (n >> 1)
}

#[inline]
fn gray_inverse(mut g: u32) -> u32 {
    let mut n = g;
    while g > 1 {
        g >>= 1;
        n ^= g;
    }
    n
}

/// Builds the data constellation (fine points inside the coarse Voronoi
/// cell) and the rotated computing constellation, index-aligned.
pub fn build_constellations(cfg: &LatticeConfig) -> (Constellation, Constellation) {
    let levels = cfg.axis_levels();
    debug_assert_eq!(levels.len(), cfg.side());
    let data: Vec<ComplexSample> = levels
        .iter()
        .flat_map(|&im| levels.iter().map(move |&re| ComplexSample::new(re, im)))
        .collect();
    let computing = data.iter().copied().map(rotate).collect();
    (
        Constellation {
            points: data,
            kind: ConstellationKind::Data,
            side: cfg.side(),
            bits_per_symbol: cfg.rate_bits(),
        },
        Constellation {
            points: computing,
            kind: ConstellationKind::Computing,
            side: cfg.side(),
            bits_per_symbol: cfg.rate_bits(),
        },
    )
}

fn check_data(c: &Constellation) -> Result<()> {
    if c.kind != ConstellationKind::Data {
        return Err(Error::invalid("bit labels are defined for the data constellation only"));
    }
    Ok(())
}

/// Maps a bit string (values 0/1, most significant first) to its point.
pub fn bits_to_symbol(bits: &[u8], c: &Constellation) -> Result<ComplexSample> {
    check_data(c)?;
    if bits.len() != c.bits_per_symbol as usize {
        return Err(Error::invalid(format!(
            "expected {} bits, got {}",
            c.bits_per_symbol,
            bits.len()
        )));
    }
    let mut label = 0u32;
    for &b in bits {
        if b > 1 {
            return Err(Error::invalid(format!("bit value {b} is not 0 or 1")));
        }
        label = (label << 1) | b as u32;
    }
    Ok(c.point(c.index_of_label(label)))
}

/// Inverse of [`bits_to_symbol`].
pub fn symbol_to_bits(p: ComplexSample, c: &Constellation) -> Result<Vec<u8>> {
    check_data(c)?;
    let index = c
        .index_of(p)
        .ok_or_else(|| Error::invalid(format!("{p} is not a constellation point")))?;
    Ok(label_bits(c.label(index), c.bits_per_symbol))
}

pub(crate) fn label_bits(label: u32, width: u32) -> Vec<u8> {
    (0..width).rev().map(|i| ((label >> i) & 1) as u8).collect()
}

/// Free-function form of [`Constellation::hard_decide`].
pub fn hard_decide(a: ComplexSample, c: &Constellation) -> (usize, ComplexSample) {
    c.hard_decide(a)
}
