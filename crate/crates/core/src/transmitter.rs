//! Dirty-paper transmit side: each user pre-cancels its own computing symbol
//! from its data symbol with the coarse modulo, then adds it back.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{build_constellations, ComplexSample, Constellation, LatticeConfig};
use crate::linalg::CMatrix;

/// Bits carried by a `K x T` block of symbols, `width` bits per symbol,
/// most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitTensor {
    users: usize,
    slots: usize,
    width: usize,
    bits: Vec<u8>,
}

impl BitTensor {
    pub fn new(users: usize, slots: usize, width: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != users * slots * width {
            return Err(Error::invalid(format!(
                "bit tensor {users}x{slots}x{width} needs {} bits, got {}",
                users * slots * width,
                bits.len()
            )));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::invalid(format!("bit value {b} is not 0 or 1")));
        }
        Ok(Self {
            users,
            slots,
            width,
            bits,
        })
    }

    pub fn zeros(users: usize, slots: usize, width: usize) -> Self {
        Self {
            users,
            slots,
            width,
            bits: vec![0; users * slots * width],
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn symbol(&self, k: usize, t: usize) -> &[u8] {
        let start = (k * self.slots + t) * self.width;
        &self.bits[start..start + self.width]
    }

    pub fn set_symbol(&mut self, k: usize, t: usize, label: u32) {
        let start = (k * self.slots + t) * self.width;
        for (i, b) in self.bits[start..start + self.width].iter_mut().enumerate() {
            *b = ((label >> (self.width - 1 - i)) & 1) as u8;
        }
    }

    pub fn label(&self, k: usize, t: usize) -> u32 {
        self.symbol(k, t)
            .iter()
            .fold(0u32, |acc, &b| (acc << 1) | b as u32)
    }

    /// Number of positions where the two tensors differ.
    pub fn count_differences(&self, other: &Self) -> Result<u64> {
        if (self.users, self.slots, self.width) != (other.users, other.slots, other.width) {
            return Err(Error::invalid("bit tensor shape mismatch"));
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count() as u64)
    }
}

/// Strictness of constellation membership checks in [`DpcEncoder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EncodeMode {
    #[default]
    Strict,
    /// Accept off-constellation inputs; useful for probing the modulo map.
    Permissive,
}

/// One encoded block.
#[derive(Debug, Clone)]
pub struct Frame {
    data_index: Vec<usize>,
    data: CMatrix,
    bits: BitTensor,
    computing_index: Vec<usize>,
    computing: Vec<ComplexSample>,
    modulated: CMatrix,
    encoded: CMatrix,
}

impl Frame {
    pub fn users(&self) -> usize {
        self.data.rows()
    }

    pub fn slots(&self) -> usize {
        self.data.cols()
    }

    /// Data symbol matrix `V` (K x T).
    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    /// Canonical data-constellation indices, row-major `k*T + t`.
    pub fn data_index(&self) -> &[usize] {
        &self.data_index
    }

    pub fn bits(&self) -> &BitTensor {
        &self.bits
    }

    /// Computing vector `s`, constant over the block.
    pub fn computing(&self) -> &[ComplexSample] {
        &self.computing
    }

    pub fn computing_index(&self) -> &[usize] {
        &self.computing_index
    }

    /// `modL(V - S, Δ)`.
    pub fn modulated(&self) -> &CMatrix {
        &self.modulated
    }

    /// Transmit matrix `X = modL(V - S, Δ) + S`.
    pub fn encoded(&self) -> &CMatrix {
        &self.encoded
    }

    /// Arithmetic-sum target value `Σ_k s_k`.
    pub fn target(&self) -> ComplexSample {
        self.computing.iter().sum()
    }

    /// Mean of `|X[k,t]|²` over the block.
    pub fn mean_tx_power(&self) -> f64 {
        let x = self.encoded.as_slice();
        x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len().max(1) as f64
    }
}

/// Encoder bound to a lattice configuration and its constellations.
#[derive(Debug, Clone)]
pub struct DpcEncoder {
    cfg: LatticeConfig,
    data: Constellation,
    computing: Constellation,
}

impl DpcEncoder {
    pub fn new(cfg: LatticeConfig) -> Self {
        let (data, computing) = build_constellations(&cfg);
        Self {
            cfg,
            data,
            computing,
        }
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.cfg
    }

    pub fn data_constellation(&self) -> &Constellation {
        &self.data
    }

    pub fn computing_constellation(&self) -> &Constellation {
        &self.computing
    }

    /// Returns `(ṽ, x)` with `ṽ = modL(v - s, Δ)` and `x = ṽ + s`.
    pub fn encode_symbol(
        &self,
        v: ComplexSample,
        s: ComplexSample,
    ) -> Result<(ComplexSample, ComplexSample)> {
        self.encode_symbol_with(v, s, EncodeMode::Strict)
    }

    pub fn encode_symbol_with(
        &self,
        v: ComplexSample,
        s: ComplexSample,
        mode: EncodeMode,
    ) -> Result<(ComplexSample, ComplexSample)> {
        if mode == EncodeMode::Strict {
            if self.data.index_of(v).is_none() {
                return Err(Error::invalid(format!("{v} is not a data symbol")));
            }
            if self.computing.index_of(s).is_none() {
                return Err(Error::invalid(format!("{s} is not a computing symbol")));
            }
        } else if !(v.re.is_finite() && v.im.is_finite() && s.re.is_finite() && s.im.is_finite()) {
            return Err(Error::invalid("non-finite encoder input"));
        }
        Ok(self.encode_unchecked(v, s))
    }

    /// `x` is formed as `v` minus the coarse lattice point removed from
    /// `v - s`, which equals `ṽ + s` and keeps `modL(x, Δ) = v` exact.
    #[inline]
    pub(crate) fn encode_unchecked(
        &self,
        v: ComplexSample,
        s: ComplexSample,
    ) -> (ComplexSample, ComplexSample) {
        let diff = v - s;
        let v_tilde = self.cfg.modulo(diff);
        let (p, q) = self.cfg.coarse_shift(diff);
        let d = self.cfg.delta();
        let x = ComplexSample::new(v.re - d * p as f64, v.im - d * q as f64);
        (v_tilde, x)
    }

    /// Assembles a frame from a `K x T x log2M` bit tensor and the users'
    /// computing symbols.
    pub fn build_frame(&self, bits: &BitTensor, s: &[ComplexSample]) -> Result<Frame> {
        let computing_index = s
            .iter()
            .map(|&v| {
                self.computing
                    .index_of(v)
                    .ok_or_else(|| Error::invalid(format!("{v} is not a computing symbol")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.build_frame_indexed(bits, &computing_index)
    }

    /// As [`Self::build_frame`] with computing symbols given by index.
    pub fn build_frame_indexed(&self, bits: &BitTensor, computing_index: &[usize]) -> Result<Frame> {
        let k_users = bits.users();
        let slots = bits.slots();
        if computing_index.len() != k_users {
            return Err(Error::invalid(format!(
                "{} computing symbols for {k_users} users",
                computing_index.len()
            )));
        }
        if bits.width() != self.cfg.rate_bits() as usize {
            return Err(Error::invalid(format!(
                "{} bits per symbol, lattice carries {}",
                bits.width(),
                self.cfg.rate_bits()
            )));
        }
        if let Some(&i) = computing_index.iter().find(|&&i| i >= self.computing.len()) {
            return Err(Error::invalid(format!("computing index {i} out of range")));
        }
        let computing: Vec<ComplexSample> = computing_index
            .iter()
            .map(|&i| self.computing.point(i))
            .collect();
        let mut data_index = Vec::with_capacity(k_users * slots);
        let mut data = CMatrix::zeros(k_users, slots);
        let mut modulated = CMatrix::zeros(k_users, slots);
        let mut encoded = CMatrix::zeros(k_users, slots);
        for k in 0..k_users {
            for t in 0..slots {
                let idx = self.data.index_of_label(bits.label(k, t));
                let v = self.data.point(idx);
                let (v_tilde, x) = self.encode_unchecked(v, computing[k]);
                data_index.push(idx);
                data[(k, t)] = v;
                modulated[(k, t)] = v_tilde;
                encoded[(k, t)] = x;
            }
        }
        Ok(Frame {
            data_index,
            data,
            bits: bits.clone(),
            computing_index: computing_index.to_vec(),
            computing,
            modulated,
            encoded,
        })
    }

    /// `E|x|²` under uniform independent data and computing symbols,
    /// by enumeration of all `M²` pairs.
    pub fn expected_tx_power(&self) -> f64 {
        let mut sum = 0.0;
        for &v in self.data.points() {
            for &s in self.computing.points() {
                sum += self.encode_unchecked(v, s).1.norm_sqr();
            }
        }
        sum / (self.data.len() * self.computing.len()) as f64
    }
}

/// Free-function form of [`DpcEncoder::encode_symbol`].
pub fn encode_symbol(
    v: ComplexSample,
    s: ComplexSample,
    cfg: &LatticeConfig,
) -> Result<(ComplexSample, ComplexSample)> {
    DpcEncoder::new(*cfg).encode_symbol(v, s)
}

/// Free-function form of [`DpcEncoder::build_frame`].
pub fn build_frame(bits: &BitTensor, s: &[ComplexSample], cfg: &LatticeConfig) -> Result<Frame> {
    DpcEncoder::new(*cfg).build_frame(bits, s)
}

/// Empirical transmit power over a set of frames.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TxPowerReport {
    /// Mean `|X[k,t]|²` for each user.
    pub per_user: Vec<f64>,
    /// Mean `|V[k,t]|²`.
    pub data_power: f64,
    /// Mean `|s_k|²`.
    pub computing_power: f64,
}

pub fn measure_tx_power(frames: &[Frame]) -> Result<TxPowerReport> {
    let first = frames
        .first()
        .ok_or_else(|| Error::invalid("power measurement needs at least one frame"))?;
    let k_users = first.users();
    let mut per_user = vec![0.0; k_users];
    let mut data_power = 0.0;
    let mut computing_power = 0.0;
    let mut slots = 0usize;
    for f in frames {
        if f.users() != k_users {
            return Err(Error::invalid("frames disagree on the number of users"));
        }
        for (k, acc) in per_user.iter_mut().enumerate() {
            *acc += (0..f.slots()).map(|t| f.encoded[(k, t)].norm_sqr()).sum::<f64>();
            computing_power += f.computing[k].norm_sqr();
        }
        data_power += f.data.as_slice().iter().map(|v| v.norm_sqr()).sum::<f64>();
        slots += f.slots();
    }
    let denom = slots.max(1) as f64;
    per_user.iter_mut().for_each(|p| *p /= denom);
    Ok(TxPowerReport {
        per_user,
        data_power: data_power / (denom * k_users as f64),
        computing_power: computing_power / (frames.len() * k_users) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> ComplexSample {
        ComplexSample::new(re, im)
    }

    fn close(a: ComplexSample, b: ComplexSample, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn encode_without_wrap() {
        let (vt, x) = encode_symbol(c(0.5, 0.5), c(A, 0.0), &LatticeConfig::qpsk()).unwrap();
        assert!(close(vt, c(0.5 - A, 0.5), 1e-12));
        assert!(close(vt, c(-0.2071, 0.5), 1e-4));
        assert_eq!(x, c(0.5, 0.5));
    }

    #[test]
    fn encode_with_real_axis_wrap() {
        let (vt, x) = encode_symbol(c(0.5, 0.5), c(-A, 0.0), &LatticeConfig::qpsk()).unwrap();
        assert!(close(vt, c(-0.7929, 0.5), 1e-4));
        assert_eq!(x, c(-1.5, 0.5));
        assert!(close(vt + c(-A, 0.0), x, 1e-12));
    }

    #[test]
    fn zero_interference_is_plain_transmission() {
        let enc = DpcEncoder::new(LatticeConfig::qpsk());
        let v = c(-0.5, 0.5);
        let (vt, x) = enc
            .encode_symbol_with(v, c(0.0, 0.0), EncodeMode::Permissive)
            .unwrap();
        assert_eq!((vt, x), (v, v));
        assert!(enc.encode_symbol(v, c(0.0, 0.0)).is_err());
        assert!(enc.encode_symbol(c(0.1, 0.0), c(A, 0.0)).is_err());
    }

    #[test]
    fn single_symbol_frame() {
        let cfg = LatticeConfig::qpsk();
        let bits = BitTensor::new(1, 1, 2, vec![1, 1]).unwrap();
        let frame = build_frame(&bits, &[c(A, 0.0)], &cfg).unwrap();
        assert!(close(frame.encoded()[(0, 0)], c(0.5, 0.5), 1e-12));
        assert_eq!(frame.data_index(), &[3]);
    }

    #[test]
    fn identical_bits_give_identical_columns() {
        let enc = DpcEncoder::new(LatticeConfig::qpsk());
        let slots = 4;
        let mut bits = BitTensor::zeros(2, slots, 2);
        for t in 0..slots {
            bits.set_symbol(0, t, 2);
            bits.set_symbol(1, t, 1);
        }
        let frame = enc.build_frame_indexed(&bits, &[1, 2]).unwrap();
        for t in 1..slots {
            assert_eq!(frame.encoded().column(t), frame.encoded().column(0));
        }
    }

    #[test]
    fn frame_dimension_errors() {
        let enc = DpcEncoder::new(LatticeConfig::qpsk());
        let bits = BitTensor::zeros(2, 3, 2);
        assert!(enc.build_frame_indexed(&bits, &[0]).is_err());
        assert!(enc.build_frame_indexed(&bits, &[0, 4]).is_err());
        assert!(enc.build_frame(&bits, &[c(A, 0.0), c(0.3, 0.0)]).is_err());
        assert!(enc
            .build_frame_indexed(&BitTensor::zeros(2, 3, 4), &[0, 0])
            .is_err());
        assert!(BitTensor::new(2, 3, 2, vec![0; 11]).is_err());
        assert!(BitTensor::new(1, 1, 2, vec![0, 3]).is_err());
    }

    #[test]
    fn frame_invariants_exhaustive_pairs() {
        let cfg = LatticeConfig::qpsk();
        let enc = DpcEncoder::new(cfg);
        let m = cfg.m_points();
        // every (v, s) pair appears once: user k = s index, slot t = v label
        let mut bits = BitTensor::zeros(m, m, 2);
        for k in 0..m {
            for t in 0..m {
                bits.set_symbol(k, t, t as u32);
            }
        }
        let s_index: Vec<usize> = (0..m).collect();
        let frame = enc.build_frame_indexed(&bits, &s_index).unwrap();
        let max_s = enc
            .computing_constellation()
            .points()
            .iter()
            .map(|p| p.re.abs().max(p.im.abs()))
            .fold(0.0, f64::max);
        for k in 0..m {
            for t in 0..m {
                let x = frame.encoded()[(k, t)];
                let v = frame.data()[(k, t)];
                let s = frame.computing()[k];
                assert_eq!(cfg.modulo(x), v);
                assert!(close(frame.modulated()[(k, t)] + s, x, 1e-12));
                assert!(x.re >= -1.0 - max_s && x.re < 1.0 + max_s);
                assert!(x.im >= -1.0 - max_s && x.im < 1.0 + max_s);
            }
        }
    }

    #[test]
    fn measured_power_components() {
        let enc = DpcEncoder::new(LatticeConfig::qpsk());
        let m = 4;
        let mut frames = Vec::new();
        for si in 0..m {
            for sj in 0..m {
                let mut bits = BitTensor::zeros(2, m, 2);
                for t in 0..m {
                    bits.set_symbol(0, t, t as u32);
                    bits.set_symbol(1, t, (m - 1 - t) as u32);
                }
                frames.push(enc.build_frame_indexed(&bits, &[si, sj]).unwrap());
            }
        }
        let report = measure_tx_power(&frames).unwrap();
        assert!((report.data_power - 0.5).abs() < 1e-12);
        assert!((report.computing_power - 0.5).abs() < 1e-12);
        for p in report.per_user {
            assert!((p - enc.expected_tx_power()).abs() < 1e-12);
        }
        assert!(measure_tx_power(&[]).is_err());
    }
}
