//! BER / SER / function-MSE accumulation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::{BaselineDetection, BaselineFrame};
use crate::error::{Error, Result};
use crate::receiver::DetectionResult;
use crate::transmitter::Frame;

/// 97.5% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Nested-lattice dirty-paper scheme.
    #[serde(rename = "DPC")]
    Dpc,
    /// Superposition benchmark.
    #[serde(rename = "SOTA")]
    Sota,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Dpc => "DPC",
            Scheme::Sota => "SOTA",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DPC" => Ok(Scheme::Dpc),
            "SOTA" => Ok(Scheme::Sota),
            other => Err(Error::invalid(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Identifies one sweep cell. Records only merge within the same cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub users: usize,
    pub antennas: usize,
    pub slots: usize,
    pub m_points: usize,
    pub delta: f64,
}

/// Ground truth of one block.
#[derive(Debug, Clone, Copy)]
pub enum BlockTruth<'a> {
    Dpc { frame: &'a Frame, tx_gain: f64 },
    Sota { frame: &'a BaselineFrame },
}

/// Receiver output of one block.
#[derive(Debug, Clone, Copy)]
pub enum BlockEstimate<'a> {
    Dpc(&'a DetectionResult),
    Sota(&'a BaselineDetection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub key: CellKey,
    pub trials: u64,
    pub bit_errors: u64,
    pub total_bits: u64,
    pub symbol_errors: u64,
    pub total_symbols: u64,
    /// `Σ |f̂ − f|²` over blocks.
    pub mse_sum: f64,
    /// `Σ |f̂ − f|⁴`, for the MSE confidence interval.
    pub mse_sq_sum: f64,
    /// Sum over blocks of the block-mean `|x|²`.
    pub tx_power_sum: f64,
}

impl MetricsRecord {
    pub fn empty(key: CellKey) -> Self {
        Self {
            key,
            trials: 0,
            bit_errors: 0,
            total_bits: 0,
            symbol_errors: 0,
            total_symbols: 0,
            mse_sum: 0.0,
            mse_sq_sum: 0.0,
            tx_power_sum: 0.0,
        }
    }

    pub fn ber(&self) -> f64 {
        ratio(self.bit_errors, self.total_bits)
    }

    pub fn ser(&self) -> f64 {
        ratio(self.symbol_errors, self.total_symbols)
    }

    pub fn mse(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.mse_sum / self.trials as f64
        }
    }

    pub fn tx_power(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.tx_power_sum / self.trials as f64
        }
    }

    /// Normal-approximation 95% half-width on the bit-error proportion.
    /// Optimistic at very low BER and when bit errors cluster within blocks.
    pub fn ci95_ber(&self) -> f64 {
        if self.total_bits == 0 {
            return 0.0;
        }
        let p = self.ber();
        Z95 * (p * (1.0 - p) / self.total_bits as f64).sqrt()
    }

    /// 95% half-width on the MSE from the sample variance of the per-block
    /// squared errors.
    pub fn ci95_mse(&self) -> f64 {
        if self.trials < 2 {
            return 0.0;
        }
        let n = self.trials as f64;
        let mean = self.mse_sum / n;
        let var = ((self.mse_sq_sum / n - mean * mean) * n / (n - 1.0)).max(0.0);
        Z95 * (var / n).sqrt()
    }

    /// Adds one block outcome; returns the updated record.
    pub fn record_block(&self, truth: BlockTruth<'_>, estimate: BlockEstimate<'_>) -> Result<Self> {
        let (bits, bits_hat, idx, idx_hat, f, f_hat, power) = match (truth, estimate) {
            (BlockTruth::Dpc { frame, tx_gain }, BlockEstimate::Dpc(det)) => {
                if self.key.scheme != Scheme::Dpc {
                    return Err(Error::invalid("DPC block recorded into a SOTA record"));
                }
                (
                    frame.bits(),
                    &det.bits_hat,
                    frame.data_index(),
                    det.v_hat_index.as_slice(),
                    frame.target(),
                    det.f_hat,
                    frame.mean_tx_power() * tx_gain * tx_gain,
                )
            }
            (BlockTruth::Sota { frame }, BlockEstimate::Sota(det)) => {
                if self.key.scheme != Scheme::Sota {
                    return Err(Error::invalid("SOTA block recorded into a DPC record"));
                }
                (
                    frame.bits(),
                    &det.bits_hat,
                    frame.data_index(),
                    det.d_hat_index.as_slice(),
                    frame.target(),
                    det.f_hat,
                    frame.mean_tx_power(),
                )
            }
            _ => return Err(Error::invalid("truth and estimate belong to different schemes")),
        };
        if idx.len() != idx_hat.len() {
            return Err(Error::invalid("symbol count mismatch"));
        }
        let err2 = (f_hat - f).norm_sqr();
        let mut out = self.clone();
        out.trials += 1;
        out.bit_errors += bits.count_differences(bits_hat)?;
        out.total_bits += bits.len() as u64;
        out.symbol_errors += idx.iter().zip(idx_hat).filter(|(a, b)| a != b).count() as u64;
        out.total_symbols += idx.len() as u64;
        out.mse_sum += err2;
        out.mse_sq_sum += err2 * err2;
        out.tx_power_sum += power;
        Ok(out)
    }

    /// Sums two records of the same cell.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.key != other.key {
            return Err(Error::invalid(format!(
                "cannot merge records of different cells: {:?} vs {:?}",
                self.key, other.key
            )));
        }
        Ok(Self {
            key: self.key,
            trials: self.trials + other.trials,
            bit_errors: self.bit_errors + other.bit_errors,
            total_bits: self.total_bits + other.total_bits,
            symbol_errors: self.symbol_errors + other.symbol_errors,
            total_symbols: self.total_symbols + other.total_symbols,
            mse_sum: self.mse_sum + other.mse_sum,
            mse_sq_sum: self.mse_sq_sum + other.mse_sq_sum,
            tx_power_sum: self.tx_power_sum + other.tx_power_sum,
        })
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{ComplexSample, LatticeConfig};
    use crate::receiver::DpcReceiver;
    use crate::transmitter::{BitTensor, DpcEncoder};
    use crate::channel::ChannelRealization;
    use crate::linalg::CMatrix;

    fn key(scheme: Scheme) -> CellKey {
        CellKey {
            scheme,
            snr_db: 10.0,
            users: 2,
            antennas: 5,
            slots: 5,
            m_points: 4,
            delta: 2.0,
        }
    }

    fn perfect_block() -> (Frame, DetectionResult) {
        let cfg = LatticeConfig::qpsk();
        let enc = DpcEncoder::new(cfg);
        let mut bits = BitTensor::zeros(2, 5, 2);
        for t in 0..5 {
            bits.set_symbol(0, t, (t % 4) as u32);
            bits.set_symbol(1, t, ((t + 1) % 4) as u32);
        }
        let frame = enc.build_frame_indexed(&bits, &[0, 3]).unwrap();
        let h = CMatrix::from_fn(5, 2, |n, k| {
            ComplexSample::new((n + 1) as f64, if k == 0 { 0.5 } else { -(n as f64) })
        });
        let ch = ChannelRealization::new(h, 0.0).unwrap();
        let y = ch.h().matmul(frame.encoded()).unwrap();
        let det = DpcReceiver::new(cfg).detect(&y, &ch).unwrap();
        (frame, det)
    }

    #[test]
    fn perfect_block_counts() {
        let (frame, det) = perfect_block();
        let rec = MetricsRecord::empty(key(Scheme::Dpc))
            .record_block(BlockTruth::Dpc { frame: &frame, tx_gain: 1.0 }, BlockEstimate::Dpc(&det))
            .unwrap();
        assert_eq!(rec.trials, 1);
        assert_eq!(rec.bit_errors, 0);
        assert_eq!(rec.total_bits, 20);
        assert_eq!(rec.symbol_errors, 0);
        assert!(rec.mse_sum < 1e-24);
        assert!(rec.tx_power_sum > 0.0);
    }

    #[test]
    fn single_bit_error_and_function_offset() {
        let (frame, mut det) = perfect_block();
        // flip the low bit of user 1, slot 2
        let label = det.bits_hat.label(1, 2) ^ 1;
        det.bits_hat.set_symbol(1, 2, label);
        det.v_hat_index[5 + 2] = usize::MAX;
        det.f_hat = frame.target() + ComplexSample::new(0.1, 0.0);
        let rec = MetricsRecord::empty(key(Scheme::Dpc))
            .record_block(BlockTruth::Dpc { frame: &frame, tx_gain: 1.0 }, BlockEstimate::Dpc(&det))
            .unwrap();
        assert_eq!(rec.bit_errors, 1);
        assert!((rec.ber() - 1.0 / 20.0).abs() < 1e-15);
        assert_eq!(rec.symbol_errors, 1);
        assert!((rec.mse_sum - 0.01).abs() < 1e-12);
    }

    #[test]
    fn scheme_mismatch_is_rejected() {
        let (frame, det) = perfect_block();
        let rec = MetricsRecord::empty(key(Scheme::Sota));
        assert!(rec
            .record_block(BlockTruth::Dpc { frame: &frame, tx_gain: 1.0 }, BlockEstimate::Dpc(&det))
            .is_err());
    }

    #[test]
    fn merge_identity_and_commutativity() {
        let (frame, det) = perfect_block();
        let empty = MetricsRecord::empty(key(Scheme::Dpc));
        let a = empty
            .record_block(BlockTruth::Dpc { frame: &frame, tx_gain: 1.0 }, BlockEstimate::Dpc(&det))
            .unwrap();
        let mut b = a.clone();
        b.bit_errors = 3;
        b.mse_sum = 0.25;
        assert_eq!(a.merge(&empty).unwrap(), a);
        assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
        let mut other = MetricsRecord::empty(key(Scheme::Dpc));
        other.key.snr_db = 15.0;
        assert!(a.merge(&other).is_err());
    }

    #[test]
    fn ratios_are_bounded() {
        let mut r = MetricsRecord::empty(key(Scheme::Sota));
        assert_eq!((r.ber(), r.ser(), r.mse(), r.ci95_ber()), (0.0, 0.0, 0.0, 0.0));
        r.trials = 10;
        r.bit_errors = 50;
        r.total_bits = 200;
        r.mse_sum = 1.0;
        r.mse_sq_sum = 0.5;
        assert!((r.ber() - 0.25).abs() < 1e-15);
        assert!(r.ci95_ber() > 0.0 && r.ci95_mse() > 0.0);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("dpc".parse::<Scheme>().unwrap(), Scheme::Dpc);
        assert_eq!(" SOTA ".parse::<Scheme>().unwrap(), Scheme::Sota);
        assert!("gabp".parse::<Scheme>().is_err());
    }
}
