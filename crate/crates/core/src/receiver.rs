//! Dirty-paper receive side.
//!
//! Per slot, an LMMSE estimate of the transmit vector is folded back into the
//! coarse cell, snapped to the fine grid and folded again, which strips the
//! unknown computing symbols. The computing vector is then found by an
//! exhaustive maximum-likelihood search over all `M^K` candidates, re-encoding
//! the detected data against each candidate.

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::lattice::{ComplexSample, Constellation, LatticeConfig};
use crate::linalg::{CMatrix, Cholesky};
use crate::transmitter::{BitTensor, DpcEncoder};

/// Default cap on the number of ML candidates `M^K`.
pub const DEFAULT_ML_LIMIT: u128 = 1_000_000;

/// `G = (HᴴH + σ_w² I)⁻¹ Hᴴ`, shared by all slots of a block.
#[derive(Debug, Clone)]
pub struct LmmseFilter {
    g: CMatrix,
}

impl LmmseFilter {
    pub fn new(h: &CMatrix, noise_var: f64) -> Result<Self> {
        if !noise_var.is_finite() || noise_var < 0.0 {
            return Err(Error::invalid(format!(
                "noise variance must be finite and >= 0, got {noise_var}"
            )));
        }
        let chol = Cholesky::factor(&h.gram_shifted(noise_var))?;
        Ok(Self {
            g: chol.solve_matrix(&h.adjoint()),
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.g
    }

    pub fn apply(&self, y: &[ComplexSample]) -> Vec<ComplexSample> {
        self.g.mul_vec(y)
    }
}

/// `x̂ = (HᴴH + σ_w² I_K)⁻¹ Hᴴ y`.
pub fn lmmse_estimate(
    y: &[ComplexSample],
    h: &CMatrix,
    noise_var: f64,
) -> Result<Vec<ComplexSample>> {
    if y.len() != h.rows() {
        return Err(Error::invalid(format!(
            "observation has {} entries, channel has {} antennas",
            y.len(),
            h.rows()
        )));
    }
    Ok(LmmseFilter::new(h, noise_var)?.apply(y))
}

/// Decisions for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    pub index: Vec<usize>,
    pub symbols: Vec<ComplexSample>,
    pub labels: Vec<u32>,
}

/// Best computing vector and the attained ML objective.
#[derive(Debug, Clone, PartialEq)]
pub struct MlEstimate {
    pub index: Vec<usize>,
    pub s_hat: Vec<ComplexSample>,
    pub objective: f64,
    pub candidates: u128,
}

/// Receiver output for one block.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub v_hat: CMatrix,
    pub v_hat_index: Vec<usize>,
    pub bits_hat: BitTensor,
    pub s_hat: Vec<ComplexSample>,
    pub s_hat_index: Vec<usize>,
    pub f_hat: ComplexSample,
    pub ml_objective: f64,
}

#[derive(Debug, Clone)]
pub struct DpcReceiver {
    encoder: DpcEncoder,
    ml_limit: u128,
}

impl DpcReceiver {
    pub fn new(cfg: LatticeConfig) -> Self {
        Self {
            encoder: DpcEncoder::new(cfg),
            ml_limit: DEFAULT_ML_LIMIT,
        }
    }

    pub fn with_ml_limit(mut self, limit: u128) -> Self {
        self.ml_limit = limit;
        self
    }

    pub fn config(&self) -> &LatticeConfig {
        self.encoder.config()
    }

    pub fn data_constellation(&self) -> &Constellation {
        self.encoder.data_constellation()
    }

    pub fn computing_constellation(&self) -> &Constellation {
        self.encoder.computing_constellation()
    }

    /// `modL`, fine quantization, `modL`, then a hard decision on the data
    /// constellation.
    pub fn decode_data_slot(&self, x_hat: &[ComplexSample]) -> SlotDecision {
        let cfg = self.encoder.config();
        let data = self.encoder.data_constellation();
        let mut out = SlotDecision {
            index: Vec::with_capacity(x_hat.len()),
            symbols: Vec::with_capacity(x_hat.len()),
            labels: Vec::with_capacity(x_hat.len()),
        };
        for &x in x_hat {
            let z = cfg.modulo(x);
            let v = cfg.modulo(cfg.quantize(z));
            let (i, p) = data.hard_decide(v);
            out.index.push(i);
            out.symbols.push(p);
            out.labels.push(data.label(i));
        }
        out
    }

    /// Exhaustive search of
    /// `Σ_t ‖y_t − H(modL(v̂_t − s, Δ) + s)‖²` over `s ∈ Computing^K`.
    /// Candidates are visited in canonical order (user 0 is the most
    /// significant digit) and only a strictly smaller objective replaces the
    /// incumbent, so ties keep the lowest candidate index.
    pub fn ml_computing_estimate(
        &self,
        y: &CMatrix,
        h: &CMatrix,
        v_hat: &CMatrix,
    ) -> Result<MlEstimate> {
        let n_ant = h.rows();
        let users = h.cols();
        let slots = y.cols();
        if y.rows() != n_ant || v_hat.rows() != users || v_hat.cols() != slots {
            return Err(Error::invalid(format!(
                "inconsistent shapes: Y {}x{}, H {}x{}, V̂ {}x{}",
                y.rows(),
                y.cols(),
                n_ant,
                users,
                v_hat.rows(),
                v_hat.cols()
            )));
        }
        let comp = self.encoder.computing_constellation();
        let m = comp.len();
        let candidates = (m as u128)
            .checked_pow(users as u32)
            .unwrap_or(u128::MAX);
        if candidates > self.ml_limit {
            return Err(Error::Capacity {
                candidates,
                limit: self.ml_limit,
            });
        }

        // contrib[k * m + j] holds h_k x_k(t; s_j) as an N x T matrix
        let mut contrib = Vec::with_capacity(users * m);
        for k in 0..users {
            for j in 0..m {
                let s = comp.point(j);
                contrib.push(CMatrix::from_fn(n_ant, slots, |n, t| {
                    let (_, x) = self.encoder.encode_unchecked(v_hat[(k, t)], s);
                    h[(n, k)] * x
                }));
            }
        }

        let mut digits = vec![0usize; users];
        let mut best_digits = digits.clone();
        let mut best = f64::INFINITY;
        let mut residual = vec![ComplexSample::new(0.0, 0.0); n_ant];
        for _ in 0..candidates {
            let mut objective = 0.0;
            for t in 0..slots {
                for (n, r) in residual.iter_mut().enumerate() {
                    *r = y[(n, t)];
                }
                for (k, &j) in digits.iter().enumerate() {
                    let cm = &contrib[k * m + j];
                    for (n, r) in residual.iter_mut().enumerate() {
                        *r -= cm[(n, t)];
                    }
                }
                objective += residual.iter().map(|r| r.norm_sqr()).sum::<f64>();
            }
            if objective < best {
                best = objective;
                best_digits.copy_from_slice(&digits);
            }
            // advance the odometer, last user fastest
            for d in digits.iter_mut().rev() {
                *d += 1;
                if *d < m {
                    break;
                }
                *d = 0;
            }
        }
        Ok(MlEstimate {
            s_hat: best_digits.iter().map(|&j| comp.point(j)).collect(),
            index: best_digits,
            objective: best,
            candidates,
        })
    }

    /// Full block detection: LMMSE + lattice decoding per slot, then the ML
    /// computing-vector search and the sum function.
    pub fn detect(&self, y: &CMatrix, ch: &ChannelRealization) -> Result<DetectionResult> {
        let h = ch.h();
        if y.rows() != h.rows() {
            return Err(Error::invalid(format!(
                "received block has {} rows, channel has {} antennas",
                y.rows(),
                h.rows()
            )));
        }
        let users = h.cols();
        let slots = y.cols();
        let filter = LmmseFilter::new(h, ch.noise_var())?;
        let mut v_hat = CMatrix::zeros(users, slots);
        let mut v_hat_index = vec![0; users * slots];
        let mut bits_hat = BitTensor::zeros(users, slots, self.config().rate_bits() as usize);
        for t in 0..slots {
            let x_hat = filter.apply(&y.column(t));
            let dec = self.decode_data_slot(&x_hat);
            for k in 0..users {
                v_hat[(k, t)] = dec.symbols[k];
                v_hat_index[k * slots + t] = dec.index[k];
                bits_hat.set_symbol(k, t, dec.labels[k]);
            }
        }
        let ml = self.ml_computing_estimate(y, h, &v_hat)?;
        Ok(DetectionResult {
            v_hat,
            v_hat_index,
            bits_hat,
            f_hat: evaluate_function(&ml.s_hat),
            s_hat: ml.s_hat,
            s_hat_index: ml.index,
            ml_objective: ml.objective,
        })
    }
}

/// Free-function form of [`DpcReceiver::decode_data_slot`], returning the
/// detected symbols and their bit strings.
pub fn decode_data_slot(
    x_hat: &[ComplexSample],
    cfg: &LatticeConfig,
) -> (Vec<ComplexSample>, Vec<Vec<u8>>) {
    let rx = DpcReceiver::new(*cfg);
    let dec = rx.decode_data_slot(x_hat);
    let width = cfg.rate_bits();
    let bits = dec
        .labels
        .iter()
        .map(|&l| crate::lattice::label_bits(l, width))
        .collect();
    (dec.symbols, bits)
}

/// Free-function form of [`DpcReceiver::ml_computing_estimate`] with the
/// default candidate limit.
pub fn ml_computing_estimate(
    y: &CMatrix,
    h: &CMatrix,
    v_hat: &CMatrix,
    cfg: &LatticeConfig,
) -> Result<MlEstimate> {
    DpcReceiver::new(*cfg).ml_computing_estimate(y, h, v_hat)
}

/// Arithmetic sum with identity pre- and post-processing.
pub fn evaluate_function(s_hat: &[ComplexSample]) -> ComplexSample {
    s_hat.iter().sum()
}
