//! Block Rayleigh fading SIMO uplink and per-block random streams.
//!
//! Gaussian variates come from `rand_distr::StandardNormal` (ziggurat) driven
//! by ChaCha8. Every block owns its own stream: the ChaCha key is derived from
//! the master seed and the sweep cell, and the ChaCha stream id is the block
//! index, so a block's draws do not depend on which worker runs it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lattice::ComplexSample;
use crate::linalg::CMatrix;

/// One fading block: `H` is held for all `T` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    h: CMatrix,
    noise_var: f64,
    block_id: u64,
}

impl ChannelRealization {
    /// Wraps a given channel matrix; used for deterministic test setups.
    pub fn new(h: CMatrix, noise_var: f64) -> Result<Self> {
        if !noise_var.is_finite() || noise_var < 0.0 {
            return Err(Error::invalid(format!(
                "noise variance must be finite and >= 0, got {noise_var}"
            )));
        }
        Ok(Self {
            h,
            noise_var,
            block_id: 0,
        })
    }

    pub fn with_block_id(mut self, block_id: u64) -> Self {
        self.block_id = block_id;
        self
    }

    /// `N x K` channel matrix.
    pub fn h(&self) -> &CMatrix {
        &self.h
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn block_id(&self) -> u64 {
        self.block_id
    }

    pub fn antennas(&self) -> usize {
        self.h.rows()
    }

    pub fn users(&self) -> usize {
        self.h.cols()
    }
}

/// Received `N x T` matrix `Y = HX + W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedBlock {
    pub y: CMatrix,
}

/// Circularly symmetric complex Gaussian sample with the given variance.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> ComplexSample {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    ComplexSample::new(scale * re, scale * im)
}

/// Draws an `N x K` matrix of iid `CN(0, 1)` gains.
pub fn draw_channel<R: Rng + ?Sized>(
    rng: &mut R,
    antennas: usize,
    users: usize,
    noise_var: f64,
) -> Result<ChannelRealization> {
    if antennas == 0 || users == 0 {
        return Err(Error::invalid(format!(
            "need N >= 1 and K >= 1, got N={antennas}, K={users}"
        )));
    }
    let h = CMatrix::from_fn(antennas, users, |_, _| complex_gaussian(rng, 1.0));
    ChannelRealization::new(h, noise_var)
}

/// Passes a `K x T` transmit matrix through the channel and adds AWGN of
/// variance `σ_w²` per complex entry.
pub fn transmit<R: Rng + ?Sized>(
    x: &CMatrix,
    ch: &ChannelRealization,
    rng: &mut R,
) -> Result<ReceivedBlock> {
    if x.rows() != ch.users() {
        return Err(Error::invalid(format!(
            "transmit matrix has {} rows, channel has {} users",
            x.rows(),
            ch.users()
        )));
    }
    let mut y = ch.h.matmul(x)?;
    for r in 0..y.rows() {
        for c in 0..y.cols() {
            y[(r, c)] += complex_gaussian(rng, ch.noise_var);
        }
    }
    Ok(ReceivedBlock { y })
}

/// `σ_w² = 10^(-SNR/10)`, with SNR referenced to unit per-user transmit power.
pub fn snr_to_noise_var(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random stream for block `block` of the sweep cell identified by `cell`.
pub fn block_rng(master_seed: u64, cell: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master_seed ^ splitmix64(cell)));
    rng.set_stream(block);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> ComplexSample {
        ComplexSample::new(re, im)
    }

    #[test]
    fn channel_statistics() {
        let mut rng = block_rng(7, 0, 0);
        let draws = 1_000_000 / 10;
        let mut power = 0.0;
        let mut mean = c(0.0, 0.0);
        let mut count = 0.0;
        for _ in 0..draws {
            let ch = draw_channel(&mut rng, 5, 2, 0.0).unwrap();
            for &h in ch.h().as_slice() {
                power += h.norm_sqr();
                mean += h;
                count += 1.0;
            }
        }
        assert!((power / count - 1.0).abs() < 0.01, "{}", power / count);
        assert!((mean.re / count).abs() < 0.01);
        assert!((mean.im / count).abs() < 0.01);
    }

    #[test]
    fn same_stream_same_channel() {
        let a = draw_channel(&mut block_rng(1, 2, 3), 5, 2, 0.1).unwrap();
        let b = draw_channel(&mut block_rng(1, 2, 3), 5, 2, 0.1).unwrap();
        let other = draw_channel(&mut block_rng(1, 2, 4), 5, 2, 0.1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
        assert!(draw_channel(&mut block_rng(1, 2, 3), 0, 2, 0.1).is_err());
    }

    #[test]
    fn identity_channel_without_noise() {
        let x = CMatrix::from_rows(&[vec![c(0.5, 0.5), c(-1.5, 0.5)], vec![c(1.0, 0.0), c(0.0, -0.5)]]);
        let ch = ChannelRealization::new(CMatrix::identity(2), 0.0).unwrap();
        let y = transmit(&x, &ch, &mut block_rng(0, 0, 0)).unwrap().y;
        assert_eq!(y, x);
    }

    #[test]
    fn all_ones_channel() {
        let h = CMatrix::from_fn(4, 1, |_, _| c(1.0, 0.0));
        let ch = ChannelRealization::new(h, 0.0).unwrap();
        let x = CMatrix::from_fn(1, 1, |_, _| c(1.0, 0.0));
        let y = transmit(&x, &ch, &mut block_rng(0, 0, 0)).unwrap().y;
        assert_eq!(y.column(0), vec![c(1.0, 0.0); 4]);
    }

    #[test]
    fn pure_noise_power() {
        let h = CMatrix::from_fn(5, 2, |_, _| c(1.0, 0.0));
        let ch = ChannelRealization::new(h, 1.0).unwrap();
        let x = CMatrix::zeros(2, 1000);
        let y = transmit(&x, &ch, &mut block_rng(3, 0, 0)).unwrap().y;
        let p = y.as_slice().iter().map(|v| v.norm_sqr()).sum::<f64>() / 5000.0;
        // 5000 exponential(1) samples: std of mean ~ 0.014
        assert!((p - 1.0).abs() < 0.06, "{p}");
    }

    #[test]
    fn noiseless_transmission_is_linear() {
        let mut rng = block_rng(11, 0, 0);
        let ch = draw_channel(&mut rng, 5, 2, 0.0).unwrap();
        let x1 = CMatrix::from_fn(2, 3, |_, _| complex_gaussian(&mut rng, 1.0));
        let x2 = CMatrix::from_fn(2, 3, |_, _| complex_gaussian(&mut rng, 1.0));
        let sum = transmit(&x1.add(&x2).unwrap(), &ch, &mut rng).unwrap().y;
        let parts = transmit(&x1, &ch, &mut rng)
            .unwrap()
            .y
            .add(&transmit(&x2, &ch, &mut rng).unwrap().y)
            .unwrap();
        assert!(sum.max_abs_diff(&parts) <= 1e-12);
    }

    #[test]
    fn noise_is_reproducible() {
        let ch = ChannelRealization::new(CMatrix::identity(2), 0.3).unwrap();
        let x = CMatrix::zeros(2, 4);
        let a = transmit(&x, &ch, &mut block_rng(5, 1, 9)).unwrap();
        let b = transmit(&x, &ch, &mut block_rng(5, 1, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_and_noise_checks() {
        let ch = ChannelRealization::new(CMatrix::identity(2), 0.0).unwrap();
        assert!(transmit(&CMatrix::zeros(3, 1), &ch, &mut block_rng(0, 0, 0)).is_err());
        assert!(ChannelRealization::new(CMatrix::identity(2), -1.0).is_err());
    }

    #[test]
    fn snr_conversion() {
        assert_eq!(snr_to_noise_var(0.0), 1.0);
        assert!((snr_to_noise_var(10.0) - 0.1).abs() < 1e-15);
        assert!((snr_to_noise_var(20.0) - 0.01).abs() < 1e-15);
    }
}
