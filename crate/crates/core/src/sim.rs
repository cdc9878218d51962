//! Seeded Monte Carlo sweeps over SNR for both schemes, CSV and manifest
//! output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::Superposition;
use crate::channel::{block_rng, draw_channel, snr_to_noise_var, transmit, ChannelRealization};
use crate::error::{Error, Result};
use crate::lattice::LatticeConfig;
use crate::metrics::{BlockEstimate, BlockTruth, CellKey, MetricsRecord, Scheme};
use crate::receiver::{DpcReceiver, DEFAULT_ML_LIMIT};
use crate::transmitter::{BitTensor, DpcEncoder};

/// Blocks folded sequentially per work item. Fixed so that the reduction
/// tree does not depend on the number of workers.
const CHUNK_BLOCKS: u64 = 2048;

pub const CSV_HEADER: &str = "scheme,snr_db,K,N,T,M,delta,trials,ber,ci95_ber,ser,mse,tx_power,seed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub users: usize,
    pub antennas: usize,
    /// Block lengths to sweep; each gets its own set of cells.
    pub t_slots: Vec<usize>,
    pub m_points: usize,
    pub delta: f64,
    pub snr_grid_db: Vec<f64>,
    pub trials_per_point: u64,
    pub master_seed: u64,
    pub schemes: Vec<Scheme>,
    pub normalize_tx_power: bool,
    /// Worker threads; 0 uses all available cores. Never affects results.
    pub workers: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            users: 2,
            antennas: 5,
            t_slots: vec![5, 10],
            m_points: 4,
            delta: 2.0,
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            trials_per_point: 100_000,
            master_seed: 1,
            schemes: vec![Scheme::Dpc, Scheme::Sota],
            normalize_tx_power: false,
            workers: 0,
        }
    }
}

impl SimConfig {
    pub fn lattice(&self) -> Result<LatticeConfig> {
        LatticeConfig::new(self.delta, self.m_points).map_err(|e| {
            let field = if self.delta.is_finite() && self.delta > 0.0 { "m" } else { "delta" };
            Error::config(field, e.to_string())
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::config("k", "need at least one user"));
        }
        if self.antennas == 0 {
            return Err(Error::config("n", "need at least one antenna"));
        }
        if self.t_slots.is_empty() || self.t_slots.contains(&0) {
            return Err(Error::config("t_slots", "need one or more positive block lengths"));
        }
        self.lattice()?;
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("snr_grid_db", "SNR values must be finite"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("schemes", "select at least one scheme"));
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return Err(Error::config("schemes", format!("duplicate scheme {s}")));
            }
        }
        if self.schemes.contains(&Scheme::Dpc) {
            let candidates = (self.m_points as u128).checked_pow(self.users as u32);
            if candidates.is_none_or(|c| c > DEFAULT_ML_LIMIT) {
                return Err(Error::Capacity {
                    candidates: candidates.unwrap_or(u128::MAX),
                    limit: DEFAULT_ML_LIMIT,
                });
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_kv_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_kv_str(&text)
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
        }
        match key {
            "k" | "users" => self.users = num(key, value)?,
            "n" | "antennas" => self.antennas = num(key, value)?,
            "t_slots" | "t" => {
                self.t_slots = split_list(value)
                    .map(|v| num(key, v))
                    .collect::<Result<_>>()?
            }
            "m" | "m_points" => self.m_points = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "snr_grid_db" | "snr" => self.snr_grid_db = parse_snr_grid(value)?,
            "trials_per_point" | "trials" => self.trials_per_point = num(key, value)?,
            "master_seed" | "seed" => self.master_seed = num(key, value)?,
            "schemes" => {
                self.schemes = split_list(value)
                    .map(|v| v.parse().map_err(|e: Error| Error::config(key, e.to_string())))
                    .collect::<Result<_>>()?
            }
            "normalize_tx_power" => {
                self.normalize_tx_power = match value.to_ascii_lowercase().as_str() {
                    "true" | "1" | "yes" | "on" => true,
                    "false" | "0" | "no" | "off" => false,
                    _ => return Err(Error::config(key, format!("not a boolean: `{value}`"))),
                }
            }
            "workers" => self.workers = num(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Serializes to the `key = value` format read by [`Self::from_kv_str`].
    pub fn to_kv_string(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "k = {}", self.users);
        let _ = writeln!(s, "n = {}", self.antennas);
        let _ = writeln!(s, "t_slots = {}", join(self.t_slots.iter().map(|t| t.to_string()).collect()));
        let _ = writeln!(s, "m = {}", self.m_points);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "snr_grid_db = {}", join(self.snr_grid_db.iter().map(|x| x.to_string()).collect()));
        let _ = writeln!(s, "trials_per_point = {}", self.trials_per_point);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "schemes = {}", join(self.schemes.iter().map(|x| x.to_string()).collect()));
        let _ = writeln!(s, "normalize_tx_power = {}", self.normalize_tx_power);
        let _ = writeln!(s, "workers = {}", self.workers);
        s
    }

    /// Reads the `config` object back out of a `manifest.json`.
    pub fn from_manifest_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Manifest {
            config: SimConfig,
        }
        serde_json::from_str::<Manifest>(text)
            .map(|m| m.config)
            .map_err(|e| Error::config("manifest", e.to_string()))
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|v| !v.is_empty())
}

/// Parses either a comma-separated list or an inclusive `START:STOP:STEP`
/// range.
pub fn parse_snr_grid(value: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::config("snr_grid_db", msg);
    if value.contains(':') {
        let parts: Vec<&str> = value.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad(format!("expected START:STOP:STEP, got `{value}`")));
        }
        let p = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("cannot parse `{s}`")));
        let (start, stop, step) = (p(parts[0])?, p(parts[1])?, p(parts[2])?);
        if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
            return Err(bad(format!("invalid range `{value}`")));
        }
        let count = ((stop - start) / step + 1e-9).floor();
        if count < 0.0 {
            return Ok(Vec::new());
        }
        return Ok((0..=count as u64).map(|i| start + i as f64 * step).collect());
    }
    split_list(value)
        .map(|v| v.parse::<f64>().map_err(|_| bad(format!("cannot parse `{v}`"))))
        .collect()
}

/// Identifies the random streams of one `(scheme, T, SNR index)` cell.
fn cell_id(scheme: Scheme, slots: usize, snr_index: usize) -> u64 {
    let s = match scheme {
        Scheme::Dpc => 1u64,
        Scheme::Sota => 2u64,
    };
    s | (slots as u64) << 8 | (snr_index as u64) << 40
}

/// Shared per-sweep state for simulating blocks.
struct BlockSim {
    users: usize,
    antennas: usize,
    lattice: LatticeConfig,
    encoder: DpcEncoder,
    receiver: DpcReceiver,
    baseline: Superposition,
    tx_gain: f64,
}

impl BlockSim {
    fn new(cfg: &SimConfig) -> Result<Self> {
        let lattice = cfg.lattice()?;
        let encoder = DpcEncoder::new(lattice);
        let tx_gain = if cfg.normalize_tx_power {
            1.0 / encoder.expected_tx_power().sqrt()
        } else {
            1.0
        };
        Ok(Self {
            users: cfg.users,
            antennas: cfg.antennas,
            lattice,
            encoder,
            receiver: DpcReceiver::new(lattice),
            baseline: Superposition::new(lattice),
            tx_gain,
        })
    }

    fn draw_payload<R: Rng>(&self, rng: &mut R, slots: usize) -> Result<(BitTensor, Vec<usize>)> {
        let width = self.lattice.rate_bits() as usize;
        let bits = (0..self.users * slots * width)
            .map(|_| rng.random::<bool>() as u8)
            .collect();
        let bits = BitTensor::new(self.users, slots, width, bits)?;
        let s_index = (0..self.users)
            .map(|_| rng.random_range(0..self.lattice.m_points()))
            .collect();
        Ok((bits, s_index))
    }

    fn run_block(
        &self,
        rec: &MetricsRecord,
        seed: u64,
        cell: u64,
        block: u64,
        noise_var: f64,
    ) -> Result<MetricsRecord> {
        let slots = rec.key.slots;
        let mut rng = block_rng(seed, cell, block);
        let (bits, s_index) = self.draw_payload(&mut rng, slots)?;
        let ch = draw_channel(&mut rng, self.antennas, self.users, noise_var)?.with_block_id(block);
        match rec.key.scheme {
            Scheme::Dpc => {
                let frame = self.encoder.build_frame_indexed(&bits, &s_index)?;
                let x = frame.encoded().scale(self.tx_gain);
                let y = transmit(&x, &ch, &mut rng)?.y;
                let effective = ChannelRealization::new(ch.h().scale(self.tx_gain), noise_var)?;
                let det = self.receiver.detect(&y, &effective)?;
                rec.record_block(
                    BlockTruth::Dpc {
                        frame: &frame,
                        tx_gain: self.tx_gain,
                    },
                    BlockEstimate::Dpc(&det),
                )
            }
            Scheme::Sota => {
                let frame = self.baseline.encode_indexed(&bits, &s_index)?;
                let y = transmit(frame.encoded(), &ch, &mut rng)?.y;
                let det = self.baseline.detect(&y, &ch)?;
                rec.record_block(BlockTruth::Sota { frame: &frame }, BlockEstimate::Sota(&det))
            }
        }
    }
}

/// One sweep cell: `(scheme, T, SNR)`.
#[derive(Debug, Clone, Copy)]
struct Cell {
    key: CellKey,
    id: u64,
}

fn cells(cfg: &SimConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &slots in &cfg.t_slots {
        for &scheme in &cfg.schemes {
            for (i, &snr_db) in cfg.snr_grid_db.iter().enumerate() {
                out.push(Cell {
                    key: CellKey {
                        scheme,
                        snr_db,
                        users: cfg.users,
                        antennas: cfg.antennas,
                        slots,
                        m_points: cfg.m_points,
                        delta: cfg.delta,
                    },
                    id: cell_id(scheme, slots, i),
                });
            }
        }
    }
    out
}

/// Runs blocks `range` of one cell sequentially.
fn run_chunk(
    sim: &BlockSim,
    cfg: &SimConfig,
    cell: &Cell,
    range: std::ops::Range<u64>,
) -> Result<MetricsRecord> {
    let noise_var = snr_to_noise_var(cell.key.snr_db);
    let mut rec = MetricsRecord::empty(cell.key);
    for b in range {
        rec = sim.run_block(&rec, cfg.master_seed, cell.id, b, noise_var)?;
    }
    Ok(rec)
}

/// Runs the sweep; `progress` is called after each finished cell with
/// `(record, cell index, cell count)`.
pub fn run_sweep_with_progress(
    cfg: &SimConfig,
    mut progress: impl FnMut(&MetricsRecord, usize, usize),
) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    if cfg.trials_per_point == 0 {
        return Ok(Vec::new());
    }
    let sim = BlockSim::new(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let cells = cells(cfg);
    let n_chunks = cfg.trials_per_point.div_ceil(CHUNK_BLOCKS);
    let mut out = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let shards: Vec<MetricsRecord> = pool.install(|| {
            (0..n_chunks)
                .into_par_iter()
                .map(|c| {
                    let start = c * CHUNK_BLOCKS;
                    let end = (start + CHUNK_BLOCKS).min(cfg.trials_per_point);
                    run_chunk(&sim, cfg, cell, start..end)
                })
                .collect::<Result<_>>()
        })?;
        let mut rec = MetricsRecord::empty(cell.key);
        for shard in &shards {
            rec = rec.merge(shard)?;
        }
        progress(&rec, i, cells.len());
        out.push(rec);
    }
    Ok(out)
}

pub fn run_sweep(cfg: &SimConfig) -> Result<Vec<MetricsRecord>> {
    run_sweep_with_progress(cfg, |_, _, _| {})
}

/// Formats like C's `%.{digits}g`: `digits` significant digits, trailing
/// zeros removed, exponent form outside `[1e-5, 10^digits)`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Renders the results table.
pub fn results_csv(records: &[MetricsRecord], seed: u64) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let k = &r.key;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            k.scheme,
            format_sig(k.snr_db, 10),
            k.users,
            k.antennas,
            k.slots,
            k.m_points,
            format_sig(k.delta, 10),
            r.trials,
            format_sig(r.ber(), 10),
            format_sig(r.ci95_ber(), 10),
            format_sig(r.ser(), 10),
            format_sig(r.mse(), 10),
            format_sig(r.tx_power(), 10),
            seed
        );
    }
    out
}

/// Builds the run manifest: configuration, tool version, timestamp, and
/// the transmit power accounting for both schemes.
pub fn manifest_json(cfg: &SimConfig) -> Result<serde_json::Value> {
    let lattice = cfg.lattice()?;
    let encoder = DpcEncoder::new(lattice);
    let baseline = Superposition::new(lattice);
    let dpc_power = encoder.expected_tx_power();
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp_unix": timestamp,
        "config": cfg,
        "snr_definition": "SNR = 1 / noise variance, referenced to unit nominal per-user transmit power",
        "mse_definition": "per-block |f_hat - f|^2 of the unnormalized sum over K users, averaged over blocks",
        "rng": "ChaCha8 keyed by (master_seed, scheme, T, snr index); stream id = block index; normals via ziggurat",
        "power_accounting": {
            "nominal_per_user": baseline.data_power() + baseline.computing_power(),
            "data_power": baseline.data_power(),
            "computing_power": baseline.computing_power(),
            "dpc_enumerated_per_user": dpc_power,
            "dpc_excess_over_nominal": dpc_power - (baseline.data_power() + baseline.computing_power()),
            "dpc_tx_gain": if cfg.normalize_tx_power { 1.0 / dpc_power.sqrt() } else { 1.0 },
            "sota_enumerated_per_user": baseline.data_power() + baseline.computing_power(),
        },
    }))
}

/// Writes `results.csv` and `manifest.json` into `out_dir`.
pub fn emit_results(
    records: &[MetricsRecord],
    cfg: &SimConfig,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let csv_path = out_dir.join("results.csv");
    fs::write(&csv_path, results_csv(records, cfg.master_seed)).map_err(io(&csv_path))?;
    let manifest_path = out_dir.join("manifest.json");
    let manifest = serde_json::to_string_pretty(&manifest_json(cfg)?)
        .map_err(|e| Error::invalid(e.to_string()))?;
    fs::write(&manifest_path, manifest + "\n").map_err(io(&manifest_path))?;
    Ok((csv_path, manifest_path))
}
