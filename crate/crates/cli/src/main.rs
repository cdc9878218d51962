//! `dirtypaper-sim`: Monte Carlo BER / function-MSE sweeps for the
//! dirty-paper scheme and the superposition benchmark.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use dirtypaper::sim::{emit_results, parse_snr_grid, run_sweep_with_progress, format_sig};
use dirtypaper::SimConfig;

#[derive(Debug, Parser)]
#[command(name = "dirtypaper-sim", version, about)]
struct Args {
    /// Configuration file with one `key = value` per line.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory for results.csv and manifest.json.
    #[arg(long, default_value = "results")]
    out: PathBuf,

    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,

    /// Comma-separated subset of DPC,SOTA.
    #[arg(long)]
    schemes: Option<String>,

    /// SNR grid in dB as START:STOP:STEP (inclusive) or a comma list.
    #[arg(long)]
    snr: Option<String>,

    /// Blocks per (scheme, T, SNR) cell.
    #[arg(long)]
    trials: Option<u64>,

    /// Slots per block; a comma list sweeps several values.
    #[arg(long = "t-slots")]
    t_slots: Option<String>,
}

fn build_config(args: &Args) -> Result<SimConfig> {
    let mut cfg = match &args.config {
        Some(path) => SimConfig::from_kv_file(path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(s) = &args.schemes {
        cfg.set("schemes", s)?;
    }
    if let Some(s) = &args.snr {
        cfg.snr_grid_db = parse_snr_grid(s)?;
    }
    if let Some(n) = args.trials {
        cfg.trials_per_point = n;
    }
    if let Some(t) = &args.t_slots {
        cfg.set("t_slots", t)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: Args) -> Result<()> {
    let cfg = build_config(&args)?;
    let records = run_sweep_with_progress(&cfg, |rec, i, n| {
        eprintln!(
            "[{:>3}/{n}] {:<4} T={:<3} snr={:>6} dB  ber={:.3e}  mse={:.3e}",
            i + 1,
            rec.key.scheme,
            rec.key.slots,
            format_sig(rec.key.snr_db, 4),
            rec.ber(),
            rec.mse()
        );
    })?;
    let (csv, manifest) = emit_results(&records, &cfg, &args.out)
        .with_context(|| format!("writing results to {}", args.out.display()))?;

    println!(
        "{:<6} {:>4} {:>8} {:>12} {:>12} {:>12} {:>10}",
        "scheme", "T", "snr_db", "ber", "ser", "mse", "tx_power"
    );
    for r in &records {
        println!(
            "{:<6} {:>4} {:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.4}",
            r.key.scheme.as_str(),
            r.key.slots,
            format_sig(r.key.snr_db, 6),
            r.ber(),
            r.ser(),
            r.mse(),
            r.tx_power()
        );
    }
    println!("wrote {} and {}", csv.display(), manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
