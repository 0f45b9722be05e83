//! Monte Carlo sweeps over i.i.d. standard normal channels.
//!
//! Each trial owns a ChaCha stream selected by `(seed, trial)`. The channel
//! is drawn relay by relay, so the draw for `M` relays is a prefix of the
//! draw for any larger `M`, and every SNR point of a trial sees the same
//! channel. Results are reduced in trial order, which makes the output
//! independent of the worker count.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{build_family, TerminationPolicy};
use crate::engine;
use crate::error::{Error, Result};
use crate::game::EconParams;
use crate::io::format_sig;
use crate::model::{ChannelInstance, RateRequirements};

/// Environment variable capping the sweep's worker threads.
pub const THREADS_ENV: &str = "CNF_THREADS";

pub const CSV_HEADER: [&str; 10] = [
    "M",
    "snr_db",
    "avg_sum_proposed",
    "avg_sum_baseline",
    "avg_min",
    "avg_tu",
    "avg_cd_profit",
    "avg_relay_profit",
    "outage_frac",
    "trials",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub num_sources: usize,
    pub relay_counts: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub policy: TerminationPolicy,
    pub econ: EconParams,
    pub req: RateRequirements,
    /// Fixed `L x M_max` channel rows used for every trial instead of random draws.
    pub channel: Option<Vec<Vec<f64>>>,
    /// Worker threads; falls back to `CNF_THREADS`, then to rayon's default.
    pub threads: Option<usize>,
}

impl SweepConfig {
    /// A sweep with the default policy, economics and no rate floors.
    pub fn new(num_sources: usize, relay_counts: Vec<usize>, snr_db: Vec<f64>, trials: usize, seed: u64) -> Self {
        Self {
            num_sources,
            relay_counts,
            snr_db,
            trials,
            seed,
            policy: TerminationPolicy::relay_span(),
            econ: EconParams::default(),
            req: RateRequirements::none(num_sources),
            channel: None,
            threads: None,
        }
    }

    fn max_relays(&self) -> usize {
        self.relay_counts.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Input {
                key: key.into(),
                message,
            })
        };
        if self.num_sources == 0 {
            return bad("L", "must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if self.relay_counts.is_empty() {
            return bad("M_list", "must not be empty".into());
        }
        if let Some(&m) = self.relay_counts.iter().find(|&&m| m < self.num_sources) {
            return bad(
                "M_list",
                format!("M ≥ L violated (L = {}, M = {m})", self.num_sources),
            );
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db_list", "must be a nonempty list of finite values".into());
        }
        if self.req.len() != self.num_sources {
            return bad("V", format!("expected {} entries, found {}", self.num_sources, self.req.len()));
        }
        if let Some(rows) = &self.channel {
            let m = self.max_relays();
            if rows.len() != self.num_sources || rows.iter().any(|r| r.len() < m) {
                return bad("H", format!("expected {} rows of at least {m} gains", self.num_sources));
            }
        }
        if self.threads == Some(0) {
            return bad("threads", "must be at least 1".into());
        }
        Ok(())
    }
}

/// Aggregates for one `(M, snr)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(rename = "M")]
    pub num_relays: usize,
    pub snr_db: f64,
    pub avg_sum_proposed: f64,
    pub avg_sum_baseline: f64,
    pub avg_min: f64,
    pub avg_tu: f64,
    pub avg_cd_profit: f64,
    pub avg_relay_profit: f64,
    pub outage_frac: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub num_sources: usize,
    pub seed: u64,
    pub trials: usize,
    pub version: String,
    pub points: Vec<SweepPoint>,
}

/// Per-trial figures behind one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub proposed_sum: f64,
    pub proposed_min: f64,
    /// `L` times the max-min rate.
    pub baseline_sum: f64,
    pub baseline_min: f64,
    pub tu: f64,
    pub cd_profit: f64,
    /// Relays' revenue spread over all `M` relays.
    pub relay_profit: f64,
    pub outage: bool,
}

/// Sweep aggregates plus the per-trial outcomes, `trials[point][trial]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub result: SweepResult,
    pub trials: Vec<Vec<TrialOutcome>>,
}

/// Standard normal `L x M` channel for trial `trial` of `seed`.
pub fn draw_channel(num_sources: usize, num_relays: usize, power: f64, seed: u64, trial: u64) -> Result<ChannelInstance> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let gains = (0..num_relays)
        .map(|_| (0..num_sources).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    ChannelInstance::from_relay_vectors(gains, power)
}

/// `10^(snr_db / 10)`.
pub fn power_from_db(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// Runs the baseline and the engine on one channel.
pub fn evaluate_trial(
    ch: &ChannelInstance,
    policy: &TerminationPolicy,
    req: &RateRequirements,
    econ: &EconParams,
) -> TrialOutcome {
    let l = ch.num_sources() as f64;
    let outcome = build_family(ch, policy).and_then(|family| engine::run(&family, req));
    match outcome {
        Ok(res) => {
            let tu = econ.z * res.selection.sum_rate;
            TrialOutcome {
                proposed_sum: res.selection.sum_rate,
                proposed_min: res.selection.min_rate,
                baseline_sum: l * res.step1.min_rate,
                baseline_min: res.step1.min_rate,
                tu,
                cd_profit: (1.0 - econ.b) * tu,
                relay_profit: econ.b * tu / ch.num_relays() as f64,
                outage: false,
            }
        }
        Err(_) => TrialOutcome {
            outage: true,
            ..TrialOutcome::default()
        },
    }
}

/// Reads `CNF_THREADS`; unset, unparsable or zero means no cap.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

fn grid(cfg: &SweepConfig) -> Vec<(usize, f64)> {
    cfg.relay_counts
        .iter()
        .flat_map(|&m| cfg.snr_db.iter().map(move |&s| (m, s)))
        .collect()
}

/// Runs every trial of every point and keeps the per-trial outcomes.
pub fn simulate(cfg: &SweepConfig) -> Result<SweepRun> {
    cfg.validate()?;
    let points = grid(cfg);
    let max_m = cfg.max_relays();

    let one_trial = |t: usize| -> Vec<TrialOutcome> {
        let rows: Vec<Vec<f64>> = match &cfg.channel {
            Some(rows) => rows.clone(),
            None => draw_channel(cfg.num_sources, max_m, 1.0, cfg.seed, t as u64)
                .expect("normal draws are finite")
                .rows(),
        };
        points
            .iter()
            .map(|&(m, snr)| {
                let truncated: Vec<Vec<f64>> = rows.iter().map(|r| r[..m].to_vec()).collect();
                match ChannelInstance::from_rows(&truncated, power_from_db(snr)) {
                    Ok(ch) => evaluate_trial(&ch, &cfg.policy, &cfg.req, &cfg.econ),
                    Err(_) => TrialOutcome {
                        outage: true,
                        ..TrialOutcome::default()
                    },
                }
            })
            .collect()
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads.or_else(threads_from_env) {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Input {
            key: "threads".into(),
            message: e.to_string(),
        })?;
    let by_trial: Vec<Vec<TrialOutcome>> =
        pool.install(|| (0..cfg.trials).into_par_iter().map(one_trial).collect());

    let trials: Vec<Vec<TrialOutcome>> = (0..points.len())
        .map(|p| by_trial.iter().map(|row| row[p]).collect())
        .collect();
    let n = cfg.trials as f64;
    let mean = |xs: &[TrialOutcome], f: fn(&TrialOutcome) -> f64| xs.iter().map(f).sum::<f64>() / n;
    let summary = points
        .iter()
        .zip(&trials)
        .map(|(&(m, snr), xs)| SweepPoint {
            num_relays: m,
            snr_db: snr,
            avg_sum_proposed: mean(xs, |t| t.proposed_sum),
            avg_sum_baseline: mean(xs, |t| t.baseline_sum),
            avg_min: mean(xs, |t| t.proposed_min),
            avg_tu: mean(xs, |t| t.tu),
            avg_cd_profit: mean(xs, |t| t.cd_profit),
            avg_relay_profit: mean(xs, |t| t.relay_profit),
            outage_frac: xs.iter().filter(|t| t.outage).count() as f64 / n,
            trials: cfg.trials,
        })
        .collect();
    Ok(SweepRun {
        result: SweepResult {
            num_sources: cfg.num_sources,
            seed: cfg.seed,
            trials: cfg.trials,
            version: env!("CARGO_PKG_VERSION").to_string(),
            points: summary,
        },
        trials,
    })
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    simulate(cfg).map(|run| run.result)
}

/// One CSV row per point under [`CSV_HEADER`].
pub fn write_csv<W: Write>(result: &SweepResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for p in &result.points {
        w.write_record([
            p.num_relays.to_string(),
            format_sig(p.snr_db),
            format_sig(p.avg_sum_proposed),
            format_sig(p.avg_sum_baseline),
            format_sig(p.avg_min),
            format_sig(p.avg_tu),
            format_sig(p.avg_cd_profit),
            format_sig(p.avg_relay_profit),
            format_sig(p.outage_frac),
            p.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(result: &SweepResult) -> String {
    let mut buf = Vec::new();
    write_csv(result, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}
