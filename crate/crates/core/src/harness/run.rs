//! Monte Carlo driver: channel draws, per-trial evaluation, sweeps.
//!
//! Trial `t` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `t`, so
//! a trial's channel depends only on the seed, the trial index and the
//! channel-shaping parameters, never on the thread count. Every mode and SNR
//! of a trial is evaluated on the same channel draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ChannelKind, ExperimentConfig};
use super::output::{BoundRow, ResultRow};
use crate::bounds::{rate_bounds, BoundParams, RateBounds};
use crate::channel::{
    draw_geometric_taps, draw_rayleigh_taps, gen_binned_aods, to_frequency, uniform_aods,
    ArrayGeometry, BinnedAodSpec, FrequencyChannel, GeometricParams,
};
use crate::error::{ConfigError, Error, Result};
use crate::scheduler::{
    forced_set_rates, schedule, schedule_and_beamform, CppsOptions, Mode, SchedulerConfig,
};

/// Generator for trial `trial` of an experiment seeded with `seed`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Draws the frequency-domain channel of one trial.
pub fn draw_channel<R: rand::Rng + ?Sized>(
    cfg: &ExperimentConfig,
    rng: &mut R,
) -> Result<FrequencyChannel> {
    let n = cfg.n_antennas;
    let time = match cfg.channel {
        ChannelKind::Rayleigh => draw_rayleigh_taps(n, cfg.k_total, cfg.n_taps, rng),
        ChannelKind::UlaUniform => {
            let aods = uniform_aods(cfg.k_total, cfg.n_scatterers, rng);
            let params = GeometricParams::new(cfg.n_taps, aods);
            draw_geometric_taps(&ArrayGeometry::half_wavelength(n), &params, rng)?
        }
        ChannelKind::UlaBinned => {
            let spec = BinnedAodSpec {
                base_angle: cfg.binned_angle,
                n_bins: cfg.n_rf,
                jitter: cfg.binned_jitter.unwrap_or(1.0 / (2.0 * n as f64)),
            };
            let aods = gen_binned_aods(&spec, n, cfg.k_total, cfg.n_scatterers, rng)?;
            let params = GeometricParams::new(cfg.n_taps, aods);
            draw_geometric_taps(&ArrayGeometry::half_wavelength(n), &params, rng)?
        }
    };
    to_frequency(&time, cfg.n_subcarriers)
}

pub fn scheduler_config(cfg: &ExperimentConfig, mode: Mode, snr_db: f64) -> SchedulerConfig {
    let mut s = SchedulerConfig::new(mode, cfg.n_rf, cfg.k_max, cfg.power_for_snr(snr_db));
    s.noise_var = cfg.noise_var;
    s.policy = cfg.power;
    s.fixed_user_count = cfg.fixed_k;
    s.antenna_order = cfg.antenna_order;
    s
}

fn cpps_options(cfg: &ExperimentConfig) -> Option<CppsOptions> {
    cfg.cpps.map(|precision| CppsOptions {
        precision,
        flow: cfg.flow,
        cap: cfg.symmetric_cap,
    })
}

pub fn bound_params(cfg: &ExperimentConfig, snr_db: f64) -> BoundParams {
    BoundParams {
        n_antennas: cfg.n_antennas,
        n_rf: cfg.n_rf,
        k: cfg.k_max,
        k_total: cfg.k_total,
        n_subcarriers: cfg.n_subcarriers,
        power: cfg.power_for_snr(snr_db),
        noise_var: cfg.noise_var,
        s_tilde: cfg.bound_s_tilde,
    }
}

/// Bounds for every configured SNR. Needs `k_max <= n_rf <= n_antennas`.
pub fn bound_table(cfg: &ExperimentConfig) -> Result<Vec<BoundRow>> {
    if cfg.k_max > cfg.n_rf {
        return Err(ConfigError::new("k_max", "bounds need k_max <= n_rf").into());
    }
    Ok(cfg
        .snr_db
        .iter()
        .map(|&snr_db| {
            let params = bound_params(cfg, snr_db);
            let b = rate_bounds(&params);
            BoundRow {
                snr_db,
                power: params.power,
                asb: b.asb,
                hb: b.hb,
                db: b.db,
            }
        })
        .collect())
}

fn blank_row(mode: Mode, snr_db: f64, trial: usize) -> ResultRow {
    ResultRow {
        sweep_axis: String::new(),
        sweep_value: None,
        mode,
        snr_db,
        trial,
        sum_rate: 0.0,
        mean_served: 0.0,
        rank: 0,
        s_tilde: 0,
        pair_count: 0,
        cpps_max_error: 0.0,
        bound: None,
    }
}

/// Evaluates every configured mode and SNR on one channel draw. Rows come
/// out mode-major, SNR-minor. `bounds` holds one entry per SNR when given.
pub fn run_trial(
    cfg: &ExperimentConfig,
    trial: usize,
    bounds: Option<&[RateBounds]>,
) -> Result<Vec<ResultRow>> {
    let mut rng = trial_rng(cfg.seed, trial);
    let ch = draw_channel(cfg, &mut rng)?;
    let mut forced_sets = Vec::new();
    if cfg.forced_equal {
        for &snr in &cfg.snr_db {
            let asb = schedule(&ch, &scheduler_config(cfg, Mode::Asb, snr))?;
            forced_sets.push(asb.user_sets());
        }
    }
    let opts = cpps_options(cfg);
    let mut rows = Vec::with_capacity(cfg.modes.len() * cfg.snr_db.len());
    for &mode in &cfg.modes {
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            let scfg = scheduler_config(cfg, mode, snr);
            let mut row = blank_row(mode, snr, trial);
            if cfg.forced_equal {
                let sets = &forced_sets[si];
                let rates = forced_set_rates(&ch, sets, mode, &scfg)?;
                row.sum_rate = rates.iter().sum();
                row.mean_served =
                    sets.iter().map(Vec::len).sum::<usize>() as f64 / sets.len() as f64;
            } else {
                let out = schedule_and_beamform(&ch, &scfg, opts)?;
                row.sum_rate = out.total_rate();
                row.mean_served = out.schedule.mean_served();
                row.rank = out.schedule.rank;
                row.s_tilde = out.schedule.s_tilde;
                row.pair_count = out.pair_count;
                row.cpps_max_error = out.cpps_max_error;
            }
            row.bound = bounds.map(|b| b[si].get(mode));
            rows.push(row);
        }
    }
    Ok(rows)
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ConfigError::new("threads", e.to_string()).into())
}

/// Runs all trials. Rows are ordered by mode (config order), then SNR
/// (config order), then trial, independent of the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let bounds: Option<Vec<RateBounds>> = cfg.emit_bounds.then(|| {
        cfg.snr_db
            .iter()
            .map(|&s| rate_bounds(&bound_params(cfg, s)))
            .collect()
    });
    let per_trial: Vec<Vec<ResultRow>> = thread_pool(cfg.threads)?.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, t, bounds.as_deref()))
            .collect::<Result<_>>()
    })?;
    let n_snr = cfg.snr_db.len();
    let mut keyed: Vec<(usize, usize, ResultRow)> = per_trial
        .into_iter()
        .flat_map(|rows| rows.into_iter().enumerate())
        .map(|(i, row)| (i, row.trial, row))
        .collect();
    // Within a trial, row i is mode i / n_snr and SNR i % n_snr.
    keyed.sort_by_key(|&(i, trial, _)| (i / n_snr, i % n_snr, trial));
    Ok(keyed.into_iter().map(|(_, _, r)| r).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Snr,
    NRf,
    NAntennas,
    KTotal,
    /// Fixed-phase bank precision; 0 turns the bank off.
    CppsPairs,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] = [
        SweepAxis::Snr,
        SweepAxis::NRf,
        SweepAxis::NAntennas,
        SweepAxis::KTotal,
        SweepAxis::CppsPairs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr",
            SweepAxis::NRf => "n_rf",
            SweepAxis::NAntennas => "n_antennas",
            SweepAxis::KTotal => "k_total",
            SweepAxis::CppsPairs => "cpps_pairs",
        }
    }

    /// Config with the axis set to `value`.
    pub fn apply(
        self,
        cfg: &ExperimentConfig,
        value: f64,
    ) -> std::result::Result<ExperimentConfig, ConfigError> {
        let mut out = cfg.clone();
        if self == SweepAxis::Snr {
            if !value.is_finite() {
                return Err(ConfigError::new(self.name(), "SNR must be finite"));
            }
            out.snr_db = vec![value];
        } else {
            if value < 0.0 || value.fract() != 0.0 || value > u32::MAX as f64 {
                return Err(ConfigError::new(
                    self.name(),
                    format!("expected a non-negative integer, got {value}"),
                ));
            }
            let v = value as usize;
            match self {
                SweepAxis::NRf => out.n_rf = v,
                SweepAxis::NAntennas => out.n_antennas = v,
                SweepAxis::KTotal => out.k_total = v,
                SweepAxis::CppsPairs => out.cpps = (v > 0).then_some(v),
                SweepAxis::Snr => unreachable!(),
            }
        }
        out.validate()?;
        Ok(out)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SweepAxis::ALL.iter().map(|a| a.name()).collect();
                format!("unknown sweep axis '{s}', expected one of {}", names.join(", "))
            })
    }
}

/// Runs the experiment once per axis value with the same seeds, so every
/// value sees the same trial streams.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<ResultRow>> {
    if values.is_empty() {
        return Err(ConfigError::new("values", "sweep needs at least one value").into());
    }
    let mut rows = Vec::new();
    for &v in values {
        let point = axis.apply(cfg, v).map_err(Error::from)?;
        for mut r in run_experiment(&point)? {
            r.sweep_axis = axis.name().to_string();
            r.sweep_value = Some(v);
            rows.push(r);
        }
    }
    Ok(rows)
}

/// Mean over trials of one (sweep value, mode, SNR) group.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub sweep_value: Option<f64>,
    pub mode: Mode,
    pub snr_db: f64,
    pub trials: usize,
    pub mean_rate: f64,
    /// Standard error of `mean_rate`.
    pub std_err: f64,
    pub mean_served: f64,
    pub bound: Option<f64>,
}

/// Groups consecutive rows sharing (sweep value, mode, SNR), which is how
/// [`run_experiment`] and [`sweep`] order them.
pub fn summarize(rows: &[ResultRow]) -> Vec<Summary> {
    let same = |a: &ResultRow, b: &ResultRow| {
        a.sweep_value == b.sweep_value && a.mode == b.mode && a.snr_db == b.snr_db
    };
    rows.chunk_by(|a, b| same(a, b))
        .map(|g| {
            let n = g.len() as f64;
            let mean = g.iter().map(|r| r.sum_rate).sum::<f64>() / n;
            let var = if g.len() > 1 {
                g.iter().map(|r| (r.sum_rate - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            Summary {
                sweep_value: g[0].sweep_value,
                mode: g[0].mode,
                snr_db: g[0].snr_db,
                trials: g.len(),
                mean_rate: mean,
                std_err: (var / n).sqrt(),
                mean_served: g.iter().map(|r| r.mean_served).sum::<f64>() / n,
                bound: g[0].bound,
            }
        })
        .collect()
}
