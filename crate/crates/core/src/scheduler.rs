//! Greedy user scheduling and sub-carrier allocation under an RF-chain rank
//! constraint.
//!
//! Phase I schedules every sub-carrier independently: starting from an empty
//! set it repeatedly adds the candidate that maximizes the ZF sum rate and
//! stops when the best addition lowers the rate, the set reaches `K_max`, or
//! no candidate keeps the channel matrix full column rank.
//!
//! If the stacked precoder of all sub-carriers exceeds rank `N_a`, Phase II
//! sorts sub-carriers by rate, stacks the best ones until their precoders
//! reach rank `N_a`, takes the `N_a` leading left singular vectors `Q^d` of
//! that stack and reruns Phase I on the projected channels
//! `h~_ik = (Q^d)^H h_ik`. The final precoders `Q^d B-bar_i` have stacked rank
//! at most `N_a`.
//!
//! Three modes share this machinery:
//!
//! - `db`: Phase I on all `N` antennas; no rank constraint.
//! - `asb`: Phase I on the first `N_a` antennas only.
//! - `hb`: Phase I, then Phase II when needed.

use std::fmt;
use std::str::FromStr;

use crate::channel::FrequencyChannel;
use crate::cpps::{realize, CppsRealization, Flow};
use crate::error::{Error, Result};
use crate::hybrid::{factorize_ordered, AntennaOrder, DigitalStack, HybridFactorization};
use crate::linalg::{default_rank_tol, hstack, numerical_rank, orthonormal_complete, CMatrix};
use crate::zf::{scale_columns, sum_rate_precoded, zf_precoder_with_tol, zf_sum_rate, PowerPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Asb,
    Hb,
    Db,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Asb, Mode::Hb, Mode::Db];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Asb => "asb",
            Mode::Hb => "hb",
            Mode::Db => "db",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "asb" => Ok(Mode::Asb),
            "hb" => Ok(Mode::Hb),
            "db" => Ok(Mode::Db),
            other => Err(format!("unknown mode '{other}', expected asb, hb or db")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    pub mode: Mode,
    /// RF chains `N_a`.
    pub n_rf: usize,
    /// Per-sub-carrier user cap `K_max`.
    pub k_max: usize,
    /// Per-sub-carrier power budget `P`.
    pub power: f64,
    pub noise_var: f64,
    pub policy: PowerPolicy,
    /// Relative rank tolerance; `None` uses `max(rows, cols) * eps`.
    pub rank_tol: Option<f64>,
    /// Keep adding users up to `K_max` even when the rate drops.
    pub fixed_user_count: bool,
    /// Antennas holding the diagonal block of the analog matrix.
    pub antenna_order: AntennaOrder,
}

impl SchedulerConfig {
    pub fn new(mode: Mode, n_rf: usize, k_max: usize, power: f64) -> Self {
        Self {
            mode,
            n_rf,
            k_max,
            power,
            noise_var: 1.0,
            policy: PowerPolicy::Waterfill,
            rank_tol: None,
            fixed_user_count: false,
            antenna_order: AntennaOrder::Natural,
        }
    }

    fn tol(&self, rows: usize, cols: usize) -> f64 {
        self.rank_tol.unwrap_or_else(|| default_rank_tol(rows, cols))
    }

    fn validate(&self, n_antennas: usize) -> Result<()> {
        use crate::error::ConfigError;
        if self.n_rf == 0 || self.n_rf > n_antennas {
            return Err(ConfigError::new("n_rf", format!("must be in 1..={n_antennas}")).into());
        }
        if self.k_max == 0 {
            return Err(ConfigError::new("k_max", "must be at least 1").into());
        }
        if self.power.is_nan() || self.power <= 0.0 {
            return Err(ConfigError::new("power", "must be positive").into());
        }
        if self.noise_var.is_nan() || self.noise_var <= 0.0 {
            return Err(ConfigError::new("noise_var", "must be positive").into());
        }
        Ok(())
    }
}

/// Phase I result for one sub-carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Result {
    /// Served users in selection order (0-based user indices).
    pub users: Vec<usize>,
    /// ZF directions, one column per served user.
    pub directions: CMatrix,
    pub gains: Vec<f64>,
    pub power: Vec<f64>,
    /// ZF sum rate `f` of the final set.
    pub rate: f64,
    /// Rate after each accepted addition.
    pub trace: Vec<f64>,
}

impl Phase1Result {
    /// Precoder columns carrying their power, `sqrt(p_k) b_k / ||b_k||`.
    pub fn precoder(&self) -> CMatrix {
        scale_columns(&self.directions, &self.power)
    }
}

/// Greedy Phase I on one sub-carrier channel `h` (`M x K_t`, users as
/// columns) over the candidate `pool`.
pub fn phase1_greedy(h: &CMatrix, pool: &[usize], cfg: &SchedulerConfig) -> Phase1Result {
    let m = h.nrows();
    let mut selected: Vec<usize> = Vec::new();
    let mut best_state: Option<(crate::zf::ZfPrecoder, Vec<f64>)> = None;
    let mut f_old = 0.0;
    let mut trace = Vec::new();
    let mut remaining: Vec<usize> = pool.to_vec();
    remaining.sort_unstable();
    remaining.dedup();
    let cap = cfg.k_max.min(m);
    while selected.len() < cap && !remaining.is_empty() {
        let mut best: Option<(usize, f64, crate::zf::ZfPrecoder, Vec<f64>)> = None;
        for (pos, &cand) in remaining.iter().enumerate() {
            let mut cols: Vec<usize> = selected.clone();
            cols.push(cand);
            let hs = h.select_columns(&cols);
            let Ok(zf) = zf_precoder_with_tol(&hs, cfg.tol(hs.nrows(), hs.ncols())) else {
                continue;
            };
            let p = cfg.policy.allocate(&zf.gains, cfg.power, cfg.noise_var);
            let f = zf_sum_rate(&zf.gains, &p, cfg.noise_var);
            if best.as_ref().is_none_or(|b| f > b.1) {
                best = Some((pos, f, zf, p));
            }
        }
        let Some((pos, f_new, zf, p)) = best else {
            break;
        };
        if f_new >= f_old || cfg.fixed_user_count {
            selected.push(remaining.remove(pos));
            f_old = f_new;
            trace.push(f_new);
            best_state = Some((zf, p));
        } else {
            break;
        }
    }
    match best_state {
        Some((zf, power)) => Phase1Result {
            users: selected,
            directions: zf.directions,
            gains: zf.gains,
            power,
            rate: f_old,
            trace,
        },
        None => Phase1Result {
            users: Vec::new(),
            directions: CMatrix::zeros(m, 0),
            gains: Vec::new(),
            power: Vec::new(),
            rate: 0.0,
            trace,
        },
    }
}

/// Served set and realized precoder of one sub-carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierSchedule {
    pub users: Vec<usize>,
    /// `N x K_i` precoder with power included.
    pub precoder: CMatrix,
    pub gains: Vec<f64>,
    pub power: Vec<f64>,
    pub rate: f64,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Phase1Only,
    Phase2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOutcome {
    pub mode: Mode,
    pub subcarriers: Vec<SubcarrierSchedule>,
    /// Numerical rank of the stacked precoder.
    pub rank: usize,
    /// `Q^d` (`N x N_a`) when Phase II ran.
    pub basis: Option<CMatrix>,
    /// Number of best sub-carriers stacked to build `Q^d`; 0 without Phase II.
    pub s_tilde: usize,
    pub phase: Phase,
    /// `Q^d` needed orthonormal padding because the stack never reached rank `N_a`.
    pub padded: bool,
}

impl ScheduleOutcome {
    pub fn total_rate(&self) -> f64 {
        self.subcarriers.iter().map(|s| s.rate).sum()
    }

    pub fn mean_served(&self) -> f64 {
        if self.subcarriers.is_empty() {
            return 0.0;
        }
        self.subcarriers.iter().map(|s| s.users.len()).sum::<usize>() as f64
            / self.subcarriers.len() as f64
    }

    pub fn precoders(&self) -> Vec<CMatrix> {
        self.subcarriers.iter().map(|s| s.precoder.clone()).collect()
    }

    pub fn user_sets(&self) -> Vec<Vec<usize>> {
        self.subcarriers.iter().map(|s| s.users.clone()).collect()
    }
}

fn stacked_rank(precoders: &[CMatrix]) -> usize {
    let stack = hstack(precoders);
    numerical_rank(&stack, default_rank_tol(stack.nrows(), stack.ncols()))
}

fn all_users(ch: &FrequencyChannel) -> Vec<usize> {
    (0..ch.n_users()).collect()
}

/// Phase I on every sub-carrier of `channels` (rows = effective antennas),
/// lifting each precoder with `lift` to `N` rows.
fn phase1_all(
    channels: &[CMatrix],
    pool: &[usize],
    cfg: &SchedulerConfig,
    lift: impl Fn(CMatrix) -> CMatrix,
) -> Vec<SubcarrierSchedule> {
    channels
        .iter()
        .map(|h| {
            let r = phase1_greedy(h, pool, cfg);
            SubcarrierSchedule {
                precoder: lift(r.precoder()),
                users: r.users,
                gains: r.gains,
                power: r.power,
                rate: r.rate,
                trace: r.trace,
            }
        })
        .collect()
}

/// Fully digital: Phase I on all `N` antennas.
pub fn run_db(ch: &FrequencyChannel, cfg: &SchedulerConfig) -> Result<ScheduleOutcome> {
    cfg.validate(ch.n_antennas())?;
    let subcarriers = phase1_all(ch.subcarriers(), &all_users(ch), cfg, |w| w);
    let rank = stacked_rank(&subcarriers.iter().map(|s| s.precoder.clone()).collect::<Vec<_>>());
    Ok(ScheduleOutcome {
        mode: Mode::Db,
        subcarriers,
        rank,
        basis: None,
        s_tilde: 0,
        phase: Phase::Phase1Only,
        padded: false,
    })
}

/// Antenna selection: Phase I on the first `N_a` antennas, zero elsewhere.
pub fn run_asb(ch: &FrequencyChannel, cfg: &SchedulerConfig) -> Result<ScheduleOutcome> {
    let n = ch.n_antennas();
    cfg.validate(n)?;
    let na = cfg.n_rf;
    let truncated = ch.truncate_antennas(na);
    let subcarriers = phase1_all(truncated.subcarriers(), &all_users(ch), cfg, |w| {
        let mut full = CMatrix::zeros(n, w.ncols());
        full.rows_mut(0, na).copy_from(&w);
        full
    });
    let rank = stacked_rank(&subcarriers.iter().map(|s| s.precoder.clone()).collect::<Vec<_>>());
    Ok(ScheduleOutcome {
        mode: Mode::Asb,
        subcarriers,
        rank,
        basis: None,
        s_tilde: 0,
        phase: Phase::Phase1Only,
        padded: false,
    })
}

/// Hybrid: Phase I, then Phase II if the stacked rank exceeds `N_a`.
pub fn run_hb(ch: &FrequencyChannel, cfg: &SchedulerConfig) -> Result<ScheduleOutcome> {
    let n = ch.n_antennas();
    cfg.validate(n)?;
    let na = cfg.n_rf;
    let pool = all_users(ch);
    let first = phase1_all(ch.subcarriers(), &pool, cfg, |w| w);
    let precoders: Vec<CMatrix> = first.iter().map(|s| s.precoder.clone()).collect();
    let rank = stacked_rank(&precoders);
    if rank <= na {
        return Ok(ScheduleOutcome {
            mode: Mode::Hb,
            subcarriers: first,
            rank,
            basis: None,
            s_tilde: 0,
            phase: Phase::Phase1Only,
            padded: false,
        });
    }

    let mut order: Vec<usize> = (0..first.len()).collect();
    order.sort_by(|&a, &b| first[b].rate.total_cmp(&first[a].rate).then(a.cmp(&b)));
    let mut blocks = Vec::new();
    let mut s_tilde = 0;
    let mut t_rank = 0;
    for &i in &order {
        blocks.push(precoders[i].clone());
        s_tilde += 1;
        t_rank = stacked_rank(&blocks);
        if t_rank >= na {
            break;
        }
    }
    let t = hstack(&blocks);
    let (basis, padded) = leading_left_singular_vectors(&t, na, t_rank);

    let projected: Vec<CMatrix> = ch.subcarriers().iter().map(|h| basis.adjoint() * h).collect();
    let subcarriers = phase1_all(&projected, &pool, cfg, |w| &basis * w);
    let rank = stacked_rank(&subcarriers.iter().map(|s| s.precoder.clone()).collect::<Vec<_>>());
    Ok(ScheduleOutcome {
        mode: Mode::Hb,
        subcarriers,
        rank,
        basis: Some(basis),
        s_tilde,
        phase: Phase::Phase2,
        padded,
    })
}

/// `count` leading left singular vectors of `t`, of which the first
/// `rank` come from the SVD and the rest (if any) from orthonormal padding.
fn leading_left_singular_vectors(t: &CMatrix, count: usize, rank: usize) -> (CMatrix, bool) {
    let svd = t.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let keep = rank.min(count);
    let cols: Vec<_> = idx[..keep].iter().map(|&i| u.column(i).into_owned()).collect();
    let base = if cols.is_empty() {
        CMatrix::zeros(t.nrows(), 0)
    } else {
        CMatrix::from_columns(&cols)
    };
    if keep < count {
        (orthonormal_complete(&base, count), true)
    } else {
        (base, false)
    }
}

/// Runs the scheduler for `cfg.mode`.
pub fn schedule(ch: &FrequencyChannel, cfg: &SchedulerConfig) -> Result<ScheduleOutcome> {
    match cfg.mode {
        Mode::Asb => run_asb(ch, cfg),
        Mode::Hb => run_hb(ch, cfg),
        Mode::Db => run_db(ch, cfg),
    }
}

/// Per-sub-carrier rates when every mode serves the given user sets.
///
/// A single sub-carrier with `K_i <= N_a` users never binds the rank
/// constraint, so `hb` and `db` both use full-dimension ZF here; `asb` uses
/// ZF on the first `N_a` antennas. The same power policy applies to all.
pub fn forced_set_rates(
    ch: &FrequencyChannel,
    sets: &[Vec<usize>],
    mode: Mode,
    cfg: &SchedulerConfig,
) -> Result<Vec<f64>> {
    if sets.len() != ch.n_subcarriers() {
        return Err(Error::DimensionMismatch(format!(
            "{} user sets for {} sub-carriers",
            sets.len(),
            ch.n_subcarriers()
        )));
    }
    sets.iter()
        .enumerate()
        .map(|(i, users)| {
            if users.is_empty() {
                return Ok(0.0);
            }
            let h = ch.subcarrier(i).select_columns(users);
            let h = match mode {
                Mode::Asb => h.rows(0, cfg.n_rf).into_owned(),
                Mode::Hb | Mode::Db => h,
            };
            let zf = zf_precoder_with_tol(&h, cfg.tol(h.nrows(), h.ncols())).map_err(|_| {
                Error::RankDeficient {
                    subcarrier: Some(i),
                    users: users.clone(),
                }
            })?;
            let p = cfg.policy.allocate(&zf.gains, cfg.power, cfg.noise_var);
            Ok(zf_sum_rate(&zf.gains, &p, cfg.noise_var))
        })
        .collect()
}

/// Fixed-phase realization settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CppsOptions {
    pub precision: usize,
    pub flow: Flow,
    /// Symmetric per-pair cap; `None` for the default `ceil(N/10)`.
    pub cap: Option<usize>,
}

/// Schedule plus its hardware realization and achieved rates.
#[derive(Debug, Clone)]
pub struct BeamformOutcome {
    pub schedule: ScheduleOutcome,
    /// Exact factorization of the stacked precoder (`hb`, `db`).
    pub factorization: Option<HybridFactorization>,
    pub cpps: Option<CppsRealization>,
    /// Per-sub-carrier rates of the realized precoders.
    pub rates: Vec<f64>,
    /// Phase-shifter pairs in use: nonzero analog entries for tunable
    /// shifters, `40p * r_t` for a fixed bank, 0 for antenna selection.
    pub pair_count: usize,
    /// Largest real or imaginary error of the fixed-phase analog matrix.
    pub cpps_max_error: f64,
}

impl BeamformOutcome {
    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }
}

/// Schedules, factorizes the stacked precoder (`hb`, `db`), optionally
/// realizes the analog part with a fixed-phase bank, and evaluates the rates
/// of the realized precoders `A B_i` with the general SINR.
///
/// With a fixed-phase bank the realized precoder of each sub-carrier is
/// rescaled to the power budget.
pub fn schedule_and_beamform(
    ch: &FrequencyChannel,
    cfg: &SchedulerConfig,
    cpps: Option<CppsOptions>,
) -> Result<BeamformOutcome> {
    let schedule = schedule(ch, cfg)?;
    let user_channels: Vec<CMatrix> = schedule
        .subcarriers
        .iter()
        .enumerate()
        .map(|(i, s)| ch.subcarrier(i).select_columns(&s.users))
        .collect();
    let digital_rates = |precoders: &[CMatrix]| -> Vec<f64> {
        user_channels
            .iter()
            .zip(precoders)
            .map(|(h, w)| sum_rate_precoded(h, w, cfg.noise_var).total)
            .collect()
    };
    if cfg.mode == Mode::Asb {
        let rates = digital_rates(&schedule.precoders());
        return Ok(BeamformOutcome {
            schedule,
            factorization: None,
            cpps: None,
            rates,
            pair_count: 0,
            cpps_max_error: 0.0,
        });
    }
    let stack = DigitalStack::new(&schedule.precoders())?;
    let fact = factorize_ordered(&stack, stack.default_tol(), cfg.antenna_order)?;
    let Some(opts) = cpps else {
        let precoders: Vec<CMatrix> = (0..stack.n_blocks()).map(|i| fact.precoder(i)).collect();
        let rates = digital_rates(&precoders);
        let pair_count = fact.structural_nonzeros();
        return Ok(BeamformOutcome {
            schedule,
            factorization: Some(fact),
            cpps: None,
            rates,
            pair_count,
            cpps_max_error: 0.0,
        });
    };
    let real = realize(&fact.analog, opts.precision, opts.flow, opts.cap)?;
    let precoders: Vec<CMatrix> = (0..stack.n_blocks())
        .map(|i| {
            let w = &real.realized.matrix * fact.baseband(i);
            let norm2 = w.norm_squared();
            if norm2 > 0.0 {
                w * num_complex::Complex64::new((cfg.power / norm2).sqrt(), 0.0)
            } else {
                w
            }
        })
        .collect();
    let rates = digital_rates(&precoders);
    let pair_count = real.pair_count();
    let cpps_max_error = real.realized.max_component_error();
    Ok(BeamformOutcome {
        schedule,
        factorization: Some(fact),
        cpps: Some(real),
        rates,
        pair_count,
        cpps_max_error,
    })
}
