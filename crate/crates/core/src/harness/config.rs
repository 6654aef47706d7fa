//! Experiment configuration: flat `key = value` text, `#` comments, lists as
//! comma-separated values. Every key can also be set programmatically with
//! [`ExperimentConfig::set`], which is what command-line overrides use.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::cpps::Flow;
use crate::error::{ConfigError, Error, Result};
use crate::hybrid::AntennaOrder;
use crate::scheduler::Mode;
use crate::zf::PowerPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// I.i.d. Rayleigh taps.
    Rayleigh,
    /// Geometric ULA channel with AODs uniform on `[0, 2pi)`.
    UlaUniform,
    /// Geometric ULA channel with AODs confined to `N_a` Fourier bins.
    UlaBinned,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Rayleigh => "rayleigh",
            ChannelKind::UlaUniform => "ula-uniform",
            ChannelKind::UlaBinned => "ula-binned",
        }
    }
}

impl FromStr for ChannelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            "ula-uniform" => Ok(ChannelKind::UlaUniform),
            "ula-binned" => Ok(ChannelKind::UlaBinned),
            other => Err(format!(
                "unknown channel '{other}', expected rayleigh, ula-uniform or ula-binned"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_antennas: usize,
    pub n_rf: usize,
    pub n_subcarriers: usize,
    pub n_taps: usize,
    pub k_total: usize,
    pub k_max: usize,
    pub noise_var: f64,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub channel: ChannelKind,
    /// Base angle of the binned AOD grid, radians.
    pub binned_angle: f64,
    /// Jitter half-width of binned AODs; `None` for `1/(2N)`.
    pub binned_jitter: Option<f64>,
    pub n_scatterers: usize,
    pub modes: Vec<Mode>,
    pub power: PowerPolicy,
    /// Serve exactly `K_max` users per sub-carrier.
    pub fixed_k: bool,
    /// Fixed-phase bank precision; `None` keeps tunable phase shifters.
    pub cpps: Option<usize>,
    pub flow: Flow,
    /// Symmetric per-pair cap; `None` for `ceil(N/10)`.
    pub symmetric_cap: Option<usize>,
    /// Antennas holding the diagonal block of the analog matrix.
    pub antenna_order: AntennaOrder,
    pub emit_bounds: bool,
    /// `S~` credited in the hybrid bound; `None` for `ceil(N_a / K)`.
    pub bound_s_tilde: Option<usize>,
    /// Evaluate every mode on the user sets chosen by antenna selection.
    pub forced_equal: bool,
    /// Worker threads; 0 lets the thread pool decide.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_antennas: 64,
            n_rf: 16,
            n_subcarriers: 16,
            n_taps: 8,
            k_total: 16,
            k_max: 8,
            noise_var: 1.0,
            snr_db: vec![0.0, 10.0, 20.0],
            trials: 100,
            seed: 1,
            channel: ChannelKind::Rayleigh,
            binned_angle: std::f64::consts::FRAC_PI_2,
            binned_jitter: None,
            n_scatterers: 8,
            modes: Mode::ALL.to_vec(),
            power: PowerPolicy::Waterfill,
            fixed_k: false,
            cpps: None,
            flow: Flow::Asymmetric,
            symmetric_cap: None,
            antenna_order: AntennaOrder::Natural,
            emit_bounds: false,
            bound_s_tilde: None,
            forced_equal: false,
            threads: 0,
        }
    }
}

/// Every recognised key, in the order [`ExperimentConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "n_antennas",
    "n_rf",
    "n_subcarriers",
    "n_taps",
    "k_total",
    "k_max",
    "noise_var",
    "snr_db",
    "trials",
    "seed",
    "channel",
    "binned_angle",
    "binned_jitter",
    "n_scatterers",
    "modes",
    "power",
    "fixed_k",
    "cpps",
    "flow",
    "symmetric_cap",
    "antenna_order",
    "emit_bounds",
    "bound_s_tilde",
    "forced_equal",
    "threads",
];

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| ConfigError::new(key, format!("cannot parse '{value}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, ConfigError> {
    match value.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(ConfigError::new(key, format!("expected true or false, got '{other}'"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> std::result::Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// `auto`/`default` (or empty) maps to `None`.
fn parse_optional<T: FromStr>(key: &str, value: &str) -> std::result::Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match value.trim() {
        "" | "auto" | "default" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl ExperimentConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "n_antennas" => self.n_antennas = parse(key, v)?,
            "n_rf" => self.n_rf = parse(key, v)?,
            "n_subcarriers" => self.n_subcarriers = parse(key, v)?,
            "n_taps" => self.n_taps = parse(key, v)?,
            "k_total" => self.k_total = parse(key, v)?,
            "k_max" => self.k_max = parse(key, v)?,
            "noise_var" => self.noise_var = parse(key, v)?,
            "snr_db" => self.snr_db = parse_list(key, v)?,
            "trials" => self.trials = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "channel" => self.channel = v.parse().map_err(|e| ConfigError::new(key, e))?,
            "binned_angle" => self.binned_angle = parse(key, v)?,
            "binned_jitter" => self.binned_jitter = parse_optional(key, v)?,
            "n_scatterers" => self.n_scatterers = parse(key, v)?,
            "modes" => {
                self.modes = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|e| ConfigError::new(key, e)))
                    .collect::<std::result::Result<_, _>>()?
            }
            "power" => {
                self.power = match v {
                    "equal" => PowerPolicy::Equal,
                    "waterfill" => PowerPolicy::Waterfill,
                    other => {
                        return Err(ConfigError::new(
                            key,
                            format!("expected equal or waterfill, got '{other}'"),
                        ))
                    }
                }
            }
            "fixed_k" => self.fixed_k = parse_bool(key, v)?,
            "cpps" => {
                self.cpps = match v {
                    "off" | "0" | "" => None,
                    p => Some(parse(key, p)?),
                }
            }
            "flow" => self.flow = v.parse().map_err(|e| ConfigError::new(key, e))?,
            "symmetric_cap" => self.symmetric_cap = parse_optional(key, v)?,
            "antenna_order" => {
                self.antenna_order = v.parse().map_err(|e| ConfigError::new(key, e))?
            }
            "emit_bounds" => self.emit_bounds = parse_bool(key, v)?,
            "bound_s_tilde" => self.bound_s_tilde = parse_optional(key, v)?,
            "forced_equal" => self.forced_equal = parse_bool(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            other => return Err(ConfigError::new(other, "unknown key")),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults and validates the result.
    pub fn from_text(text: &str) -> std::result::Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::new(
                    format!("line {}", lineno + 1),
                    format!("expected 'key = value', got '{line}'"),
                ));
            };
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_text(&text)?)
    }

    /// Text form accepted by [`ExperimentConfig::from_text`].
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        let join = |v: Vec<String>| v.join(", ");
        let mut out = String::new();
        for key in KEYS {
            let value = match *key {
                "n_antennas" => self.n_antennas.to_string(),
                "n_rf" => self.n_rf.to_string(),
                "n_subcarriers" => self.n_subcarriers.to_string(),
                "n_taps" => self.n_taps.to_string(),
                "k_total" => self.k_total.to_string(),
                "k_max" => self.k_max.to_string(),
                "noise_var" => format!("{:?}", self.noise_var),
                "snr_db" => join(self.snr_db.iter().map(|s| format!("{s:?}")).collect()),
                "trials" => self.trials.to_string(),
                "seed" => self.seed.to_string(),
                "channel" => self.channel.name().into(),
                "binned_angle" => format!("{:?}", self.binned_angle),
                "binned_jitter" => opt(self.binned_jitter.map(|j| format!("{j:?}"))),
                "n_scatterers" => self.n_scatterers.to_string(),
                "modes" => join(self.modes.iter().map(|m| m.name().to_string()).collect()),
                "power" => match self.power {
                    PowerPolicy::Equal => "equal".into(),
                    PowerPolicy::Waterfill => "waterfill".into(),
                },
                "fixed_k" => self.fixed_k.to_string(),
                "cpps" => self.cpps.map_or("off".into(), |p| p.to_string()),
                "flow" => self.flow.name().into(),
                "symmetric_cap" => opt(self.symmetric_cap.map(|c| c.to_string())),
                "antenna_order" => self.antenna_order.name().into(),
                "emit_bounds" => self.emit_bounds.to_string(),
                "bound_s_tilde" => opt(self.bound_s_tilde.map(|s| s.to_string())),
                "forced_equal" => self.forced_equal.to_string(),
                "threads" => self.threads.to_string(),
                _ => unreachable!("every key is listed"),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let err = |field: &str, msg: String| Err(ConfigError::new(field, msg));
        if self.n_antennas == 0 {
            return err("n_antennas", "must be at least 1".into());
        }
        if self.n_rf == 0 || self.n_rf > self.n_antennas {
            return err("n_rf", format!("must be in 1..={}", self.n_antennas));
        }
        if self.n_subcarriers == 0 {
            return err("n_subcarriers", "must be at least 1".into());
        }
        if self.n_taps == 0 || self.n_taps > self.n_subcarriers {
            return err("n_taps", format!("must be in 1..={}", self.n_subcarriers));
        }
        if self.k_total == 0 {
            return err("k_total", "must be at least 1".into());
        }
        if self.k_max == 0 {
            return err("k_max", "must be at least 1".into());
        }
        if !self.noise_var.is_finite() || self.noise_var <= 0.0 {
            return err("noise_var", "must be positive".into());
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return err("snr_db", "needs at least one finite value".into());
        }
        if self.trials == 0 {
            return err("trials", "must be at least 1".into());
        }
        if self.n_scatterers == 0 {
            return err("n_scatterers", "must be at least 1".into());
        }
        if self.modes.is_empty() {
            return err("modes", "needs at least one mode".into());
        }
        let mut seen = self.modes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.modes.len() {
            return err("modes", "lists a mode twice".into());
        }
        if self.cpps == Some(0) {
            return err("cpps", "precision must be at least 1 (use off to disable)".into());
        }
        if matches!(self.symmetric_cap, Some(c) if c < 2) {
            return err("symmetric_cap", "must be at least 2".into());
        }
        if self.fixed_k && self.k_max > self.k_total {
            return err("k_max", "cannot exceed k_total when fixed_k is set".into());
        }
        if self.fixed_k && self.modes.contains(&Mode::Asb) && self.k_max > self.n_rf {
            return err("k_max", "cannot exceed n_rf for asb when fixed_k is set".into());
        }
        if self.emit_bounds && self.k_max > self.n_rf {
            return err("k_max", "bounds need k_max <= n_rf".into());
        }
        if self.forced_equal && self.cpps.is_some() {
            return err("forced_equal", "cannot be combined with cpps".into());
        }
        Ok(())
    }

    /// Per-sub-carrier power from an SNR in dB: `P = SNR K_max sigma^2 / N_f`.
    pub fn power_for_snr(&self, snr_db: f64) -> f64 {
        10f64.powf(snr_db / 10.0) * self.k_max as f64 * self.noise_var / self.n_subcarriers as f64
    }
}
