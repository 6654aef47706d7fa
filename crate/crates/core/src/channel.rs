//! Multipath channel generation.
//!
//! Time-domain taps are drawn per user as an `N x L_p` matrix whose entry
//! `(n, q)` is the coefficient `h~_nk(q)` between BS antenna `n` and the
//! user for delay `q`. [`to_frequency`] turns them into per-sub-carrier
//! channel vectors
//!
//! ```text
//! lambda_nk(i) = sum_{s=0}^{L_p-1} conj(h~_nk(s)) * exp(-j 2 pi i s / N_f)
//! ```
//!
//! Sub-carriers are indexed `0..N_f` internally and reported 1-based.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, CMatrix, CVector};

/// Uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub n_antennas: usize,
    pub wavelength: f64,
    pub spacing: f64,
}

impl ArrayGeometry {
    /// Half-wavelength spaced array (unit wavelength).
    pub fn half_wavelength(n_antennas: usize) -> Self {
        Self {
            n_antennas,
            wavelength: 1.0,
            spacing: 0.5,
        }
    }
}

/// Array response `(1/sqrt N) [1, e^{j k d sin(theta)}, ..., e^{j (N-1) k d sin(theta)}]`
/// with `k = 2 pi / lambda`. Unit norm for every angle.
pub fn ula_steering(theta: f64, geom: &ArrayGeometry) -> CVector {
    ula_steering_from_sine(theta.sin(), geom)
}

/// Same as [`ula_steering`] but parameterised by `sin(theta)` directly.
pub fn ula_steering_from_sine(sine: f64, geom: &ArrayGeometry) -> CVector {
    let n = geom.n_antennas;
    let step = TAU / geom.wavelength * geom.spacing * sine;
    let scale = 1.0 / (n as f64).sqrt();
    CVector::from_iterator(
        n,
        (0..n).map(|i| Complex64::from_polar(scale, step * i as f64)),
    )
}

/// Geometric channel parameters. `aods[k]` holds the `L_s` path angles of
/// user `k` (shared by all taps); `pathloss[k]` is `rho_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricParams {
    pub n_scatterers: usize,
    pub n_taps: usize,
    pub pathloss: Vec<f64>,
    pub aods: Vec<Vec<f64>>,
}

impl GeometricParams {
    /// Unit pathloss for every user.
    pub fn new(n_taps: usize, aods: Vec<Vec<f64>>) -> Self {
        let n_scatterers = aods.first().map_or(0, Vec::len);
        Self {
            n_scatterers,
            n_taps,
            pathloss: vec![1.0; aods.len()],
            aods,
        }
    }

    pub fn n_users(&self) -> usize {
        self.aods.len()
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::DimensionMismatch(msg));
        if self.n_scatterers == 0 || self.n_taps == 0 {
            return bad("need at least one scatterer and one tap".into());
        }
        if self.pathloss.len() != self.aods.len() {
            return bad(format!(
                "{} pathloss values for {} users",
                self.pathloss.len(),
                self.aods.len()
            ));
        }
        for (k, a) in self.aods.iter().enumerate() {
            if a.len() != self.n_scatterers {
                return bad(format!("user {k} has {} AODs, expected {}", a.len(), self.n_scatterers));
            }
            if a.iter().any(|t| !(0.0..=TAU).contains(t)) {
                return bad(format!("user {k} has an AOD outside [0, 2pi]"));
            }
        }
        if self.pathloss.iter().any(|&r| r.is_nan() || r <= 0.0) {
            return bad("pathloss must be positive".into());
        }
        Ok(())
    }
}

/// Per-user tap matrices, each `N x L_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainChannel {
    taps: Vec<CMatrix>,
}

impl TimeDomainChannel {
    pub fn new(taps: Vec<CMatrix>) -> Result<Self> {
        if let Some(first) = taps.first() {
            let shape = first.shape();
            if taps.iter().any(|t| t.shape() != shape) {
                return Err(Error::DimensionMismatch(
                    "all users need the same antenna and tap count".into(),
                ));
            }
            if taps.iter().any(|t| t.iter().any(|z| !z.is_finite())) {
                return Err(Error::DimensionMismatch("non-finite tap".into()));
            }
        }
        Ok(Self { taps })
    }

    pub fn n_users(&self) -> usize {
        self.taps.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.taps.first().map_or(0, |t| t.nrows())
    }

    pub fn n_taps(&self) -> usize {
        self.taps.first().map_or(0, |t| t.ncols())
    }

    pub fn user_taps(&self, k: usize) -> &CMatrix {
        &self.taps[k]
    }
}

/// Draws `h~_k(q) = tau_k c_k(q)` with `c_k(q) = sqrt(N / (L_s rho_k L_p)) g`,
/// `g ~ CN(0, I_{L_s})`.
///
/// The extra `1/L_p` spreads power uniformly over the taps so that, for
/// `rho_k = 1`, every frequency-domain entry has unit variance.
pub fn draw_geometric_taps<R: Rng + ?Sized>(
    geom: &ArrayGeometry,
    params: &GeometricParams,
    rng: &mut R,
) -> Result<TimeDomainChannel> {
    params.validate()?;
    let n = geom.n_antennas;
    let ls = params.n_scatterers;
    let lp = params.n_taps;
    let taps = params
        .aods
        .iter()
        .zip(&params.pathloss)
        .map(|(angles, &rho)| {
            let tau = CMatrix::from_columns(
                &angles.iter().map(|&t| ula_steering(t, geom)).collect::<Vec<_>>(),
            );
            let scale = (n as f64 / (ls as f64 * rho * lp as f64)).sqrt();
            let gains = CMatrix::from_fn(ls, lp, |_, _| complex_gaussian(rng, 1.0) * scale);
            tau * gains
        })
        .collect();
    TimeDomainChannel::new(taps)
}

/// I.i.d. Rayleigh taps with per-tap variance `1/L_p`.
pub fn draw_rayleigh_taps<R: Rng + ?Sized>(
    n_antennas: usize,
    n_users: usize,
    n_taps: usize,
    rng: &mut R,
) -> TimeDomainChannel {
    let var = 1.0 / n_taps as f64;
    let taps = (0..n_users)
        .map(|_| CMatrix::from_fn(n_antennas, n_taps, |_, _| complex_gaussian(rng, var)))
        .collect();
    TimeDomainChannel { taps }
}

/// Per-sub-carrier channel matrices `H_i = [h_i1, ..., h_iK]`, each `N x K_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyChannel {
    subcarriers: Vec<CMatrix>,
}

impl FrequencyChannel {
    pub fn from_subcarriers(subcarriers: Vec<CMatrix>) -> Result<Self> {
        if let Some(first) = subcarriers.first() {
            let shape = first.shape();
            if subcarriers.iter().any(|h| h.shape() != shape) {
                return Err(Error::DimensionMismatch(
                    "sub-carrier channel matrices differ in shape".into(),
                ));
            }
        }
        Ok(Self { subcarriers })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.subcarriers.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.subcarriers.first().map_or(0, |h| h.nrows())
    }

    pub fn n_users(&self) -> usize {
        self.subcarriers.first().map_or(0, |h| h.ncols())
    }

    /// `N x K_t` channel matrix of sub-carrier `i` (0-based).
    pub fn subcarrier(&self, i: usize) -> &CMatrix {
        &self.subcarriers[i]
    }

    pub fn subcarriers(&self) -> &[CMatrix] {
        &self.subcarriers
    }

    /// `h_ik`.
    pub fn user_vector(&self, i: usize, k: usize) -> CVector {
        self.subcarriers[i].column(k).into_owned()
    }

    /// Keeps only the first `rows` antennas.
    pub fn truncate_antennas(&self, rows: usize) -> Self {
        Self {
            subcarriers: self
                .subcarriers
                .iter()
                .map(|h| h.rows(0, rows).into_owned())
                .collect(),
        }
    }
}

/// DFT of the conjugated tap sequence at every sub-carrier.
pub fn to_frequency(ch: &TimeDomainChannel, n_subcarriers: usize) -> Result<FrequencyChannel> {
    let lp = ch.n_taps();
    if lp > n_subcarriers {
        return Err(Error::TooManyTaps {
            taps: lp,
            subcarriers: n_subcarriers,
        });
    }
    let n = ch.n_antennas();
    let kt = ch.n_users();
    // twiddle[(i * s) mod N_f] = exp(-j 2 pi i s / N_f)
    let twiddle: Vec<Complex64> = (0..n_subcarriers)
        .map(|m| Complex64::from_polar(1.0, -TAU * m as f64 / n_subcarriers as f64))
        .collect();
    let subcarriers = (0..n_subcarriers)
        .map(|i| {
            CMatrix::from_fn(n, kt, |a, k| {
                let taps = ch.user_taps(k);
                (0..lp)
                    .map(|s| taps[(a, s)].conj() * twiddle[(i * s) % n_subcarriers])
                    .sum()
            })
        })
        .collect();
    Ok(FrequencyChannel { subcarriers })
}

/// AOD construction confining every path of every user to `N_a` orthogonal
/// Fourier bins.
///
/// Grid sines are `s_n = 2 (n - 1) / N * sin(base_angle)`, `n = 1..=N_a`; each
/// path picks a bin uniformly and adds jitter uniform in `[-jitter, jitter]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinnedAodSpec {
    pub base_angle: f64,
    pub n_bins: usize,
    pub jitter: f64,
}

impl BinnedAodSpec {
    /// `jitter = 1/(2N)`, i.e. a quarter of the bin spacing for a
    /// half-wavelength array.
    pub fn with_default_jitter(base_angle: f64, n_bins: usize, n_antennas: usize) -> Self {
        Self {
            base_angle,
            n_bins,
            jitter: 1.0 / (2.0 * n_antennas as f64),
        }
    }

    pub fn grid_sines(&self, n_antennas: usize) -> Vec<f64> {
        let scale = self.base_angle.sin();
        (0..self.n_bins)
            .map(|n| 2.0 * n as f64 / n_antennas as f64 * scale)
            .collect()
    }
}

/// AODs (radians in `[0, 2pi]`) for `n_users` users with `n_scatterers` paths
/// each, following [`BinnedAodSpec`].
pub fn gen_binned_aods<R: Rng + ?Sized>(
    spec: &BinnedAodSpec,
    n_antennas: usize,
    n_users: usize,
    n_scatterers: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let grid = spec.grid_sines(n_antennas);
    let max_sine = grid.iter().map(|s| s.abs()).fold(0.0, f64::max) + spec.jitter.abs();
    if spec.n_bins == 0 || max_sine > 1.0 {
        return Err(Error::AodGridOutOfRange { max_sine });
    }
    let j = spec.jitter.abs();
    Ok((0..n_users)
        .map(|_| {
            (0..n_scatterers)
                .map(|_| {
                    let bin = rng.random_range(0..grid.len());
                    let jitter = if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
                    sine_to_angle((grid[bin] + jitter).clamp(-1.0, 1.0))
                })
                .collect()
        })
        .collect())
}

/// AODs uniform on `[0, 2pi)`.
pub fn uniform_aods<R: Rng + ?Sized>(
    n_users: usize,
    n_scatterers: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..n_users)
        .map(|_| (0..n_scatterers).map(|_| rng.random_range(0.0..TAU)).collect())
        .collect()
}

fn sine_to_angle(s: f64) -> f64 {
    let a = s.asin();
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}
