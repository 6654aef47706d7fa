//! Analog matrix realization from fixed phase-shifter pairs and switches.
//!
//! A bank of precision `p` holds `40p` constant-phase pairs. Each pair sums
//! to a fixed value `+-2v` or `+-2jv`, with `v = d * 10^{-l}` for digit
//! `d = 1..=10` and decimal place `l = 1..=p`. Pairs are laid out in four
//! sections of `10p` (real positive, real negative, imaginary positive,
//! imaginary negative), each ordered by place then digit:
//!
//! ```text
//! index = section * 10p + (l - 1) * 10 + (d - 1)
//! ```
//!
//! An RF chain realizes its column of the analog matrix by closing switches:
//! antenna `n` receives the sum of the pairs it is connected to. Half of
//! each real or imaginary component is rounded to `p` decimal places and
//! every nonzero digit closes one switch, so each component is within
//! `10^{-p}` of its target.
//!
//! Two signal flows are supported. In the asymmetric flow a pair may feed
//! every antenna. In the symmetric flow each pair feeds at most `L~`
//! antennas; requests beyond a pair's capacity are moved to the nearest
//! digit of the same place and sign that still has room. This capacity
//! policy is one concrete reading of "round off each significant digit"
//! and trades accuracy for fewer connections.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{ConfigError, Error, Result};
use crate::hybrid::{phase_pair_imag, phase_pair_real, PhasePair};
use crate::linalg::CMatrix;

/// Digits per decimal place (`1..=10`).
const DIGITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Section {
    RealPositive = 0,
    RealNegative = 1,
    ImagPositive = 2,
    ImagNegative = 3,
}

impl Section {
    pub const ALL: [Section; 4] = [
        Section::RealPositive,
        Section::RealNegative,
        Section::ImagPositive,
        Section::ImagNegative,
    ];

    fn unit(self) -> Complex64 {
        match self {
            Section::RealPositive => Complex64::new(1.0, 0.0),
            Section::RealNegative => Complex64::new(-1.0, 0.0),
            Section::ImagPositive => Complex64::new(0.0, 1.0),
            Section::ImagNegative => Complex64::new(0.0, -1.0),
        }
    }
}

/// Shared constant-phase bank.
#[derive(Debug, Clone, PartialEq)]
pub struct CppsBank {
    precision: usize,
    values: Vec<Complex64>,
    phases: Vec<PhasePair>,
}

impl CppsBank {
    pub fn precision(&self) -> usize {
        self.precision
    }

    /// `N_cp = 40p`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pair sums `d_cp`.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Generating phases of each pair.
    pub fn phases(&self) -> &[PhasePair] {
        &self.phases
    }

    /// Index of the pair for `section`, decimal `place` (1-based) and
    /// `digit` (`1..=10`).
    pub fn index(&self, section: Section, place: usize, digit: usize) -> usize {
        debug_assert!((1..=self.precision).contains(&place) && (1..=DIGITS).contains(&digit));
        section as usize * DIGITS * self.precision + (place - 1) * DIGITS + (digit - 1)
    }
}

/// Bank of precision `p >= 1`.
pub fn build_bank(precision: usize) -> CppsBank {
    assert!(precision >= 1, "bank precision must be at least 1");
    let mut values = Vec::with_capacity(4 * DIGITS * precision);
    let mut phases = Vec::with_capacity(values.capacity());
    for section in Section::ALL {
        for place in 1..=precision {
            for digit in 1..=DIGITS {
                let v = 2.0 * digit as f64 * 10f64.powi(-(place as i32));
                let signed = match section {
                    Section::RealPositive | Section::ImagPositive => v,
                    Section::RealNegative | Section::ImagNegative => -v,
                };
                let pair = match section {
                    Section::RealPositive | Section::RealNegative => phase_pair_real(signed),
                    Section::ImagPositive | Section::ImagNegative => phase_pair_imag(signed),
                }
                .expect("bank values lie in [-2, 2]");
                values.push(section.unit() * v);
                phases.push(pair);
            }
        }
    }
    CppsBank {
        precision,
        values,
        phases,
    }
}

/// One closed switch request: `digit` at decimal `place` of a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DigitChoice {
    pub section: Section,
    pub place: usize,
    pub digit: usize,
}

impl DigitChoice {
    /// Value contributed by the selected pair.
    pub fn value(&self) -> Complex64 {
        self.section.unit() * (2.0 * self.digit as f64 * 10f64.powi(-(self.place as i32)))
    }
}

/// Digit decomposition of one entry.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EntryDigits {
    pub real: Vec<DigitChoice>,
    pub imag: Vec<DigitChoice>,
}

impl EntryDigits {
    pub fn value(&self) -> Complex64 {
        self.real.iter().chain(&self.imag).map(DigitChoice::value).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DigitChoice> {
        self.real.iter().chain(&self.imag)
    }
}

/// Rounds `x/2` to `p` decimals and emits one choice per nonzero digit.
/// The leading digit may be 10 (for `|x/2|` rounding to 1).
fn quantize_component(x: f64, precision: usize, imag: bool) -> Result<Vec<DigitChoice>> {
    if !x.is_finite() || x.abs() > 2.0 + 1e-12 {
        return Err(Error::PhaseDomain { value: x });
    }
    let section = match (imag, x < 0.0) {
        (false, false) => Section::RealPositive,
        (false, true) => Section::RealNegative,
        (true, false) => Section::ImagPositive,
        (true, true) => Section::ImagNegative,
    };
    let scale = 10u64.pow(precision as u32);
    let q = ((x.abs() / 2.0) * scale as f64).round().min(scale as f64) as u64;
    let mut out = Vec::new();
    let mut rem = q;
    let mut unit = scale / 10;
    for place in 1..=precision {
        let d = if place == 1 { rem / unit } else { (rem / unit) % 10 };
        if place == 1 {
            rem -= d * unit;
        }
        if d > 0 {
            out.push(DigitChoice {
                section,
                place,
                digit: d as usize,
            });
        }
        unit = (unit / 10).max(1);
    }
    Ok(out)
}

/// Digit decomposition of `z` at precision `p`; each component within
/// `10^{-p}` of its target.
pub fn quantize_entry(z: Complex64, precision: usize) -> Result<EntryDigits> {
    Ok(EntryDigits {
        real: quantize_component(z.re, precision, false)?,
        imag: quantize_component(z.im, precision, true)?,
    })
}

/// Switch pattern of one RF chain: `N x N_cp` binary matrix stored as the
/// list of closed pair indices per antenna.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchMatrix {
    n_pairs: usize,
    rows: Vec<Vec<usize>>,
}

impl SwitchMatrix {
    pub fn empty(n_antennas: usize, n_pairs: usize) -> Self {
        Self {
            n_pairs,
            rows: vec![Vec::new(); n_antennas],
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.rows.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    /// Closes switch `(antenna, pair)`. Closing twice has no effect.
    pub fn close(&mut self, antenna: usize, pair: usize) {
        assert!(pair < self.n_pairs, "pair index out of range");
        let row = &mut self.rows[antenna];
        if let Err(pos) = row.binary_search(&pair) {
            row.insert(pos, pair);
        }
    }

    pub fn is_closed(&self, antenna: usize, pair: usize) -> bool {
        self.rows[antenna].binary_search(&pair).is_ok()
    }

    pub fn antenna_pairs(&self, antenna: usize) -> &[usize] {
        &self.rows[antenna]
    }

    pub fn row_degree(&self, antenna: usize) -> usize {
        self.rows[antenna].len()
    }

    pub fn column_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_pairs];
        for row in &self.rows {
            for &m in row {
                deg[m] += 1;
            }
        }
        deg
    }

    pub fn max_row_degree(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_column_degree(&self) -> usize {
        self.column_degrees().into_iter().max().unwrap_or(0)
    }

    pub fn closed_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Realized analog matrix next to its target.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedAnalog {
    pub matrix: CMatrix,
    pub target: CMatrix,
}

impl RealizedAnalog {
    /// Largest real or imaginary absolute error over all entries.
    pub fn max_component_error(&self) -> f64 {
        self.matrix
            .iter()
            .zip(self.target.iter())
            .map(|(a, t)| (a.re - t.re).abs().max((a.im - t.im).abs()))
            .fold(0.0, f64::max)
    }

    /// Mean of the real and imaginary absolute errors.
    pub fn mean_component_error(&self) -> f64 {
        let n = self.matrix.len();
        if n == 0 {
            return 0.0;
        }
        self.matrix
            .iter()
            .zip(self.target.iter())
            .map(|(a, t)| (a.re - t.re).abs() + (a.im - t.im).abs())
            .sum::<f64>()
            / (2 * n) as f64
    }

    /// `||A_(:,i) - A~_(:,i)||^2` per column.
    pub fn column_sq_errors(&self) -> Vec<f64> {
        (0..self.matrix.ncols())
            .map(|i| (self.matrix.column(i) - self.target.column(i)).norm_squared())
            .collect()
    }
}

/// Signal-flow variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Flow {
    /// Every pair may feed every antenna.
    #[default]
    #[serde(rename = "asym")]
    Asymmetric,
    /// Each pair feeds at most `L~` antennas.
    #[serde(rename = "sym")]
    Symmetric,
}

impl Flow {
    pub fn name(self) -> &'static str {
        match self {
            Flow::Asymmetric => "asym",
            Flow::Symmetric => "sym",
        }
    }
}

impl std::str::FromStr for Flow {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "asym" => Ok(Flow::Asymmetric),
            "sym" => Ok(Flow::Symmetric),
            other => Err(format!("unknown flow '{other}', expected asym or sym")),
        }
    }
}

/// Per-antenna pair cap `L-bar`, counted in pairs: `2p`.
pub fn row_cap(bank: &CppsBank) -> usize {
    2 * bank.precision()
}

/// Default symmetric per-pair cap `ceil(N/10)`, never below 2.
pub fn default_symmetric_cap(n_antennas: usize) -> usize {
    n_antennas.div_ceil(DIGITS).max(2)
}

/// Column `i` of `A` is `S^i d_cp`.
pub fn realized_matrix(switches: &[SwitchMatrix], bank: &CppsBank) -> Result<CMatrix> {
    let n = switches.first().map_or(0, SwitchMatrix::n_antennas);
    if switches
        .iter()
        .any(|s| s.n_antennas() != n || s.n_pairs() != bank.len())
    {
        return Err(Error::DimensionMismatch(
            "switch matrices do not match the bank or each other".into(),
        ));
    }
    let values = bank.values();
    let mut a = CMatrix::zeros(n, switches.len());
    for (i, s) in switches.iter().enumerate() {
        for ant in 0..n {
            a[(ant, i)] = s.antenna_pairs(ant).iter().map(|&m| values[m]).sum();
        }
    }
    Ok(a)
}

fn close_all(s: &mut SwitchMatrix, bank: &CppsBank, antenna: usize, digits: &EntryDigits) {
    for d in digits.iter() {
        s.close(antenna, bank.index(d.section, d.place, d.digit));
    }
}

/// Asymmetric flow: every entry rounded independently.
pub fn assign_asymmetric(target: &CMatrix, bank: &CppsBank) -> Result<(Vec<SwitchMatrix>, RealizedAnalog)> {
    let (n, r) = target.shape();
    let p = bank.precision();
    let mut switches = Vec::with_capacity(r);
    for i in 0..r {
        let mut s = SwitchMatrix::empty(n, bank.len());
        for ant in 0..n {
            let digits = quantize_entry(target[(ant, i)], p)?;
            close_all(&mut s, bank, ant, &digits);
        }
        switches.push(s);
    }
    let matrix = realized_matrix(&switches, bank)?;
    Ok((
        switches,
        RealizedAnalog {
            matrix,
            target: target.clone(),
        },
    ))
}

/// Symmetric flow with per-pair cap `cap >= 2`.
///
/// Within each (section, place) group of an RF chain, requests are served
/// in descending digit order (ties by antenna). A request whose digit is
/// full moves to the nearest digit with room, ties toward zero; digit 0
/// (leave the switch open) always has room.
pub fn assign_symmetric(
    target: &CMatrix,
    bank: &CppsBank,
    cap: usize,
) -> Result<(Vec<SwitchMatrix>, RealizedAnalog)> {
    if cap < 2 {
        return Err(ConfigError::new("symmetric_cap", "must be at least 2").into());
    }
    let (n, r) = target.shape();
    let p = bank.precision();
    let mut switches = Vec::with_capacity(r);
    for i in 0..r {
        let mut requests: Vec<Vec<(usize, usize)>> = vec![Vec::new(); 4 * p];
        for ant in 0..n {
            for d in quantize_entry(target[(ant, i)], p)?.iter() {
                requests[d.section as usize * p + d.place - 1].push((d.digit, ant));
            }
        }
        let mut s = SwitchMatrix::empty(n, bank.len());
        for (group, reqs) in requests.iter_mut().enumerate() {
            let section = Section::ALL[group / p];
            let place = group % p + 1;
            reqs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut load = [0usize; DIGITS + 1];
            for &(digit, ant) in reqs.iter() {
                let chosen = nearest_free(digit, &load, cap);
                if chosen > 0 {
                    load[chosen] += 1;
                    s.close(ant, bank.index(section, place, chosen));
                }
            }
        }
        switches.push(s);
    }
    let matrix = realized_matrix(&switches, bank)?;
    Ok((
        switches,
        RealizedAnalog {
            matrix,
            target: target.clone(),
        },
    ))
}

fn nearest_free(digit: usize, load: &[usize; DIGITS + 1], cap: usize) -> usize {
    for dist in 0..=DIGITS {
        // Lower candidate first so ties go toward zero.
        if let Some(lo) = digit.checked_sub(dist) {
            if lo == 0 || load[lo] < cap {
                return lo;
            }
        }
        let hi = digit + dist;
        if dist > 0 && hi <= DIGITS && load[hi] < cap {
            return hi;
        }
    }
    0
}

/// A realized analog matrix with its switch patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct CppsRealization {
    pub bank: CppsBank,
    pub flow: Flow,
    pub switches: Vec<SwitchMatrix>,
    pub realized: RealizedAnalog,
}

impl CppsRealization {
    /// Pairs installed across all RF chains, `N_cp * r_t`.
    pub fn pair_count(&self) -> usize {
        self.bank.len() * self.switches.len()
    }
}

/// Realizes `target` at precision `p` with the given flow. `cap` overrides
/// the symmetric per-pair cap (default [`default_symmetric_cap`]).
pub fn realize(target: &CMatrix, precision: usize, flow: Flow, cap: Option<usize>) -> Result<CppsRealization> {
    if precision == 0 {
        return Err(ConfigError::new("cpps", "precision must be at least 1").into());
    }
    let bank = build_bank(precision);
    let (switches, realized) = match flow {
        Flow::Asymmetric => assign_asymmetric(target, &bank)?,
        Flow::Symmetric => assign_symmetric(
            target,
            &bank,
            cap.unwrap_or_else(|| default_symmetric_cap(target.nrows())),
        )?,
    };
    Ok(CppsRealization {
        bank,
        flow,
        switches,
        realized,
    })
}

/// Writes closed switches as `rf_chain,antenna,pair_index` lines under a
/// header, all indices 0-based.
pub fn write_triplets<W: Write>(switches: &[SwitchMatrix], mut out: W) -> std::io::Result<()> {
    writeln!(out, "rf_chain,antenna,pair_index")?;
    for (i, s) in switches.iter().enumerate() {
        for ant in 0..s.n_antennas() {
            for &m in s.antenna_pairs(ant) {
                writeln!(out, "{i},{ant},{m}")?;
            }
        }
    }
    Ok(())
}
