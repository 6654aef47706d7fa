//! Average-rate upper bounds for ZF with equal power over i.i.d. Rayleigh
//! channels.
//!
//! Every bound has the form `K log2(1 + (P / (K sigma^2)) E{chi_max^M(L)})`
//! per sub-carrier, where `E{chi_max^M(L)}` is the mean of the largest of `L`
//! independent chi-square variables with `M` degrees of freedom:
//!
//! ```text
//! E{chi_max^M(L)} = integral_0^inf x L F(x)^{L-1} f(x) dx
//! ```
//!
//! with `F(x) = P(M/2, x/2)` the regularized lower incomplete gamma function.
//! The integral is evaluated by composite trapezoid in `t = sqrt(x)`, which
//! keeps the integrand bounded for `M = 1`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;

/// Mean of the maximum of `groups` chi-square variables with `dof` degrees
/// of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChiMaxSpec {
    pub dof: usize,
    pub groups: usize,
}

impl ChiMaxSpec {
    pub fn new(dof: usize, groups: usize) -> Self {
        assert!(dof >= 1 && groups >= 1, "dof and group count must be positive");
        Self { dof, groups }
    }
}

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`: series for `x < a + 1`,
/// continued fraction otherwise.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (sum * log_prefix.exp()).min(1.0)
    } else {
        // Modified Lentz evaluation of the continued fraction for Q(a, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - log_prefix.exp() * h).max(0.0)
    }
}

/// Chi-square CDF with `dof` degrees of freedom.
pub fn chi_square_cdf(dof: usize, x: f64) -> f64 {
    regularized_gamma_p(dof as f64 / 2.0, x / 2.0)
}

/// Chi-square density with `dof` degrees of freedom.
pub fn chi_square_pdf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return if dof == 2 { 0.5 } else { 0.0 };
    }
    let k = dof as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

const TAIL_MASS: f64 = 1e-10;
const REL_STEP_CHANGE: f64 = 1e-6;

/// Upper integration limit with tail mass `1 - F(x)^L` below `1e-10`.
fn upper_limit(spec: ChiMaxSpec) -> f64 {
    let m = spec.dof as f64;
    let l = spec.groups as f64;
    let mut x = m + 2.0 * l + 20.0 * (2.0 * m).sqrt() * (1.0 + l.ln());
    while 1.0 - chi_square_cdf(spec.dof, x).powf(l) >= TAIL_MASS {
        x *= 1.5;
    }
    x
}

/// Trapezoid on `[0, sqrt(x_hi)]` of `weight(x) L F(x)^{L-1} f(x) 2t` with
/// `x = t^2`, doubling the resolution until the relative change is below
/// `1e-6`.
fn integrate_max_density(spec: ChiMaxSpec, weight: impl Fn(f64) -> f64) -> f64 {
    let t_hi = upper_limit(spec).sqrt();
    let l = spec.groups as f64;
    let g = |t: f64| {
        let x = t * t;
        let dens = if spec.dof == 1 {
            // f(t^2) 2t stays finite at t = 0.
            (2.0 / std::f64::consts::PI).sqrt() * (-x / 2.0).exp()
        } else {
            chi_square_pdf(spec.dof, x) * 2.0 * t
        };
        let cdf = chi_square_cdf(spec.dof, x);
        let pow = if spec.groups == 1 { 1.0 } else { cdf.powf(l - 1.0) };
        weight(x) * l * pow * dens
    };
    let mut n = 256usize;
    let mut h = t_hi / n as f64;
    let mut sum = 0.5 * (g(0.0) + g(t_hi)) + (1..n).map(|i| g(i as f64 * h)).sum::<f64>();
    let mut prev = sum * h;
    loop {
        // Doubling reuses the existing nodes; only midpoints are new.
        let mid: f64 = (0..n).map(|i| g((i as f64 + 0.5) * h)).sum();
        sum += mid;
        n *= 2;
        h /= 2.0;
        let cur = sum * h;
        if (cur - prev).abs() <= REL_STEP_CHANGE * cur.abs() || n >= 1 << 22 {
            return cur;
        }
        prev = cur;
    }
}

/// `E{chi_max^M(L)}` by quadrature.
pub fn chi_max_mean_integral(spec: ChiMaxSpec) -> f64 {
    integrate_max_density(spec, |x| x)
}

/// Total mass of the maximum's density under the same quadrature.
pub fn chi_max_density_mass(spec: ChiMaxSpec) -> f64 {
    integrate_max_density(spec, |_| 1.0)
}

/// `E{chi_max^2(L)} = 2L sum_{k=0}^{L-1} (-1)^k C(L-1, k) / (k+1)^2`,
/// summed in exact rational arithmetic.
pub fn chi_max_mean_closed_dof2(groups: usize) -> f64 {
    assert!(groups >= 1, "group count must be positive");
    let mut sum = BigRational::zero();
    let mut binom = BigInt::one();
    for k in 0..groups {
        let denom = BigInt::from((k + 1) * (k + 1));
        let term = BigRational::new(binom.clone(), denom);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        // C(L-1, k+1) = C(L-1, k) (L-1-k) / (k+1)
        binom = binom * BigInt::from(groups - 1 - k) / BigInt::from(k + 1);
    }
    let total = sum * BigRational::from_integer(BigInt::from(2 * groups));
    total.to_f64().expect("finite rational")
}

/// `2 H_L`, the harmonic form of the dof-2 mean.
pub fn harmonic_dof2(groups: usize) -> f64 {
    2.0 * (1..=groups).map(|k| 1.0 / k as f64).sum::<f64>()
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Sample mean of `max` over `L` chi-square draws. Chunks of trials run in
/// parallel, each on a stream seeded from `rng`, so the result depends only
/// on `rng`'s state.
pub fn chi_max_mc_oracle<R: Rng + ?Sized>(spec: ChiMaxSpec, trials: usize, rng: &mut R) -> McEstimate {
    const CHUNK: usize = 1 << 14;
    let chunks = trials.div_ceil(CHUNK);
    let seeds: Vec<u64> = (0..chunks).map(|_| rng.random()).collect();
    let dist = ChiSquared::new(spec.dof as f64).expect("positive dof");
    let (sum, sum_sq) = seeds
        .par_iter()
        .enumerate()
        .map(|(c, &seed)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let count = CHUNK.min(trials - c * CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..count {
                let m = (0..spec.groups)
                    .map(|_| dist.sample(&mut r))
                    .fold(f64::NEG_INFINITY, f64::max);
                s += m;
                s2 += m * m;
            }
            (s, s2)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = trials as f64;
    let mean = sum / n;
    let var = if trials > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    McEstimate {
        mean,
        std_err: (var / n).sqrt(),
    }
}

/// Inputs of the average-rate bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n_antennas: usize,
    pub n_rf: usize,
    /// Users per sub-carrier `K`.
    pub k: usize,
    pub k_total: usize,
    pub n_subcarriers: usize,
    /// Per-sub-carrier power `P`.
    pub power: f64,
    pub noise_var: f64,
    /// Sub-carriers credited with full-array gains in the `hb` bound;
    /// `None` for `ceil(N_a / K)`.
    pub s_tilde: Option<usize>,
}

impl BoundParams {
    /// `K_g = ceil(K_t / K)`.
    pub fn k_g(&self) -> usize {
        self.k_total.div_ceil(self.k).max(1)
    }

    /// `K_s = ceil(K_t N_f / (K N_a))`.
    pub fn k_s(&self) -> usize {
        (self.k_total * self.n_subcarriers)
            .div_ceil(self.k * self.n_rf)
            .max(1)
    }

    pub fn s_tilde_bound(&self) -> usize {
        self.s_tilde
            .unwrap_or_else(|| self.n_rf.div_ceil(self.k))
            .clamp(1, self.n_subcarriers.max(1))
    }

    fn validate(&self) {
        assert!(
            self.k >= 1 && self.k <= self.n_rf && self.n_rf <= self.n_antennas,
            "bounds need 1 <= K <= N_a <= N"
        );
    }
}

/// Bounds on the average sum rate over all sub-carriers, bits/s/Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBounds {
    pub asb: f64,
    pub hb: f64,
    pub db: f64,
}

impl RateBounds {
    pub fn get(&self, mode: crate::scheduler::Mode) -> f64 {
        match mode {
            crate::scheduler::Mode::Asb => self.asb,
            crate::scheduler::Mode::Hb => self.hb,
            crate::scheduler::Mode::Db => self.db,
        }
    }
}

/// Average-rate bounds for antenna selection, hybrid and digital
/// beamforming with `K` users per sub-carrier and equal power.
pub fn rate_bounds(params: &BoundParams) -> RateBounds {
    params.validate();
    let k = params.k as f64;
    let snr = params.power / (k * params.noise_var);
    let per_sc = |dof: usize, groups: usize| {
        k * (1.0 + snr * chi_max_mean_integral(ChiMaxSpec::new(dof, groups))).log2()
    };
    let nf = params.n_subcarriers as f64;
    let small = per_sc(params.n_rf - params.k + 1, params.k_g());
    let full = per_sc(params.n_antennas - params.k + 1, params.k_g());
    let s = params.s_tilde_bound();
    let hb = s as f64 * per_sc(params.n_antennas - params.k + 1, params.k_s())
        + (params.n_subcarriers - s) as f64 * small;
    RateBounds {
        asb: nf * small,
        hb,
        db: nf * full,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn incomplete_gamma_closed_forms() {
        // P(1, x) = 1 - e^{-x}
        for &x in &[0.1, 1.0, 3.0, 20.0] {
            assert!((regularized_gamma_p(1.0, x) - (1.0 - (-x).exp())).abs() < 1e-13);
        }
        assert_eq!(regularized_gamma_p(2.5, 0.0), 0.0);
    }

    #[test]
    fn incomplete_gamma_matches_statrs() {
        for &a in &[0.5, 1.0, 2.5, 24.5, 28.5] {
            for &x in &[0.01, 0.5, 2.0, 10.0, 30.0, 80.0] {
                let want = statrs::function::gamma::gamma_lr(a, x);
                let got = regularized_gamma_p(a, x);
                assert!((got - want).abs() < 1e-12, "a={a} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn single_group_mean_is_dof() {
        for m in [1, 2, 5, 9, 57] {
            let e = chi_max_mean_integral(ChiMaxSpec::new(m, 1));
            assert!((e - m as f64).abs() < 1e-4 * m as f64, "{m}: {e}");
        }
    }

    #[test]
    fn dof_two_examples() {
        assert!((chi_max_mean_integral(ChiMaxSpec::new(2, 2)) - 3.0).abs() < 1e-4);
        assert!((chi_max_mean_integral(ChiMaxSpec::new(2, 3)) - 11.0 / 3.0).abs() < 1e-4);
        assert_eq!(chi_max_mean_closed_dof2(1), 2.0);
        assert!((chi_max_mean_closed_dof2(2) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_is_harmonic_and_matches_quadrature() {
        for l in 1..=32 {
            let closed = chi_max_mean_closed_dof2(l);
            assert!((closed - harmonic_dof2(l)).abs() < 1e-12);
            let quad = chi_max_mean_integral(ChiMaxSpec::new(2, l));
            assert!((closed - quad).abs() < 1e-3, "{l}: {closed} vs {quad}");
        }
    }

    #[test]
    fn density_mass_is_one() {
        for (m, l) in [(1, 1), (1, 8), (2, 4), (9, 3), (57, 8)] {
            let mass = chi_max_density_mass(ChiMaxSpec::new(m, l));
            assert!((mass - 1.0).abs() < 1e-6, "({m},{l}): {mass}");
        }
    }

    #[test]
    fn mc_oracle_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = chi_max_mc_oracle(ChiMaxSpec::new(3, 1), 200_000, &mut rng);
        assert!((e.mean - 3.0).abs() < 3.0 * e.std_err + 1e-12);
        let e = chi_max_mc_oracle(ChiMaxSpec::new(2, 2), 200_000, &mut rng);
        assert!((e.mean - 3.0).abs() < 3.0 * e.std_err);
    }

    #[test]
    fn mc_oracle_is_reproducible() {
        let a = chi_max_mc_oracle(ChiMaxSpec::new(4, 3), 50_000, &mut ChaCha8Rng::seed_from_u64(9));
        let b = chi_max_mc_oracle(ChiMaxSpec::new(4, 3), 50_000, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    fn params(n: usize, na: usize, k: usize, kt: usize, nf: usize, power: f64) -> BoundParams {
        BoundParams {
            n_antennas: n,
            n_rf: na,
            k,
            k_total: kt,
            n_subcarriers: nf,
            power,
            noise_var: 1.0,
            s_tilde: None,
        }
    }

    #[test]
    fn digital_bound_single_group() {
        let p = params(64, 16, 8, 8, 16, 4.0);
        assert_eq!(p.k_g(), 1);
        let b = rate_bounds(&p);
        let want = 8.0 * 16.0 * (1.0 + 4.0 / 8.0 * 57.0f64).log2();
        assert!((b.db - want).abs() < 1e-3, "{} vs {want}", b.db);
    }

    #[test]
    fn full_rf_makes_asb_equal_db() {
        let b = rate_bounds(&params(16, 16, 4, 12, 4, 3.0));
        assert!((b.asb - b.db).abs() < 1e-12);
    }

    #[test]
    fn zero_power_zero_bounds() {
        let b = rate_bounds(&params(32, 8, 4, 16, 4, 0.0));
        assert_eq!((b.asb, b.hb, b.db), (0.0, 0.0, 0.0));
    }

    #[test]
    fn derived_counts() {
        let p = params(64, 16, 8, 32, 16, 1.0);
        assert_eq!(p.k_g(), 4);
        assert_eq!(p.k_s(), 4);
        assert_eq!(p.s_tilde_bound(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mean_increases_in_dof_and_groups(m in 1usize..40, l in 1usize..12) {
            let base = chi_max_mean_integral(ChiMaxSpec::new(m, l));
            prop_assert!(chi_max_mean_integral(ChiMaxSpec::new(m + 1, l)) > base);
            prop_assert!(chi_max_mean_integral(ChiMaxSpec::new(m, l + 1)) > base);
        }
    }
}
