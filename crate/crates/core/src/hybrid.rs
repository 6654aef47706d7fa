//! Exact hybrid factorization of a stacked digital precoder.
//!
//! Given `B^d = [B_1^d, ..., B_Nf^d]` of rank `r_t`, [`factorize`] returns an
//! analog matrix `A` (`N x r_t`), a mixing matrix `B~` (`r_t x r_t`) and
//! per-sub-carrier baseband precoders `B~_i^d` with `A B~ B~_i^d = B_i^d`.
//!
//! Construction:
//!
//! 1. `B^d = Q^d B~^d` with `Q^d` the leading `r_t` left singular vectors.
//! 2. `(Q^d)^H = B_bar [T, S]` by QR, `T` upper triangular `r_t x r_t`.
//! 3. With `X = T^{-1} S` and `alpha_jj = max(1, max_n |X_jn|) / 2`,
//!    `(Q^d)^H = (B_bar T alpha) (alpha^{-1} [I, X])`, so
//!    `A^H = alpha^{-1} [I, X]` and `B~ = alpha T^H B_bar^H`.
//!
//! Every entry of `A` then has modulus at most 2 and is the sum of two
//! unit-modulus phase shifters ([`phase_pair_complex`]). The first `r_t`
//! rows (in `antenna_order`) are diagonal, so `A` has at most
//! `r_t (N - r_t + 1)` nonzero entries.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{rank_from_singular_values, CMatrix};

pub use crate::linalg::numerical_rank;

/// Slack accepted before a modulus counts as exceeding 2.
const DOMAIN_SLACK: f64 = 1e-12;

/// Smallest singular value of the leading block of `Q^H` below which the
/// antenna order is pivoted.
const PIVOT_MIN_SV: f64 = 1e-8;

/// Horizontally stacked per-sub-carrier precoders.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalStack {
    matrix: CMatrix,
    widths: Vec<usize>,
}

impl DigitalStack {
    /// Stacks the blocks left to right. Blocks may have zero columns.
    pub fn new(blocks: &[CMatrix]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.nrows());
        if blocks.iter().any(|b| b.nrows() != rows) {
            return Err(Error::DimensionMismatch(
                "all precoder blocks need the same antenna count".into(),
            ));
        }
        Ok(Self {
            matrix: crate::linalg::hstack(blocks),
            widths: blocks.iter().map(|b| b.ncols()).collect(),
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn n_blocks(&self) -> usize {
        self.widths.len()
    }

    pub fn block(&self, i: usize) -> CMatrix {
        let start: usize = self.widths[..i].iter().sum();
        self.matrix.columns(start, self.widths[i]).into_owned()
    }

    /// Default rank tolerance `max(N, K N_f) * eps`, relative to `sigma_max`.
    pub fn default_tol(&self) -> f64 {
        crate::linalg::default_rank_tol(self.matrix.nrows(), self.matrix.ncols())
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.matrix, self.default_tol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridFactorization {
    /// `A`, `N x r_t`.
    pub analog: CMatrix,
    /// `B~`, `r_t x r_t`, with `A B~ = Q^d`.
    pub mixing: CMatrix,
    /// `B~_i^d = (Q^d)^H B_i^d`, one `r_t x K_i` block per sub-carrier.
    pub reduced: Vec<CMatrix>,
    /// Diagonal of `alpha`.
    pub alpha: Vec<f64>,
    /// `Q^d`, `N x r_t` with orthonormal columns.
    pub basis: CMatrix,
    /// Antenna permutation; rows `antenna_order[..r_t]` of `A` form the
    /// diagonal block. The identity unless pivoting was needed.
    pub antenna_order: Vec<usize>,
    pub pivoted: bool,
}

impl HybridFactorization {
    pub fn rank(&self) -> usize {
        self.analog.ncols()
    }

    pub fn n_antennas(&self) -> usize {
        self.analog.nrows()
    }

    /// Baseband precoder `B_i = B~ B~_i^d`.
    pub fn baseband(&self, i: usize) -> CMatrix {
        &self.mixing * &self.reduced[i]
    }

    /// `A B_i`, which reproduces `B_i^d`.
    pub fn precoder(&self, i: usize) -> CMatrix {
        &self.analog * self.baseband(i)
    }

    /// Number of entries of `A` that are not exactly zero.
    pub fn structural_nonzeros(&self) -> usize {
        self.analog.iter().filter(|z| **z != Complex64::new(0.0, 0.0)).count()
    }
}

/// Which antennas carry the diagonal block of `A^H`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum AntennaOrder {
    /// The first `r_t` antennas, falling back to [`AntennaOrder::Sorted`]
    /// only when their block of `(Q^d)^H` is numerically singular.
    #[default]
    Natural,
    /// Antennas picked by column-pivoted QR, which keeps the triangular
    /// block well conditioned and the off-diagonal entries of `A` large
    /// relative to its column norms.
    Sorted,
}

impl AntennaOrder {
    pub fn name(self) -> &'static str {
        match self {
            AntennaOrder::Natural => "natural",
            AntennaOrder::Sorted => "sorted",
        }
    }
}

impl std::str::FromStr for AntennaOrder {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "natural" => Ok(AntennaOrder::Natural),
            "sorted" => Ok(AntennaOrder::Sorted),
            other => Err(format!("unknown antenna order '{other}', expected natural or sorted")),
        }
    }
}

/// [`factorize_with_tol`] at the stack's default tolerance and natural order.
pub fn factorize(stack: &DigitalStack) -> Result<HybridFactorization> {
    factorize_with_tol(stack, stack.default_tol())
}

pub fn factorize_with_tol(stack: &DigitalStack, tol: f64) -> Result<HybridFactorization> {
    factorize_ordered(stack, tol, AntennaOrder::Natural)
}

pub fn factorize_ordered(
    stack: &DigitalStack,
    tol: f64,
    order: AntennaOrder,
) -> Result<HybridFactorization> {
    let bd = stack.matrix();
    let n = bd.nrows();
    if bd.is_empty() || bd.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::DegenerateStack);
    }
    let svd = bd.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    // nalgebra does not guarantee sorted output; order by singular value.
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let sv: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let rt = rank_from_singular_values(&sv, tol);
    if rt == 0 {
        return Err(Error::DegenerateStack);
    }
    let basis = CMatrix::from_columns(&idx[..rt].iter().map(|&i| u.column(i)).collect::<Vec<_>>());
    let qh = basis.adjoint();

    let natural = match order {
        AntennaOrder::Natural => split_unpivoted(&qh, rt),
        AntennaOrder::Sorted => None,
    };
    let (bbar, tri, rest, antenna_order, pivoted) = match natural {
        Some(parts) => (parts.0, parts.1, parts.2, (0..n).collect::<Vec<_>>(), false),
        None => {
            let (bbar, tri, rest, order) = split_pivoted(&qh, rt);
            (bbar, tri, rest, order, true)
        }
    };

    let x = tri
        .solve_upper_triangular(&rest)
        .ok_or(Error::DegenerateStack)?;
    let alpha: Vec<f64> = (0..rt)
        .map(|j| {
            let m = x.row(j).iter().map(|z| z.norm()).fold(0.0, f64::max);
            m.max(1.0) / 2.0
        })
        .collect();

    let mut analog = CMatrix::zeros(n, rt);
    for j in 0..rt {
        let inv = 1.0 / alpha[j];
        analog[(antenna_order[j], j)] = Complex64::new(inv, 0.0);
        for (c, &row) in antenna_order[rt..].iter().enumerate() {
            analog[(row, j)] = x[(j, c)].conj() * inv;
        }
    }
    let alpha_m = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        rt,
        alpha.iter().map(|&a| Complex64::new(a, 0.0)),
    ));
    let mixing = alpha_m * tri.adjoint() * bbar.adjoint();
    let reduced = (0..stack.n_blocks())
        .map(|i| &qh * stack.block(i))
        .collect();
    Ok(HybridFactorization {
        analog,
        mixing,
        reduced,
        alpha,
        basis,
        antenna_order,
        pivoted,
    })
}

type Split = (CMatrix, CMatrix, CMatrix);

/// QR of the wide `r_t x N` matrix in natural antenna order; `None` when the
/// leading triangular block is too ill-conditioned to invert.
fn split_unpivoted(qh: &CMatrix, rt: usize) -> Option<Split> {
    let qr = qh.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let tri = r.columns(0, rt).into_owned();
    // Q^H has orthonormal rows, so the smallest singular value of its leading
    // block is already relative to the whole.
    if smallest_singular_value(&tri) < PIVOT_MIN_SV {
        return None;
    }
    let rest = r.columns(rt, qh.ncols() - rt).into_owned();
    Some((q, tri, rest))
}

fn split_pivoted(qh: &CMatrix, rt: usize) -> (CMatrix, CMatrix, CMatrix, Vec<usize>) {
    let n = qh.ncols();
    let cp = qh.clone().col_piv_qr();
    let q = cp.q();
    let r = cp.r();
    let mut order = DMatrix::<f64>::from_iterator(1, n, (0..n).map(|i| i as f64));
    cp.p().permute_columns(&mut order);
    let order = order.iter().map(|&v| v as usize).collect();
    let tri = r.columns(0, rt).into_owned();
    let rest = r.columns(rt, n - rt).into_owned();
    (q, tri, rest, order)
}

fn smallest_singular_value(m: &CMatrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Two phases whose unit phasors sum to a target value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePair {
    pub phi1: f64,
    pub phi2: f64,
}

impl PhasePair {
    /// `e^{j phi1} + e^{j phi2}`.
    pub fn sum(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.phi1) + Complex64::from_polar(1.0, self.phi2)
    }
}

fn check_domain(value: f64) -> Result<f64> {
    if !value.is_finite() || value.abs() > 2.0 + DOMAIN_SLACK {
        return Err(Error::PhaseDomain { value });
    }
    Ok(value.clamp(-2.0, 2.0))
}

/// `x = e^{j acos(x/2)} + e^{-j acos(x/2)}`.
pub fn phase_pair_real(x: f64) -> Result<PhasePair> {
    let x = check_domain(x)?;
    let a = (x / 2.0).acos();
    Ok(PhasePair { phi1: a, phi2: -a })
}

/// `j x = e^{j asin(x/2)} + e^{j (pi - asin(x/2))}`.
pub fn phase_pair_imag(x: f64) -> Result<PhasePair> {
    let x = check_domain(x)?;
    let a = (x / 2.0).asin();
    Ok(PhasePair { phi1: a, phi2: PI - a })
}

/// `a e^{j phi} = e^{j (acos(a/2) + phi)} + e^{j (phi - acos(a/2))}`.
pub fn phase_pair_complex(z: Complex64) -> Result<PhasePair> {
    let a = check_domain(z.norm())?;
    let phi = z.arg();
    let c = (a / 2.0).acos();
    Ok(PhasePair {
        phi1: c + phi,
        phi2: phi - c,
    })
}

/// A phase pair driving entry `(row, col)` of an analog matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEntry {
    pub row: usize,
    pub col: usize,
    pub pair: PhasePair,
}

/// One phase pair per nonzero entry, column-major order. Zero entries are
/// left unconnected.
pub fn expand_to_phases(a: &CMatrix) -> Result<Vec<PhaseEntry>> {
    let mut out = Vec::new();
    for col in 0..a.ncols() {
        for row in 0..a.nrows() {
            let z = a[(row, col)];
            if z == Complex64::new(0.0, 0.0) {
                continue;
            }
            out.push(PhaseEntry {
                row,
                col,
                pair: phase_pair_complex(z)?,
            });
        }
    }
    Ok(out)
}

/// Inverse of [`expand_to_phases`].
pub fn reconstruct_from_phases(rows: usize, cols: usize, entries: &[PhaseEntry]) -> CMatrix {
    let mut a = CMatrix::zeros(rows, cols);
    for e in entries {
        a[(e.row, e.col)] += e.pair.sum();
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_gaussian_matrix, max_abs, relative_error};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_stack(seed: u64, n: usize, k: usize, nf: usize) -> DigitalStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<CMatrix> = (0..nf)
            .map(|_| complex_gaussian_matrix(&mut rng, n, k, 1.0))
            .collect();
        DigitalStack::new(&blocks).unwrap()
    }

    fn check_invariants(stack: &DigitalStack, f: &HybridFactorization) {
        let rt = f.rank();
        let n = f.n_antennas();
        assert!(max_abs(&f.analog) <= 2.0 + 1e-12);
        assert!(f.structural_nonzeros() <= rt * (n - rt + 1));
        assert!(relative_error(&(&f.analog * &f.mixing), &f.basis) < 1e-10);
        for i in 0..stack.n_blocks() {
            let b = stack.block(i);
            assert!(relative_error(&f.precoder(i), &b) < 1e-10);
        }
        // diagonal block
        for j in 0..rt {
            for jj in 0..rt {
                if j != jj {
                    assert_eq!(f.analog[(f.antenna_order[jj], j)], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn real_pair_examples() {
        let p = phase_pair_real(2.0).unwrap();
        assert_eq!((p.phi1, p.phi2), (0.0, 0.0));
        assert!((p.sum() - c(2.0, 0.0)).norm() < 1e-15);
        let p = phase_pair_real(1.0).unwrap();
        assert!((p.phi1 - PI / 3.0).abs() < 1e-15 && (p.phi2 + PI / 3.0).abs() < 1e-15);
        let p = phase_pair_real(-2.0).unwrap();
        assert!((p.phi1 - PI).abs() < 1e-15 && (p.phi2 + PI).abs() < 1e-15);
        assert!((p.sum() - c(-2.0, 0.0)).norm() < 1e-15);
        assert!(matches!(phase_pair_real(2.5), Err(Error::PhaseDomain { .. })));
    }

    #[test]
    fn imag_pair_examples() {
        let p = phase_pair_imag(0.0).unwrap();
        assert_eq!((p.phi1, p.phi2), (0.0, PI));
        assert!(p.sum().norm() < 1e-15);
        let p = phase_pair_imag(2.0).unwrap();
        assert!((p.phi1 - PI / 2.0).abs() < 1e-15 && (p.phi2 - PI / 2.0).abs() < 1e-15);
        assert!((p.sum() - c(0.0, 2.0)).norm() < 1e-15);
        assert!((phase_pair_imag(0.6).unwrap().sum() - c(0.0, 0.6)).norm() < 1e-12);
        assert!(phase_pair_imag(-2.1).is_err());
    }

    #[test]
    fn complex_pair_examples() {
        let p = phase_pair_complex(Complex64::from_polar(2.0, PI / 4.0)).unwrap();
        assert!((p.phi1 - PI / 4.0).abs() < 1e-12 && (p.phi2 - PI / 4.0).abs() < 1e-12);
        let p = phase_pair_complex(c(0.0, 0.0)).unwrap();
        assert!((p.phi1 - PI / 2.0).abs() < 1e-15 && (p.phi2 + PI / 2.0).abs() < 1e-15);
        let z = Complex64::from_polar(1.64, 0.3);
        let p = phase_pair_complex(z).unwrap();
        let a = (0.82f64).acos();
        assert!((p.phi1 - (0.3 + a)).abs() < 1e-12 && (p.phi2 - (0.3 - a)).abs() < 1e-12);
        assert!((p.sum() - z).norm() < 1e-12);
        assert!(phase_pair_complex(c(1.5, 1.5)).is_err());
    }

    #[test]
    fn real_pair_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10_000 {
            let x: f64 = rng.random_range(-2.0..=2.0);
            let p = phase_pair_real(x).unwrap();
            assert!((p.sum() - c(x, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn full_rank_square_stack_is_diagonal() {
        let stack = random_stack(1, 8, 4, 2);
        let f = factorize(&stack).unwrap();
        assert_eq!(f.rank(), 8);
        assert_eq!(f.structural_nonzeros(), 8);
        check_invariants(&stack, &f);
    }

    #[test]
    fn reconstructs_random_full_rank_stack() {
        let stack = random_stack(2, 16, 2, 4);
        let f = factorize(&stack).unwrap();
        assert_eq!(f.rank(), 8);
        check_invariants(&stack, &f);
    }

    #[test]
    fn phase_shifter_count_for_rank_eight() {
        let stack = random_stack(3, 32, 8, 1);
        let f = factorize(&stack).unwrap();
        assert_eq!(f.rank(), 8);
        let pairs = expand_to_phases(&f.analog).unwrap();
        assert_eq!(2 * pairs.len(), 400);
    }

    #[test]
    fn rank_deficient_stack() {
        // Three sub-carriers sharing a 3-dimensional column space.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let span = complex_gaussian_matrix(&mut rng, 12, 3, 1.0);
        let blocks: Vec<CMatrix> = (0..3)
            .map(|_| &span * complex_gaussian_matrix(&mut rng, 3, 2, 1.0))
            .collect();
        let stack = DigitalStack::new(&blocks).unwrap();
        let f = factorize(&stack).unwrap();
        assert_eq!(f.rank(), 3);
        check_invariants(&stack, &f);
    }

    #[test]
    fn pivots_when_leading_antennas_are_silent() {
        // Support only on the last four antennas.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut b = CMatrix::zeros(10, 3);
        b.rows_mut(6, 4).copy_from(&complex_gaussian_matrix(&mut rng, 4, 3, 1.0));
        let stack = DigitalStack::new(&[b]).unwrap();
        let f = factorize(&stack).unwrap();
        assert!(f.pivoted);
        assert!(f.antenna_order[..3].iter().all(|&a| a >= 6));
        check_invariants(&stack, &f);
    }

    #[test]
    fn sorted_order_is_exact_and_better_conditioned() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let blocks: Vec<CMatrix> = (0..4)
            .map(|_| complex_gaussian_matrix(&mut rng, 64, 4, 1.0))
            .collect();
        let stack = DigitalStack::new(&blocks).unwrap();
        let cond = |f: &HybridFactorization| {
            let sv = f.analog.clone().svd(false, false).singular_values;
            sv.max() / sv.min()
        };
        let natural = factorize(&stack).unwrap();
        let sorted = factorize_ordered(&stack, stack.default_tol(), AntennaOrder::Sorted).unwrap();
        assert!(!natural.pivoted && sorted.pivoted);
        check_invariants(&stack, &sorted);
        assert_eq!(sorted.structural_nonzeros(), natural.structural_nonzeros());
        assert!(cond(&sorted) < cond(&natural));
    }

    #[test]
    fn zero_width_blocks_are_kept() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let blocks = vec![
            complex_gaussian_matrix(&mut rng, 6, 2, 1.0),
            CMatrix::zeros(6, 0),
            complex_gaussian_matrix(&mut rng, 6, 1, 1.0),
        ];
        let stack = DigitalStack::new(&blocks).unwrap();
        let f = factorize(&stack).unwrap();
        assert_eq!(f.reduced[1].shape(), (3, 0));
        check_invariants(&stack, &f);
    }

    #[test]
    fn rejects_zero_stack() {
        let stack = DigitalStack::new(&[CMatrix::zeros(4, 2)]).unwrap();
        assert!(matches!(factorize(&stack), Err(Error::DegenerateStack)));
    }

    #[test]
    fn expansion_skips_zeros_and_round_trips() {
        let mut a = complex_gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(7), 5, 3, 0.5);
        a.iter_mut().for_each(|z| {
            if z.norm() > 2.0 {
                *z /= z.norm();
            }
        });
        a[(1, 1)] = c(0.0, 0.0);
        let e = expand_to_phases(&a).unwrap();
        assert_eq!(e.len(), 14);
        assert!((reconstruct_from_phases(5, 3, &e) - a).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn factorization_invariants(
            seed in any::<u64>(),
            n in prop::sample::select(vec![8usize, 16, 32]),
            k in prop::sample::select(vec![1usize, 2, 4]),
            nf in prop::sample::select(vec![1usize, 4, 8]),
        ) {
            let stack = random_stack(seed, n, k, nf);
            let f = factorize(&stack).unwrap();
            prop_assert_eq!(f.rank(), n.min(k * nf));
            check_invariants(&stack, &f);
            let rt = f.rank();
            prop_assert_eq!(f.structural_nonzeros(), rt * (n - rt + 1));
        }

        #[test]
        fn phases_round_trip(re in -1.4..1.4f64, im in -1.4..1.4f64) {
            let z = c(re, im);
            prop_assert!((phase_pair_complex(z).unwrap().sum() - z).norm() < 1e-12);
        }
    }
}
