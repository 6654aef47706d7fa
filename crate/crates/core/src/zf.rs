//! Zero-forcing precoding, power allocation and rate evaluation.
//!
//! Channel matrices hold one user per column (`H = [h_1, ..., h_K]`, `M x K`),
//! so the received signal of user `k` through precoder column `w_j` is
//! `h_k^H w_j`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{default_rank_tol, rank_from_singular_values, CMatrix};

/// ZF directions `B = H (H^H H)^{-1}` and effective gains `g_k = 1/||b_k||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfPrecoder {
    pub directions: CMatrix,
    pub gains: Vec<f64>,
}

/// `zf_precoder_with_tol` at the default relative rank tolerance.
pub fn zf_precoder(h: &CMatrix) -> Result<ZfPrecoder> {
    zf_precoder_with_tol(h, default_rank_tol(h.nrows(), h.ncols()))
}

/// ZF precoder via a thin QR factorization `H = Q R`: `B = Q R^{-H}`.
///
/// Fails with [`Error::RankDeficient`] (users given as 0-based column
/// indices, no sub-carrier) when `K > M` or the smallest singular value of
/// `H` is at or below `tol * sigma_max`.
pub fn zf_precoder_with_tol(h: &CMatrix, tol: f64) -> Result<ZfPrecoder> {
    let (m, k) = h.shape();
    let deficient = || Error::RankDeficient {
        subcarrier: None,
        users: (0..k).collect(),
    };
    if k == 0 {
        return Ok(ZfPrecoder {
            directions: CMatrix::zeros(m, 0),
            gains: Vec::new(),
        });
    }
    if k > m {
        return Err(deficient());
    }
    let qr = h.clone().qr();
    let r = qr.r();
    // R shares the singular values of H and is only K x K.
    let sv = r.clone().svd(false, false).singular_values;
    if rank_from_singular_values(sv.as_slice(), tol) < k {
        return Err(deficient());
    }
    let r_inv_h = r
        .adjoint()
        .solve_lower_triangular(&CMatrix::identity(k, k))
        .ok_or_else(deficient)?;
    let directions = qr.q() * r_inv_h;
    let gains = directions
        .column_iter()
        .map(|b| 1.0 / b.norm_squared())
        .collect();
    Ok(ZfPrecoder { directions, gains })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerPolicy {
    Equal,
    #[default]
    Waterfill,
}

impl PowerPolicy {
    pub fn allocate(self, gains: &[f64], budget: f64, noise_var: f64) -> Vec<f64> {
        match self {
            PowerPolicy::Equal => equal_power(gains.len(), budget),
            PowerPolicy::Waterfill => waterfill(gains, budget, noise_var),
        }
    }
}

/// `p_k = P / K`.
pub fn equal_power(k: usize, budget: f64) -> Vec<f64> {
    if k == 0 {
        return Vec::new();
    }
    vec![budget / k as f64; k]
}

/// Water-filling `p_k = max(0, mu - sigma^2/g_k)` with `sum p_k = P`.
///
/// The water level is solved exactly: users are sorted by floor
/// `sigma^2/g_k` (ties by index) and the largest prefix whose level clears
/// its highest floor is the active set.
pub fn waterfill(gains: &[f64], budget: f64, noise_var: f64) -> Vec<f64> {
    let k = gains.len();
    let mut p = vec![0.0; k];
    if k == 0 || budget <= 0.0 {
        return p;
    }
    let floors: Vec<f64> = gains.iter().map(|&g| noise_var / g).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| floors[a].total_cmp(&floors[b]).then(a.cmp(&b)));
    let mut prefix = 0.0;
    let mut best = (1, budget + floors[order[0]]);
    for (a, &idx) in order.iter().enumerate() {
        prefix += floors[idx];
        let mu = (budget + prefix) / (a + 1) as f64;
        if mu > floors[idx] {
            best = (a + 1, mu);
        } else {
            break;
        }
    }
    let (active, mu) = best;
    for &idx in &order[..active] {
        p[idx] = (mu - floors[idx]).max(0.0);
    }
    p
}

/// `sum_k log2(1 + p_k g_k / sigma^2)`, the ZF rate shortcut.
pub fn zf_sum_rate(gains: &[f64], power: &[f64], noise_var: f64) -> f64 {
    gains
        .iter()
        .zip(power)
        .map(|(&g, &p)| (p * g / noise_var).ln_1p() / std::f64::consts::LN_2)
        .sum()
}

/// Per-user and total rates of one sub-carrier, bits/s/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub per_user: Vec<f64>,
    pub total: f64,
}

/// Rates from the general SINR with column `k` of `b` normalised and
/// scaled to power `p_k`. Zero columns transmit nothing.
pub fn sum_rate(h: &CMatrix, b: &CMatrix, power: &[f64], noise_var: f64) -> RateReport {
    assert_eq!(b.ncols(), power.len(), "one power value per precoder column");
    sum_rate_precoded(h, &scale_columns(b, power), noise_var)
}

/// Rates for precoder columns `w` that already carry their power:
/// `gamma_k = |h_k^H w_k|^2 / (sum_{j != k} |h_k^H w_j|^2 + sigma^2)`.
pub fn sum_rate_precoded(h: &CMatrix, w: &CMatrix, noise_var: f64) -> RateReport {
    assert_eq!(h.ncols(), w.ncols(), "one precoder column per user");
    assert_eq!(h.nrows(), w.nrows(), "antenna count mismatch");
    let x = h.adjoint() * w;
    let per_user: Vec<f64> = (0..h.ncols())
        .map(|k| {
            let signal = x[(k, k)].norm_sqr();
            let interference: f64 = (0..w.ncols())
                .filter(|&j| j != k)
                .map(|j| x[(k, j)].norm_sqr())
                .sum();
            (signal / (interference + noise_var)).ln_1p() / std::f64::consts::LN_2
        })
        .collect();
    let total = per_user.iter().sum();
    RateReport { per_user, total }
}

/// Columns `sqrt(p_k) b_k / ||b_k||`.
pub fn scale_columns(b: &CMatrix, power: &[f64]) -> CMatrix {
    let mut w = b.clone();
    for (mut col, &p) in w.column_iter_mut().zip(power) {
        let n = col.norm();
        let s = if n > 0.0 { p.max(0.0).sqrt() / n } else { 0.0 };
        col *= Complex64::new(s, 0.0);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::complex_gaussian_matrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_h(seed: u64, m: usize, k: usize) -> CMatrix {
        complex_gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(seed), m, k, 1.0)
    }

    #[test]
    fn identity_channel() {
        let z = zf_precoder(&CMatrix::identity(2, 2)).unwrap();
        assert!((z.directions - CMatrix::identity(2, 2)).norm() < 1e-15);
        assert_eq!(z.gains, vec![1.0, 1.0]);
    }

    #[test]
    fn scaled_identity_channel() {
        let h = CMatrix::identity(2, 2) * Complex64::new(2.0, 0.0);
        let z = zf_precoder(&h).unwrap();
        assert!((z.directions - CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0)).norm() < 1e-15);
        for g in z.gains {
            assert!((g - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gains_match_projector_oracle() {
        let h = random_h(1, 4, 2);
        let z = zf_precoder(&h).unwrap();
        for k in 0..2 {
            // Projector onto the complement of the other user's channel.
            let other = h.column(1 - k).into_owned();
            let proj = CMatrix::identity(4, 4) - &other * other.adjoint() / Complex64::new(other.norm_squared(), 0.0);
            let hk = h.column(k).into_owned();
            let g = (proj * hk).norm_squared();
            assert!((z.gains[k] - g).abs() < 1e-10 * g, "{} vs {g}", z.gains[k]);
        }
    }

    #[test]
    fn rejects_collinear_users() {
        let mut h = random_h(2, 4, 2);
        let c0 = h.column(0).into_owned() * Complex64::new(0.3, -1.0);
        h.set_column(1, &c0);
        assert!(matches!(zf_precoder(&h), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn rejects_more_users_than_antennas() {
        assert!(zf_precoder(&random_h(3, 2, 3)).is_err());
    }

    #[test]
    fn waterfill_examples() {
        assert_eq!(waterfill(&[1.0, 1.0], 2.0, 1.0), vec![1.0, 1.0]);
        let p = waterfill(&[4.0, 1.0], 1.0, 1.0);
        assert!((p[0] - 0.875).abs() < 1e-12 && (p[1] - 0.125).abs() < 1e-12, "{p:?}");
        let p = waterfill(&[10.0, 0.01], 0.5, 1.0);
        assert!((p[0] - 0.5).abs() < 1e-12 && p[1] == 0.0, "{p:?}");
    }

    #[test]
    fn equal_power_examples() {
        assert_eq!(equal_power(4, 2.0), vec![0.5; 4]);
        assert_eq!(equal_power(1, 3.0), vec![3.0]);
    }

    #[test]
    fn zf_shortcut_matches_general_sinr() {
        let h = random_h(4, 6, 3);
        let z = zf_precoder(&h).unwrap();
        let p = [0.3, 1.2, 0.7];
        let report = sum_rate(&h, &z.directions, &p, 0.5);
        for ((got, pk), g) in report.per_user.iter().zip(p).zip(&z.gains) {
            let want = (1.0 + pk * g / 0.5).log2();
            assert!((got - want).abs() < 1e-9);
        }
        assert!((report.total - zf_sum_rate(&z.gains, &p, 0.5)).abs() < 1e-9);
    }

    #[test]
    fn zero_power_gives_zero_rate() {
        let h = random_h(5, 4, 2);
        let z = zf_precoder(&h).unwrap();
        let r = sum_rate(&h, &z.directions, &[0.0, 0.0], 1.0);
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn non_zf_precoder_matches_scalar_sinr() {
        let h = random_h(6, 3, 2);
        let b = random_h(7, 3, 2);
        let p = [0.8, 1.5];
        let sigma2 = 0.4;
        let r = sum_rate(&h, &b, &p, sigma2);
        // w_j = sqrt(p_j) b_j / ||b_j||, element by element
        let w = |j: usize| -> Vec<Complex64> {
            let n: f64 = (0..3).map(|a| b[(a, j)].norm_sqr()).sum::<f64>().sqrt();
            (0..3).map(|a| b[(a, j)] * (p[j].sqrt() / n)).collect()
        };
        let inner = |k: usize, j: usize| -> Complex64 {
            let wj = w(j);
            (0..3).map(|a| h[(a, k)].conj() * wj[a]).sum()
        };
        for k in 0..2 {
            let j = 1 - k;
            let sinr = inner(k, k).norm_sqr() / (inner(k, j).norm_sqr() + sigma2);
            assert!((r.per_user[k] - (1.0 + sinr).log2()).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn zero_forcing_nulls_interference(seed in any::<u64>(), m in 2usize..10, kk in 1usize..10) {
            let k = kk.min(m);
            let h = random_h(seed, m, k);
            let z = zf_precoder(&h).unwrap();
            let x = h.adjoint() * &z.directions;
            for i in 0..k {
                for j in 0..k {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((x[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-9);
                    if i != j {
                        let scale = h.column(i).norm() * z.directions.column(j).norm();
                        prop_assert!(x[(i, j)].norm() < 1e-9 * scale);
                    }
                }
            }
        }

        #[test]
        fn scaling_rule(seed in any::<u64>(), cr in -3.0..3.0f64, ci in -3.0..3.0f64) {
            let c = Complex64::new(cr, ci);
            prop_assume!(c.norm() > 0.1);
            let h = random_h(seed, 5, 3);
            let z = zf_precoder(&h).unwrap();
            let zc = zf_precoder(&(&h * c)).unwrap();
            for k in 0..3 {
                prop_assert!((zc.gains[k] - c.norm_sqr() * z.gains[k]).abs() < 1e-9 * zc.gains[k]);
            }
            let want = &z.directions / c.conj();
            prop_assert!((zc.directions - &want).norm() < 1e-9 * want.norm());
        }

        #[test]
        fn waterfill_budget_and_optimality(
            gains in prop::collection::vec(0.01..20.0f64, 1..8),
            budget in 0.01..10.0f64,
            sigma2 in 0.1..2.0f64,
        ) {
            let p = waterfill(&gains, budget, sigma2);
            let total: f64 = p.iter().sum();
            prop_assert!((total - budget).abs() < 1e-10 * budget.max(1.0));
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            let base = zf_sum_rate(&gains, &p, sigma2);
            let eps = 1e-4;
            for a in 0..p.len() {
                for b in 0..p.len() {
                    if a == b || p[a] < eps || p[b] <= 0.0 {
                        continue;
                    }
                    let mut q = p.clone();
                    q[a] -= eps;
                    q[b] += eps;
                    prop_assert!(zf_sum_rate(&gains, &q, sigma2) <= base + 1e-12);
                }
            }
            let eq = equal_power(gains.len(), budget);
            prop_assert!(base >= zf_sum_rate(&gains, &eq, sigma2) - 1e-12);
        }
    }
}
