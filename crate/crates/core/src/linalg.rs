//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Default relative rank tolerance: `max(rows, cols) * eps`.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols).max(1) as f64 * f64::EPSILON
}

/// Number of singular values strictly above `tol * sigma_max`.
///
/// A matrix with no entries, or whose largest singular value is zero, has
/// rank 0.
pub fn numerical_rank(m: &CMatrix, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    rank_from_singular_values(sv.as_slice(), tol)
}

/// Number of singular values (in any order) strictly above `tol * sigma_max`.
pub fn rank_from_singular_values(sv: &[f64], tol: f64) -> usize {
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Circularly symmetric complex Gaussian sample with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Matrix of i.i.d. `CN(0, variance)` entries.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    variance: f64,
) -> CMatrix {
    // Column-major fill order keeps draws stable if callers slice columns.
    let data: Vec<Complex64> = (0..rows * cols)
        .map(|_| complex_gaussian(rng, variance))
        .collect();
    CMatrix::from_vec(rows, cols, data)
}

/// Horizontal concatenation. All blocks must share the row count.
pub fn hstack(blocks: &[CMatrix]) -> CMatrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: row count mismatch");
        out.columns_mut(c0, b.ncols()).copy_from(b);
        c0 += b.ncols();
    }
    out
}

/// Extends a matrix with orthonormal columns to `target` orthonormal columns.
///
/// Candidates are the canonical basis vectors in order, orthogonalised with
/// two passes of Gram-Schmidt; the result is deterministic.
pub fn orthonormal_complete(basis: &CMatrix, target: usize) -> CMatrix {
    let n = basis.nrows();
    assert!(target <= n, "cannot complete beyond the ambient dimension");
    let mut cols: Vec<CVector> = basis.column_iter().map(|c| c.into_owned()).collect();
    let mut e = 0;
    while cols.len() < target && e < n {
        let mut v = CVector::zeros(n);
        v[e] = Complex64::new(1.0, 0.0);
        e += 1;
        for _ in 0..2 {
            for q in &cols {
                let proj = q.dotc(&v);
                v -= q * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / Complex64::new(norm, 0.0));
        }
    }
    CMatrix::from_columns(&cols)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `||a - b||_F / ||b||_F`, or the absolute difference when `b` is zero.
pub fn relative_error(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = (a - b).norm();
    let base = b.norm();
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_of_identity_and_zero() {
        let id = CMatrix::identity(5, 5);
        assert_eq!(numerical_rank(&id, default_rank_tol(5, 5)), 5);
        let z = CMatrix::zeros(4, 3);
        assert_eq!(numerical_rank(&z, 1e-12), 0);
        assert_eq!(numerical_rank(&CMatrix::zeros(0, 0), 1e-12), 0);
    }

    #[test]
    fn rank_of_outer_product_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = CMatrix::zeros(8, 6);
        for _ in 0..3 {
            let u = complex_gaussian_matrix(&mut rng, 8, 1, 1.0);
            let v = complex_gaussian_matrix(&mut rng, 6, 1, 1.0);
            m += &u * v.adjoint();
        }
        assert_eq!(numerical_rank(&m, default_rank_tol(8, 6) * 10.0), 3);
    }

    #[test]
    fn completion_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = complex_gaussian_matrix(&mut rng, 7, 2, 1.0);
        let q = a.qr().q();
        let full = orthonormal_complete(&q, 5);
        assert_eq!(full.ncols(), 5);
        let gram = full.adjoint() * &full;
        assert!((gram - CMatrix::identity(5, 5)).norm() < 1e-12);
        assert!((full.columns(0, 2) - q).norm() < 1e-15);
    }

    #[test]
    fn gaussian_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let s: f64 = (0..n)
            .map(|_| complex_gaussian(&mut rng, 2.0).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((s - 2.0).abs() < 0.03, "{s}");
    }
}
