//! Counting functions of Hermitian matrices and the perturbation
//! inequalities they obey.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;

/// Eigenvalues of a Hermitian (real symmetric or complex Hermitian) matrix,
/// ascending.
pub fn hermitian_eigenvalues<T>(m: &DMatrix<T>) -> Vec<f64>
where
    T: ComplexField<RealField = f64>,
{
    if m.is_empty() {
        return Vec::new();
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `n₊(s; M)`: eigenvalues strictly above `s`.
pub fn count_pos<T>(s: f64, m: &DMatrix<T>) -> usize
where
    T: ComplexField<RealField = f64>,
{
    hermitian_eigenvalues(m).into_iter().filter(|&e| e > s).count()
}

/// `n₋(s; M) = n₊(s; -M)`.
pub fn count_neg<T>(s: f64, m: &DMatrix<T>) -> usize
where
    T: ComplexField<RealField = f64>,
{
    hermitian_eigenvalues(m).into_iter().filter(|&e| -e > s).count()
}

/// `n_*(s; M) = n₊(s²; M*M)`: singular values strictly above `s`.
pub fn count_sv<T>(s: f64, m: &DMatrix<T>) -> usize
where
    T: ComplexField<RealField = f64>,
{
    count_pos(s * s, &(m.adjoint() * m))
}

/// Weyl inequalities for Hermitian `M₁`, `M₂`:
/// `n₊(s(1+ε); M₁) - n₋(sε; M₂) ≤ n₊(s; M₁+M₂) ≤ n₊(s(1-ε); M₁) + n₊(sε; M₂)`.
pub fn check_weyl<T>(s: f64, eps: f64, m1: &DMatrix<T>, m2: &DMatrix<T>) -> bool
where
    T: ComplexField<RealField = f64>,
{
    let mid = count_pos(s, &(m1 + m2)) as i64;
    let lower = count_pos(s * (1.0 + eps), m1) as i64 - count_neg(s * eps, m2) as i64;
    let upper = count_pos(s * (1.0 - eps), m1) as i64 + count_pos(s * eps, m2) as i64;
    lower <= mid && mid <= upper
}

/// Ky Fan inequalities, the singular-value analogue of [`check_weyl`].
pub fn check_kyfan<T>(s: f64, eps: f64, m1: &DMatrix<T>, m2: &DMatrix<T>) -> bool
where
    T: ComplexField<RealField = f64>,
{
    let mid = count_sv(s, &(m1 + m2)) as i64;
    let lower = count_sv(s * (1.0 + eps), m1) as i64 - count_sv(s * eps, m2) as i64;
    let upper = count_sv(s * (1.0 - eps), m1) as i64 + count_sv(s * eps, m2) as i64;
    lower <= mid && mid <= upper
}

/// `n_*(s; M) ≤ s^{-2} ‖M‖_F²`.
pub fn check_chebyshev<T>(s: f64, m: &DMatrix<T>) -> bool
where
    T: ComplexField<RealField = f64>,
{
    count_sv(s, m) as f64 <= m.norm_squared() / (s * s)
}

/// Eigenvalues of a Hermitian positive semidefinite matrix by cyclic
/// two-sided Jacobi, ascending.
///
/// The rotation threshold is relative to `sqrt(a_pp a_qq)`, so eigenvalues of
/// graded matrices (entries spanning many decades) are obtained to a relative
/// accuracy governed by the condition number of the diagonally scaled matrix
/// rather than by `‖M‖`.
pub fn psd_eigenvalues_graded(m: &DMatrix<Complex64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = (m + m.adjoint()).scale(0.5);
    for sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let r = apq.norm();
                if r == 0.0 || r <= 1e-15 * (app.abs() * aqq.abs()).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = apq / r;
                let zeta = (aqq - app) / (2.0 * r);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // U = diag(1, conj(phase)) · [[c, s], [-s, c]]
                let u00 = Complex64::new(c, 0.0);
                let u01 = Complex64::new(s, 0.0);
                let u10 = -phase.conj() * s;
                let u11 = phase.conj() * c;
                for i in 0..n {
                    let (x, y) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = x * u00 + y * u10;
                    a[(i, q)] = x * u01 + y * u11;
                }
                for i in 0..n {
                    let (x, y) = (a[(p, i)], a[(q, i)]);
                    a[(p, i)] = u00.conj() * x + u10.conj() * y;
                    a[(q, i)] = u01.conj() * x + u11.conj() * y;
                }
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
            }
        }
        if !rotated {
            log::debug!("graded Jacobi converged after {sweep} sweeps (n = {n})");
            break;
        }
    }
    let mut values: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    values.sort_by(f64::total_cmp);
    values
}

/// `κ₂(D^{-1/2} M D^{-1/2})` with `D = diag(M)`; infinite when the scaled
/// matrix is singular.
pub fn scaled_condition(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 1.0;
    }
    let d: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    if d.iter().any(|&v| v <= 0.0) {
        return f64::INFINITY;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| m[(i, j)] / (d[i] * d[j]).sqrt());
    let ev = hermitian_eigenvalues(&scaled);
    let (lo, hi) = (ev[0], ev[n - 1]);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}
