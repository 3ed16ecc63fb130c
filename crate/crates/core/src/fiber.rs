//! Fiber operator `-d²/dx² + b²x² + W(x + k/b)` in the scaled harmonic
//! oscillator basis.
//!
//! With `χ_n(x) = b^{1/4} h_n(√b x)` the kinetic and confining parts are
//! diagonal, `b(2n+1)`, and only the potential needs quadrature:
//!
//! ```text
//! M_mn(k) = b(2n+1) δ_mn + ∫ W(y/√b + k/b) h_m(y) h_n(y) dy
//! ```

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::potential::FourierPotential;
use crate::quadrature::{hermite_functions, GaussHermite};

pub const DEFAULT_BASIS_SIZE: usize = 128;
pub const DEFAULT_CONVERGENCE_EPS: f64 = 1e-9;

/// Normalized harmonic-oscillator eigenfunction `φ_n`, `n >= 1`:
/// `-φ'' + y²φ = (2n-1)φ`, `‖φ‖ = 1`.
pub fn hermite_fn(n: usize, y: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("Hermite index starts at 1".into()));
    }
    Ok(crate::quadrature::hermite_function(n - 1, y))
}

#[derive(Debug, Clone)]
pub struct HermiteBasis {
    b: f64,
    size: usize,
    quad: Arc<GaussHermite>,
    /// `table[(n, i)] = h_n(y_i)` at the quadrature nodes.
    table: DMatrix<f64>,
}

impl HermiteBasis {
    pub fn new(b: f64, size: usize, quad_order: usize) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::InvalidInput(format!("field b must be positive, got {b}")));
        }
        if size == 0 {
            return Err(Error::InvalidInput("basis size must be positive".into()));
        }
        if quad_order < 2 * size {
            return Err(Error::Precondition(format!(
                "quadrature order {quad_order} < 2 * basis size {size}"
            )));
        }
        let quad = GaussHermite::cached(quad_order);
        let mut table = DMatrix::zeros(size, quad_order);
        let mut buf = vec![0.0; size];
        for (i, &y) in quad.nodes.iter().enumerate() {
            hermite_functions(y, &mut buf);
            table.column_mut(i).copy_from_slice(&buf);
        }
        Ok(Self { b, size, quad, table })
    }

    /// Quadrature order `4N`.
    pub fn with_default_quadrature(b: f64, size: usize) -> Result<Self> {
        Self::new(b, size, 4 * size)
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn quad_order(&self) -> usize {
        self.quad.len()
    }

    /// Largest deviation of the discrete Gram matrix from the identity.
    pub fn gram_deviation(&self) -> f64 {
        let ones = vec![1.0; self.quad_order()];
        let g = self.weighted_gram(&ones);
        let mut dev = 0.0f64;
        for m in 0..self.size {
            for n in 0..self.size {
                let e = if m == n { 1.0 } else { 0.0 };
                dev = dev.max((g[(m, n)] - e).abs());
            }
        }
        dev
    }

    /// `Σ_i w_i f_i h_m(y_i) h_n(y_i)`.
    fn weighted_gram(&self, f: &[f64]) -> DMatrix<f64> {
        let mut scaled = self.table.clone();
        for (i, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.quad.scaled_weights[i] * f[i];
        }
        let mut g = &scaled * self.table.transpose();
        symmetrize(&mut g);
        g
    }

    /// `∫ W^{(order)}(y/√b + k/b) h_m(y) h_n(y) dy`.
    pub fn potential_matrix(&self, w: &FourierPotential, order: usize, k: f64) -> DMatrix<f64> {
        let sb = self.b.sqrt();
        let f: Vec<f64> = self
            .quad
            .nodes
            .iter()
            .map(|&y| w.eval_unchecked(y / sb + k / self.b, order))
            .collect();
        self.weighted_gram(&f)
    }

    /// Matrix of the shifted fiber operator at quasi-momentum `k`.
    pub fn assemble(&self, w: &FourierPotential, k: f64) -> DMatrix<f64> {
        let mut m = self.potential_matrix(w, 0, k);
        for n in 0..self.size {
            m[(n, n)] += self.b * (2 * n + 1) as f64;
        }
        m
    }

    /// As [`assemble`](Self::assemble), but compares against a rule of twice
    /// the order and fails if any entry moves by more than `tol`.
    pub fn assemble_checked(&self, w: &FourierPotential, k: f64, tol: f64) -> Result<DMatrix<f64>> {
        let m = self.assemble(w, k);
        let fine = HermiteBasis::new(self.b, self.size, 2 * self.quad_order())?;
        let m2 = fine.assemble(w, k);
        let diff = (&m - &m2).amax();
        if diff > tol {
            return Err(Error::Quadrature(format!(
                "fiber matrix entries change by {diff:e} when the Gauss-Hermite order doubles from {}",
                self.quad_order()
            )));
        }
        Ok(m)
    }

    /// Unshifted fiber `-d² + (bx - k)² + W(x)` in the basis centred at the
    /// origin. Unitarily equivalent to [`assemble`](Self::assemble) for
    /// `|k|/b` well inside the basis extent.
    pub fn assemble_unshifted(&self, w: &FourierPotential, k: f64) -> DMatrix<f64> {
        let b = self.b;
        let mut m = self.potential_matrix(w, 0, 0.0);
        for n in 0..self.size {
            m[(n, n)] += b * (2 * n + 1) as f64 + k * k;
            if n + 1 < self.size {
                // x = y/√b, <n|y|n+1> = sqrt((n+1)/2)
                let x = ((n + 1) as f64 / (2.0 * b)).sqrt();
                m[(n, n + 1)] -= 2.0 * b * k * x;
                m[(n + 1, n)] -= 2.0 * b * k * x;
            }
        }
        m
    }

    /// `b^{1/4} Σ c_n h_n(√b x)`: a coefficient vector as a function of x.
    pub fn eval(&self, coeffs: &DVector<f64>, x: f64) -> f64 {
        let mut buf = vec![0.0; self.size];
        hermite_functions(self.b.sqrt() * x, &mut buf);
        self.b.powf(0.25) * buf.iter().zip(coeffs.iter()).map(|(h, c)| h * c).sum::<f64>()
    }

    /// Evaluates several coefficient vectors at many points with one
    /// Hermite recurrence per point. Result is `points × vectors`.
    pub fn eval_many(&self, coeffs: &[&DVector<f64>], xs: &[f64]) -> DMatrix<f64> {
        let scale = self.b.powf(0.25);
        let sb = self.b.sqrt();
        let mut out = DMatrix::zeros(xs.len(), coeffs.len());
        let mut buf = vec![0.0; self.size];
        for (p, &x) in xs.iter().enumerate() {
            hermite_functions(sb * x, &mut buf);
            for (v, c) in coeffs.iter().enumerate() {
                out[(p, v)] = scale * buf.iter().zip(c.iter()).map(|(h, c)| h * c).sum::<f64>();
            }
        }
        out
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lowest `count` eigenpairs of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    /// Columns are unit eigenvectors, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

fn full_decomposition(matrix: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(matrix.clone());
    let n = matrix.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        // fixed but arbitrary sign: largest component positive
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(dst, &v);
    }
    (values, vectors)
}

fn check_simple(values: &[f64], count: usize) -> Result<()> {
    let scale = values.iter().take(count + 1).fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..count.min(values.len().saturating_sub(1)) {
        let gap = values[i + 1] - values[i];
        if gap <= 1e-12 * scale {
            return Err(Error::NearDegenerate {
                lower: i + 1,
                upper: i + 2,
                gap,
            });
        }
    }
    Ok(())
}

/// Ascending lowest `count` eigenpairs. Only the lower half of a truncated
/// spectrum is trusted, so `count <= N/2`.
pub fn eigenpairs(matrix: &DMatrix<f64>, count: usize) -> Result<Eigenpairs> {
    let n = matrix.nrows();
    if count == 0 || count > n / 2 {
        return Err(Error::Precondition(format!(
            "requested {count} eigenpairs from a {n}x{n} truncation (max {})",
            n / 2
        )));
    }
    let (values, vectors) = full_decomposition(matrix);
    check_simple(&values, count)?;
    Ok(Eigenpairs {
        values: values[..count].to_vec(),
        vectors: vectors.columns(0, count).into_owned(),
    })
}

/// Full eigendecomposition of one fiber.
#[derive(Debug, Clone)]
pub struct FiberSolve {
    pub k: f64,
    pub matrix: DMatrix<f64>,
    /// All eigenvalues of the truncated matrix, ascending.
    pub eigenvalues: Vec<f64>,
    /// Matching unit eigenvectors as columns.
    pub eigenvectors: DMatrix<f64>,
}

impl FiberSolve {
    /// `E_j(k)`, 1-based.
    pub fn energy(&self, j: usize) -> f64 {
        self.eigenvalues[j - 1]
    }

    /// Coefficients of `ψ̃_j(·; k)`, 1-based.
    pub fn vector(&self, j: usize) -> DVector<f64> {
        self.eigenvectors.column(j - 1).into_owned()
    }
}

/// A potential and a basis bundled for repeated fiber solves.
#[derive(Debug, Clone)]
pub struct FiberSolver {
    basis: HermiteBasis,
    potential: FourierPotential,
}

impl FiberSolver {
    pub fn new(basis: HermiteBasis, potential: FourierPotential) -> Self {
        Self { basis, potential }
    }

    pub fn with_size(potential: FourierPotential, b: f64, size: usize) -> Result<Self> {
        Ok(Self::new(HermiteBasis::with_default_quadrature(b, size)?, potential))
    }

    pub fn basis(&self) -> &HermiteBasis {
        &self.basis
    }

    pub fn potential(&self) -> &FourierPotential {
        &self.potential
    }

    pub fn b(&self) -> f64 {
        self.basis.b()
    }

    /// Period of the band functions, `τ = bT`.
    pub fn tau(&self) -> f64 {
        self.basis.b() * self.potential.period()
    }

    /// Largest band index whose eigenvalues are trusted.
    pub fn max_band(&self) -> usize {
        self.basis.size() / 2
    }

    pub fn solve(&self, k: f64) -> Result<FiberSolve> {
        let matrix = self.basis.assemble(&self.potential, k);
        let (eigenvalues, eigenvectors) = full_decomposition(&matrix);
        check_simple(&eigenvalues, self.max_band())?;
        Ok(FiberSolve {
            k,
            matrix,
            eigenvalues,
            eigenvectors,
        })
    }

    /// `E_1..E_count` at `k`.
    pub fn energies(&self, k: f64, count: usize) -> Result<Vec<f64>> {
        if count > self.max_band() {
            return Err(Error::Precondition(format!(
                "band {count} exceeds trusted range {}",
                self.max_band()
            )));
        }
        Ok(self.solve(k)?.eigenvalues[..count].to_vec())
    }

    /// Band energies on a k-grid, rows indexed like `ks`.
    pub fn sweep(&self, ks: &[f64], count: usize) -> Result<Vec<Vec<f64>>> {
        ks.par_iter().map(|&k| self.energies(k, count)).collect()
    }
}

/// Smallest basis size `N` (doubling from `n_start`) for which the lowest
/// `bands` eigenvalues agree with the `2N` truncation to within `eps` on all
/// probe momenta.
pub fn converge(
    potential: &FourierPotential,
    b: f64,
    bands: usize,
    eps: f64,
    probe_ks: &[f64],
    n_start: usize,
    n_max: usize,
) -> Result<usize> {
    let mut n = n_start.max(2 * bands);
    let energies =
        |n: usize| -> Result<Vec<Vec<f64>>> { FiberSolver::with_size(potential.clone(), b, n)?.sweep(probe_ks, bands) };
    let mut coarse = energies(n)?;
    while 2 * n <= n_max {
        let fine = energies(2 * n)?;
        let diff = coarse
            .iter()
            .flatten()
            .zip(fine.iter().flatten())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        if diff < eps {
            return Ok(n);
        }
        log::debug!("basis {n}: eigenvalue change {diff:e} on doubling");
        n *= 2;
        coarse = fine;
    }
    Err(Error::NotConverged(format!(
        "fiber eigenvalues not converged to {eps:e} with basis size <= {n_max}"
    )))
}
