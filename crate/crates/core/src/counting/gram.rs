use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::model::EffectiveModel;
use super::perturbation::{PerturbationV, Rectangle};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;
use crate::specutil::{psd_eigenvalues_graded, scaled_condition};

/// Relative eigensolver accuracy used to define the counting noise floor.
pub const NOISE_FLOOR_FACTOR: f64 = 1e-12;

const MAX_WINDOW_EXTENSIONS: usize = 12;

/// Overlaps below this fraction of the largest one are not required to be
/// stable under node doubling: the Hermite expansion of `ψ_j` is only
/// accurate to about `1e-9 · max|ψ_j|` far out in the tail.
pub(crate) const OVERLAP_FLOOR: f64 = 1e-18;

/// `∫_J e^{-iωy} dy` in closed form, stable for small `ω`.
pub fn phase_integral(omega: f64, y: [f64; 2]) -> Complex64 {
    let h = y[1] - y[0];
    let mid = 0.5 * (y[0] + y[1]);
    let t = 0.5 * omega * h;
    let sinc = if t.abs() < 1e-4 { 1.0 - t * t / 6.0 } else { t.sin() / t };
    Complex64::from_polar(h * sinc, -omega * mid)
}

/// `∫_I ψ_{lα} ψ_{mβ} dx` for every pair of indices, by Gauss–Legendre with
/// the node count doubled until every entry is stable relative to
/// `sqrt(X_ii X_jj)`.
pub(crate) fn x_overlaps(model: &EffectiveModel, index: &[(i64, usize)], x: [f64; 2]) -> Result<DMatrix<f64>> {
    let eval = |n: usize| -> DMatrix<f64> {
        let (nodes, weights) = gauss_legendre_on(n, x[0], x[1]);
        let mut phi = DMatrix::zeros(n, index.len());
        for alpha in 0..model.multiplicity() {
            let cols: Vec<usize> = (0..index.len()).filter(|&c| index[c].1 == alpha).collect();
            let ls: Vec<i64> = cols.iter().map(|&c| index[c].0).collect();
            let tab = model.psi_table(alpha, &ls, &nodes);
            for (t, &c) in cols.iter().enumerate() {
                for i in 0..n {
                    phi[(i, c)] = tab[(i, t)] * weights[i].sqrt();
                }
            }
        }
        phi.transpose() * phi
    };
    let mut n = 32;
    let mut prev = eval(n);
    while n < 2048 {
        n *= 2;
        let next = eval(n);
        let floor = OVERLAP_FLOOR * next.diagonal().max();
        let stable = (0..index.len()).all(|i| {
            (0..index.len()).all(|j| {
                let scale = (next[(i, i)] * next[(j, j)]).sqrt();
                (next[(i, j)] - prev[(i, j)]).abs() <= 1e-10 * scale + floor
            })
        });
        if stable {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature(format!(
        "x-overlaps on [{}, {}] unstable at {n} nodes",
        x[0], x[1]
    )))
}

/// `G₂*G₂` on a truncated lattice window, with its eigenvalues.
#[derive(Debug, Clone, Serialize)]
pub struct G2Gram {
    /// Inclusive lattice range `l_min..=l_max`.
    pub window: (i64, i64),
    /// `(l, α)` labels of rows and columns.
    pub index: Vec<(i64, usize)>,
    #[serde(skip)]
    pub matrix: DMatrix<Complex64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Condition number of the unit-diagonal rescaling.
    pub scaled_condition: f64,
}

fn lattice_index(model: &EffectiveModel, window: (i64, i64)) -> Vec<(i64, usize)> {
    (window.0..=window.1)
        .flat_map(|l| (0..model.multiplicity()).map(move |a| (l, a)))
        .collect()
}

/// Entries `(μ_α μ_β)^{-1/4} Σ_rect C ∫_I ψ_{lα} ψ_{mβ} dx ∫_J e^{-iωy} dy`,
/// `ω = (l-m)τ + k_α - k_β`.
pub fn gram_g2(model: &EffectiveModel, v: &PerturbationV, window: (i64, i64)) -> Result<G2Gram> {
    let index = lattice_index(model, window);
    let n = index.len();
    let mut matrix = DMatrix::<Complex64>::zeros(n, n);
    let tau = model.tau();
    for rect in v.rectangles() {
        let x = x_overlaps(model, &index, rect.x)?;
        for p in 0..n {
            for q in p..n {
                let ((l, a), (m, c)) = (index[p], index[q]);
                let (pa, pc) = (&model.points[a], &model.points[c]);
                let omega = (l - m) as f64 * tau + pa.k - pc.k;
                let pref = rect.amplitude * (pa.mu * pc.mu).powf(-0.25) * x[(p, q)];
                let entry = phase_integral(omega, rect.y) * pref;
                matrix[(p, q)] += entry;
                if q != p {
                    matrix[(q, p)] += entry.conj();
                }
            }
        }
    }
    let eigenvalues = if v.is_zero() {
        vec![0.0; n]
    } else {
        psd_eigenvalues_graded(&matrix)
    };
    let scaled_condition = if v.is_zero() { 1.0 } else { scaled_condition(&matrix) };
    Ok(G2Gram {
        window,
        index,
        matrix,
        eigenvalues,
        scaled_condition,
    })
}

impl G2Gram {
    pub fn norm(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0).max(0.0)
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..self.matrix.nrows())
            .map(|i| self.matrix[(i, i)].re)
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest threshold at which eigenvalue counts are trusted:
    /// `1e-12 · κ(D^{-1/2} G D^{-1/2}) · min diag G`, the error scale of the
    /// graded eigensolver on this window.
    pub fn noise_floor(&self) -> f64 {
        if self.norm() == 0.0 {
            return 0.0;
        }
        NOISE_FLOOR_FACTOR * self.scaled_condition * self.min_diagonal()
    }

    /// `n₊(t; G₂*G₂)`.
    pub fn count_above(&self, t: f64) -> Result<usize> {
        let floor = self.noise_floor();
        if !(t >= floor) {
            return Err(Error::NoiseFloor { threshold: t, floor });
        }
        Ok(self.eigenvalues.iter().filter(|&&e| e > t).count())
    }
}

/// `n_*(√(2√λ); G₂) = n₊(2√λ; G₂*G₂)`.
pub fn count_g2(lambda: f64, gram: &G2Gram) -> Result<usize> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    gram.count_above(2.0 * lambda.sqrt())
}

/// Prefactor bounding every Gram entry attached to a rectangle.
fn rect_scale(model: &EffectiveModel, r: &Rectangle) -> f64 {
    let inv_mu = model.points.iter().map(|p| p.mu.powf(-0.5)).fold(0.0, f64::max);
    r.amplitude * r.height() * inv_mu
}

/// Lattice window covering all rectangles at threshold `t`.
pub fn initial_window(model: &EffectiveModel, v: &PerturbationV, t: f64) -> (i64, i64) {
    let mut w = (i64::MAX, i64::MIN);
    for r in v.rectangles() {
        let (a, b) = model.lattice_window(r.x, rect_scale(model, r), t);
        w = (w.0.min(a), w.1.max(b));
    }
    if v.is_zero() {
        (0, 0)
    } else {
        w
    }
}

/// Gram on an adaptive window: the window is widened by 2 on each side until
/// the counts at every `lambdas` change by at most 1.
pub fn adaptive_g2(model: &EffectiveModel, v: &PerturbationV, lambdas: &[f64]) -> Result<G2Gram> {
    let lambda_min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lambda_min > 0.0) {
        return Err(Error::InvalidInput("lambda grid must be non-empty and positive".into()));
    }
    let mut window = initial_window(model, v, 2.0 * lambda_min.sqrt());
    let mut gram = gram_g2(model, v, window)?;
    for _ in 0..MAX_WINDOW_EXTENSIONS {
        let wider = (window.0 - 2, window.1 + 2);
        let next = gram_g2(model, v, wider)?;
        let mut stable = true;
        for &lam in lambdas {
            let (a, b) = (count_g2(lam, &gram)?, count_g2(lam, &next)?);
            if a.abs_diff(b) > 1 {
                stable = false;
            }
        }
        if stable {
            return Ok(next);
        }
        window = wider;
        gram = next;
    }
    Err(Error::Truncation(format!(
        "G2 counts still change after widening the lattice window to {window:?}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::FiberSolver;
    use crate::potential::FourierPotential;
    use std::f64::consts::PI;

    fn model(b: f64) -> EffectiveModel {
        let s = FiberSolver::with_size(FourierPotential::cosine(1.0, 0.4).unwrap(), b, 48).unwrap();
        EffectiveModel::from_band(&s, 1).unwrap()
    }

    #[test]
    fn phase_integral_closed_form() {
        let y = [0.3, 2.1];
        for omega in [0.0, 1e-7, 0.5, 3.0, -2.0] {
            let (n, w) = gauss_legendre_on(64, y[0], y[1]);
            let direct: Complex64 = n
                .iter()
                .zip(&w)
                .map(|(y, w)| Complex64::from_polar(*w, -omega * y))
                .sum();
            assert!((direct - phase_integral(omega, y)).norm() < 1e-13, "{omega}");
        }
    }

    #[test]
    fn zero_perturbation_counts_nothing() {
        let m = model(2.0);
        let g = gram_g2(&m, &PerturbationV::zero(), (-2, 2)).unwrap();
        assert_eq!(g.matrix.norm(), 0.0);
        assert_eq!(count_g2(1e-10, &g).unwrap(), 0);
    }

    #[test]
    fn gram_is_hermitian_psd_with_positive_diagonal() {
        let m = model(2.0);
        let v = PerturbationV::rectangle([-0.5, 0.7], [0.0, 1.3], 1.5).unwrap();
        let g = gram_g2(&m, &v, (-3, 3)).unwrap();
        assert!((&g.matrix - g.matrix.adjoint()).norm() < 1e-14 * g.matrix.norm());
        assert!(g.eigenvalues[0] >= -1e-10 * g.norm());
        for (i, &(l, a)) in g.index.iter().enumerate() {
            let mu = m.points[a].mu;
            let (nodes, w) = gauss_legendre_on(200, -0.5, 0.7);
            let direct: f64 = nodes
                .iter()
                .zip(&w)
                .map(|(x, w)| w * m.psi(a, l, *x).powi(2))
                .sum::<f64>()
                * 1.5
                * 1.3
                / mu.sqrt();
            assert!(((g.matrix[(i, i)].re - direct) / direct).abs() < 1e-9);
            assert!(g.matrix[(i, i)].re > 0.0);
        }
    }

    #[test]
    fn full_period_height_decouples_lattice_sites() {
        let m = model(2.0);
        let v = PerturbationV::rectangle([-0.5, 0.5], [0.0, 2.0 * PI / m.tau()], 1.0).unwrap();
        let g = gram_g2(&m, &v, (-3, 3)).unwrap();
        assert!(g.scaled_condition < 1.0 + 1e-8);
    }

    #[test]
    fn counts_monotone_in_lambda_and_amplitude() {
        let m = model(2.0);
        let v = PerturbationV::rectangle([-0.5, 0.5], [0.0, 2.0], 1.0).unwrap();
        let lambdas = [1e-2, 1e-4, 1e-6, 1e-8];
        let g = adaptive_g2(&m, &v, &lambdas).unwrap();
        let g2 = adaptive_g2(&m, &v.scaled(3.0).unwrap(), &lambdas).unwrap();
        let counts: Vec<usize> = lambdas.iter().map(|&l| count_g2(l, &g).unwrap()).collect();
        for w in counts.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for &l in &lambdas {
            assert!(count_g2(l, &g).unwrap() <= count_g2(l, &g2).unwrap());
        }
        assert_eq!(count_g2(1e6, &g).unwrap(), 0);
    }

    #[test]
    fn noise_floor_reported() {
        let m = model(2.0);
        let v = PerturbationV::rectangle([-0.5, 0.5], [0.0, 0.05], 1.0).unwrap();
        let g = gram_g2(&m, &v, (-4, 4)).unwrap();
        assert!(matches!(g.count_above(1e-300), Err(Error::NoiseFloor { .. })));
    }
}
