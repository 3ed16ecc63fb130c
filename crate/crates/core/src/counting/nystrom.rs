use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::gram::x_overlaps;
use super::model::EffectiveModel;
use super::perturbation::PerturbationV;
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;
use crate::specutil::hermitian_eigenvalues;

const MAX_Y_NODES: usize = 512;

/// Modes of `C g` whose contribution to `‖M₁‖` is below this are dropped.
const RANK_CUTOFF: f64 = 1e-9;

/// Kernel of `M₁(λ)` at `(x, y), (x', y')`, by direct summation over the
/// lattice window.
pub fn m1_kernel(
    model: &EffectiveModel,
    v: &PerturbationV,
    lambda: f64,
    window: (i64, i64),
    p: (f64, f64),
    q: (f64, f64),
) -> Complex64 {
    let (x, y) = p;
    let (xp, yp) = q;
    let amp = (v.eval(x, y) * v.eval(xp, yp)).sqrt();
    if amp == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let d = y - yp;
    let mut sum = Complex64::new(0.0, 0.0);
    for (alpha, pt) in model.points.iter().enumerate() {
        let decay = (-(lambda / pt.mu).sqrt() * d.abs()).exp() / (2.0 * (pt.mu * lambda).sqrt());
        for l in window.0..=window.1 {
            let phase = (l as f64 * model.tau() + pt.k) * d;
            sum += Complex64::from_polar(decay, phase) * model.psi(alpha, l, x) * model.psi(alpha, l, xp);
        }
    }
    sum * amp
}

/// Per-rectangle factor `S_r` with `S_r^* S_r = C_r g^{(r)}`,
/// `g^{(r)}_{pq} = ∫_{I_r} ψ_p ψ_q dx`; rows are the retained modes.
fn rectangle_factor(
    model: &EffectiveModel,
    index: &[(i64, usize)],
    x: [f64; 2],
    amp: f64,
    keep: f64,
) -> Result<DMatrix<f64>> {
    let g = x_overlaps(model, index, x)? * amp;
    let eig = g.symmetric_eigen();
    let top = eig.eigenvalues.max().max(0.0);
    let modes: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > keep.max(1e-15 * top))
        .collect();
    Ok(DMatrix::from_fn(modes.len(), index.len(), |a, p| {
        eig.eigenvalues[modes[a]].sqrt() * eig.eigenvectors[(p, modes[a])]
    }))
}

/// Reduced Nyström matrix of `M₁(λ)` with `ny` Gauss–Legendre nodes in `y`
/// on every rectangle.
///
/// `M₁ = F^* 𝒦 F` with `F f = (∫ ψ_p √V f dx)_p`; its nonzero spectrum is
/// that of `S 𝒦 S^*` acting on `⊕_r ℂ^{modes} ⊗ L²(J_r)`, discretized here.
pub fn m1_matrix(
    model: &EffectiveModel,
    v: &PerturbationV,
    lambda: f64,
    window: (i64, i64),
    ny: usize,
) -> Result<DMatrix<Complex64>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    let index: Vec<(i64, usize)> = (window.0..=window.1)
        .flat_map(|l| (0..model.multiplicity()).map(move |a| (l, a)))
        .collect();
    let mu_min = model.points.iter().map(|p| p.mu).fold(f64::INFINITY, f64::min);
    let kernel_scale = 1.0 / (2.0 * (mu_min * lambda).sqrt());

    struct Block {
        factor: DMatrix<f64>,
        nodes: Vec<f64>,
        weights: Vec<f64>,
    }
    let mut blocks = Vec::new();
    for r in v.rectangles() {
        let keep = RANK_CUTOFF / (kernel_scale * r.height());
        let factor = rectangle_factor(model, &index, r.x, r.amplitude, keep)?;
        let (nodes, weights) = gauss_legendre_on(ny, r.y[0], r.y[1]);
        blocks.push(Block { factor, nodes, weights });
    }
    let offsets: Vec<usize> = blocks
        .iter()
        .scan(0, |acc, b| {
            let o = *acc;
            *acc += b.factor.nrows() * ny;
            Some(o)
        })
        .collect();
    let dim: usize = blocks.iter().map(|b| b.factor.nrows() * ny).sum();

    let freq: Vec<f64> = index
        .iter()
        .map(|&(l, a)| l as f64 * model.tau() + model.points[a].k)
        .collect();
    let rate: Vec<f64> = index
        .iter()
        .map(|&(_, a)| (lambda / model.points[a].mu).sqrt())
        .collect();
    let amp: Vec<f64> = index
        .iter()
        .map(|&(_, a)| 1.0 / (2.0 * (model.points[a].mu * lambda).sqrt()))
        .collect();

    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for (r, br) in blocks.iter().enumerate() {
        for (s, bs) in blocks.iter().enumerate().skip(r) {
            // coupling[a, b, q] = S_r[a, q] S_s[b, q]
            let (ma, mb) = (br.factor.nrows(), bs.factor.nrows());
            let pairs: Vec<(usize, usize)> = (0..ny).flat_map(|i| (0..ny).map(move |j| (i, j))).collect();
            let kq: Vec<Vec<Complex64>> = pairs
                .par_iter()
                .map(|&(i, j)| {
                    let d = br.nodes[i] - bs.nodes[j];
                    let w = (br.weights[i] * bs.weights[j]).sqrt();
                    (0..index.len())
                        .map(|q| Complex64::from_polar(w * amp[q] * (-rate[q] * d.abs()).exp(), freq[q] * d))
                        .collect()
                })
                .collect();
            for (t, &(i, j)) in pairs.iter().enumerate() {
                let k = &kq[t];
                for a in 0..ma {
                    for b in 0..mb {
                        let sum: Complex64 = k
                            .iter()
                            .enumerate()
                            .map(|(q, kq)| kq * (br.factor[(a, q)] * bs.factor[(b, q)]))
                            .sum();
                        let (row, col) = (offsets[r] + a * ny + i, offsets[s] + b * ny + j);
                        m[(row, col)] = sum;
                        if s != r {
                            m[(col, row)] = sum.conj();
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Serialize)]
pub struct M1Count {
    pub lambda: f64,
    pub count: usize,
    /// Count at half the `y` resolution.
    pub coarse_count: usize,
    pub y_nodes: usize,
    pub dimension: usize,
    pub norm: f64,
}

fn count_at(
    model: &EffectiveModel,
    v: &PerturbationV,
    lambda: f64,
    window: (i64, i64),
    ny: usize,
) -> Result<(usize, usize, f64)> {
    let m = m1_matrix(model, v, lambda, window, ny)?;
    let ev = hermitian_eigenvalues(&m);
    let norm = ev.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    let floor = 1e-12 * norm;
    if floor >= 1.0 {
        return Err(Error::NoiseFloor { threshold: 1.0, floor });
    }
    Ok((ev.iter().filter(|&&e| e > 1.0).count(), m.nrows(), norm))
}

/// `n₊(1; M₁(λ))`; the `y` resolution is doubled once and the two counts
/// must agree to within one.
pub fn count_m1(
    model: &EffectiveModel,
    v: &PerturbationV,
    lambda: f64,
    window: (i64, i64),
    ny: usize,
) -> Result<M1Count> {
    if v.is_zero() {
        return Ok(M1Count {
            lambda,
            count: 0,
            coarse_count: 0,
            y_nodes: ny,
            dimension: 0,
            norm: 0.0,
        });
    }
    if ny < 2 || 2 * ny > MAX_Y_NODES {
        return Err(Error::InvalidInput(format!(
            "y node count {ny} outside 2..={}",
            MAX_Y_NODES / 2
        )));
    }
    let (coarse, _, _) = count_at(model, v, lambda, window, ny)?;
    let (fine, dim, norm) = count_at(model, v, lambda, window, 2 * ny)?;
    if coarse.abs_diff(fine) > 1 {
        return Err(Error::Quadrature(format!(
            "M1 count at λ = {lambda:e} changes from {coarse} to {fine} when y nodes double to {}",
            2 * ny
        )));
    }
    Ok(M1Count {
        lambda,
        count: fine,
        coarse_count: coarse,
        y_nodes: 2 * ny,
        dimension: dim,
        norm,
    })
}

/// `y` node count resolving the fastest phase `e^{i(lτ+k)y}` on the tallest
/// rectangle with about eight nodes per oscillation.
pub fn default_y_nodes(model: &EffectiveModel, v: &PerturbationV, window: (i64, i64)) -> usize {
    let wmax = window.0.abs().max(window.1.abs()) as f64 * model.tau() + model.tau();
    let hmax = v.rectangles().iter().map(|r| r.height()).fold(0.0, f64::max);
    let osc = wmax * hmax / (2.0 * std::f64::consts::PI);
    ((8.0 * osc).ceil() as usize).clamp(16, MAX_Y_NODES / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::gram::{count_g2, gram_g2};
    use crate::fiber::FiberSolver;
    use crate::potential::FourierPotential;

    fn model(b: f64) -> EffectiveModel {
        let s = FiberSolver::with_size(FourierPotential::cosine(1.0, 0.4).unwrap(), b, 48).unwrap();
        EffectiveModel::from_band(&s, 1).unwrap()
    }

    #[test]
    fn kernel_on_diagonal_is_lattice_sum() {
        let m = model(2.0);
        let v = PerturbationV::rectangle([-0.5, 0.5], [0.0, 1.0], 2.0).unwrap();
        let (lam, x, xp, y) = (1e-3, 0.1, -0.2, 0.4);
        let k = m1_kernel(&m, &v, lam, (-3, 3), (x, y), (xp, y));
        let mu = m.points[0].mu;
        let direct: f64 =
            (-3..=3).map(|l| m.psi(0, l, x) * m.psi(0, l, xp)).sum::<f64>() * 2.0 / (2.0 * (mu * lam).sqrt());
        assert!((k.re - direct).abs() < 1e-12 * direct.abs() && k.im.abs() < 1e-12 * direct.abs());
        assert_eq!(
            m1_kernel(&m, &v, lam, (-3, 3), (2.0, y), (xp, y)),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn reduced_form_matches_full_nystrom() {
        let m = model(2.0);
        let v = PerturbationV::rectangle([-0.4, 0.3], [0.0, 0.8], 1.5).unwrap();
        let (lam, win, ny, nx) = (1e-2, (-2, 2), 12, 24);
        let reduced = hermitian_eigenvalues(&m1_matrix(&m, &v, lam, win, ny).unwrap());
        let (xn, xw) = gauss_legendre_on(nx, -0.4, 0.3);
        let (yn, yw) = gauss_legendre_on(ny, 0.0, 0.8);
        let pts: Vec<(f64, f64, f64)> = xn
            .iter()
            .zip(&xw)
            .flat_map(|(x, wx)| yn.iter().zip(&yw).map(move |(y, wy)| (*x, *y, wx * wy)))
            .collect();
        let full = DMatrix::from_fn(pts.len(), pts.len(), |i, j| {
            let (p, q) = (pts[i], pts[j]);
            m1_kernel(&m, &v, lam, win, (p.0, p.1), (q.0, q.1)) * (p.2 * q.2).sqrt()
        });
        let full = hermitian_eigenvalues(&full);
        let top = full[full.len() - 1];
        for t in 0..5 {
            let (a, b) = (reduced[reduced.len() - 1 - t], full[full.len() - 1 - t]);
            assert!((a - b).abs() < 1e-8 * top, "{t}: {a} {b}");
        }
    }

    #[test]
    fn hermitian_psd_and_close_to_g2() {
        let m = model(2.0);
        let v = PerturbationV::rectangle([-0.5, 0.5], [0.0, 1.5], 1.0).unwrap();
        let win = (-4, 4);
        let mat = m1_matrix(&m, &v, 1e-3, win, 24).unwrap();
        assert!((&mat - mat.adjoint()).norm() < 1e-12 * mat.norm());
        let ev = hermitian_eigenvalues(&mat);
        assert!(ev[0] >= -1e-10 * ev[ev.len() - 1]);
        let g = gram_g2(&m, &v, win).unwrap();
        for lam in [1e-2, 1e-3, 1e-4] {
            let n1 = count_m1(&m, &v, lam, win, default_y_nodes(&m, &v, win)).unwrap().count;
            let n2 = count_g2(lam, &g).unwrap();
            assert!(n1.abs_diff(n2) <= 3, "{lam}: {n1} {n2}");
        }
    }

    #[test]
    fn zero_and_monotone() {
        let m = model(2.0);
        assert_eq!(
            count_m1(&m, &PerturbationV::zero(), 1e-3, (-2, 2), 16).unwrap().count,
            0
        );
        let v = PerturbationV::rectangle([-0.5, 0.5], [0.0, 1.5], 1.0).unwrap();
        let a = count_m1(&m, &v, 1e-2, (-4, 4), 24).unwrap().count;
        let b = count_m1(&m, &v, 1e-4, (-4, 4), 24).unwrap().count;
        let c = count_m1(&m, &v.scaled(4.0).unwrap(), 1e-2, (-4, 4), 24).unwrap().count;
        assert!(a <= b && a <= c);
    }
}
