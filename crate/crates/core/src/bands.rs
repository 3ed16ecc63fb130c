//! Band functions `E_j(k)`, their k-derivatives, band edges, open gaps and
//! the extremal sets of each band.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{FiberSolve, FiberSolver};

/// Uniform sampling of one period used for extremum search.
pub const DEFAULT_EXTREMUM_GRID: usize = 512;

/// `E_j'(k)` by the Feynman–Hellmann formula `(1/b) ∫ W'(x + k/b) ψ̃_j² dx`.
pub fn band_derivative(solver: &FiberSolver, j: usize, k: f64) -> Result<f64> {
    check_band(solver, j)?;
    let solve = solver.solve(k)?;
    let p1 = solver.basis().potential_matrix(solver.potential(), 1, k);
    Ok(derivative_from(&solve, &p1, solver.b(), j))
}

fn derivative_from(solve: &FiberSolve, p1: &DMatrix<f64>, b: f64, j: usize) -> f64 {
    let c = solve.eigenvectors.column(j - 1);
    (p1 * c).dot(&c) / b
}

fn check_band(solver: &FiberSolver, j: usize) -> Result<()> {
    if j == 0 || j > solver.max_band() {
        return Err(Error::Precondition(format!(
            "band index {j} outside 1..={}",
            solver.max_band()
        )));
    }
    Ok(())
}

/// Second k-derivative of a band together with the eigenvector velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Curvature {
    /// `E_j''(k)`.
    pub value: f64,
    /// `‖∂ψ̃_j/∂k‖_{L²}`.
    pub dpsi_norm: f64,
}

/// `E_j''(k) = (1/b²)∫W''ψ̃² + (2/b)∫W'(∂_kψ̃)ψ̃`, with
/// `∂_kψ̃ = -(1/b)(h̃ - E_j)^{-1}(I - π̃_j) W'ψ̃` solved on the orthogonal
/// complement of `ψ̃_j` through the fiber's eigendecomposition.
pub fn band_curvature(solver: &FiberSolver, j: usize, k: f64) -> Result<Curvature> {
    check_band(solver, j)?;
    let solve = solver.solve(k)?;
    let basis = solver.basis();
    let p1 = basis.potential_matrix(solver.potential(), 1, k);
    let p2 = basis.potential_matrix(solver.potential(), 2, k);
    let b = solver.b();
    let dc = eigenvector_velocity(&solve, &p1, b, j)?;
    let c = solve.eigenvectors.column(j - 1);
    let p1c = &p1 * c;
    let value = (&p2 * c).dot(&c) / (b * b) + 2.0 / b * p1c.dot(&dc);
    Ok(Curvature {
        value,
        dpsi_norm: dc.norm(),
    })
}

/// Coefficients of `∂ψ̃_j/∂k`.
pub fn eigenvector_velocity(solve: &FiberSolve, p1: &DMatrix<f64>, b: f64, j: usize) -> Result<DVector<f64>> {
    let e = solve.energy(j);
    let c = solve.eigenvectors.column(j - 1);
    let rhs = p1 * c;
    let scale = solve.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut dc = DVector::zeros(c.len());
    for (i, &ei) in solve.eigenvalues.iter().enumerate() {
        if i == j - 1 {
            continue;
        }
        let gap = ei - e;
        if gap.abs() <= 1e-12 * scale {
            return Err(Error::LinearSolve(format!(
                "complement of band {j} is singular: eigenvalue {} at distance {gap:e}",
                i + 1
            )));
        }
        let v = solve.eigenvectors.column(i);
        dc -= v * (v.dot(&rhs) / (b * gap));
    }
    Ok(dc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremumPoint {
    /// Location in `[0, τ)`.
    pub k: f64,
    pub kind: ExtremumKind,
    pub value: f64,
    pub second_derivative: f64,
    /// `∓E''/2` (positive for a non-degenerate extremum).
    pub mu: f64,
    /// Order `l` of the first non-vanishing even derivative; only `l = 1`
    /// is resolved.
    pub order: Option<u32>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandExtrema {
    pub band: usize,
    pub minima: Vec<ExtremumPoint>,
    pub maxima: Vec<ExtremumPoint>,
    pub edge_min: f64,
    pub edge_max: f64,
    /// Threshold on `|E''|` below which an extremum is called degenerate.
    pub degeneracy_threshold: f64,
    /// Two critical values closer than this are treated as the same height.
    pub tie_tolerance: f64,
}

impl BandExtrema {
    pub fn all_maxima_nondegenerate(&self) -> bool {
        !self.maxima.is_empty() && self.maxima.iter().all(|p| !p.degenerate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandAnalysis {
    pub band: usize,
    pub k_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub edge_min: f64,
    pub edge_max: f64,
    pub constant: bool,
    /// `None` for constant bands.
    pub extrema: Option<BandExtrema>,
    /// Open gap `(E_j^+, E_{j+1}^-)` when it exists.
    pub gap_above: Option<(f64, f64)>,
}

/// Energies and Feynman–Hellmann derivatives of bands `1..=count` on a grid.
struct BandSamples {
    ks: Vec<f64>,
    energies: Vec<Vec<f64>>,
    derivatives: Vec<Vec<f64>>,
}

fn sample_bands(solver: &FiberSolver, count: usize, grid: usize) -> Result<BandSamples> {
    let tau = solver.tau();
    let ks: Vec<f64> = (0..grid).map(|i| tau * i as f64 / grid as f64).collect();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = ks
        .par_iter()
        .map(|&k| {
            let solve = solver.solve(k)?;
            let p1 = solver.basis().potential_matrix(solver.potential(), 1, k);
            let e = solve.eigenvalues[..count].to_vec();
            let d = (1..=count)
                .map(|j| derivative_from(&solve, &p1, solver.b(), j))
                .collect();
            Ok((e, d))
        })
        .collect::<Result<_>>()?;
    let (energies, derivatives) = rows.into_iter().unzip();
    Ok(BandSamples {
        ks,
        energies,
        derivatives,
    })
}

/// Bisection on `E_j'` inside `[a, b]`, where the derivative changes sign.
fn bisect_critical(solver: &FiberSolver, j: usize, mut a: f64, mut fa: f64, mut b: f64) -> Result<f64> {
    let tol = 1e-12 * solver.tau().max(1.0);
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = band_derivative(solver, j, m)?;
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

fn extrema_from_samples(solver: &FiberSolver, j: usize, samples: &BandSamples) -> Result<BandExtrema> {
    let tau = solver.tau();
    let n = samples.ks.len();
    let d: Vec<f64> = samples.derivatives.iter().map(|r| r[j - 1]).collect();
    let e: Vec<f64> = samples.energies.iter().map(|r| r[j - 1]).collect();

    let mut critical: Vec<(f64, ExtremumKind)> = Vec::new();
    for i in 0..n {
        let (a, fa) = (samples.ks[i], d[i]);
        let (b, fb) = if i + 1 < n {
            (samples.ks[i + 1], d[i + 1])
        } else {
            (tau, d[0])
        };
        if (fa < 0.0) != (fb < 0.0) {
            let kind = if fa >= 0.0 {
                ExtremumKind::Max
            } else {
                ExtremumKind::Min
            };
            let k = bisect_critical(solver, j, a, fa, b)?;
            critical.push((k.rem_euclid(tau), kind));
        }
    }

    let mut points = Vec::with_capacity(critical.len());
    for (k, kind) in critical {
        let value = solver.solve(k)?.energy(j);
        let curv = band_curvature(solver, j, k)?;
        points.push((k, kind, value, curv.value));
    }

    let grid_max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let grid_min = e.iter().copied().fold(f64::INFINITY, f64::min);
    let edge_max = points.iter().map(|p| p.2).fold(grid_max, f64::max);
    let edge_min = points.iter().map(|p| p.2).fold(grid_min, f64::min);
    let width = edge_max - edge_min;
    let degeneracy_threshold = 1e-6 * width / (tau * tau);
    // eigenvalue roundoff scales with the norm of the truncated fiber matrix
    let matrix_scale = solver.b() * (2 * solver.basis().size() + 1) as f64 + solver.potential().sup_norm(0)?;
    let tie_tolerance = (1e-10 * width).max(64.0 * f64::EPSILON * matrix_scale);

    let make = |(k, kind, value, d2): (f64, ExtremumKind, f64, f64)| {
        let degenerate = d2.abs() <= degeneracy_threshold;
        let mu = match kind {
            ExtremumKind::Max => -0.5 * d2,
            ExtremumKind::Min => 0.5 * d2,
        };
        ExtremumPoint {
            k,
            kind,
            value,
            second_derivative: d2,
            mu,
            order: if degenerate { None } else { Some(1) },
            degenerate,
        }
    };
    let maxima = points
        .iter()
        .filter(|p| p.1 == ExtremumKind::Max && p.2 >= edge_max - tie_tolerance)
        .map(|&p| make(p))
        .collect();
    let minima = points
        .iter()
        .filter(|p| p.1 == ExtremumKind::Min && p.2 <= edge_min + tie_tolerance)
        .map(|&p| make(p))
        .collect();
    Ok(BandExtrema {
        band: j,
        minima,
        maxima,
        edge_min,
        edge_max,
        degeneracy_threshold,
        tie_tolerance,
    })
}

fn is_constant(solver: &FiberSolver, j: usize, samples: &BandSamples) -> bool {
    let scale = samples.energies.iter().fold(1.0f64, |a, r| a.max(r[j - 1].abs()));
    let dmax = samples.derivatives.iter().fold(0.0f64, |a, r| a.max(r[j - 1].abs()));
    dmax <= 1e-13 * scale / solver.tau()
}

/// `M_j^-` and `M_j^+`: every global minimizer and maximizer of `E_j` in
/// `[0, τ)`, classified by curvature.
pub fn locate_extrema(solver: &FiberSolver, j: usize, grid: usize) -> Result<BandExtrema> {
    check_band(solver, j)?;
    let samples = sample_bands(solver, j, grid)?;
    if is_constant(solver, j, &samples) {
        return Err(Error::ConstantBand(j));
    }
    extrema_from_samples(solver, j, &samples)
}

/// Edges of bands `1..=j_max`, extremal sets of every non-constant band,
/// and the open gaps above each band.
pub fn band_edges_and_gaps(solver: &FiberSolver, j_max: usize, grid: usize) -> Result<Vec<BandAnalysis>> {
    check_band(solver, j_max + 1)?;
    let samples = sample_bands(solver, j_max + 1, grid)?;
    let mut out = Vec::with_capacity(j_max + 1);
    for j in 1..=j_max + 1 {
        let values: Vec<f64> = samples.energies.iter().map(|r| r[j - 1]).collect();
        let constant = is_constant(solver, j, &samples);
        let (extrema, edge_min, edge_max) = if constant {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (None, lo, hi)
        } else {
            let ex = extrema_from_samples(solver, j, &samples)?;
            let (lo, hi) = (ex.edge_min, ex.edge_max);
            (Some(ex), lo, hi)
        };
        out.push(BandAnalysis {
            band: j,
            k_grid: samples.ks.clone(),
            values,
            edge_min,
            edge_max,
            constant,
            extrema,
            gap_above: None,
        });
    }
    for j in 0..j_max {
        let (hi, next_lo) = (out[j].edge_max, out[j + 1].edge_min);
        if hi < next_lo {
            out[j].gap_above = Some((hi, next_lo));
        }
    }
    out.truncate(j_max);
    Ok(out)
}

/// Largest deviation of `E_j` from the quadratic model `E(k★) ∓ μ(k - k★)²`
/// on `|k - k★| <= delta`, relative to `μ δ²`.
pub fn quadratic_model_residual(
    solver: &FiberSolver,
    j: usize,
    point: &ExtremumPoint,
    delta: f64,
    samples: usize,
) -> Result<f64> {
    let sign = match point.kind {
        ExtremumKind::Max => -1.0,
        ExtremumKind::Min => 1.0,
    };
    let mut worst = 0.0f64;
    for i in 0..=samples {
        let t = -delta + 2.0 * delta * i as f64 / samples as f64;
        let e = solver.solve(point.k + t)?.energy(j);
        let model = point.value + sign * point.mu * t * t;
        worst = worst.max((e - model).abs());
    }
    Ok(worst / (point.mu * delta * delta))
}
