use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bands::{locate_extrema, BandExtrema, DEFAULT_EXTREMUM_GRID};
use crate::error::{Error, Result};
use crate::fiber::FiberSolver;

/// Relative slack in the Gaussian exponent when choosing lattice cutoffs.
pub const LATTICE_MARGIN: f64 = 0.2;

/// One point `k_α` of `𝓜_j^+` with its curvature and eigenfunction.
#[derive(Debug, Clone, Serialize)]
pub struct EdgePoint {
    pub k: f64,
    pub mu: f64,
    #[serde(skip)]
    pub coeffs: DVector<f64>,
}

/// The band-edge data entering the effective operators: `𝓜_j^+`,
/// `μ_α`, and `ψ_j(· - l𝒯; k_α)`.
#[derive(Debug, Clone)]
pub struct EffectiveModel {
    pub j: usize,
    /// `ℰ_j^+`.
    pub edge: f64,
    pub points: Vec<EdgePoint>,
    solver: FiberSolver,
}

impl EffectiveModel {
    /// Refuses empty or degenerate maximum sets.
    pub fn new(solver: &FiberSolver, extrema: &BandExtrema) -> Result<Self> {
        if extrema.maxima.is_empty() {
            return Err(Error::Precondition(format!("band {} has no maximum", extrema.band)));
        }
        if let Some(p) = extrema.maxima.iter().find(|p| p.degenerate || p.mu <= 0.0) {
            return Err(Error::DegenerateExtremum {
                band: extrema.band,
                k: p.k,
            });
        }
        let points = extrema
            .maxima
            .iter()
            .map(|p| {
                Ok(EdgePoint {
                    k: p.k,
                    mu: p.mu,
                    coeffs: solver.solve(p.k)?.vector(extrema.band),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            j: extrema.band,
            edge: extrema.edge_max,
            points,
            solver: solver.clone(),
        })
    }

    /// Locates `𝓜_j^+` and builds the model from it.
    pub fn from_band(solver: &FiberSolver, j: usize) -> Result<Self> {
        Self::new(solver, &locate_extrema(solver, j, DEFAULT_EXTREMUM_GRID)?)
    }

    pub fn solver(&self) -> &FiberSolver {
        &self.solver
    }

    pub fn b(&self) -> f64 {
        self.solver.b()
    }

    pub fn period(&self) -> f64 {
        self.solver.potential().period()
    }

    pub fn tau(&self) -> f64 {
        self.solver.tau()
    }

    /// `A_j^+`.
    pub fn multiplicity(&self) -> usize {
        self.points.len()
    }

    /// Centre `l𝒯 + k_α/b` of `ψ_j(· - l𝒯; k_α)`.
    pub fn centre(&self, alpha: usize, l: i64) -> f64 {
        l as f64 * self.period() + self.points[alpha].k / self.b()
    }

    /// `ψ_j(x - l𝒯; k_α)`.
    pub fn psi(&self, alpha: usize, l: i64, x: f64) -> f64 {
        self.solver
            .basis()
            .eval(&self.points[alpha].coeffs, x - self.centre(alpha, l))
    }

    /// `ψ_j(x_i - l𝒯; k_α)` as an `xs × ls` matrix.
    pub fn psi_table(&self, alpha: usize, ls: &[i64], xs: &[f64]) -> DMatrix<f64> {
        let pts: Vec<f64> = ls
            .iter()
            .flat_map(|&l| xs.iter().map(move |&x| (l, x)))
            .map(|(l, x)| x - self.centre(alpha, l))
            .collect();
        let flat = self.solver.basis().eval_many(&[&self.points[alpha].coeffs], &pts);
        DMatrix::from_fn(xs.len(), ls.len(), |i, c| flat[(c * xs.len() + i, 0)])
    }

    /// Lattice indices `l` for which some `ψ_j(· - l𝒯; k_α)` can contribute
    /// above `threshold` on `interval`, given the prefactor `scale`:
    /// `exp(-b d² (1 - margin)) · scale > threshold / 10` with `d` the distance
    /// from the centre to the interval.
    pub fn lattice_window(&self, interval: [f64; 2], scale: f64, threshold: f64) -> (i64, i64) {
        let ratio = 10.0 * scale / threshold;
        let reach = if ratio > 1.0 {
            (ratio.ln() / ((1.0 - LATTICE_MARGIN) * self.b())).sqrt()
        } else {
            0.0
        };
        let t = self.period();
        let (mut lo, mut hi) = (i64::MAX, i64::MIN);
        for p in &self.points {
            let shift = p.k / self.b();
            let a = ((interval[0] - reach - shift) / t).ceil() as i64;
            let c = ((interval[1] + reach - shift) / t).floor() as i64;
            let mid = ((0.5 * (interval[0] + interval[1]) - shift) / t).round() as i64;
            lo = lo.min(a.min(mid));
            hi = hi.max(c.max(mid));
        }
        (lo, hi)
    }
}
