//! Explicit large-field constants, the field thresholds built from them, and
//! checks of the first- and second-derivative bounds on band functions.

use serde::Serialize;

use crate::bands::{band_curvature, band_derivative, BandAnalysis};
use crate::error::{Error, Result};
use crate::fiber::{hermite_fn, FiberSolver};
use crate::potential::FourierPotential;
use crate::quadrature::gauss_legendre_on;

/// Residual slack accepted on top of the analytic bounds.
pub const BOUND_TOLERANCE: f64 = 1e-8;

/// `c3` and `c4` are obtained from `c1` and `c2` by replacing `W'` with `W''`
/// and `W''` with `W'''`; they are not displayed explicitly in the source.
pub const ANALOGY_NOTE: &str = "c3 and c4 are defined by analogy: c3 = c1 with W' -> W'', c4 = c2 with W'' -> W'''";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemiclassicalConstants {
    pub j: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    /// `‖W^{(m)}‖_∞` for `m = 0..=3`.
    pub sup_norms: [f64; 4],
    /// `Σ_{l≥1} (2|l-j|-1)^{-2}`.
    pub series_outer: f64,
    /// `Σ_{l≠j} (2|l-j|-3/2)^{-2}`.
    pub series_inner: f64,
    /// `∫ |y| φ_j(y)² dy`.
    pub abs_moment: f64,
}

/// `Σ_{d≥0} m(d) (2d-a)^{-2}` over distances `d = |l-j|`, where `m(d)` counts
/// the `l ≥ 1` at distance `d` from `j`. `include_zero` keeps `d = 0`.
fn lattice_series(j: usize, a: f64, include_zero: bool) -> f64 {
    let mult = |d: usize| -> f64 {
        if d == 0 {
            1.0
        } else if d < j {
            2.0
        } else {
            1.0
        }
    };
    let partial = |depth: usize| -> f64 {
        let start = if include_zero { 0 } else { 1 };
        let body: f64 = (start..=depth).map(|d| mult(d) / (2.0 * d as f64 - a).powi(2)).sum();
        // midpoint comparison with ∫_{D+1/2}^∞ (2t-a)^{-2} dt
        body + 1.0 / (2.0 * (2.0 * depth as f64 + 1.0 - a))
    };
    let mut depth = 64.max(2 * j);
    let mut prev = partial(depth);
    loop {
        depth *= 2;
        let next = partial(depth);
        if (next - prev).abs() < 1e-10 * next.abs() || depth > 1 << 26 {
            return next;
        }
        prev = next;
    }
}

/// `∫ |y| φ_j(y)² dy` by panelled Gauss–Legendre on `[0, R]`, doubled until stable.
pub fn abs_moment(j: usize) -> Result<f64> {
    let reach = (2.0 * j as f64 + 1.0).sqrt() + 10.0;
    let eval = |panels: usize| -> Result<f64> {
        let h = reach / panels as f64;
        let mut s = 0.0;
        for p in 0..panels {
            let (x, w) = gauss_legendre_on(16, p as f64 * h, (p + 1) as f64 * h);
            for (x, w) in x.iter().zip(&w) {
                let f = hermite_fn(j, *x)?;
                s += w * x * f * f;
            }
        }
        Ok(2.0 * s)
    };
    let mut panels = 8;
    let mut prev = eval(panels)?;
    while panels < 1 << 12 {
        panels *= 2;
        let next = eval(panels)?;
        if (next - prev).abs() < 1e-13 * next.abs().max(1e-300) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature(format!("moment of phi_{j} not stable")))
}

/// The constants `c1..c5` for band `j`.
pub fn constants(j: usize, w: &FourierPotential) -> Result<SemiclassicalConstants> {
    if j == 0 {
        return Err(Error::Precondition("band index must be at least 1".into()));
    }
    let sup_norms = [w.sup_norm(0)?, w.sup_norm(1)?, w.sup_norm(2)?, w.sup_norm(3)?];
    let series_outer = lattice_series(j, 1.0, true);
    let series_inner = lattice_series(j, 1.5, false);
    let geom = series_outer.sqrt() * (series_inner + 4.0).sqrt();
    let moment = abs_moment(j)?;
    let c1 = sup_norms[0] * sup_norms[1] * geom;
    let c2 = sup_norms[2] * moment;
    let c3 = sup_norms[0] * sup_norms[2] * geom;
    let c4 = sup_norms[3] * moment;
    let c5 = c3 + 2.0 * sup_norms[1] * sup_norms[1];
    Ok(SemiclassicalConstants {
        j,
        c1,
        c2,
        c3,
        c4,
        c5,
        sup_norms,
        series_outer,
        series_inner,
        abs_moment: moment,
    })
}

/// Smallest `b` with `s·b - c_half·√b - c_int > 0` raised to a square root
/// and combined with the standing assumption `b > 2‖W‖`.
fn threshold(c_half: f64, c_int: f64, slope: f64, sup_w: f64) -> f64 {
    let root = (c_half + (c_half * c_half + 4.0 * c_int * slope).sqrt()) / (2.0 * slope);
    (2.0 * sup_w).max(root * root)
}

impl SemiclassicalConstants {
    /// `b₀(x₀)`: above it `sign E_j'(b x₀) = sign W'(x₀)`.
    pub fn b0(&self, w: &FourierPotential, x0: f64) -> Result<f64> {
        let d = w.eval(x0, 1)?;
        if d.abs() <= 1e-12 * self.sup_norms[1].max(f64::MIN_POSITIVE) {
            return Err(Error::Precondition(format!("W'({x0}) = 0: b0 undefined")));
        }
        Ok(threshold(self.c2, self.c1, d.abs(), self.sup_norms[0]))
    }

    /// `b₁(x₀)`: above it `sign E_j''(b x₀) = sign W''(x₀)`.
    pub fn b1(&self, w: &FourierPotential, x0: f64) -> Result<f64> {
        let d = w.eval(x0, 2)?;
        if d.abs() <= 1e-12 * self.sup_norms[2].max(f64::MIN_POSITIVE) {
            return Err(Error::Precondition(format!("W''({x0}) = 0: b1 undefined")));
        }
        Ok(threshold(self.c4, self.c5, d.abs(), self.sup_norms[0]))
    }

    pub fn first_bound(&self, b: f64) -> f64 {
        self.c1 / (b * b) + self.c2 / b.powf(1.5)
    }

    pub fn second_bound(&self, b: f64) -> f64 {
        self.c5 / (b * b * b) + self.c4 / b.powf(2.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub b: f64,
    pub j: usize,
    pub bound: f64,
    /// `max_k |deviation| - bound`.
    pub max_residual: f64,
    pub worst_k: f64,
    pub passes: bool,
}

fn require_large_field(solver: &FiberSolver, sup_w: f64) -> Result<()> {
    let b = solver.b();
    if b <= 2.0 * sup_w {
        return Err(Error::Precondition(format!(
            "b = {b} must exceed 2‖W‖ = {}",
            2.0 * sup_w
        )));
    }
    Ok(())
}

fn bound_check(
    solver: &FiberSolver,
    c: &SemiclassicalConstants,
    ks: &[f64],
    bound: f64,
    deviation: impl Fn(f64) -> Result<f64>,
) -> Result<BoundCheck> {
    require_large_field(solver, c.sup_norms[0])?;
    let mut worst = (f64::NEG_INFINITY, 0.0);
    for &k in ks {
        let r = deviation(k)?.abs() - bound;
        if r > worst.0 {
            worst = (r, k);
        }
    }
    Ok(BoundCheck {
        b: solver.b(),
        j: c.j,
        bound,
        max_residual: worst.0,
        worst_k: worst.1,
        passes: worst.0 <= BOUND_TOLERANCE,
    })
}

/// `|E_j'(k) - W'(k/b)/b| ≤ c1 b^{-2} + c2 b^{-3/2}` over `ks`.
pub fn verify_first_bound(solver: &FiberSolver, c: &SemiclassicalConstants, ks: &[f64]) -> Result<BoundCheck> {
    let b = solver.b();
    let w = solver.potential();
    bound_check(solver, c, ks, c.first_bound(b), |k| {
        Ok(band_derivative(solver, c.j, k)? - w.eval(k / b, 1)? / b)
    })
}

/// `|E_j''(k) - W''(k/b)/b²| ≤ c5 b^{-3} + c4 b^{-5/2}` over `ks`.
pub fn verify_second_bound(solver: &FiberSolver, c: &SemiclassicalConstants, ks: &[f64]) -> Result<BoundCheck> {
    let b = solver.b();
    let w = solver.potential();
    bound_check(solver, c, ks, c.second_bound(b), |k| {
        Ok(band_curvature(solver, c.j, k)?.value - w.eval(k / b, 2)? / (b * b))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignPrediction {
    pub x0: f64,
    pub b: f64,
    pub threshold: f64,
    /// Sign of `W^{(m)}(x₀)`.
    pub predicted: f64,
    /// `E_j^{(m)}(b x₀)`.
    pub observed: f64,
    /// `None` when `b` is below the threshold and nothing is predicted.
    pub holds: Option<bool>,
}

/// First-derivative sign prediction at `k = b x₀`.
pub fn first_sign(solver: &FiberSolver, c: &SemiclassicalConstants, x0: f64) -> Result<SignPrediction> {
    let w = solver.potential();
    let b = solver.b();
    let threshold = c.b0(w, x0)?;
    let predicted = w.eval(x0, 1)?.signum();
    let observed = band_derivative(solver, c.j, b * x0)?;
    Ok(SignPrediction {
        x0,
        b,
        threshold,
        predicted,
        observed,
        holds: (b > threshold).then(|| observed.signum() == predicted),
    })
}

/// Curvature sign prediction at `k = b x₀`.
pub fn second_sign(solver: &FiberSolver, c: &SemiclassicalConstants, x0: f64) -> Result<SignPrediction> {
    let w = solver.potential();
    let b = solver.b();
    let threshold = c.b1(w, x0)?;
    let predicted = w.eval(x0, 2)?.signum();
    let observed = band_curvature(solver, c.j, b * x0)?.value;
    Ok(SignPrediction {
        x0,
        b,
        threshold,
        predicted,
        observed,
        holds: (b > threshold).then(|| observed.signum() == predicted),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KkpDrift {
    pub j: usize,
    /// `ℰ_j^- - b(2j-1) - ⟨W⟩`.
    pub lower: f64,
    /// `ℰ_j^+ - b(2j-1) - ⟨W⟩`.
    pub upper: f64,
}

impl KkpDrift {
    pub fn magnitude(&self) -> f64 {
        self.lower.abs().max(self.upper.abs())
    }
}

/// Distance of the band edges from the shifted Landau levels.
pub fn kkp_drift(bands: &[BandAnalysis], b: f64, w: &FourierPotential) -> Vec<KkpDrift> {
    let mean = w.mean();
    bands
        .iter()
        .map(|band| {
            let level = b * (2.0 * band.band as f64 - 1.0) + mean;
            KkpDrift {
                j: band.band,
                lower: band.edge_min - level,
                upper: band.edge_max - level,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::band_edges_and_gaps;
    use std::f64::consts::PI;

    fn w04() -> FourierPotential {
        FourierPotential::cosine(1.0, 0.4).unwrap()
    }

    #[test]
    fn outer_series_for_first_band() {
        let s = lattice_series(1, 1.0, true);
        assert!((s - (1.0 + PI * PI / 8.0)).abs() < 1e-9, "{s}");
        // direct partial sum to 1e6 terms
        let direct: f64 = 1.0 + (1..=1_000_000).map(|d| (2.0 * d as f64 - 1.0).powi(-2)).sum::<f64>();
        assert!((s - direct).abs() < 1e-6);
    }

    #[test]
    fn inner_series_counts_both_sides() {
        let s = lattice_series(3, 1.5, false);
        let direct: f64 = (1..=2_000_000usize)
            .filter(|&l| l != 3)
            .map(|l| (2.0 * (l as f64 - 3.0).abs() - 1.5).powi(-2))
            .sum();
        assert!((s - direct).abs() < 1e-6, "{s} vs {direct}");
    }

    #[test]
    fn moments_of_low_states() {
        assert!((abs_moment(1).unwrap() - 1.0 / PI.sqrt()).abs() < 1e-12);
        assert!((abs_moment(2).unwrap() - 2.0 / PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constants_scale_with_amplitude() {
        let a = constants(1, &w04()).unwrap();
        let b = constants(1, &FourierPotential::cosine(1.0, 0.8).unwrap()).unwrap();
        assert!((b.c1 / a.c1 - 4.0).abs() < 1e-9);
        assert!((b.c2 / a.c2 - 2.0).abs() < 1e-9);
        assert!((a.c5 - a.c3 - 2.0 * a.sup_norms[1].powi(2)).abs() < 1e-12);
        assert!((a.c2 - 8.91).abs() < 0.01, "{}", a.c2);
    }

    #[test]
    fn thresholds() {
        let w = w04();
        let c = constants(1, &w).unwrap();
        let b0 = c.b0(&w, 0.25).unwrap();
        assert!(b0 >= 2.0 * c.sup_norms[0]);
        assert!((b0 - 15.9).abs() < 0.1, "{b0}");
        assert!(c.b0(&w, 0.0).is_err());
        assert!(c.b1(&w, 0.25).is_err());
        assert!(c.b1(&w, 0.0).unwrap() > 2.0 * c.sup_norms[0]);
    }

    #[test]
    fn zero_potential_passes_trivially() {
        let w = FourierPotential::zero(1.0).unwrap();
        let s = FiberSolver::with_size(w.clone(), 1.0, 24).unwrap();
        let c = constants(1, &w).unwrap();
        let ks = [0.0, 0.3, 0.6];
        let r1 = verify_first_bound(&s, &c, &ks).unwrap();
        let r2 = verify_second_bound(&s, &c, &ks).unwrap();
        assert!(r1.passes && r2.passes);
        assert_eq!(r1.max_residual, 0.0);
    }

    #[test]
    fn bounds_hold_at_b10() {
        let w = w04();
        let s = FiberSolver::with_size(w.clone(), 10.0, 48).unwrap();
        let ks: Vec<f64> = (0..16).map(|i| s.tau() * i as f64 / 16.0).collect();
        for j in 1..=2 {
            let c = constants(j, &w).unwrap();
            assert!(verify_first_bound(&s, &c, &ks).unwrap().passes);
            assert!(verify_second_bound(&s, &c, &ks).unwrap().passes);
        }
    }

    #[test]
    fn small_field_rejected() {
        let w = w04();
        let s = FiberSolver::with_size(w.clone(), 0.5, 24).unwrap();
        let c = constants(1, &w).unwrap();
        assert!(matches!(
            verify_first_bound(&s, &c, &[0.0]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn signs_above_threshold() {
        let w = w04();
        let c = constants(1, &w).unwrap();
        let s = FiberSolver::with_size(w, 40.0, 48).unwrap();
        for x0 in [0.25, -0.25] {
            let p = first_sign(&s, &c, x0).unwrap();
            assert_eq!(p.holds, Some(true), "{p:?}");
        }
        for x0 in [0.0, 0.5] {
            let p = second_sign(&s, &c, x0).unwrap();
            assert_eq!(p.holds, Some(true), "{p:?}");
        }
    }

    #[test]
    fn drift_vanishes_for_constant_potential() {
        let w = FourierPotential::new(1.0, vec![0.7], vec![]).unwrap();
        let s = FiberSolver::with_size(w.clone(), 2.0, 32).unwrap();
        let bands = band_edges_and_gaps(&s, 4, 16).unwrap();
        for d in kkp_drift(&bands, 2.0, &w) {
            assert!(d.magnitude() < 1e-12, "{d:?}");
        }
    }
}
