//! A sign-continued real eigenfunction section `k ↦ ψ_j(·; k)`, the lattice
//! translation identity it satisfies, and its Gaussian decay.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::FiberSolver;
use crate::quadrature::gauss_legendre_on;

/// Overlap below which consecutive grid points are considered unrelated.
pub const MIN_OVERLAP: f64 = 0.5;

/// Largest `b ξ²` at which `∫ψ²` is still resolved in double precision.
pub const DECAY_EXPONENT_LIMIT: f64 = 70.0;

/// Coefficients of `ψ̃_j(·; k)` along a k-grid, signs chained so consecutive
/// overlaps are positive. `ψ_j(x; k) = ψ̃_j(x - k/b; k)`.
#[derive(Debug, Clone)]
pub struct EigenSection {
    pub j: usize,
    pub b: f64,
    pub ks: Vec<f64>,
    pub coeffs: Vec<DVector<f64>>,
    /// `⟨ψ̃(k_i), ψ̃(k_{i+1})⟩` after continuation.
    pub overlaps: Vec<f64>,
}

pub fn periodic_grid(tau: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| tau * i as f64 / n as f64).collect()
}

/// Sign-continued section over `ks` (any monotone order).
pub fn build_section(solver: &FiberSolver, j: usize, ks: &[f64]) -> Result<EigenSection> {
    if ks.is_empty() {
        return Err(Error::InvalidInput("empty k-grid".into()));
    }
    if j == 0 || j > solver.max_band() {
        return Err(Error::Precondition(format!(
            "band index {j} outside 1..={}",
            solver.max_band()
        )));
    }
    let solves: Vec<DVector<f64>> = ks
        .iter()
        .map(|&k| solver.solve(k).map(|s| s.vector(j)))
        .collect::<Result<_>>()?;
    let mut coeffs = Vec::with_capacity(ks.len());
    let mut overlaps = Vec::with_capacity(ks.len().saturating_sub(1));
    for (i, mut c) in solves.into_iter().enumerate() {
        if let Some(prev) = coeffs.last() {
            let mut o = c.dot(prev);
            if o < 0.0 {
                c.neg_mut();
                o = -o;
            }
            if o < MIN_OVERLAP {
                return Err(Error::SectionTooCoarse {
                    index: i - 1,
                    overlap: o,
                });
            }
            overlaps.push(o);
        }
        coeffs.push(c);
    }
    Ok(EigenSection {
        j,
        b: solver.b(),
        ks: ks.to_vec(),
        coeffs,
        overlaps,
    })
}

impl EigenSection {
    pub fn min_overlap(&self) -> f64 {
        self.overlaps.iter().copied().fold(1.0, f64::min)
    }

    /// `ψ_j(x; k_i)`.
    pub fn eval(&self, solver: &FiberSolver, i: usize, x: f64) -> f64 {
        solver.basis().eval(&self.coeffs[i], x - self.ks[i] / self.b)
    }

    /// Rank-one projector onto `ψ̃_j(·; k_i)` in coefficient space.
    pub fn projector(&self, i: usize) -> DMatrix<f64> {
        &self.coeffs[i] * self.coeffs[i].transpose()
    }
}

/// Trapezoid rule on a uniform grid; spectrally accurate for the Gaussian
/// tails involved.
fn l2_distance(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let h = (hi - lo) / n as f64;
    let (mut diff, mut dot) = (0.0, 0.0);
    for i in 0..=n {
        let x = lo + h * i as f64;
        let wgt = if i == 0 || i == n { 0.5 * h } else { h };
        let (a, c) = (f(x), g(x));
        diff += wgt * (a - c) * (a - c);
        dot += wgt * a * c;
    }
    (diff.sqrt(), dot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TranslationCheck {
    pub l: i64,
    pub k: f64,
    /// `‖ψ_j(·; lτ+k) - σ ψ_j(· - l𝒯; k)‖`.
    pub deviation: f64,
    /// `σ = ±1`, the sign picked up by continuation over `l` periods.
    pub holonomy: i8,
}

/// Continues the section from `k` to `k + lτ` in `steps_per_period` steps
/// per period and compares the end with the translated start.
pub fn translate_identity_check(
    solver: &FiberSolver,
    j: usize,
    l: i64,
    k: f64,
    steps_per_period: usize,
) -> Result<TranslationCheck> {
    let tau = solver.tau();
    let steps = (l.unsigned_abs() as usize * steps_per_period).max(1);
    let ks: Vec<f64> = (0..=steps)
        .map(|i| k + l as f64 * tau * i as f64 / steps as f64)
        .collect();
    let section = build_section(solver, j, &ks)?;
    let period = solver.potential().period();
    let shift = l as f64 * period;
    let b = solver.b();
    let reach = 6.0 / b.sqrt() + 4.0;
    let centre_start = k / b;
    let lo = centre_start.min(centre_start + shift) - reach;
    let hi = centre_start.max(centre_start + shift) + reach;
    let last = ks.len() - 1;
    let n = (((hi - lo) * b.sqrt() * 40.0) as usize).max(2000);
    let (raw, dot) = l2_distance(
        |x| section.eval(solver, last, x),
        |x| section.eval(solver, 0, x - shift),
        lo,
        hi,
        n,
    );
    let holonomy: i8 = if dot >= 0.0 { 1 } else { -1 };
    let deviation = if holonomy == 1 {
        raw
    } else {
        l2_distance(
            |x| section.eval(solver, last, x),
            |x| -section.eval(solver, 0, x - shift),
            lo,
            hi,
            n,
        )
        .0
    };
    Ok(TranslationCheck {
        l,
        k,
        deviation,
        holonomy,
    })
}

/// Step control for the tail integration: `h κ_max ≤ TAIL_STEP`.
const TAIL_STEP: f64 = 0.02;

/// Matching points sit this many Gaussian widths `1/√b` past the turning points.
const MATCH_WIDTHS: f64 = 2.0;

/// `ln|ψ|` on a uniform grid running outward from a matching point.
struct TailTable {
    start: f64,
    /// Signed step: negative for the left tail.
    step: f64,
    log_abs: Vec<f64>,
    sign: f64,
}

impl TailTable {
    /// Integrates the Riccati form `y' = q - y²` of the fiber equation, with
    /// `y = ψ'/ψ` and `q = (bx - k)² + W - E`, from the far end back to the
    /// matching point, the direction in which the decaying branch is stable.
    fn build(solver: &FiberSolver, k: f64, energy: f64, start: f64, far: f64, psi_start: f64) -> Result<Self> {
        let b = solver.b();
        let w = solver.potential();
        let q = |x: f64| -> Result<f64> {
            let d = b * x - k;
            Ok(d * d + w.eval(x, 0)? - energy)
        };
        let outward = (far - start).signum();
        let kappa_far = q(far)?.max(0.0).sqrt().max(b.sqrt());
        let n = (((far - start).abs() * kappa_far / TAIL_STEP).ceil() as usize).max(16);
        let h = (far - start) / n as f64;
        // Decaying branch: ψ'/ψ = -sign(outward) κ asymptotically.
        let mut y = -outward * q(far)?.max(0.0).sqrt();
        let mut ys = vec![0.0; n + 1];
        ys[n] = y;
        let f = |x: f64, y: f64| -> Result<f64> { Ok(q(x)? - y * y) };
        for i in (0..n).rev() {
            let x = start + h * (i + 1) as f64;
            let dx = -h;
            let k1 = f(x, y)?;
            let k2 = f(x + 0.5 * dx, y + 0.5 * dx * k1)?;
            let k3 = f(x + 0.5 * dx, y + 0.5 * dx * k2)?;
            let k4 = f(x + dx, y + dx * k3)?;
            y += dx / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            ys[i] = y;
        }
        let mut log_abs = vec![psi_start.abs().ln(); n + 1];
        for i in 1..=n {
            log_abs[i] = log_abs[i - 1] + 0.5 * h * (ys[i - 1] + ys[i]);
        }
        Ok(Self {
            start,
            step: h,
            log_abs,
            sign: psi_start.signum(),
        })
    }

    fn eval(&self, x: f64) -> f64 {
        let t = (x - self.start) / self.step;
        let last = self.log_abs.len() - 1;
        let i = (t.floor().max(0.0) as usize).min(last - 1);
        let frac = (t - i as f64).clamp(0.0, 1.0);
        let l = self.log_abs[i] * (1.0 - frac) + self.log_abs[i + 1] * frac;
        self.sign * l.exp()
    }
}

/// `ψ_j(x; k)` at `xs`. Inside the matching points the Hermite expansion
/// `coeffs` is summed; beyond them the decaying solution of the fiber
/// equation is continued from the matched value, so tails far below the
/// expansion's absolute accuracy keep their relative accuracy.
pub fn eval_with_tails(
    solver: &FiberSolver,
    coeffs: &DVector<f64>,
    k: f64,
    energy: f64,
    xs: &[f64],
) -> Result<Vec<f64>> {
    let b = solver.b();
    let centre = k / b;
    let w_sup = solver.potential().sup_norm(0)?;
    let reach = (energy + w_sup).max(0.0).sqrt() / b + MATCH_WIDTHS / b.sqrt();
    let (left, right) = (centre - reach, centre + reach);
    let basis = solver.basis();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let margin = 1.0 / b.sqrt();
    let left_table = if lo < left {
        Some(TailTable::build(
            solver,
            k,
            energy,
            left,
            lo - margin,
            basis.eval(coeffs, left - centre),
        )?)
    } else {
        None
    };
    let right_table = if hi > right {
        Some(TailTable::build(
            solver,
            k,
            energy,
            right,
            hi + margin,
            basis.eval(coeffs, right - centre),
        )?)
    } else {
        None
    };
    Ok(xs
        .iter()
        .map(|&x| match (&left_table, &right_table) {
            (Some(t), _) if x < left => t.eval(x),
            (_, Some(t)) if x > right => t.eval(x),
            _ => basis.eval(coeffs, x - centre),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayPoint {
    pub xi: f64,
    /// `ln ∫_𝓘 ψ_j(x - ξ; k₀)² dx`.
    pub log_integral: f64,
    /// `ξ^{-2}` times the above.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub points: Vec<DecayPoint>,
    /// Extrapolated `lim ξ^{-2} ln ∫`, the `ξ²` coefficient of the fit.
    pub slope: f64,
    /// RMS residual of the fit in `ln ∫`.
    pub residual: f64,
    /// ξ values removed by the underflow filter.
    pub dropped: Vec<f64>,
}

/// `ln ∫_a^c ψ_j(x - ξ; k₀)² dx` sampled on `xis` and fitted by
/// `A ξ² + B ξ + C ln ξ + D`; `A` estimates the Gaussian rate `-b`.
pub fn decay_slope(solver: &FiberSolver, j: usize, k0: f64, interval: (f64, f64), xis: &[f64]) -> Result<DecayFit> {
    let (a, c) = interval;
    if !(a < c) {
        return Err(Error::InvalidInput(format!("empty interval [{a}, {c}]")));
    }
    let b = solver.b();
    if j == 0 || j > solver.max_band() {
        return Err(Error::Precondition(format!(
            "band index {j} outside 1..={}",
            solver.max_band()
        )));
    }
    let solve = solver.solve(k0)?;
    let (coeffs, energy) = (solve.vector(j), solve.energy(j));
    let (nodes, weights) = gauss_legendre_on(96, a, c);
    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for &xi in xis {
        if xi <= 0.0 || b * xi * xi > DECAY_EXPONENT_LIMIT {
            dropped.push(xi);
            continue;
        }
        let shifted: Vec<f64> = nodes.iter().map(|x| x - xi).collect();
        let values = eval_with_tails(solver, &coeffs, k0, energy, &shifted)?;
        let integral: f64 = weights.iter().zip(&values).map(|(w, v)| w * v * v).sum();
        if integral <= 0.0 || !integral.is_finite() {
            warn!("decay integral underflows at xi = {xi}; dropped");
            dropped.push(xi);
            continue;
        }
        let log_integral = integral.ln();
        points.push(DecayPoint {
            xi,
            log_integral,
            ratio: log_integral / (xi * xi),
        });
    }
    if points.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "{} usable decay samples, need at least 5",
            points.len()
        )));
    }
    let design = DMatrix::from_fn(points.len(), 4, |r, col| {
        let xi = points[r].xi;
        match col {
            0 => xi * xi,
            1 => xi,
            2 => xi.ln(),
            _ => 1.0,
        }
    });
    let rhs = DVector::from_iterator(points.len(), points.iter().map(|p| p.log_integral));
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::LinearSolve(e.to_string()))?;
    let resid = &design * &coef - &rhs;
    Ok(DecayFit {
        slope: coef[0],
        residual: (resid.norm_squared() / points.len() as f64).sqrt(),
        points,
        dropped,
    })
}

/// `ξ` values `start, start + step, …` not exceeding `stop`.
pub fn xi_range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::FourierPotential;

    fn solver(b: f64, amp: f64, n: usize) -> FiberSolver {
        FiberSolver::with_size(FourierPotential::cosine(1.0, amp).unwrap(), b, n).unwrap()
    }

    #[test]
    fn zero_potential_section_is_constant() {
        let s = solver(1.0, 0.0, 24);
        let sec = build_section(&s, 2, &periodic_grid(s.tau(), 16)).unwrap();
        assert!(sec.overlaps.iter().all(|o| (o - 1.0).abs() < 1e-14));
    }

    #[test]
    fn section_is_smooth_on_fine_grid() {
        let s = solver(1.0, 0.4, 48);
        let sec = build_section(&s, 1, &periodic_grid(s.tau(), 512)).unwrap();
        assert!(sec.min_overlap() >= 0.999, "{}", sec.min_overlap());
        for c in &sec.coeffs {
            assert!((c.norm() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn coarse_grid_detected() {
        // Deep wells: half a period apart the ground state sits in
        // a different well.
        let s = solver(1.0, 60.0, 192);
        let tau = s.tau();
        let r = build_section(&s, 1, &[0.0, 0.5 * tau]);
        assert!(matches!(r, Err(Error::SectionTooCoarse { index: 0, .. })), "{r:?}");
        assert!(matches!(build_section(&s, 1, &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn projector_idempotent() {
        let s = solver(1.0, 0.4, 48);
        let sec = build_section(&s, 1, &[0.3]).unwrap();
        let p = sec.projector(0);
        assert!((&p * &p - &p).norm() < 1e-12);
    }

    #[test]
    fn translation_identity() {
        let s = solver(1.0, 0.4, 64);
        let t0 = translate_identity_check(&s, 1, 0, 0.2, 64).unwrap();
        assert!(t0.deviation < 1e-12 && t0.holonomy == 1);
        for l in [1, -1, 2] {
            let t = translate_identity_check(&s, 1, l, 0.2, 64).unwrap();
            assert!(t.deviation < 1e-6, "{t:?}");
            assert_eq!(t.holonomy.abs(), 1);
        }
    }

    #[test]
    fn gaussian_rate_of_landau_state() {
        for b in [1.0, 2.0] {
            let s = solver(b, 0.0, 24);
            let fit = decay_slope(&s, 1, 0.0, (-0.5, 0.5), &xi_range(4.0, 8.0, 0.25)).unwrap();
            assert!((fit.slope + b).abs() < 0.05 * b, "b={b}: {}", fit.slope);
        }
    }

    #[test]
    fn tails_match_landau_gaussian() {
        let b = 1.5;
        let s = solver(b, 0.0, 24);
        let k = 0.7;
        let solve = s.solve(k).unwrap();
        let (c, e) = (solve.vector(1), solve.energy(1));
        let xs = [-9.0, -6.0, -3.0, 0.0, 3.0, 6.0, 9.0];
        let v = eval_with_tails(&s, &c, k, e, &xs).unwrap();
        let sign = v[3].signum();
        for (x, got) in xs.iter().zip(&v) {
            let d = x - k / b;
            let exact = (b / std::f64::consts::PI).powf(0.25) * (-0.5 * b * d * d).exp();
            assert!((sign * got / exact - 1.0).abs() < 1e-4, "x = {x}: {got:e} vs {exact:e}");
        }
    }

    #[test]
    fn tails_continue_hermite_values() {
        let s = solver(1.0, 0.4, 128);
        let solve = s.solve(0.3).unwrap();
        let (c, e) = (solve.vector(2), solve.energy(2));
        let xs: Vec<f64> = (0..40).map(|i| -5.0 + 0.25 * i as f64).collect();
        let tails = eval_with_tails(&s, &c, 0.3, e, &xs).unwrap();
        for (x, t) in xs.iter().zip(&tails) {
            let h = s.basis().eval(&c, x - 0.3);
            // The expansion itself is only trusted down to ~1e-4 of its peak.
            if h.abs() > 1e-4 {
                assert!((t / h - 1.0).abs() < 1e-4, "x = {x}: {t:e} vs {h:e}");
            }
        }
    }

    #[test]
    fn gaussian_rate_with_potential() {
        let s = solver(1.0, 0.4, 128);
        let fit = decay_slope(&s, 1, 0.0, (-0.5, 0.5), &xi_range(4.0, 8.0, 0.25)).unwrap();
        assert!((fit.slope + 1.0).abs() < 0.1, "{}", fit.slope);
    }

    #[test]
    fn too_few_points_rejected() {
        let s = solver(2.0, 0.0, 24);
        let r = decay_slope(&s, 1, 0.0, (-0.5, 0.5), &[7.0, 8.0]);
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }
}
