use std::f64::consts::PI;

use serde::Serialize;

use super::gram::OVERLAP_FLOOR;
use super::model::EffectiveModel;
use super::perturbation::{PerturbationV, Rectangle};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;

/// Relative tolerance absorbing rounding in `Ent(x)` when `x` is an integer
/// up to representation error.
pub const ENT_TOLERANCE: f64 = 1e-12;

/// `Σ_{m∈ℤ} (m²+1)^{-1} = π coth π`.
pub fn inverse_square_sum() -> f64 {
    PI / PI.tanh()
}

/// Smallest integer `≥ x`.
pub fn ent(x: f64) -> Result<u64> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::InvalidInput(format!(
            "Ent needs a positive finite argument, got {x}"
        )));
    }
    Ok((x - ENT_TOLERANCE * x.max(1.0)).ceil().max(1.0) as u64)
}

/// `L(q) = Ent(2π/(τq))`.
pub fn lattice_step(tau: f64, q: f64) -> Result<u64> {
    ent(2.0 * PI / (tau * q))
}

/// `𝒞(Ω)` over vertical chords inside single rectangles.
pub fn capacity(v: &PerturbationV, tau: f64) -> Result<f64> {
    if v.is_zero() {
        return Err(Error::Precondition("capacity of an empty set".into()));
    }
    let mut best = 0.0f64;
    for r in v.rectangles() {
        best = best.max(1.0 / lattice_step(tau, r.height())? as f64);
    }
    Ok(best)
}

/// `√2/(√b 𝒯)`.
pub fn gaussian_rate(b: f64, period: f64) -> f64 {
    2f64.sqrt() / (b.sqrt() * period)
}

fn interval_mass(model: &EffectiveModel, alpha: usize, ls: &[i64], x: [f64; 2]) -> Result<Vec<f64>> {
    let eval = |n: usize| {
        let (nodes, w) = gauss_legendre_on(n, x[0], x[1]);
        let tab = model.psi_table(alpha, ls, &nodes);
        (0..ls.len())
            .map(|c| (0..n).map(|i| w[i] * tab[(i, c)].powi(2)).sum::<f64>())
            .collect::<Vec<f64>>()
    };
    let mut n = 32;
    let mut prev = eval(n);
    while n < 2048 {
        n *= 2;
        let next = eval(n);
        if next
            .iter()
            .zip(&prev)
            .all(|(a, b)| (a - b).abs() <= 1e-10 * a.abs() + OVERLAP_FLOOR)
        {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature(format!(
        "∫ψ² over [{}, {}] unstable at {n} nodes",
        x[0], x[1]
    )))
}

/// Grows a lattice range around `start` until `f` drops below `floor` for two
/// consecutive sites on each side.
fn grow<F>(start: i64, floor: f64, mut f: F) -> Result<Vec<(i64, f64)>>
where
    F: FnMut(&[i64]) -> Result<Vec<f64>>,
{
    let mut out = vec![(start, f(&[start])?[0])];
    for dir in [-1i64, 1] {
        let mut l = start;
        let mut quiet = 0;
        while quiet < 2 {
            l += dir;
            if (l - start).abs() > 100_000 {
                return Err(Error::Truncation("diagonal bound tail does not decay".into()));
            }
            let v = f(&[l])?[0];
            quiet = if v < floor { quiet + 1 } else { 0 };
            out.push((l, v));
        }
    }
    out.sort_by_key(|p| p.0);
    Ok(out)
}

/// Diagonal majorant `M₃⁺` and minorant `M₃⁻` of `G₂*G₂`.
#[derive(Debug, Clone, Serialize)]
pub struct NuBounds {
    /// `ℛ₊ ⊇ supp V` and `C₊ = sup V`.
    pub outer: Rectangle,
    /// `ℛ₋ = 𝓘₋ × (y₀, y₀ + 2π/(τL)) ⊆ Ω₋` with `C₋`.
    pub inner: Rectangle,
    /// `L(q)` for the chord length `q` of the chosen inner rectangle.
    pub step: u64,
    /// `((l, α), ν⁺_{l,α})`.
    pub upper: Vec<((i64, usize), f64)>,
    /// `(m, ν⁻_m)`.
    pub lower: Vec<(i64, f64)>,
}

impl NuBounds {
    /// Tables cover every site whose ν exceeds `2√λ_min/C±` by at least a
    /// factor 1/10.
    pub fn new(model: &EffectiveModel, v: &PerturbationV, lambda_min: f64) -> Result<Self> {
        if !(lambda_min > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be positive, got {lambda_min}"
            )));
        }
        let outer = v
            .bounding_box()
            .ok_or_else(|| Error::Precondition("V is zero: Ω₋ is empty".into()))?;
        let tau = model.tau();
        let (mut chosen, mut best) = (None, (0u64, 0.0f64));
        for r in v.rectangles() {
            let l = lattice_step(tau, r.height())?;
            let key = (l, r.amplitude * r.width());
            if chosen.is_none() || key.0 < best.0 || (key.0 == best.0 && key.1 > best.1) {
                chosen = Some(*r);
                best = key;
            }
        }
        let r = chosen.expect("non-empty");
        let step = best.0;
        let inner = Rectangle::new(r.x, [r.y[0], r.y[0] + 2.0 * PI / (tau * step as f64)], r.amplitude);

        let t = 2.0 * lambda_min.sqrt();
        let inv_mu_sum: f64 = model.points.iter().map(|p| p.mu.powf(-0.5)).sum();
        let pref = outer.height() * inv_mu_sum * inverse_square_sum();
        let mut upper = Vec::new();
        for alpha in 0..model.multiplicity() {
            let start =
                ((0.5 * (outer.x[0] + outer.x[1]) - model.points[alpha].k / model.b()) / model.period()).round() as i64;
            let table = grow(start, 0.1 * t / outer.amplitude, |ls| {
                let mass = interval_mass(model, alpha, ls, outer.x)?;
                Ok(ls
                    .iter()
                    .zip(mass)
                    .map(|(&l, m)| pref * ((l * l) as f64 + 1.0) * m)
                    .collect())
            })?;
            upper.extend(table.into_iter().map(|(l, nu)| ((l, alpha), nu)));
        }

        let p1 = &model.points[0];
        let lt = step as i64;
        let pref = 2.0 * PI / (tau * step as f64 * p1.mu.sqrt());
        let start =
            ((0.5 * (inner.x[0] + inner.x[1]) - p1.k / model.b()) / (model.period() * step as f64)).round() as i64;
        let lower = grow(start, 0.1 * t / inner.amplitude, |ms| {
            let ls: Vec<i64> = ms.iter().map(|m| m * lt).collect();
            Ok(interval_mass(model, 0, &ls, inner.x)?
                .into_iter()
                .map(|m| pref * m)
                .collect())
        })?;
        Ok(Self {
            outer,
            inner,
            step,
            upper,
            lower,
        })
    }

    /// `#{ν⁺ > threshold}`.
    pub fn upper_above(&self, threshold: f64) -> usize {
        self.upper.iter().filter(|p| p.1 > threshold).count()
    }

    /// `#{ν⁻ > threshold}`.
    pub fn lower_above(&self, threshold: f64) -> usize {
        self.lower.iter().filter(|p| p.1 > threshold).count()
    }

    /// Majorant of `n_*(√(2√λ); G₂)`: `#{C₊ ν⁺ > 2√λ}`.
    pub fn count_upper(&self, lambda: f64) -> usize {
        self.upper_above(2.0 * lambda.sqrt() / self.outer.amplitude)
    }

    /// Minorant of `n_*(√(2√λ); G₂)`: `#{C₋ ν⁻ > 2√λ}`.
    pub fn count_lower(&self, lambda: f64) -> usize {
        self.lower_above(2.0 * lambda.sqrt() / self.inner.amplitude)
    }

    /// Limits of `#{ν > s√λ}/√|ln λ|` as λ ↓ 0: `(upper, lower)`.
    pub fn limits(&self, model: &EffectiveModel) -> (f64, f64) {
        let rate = gaussian_rate(model.b(), model.period());
        (rate * model.multiplicity() as f64, rate / self.step as f64)
    }

    /// `#{ν > s√λ}/√|ln λ|` for both tables.
    pub fn ratios(&self, lambda: f64, s: f64) -> (f64, f64) {
        let norm = lambda.ln().abs().sqrt();
        let t = s * lambda.sqrt();
        (self.upper_above(t) as f64 / norm, self.lower_above(t) as f64 / norm)
    }
}
