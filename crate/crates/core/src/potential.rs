//! Periodic edge potentials as finite trigonometric series.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `W(x) = a0 + Σ_n a_n cos(2πnx/T) + b_n sin(2πnx/T)`.
///
/// `cos[0]` is the mean `a0`; `sin[n-1]` multiplies `sin(2πnx/T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierPotential {
    period: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl FourierPotential {
    pub fn new(period: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidInput(format!(
                "period must be positive and finite, got {period}"
            )));
        }
        if cos.iter().chain(&sin).any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("Fourier coefficients must be finite".into()));
        }
        Ok(Self { period, cos, sin })
    }

    /// The zero potential with the given period.
    pub fn zero(period: f64) -> Result<Self> {
        Self::new(period, vec![], vec![])
    }

    /// `amplitude * cos(2πx/T)`.
    pub fn cosine(period: f64, amplitude: f64) -> Result<Self> {
        Self::new(period, vec![0.0, amplitude], vec![])
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn cos_coeffs(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin_coeffs(&self) -> &[f64] {
        &self.sin
    }

    fn harmonics(&self) -> usize {
        self.cos.len().saturating_sub(1).max(self.sin.len())
    }

    /// `true` when every non-constant coefficient vanishes.
    pub fn is_constant(&self) -> bool {
        self.cos.iter().skip(1).chain(&self.sin).all(|c| *c == 0.0)
    }

    /// d^order W / dx^order at `x`, for `order <= 3`.
    pub fn eval(&self, x: f64, order: usize) -> Result<f64> {
        if order > 3 {
            return Err(Error::DerivativeOrder(order));
        }
        Ok(self.eval_unchecked(x, order))
    }

    pub(crate) fn eval_unchecked(&self, x: f64, order: usize) -> f64 {
        let mut acc = if order == 0 {
            self.cos.first().copied().unwrap_or(0.0)
        } else {
            0.0
        };
        let omega = 2.0 * PI / self.period;
        for n in 1..=self.harmonics() {
            let a = self.cos.get(n).copied().unwrap_or(0.0);
            let b = self.sin.get(n - 1).copied().unwrap_or(0.0);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let w = omega * n as f64;
            let (s, c) = (w * x).sin_cos();
            // d/dx rotates (cos, sin) -> (-sin, cos) and scales by w
            let (dc, ds) = match order % 4 {
                0 => (c, s),
                1 => (-s, c),
                2 => (-c, -s),
                _ => (s, -c),
            };
            acc += w.powi(order as i32) * (a * dc + b * ds);
        }
        acc
    }

    /// Mean over one period.
    pub fn mean(&self) -> f64 {
        self.cos.first().copied().unwrap_or(0.0)
    }

    /// `sup |W^{(order)}|`, from a 2^14-point grid refined by golden-section
    /// search around the best grid point.
    pub fn sup_norm(&self, order: usize) -> Result<f64> {
        if order > 3 {
            return Err(Error::DerivativeOrder(order));
        }
        let n = 1usize << 14;
        let h = self.period / n as f64;
        let f = |x: f64| self.eval_unchecked(x, order).abs();
        let (mut best_i, mut best) = (0usize, f(0.0));
        for i in 1..n {
            let v = f(i as f64 * h);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        let x = best_i as f64 * h;
        let (_, polished) = golden_max(f, x - h, x + h, 1e-14 * self.period);
        Ok(best.max(polished))
    }

    /// Global extrema of W located by dense sampling and root polishing of W'.
    pub fn range_and_extrema(&self, grid_size: usize) -> Result<PotentialExtrema> {
        if grid_size < 64 {
            return Err(Error::InvalidInput(format!("grid_size must be >= 64, got {grid_size}")));
        }
        if self.is_constant() {
            let c = self.mean();
            return Ok(PotentialExtrema {
                min_value: c,
                max_value: c,
                minima: vec![],
                maxima: vec![],
                constant: true,
            });
        }
        let t = self.period;
        let h = t / grid_size as f64;
        let d1 = |x: f64| self.eval_unchecked(x, 1);
        let d2_scale = self.sup_norm(2)?;
        let deg_tol = 1e-8 * d2_scale;
        let d1_scale = self.sup_norm(1)?;

        let mut critical = Vec::new();
        for i in 0..grid_size {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            let (fa, fb) = (d1(a), d1(b));
            if fa == 0.0 {
                critical.push(a);
            } else if fa * fb < 0.0 {
                critical.push(polish_root(&d1, |x| self.eval_unchecked(x, 2), a, b));
            }
        }
        // Degenerate critical points (W' touching zero without a sign change)
        // show up as local minima of |W'| on the grid.
        for i in 0..grid_size {
            let x = i as f64 * h;
            let (l, c, r) = (d1(x - h).abs(), d1(x).abs(), d1(x + h).abs());
            if c <= l && c <= r && c < 1e-6 * d1_scale {
                let (xm, _) = golden_max(|y| -d1(y).abs(), x - h, x + h, 1e-15 * t);
                if d1(xm).abs() < 1e-10 * d1_scale {
                    critical.push(xm);
                }
            }
        }
        for x in critical.iter_mut() {
            *x = x.rem_euclid(t);
        }
        critical.sort_by(|a, b| a.partial_cmp(b).unwrap());
        critical.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * t || (t - (*a - *b).abs()) < 1e-9 * t);

        let values: Vec<f64> = critical.iter().map(|&x| self.eval_unchecked(x, 0)).collect();
        let max_value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
        let tie = 1e-12 * (max_value - min_value).abs().max(1e-300);

        let point = |x: f64| {
            let d2 = self.eval_unchecked(x, 2);
            CriticalPoint {
                x,
                second_derivative: d2,
                degenerate: d2.abs() <= deg_tol,
            }
        };
        let maxima = critical
            .iter()
            .zip(&values)
            .filter(|(_, v)| **v >= max_value - tie)
            .map(|(x, _)| point(*x))
            .collect();
        let minima = critical
            .iter()
            .zip(&values)
            .filter(|(_, v)| **v <= min_value + tie)
            .map(|(x, _)| point(*x))
            .collect();
        Ok(PotentialExtrema {
            min_value,
            max_value,
            minima,
            maxima,
            constant: false,
        })
    }

    /// Sufficient condition `W+ - W- < 2b` for all gaps to be open.
    pub fn gap_condition(&self, b: f64) -> Result<bool> {
        if !(b > 0.0) {
            return Err(Error::InvalidInput(format!("field b must be positive, got {b}")));
        }
        let ext = self.range_and_extrema(1024)?;
        Ok(ext.max_value - ext.min_value < 2.0 * b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub x: f64,
    pub second_derivative: f64,
    /// `|W''| <= 1e-8 max|W''|`.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialExtrema {
    pub min_value: f64,
    pub max_value: f64,
    pub minima: Vec<CriticalPoint>,
    pub maxima: Vec<CriticalPoint>,
    /// No isolated extrema: W' vanishes identically.
    pub constant: bool,
}

/// Bracketed Newton with bisection fallback for a simple root of `f` in [a, b].
pub(crate) fn polish_root(f: &impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == (fa < 0.0) {
            a = x;
            fa = fx;
        } else {
            b = x;
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d != 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (b - a).abs() < 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// Golden-section maximization of a unimodal `f` on [a, b]; returns (x*, f(x*)).
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
