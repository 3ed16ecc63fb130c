use serde::Serialize;

use super::fit::{gaussian_fit, GaussianFit};
use super::gram::{adaptive_g2, count_g2, gram_g2};
use super::model::EffectiveModel;
use super::nu::{capacity, gaussian_rate, NuBounds};
use super::nystrom::{count_m1, default_y_nodes};
use super::oracle::{BsOracle, OracleQuadrature};
use super::perturbation::PerturbationV;
use crate::error::{Error, Result};
use crate::fiber::FiberSolver;

pub const DEFAULT_K_O1: usize = 3;

#[derive(Debug, Clone, Serialize)]
pub struct CountingOptions {
    pub lambdas: Vec<f64>,
    /// Evaluate `n₊(1; M₁(λ))` at every λ.
    pub m1: bool,
    /// Evaluate the Birman–Schwinger oracle at every λ.
    pub oracle: Option<OracleQuadrature>,
    pub k_o1: usize,
    /// Fixed lattice window; `None` grows it adaptively.
    pub window: Option<(i64, i64)>,
}

impl CountingOptions {
    pub fn new(lambdas: Vec<f64>) -> Self {
        Self {
            lambdas,
            m1: false,
            oracle: None,
            k_o1: DEFAULT_K_O1,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CountRow {
    pub lambda: f64,
    pub g2: usize,
    pub m1: Option<usize>,
    pub nu_lower: usize,
    pub nu_upper: usize,
    pub oracle: Option<usize>,
}

impl CountRow {
    pub fn sandwiched(&self) -> bool {
        self.nu_lower <= self.g2 && self.g2 <= self.nu_upper
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CountingReport {
    pub j: usize,
    pub b: f64,
    pub period: f64,
    /// `A_j^+`.
    pub multiplicity: usize,
    pub edge: f64,
    pub mu: Vec<f64>,
    /// `𝒞(Ω)`.
    pub capacity: f64,
    /// `(√2/(√b𝒯)) 𝒞(Ω)` and `(√2/(√b𝒯)) A_j^+`.
    pub sandwich: (f64, f64),
    pub window: (i64, i64),
    pub noise_floor: f64,
    pub scaled_condition: f64,
    pub rows: Vec<CountRow>,
    pub fit: Option<GaussianFit>,
    /// Why no fit was produced.
    pub fit_note: Option<String>,
    /// Limits of the ν-count ratios, `(upper, lower)`.
    pub nu_limits: (f64, f64),
    pub k_o1: usize,
}

impl CountingReport {
    pub fn max_oracle_deviation(&self) -> Option<usize> {
        self.rows
            .iter()
            .filter_map(|r| r.oracle.map(|o| o.abs_diff(r.g2)))
            .max()
    }

    pub fn max_m1_deviation(&self) -> Option<usize> {
        self.rows.iter().filter_map(|r| r.m1.map(|m| m.abs_diff(r.g2))).max()
    }

    pub fn all_sandwiched(&self) -> bool {
        self.rows.iter().all(CountRow::sandwiched)
    }
}

/// Runs every requested counting method over the λ grid for gap `j`.
pub fn run_counting(
    solver: &FiberSolver,
    j: usize,
    v: &PerturbationV,
    opts: &CountingOptions,
) -> Result<CountingReport> {
    if opts.lambdas.is_empty() || opts.lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidInput("λ grid must be non-empty and positive".into()));
    }
    let model = EffectiveModel::from_band(solver, j)?;
    let lambda_min = opts.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda_max = opts.lambdas.iter().copied().fold(0.0, f64::max);
    let gram = match opts.window {
        Some(w) if w.0 <= w.1 => gram_g2(&model, v, w)?,
        Some(w) => return Err(Error::InvalidInput(format!("empty lattice window {w:?}"))),
        None => adaptive_g2(&model, v, &opts.lambdas)?,
    };
    let nu = NuBounds::new(&model, v, lambda_min)?;
    let cap = capacity(v, model.tau())?;
    let rate = gaussian_rate(model.b(), model.period());
    let oracle = match opts.oracle {
        Some(q) => Some(BsOracle::new(solver, j, v, (lambda_min, lambda_max), q)?),
        None => None,
    };
    let ny = default_y_nodes(&model, v, gram.window);

    let mut rows = Vec::with_capacity(opts.lambdas.len());
    for &lambda in &opts.lambdas {
        let g2 = count_g2(lambda, &gram)?;
        let m1 = if opts.m1 {
            Some(count_m1(&model, v, lambda, gram.window, ny)?.count)
        } else {
            None
        };
        let oracle_count = match &oracle {
            Some(o) => Some(o.count(o.gap.0 + lambda)?.count),
            None => None,
        };
        rows.push(CountRow {
            lambda,
            g2,
            m1,
            nu_lower: nu.count_lower(lambda),
            nu_upper: nu.count_upper(lambda),
            oracle: oracle_count,
        });
    }
    let data: Vec<(f64, usize)> = rows.iter().map(|r| (r.lambda, r.g2)).collect();
    let (fit, fit_note) = match gaussian_fit(&data) {
        Ok(f) => (Some(f), None),
        Err(Error::InsufficientData(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    Ok(CountingReport {
        j,
        b: model.b(),
        period: model.period(),
        multiplicity: model.multiplicity(),
        edge: model.edge,
        mu: model.points.iter().map(|p| p.mu).collect(),
        capacity: cap,
        sandwich: (rate * cap, rate * model.multiplicity() as f64),
        window: gram.window,
        noise_floor: gram.noise_floor(),
        scaled_condition: gram.scaled_condition,
        rows,
        fit,
        fit_note,
        nu_limits: nu.limits(&model),
        k_o1: opts.k_o1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::fit::log_grid;
    use crate::potential::FourierPotential;

    #[test]
    fn short_sweep_without_fit() {
        let s = FiberSolver::with_size(FourierPotential::cosine(1.0, 0.4).unwrap(), 2.0, 48).unwrap();
        let v = PerturbationV::rectangle([-0.5, 0.5], [0.0, 1.0], 1.0).unwrap();
        let mut opts = CountingOptions::new(vec![1e-2, 1e-3]);
        opts.m1 = true;
        let r = run_counting(&s, 1, &v, &opts).unwrap();
        assert!(r.fit.is_none() && r.fit_note.is_some());
        assert_eq!(r.multiplicity, 1);
        assert!(r.rows.iter().all(|row| row.m1.is_some() && row.oracle.is_none()));
        assert!(r.all_sandwiched());
    }

    #[test]
    fn long_sweep_fits() {
        let s = FiberSolver::with_size(FourierPotential::cosine(1.0, 0.4).unwrap(), 2.0, 48).unwrap();
        let v = PerturbationV::rectangle([-0.5, 0.5], [0.0, 1.0], 1.0).unwrap();
        let r = run_counting(&s, 1, &v, &CountingOptions::new(log_grid(-4.0, -16.0, 2.0).unwrap())).unwrap();
        let fit = r.fit.unwrap();
        assert!(fit.slope > 0.0);
        assert!((r.sandwich.1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grid() {
        let s = FiberSolver::with_size(FourierPotential::cosine(1.0, 0.4).unwrap(), 2.0, 48).unwrap();
        let v = PerturbationV::rectangle([-0.5, 0.5], [0.0, 1.0], 1.0).unwrap();
        assert!(run_counting(&s, 1, &v, &CountingOptions::new(vec![])).is_err());
        assert!(run_counting(&s, 1, &v, &CountingOptions::new(vec![-1.0])).is_err());
    }
}
