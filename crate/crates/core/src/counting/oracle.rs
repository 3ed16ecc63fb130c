use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::perturbation::PerturbationV;
use crate::bands::{band_edges_and_gaps, DEFAULT_EXTREMUM_GRID};
use crate::error::{Error, Result};
use crate::fiber::FiberSolver;
use crate::quadrature::gauss_legendre_on;
use crate::specutil::hermitian_eigenvalues;

/// Omitted bands must start this many gap widths above `E`.
pub const BAND_TAIL_FACTOR: f64 = 10.0;

/// Largest tolerated estimate of the truncated part of `V^{1/2}(H₀-E)^{-1}V^{1/2}`.
pub const TAIL_LIMIT: f64 = 0.5;

/// Nodes of the Birman–Schwinger discretization.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleQuadrature {
    /// Gauss–Legendre nodes per rectangle in `x`.
    pub x_nodes: usize,
    /// Gauss–Legendre nodes per rectangle in `y`.
    pub y_nodes: usize,
    /// Periodic trapezoid nodes on `[0, τ)` for bands other than the gap band.
    pub kappa_nodes: usize,
    /// `n·Im θ` for the gap band, `θ` the nearest complex pole of
    /// `1/(E_j(κ) - E)` in the angle variable `2πκ/τ`.
    pub pole_exponent: f64,
    /// `ψ²` cutoff defining the lattice range of every band.
    pub tail: f64,
}

impl Default for OracleQuadrature {
    fn default() -> Self {
        Self {
            x_nodes: 20,
            y_nodes: 32,
            kappa_nodes: 32,
            pole_exponent: 36.0,
            tail: 1e-12,
        }
    }
}

impl OracleQuadrature {
    pub fn refined(&self) -> Self {
        Self {
            x_nodes: self.x_nodes * 3 / 2,
            y_nodes: self.y_nodes * 3 / 2,
            kappa_nodes: self.kappa_nodes * 2,
            pole_exponent: self.pole_exponent * 1.5,
            tail: self.tail * 1e-3,
        }
    }
}

/// Discretized `V^{1/2}(H₀ - E)^{-1} V^{1/2} = U D(E) U^*` for `E` in one gap.
///
/// Rows are `(x, y)` quadrature nodes on each rectangle, columns are
/// `(band, κ, l)` with entries `√(C w) ψ_{j'}(x - l𝒯; κ) e^{i(κ + lτ) y}`
/// and `D = w_κ / (2π (E_{j'}(κ) - E))`.
#[derive(Debug, Clone)]
pub struct BsOracle {
    pub j: usize,
    /// `(ℰ_j^+, ℰ_{j+1}^-)`.
    pub gap: (f64, f64),
    pub j_max: usize,
    /// Nodes used for band `j`.
    pub gap_kappa_nodes: usize,
    /// Bound on the omitted bands and lattice sites.
    pub tail_estimate: f64,
    /// Range of `E - ℰ_j^+` the quadrature was sized for.
    pub lambda_range: (f64, f64),
    re: DMatrix<f64>,
    im: DMatrix<f64>,
    energy: Vec<f64>,
    weight: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleCount {
    pub energy: f64,
    pub count: usize,
    pub dimension: usize,
}

/// Lattice sites whose `ψ_{j'}(· - l𝒯; κ)` reaches `interval` above `√tail`.
fn lattice_range(solver: &FiberSolver, band: usize, interval: [f64; 2], tail: f64, kappa: f64) -> (i64, i64) {
    let b = solver.b();
    let turning = ((2 * band - 1) as f64 / b).sqrt();
    let reach = turning + (tail.recip().ln() / b).sqrt();
    let t = solver.potential().period();
    let shift = kappa / b;
    (
        ((interval[0] - reach - shift) / t).floor() as i64,
        ((interval[1] + reach - shift) / t).ceil() as i64,
    )
}

impl BsOracle {
    /// Builds `U` for energies `E ∈ ℰ_j^+ + [λ_min, λ_max]`.
    pub fn new(
        solver: &FiberSolver,
        j: usize,
        v: &PerturbationV,
        lambda_range: (f64, f64),
        quad: OracleQuadrature,
    ) -> Result<Self> {
        let (lambda_min, lambda_max) = lambda_range;
        if !(lambda_min > 0.0 && lambda_max >= lambda_min) {
            return Err(Error::InvalidInput(format!("invalid λ range {lambda_range:?}")));
        }
        let bands = band_edges_and_gaps(solver, j, DEFAULT_EXTREMUM_GRID)?;
        let gap = bands[j - 1]
            .gap_above
            .ok_or_else(|| Error::Precondition(format!("no open gap above band {j}")))?;
        let width = gap.1 - gap.0;
        let b = solver.b();
        let tau = solver.tau();
        let w_min = solver.potential().range_and_extrema(256)?.min_value;
        if !(lambda_max < width - 1e-8) {
            return Err(Error::Precondition(format!(
                "λ_max = {lambda_max:e} reaches the top of the gap (width {width:e})"
            )));
        }
        let e_lo = gap.0 + lambda_min;
        let e_hi = gap.0 + lambda_max;
        let mut j_max = j + 1;
        while b * (2 * j_max + 1) as f64 + w_min - e_hi <= BAND_TAIL_FACTOR * width {
            j_max += 1;
        }
        if j_max + 1 > solver.max_band() {
            return Err(Error::Precondition(format!(
                "oracle needs bands up to {} but the basis trusts {}",
                j_max + 1,
                solver.max_band()
            )));
        }

        let extrema = bands[j - 1].extrema.as_ref().ok_or(Error::ConstantBand(j))?;
        let mu = extrema.maxima.iter().map(|p| p.mu).fold(f64::INFINITY, f64::min);
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::Precondition(format!("band {j} has no non-degenerate maximum")));
        }
        let a = tau / (2.0 * PI);
        let im_theta = (1.0 + lambda_min / (2.0 * mu * a * a)).acosh();
        let gap_kappa_nodes = ((quad.pole_exponent / im_theta).ceil() as usize).clamp(quad.kappa_nodes, 1 << 14);

        // rows are (rectangle, x node, y node); ψ depends on x only
        let mut xs = Vec::new();
        let mut rows_x = Vec::new();
        let mut rows_y = Vec::new();
        let mut rows_w = Vec::new();
        for rect in v.rectangles() {
            let (xn, xw) = gauss_legendre_on(quad.x_nodes, rect.x[0], rect.x[1]);
            let (yn, yw) = gauss_legendre_on(quad.y_nodes, rect.y[0], rect.y[1]);
            for (x, wx) in xn.iter().zip(&xw) {
                for (y, wy) in yn.iter().zip(&yw) {
                    rows_x.push(xs.len());
                    rows_y.push(*y);
                    rows_w.push((rect.amplitude * wx * wy).sqrt());
                }
                xs.push(*x);
            }
        }
        let nrows = rows_x.len();

        let mut cols_re: Vec<Vec<f64>> = Vec::new();
        let mut cols_im: Vec<Vec<f64>> = Vec::new();
        let mut energy = Vec::new();
        let mut weight = Vec::new();
        let mut tail_estimate = 0.0;
        let area: f64 = v
            .rectangles()
            .iter()
            .map(|r| r.amplitude * r.width() * r.height())
            .sum();

        let grids: Vec<(usize, Vec<usize>)> = {
            let others: Vec<usize> = (1..=j_max).filter(|&q| q != j).collect();
            vec![(gap_kappa_nodes, vec![j]), (quad.kappa_nodes, others)]
        };
        for (n, band_list) in grids {
            if band_list.is_empty() {
                continue;
            }
            let wk = tau / n as f64;
            for i in 0..n {
                let kappa = i as f64 * wk;
                let solve = solver.solve(kappa)?;
                for &band in &band_list {
                    let e = solve.energy(band);
                    let coeffs = solve.vector(band);
                    let mut sites = Vec::new();
                    for rect in v.rectangles() {
                        let (lo, hi) = lattice_range(solver, band, rect.x, quad.tail, kappa);
                        sites.extend(lo..=hi);
                    }
                    sites.sort_unstable();
                    sites.dedup();
                    let (lo, hi) = (sites[0], sites[sites.len() - 1]);
                    // first omitted sites on either side
                    let t = solver.potential().period();
                    let shifted = |ls: &[i64]| -> DMatrix<f64> {
                        let pts: Vec<f64> = ls
                            .iter()
                            .flat_map(|&l| xs.iter().map(move |x| x - l as f64 * t - kappa / b))
                            .collect();
                        solver.basis().eval_many(&[&coeffs], &pts)
                    };
                    let outside = shifted(&[lo - 1, hi + 1]);
                    let nx = xs.len();
                    let edge: f64 = (0..2)
                        .map(|c| (0..nx).map(|i| outside[(c * nx + i, 0)].powi(2)).fold(0.0, f64::max))
                        .sum();
                    let dist = if e > e_hi { e - e_hi } else { e_lo - e };
                    tail_estimate += 2.0 * edge * area * wk / (2.0 * PI * dist);

                    let vals = shifted(&sites);
                    for (s, &l) in sites.iter().enumerate() {
                        let freq = kappa + l as f64 * tau;
                        let mut re = vec![0.0; nrows];
                        let mut im = vec![0.0; nrows];
                        for row in 0..nrows {
                            let amp = rows_w[row] * vals[(s * nx + rows_x[row], 0)];
                            let (sn, cs) = (freq * rows_y[row]).sin_cos();
                            re[row] = amp * cs;
                            im[row] = amp * sn;
                        }
                        cols_re.push(re);
                        cols_im.push(im);
                        energy.push(e);
                        weight.push(wk / (2.0 * PI));
                    }
                }
            }
        }
        tail_estimate += area
            .max(0.0)
            .min(v.rectangles().iter().map(|r| r.amplitude).fold(0.0, f64::max))
            / (b * (2 * j_max + 1) as f64 + w_min - e_hi);
        if tail_estimate > TAIL_LIMIT {
            return Err(Error::Truncation(format!(
                "oracle tail estimate {tail_estimate:.3e} exceeds {TAIL_LIMIT}"
            )));
        }
        let ncols = cols_re.len();
        let re = DMatrix::from_fn(nrows, ncols, |r, c| cols_re[c][r]);
        let im = DMatrix::from_fn(nrows, ncols, |r, c| cols_im[c][r]);
        log::debug!("oracle: {nrows} rows, {ncols} columns, J_max = {j_max}, gap κ nodes = {gap_kappa_nodes}");
        Ok(Self {
            j,
            gap,
            j_max,
            gap_kappa_nodes,
            tail_estimate,
            lambda_range,
            re,
            im,
            energy,
            weight,
        })
    }

    pub fn dimension(&self) -> usize {
        self.re.nrows()
    }

    /// Hermitian matrix `U D(E) U^*`.
    pub fn matrix(&self, e: f64) -> Result<DMatrix<Complex64>> {
        let (lo, hi) = self.gap;
        if !(e - lo > 1e-8 && hi - e > 1e-8) {
            return Err(Error::Precondition(format!(
                "E = {e} is not inside the gap ({lo}, {hi}) by more than 1e-8"
            )));
        }
        let (lmin, lmax) = self.lambda_range;
        if e - lo < lmin * (1.0 - 1e-12) || e - lo > lmax * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "E - ℰ⁺ = {:e} is outside the resolved range [{lmin:e}, {lmax:e}]",
                e - lo
            )));
        }
        let d: Vec<f64> = self
            .energy
            .iter()
            .zip(&self.weight)
            .map(|(en, w)| w / (en - e))
            .collect();
        let mut re_d = self.re.clone();
        let mut im_d = self.im.clone();
        for (c, &dc) in d.iter().enumerate() {
            re_d.column_mut(c).scale_mut(dc);
            im_d.column_mut(c).scale_mut(dc);
        }
        let real = &re_d * self.re.transpose() + &im_d * self.im.transpose();
        let imag = &im_d * self.re.transpose() - &re_d * self.im.transpose();
        Ok(DMatrix::from_fn(real.nrows(), real.ncols(), |r, c| {
            Complex64::new(real[(r, c)], imag[(r, c)])
        }))
    }

    /// `n₋(1; V^{1/2}(H₀ - E)^{-1}V^{1/2})`.
    pub fn count(&self, e: f64) -> Result<OracleCount> {
        let m = self.matrix(e)?;
        let count = hermitian_eigenvalues(&m).into_iter().filter(|&x| x < -1.0).count();
        Ok(OracleCount {
            energy: e,
            count,
            dimension: m.nrows(),
        })
    }
}

/// One-shot `bs_oracle(ℰ_j^+ + λ)`.
pub fn bs_oracle(
    solver: &FiberSolver,
    j: usize,
    v: &PerturbationV,
    lambda: f64,
    quad: OracleQuadrature,
) -> Result<usize> {
    if v.is_zero() {
        return Ok(0);
    }
    let oracle = BsOracle::new(solver, j, v, (lambda, lambda), quad)?;
    Ok(oracle.count(oracle.gap.0 + lambda)?.count)
}
