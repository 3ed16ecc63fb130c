use serde::Serialize;

use crate::error::{Error, Result};

pub const MIN_FIT_POINTS: usize = 4;
pub const MIN_FIT_DECADES: f64 = 6.0;

/// Least-squares line `N ≈ slope·√|ln λ| + intercept`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GaussianFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in counts.
    pub residual: f64,
    /// Standard error of the slope.
    pub slope_error: f64,
    pub points: usize,
    pub decades: f64,
}

/// `λ = 10^e` for `e = start, start - step, …` down to `stop`.
pub fn log_grid(start_exp: f64, stop_exp: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(start_exp >= stop_exp) {
        return Err(Error::InvalidInput(format!(
            "λ grid needs step > 0 and start ≥ stop (got {start_exp}, {stop_exp}, {step})"
        )));
    }
    let n = ((start_exp - stop_exp) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| 10f64.powf(start_exp - i as f64 * step)).collect())
}

pub fn gaussian_fit(data: &[(f64, usize)]) -> Result<GaussianFit> {
    let usable: Vec<(f64, f64)> = data
        .iter()
        .filter(|(l, _)| *l > 0.0 && *l < 1.0)
        .map(|&(l, n)| (l.ln().abs().sqrt(), n as f64))
        .collect();
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} usable λ points, need {MIN_FIT_POINTS}",
            usable.len()
        )));
    }
    let lmax = data
        .iter()
        .map(|p| p.0)
        .filter(|l| *l > 0.0 && *l < 1.0)
        .fold(f64::MIN, f64::max);
    let lmin = data.iter().map(|p| p.0).filter(|l| *l > 0.0).fold(f64::MAX, f64::min);
    let decades = (lmax / lmin).log10();
    if decades < MIN_FIT_DECADES - 1e-9 {
        return Err(Error::InsufficientData(format!(
            "λ grid spans {decades:.2} decades, need {MIN_FIT_DECADES}"
        )));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = usable.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let slope_error = if usable.len() > 2 {
        (ss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(GaussianFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
        slope_error,
        points: usable.len(),
        decades,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_floor_law() {
        let grid = log_grid(-6.0, -60.0, 2.0).unwrap();
        let data: Vec<(f64, usize)> = grid
            .iter()
            .map(|&l| (l, (2.0 * l.ln().abs().sqrt()).floor() as usize))
            .collect();
        let fit = gaussian_fit(&data).unwrap();
        assert!((fit.slope - 2.0).abs() < 0.1, "{}", fit.slope);
    }

    #[test]
    fn exact_line() {
        let data: Vec<(f64, usize)> = log_grid(-2.0, -30.0, 1.0)
            .unwrap()
            .into_iter()
            .map(|l| (l, 0))
            .collect();
        let fit = gaussian_fit(&data).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.residual, 0.0);
    }

    #[test]
    fn grid_shape() {
        let g = log_grid(-6.0, -20.0, 2.0).unwrap();
        assert_eq!(g.len(), 8);
        assert!((g[7] / 1e-20 - 1.0).abs() < 1e-12);
        assert!(log_grid(-6.0, -2.0, 1.0).is_err());
    }

    #[test]
    fn refuses_thin_data() {
        let few = [(1e-2, 1), (1e-4, 2), (1e-8, 3)];
        assert!(matches!(gaussian_fit(&few), Err(Error::InsufficientData(_))));
        let narrow: Vec<(f64, usize)> = log_grid(-2.0, -5.0, 0.5).unwrap().into_iter().map(|l| (l, 1)).collect();
        assert!(matches!(gaussian_fit(&narrow), Err(Error::InsufficientData(_))));
    }
}
