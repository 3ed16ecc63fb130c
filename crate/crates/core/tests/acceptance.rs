//! Acceptance criteria 1–9. Prints one PASS/FAIL line per criterion with the
//! measured quantities; criterion 10 lives with the CLI.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use magband::bands::{band_curvature, band_derivative, band_edges_and_gaps, eigenvector_velocity};
use magband::counting::{
    adaptive_g2, count_g2, count_m1, default_y_nodes, gaussian_fit, log_grid, BsOracle, EffectiveModel, NuBounds,
    OracleQuadrature, PerturbationV,
};
use magband::eigenfield::{decay_slope, periodic_grid, xi_range};
use magband::semiclassics::{constants, first_sign, kkp_drift, second_sign, verify_first_bound, verify_second_bound};
use magband::specutil::{check_chebyshev, check_kyfan, check_weyl};
use magband::{FiberSolver, FourierPotential};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn w04() -> FourierPotential {
    FourierPotential::cosine(1.0, 0.4).unwrap()
}

fn solver(w: FourierPotential, b: f64, n: usize) -> FiberSolver {
    FiberSolver::with_size(w, b, n).unwrap()
}

fn run(id: u32, name: &'static str, f: impl FnOnce() -> Result<(bool, String), String>) -> Outcome {
    let t = Instant::now();
    let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Outcome {
        id,
        name,
        pass,
        detail,
        elapsed: t.elapsed(),
    }
}

fn landau_levels() -> Result<(bool, String), String> {
    let t = Instant::now();
    let s = solver(FourierPotential::zero(1.0).unwrap(), 1.0, 64);
    let ks = periodic_grid(s.tau(), 512);
    let e = s.sweep(&ks, 5).map_err(|e| e.to_string())?;
    let mut dev = 0.0f64;
    for row in &e {
        for (j, v) in row.iter().enumerate() {
            dev = dev.max((v - (2 * j + 1) as f64).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((
        dev < 1e-8 && secs < 5.0,
        format!("max |E_j - (2j-1)| = {dev:.2e}, {secs:.2} s"),
    ))
}

fn periodicity_and_sandwich() -> Result<(bool, String), String> {
    let mut periodic = 0.0f64;
    let mut outside = 0.0f64;
    for (b, n) in [(0.5, 160), (1.0, 96), (2.0, 64)] {
        let s = solver(w04(), b, n);
        let ks = periodic_grid(s.tau(), 48);
        for &k in &ks {
            let e0 = s.energies(k, 6).map_err(|e| e.to_string())?;
            let e1 = s.energies(k + s.tau(), 6).map_err(|e| e.to_string())?;
            for j in 0..6 {
                periodic = periodic.max((e1[j] - e0[j]).abs());
                let level = b * (2 * j + 1) as f64;
                outside = outside.max(e0[j] - (level + 0.4)).max((level - 0.4) - e0[j]);
            }
        }
    }
    Ok((
        periodic < 1e-9 && outside <= 1e-10,
        format!("max |E(k+τ)-E(k)| = {periodic:.2e}, max excursion beyond b(2j-1)±0.4 = {outside:.2e}"),
    ))
}

fn derivative_fidelity() -> Result<(bool, String), String> {
    let h = 1e-4;
    let (mut d1, mut d2, mut velocity) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for b in [1.0, 2.0] {
        let w = w04();
        let s = solver(w.clone(), b, 96);
        let w1 = w.sup_norm(1).unwrap();
        let w2 = w.sup_norm(2).unwrap();
        for &k in &periodic_grid(s.tau(), 16) {
            for j in 1..=3 {
                let e = |k: f64| s.energies(k, j).map(|v| v[j - 1]).map_err(|e| e.to_string());
                let (em, e0, ep) = (e(k - h)?, e(k)?, e(k + h)?);
                let fd1 = (ep - em) / (2.0 * h);
                let fd2 = (ep - 2.0 * e0 + em) / (h * h);
                let fh = band_derivative(&s, j, k).map_err(|e| e.to_string())?;
                let curv = band_curvature(&s, j, k).map_err(|e| e.to_string())?;
                // Relative to the natural scales ‖W'‖/b and ‖W''‖/b².
                d1 = d1.max((fh - fd1).abs() / fh.abs().max(w1 / b));
                d2 = d2.max((curv.value - fd2).abs() / curv.value.abs().max(w2 / (b * b)));
                let solve = s.solve(k).map_err(|e| e.to_string())?;
                let p1 = s.basis().potential_matrix(&w, 1, k);
                let dpsi = eigenvector_velocity(&solve, &p1, b, j)
                    .map_err(|e| e.to_string())?
                    .norm();
                velocity = velocity.max(dpsi - w1 / (b * b));
            }
        }
    }
    Ok((
        d1 < 1e-5 && d2 < 1e-4 && velocity <= 0.0,
        format!("rel err E' = {d1:.2e}, rel err E'' = {d2:.2e}, max(‖∂ψ‖ - ‖W'‖/b²) = {velocity:.2e}"),
    ))
}

fn semiclassical_bounds() -> Result<(bool, String), String> {
    let w = w04();
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    let mut sign_failures = Vec::new();
    for j in [1, 2] {
        let c = constants(j, &w).map_err(|e| e.to_string())?;
        let b0 = c.b0(&w, 0.25).map_err(|e| e.to_string())?;
        for i in 0..10 {
            let b = b0 * 100f64.powf(i as f64 / 9.0);
            let s = solver(w.clone(), b, 48);
            let ks = periodic_grid(s.tau(), 64);
            let first = verify_first_bound(&s, &c, &ks).map_err(|e| e.to_string())?;
            let second = verify_second_bound(&s, &c, &ks).map_err(|e| e.to_string())?;
            worst = worst.max(first.max_residual).max(second.max_residual);
            for x0 in [-0.25, 0.25] {
                let p = first_sign(&s, &c, x0).map_err(|e| e.to_string())?;
                checked += 1;
                if p.holds == Some(false) {
                    sign_failures.push(format!("E' j={j} b={b:.3} x0={x0}"));
                }
            }
            // W'' vanishes at ±1/4; the curvature sign is probed where it does not.
            for x0 in [0.0, 0.5] {
                let p = second_sign(&s, &c, x0).map_err(|e| e.to_string())?;
                checked += 1;
                if p.holds == Some(false) {
                    sign_failures.push(format!("E'' j={j} b={b:.3} x0={x0}"));
                }
            }
        }
    }
    Ok((
        worst <= 1e-8 && sign_failures.is_empty(),
        format!("max residual = {worst:.2e}, sign checks {checked}, failures {sign_failures:?}"),
    ))
}

fn kkp() -> Result<(bool, String), String> {
    let w = w04();
    let b = 2.0;
    let s = solver(w.clone(), b, 96);
    let bands = band_edges_and_gaps(&s, 8, 256).map_err(|e| e.to_string())?;
    let drift: Vec<f64> = kkp_drift(&bands, b, &w)[1..].iter().map(|d| d.magnitude()).collect();
    let decreasing = drift.windows(2).all(|p| p[1] < p[0]);
    let last = *drift.last().unwrap();
    Ok((
        decreasing && last < 0.05,
        format!(
            "|drift| j=2..8 = [{}], decreasing {decreasing}",
            drift.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn gaussian_decay() -> Result<(bool, String), String> {
    let t = Instant::now();
    let xis = xi_range(4.0, 8.0, 0.25);
    let mut parts = Vec::new();
    let mut pass = true;
    for (amp, b, n, tol) in [(0.0, 1.0, 32, 0.05), (0.0, 2.0, 32, 0.05), (0.4, 1.0, 128, 0.10)] {
        let s = solver(FourierPotential::cosine(1.0, amp).unwrap(), b, n);
        let fit = decay_slope(&s, 1, 0.0, (-0.5, 0.5), &xis).map_err(|e| e.to_string())?;
        let rel = (fit.slope + b).abs() / b;
        pass &= rel < tol;
        parts.push(format!("W={amp} b={b}: slope {:.4} ({:.1}%)", fit.slope, 100.0 * rel));
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((pass && secs < 10.0, format!("{}, {secs:.2} s", parts.join("; "))))
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

fn counting_calculus() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let mut violations = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..12);
        let m1 = random_hermitian(&mut rng, n);
        let m2 = random_hermitian(&mut rng, n) * Complex64::new(rng.random_range(0.0..2.0), 0.0);
        let s = rng.random_range(0.05..2.0);
        let eps = rng.random_range(0.0..0.95) * s;
        if !check_weyl(s, eps, &m1, &m2) || !check_kyfan(s, eps, &m1, &m2) || !check_chebyshev(s, &m1) {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("200 random pairs, {violations} violations")))
}

fn accumulation_law() -> Result<(bool, String), String> {
    let t = Instant::now();
    let s = solver(w04(), 0.5, 256);
    let err = |e: magband::Error| e.to_string();
    if !w04().gap_condition(0.5).map_err(err)? {
        return Err("gap condition fails".into());
    }
    let model = EffectiveModel::from_band(&s, 1).map_err(err)?;
    if model.multiplicity() != 1 || model.points[0].mu <= 0.0 {
        return Err(format!(
            "A = {}, μ = {:?}",
            model.multiplicity(),
            model.points.iter().map(|p| p.mu).collect::<Vec<_>>()
        ));
    }
    let v = PerturbationV::rectangle([-0.5, 0.5], [0.0, 4.0 * PI], 1.0).map_err(err)?;
    let lambdas = log_grid(-6.0, -20.0, 2.0).map_err(err)?;
    let gram = adaptive_g2(&model, &v, &lambdas).map_err(err)?;
    let mut data = Vec::new();
    for &l in &lambdas {
        data.push((l, count_g2(l, &gram).map_err(err)?));
    }
    let fit = gaussian_fit(&data).map_err(err)?;
    let nu = NuBounds::new(&model, &v, 1e-20).map_err(err)?;
    let (upper_limit, lower_limit) = nu.limits(&model);
    let (upper_ratio, lower_ratio) = nu.ratios(1e-20, 2.0);
    let up_err = (upper_ratio / upper_limit - 1.0).abs();
    let lo_err = (lower_ratio / lower_limit - 1.0).abs();
    let secs = t.elapsed().as_secs_f64();
    let slope_ok = (1.6..=2.4).contains(&fit.slope);
    Ok((
        slope_ok && up_err <= 0.15 && lo_err <= 0.15 && secs < 120.0,
        format!(
            "counts {:?}, slope {:.3} (in [1.6, 2.4]: {slope_ok}); ν ratios at 1e-20 {upper_ratio:.3}/{lower_ratio:.3} vs limits {upper_limit:.3}/{lower_limit:.3} (off {:.0}%/{:.0}%); {secs:.1} s",
            data.iter().map(|d| d.1).collect::<Vec<_>>(),
            fit.slope,
            100.0 * up_err,
            100.0 * lo_err
        ),
    ))
}

fn cross_consistency() -> Result<(bool, String), String> {
    let err = |e: magband::Error| e.to_string();
    let s = solver(w04(), 2.0, 64);
    let v = PerturbationV::rectangle([-0.5, 0.5], [0.0, PI], 1.0).map_err(err)?;
    let lambdas: Vec<f64> = (0..8).map(|i| 10f64.powf(-2.0 - 2.0 * i as f64 / 7.0)).collect();
    let oracle = BsOracle::new(&s, 1, &v, (1e-4, 1e-2), OracleQuadrature::default()).map_err(err)?;
    let model = EffectiveModel::from_band(&s, 1).map_err(err)?;
    let gram = adaptive_g2(&model, &v, &lambdas).map_err(err)?;
    let nu = NuBounds::new(&model, &v, 1e-4).map_err(err)?;
    let ny = default_y_nodes(&model, &v, gram.window);
    let (mut d_oracle, mut d_m1, mut sandwiched) = (0usize, 0usize, true);
    let mut rows = Vec::new();
    for &l in &lambdas {
        let g2 = count_g2(l, &gram).map_err(err)?;
        let o = oracle.count(oracle.gap.0 + l).map_err(err)?.count;
        let m1 = count_m1(&model, &v, l, gram.window, ny).map_err(err)?.count;
        let (lo, hi) = (nu.count_lower(l), nu.count_upper(l));
        d_oracle = d_oracle.max(o.abs_diff(g2));
        d_m1 = d_m1.max(m1.abs_diff(g2));
        sandwiched &= lo <= g2 && g2 <= hi;
        rows.push(format!("{o}/{g2}/{m1}/{lo}-{hi}"));
    }
    Ok((
        d_oracle <= 3 && d_m1 <= 3 && sandwiched,
        format!(
            "oracle/G2/M1/ν per λ [{}]; max|oracle-G2| = {d_oracle}, max|M1-G2| = {d_m1}, sandwich {sandwiched}",
            rows.join(" ")
        ),
    ))
}

fn main() {
    let outcomes = [
        run(1, "Landau levels", landau_levels),
        run(2, "periodicity and sandwich", periodicity_and_sandwich),
        run(3, "derivative fidelity", derivative_fidelity),
        run(4, "semiclassical bounds", semiclassical_bounds),
        run(5, "edge drift", kkp),
        run(6, "Gaussian decay", gaussian_decay),
        run(7, "counting calculus", counting_calculus),
        run(8, "Gaussian accumulation law", accumulation_law),
        run(9, "O(1) cross-consistency", cross_consistency),
    ];
    for o in &outcomes {
        println!(
            "{} [{}] {}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail,
            o.elapsed.as_secs_f64()
        );
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", outcomes.len());
}
