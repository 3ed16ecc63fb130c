//! Subcommand implementations. Each writes its artifacts into the output
//! directory and returns the paths written.

use std::path::{Path, PathBuf};

use magband::bands::{band_edges_and_gaps, BandAnalysis};
use magband::counting::{
    capacity, gaussian_rate, run_counting, BsOracle, CountingOptions, CountingReport, OracleCount, OracleQuadrature,
};
use magband::eigenfield::{decay_slope, periodic_grid, xi_range};
use magband::fiber::converge;
use magband::semiclassics::{
    constants, first_sign, kkp_drift, second_sign, verify_first_bound, verify_second_bound, BoundCheck, KkpDrift,
    SemiclassicalConstants, SignPrediction, ANALOGY_NOTE,
};
use magband::{Error, FiberSolver, HermiteBasis};
use serde::Serialize;

use crate::cache::{BandCache, CacheKey};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{fmt_f64, fmt_opt, write_csv, write_json};

/// Probe points for the basis-size search.
const CONVERGENCE_PROBES: usize = 8;
const MAX_BASIS_SIZE: usize = 512;

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub cache: BandCache,
    pub seed: u64,
}

#[derive(Serialize)]
struct Meta<'a> {
    subcommand: &'a str,
    seed: u64,
    basis_size: usize,
    quad_order: usize,
}

impl Context {
    pub fn new(config: RunConfig, out: PathBuf, use_cache: bool, seed: u64) -> Self {
        let cache = BandCache::new(&out, use_cache);
        Self {
            config,
            out,
            cache,
            seed,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn meta<'a>(&self, subcommand: &'a str, solver: &FiberSolver) -> Meta<'a> {
        Meta {
            subcommand,
            seed: self.seed,
            basis_size: solver.basis().size(),
            quad_order: solver.basis().quad_order(),
        }
    }

    pub fn solver(&self) -> Result<FiberSolver, CliError> {
        let cfg = &self.config;
        let w = cfg.potential()?;
        let mut size = cfg.basis.size;
        if let Some(eps) = cfg.basis.eps_conv {
            let probes = periodic_grid(w.period() * cfg.b, CONVERGENCE_PROBES);
            size = converge(&w, cfg.b, cfg.bands.j_max, eps, &probes, size, MAX_BASIS_SIZE)?;
            log::info!("basis converged at N = {size}");
        }
        let basis = match cfg.basis.quad_order {
            Some(q) => HermiteBasis::new(cfg.b, size, q.max(2 * size))?,
            None => HermiteBasis::with_default_quadrature(cfg.b, size)?,
        };
        Ok(FiberSolver::new(basis, w))
    }

    pub fn bands(&self, solver: &FiberSolver, j_max: usize) -> Result<Vec<BandAnalysis>, CliError> {
        let p = &self.config.potential;
        let grid = self.config.bands.k_grid;
        let key = CacheKey {
            period: p.period,
            cos: &p.cos,
            sin: &p.sin,
            b: self.config.b,
            size: solver.basis().size(),
            quad_order: solver.basis().quad_order(),
            j_max,
            grid,
        }
        .digest();
        self.cache
            .get_or_compute(&key, || Ok(band_edges_and_gaps(solver, j_max, grid)?))
    }

    pub fn run(&self, command: &str) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(&self.out)?;
        match command {
            "bands" => self.cmd_bands(),
            "gaps" => self.cmd_gaps(),
            "extrema" => self.cmd_extrema(),
            "semiclassics" => self.cmd_semiclassics(),
            "decay" => self.cmd_decay(),
            "count" => self.cmd_count(),
            "oracle" => self.cmd_oracle(),
            "fitlaw" => self.cmd_fitlaw(),
            other => Err(CliError::Config(format!("unknown subcommand {other}"))),
        }
    }

    fn emit<T: Serialize>(
        &self,
        stem: &str,
        csv: Option<(Vec<String>, Vec<Vec<String>>)>,
        json: &T,
    ) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::new();
        let out = &self.config.output;
        if let Some((header, rows)) = csv {
            if out.csv() {
                let p = self.path(&format!("{stem}.csv"));
                write_csv(&p, &header, &rows)?;
                written.push(p);
            }
        }
        if out.json() {
            let p = self.path(&format!("{stem}.json"));
            write_json(&p, json)?;
            written.push(p);
        }
        Ok(written)
    }

    fn cmd_bands(&self) -> Result<Vec<PathBuf>, CliError> {
        let solver = self.solver()?;
        let bands = self.bands(&solver, self.config.bands.j_max)?;
        let mut header = vec!["k".to_string()];
        header.extend(bands.iter().map(|b| format!("E{}", b.band)));
        let rows = (0..bands[0].k_grid.len())
            .map(|i| {
                let mut row = vec![fmt_f64(bands[0].k_grid[i])];
                row.extend(bands.iter().map(|b| fmt_f64(b.values[i])));
                row
            })
            .collect();

        #[derive(Serialize)]
        struct Edges<'a> {
            meta: Meta<'a>,
            edges: Vec<(usize, f64, f64)>,
        }
        let json = Edges {
            meta: self.meta("bands", &solver),
            edges: bands.iter().map(|b| (b.band, b.edge_min, b.edge_max)).collect(),
        };
        self.emit("bands", Some((header, rows)), &json)
    }

    fn cmd_gaps(&self) -> Result<Vec<PathBuf>, CliError> {
        let solver = self.solver()?;
        let bands = self.bands(&solver, self.config.bands.j_max)?;
        let header = ["band", "edge_min", "edge_max", "gap_lo", "gap_hi"]
            .map(String::from)
            .to_vec();
        let rows = bands
            .iter()
            .map(|b| {
                vec![
                    b.band.to_string(),
                    fmt_f64(b.edge_min),
                    fmt_f64(b.edge_max),
                    b.gap_above.map(|g| fmt_f64(g.0)).unwrap_or_default(),
                    b.gap_above.map(|g| fmt_f64(g.1)).unwrap_or_default(),
                ]
            })
            .collect();

        #[derive(Serialize)]
        struct Band {
            band: usize,
            edge_min: f64,
            edge_max: f64,
            constant: bool,
            gap_above: Option<(f64, f64)>,
        }
        #[derive(Serialize)]
        struct Gaps<'a> {
            meta: Meta<'a>,
            gap_condition: bool,
            bands: Vec<Band>,
        }
        let json = Gaps {
            meta: self.meta("gaps", &solver),
            gap_condition: solver.potential().gap_condition(self.config.b)?,
            bands: bands
                .iter()
                .map(|b| Band {
                    band: b.band,
                    edge_min: b.edge_min,
                    edge_max: b.edge_max,
                    constant: b.constant,
                    gap_above: b.gap_above,
                })
                .collect(),
        };
        self.emit("gaps", Some((header, rows)), &json)
    }

    fn cmd_extrema(&self) -> Result<Vec<PathBuf>, CliError> {
        let solver = self.solver()?;
        let bands = self.bands(&solver, self.config.bands.j_max)?;
        let header = ["band", "kind", "k", "value", "second_derivative", "mu", "degenerate"]
            .map(String::from)
            .to_vec();
        let mut rows = Vec::new();
        for ex in bands.iter().filter_map(|b| b.extrema.as_ref()) {
            let mut points: Vec<_> = ex.minima.iter().chain(&ex.maxima).collect();
            points.sort_by(|a, b| a.k.total_cmp(&b.k));
            for p in points {
                rows.push(vec![
                    ex.band.to_string(),
                    serde_json::to_value(p.kind)?.as_str().unwrap_or_default().to_string(),
                    fmt_f64(p.k),
                    fmt_f64(p.value),
                    fmt_f64(p.second_derivative),
                    fmt_f64(p.mu),
                    p.degenerate.to_string(),
                ]);
            }
        }

        #[derive(Serialize)]
        struct Extrema<'a> {
            meta: Meta<'a>,
            constant_bands: Vec<usize>,
            extrema: Vec<&'a magband::bands::BandExtrema>,
        }
        let json = Extrema {
            meta: self.meta("extrema", &solver),
            constant_bands: bands.iter().filter(|b| b.constant).map(|b| b.band).collect(),
            extrema: bands.iter().filter_map(|b| b.extrema.as_ref()).collect(),
        };
        self.emit("extrema", Some((header, rows)), &json)
    }

    fn cmd_semiclassics(&self) -> Result<Vec<PathBuf>, CliError> {
        let solver = self.solver()?;
        let sc = &self.config.semiclassics;
        let w = solver.potential();
        let ks = periodic_grid(solver.tau(), sc.k_points);

        #[derive(Serialize)]
        struct BandReport {
            constants: SemiclassicalConstants,
            first_bound: BoundCheck,
            second_bound: BoundCheck,
            first_sign: Vec<Result<SignPrediction, String>>,
            second_sign: Vec<Result<SignPrediction, String>>,
        }
        let skipped = |r: magband::Result<SignPrediction>| -> Result<Result<SignPrediction, String>, CliError> {
            match r {
                Ok(p) => Ok(Ok(p)),
                Err(e @ Error::Precondition(_)) => Ok(Err(e.to_string())),
                Err(e) => Err(e.into()),
            }
        };
        let mut reports = Vec::new();
        let mut rows = Vec::new();
        for &j in &sc.bands {
            let c = constants(j, w)?;
            let first = verify_first_bound(&solver, &c, &ks)?;
            let second = verify_second_bound(&solver, &c, &ks)?;
            let mut fs = Vec::new();
            let mut ss = Vec::new();
            for &x0 in &sc.x0 {
                fs.push(skipped(first_sign(&solver, &c, x0))?);
                ss.push(skipped(second_sign(&solver, &c, x0))?);
            }
            rows.push(vec![
                j.to_string(),
                fmt_f64(c.c1),
                fmt_f64(c.c2),
                fmt_f64(c.c3),
                fmt_f64(c.c4),
                fmt_f64(c.c5),
                fmt_f64(first.max_residual),
                fmt_f64(second.max_residual),
                (first.passes && second.passes).to_string(),
            ]);
            reports.push(BandReport {
                constants: c,
                first_bound: first,
                second_bound: second,
                first_sign: fs,
                second_sign: ss,
            });
        }
        let j_top = sc.bands.iter().copied().max().unwrap_or(1);
        let drift = kkp_drift(&self.bands(&solver, j_top)?, self.config.b, w);
        let header = [
            "band",
            "c1",
            "c2",
            "c3",
            "c4",
            "c5",
            "first_residual",
            "second_residual",
            "pass",
        ]
        .map(String::from)
        .to_vec();

        #[derive(Serialize)]
        struct Report<'a> {
            meta: Meta<'a>,
            b: f64,
            pass: bool,
            bands: Vec<BandReport>,
            kkp_drift: Vec<KkpDrift>,
            note: &'static str,
        }
        let json = Report {
            meta: self.meta("semiclassics", &solver),
            b: self.config.b,
            pass: reports.iter().all(|r| r.first_bound.passes && r.second_bound.passes),
            bands: reports,
            kkp_drift: drift,
            note: ANALOGY_NOTE,
        };
        self.emit("semiclassics", Some((header, rows)), &json)
    }

    fn cmd_decay(&self) -> Result<Vec<PathBuf>, CliError> {
        let d = self
            .config
            .decay
            .as_ref()
            .ok_or_else(|| CliError::Config("decay: missing section".into()))?;
        let solver = self.solver()?;
        let xis = xi_range(d.xi[0], d.xi[1], d.xi[2]);
        let fit = decay_slope(&solver, d.band, d.k0, (d.interval[0], d.interval[1]), &xis)?;
        let header = ["xi", "log_integral", "ratio"].map(String::from).to_vec();
        let rows = fit
            .points
            .iter()
            .map(|p| vec![fmt_f64(p.xi), fmt_f64(p.log_integral), fmt_f64(p.ratio)])
            .collect();

        #[derive(Serialize)]
        struct Decay<'a> {
            meta: Meta<'a>,
            slope: f64,
            expected: f64,
            residual: f64,
            dropped: &'a [f64],
        }
        let json = Decay {
            meta: self.meta("decay", &solver),
            slope: fit.slope,
            expected: -self.config.b,
            residual: fit.residual,
            dropped: &fit.dropped,
        };
        self.emit("decay", Some((header, rows)), &json)
    }

    fn counting(&self, solver: &FiberSolver, m1: bool, oracle: bool) -> Result<CountingReport, CliError> {
        let c = self.config.counting()?;
        let v = self.config.perturbation()?;
        let mut opts = CountingOptions::new(self.config.lambdas()?);
        opts.m1 = m1;
        opts.oracle = oracle.then(OracleQuadrature::default);
        opts.k_o1 = c.k_o1;
        opts.window = c.lattice.map(|l| (-l, l));
        Ok(run_counting(solver, c.gap_index, &v, &opts)?)
    }

    fn cmd_count(&self) -> Result<Vec<PathBuf>, CliError> {
        let solver = self.solver()?;
        let c = self.config.counting()?;
        let report = self.counting(&solver, c.m1, c.oracle)?;
        let header = ["lambda", "N_G2", "N_M1", "N_nu_lo", "N_nu_hi", "N_oracle"]
            .map(String::from)
            .to_vec();
        let rows = report
            .rows
            .iter()
            .map(|r| {
                vec![
                    fmt_f64(r.lambda),
                    r.g2.to_string(),
                    fmt_opt(r.m1),
                    r.nu_lower.to_string(),
                    r.nu_upper.to_string(),
                    fmt_opt(r.oracle),
                ]
            })
            .collect();

        #[derive(Serialize)]
        struct Count<'a> {
            meta: Meta<'a>,
            slope: Option<f64>,
            sandwich: (f64, f64),
            all_sandwiched: bool,
            max_m1_deviation: Option<usize>,
            max_oracle_deviation: Option<usize>,
            report: &'a CountingReport,
        }
        let json = Count {
            meta: self.meta("count", &solver),
            slope: report.fit.map(|f| f.slope),
            sandwich: report.sandwich,
            all_sandwiched: report.all_sandwiched(),
            max_m1_deviation: report.max_m1_deviation(),
            max_oracle_deviation: report.max_oracle_deviation(),
            report: &report,
        };
        self.emit("count", Some((header, rows)), &json)
    }

    fn cmd_oracle(&self) -> Result<Vec<PathBuf>, CliError> {
        let solver = self.solver()?;
        let c = self.config.counting()?;
        let v = self.config.perturbation()?;
        let lambdas = self.config.lambdas()?;
        let lo = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = lambdas.iter().copied().fold(0.0, f64::max);
        let oracle = BsOracle::new(&solver, c.gap_index, &v, (lo, hi), OracleQuadrature::default())?;
        let counts = lambdas
            .iter()
            .map(|l| oracle.count(oracle.gap.0 + l))
            .collect::<magband::Result<Vec<OracleCount>>>()?;
        let header = ["lambda", "energy", "N_oracle", "dimension"].map(String::from).to_vec();
        let rows = lambdas
            .iter()
            .zip(&counts)
            .map(|(l, o)| {
                vec![
                    fmt_f64(*l),
                    fmt_f64(o.energy),
                    o.count.to_string(),
                    o.dimension.to_string(),
                ]
            })
            .collect();

        #[derive(Serialize)]
        struct Oracle<'a> {
            meta: Meta<'a>,
            gap: (f64, f64),
            j_max: usize,
            gap_kappa_nodes: usize,
            tail_estimate: f64,
            counts: &'a [OracleCount],
        }
        let json = Oracle {
            meta: self.meta("oracle", &solver),
            gap: oracle.gap,
            j_max: oracle.j_max,
            gap_kappa_nodes: oracle.gap_kappa_nodes,
            tail_estimate: oracle.tail_estimate,
            counts: &counts,
        };
        self.emit("oracle", Some((header, rows)), &json)
    }

    fn cmd_fitlaw(&self) -> Result<Vec<PathBuf>, CliError> {
        let solver = self.solver()?;
        let report = self.counting(&solver, false, false)?;
        let v = self.config.perturbation()?;
        let rate = gaussian_rate(self.config.b, self.config.potential.period);

        #[derive(Serialize)]
        struct FitLaw<'a> {
            meta: Meta<'a>,
            slope: Option<f64>,
            slope_error: Option<f64>,
            intercept: Option<f64>,
            residual: Option<f64>,
            note: Option<&'a str>,
            /// `rate · [𝒞(Ω), A_j^+]`.
            sandwich: (f64, f64),
            rate: f64,
            capacity: f64,
            multiplicity: usize,
            inside: Option<bool>,
            nu_limits: (f64, f64),
        }
        let fit = report.fit;
        let json = FitLaw {
            meta: self.meta("fitlaw", &solver),
            slope: fit.map(|f| f.slope),
            slope_error: fit.map(|f| f.slope_error),
            intercept: fit.map(|f| f.intercept),
            residual: fit.map(|f| f.residual),
            note: report.fit_note.as_deref(),
            sandwich: report.sandwich,
            rate,
            capacity: capacity(&v, solver.tau())?,
            multiplicity: report.multiplicity,
            inside: fit.map(|f| report.sandwich.0 <= f.slope && f.slope <= report.sandwich.1),
            nu_limits: report.nu_limits,
        };
        self.emit("fitlaw", None, &json)
    }
}

pub fn output_dir(config: &RunConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .unwrap_or_else(|| config.output.directory.clone())
}
