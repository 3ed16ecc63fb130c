//! Run configuration: a JSON document validated on load.

use std::path::{Path, PathBuf};

use magband::counting::{log_grid, Envelope, PerturbationV, Rectangle};
use magband::FourierPotential;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MIN_BASIS_SIZE: usize = 16;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub period: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    /// Number of Hermite functions.
    #[serde(rename = "N")]
    pub size: usize,
    /// Gauss–Hermite order; defaults to the solver's choice.
    #[serde(rename = "Q", default)]
    pub quad_order: Option<usize>,
    /// When set, `N` is the starting size of a doubling search to this tolerance.
    #[serde(default)]
    pub eps_conv: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsConfig {
    #[serde(default = "default_j_max")]
    pub j_max: usize,
    #[serde(default = "default_k_grid")]
    pub k_grid: usize,
}

fn default_j_max() -> usize {
    3
}

fn default_k_grid() -> usize {
    512
}

impl Default for BandsConfig {
    fn default() -> Self {
        Self {
            j_max: default_j_max(),
            k_grid: default_k_grid(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    #[serde(default)]
    pub rectangles: Vec<Rectangle>,
    #[serde(default)]
    pub envelope: Option<Envelope>,
}

/// `λ = 10^e` for `e = start, start - step, …, ≥ stop`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decades {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingConfig {
    #[serde(default = "default_gap_index")]
    pub gap_index: usize,
    pub lambda_decades: Decades,
    /// Half-width of a fixed lattice window `[-L, L]`; adaptive when absent.
    #[serde(rename = "L", default)]
    pub lattice: Option<i64>,
    #[serde(rename = "K_O1", default = "default_k_o1")]
    pub k_o1: usize,
    #[serde(default)]
    pub m1: bool,
    #[serde(default)]
    pub oracle: bool,
}

fn default_gap_index() -> usize {
    1
}

fn default_k_o1() -> usize {
    magband::counting::DEFAULT_K_O1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiclassicsConfig {
    #[serde(default = "default_sc_bands")]
    pub bands: Vec<usize>,
    #[serde(default = "default_sc_points")]
    pub x0: Vec<f64>,
    #[serde(default = "default_sc_grid")]
    pub k_points: usize,
}

fn default_sc_bands() -> Vec<usize> {
    vec![1]
}

fn default_sc_points() -> Vec<f64> {
    vec![0.0, 0.5]
}

fn default_sc_grid() -> usize {
    64
}

impl Default for SemiclassicsConfig {
    fn default() -> Self {
        Self {
            bands: default_sc_bands(),
            x0: default_sc_points(),
            k_points: default_sc_grid(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    #[serde(default = "default_decay_band")]
    pub band: usize,
    #[serde(default)]
    pub k0: f64,
    pub interval: [f64; 2],
    /// `[start, stop, step]`.
    pub xi: [f64; 3],
}

fn default_decay_band() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

impl OutputConfig {
    pub fn csv(&self) -> bool {
        self.formats.iter().any(|f| matches!(f, Format::Csv))
    }

    pub fn json(&self) -> bool {
        self.formats.iter().any(|f| matches!(f, Format::Json))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialConfig,
    pub b: f64,
    pub basis: BasisConfig,
    #[serde(default)]
    pub bands: BandsConfig,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub counting: Option<CountingConfig>,
    #[serde(default)]
    pub semiclassics: SemiclassicsConfig,
    #[serde(default)]
    pub decay: Option<DecayConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

/// Turns serde's `missing field `x`` at path `a.b` into the path `a.b.x`.
fn path_message(err: serde_path_to_error::Error<serde_json::Error>) -> CliError {
    let path = err.path().to_string();
    let inner = err.into_inner();
    let msg = inner.to_string();
    if let Some(rest) = msg.strip_prefix("missing field `") {
        if let Some(field) = rest.split('`').next() {
            let full = if path == "." || path.is_empty() {
                field.to_string()
            } else {
                format!("{path}.{field}")
            };
            return CliError::Config(format!("{full}: missing field"));
        }
    }
    CliError::Config(format!("{path}: {msg}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(path_message)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.potential;
        if !(p.period > 0.0 && p.period.is_finite()) {
            return Err(invalid("potential.period", "must be positive"));
        }
        if let Some(i) = p.cos.iter().chain(&p.sin).position(|c| !c.is_finite()) {
            return Err(invalid("potential", format!("coefficient {i} is not finite")));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(invalid("b", "must be positive"));
        }
        if self.basis.size < MIN_BASIS_SIZE {
            return Err(invalid("basis.N", format!("must be at least {MIN_BASIS_SIZE}")));
        }
        if let Some(q) = self.basis.quad_order {
            if q < 2 * self.basis.size {
                return Err(invalid("basis.Q", "must be at least 2N"));
            }
        }
        if let Some(eps) = self.basis.eps_conv {
            if !(eps > 0.0) {
                return Err(invalid("basis.eps_conv", "must be positive"));
            }
        }
        if self.bands.j_max == 0 {
            return Err(invalid("bands.j_max", "must be at least 1"));
        }
        if self.bands.k_grid < 8 {
            return Err(invalid("bands.k_grid", "must be at least 8"));
        }
        for (i, r) in self.perturbation.rectangles.iter().enumerate() {
            if !(r.x[0] < r.x[1] && r.y[0] < r.y[1]) {
                return Err(invalid(&format!("perturbation.rectangles[{i}]"), "empty rectangle"));
            }
            if !(r.amplitude > 0.0) {
                return Err(invalid(
                    &format!("perturbation.rectangles[{i}].amplitude"),
                    "must be positive",
                ));
            }
        }
        if let Some(c) = &self.counting {
            if c.gap_index == 0 || c.gap_index > self.bands.j_max {
                return Err(invalid("counting.gap_index", "must lie in 1..=bands.j_max"));
            }
            let d = &c.lambda_decades;
            // The G₂ noise floor sits near 1e-12 relative; thresholds 2√λ below
            // f64 resolution are rejected up front.
            if d.stop < -150.0 {
                return Err(invalid(
                    "counting.lambda_decades.stop",
                    "below the representable noise floor",
                ));
            }
            if d.start > 0.0 {
                return Err(invalid("counting.lambda_decades.start", "λ must not exceed 1"));
            }
            log_grid(d.start, d.stop, d.step).map_err(|e| invalid("counting.lambda_decades", e))?;
            if let Some(l) = c.lattice {
                if l < 0 {
                    return Err(invalid("counting.L", "must be non-negative"));
                }
            }
        }
        if let Some(d) = &self.decay {
            if !(d.interval[0] < d.interval[1]) {
                return Err(invalid("decay.interval", "must be increasing"));
            }
            if !(d.xi[2] > 0.0 && d.xi[0] > 0.0 && d.xi[0] <= d.xi[1]) {
                return Err(invalid("decay.xi", "needs 0 < start ≤ stop and step > 0"));
            }
        }
        if self.semiclassics.bands.contains(&0) {
            return Err(invalid("semiclassics.bands", "band indices start at 1"));
        }
        Ok(())
    }

    pub fn potential(&self) -> Result<FourierPotential, CliError> {
        let p = &self.potential;
        FourierPotential::new(p.period, p.cos.clone(), p.sin.clone()).map_err(|e| invalid("potential", e))
    }

    pub fn perturbation(&self) -> Result<PerturbationV, CliError> {
        PerturbationV::new(self.perturbation.rectangles.clone(), self.perturbation.envelope)
            .map_err(|e| invalid("perturbation", e))
    }

    pub fn counting(&self) -> Result<&CountingConfig, CliError> {
        self.counting
            .as_ref()
            .ok_or_else(|| CliError::Config("counting: missing section".into()))
    }

    pub fn lambdas(&self) -> Result<Vec<f64>, CliError> {
        let d = &self.counting()?.lambda_decades;
        log_grid(d.start, d.stop, d.step).map_err(|e| invalid("counting.lambda_decades", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"potential": {"period": 1.0, "cos": [0.0, 0.4]}, "b": 2.0, "basis": {"N": 32}}"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.bands.j_max, 3);
        assert_eq!(cfg.bands.k_grid, 512);
        assert!(cfg.counting.is_none());
        assert!(cfg.output.csv() && cfg.output.json());
    }

    #[test]
    fn missing_period_names_full_path() {
        let err = RunConfig::from_json(r#"{"potential": {"cos": [0.0]}, "b": 1.0, "basis": {"N": 32}}"#).unwrap_err();
        assert!(err.to_string().contains("potential.period"), "{err}");
    }

    #[test]
    fn unknown_key_rejected_with_path() {
        let err = RunConfig::from_json(r#"{"potential": {"period": 1.0}, "b": 1.0, "basis": {"N": 32, "bogus": 1}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("basis"), "{err}");
    }

    #[test]
    fn invariants_enforced() {
        for (text, path) in [
            (
                r#"{"potential": {"period": -1.0}, "b": 1.0, "basis": {"N": 32}}"#,
                "potential.period",
            ),
            (r#"{"potential": {"period": 1.0}, "b": 0.0, "basis": {"N": 32}}"#, "b"),
            (
                r#"{"potential": {"period": 1.0}, "b": 1.0, "basis": {"N": 8}}"#,
                "basis.N",
            ),
        ] {
            let err = RunConfig::from_json(text).unwrap_err();
            assert!(err.to_string().contains(path), "{err}");
        }
    }

    #[test]
    fn lambda_grid_from_decades() {
        let text = r#"{"potential": {"period": 1.0}, "b": 1.0, "basis": {"N": 32},
            "counting": {"lambda_decades": {"start": -2, "stop": -6, "step": 2}}}"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let l = cfg.lambdas().unwrap();
        assert_eq!(l.len(), 3);
        assert!((l[2] - 1e-6).abs() < 1e-20);
    }
}
