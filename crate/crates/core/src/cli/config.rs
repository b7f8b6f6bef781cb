//! Experiment configuration (one JSON document per run).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    fat_cantor_region, make_uniform_grid, parse_intervals, region_from_intervals, Coefficients,
    ControlRegion, Grid1D,
};
use crate::sim::{Method, Setup};
use crate::spectral::l2_norm;

fn one() -> f64 {
    1.0
}

fn default_region() -> String {
    "0.2,0.3".into()
}

fn default_steps() -> usize {
    crate::control::DEFAULT_STEPS
}

fn default_pairs() -> usize {
    1
}

fn default_method() -> Method {
    Method::Hum
}

/// Polynomial coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Polynomials {
    #[serde(default = "unit_poly")]
    pub kappa: Vec<f64>,
    #[serde(default = "unit_poly")]
    pub a: Vec<f64>,
}

fn unit_poly() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledArrays {
    /// One value per cell.
    pub kappa: Vec<f64>,
    /// One value per face (`n + 1`).
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientSpec {
    #[default]
    Constant,
    Arrays(SampledArrays),
    Polynomial(Polynomials),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialArrays {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Initial pairs `(u0, v0)` for the control command.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialData {
    /// `pairs` seeded Gaussian pairs, each component of unit weighted L² norm.
    #[default]
    Random,
    Zero,
    Arrays(InitialArrays),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    #[serde(default = "one")]
    pub length: f64,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    /// `"full"`, `"a1,b1;a2,b2"`, `"fatcantor:MEASURE:DEPTH"` or `"mask:PATH"`.
    #[serde(default = "default_region")]
    pub region: String,
    #[serde(rename = "T", default = "one")]
    pub horizon: f64,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub lambda0: Option<f64>,
    #[serde(default)]
    pub lambda_sweep: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
}

/// Tolerance keys and their defaults.
pub const TOLERANCE_DEFAULTS: [(&str, f64); 6] = [
    ("hum", 1e-6),
    ("lr", 1e-4),
    ("spectrum", 1e-9),
    ("extension", 1e-10),
    ("link", 1e-10),
    ("split", 1e-12),
];

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return config_err(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return config_err("length must be positive");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return config_err("T must be positive");
        }
        if self.steps == 0 || self.pairs == 0 {
            return config_err("steps and pairs must be positive");
        }
        if let Some(l) = self.lambda0 {
            if !(l > 0.0 && l.is_finite()) {
                return config_err("lambda0 must be positive");
            }
        }
        for (k, v) in &self.tolerances {
            if !TOLERANCE_DEFAULTS.iter().any(|(name, _)| name == k) {
                return config_err(format!("unknown tolerance {k:?}"));
            }
            if !(*v > 0.0) {
                return config_err(format!("tolerance {k:?} must be positive"));
            }
        }
        if let Some(path) = self.region.strip_prefix("mask:") {
            if !Path::new(path).is_file() {
                return config_err(format!("mask file {path} does not exist"));
            }
        }
        Ok(())
    }

    pub fn tolerance(&self, key: &str) -> f64 {
        self.tolerances.get(key).copied().unwrap_or_else(|| {
            TOLERANCE_DEFAULTS
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .expect("known tolerance key")
        })
    }

    pub fn grid_and_coefficients(&self) -> Result<(Grid1D, Coefficients)> {
        let in_config = |e: Error| Error::Config(e.to_string());
        match &self.coefficients {
            CoefficientSpec::Constant => Ok((
                Grid1D::uniform(self.n, self.length).map_err(in_config)?,
                Coefficients::constant(self.n),
            )),
            CoefficientSpec::Arrays(arr) => {
                if arr.kappa.len() != self.n || arr.a.len() != self.n + 1 {
                    return config_err(format!(
                        "coefficient arrays need {} kappa and {} a values",
                        self.n,
                        self.n + 1
                    ));
                }
                let g = Grid1D::from_density(self.n, self.length, arr.kappa.clone())
                    .map_err(in_config)?;
                let c = Coefficients::new(arr.kappa.clone(), arr.a.clone()).map_err(in_config)?;
                Ok((g, c))
            }
            CoefficientSpec::Polynomial(p) => {
                let eval = |c: &[f64], x: f64| c.iter().rev().fold(0.0, |acc, ci| acc * x + ci);
                let g = make_uniform_grid(self.n, self.length, |x| eval(&p.kappa, x))
                    .map_err(in_config)?;
                let c = Coefficients::sample(&g, |x| eval(&p.a, x)).map_err(in_config)?;
                Ok((g, c))
            }
        }
    }

    pub fn setup(&self) -> Result<Setup> {
        let (g, c) = self.grid_and_coefficients()?;
        Setup::new(g, c)
    }

    /// Resolves the region spec. Resolution failures of the fat Cantor
    /// construction keep their own error kind.
    pub fn region(&self, grid: &Grid1D) -> Result<ControlRegion> {
        let spec = self.region.trim();
        if spec == "full" {
            return Ok(ControlRegion::full(grid));
        }
        if let Some(path) = spec.strip_prefix("mask:") {
            return ControlRegion::read_mask_file(Path::new(path), grid)
                .map_err(|e| Error::Config(format!("mask file {path}: {e}")));
        }
        if let Some(rest) = spec.strip_prefix("fatcantor:") {
            let mut it = rest.split(':');
            let parsed = match (it.next(), it.next(), it.next()) {
                (Some(m), Some(d), None) => m.parse::<f64>().ok().zip(d.parse::<u32>().ok()),
                _ => None,
            };
            let Some((measure, depth)) = parsed else {
                return config_err(format!("cannot parse region {spec:?}"));
            };
            return fat_cantor_region(grid, measure, depth, self.seed).map_err(|e| match e {
                Error::InvalidArgument(m) => Error::Config(m),
                other => other,
            });
        }
        let intervals = parse_intervals(spec).map_err(|e| Error::Config(e.to_string()))?;
        region_from_intervals(grid, &intervals).map_err(|e| Error::Config(e.to_string()))
    }

    /// Initial pairs, normalized to unit weighted L² norm when random.
    pub fn initial_pairs(&self, grid: &Grid1D) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let n = grid.n();
        match &self.initial {
            InitialData::Zero => Ok(vec![(vec![0.0; n], vec![0.0; n]); self.pairs]),
            InitialData::Arrays(a) => {
                if a.u.len() != n || a.v.len() != n {
                    return config_err(format!("initial arrays need {n} values each"));
                }
                Ok(vec![(a.u.clone(), a.v.clone())])
            }
            InitialData::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let w = grid.weights();
                let mut unit = || {
                    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let s = l2_norm(&x, w);
                    x.into_iter().map(|v| v / s).collect::<Vec<f64>>()
                };
                Ok((0..self.pairs).map(|_| (unit(), unit())).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_defaults() {
        let c = ExperimentConfig::from_json(r#"{"n": 16}"#).unwrap();
        assert_eq!(
            (c.length, c.horizon, c.method, c.steps),
            (1.0, 1.0, Method::Hum, 64)
        );
        assert_eq!(c.tolerance("hum"), 1e-6);
        let (g, co) = c.grid_and_coefficients().unwrap();
        assert!(g.has_unit_density() && co.is_constant());
        assert_eq!(c.region(&g).unwrap().cells(), vec![3, 4]);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            r#"{"n": 1}"#,
            r#"{"n": 8, "T": 0}"#,
            r#"{"n": 8, "bogus": 1}"#,
            r#"{"n": 8, "tolerances": {"nope": 1e-3}}"#,
            r#"{"n": 8, "region": "mask:/definitely/not/here"}"#,
            r#"{"n": 8, "method": "cn"}"#,
            "not json",
        ] {
            assert!(
                matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn coefficient_forms() {
        let c = ExperimentConfig::from_json(
            r#"{"n": 4, "coefficients": {"polynomial": {"kappa": [1.0, 0.5]}}}"#,
        )
        .unwrap();
        let (g, co) = c.grid_and_coefficients().unwrap();
        assert!((g.kappa()[0] - 1.0625).abs() < 1e-15);
        assert_eq!(co.a, vec![1.0; 5]);

        let c = ExperimentConfig::from_json(
            r#"{"n": 2, "coefficients": {"arrays": {"kappa": [1, 2], "a": [1, 1, 3]}}}"#,
        )
        .unwrap();
        let (g, co) = c.grid_and_coefficients().unwrap();
        assert_eq!(g.kappa(), &[1.0, 2.0]);
        assert_eq!(co.a, vec![1.0, 1.0, 3.0]);

        let bad = ExperimentConfig::from_json(
            r#"{"n": 2, "coefficients": {"arrays": {"kappa": [1], "a": [1, 1, 3]}}}"#,
        )
        .unwrap();
        assert!(bad.grid_and_coefficients().is_err());
    }

    #[test]
    fn region_specs_and_initial_data() {
        let mut c =
            ExperimentConfig::from_json(r#"{"n": 64, "region": "full", "pairs": 2}"#).unwrap();
        let g = Grid1D::uniform(64, 1.0).unwrap();
        assert_eq!(c.region(&g).unwrap().cell_count(), 64);
        c.region = "fatcantor:0.5:2".into();
        let r = c.region(&g).unwrap();
        assert!((r.measure() - 0.5).abs() <= 2.0 * g.h());
        c.region = "0.3,".into();
        assert!(c.region(&g).is_err());

        let pairs = c.initial_pairs(&g).unwrap();
        assert_eq!(pairs.len(), 2);
        assert!((l2_norm(&pairs[1].1, g.weights()) - 1.0).abs() < 1e-14);
        assert_eq!(pairs, c.initial_pairs(&g).unwrap());
    }
}
