//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "geometry": {"spatial_dim": 2, "domain": [0, 1],
//!                "cookies": [{"lo": [0.14, 0.57], "hi": [0.43, 0.86]}]},
//!   "coarsest_points": 7,
//!   "finest_level": 3,
//!   "parameters": [{"start": 0, "step": 0.01, "count": 101}],
//!   "solver": "mg-modified-jacobi",
//!   "omega": 0.5,
//!   "expsum_k": 10,
//!   "pre_smooth": 5,
//!   "post_smooth": 5,
//!   "truncation": {"tolerance": 1e-7, "max_rank": null},
//!   "tolerance": 1e-4,
//!   "max_iterations": 100,
//!   "coarse_tolerance": 1e-9,
//!   "coarse_max_sweeps": 500,
//!   "output": "trace.csv"
//! }
//! ```
//!
//! Only `geometry` and `finest_level` are required. `"geometry": "two-cookie"`
//! selects the built-in two-cookie unit square. A missing `parameters` list
//! gives every cookie the samples `0, 0.01, …, 1`. `omega` may be a number or
//! `"estimate"`; it defaults to 1/2 for Jacobi smoothers and 1e−5 for
//! Richardson. `max_iterations` defaults to 100 for multigrid and 2000 for
//! the plain Jacobi solver.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discretize::{AxisBox, CookieGeometry, ParameterGrid};
use crate::error::{Error, Result};
use crate::ht::TruncationPolicy;
use crate::multigrid::{CycleConfig, Method, SmootherKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeometrySpec {
    Named(NamedGeometry),
    Boxes(BoxGeometry),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedGeometry {
    TwoCookie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxGeometry {
    pub spatial_dim: usize,
    pub domain: [f64; 2],
    pub cookies: Vec<CookieBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CookieBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSamples {
    #[serde(default)]
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    MgModifiedJacobi,
    MgApproxJacobi,
    MgRichardson,
    PlainJacobi,
}

impl SolverKind {
    pub fn smoother(self) -> SmootherKind {
        match self {
            SolverKind::MgModifiedJacobi | SolverKind::PlainJacobi => SmootherKind::ModifiedJacobi,
            SolverKind::MgApproxJacobi => SmootherKind::ApproxJacobi,
            SolverKind::MgRichardson => SmootherKind::Richardson,
        }
    }

    pub fn method(self) -> Method {
        match self {
            SolverKind::PlainJacobi => Method::PlainJacobi,
            other => Method::Multigrid(other.smoother()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSpec {
    Value(f64),
    Keyword(OmegaKeyword),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaKeyword {
    Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    #[serde(default = "default_truncation")]
    pub tolerance: f64,
    #[serde(default)]
    pub max_rank: Option<usize>,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self {
            tolerance: default_truncation(),
            max_rank: None,
        }
    }
}

fn default_truncation() -> f64 {
    1e-7
}
fn default_n0() -> usize {
    7
}
fn default_solver() -> SolverKind {
    SolverKind::MgModifiedJacobi
}
fn default_k() -> usize {
    10
}
fn default_smooth() -> usize {
    5
}
fn default_tolerance() -> f64 {
    1e-4
}
fn default_coarse_tolerance() -> f64 {
    1e-9
}
fn default_coarse_sweeps() -> usize {
    500
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometrySpec,
    #[serde(default = "default_n0")]
    pub coarsest_points: usize,
    pub finest_level: usize,
    #[serde(default)]
    pub parameters: Option<Vec<AxisSamples>>,
    #[serde(default = "default_solver")]
    pub solver: SolverKind,
    #[serde(default)]
    pub omega: Option<OmegaSpec>,
    #[serde(default = "default_k")]
    pub expsum_k: usize,
    #[serde(default = "default_smooth")]
    pub pre_smooth: usize,
    #[serde(default = "default_smooth")]
    pub post_smooth: usize,
    #[serde(default)]
    pub truncation: TruncationSpec,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default = "default_coarse_tolerance")]
    pub coarse_tolerance: f64,
    #[serde(default = "default_coarse_sweeps")]
    pub coarse_max_sweeps: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates; errors name the offending key path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("at `{path}`: {}", e.inner()))
        })?;
        cfg.fill_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes every defaulted value explicit so it can be echoed.
    fn fill_defaults(&mut self) {
        if self.parameters.is_none() {
            if let Ok(geom) = self.geometry() {
                let axis = AxisSamples {
                    start: 0.0,
                    step: 0.01,
                    count: 101,
                };
                self.parameters = Some(vec![axis; geom.num_params()]);
            }
        }
        if self.omega.is_none() {
            let w = match self.solver.smoother() {
                SmootherKind::Richardson => 1e-5,
                _ => 0.5,
            };
            self.omega = Some(OmegaSpec::Value(w));
        }
        if self.max_iterations.is_none() {
            self.max_iterations = Some(match self.solver {
                SolverKind::PlainJacobi => 2000,
                _ => 100,
            });
        }
    }

    fn validate(&self) -> Result<()> {
        let geom = self.geometry()?;
        let grid = self.parameter_grid()?;
        if grid.num_params() != geom.num_params() {
            return Err(Error::Config(format!(
                "at `parameters`: {} axes for {} cookies",
                grid.num_params(),
                geom.num_params()
            )));
        }
        if self.coarsest_points < 1 {
            return Err(Error::Config("at `coarsest_points`: must be at least 1".into()));
        }
        if self.expsum_k < 1 {
            return Err(Error::Config("at `expsum_k`: must be at least 1".into()));
        }
        if let Some(OmegaSpec::Value(w)) = self.omega {
            if !(w > 0.0) {
                return Err(Error::Config(format!("at `omega`: {w} must be positive")));
            }
        }
        if !(self.truncation.tolerance > 0.0) || self.truncation.max_rank == Some(0) {
            return Err(Error::Config(
                "at `truncation`: tolerance must be positive and max_rank at least 1".into(),
            ));
        }
        self.cycle_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn geometry(&self) -> Result<CookieGeometry> {
        match &self.geometry {
            GeometrySpec::Named(NamedGeometry::TwoCookie) => Ok(CookieGeometry::two_cookie()),
            GeometrySpec::Boxes(b) => {
                let cookies = b
                    .cookies
                    .iter()
                    .map(|c| AxisBox::new(c.lo.clone(), c.hi.clone()))
                    .collect();
                CookieGeometry::new(b.spatial_dim, b.domain[0], b.domain[1], cookies)
                    .map_err(|e| Error::Config(format!("at `geometry`: {e}")))
            }
        }
    }

    pub fn parameter_grid(&self) -> Result<ParameterGrid> {
        let axes = self.parameters.as_deref().unwrap_or(&[]);
        let samples = axes
            .iter()
            .map(|a| (0..a.count).map(|i| a.start + i as f64 * a.step).collect())
            .collect();
        ParameterGrid::new(samples).map_err(|e| Error::Config(format!("at `parameters`: {e}")))
    }

    /// `None` means estimate by power iteration.
    pub fn omega(&self) -> Option<f64> {
        match self.omega {
            Some(OmegaSpec::Value(w)) => Some(w),
            _ => None,
        }
    }

    pub fn cycle_config(&self) -> CycleConfig {
        CycleConfig {
            pre_smooth: self.pre_smooth,
            post_smooth: self.post_smooth,
            policy: TruncationPolicy {
                rel_tolerance: self.truncation.tolerance,
                max_rank: self.truncation.max_rank.unwrap_or(usize::MAX),
            },
            coarse_tolerance: self.coarse_tolerance,
            coarse_max_sweeps: self.coarse_max_sweeps,
            coarse_truncation: self.truncation.tolerance,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations.unwrap_or(100),
        }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"geometry": "two-cookie", "finest_level": 1}"#).unwrap();
        assert_eq!((cfg.pre_smooth, cfg.post_smooth), (5, 5));
        assert_eq!(cfg.tolerance, 1e-4);
        assert_eq!(cfg.truncation.tolerance, 1e-7);
        assert_eq!(cfg.expsum_k, 10);
        assert_eq!(cfg.omega(), Some(0.5));
        assert_eq!(cfg.max_iterations, Some(100));
        let grid = cfg.parameter_grid().unwrap();
        assert_eq!(grid.param_dims(), vec![101, 101]);
        assert_eq!(grid.samples(1)[0], 0.0);
        assert_eq!(*grid.samples(1).last().unwrap(), 1.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_json(
            r#"{"geometry": "two-cookie", "finest_level": 1, "omega_typo": 1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("omega_typo"), "{err}");
        let err = ExperimentConfig::from_json(
            r#"{"geometry": "two-cookie", "finest_level": 1, "truncation": {"tol": 1}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("truncation"), "{err}");
    }

    #[test]
    fn richardson_and_plain_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"geometry": "two-cookie", "finest_level": 1, "solver": "mg-richardson"}"#,
        )
        .unwrap();
        assert_eq!(cfg.omega(), Some(1e-5));
        let cfg = ExperimentConfig::from_json(
            r#"{"geometry": "two-cookie", "finest_level": 1, "solver": "plain-jacobi", "omega": "estimate"}"#,
        )
        .unwrap();
        assert_eq!(cfg.omega(), None);
        assert_eq!(cfg.max_iterations, Some(2000));
    }

    #[test]
    fn explicit_boxes_and_axis_mismatch() {
        let text = r#"{
            "geometry": {"spatial_dim": 1, "domain": [0, 1], "cookies": [{"lo": [0.3], "hi": [0.7]}]},
            "finest_level": 0,
            "parameters": [{"step": 0.25, "count": 5}]
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.parameter_grid().unwrap().samples(1), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let bad = text.replace(r#"[{"step": 0.25, "count": 5}]"#, "[]");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }
}
