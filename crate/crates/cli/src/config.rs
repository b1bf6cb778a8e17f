//! Run configuration. Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use wolffkit::geometry::Point;
use wolffkit::measure::{Measure, MeasureSpec};
use wolffkit::params::Params;
use wolffkit::solver::GridSpec;
use wolffkit::verify::CounterexampleSpec;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub params: Option<Params>,
    #[serde(default)]
    pub measure: Option<MeasureSpec>,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// Evaluation points of `potential` and `kpotential`.
    pub points: Option<Vec<Point>>,
    /// Lower truncation radius of the potentials.
    pub truncation: Option<f64>,
    /// Center of the `kappa` radius ladder.
    pub center: Option<Point>,
    /// Radius ladder of `kappa` and `counterexample`.
    pub radii: Option<Vec<f64>>,
    pub grid: Option<GridSpec>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// Skip the up-front tail check of `solve`.
    pub skip_criteria: Option<bool>,
    /// Every `kpotential_stride`-th node of `solve` gets the intrinsic columns.
    pub kpotential_stride: Option<usize>,
    pub fit_window: Option<(f64, f64)>,
    pub ladder: Option<u32>,
    pub counterexample: Option<CounterexampleSpec>,
    pub check_doubling: Option<bool>,
    pub riccati: Option<RiccatiTask>,
    pub suite: Option<String>,
}

/// Gaussian source `amplitude * exp(-(r / width)^2)` and the grid study around it.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiccatiTask {
    pub amplitude: f64,
    pub width: f64,
    pub range: (f64, f64),
    pub base_nodes: usize,
    pub doublings: usize,
    pub window: (f64, f64),
    /// Coefficient of the pure-power pair.
    pub pure_power: f64,
}

impl Default for RiccatiTask {
    fn default() -> Self {
        RiccatiTask { amplitude: 1.0, width: 1.0, range: (1e-2, 1e2), base_nodes: 201, doublings: 2, window: (0.1, 5.0), pure_power: 1.0 }
    }
}

impl RunConfig {
    pub fn empty() -> Self {
        RunConfig { params: None, measure: None, task: TaskConfig::default(), output_dir: None, cache_dir: None }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> anyhow::Result<()> {
        if let (Some(p), Some(m)) = (&self.params, &self.measure) {
            if p.n() != m.dim {
                bail!(Invalid(format!("params.n = {} but measure.dim = {}", p.n(), m.dim)));
            }
        }
        let t = &self.task;
        if let Some(t) = t.truncation {
            if !(t >= 0.0 && t.is_finite()) {
                bail!(Invalid("task.truncation must be finite and nonnegative".into()));
            }
        }
        if let Some(tol) = t.tol {
            if !(tol > 0.0 && tol < 1.0) {
                bail!(Invalid("task.tol must lie in (0, 1)".into()));
            }
        }
        if t.kpotential_stride == Some(0) {
            bail!(Invalid("task.kpotential_stride must be positive".into()));
        }
        if let Some(g) = &t.grid {
            if g.nodes < 4 || !(g.lo > 0.0 && g.hi > g.lo) {
                bail!(Invalid("task.grid needs at least 4 nodes and 0 < lo < hi".into()));
            }
        }
        if let Some((a, b)) = t.fit_window {
            if !(a > 0.0 && b > a) {
                bail!(Invalid("task.fit_window must satisfy 0 < lo < hi".into()));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> anyhow::Result<Params> {
        self.params.ok_or_else(|| Invalid("config has no params block".into()).into())
    }

    pub fn measure(&self) -> anyhow::Result<Measure> {
        let spec = self.measure.clone().ok_or_else(|| Invalid("config has no measure block".into()))?;
        Ok(Measure::from_spec(spec)?)
    }
}

/// A configuration problem detected before any computation.
#[derive(Debug, Clone, PartialEq)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for Invalid {}
