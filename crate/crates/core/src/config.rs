//! Experiment configuration files (TOML) and their validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Geometry, Vertex};
use crate::simulator::InitialCondition;

/// Largest grid a sweep may expand to unless the config raises it.
pub const DEFAULT_SWEEP_CAP: usize = 256;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Msd,
    Mix,
    Hit,
    Excursions,
    Sigma2,
    Oracle,
    Perc,
    Couple,
    Freeze,
    Trace,
}

impl ExperimentKind {
    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::Msd => "msd",
            ExperimentKind::Mix => "mix",
            ExperimentKind::Hit => "hit",
            ExperimentKind::Excursions => "excursions",
            ExperimentKind::Sigma2 => "sigma2",
            ExperimentKind::Oracle => "oracle",
            ExperimentKind::Perc => "perc",
            ExperimentKind::Couple => "couple",
            ExperimentKind::Freeze => "freeze",
            ExperimentKind::Trace => "trace",
        }
    }
}

/// Torus side length, or the string `"inf"` for `Z^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Side {
    Finite(u32),
    Named(String),
}

impl Side {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Side::Named(s) if s == "inf")
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Finite(n) => write!(f, "{n}"),
            Side::Named(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    #[default]
    Raw,
    /// Grid values are multiplied by `1/mu`.
    InverseMu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// A generated time grid `start..=stop` with `points` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    /// Stationary environment; uniform walker on a torus, origin on `Z^d`.
    #[default]
    Stationary,
    /// Stationary environment, walker at the origin.
    Origin,
    /// Every torus edge revealed open, walker at the origin.
    AllOpen,
    /// Every torus edge revealed closed, walker at the origin.
    AllClosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// First simultaneous regeneration of two independent copies.
    #[default]
    Stage1,
    /// Coordinate-wise coupling of two lazy simple random walks.
    Lsrw,
}

/// Parameter lists expanded into a cartesian grid (d, n, p, mu order,
/// later keys varying fastest). Empty lists keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub d: Vec<usize>,
    #[serde(default)]
    pub n: Vec<Side>,
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default)]
    pub max_points: Option<usize>,
}

impl SweepSpec {
    pub fn is_empty(&self) -> bool {
        self.d.is_empty() && self.n.is_empty() && self.p.is_empty() && self.mu.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub d: usize,
    pub n: Side,
    pub p: f64,
    pub mu: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub time_unit: TimeUnit,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_obs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_blocks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_blocks: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pc_reference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<u64>,
    #[serde(default)]
    pub coupling: CouplingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn default_replicas() -> usize {
    1000
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn geometry(&self) -> Result<Geometry, ConfigError> {
        match &self.n {
            Side::Finite(n) => Geometry::torus(self.d, *n).map_err(|e| invalid("n", e.to_string())),
            Side::Named(s) if s == "inf" => Geometry::infinite(self.d).map_err(|e| invalid("d", e.to_string())),
            Side::Named(s) => Err(invalid("n", format!("expected an integer or \"inf\", got {s:?}"))),
        }
    }

    pub fn initial_condition(&self, g: &Geometry) -> InitialCondition {
        match self.initial {
            InitialSpec::Stationary if g.is_torus() => InitialCondition::StationaryUniformWalker,
            InitialSpec::Stationary | InitialSpec::Origin => InitialCondition::origin(g),
            InitialSpec::AllOpen => InitialCondition::ExplicitAll {
                open: true,
                walker: g.origin(),
            },
            InitialSpec::AllClosed => InitialCondition::ExplicitAll {
                open: false,
                walker: g.origin(),
            },
        }
    }

    pub fn target_vertex(&self, g: &Geometry) -> Result<Option<Vertex>, ConfigError> {
        let Some(t) = &self.target else {
            return Ok(None);
        };
        let v = g.vertex(t).map_err(|e| invalid("target", e.to_string()))?;
        if v.coords() != t.as_slice() {
            return Err(invalid("target", "coordinates must be canonical (in [0, n))"));
        }
        Ok(Some(v))
    }

    /// Raw-time grid after applying `time_unit`. Defaults to `[0]`.
    pub fn times(&self) -> Vec<f64> {
        let base = match (&self.t_grid, &self.grid) {
            (Some(t), _) => t.clone(),
            (None, Some(g)) => match g.points {
                1 => vec![g.start],
                k => (0..k)
                    .map(|i| {
                        let f = i as f64 / (k - 1) as f64;
                        match g.spacing {
                            Spacing::Linear => g.start + f * (g.stop - g.start),
                            Spacing::Log => g.start * (g.stop / g.start).powf(f),
                        }
                    })
                    .collect(),
            },
            (None, None) => vec![0.0],
        };
        match self.time_unit {
            TimeUnit::Raw => base,
            TimeUnit::InverseMu => base.into_iter().map(|t| t / self.mu).collect(),
        }
    }

    /// Checks every field; errors name the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.d == 0 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        let g = self.geometry()?;
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(invalid("p", format!("must lie in (0, 1), got {}", self.p)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(invalid("mu", format!("must be positive and finite, got {}", self.mu)));
        }
        if self.replicas == 0 {
            return Err(invalid("replicas", "must be at least 1"));
        }
        if self.t_grid.is_some() && self.grid.is_some() {
            return Err(invalid("grid", "give either t_grid or [grid], not both"));
        }
        if let Some(t) = &self.t_grid {
            if t.is_empty() {
                return Err(invalid("t_grid", "must not be empty"));
            }
            if t.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(invalid("t_grid", "times must be nonnegative and finite"));
            }
            if t.windows(2).any(|w| w[1] < w[0]) {
                return Err(invalid("t_grid", "times must be nondecreasing"));
            }
        }
        if let Some(gs) = &self.grid {
            if gs.points == 0 {
                return Err(invalid("grid.points", "must be at least 1"));
            }
            if !(gs.start >= 0.0 && gs.stop >= gs.start && gs.stop.is_finite()) {
                return Err(invalid("grid", "need 0 <= start <= stop < inf"));
            }
            if gs.spacing == Spacing::Log && gs.start <= 0.0 {
                return Err(invalid("grid.start", "log spacing needs a positive start"));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < 1.0) {
                return Err(invalid("epsilon", "must lie in (0, 1)"));
            }
        }
        for (key, v) in [("c_obs", self.c_obs), ("horizon", self.horizon)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(key, "must be positive and finite"));
                }
            }
        }
        if let Some(c) = self.c {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(invalid("c", "must be nonnegative and finite"));
            }
        }
        if let Some(pc) = self.pc_reference {
            if !(pc > 0.0 && pc <= 1.0) {
                return Err(invalid("pc_reference", "must lie in (0, 1]"));
            }
        }
        if let (Some(a), Some(b)) = (self.r_min, self.r_max) {
            if a >= b {
                return Err(invalid("r_max", "must exceed r_min"));
            }
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be at least 1"));
        }
        self.target_vertex(&g)?;
        if !g.is_torus() && matches!(self.initial, InitialSpec::AllOpen | InitialSpec::AllClosed) {
            return Err(invalid("initial", "explicit configurations need a torus"));
        }
        let needs_torus = matches!(
            self.experiment,
            ExperimentKind::Mix
                | ExperimentKind::Hit
                | ExperimentKind::Excursions
                | ExperimentKind::Oracle
                | ExperimentKind::Perc
                | ExperimentKind::Couple
                | ExperimentKind::Freeze
        );
        if needs_torus && !g.is_torus() {
            return Err(invalid("n", format!("experiment {} needs a finite torus", self.experiment.id())));
        }
        if self.experiment == ExperimentKind::Sigma2 && g.is_torus() {
            return Err(invalid("n", "sigma2 runs on Z^d; set n = \"inf\""));
        }
        if let Some(s) = &self.sweep {
            if s.d.contains(&0) {
                return Err(invalid("sweep.d", "dimension must be at least 1"));
            }
            if s.p.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
                return Err(invalid("sweep.p", "values must lie in (0, 1)"));
            }
            if s.mu.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
                return Err(invalid("sweep.mu", "values must be positive and finite"));
            }
            let points = self.sweep_points_unchecked().len();
            let cap = s.max_points.unwrap_or(DEFAULT_SWEEP_CAP);
            if points > cap {
                return Err(invalid("sweep", format!("grid has {points} points, cap is {cap}")));
            }
            for (i, point) in self.sweep_points_unchecked().iter().enumerate() {
                point.validate().map_err(|e| match e {
                    ConfigError::Invalid { key, message } => ConfigError::Invalid {
                        key: format!("sweep[{i}].{key}"),
                        message,
                    },
                    other => other,
                })?;
            }
        }
        Ok(())
    }

    fn sweep_points_unchecked(&self) -> Vec<ExperimentConfig> {
        let mut base = self.clone();
        let spec = base.sweep.take().unwrap_or_default();
        let ds = if spec.d.is_empty() { vec![self.d] } else { spec.d.clone() };
        let ns = if spec.n.is_empty() { vec![self.n.clone()] } else { spec.n.clone() };
        let ps = if spec.p.is_empty() { vec![self.p] } else { spec.p.clone() };
        let mus = if spec.mu.is_empty() { vec![self.mu] } else { spec.mu.clone() };
        let mut out = Vec::new();
        for &d in &ds {
            for n in &ns {
                for &p in &ps {
                    for &mu in &mus {
                        let mut c = base.clone();
                        c.d = d;
                        c.n = n.clone();
                        c.p = p;
                        c.mu = mu;
                        out.push(c);
                    }
                }
            }
        }
        out
    }

    /// Concrete configs of the sweep grid, in grid-index order; a config
    /// without sweep lists yields itself.
    pub fn sweep_points(&self) -> Vec<ExperimentConfig> {
        self.sweep_points_unchecked()
    }
}
