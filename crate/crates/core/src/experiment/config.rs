use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::SurrogateSettings;
use crate::error::{Error, Result};
use crate::flow::MediumSpec;
use crate::learning::{ModelKind, OptimizerSettings};
use crate::particles::TrackingConfig;

pub const SCHEMA: &str = "nlk.experiment.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Nonlocal,
    Fractal,
    Classical,
    Mlp,
}

impl ModelName {
    pub const ALL: [ModelName; 4] = [Self::Nonlocal, Self::Fractal, Self::Classical, Self::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Nonlocal => "nonlocal",
            Self::Fractal => "fractal",
            Self::Classical => "classical",
            Self::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown model {s:?}; expected nonlocal, fractal, classical or mlp")))
    }

    /// PDE models share the L-BFGS learner; the surrogate does not.
    pub fn kind(self) -> Option<ModelKind> {
        match self {
            Self::Nonlocal => Some(ModelKind::Nonlocal),
            Self::Fractal => Some(ModelKind::Fractal),
            Self::Classical => Some(ModelKind::Classical),
            Self::Mlp => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSettings {
    pub grid_nx: usize,
    pub grid_ny: usize,
    /// Resolution of the single-cell problem behind the homogenized speed.
    pub unit_cell_nx: usize,
    pub unit_cell_ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSettings {
    pub injection_cell: usize,
    pub num_particles: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Particles traced per batch; bounds memory, not results.
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
}

fn default_chunk() -> usize {
    4096
}

/// Speed of the moving frame `x_d = x - v t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSource {
    /// Least-squares slope of the ensemble mean position.
    Measured,
    /// Homogenized unit-cell speed rescaled to the head drop per cell.
    Homogenized,
    /// `h0 / (N kappa_bar_x)` as written.
    Nominal,
    /// `coarse.frame_speed`.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseSettings {
    /// Smoothing window `m` in unit cells.
    pub window: usize,
    pub frame: FrameSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_speed: Option<f64>,
    /// Histogram resolution of the fine density.
    pub bins_per_cell: usize,
    pub ny_bins: usize,
    /// Snapshot times exported as density profiles.
    #[serde(default)]
    pub profile_times: Vec<f64>,
    /// Probe x-coordinates in the moving frame.
    pub training_locations: Vec<f64>,
    pub evaluation_locations: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSource {
    /// Coarse data profile at `t = 0`.
    Data,
    /// Unit value in the injection cell.
    Spike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningSettings {
    /// End of the training window `T_t`.
    pub tt: f64,
    pub models: Vec<ModelName>,
    pub beta: f64,
    pub horizon_cells: usize,
    pub initial: InitialSource,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub surrogate: SurrogateSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    #[serde(default)]
    pub tt: Vec<f64>,
    #[serde(default)]
    pub location_sets: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub medium: MediumSpec,
    pub flow: FlowSettings,
    pub tracking: TrackingSettings,
    pub coarse: CoarseSettings,
    pub learning: LearningSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
}

/// Command-line replacements applied after loading.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tt: Option<f64>,
    pub models: Option<Vec<ModelName>>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; a relative `output_dir` is resolved
    /// against the working directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match Error::io(path, e) {
            Error::MissingArtifact(p) => Error::config(format!("config file {} not found", p.display())),
            other => other,
        })?;
        Self::from_toml(&text)
    }

    pub fn apply(mut self, o: &Overrides) -> Result<Self> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(tt) = o.tt {
            self.learning.tt = tt;
        }
        if let Some(models) = &o.models {
            self.learning.models = models.clone();
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialization cannot fail")
    }

    /// SHA-256 of the canonical serialization, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        sha256_json(&canonical)
    }

    /// Hash of the sections that determine the generated data; fits and
    /// reports refuse datasets whose hash differs.
    pub fn data_hash(&self) -> String {
        #[derive(Serialize)]
        struct DataSections<'a> {
            schema: &'a str,
            seed: u64,
            medium: &'a MediumSpec,
            flow: &'a FlowSettings,
            tracking: &'a TrackingSettings,
            coarse: &'a CoarseSettings,
            sweep_locations: &'a [Vec<f64>],
        }
        sha256_json(&DataSections {
            schema: &self.schema,
            seed: self.seed,
            medium: &self.medium,
            flow: &self.flow,
            tracking: &self.tracking,
            coarse: &self.coarse,
            sweep_locations: &self.sweep.location_sets,
        })
    }

    /// Every probe location the dataset must cover, in first-seen order.
    pub fn all_locations(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        let sets = [&self.coarse.training_locations, &self.coarse.evaluation_locations];
        for &x in sets.into_iter().flatten().chain(self.sweep.location_sets.iter().flatten()) {
            if !out.contains(&x) {
                out.push(x);
            }
        }
        out
    }

    pub fn tracking_config(&self) -> TrackingConfig {
        TrackingConfig {
            injection_cell: self.tracking.injection_cell,
            num_particles: self.tracking.num_particles,
            dt: self.tracking.dt,
            t_end: self.tracking.t_end,
            rng_seed: self.seed,
        }
    }

    /// Index of the last training sample, `floor(T_t / dt)`.
    pub fn training_steps(&self) -> usize {
        training_steps(self.learning.tt, self.tracking.dt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::config(format!("schema {:?} is not supported; expected {SCHEMA:?}", self.schema)));
        }
        self.medium.validate()?;
        let n = self.medium.num_cells;
        let f = &self.flow;
        if f.grid_nx == 0 || f.grid_nx % n != 0 {
            return Err(Error::config(format!("flow.grid_nx = {} must be a positive multiple of {n}", f.grid_nx)));
        }
        if f.grid_ny < 2 || f.unit_cell_nx == 0 || f.unit_cell_ny < 2 {
            return Err(Error::config("flow grids need at least one column and two rows"));
        }
        self.tracking_config().validate(n)?;
        if self.tracking.chunk_size == 0 {
            return Err(Error::config("tracking.chunk_size must be positive"));
        }
        let c = &self.coarse;
        if c.window == 0 || c.window > n {
            return Err(Error::config(format!("coarse.window must lie in 1..={n}")));
        }
        if c.bins_per_cell == 0 || c.ny_bins == 0 {
            return Err(Error::config("density bins must be positive"));
        }
        match (c.frame, c.frame_speed) {
            (FrameSource::Fixed, Some(v)) if v >= 0.0 && v.is_finite() => {}
            (FrameSource::Fixed, _) => return Err(Error::config("frame = \"fixed\" needs a nonnegative frame_speed")),
            (_, Some(_)) => return Err(Error::config("frame_speed is only used with frame = \"fixed\"")),
            _ => {}
        }
        if c.profile_times.iter().any(|t| !(*t >= 0.0 && *t <= self.tracking.t_end)) {
            return Err(Error::config("profile_times must lie in [0, t_end]"));
        }
        if c.training_locations.is_empty() {
            return Err(Error::config("at least one training location is required"));
        }
        self.check_locations(&c.training_locations)?;
        self.check_locations(&c.evaluation_locations)?;
        for set in &self.sweep.location_sets {
            if set.is_empty() {
                return Err(Error::config("sweep location sets must not be empty"));
            }
            self.check_locations(set)?;
        }
        let l = &self.learning;
        self.check_tt(l.tt)?;
        for &tt in &self.sweep.tt {
            self.check_tt(tt)?;
        }
        if l.models.is_empty() {
            return Err(Error::config("learning.models must name at least one model"));
        }
        if !(l.beta >= 0.0 && l.beta.is_finite()) {
            return Err(Error::config("learning.beta must be finite and nonnegative"));
        }
        if l.horizon_cells == 0 || n <= 2 * l.horizon_cells {
            return Err(Error::config(format!("learning.horizon_cells must lie in 1..{}", n.div_ceil(2))));
        }
        Ok(())
    }

    fn check_tt(&self, tt: f64) -> Result<()> {
        if !(tt < self.tracking.t_end) {
            return Err(Error::config(format!("T_t = {tt} must be below t_end = {}", self.tracking.t_end)));
        }
        if training_steps(tt, self.tracking.dt) == 0 {
            return Err(Error::config(format!("T_t = {tt} leaves an empty training window")));
        }
        Ok(())
    }

    fn check_locations(&self, xs: &[f64]) -> Result<()> {
        let l = self.medium.length();
        if let Some(x) = xs.iter().find(|x| !(**x > 0.0 && **x < l)) {
            return Err(Error::config(format!("probe location {x} outside (0, {l})")));
        }
        Ok(())
    }
}

fn sha256_json<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("config serialization cannot fail");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn training_steps(tt: f64, dt: f64) -> usize {
    if tt > 0.0 {
        (tt / dt + 1e-9).floor() as usize
    } else {
        0
    }
}
