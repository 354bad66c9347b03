//! Run configuration: defaults, overlaid by a JSON file, overlaid by flags.

use std::path::Path;

use mtpcr::eval::{BenchmarkConfig, SceneSpec};
use mtpcr::match2d::MatcherBackend;
use mtpcr::pipeline::PipelineConfig;
use mtpcr::{Error, Result};
use serde::{Deserialize, Serialize};

/// Every tunable of the pipeline, the benchmark and the scene generator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub benchmark: BenchmarkConfig,
    pub scene: SceneSpec,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.benchmark.validate()?;
        self.scene.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Values given on the command line; `None` leaves the lower layer alone.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON file with any subset of the run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    /// Seed for every random choice (RANSAC, consensus, trials, scenes).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Density factor of the resolution formula.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Overlap fraction below which FOCUS re-matching runs.
    #[arg(long, global = true, value_name = "THETA")]
    pub focus_threshold: Option<f64>,
    /// Rotation success threshold in degrees.
    #[arg(long, global = true, value_name = "DEG")]
    pub sigma_r: Option<f64>,
    /// Translation success threshold in meters.
    #[arg(long, global = true, value_name = "M")]
    pub sigma_t: Option<f64>,
    /// External matcher command with {imgA}, {imgB} and {out} placeholders.
    #[arg(long, global = true, value_name = "CMD")]
    pub matcher_cmd: Option<String>,
    /// Rasterize both clouds at one pixel per meter.
    #[arg(long, global = true)]
    pub no_resolution_scaling: bool,
    #[arg(long, global = true)]
    pub no_focus: bool,
    /// Skip the sharpening filters (for `bev`, emit only the raw image).
    #[arg(long, global = true)]
    pub no_enhance: bool,
}

impl Overrides {
    /// Defaults, then the config file, then flags; validated.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.pipeline = cfg.pipeline.clone().with_seed(seed);
            cfg.benchmark.rng_seed = seed;
            cfg.scene.rng_seed = seed;
        }
        if let Some(g) = self.gamma {
            cfg.pipeline.gamma = g;
        }
        if let Some(t) = self.focus_threshold {
            cfg.pipeline.matcher.focus_threshold = t;
        }
        if let Some(s) = self.sigma_r {
            cfg.benchmark.sigma_r = s;
        }
        if let Some(s) = self.sigma_t {
            cfg.benchmark.sigma_t = s;
        }
        if let Some(cmd) = &self.matcher_cmd {
            cfg.pipeline.matcher.backend = MatcherBackend::External { command: cmd.clone() };
        }
        if self.no_resolution_scaling {
            cfg.pipeline.use_resolution_scaling = false;
        }
        if self.no_focus {
            cfg.pipeline.use_focus = false;
        }
        if self.no_enhance {
            cfg.pipeline.use_enhancement = false;
        }
    }
}
