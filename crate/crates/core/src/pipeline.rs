//! End-to-end registration: ground alignment, BEV projection, 2D matching,
//! lifting and robust 3D estimation.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bev::{compute_resolution, dilate, downsample_max, enhance, rasterize, scale_cloud, BevRaster, GrayImage};
use crate::cloud::{voxel_downsample, PointCloud, RigidTransform};
use crate::error::{Error, Result, Stage, StageExt};
use crate::ground::{align_to_xoy, fit_ground_plane, RansacConfig};
use crate::lift::{lift_matches_snapped, HeightSource};
use crate::match2d::{match_pipeline_with_stats, Keypoint2, MatchPair, MatchSet, MatchStats, MatcherConfig};
use crate::solve::{icp_refine, robust_estimate, SolveConfig};

pub const REPORT_SCHEMA: &str = "mtpcr-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Density factor in the resolution formula.
    pub gamma: f64,
    pub ransac: RansacConfig,
    pub matcher: MatcherConfig,
    pub solve: SolveConfig,
    pub height_source: HeightSource,
    /// When off, both clouds are rasterized at one pixel per meter.
    pub use_resolution_scaling: bool,
    pub use_focus: bool,
    pub use_enhancement: bool,
    /// Dilation radius (working pixels) that closes holes before matching.
    pub fill_radius: usize,
    /// Neighborhood (m) searched for the height of a matched keypoint.
    pub snap_radius_m: f64,
    /// Record wall-clock stage timings in the report.
    pub record_timings: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            ransac: RansacConfig::default(),
            matcher: MatcherConfig::default(),
            solve: SolveConfig::default(),
            height_source: HeightSource::Grid,
            use_resolution_scaling: true,
            use_focus: true,
            use_enhancement: true,
            fill_radius: 2,
            snap_radius_m: 1.5,
            record_timings: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter("gamma must be positive".into()));
        }
        if !(self.snap_radius_m >= 0.0 && self.snap_radius_m.is_finite()) {
            return Err(Error::InvalidParameter("snap_radius_m must be >= 0".into()));
        }
        self.ransac.validate()?;
        self.matcher.validate()?;
        self.solve.validate()
    }

    /// Sets every random seed from one value.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.ransac.rng_seed = seed;
        self.solve.rng_seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundReport {
    pub normal: [f64; 3],
    pub d: f64,
    pub inliers: usize,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterReport {
    /// Pixels per meter.
    pub res: f64,
    pub width: usize,
    pub height: usize,
    pub occupied: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReports {
    pub ground_source: GroundReport,
    pub ground_target: GroundReport,
    pub raster_source: RasterReport,
    pub raster_target: RasterReport,
    /// Pixels per meter of the common matching scale.
    pub working_res: f64,
    pub matching: MatchStats,
    pub correspondences: usize,
    pub robust_inlier_counts: Vec<usize>,
    pub robust_rms: f64,
    pub icp_iterations: usize,
    pub icp_initial_mean: Option<f64>,
    pub icp_final_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub schema: String,
    /// Maps the original source frame onto the original target frame.
    pub transform: RigidTransform,
    pub stages: StageReports,
}

impl RegistrationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One cloud after alignment and rasterization.
#[derive(Debug, Clone)]
pub struct PreparedCloud {
    pub aligned: PointCloud,
    pub alignment: RigidTransform,
    pub ground: GroundReport,
    pub raster: BevRaster,
}

pub fn prepare_cloud(cloud: &PointCloud, cfg: &PipelineConfig) -> Result<PreparedCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud).stage(Stage::GroundAlign);
    }
    let (plane, inliers) = fit_ground_plane(cloud, &cfg.ransac).stage(Stage::GroundAlign)?;
    let (aligned, alignment) = align_to_xoy(cloud, &plane);
    let res = if cfg.use_resolution_scaling {
        compute_resolution(&aligned, cfg.gamma).stage(Stage::Resolution)?
    } else {
        1.0
    };
    let raster = rasterize(&scale_cloud(&aligned, res), res).stage(Stage::Rasterize)?;
    Ok(PreparedCloud {
        aligned,
        alignment,
        ground: GroundReport {
            normal: plane.normal.into(),
            d: plane.d,
            inliers,
            points: cloud.len(),
        },
        raster,
    })
}

/// Resamples a raster to `working_res` pixels per meter, closes holes and
/// optionally enhances it. Returns the image and the shrink factor.
pub fn working_image(raster: &BevRaster, working_res: f64, cfg: &PipelineConfig) -> (GrayImage, f64) {
    let factor = (raster.res / working_res).max(1.0);
    let img = dilate(&downsample_max(&raster.gray, factor), cfg.fill_radius);
    let img = if cfg.use_enhancement { enhance(&img) } else { img };
    (img, factor)
}

/// Maps a working-image keypoint back to raster pixel coordinates.
pub fn to_raster(kp: &Keypoint2, factor: f64, raster: &BevRaster) -> Keypoint2 {
    let map = |x: f64, n: usize| ((x + 0.5) * factor - 0.5).clamp(0.0, (n - 1) as f64);
    Keypoint2::new(map(kp.u, raster.width), map(kp.v, raster.height), kp.score)
}

struct Clock {
    enabled: bool,
    last: Instant,
    laps: BTreeMap<String, f64>,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            last: Instant::now(),
            laps: BTreeMap::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.laps
            .insert(name.to_string(), (now - self.last).as_secs_f64() * 1e3);
        self.last = now;
    }

    fn finish(self) -> Option<BTreeMap<String, f64>> {
        self.enabled.then_some(self.laps)
    }
}

/// Registers `source` onto `target`. The returned transform maps source
/// coordinates into the target frame.
pub fn register(
    source: &PointCloud,
    target: &PointCloud,
    cfg: &PipelineConfig,
) -> Result<(RigidTransform, RegistrationReport)> {
    cfg.validate()?;
    let mut clock = Clock::new(cfg.record_timings);
    let (src, tgt) = rayon::join(|| prepare_cloud(source, cfg), || prepare_cloud(target, cfg));
    let (src, tgt) = (src?, tgt?);
    clock.lap("prepare");

    let working_res = src.raster.res.min(tgt.raster.res);
    let (work_s, fs) = working_image(&src.raster, working_res, cfg);
    let (work_t, ft) = working_image(&tgt.raster, working_res, cfg);
    let (ms_work, stats) =
        match_pipeline_with_stats(&work_s, &work_t, &cfg.matcher, cfg.use_focus).stage(Stage::Match)?;
    let ms = MatchSet {
        pairs: ms_work
            .pairs
            .iter()
            .map(|p| MatchPair {
                a: to_raster(&p.a, fs, &src.raster),
                b: to_raster(&p.b, ft, &tgt.raster),
                confidence: p.confidence,
            })
            .collect(),
    };
    clock.lap("match");

    let cs = lift_matches_snapped(&ms, &src.raster, &tgt.raster, cfg.height_source, cfg.snap_radius_m)
        .stage(Stage::Lift)?;
    let (coarse, robust) = robust_estimate(&cs, &cfg.solve).stage(Stage::RobustEstimate)?;
    clock.lap("estimate");

    let icp_source = downsample(&src.aligned, cfg.solve.icp_source_voxel).stage(Stage::Icp)?;
    let icp_target = downsample(&tgt.aligned, cfg.solve.icp_target_voxel).stage(Stage::Icp)?;
    let (refined, icp) = icp_refine(&icp_source, &icp_target, &coarse, &cfg.solve).stage(Stage::Icp)?;
    clock.lap("icp");

    let transform = tgt
        .alignment
        .inverse()
        .compose(&refined.compose(&src.alignment));
    let raster_report = |p: &PreparedCloud| RasterReport {
        res: p.raster.res,
        width: p.raster.width,
        height: p.raster.height,
        occupied: p.raster.occupied_count(),
    };
    let report = RegistrationReport {
        schema: REPORT_SCHEMA.to_string(),
        transform,
        stages: StageReports {
            ground_source: src.ground.clone(),
            ground_target: tgt.ground.clone(),
            raster_source: raster_report(&src),
            raster_target: raster_report(&tgt),
            working_res,
            matching: stats,
            correspondences: cs.len(),
            robust_inlier_counts: robust.inlier_counts,
            robust_rms: robust.final_rms,
            icp_iterations: icp.icp_iterations,
            icp_initial_mean: icp.icp_initial_mean,
            icp_final_mean: icp.icp_final_mean,
            timings_ms: clock.finish(),
        },
    };
    Ok((transform, report))
}

fn downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if voxel > 0.0 {
        voxel_downsample(cloud, voxel)
    } else {
        Ok(cloud.clone())
    }
}
