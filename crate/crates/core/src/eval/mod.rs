//! Registration metrics, the random-perturbation benchmark and a synthetic
//! aerial/terrestrial scene generator.

mod bench;
mod scene;

pub use bench::{run_benchmark, BenchmarkReport, MeanErrors, TrialRecord, BENCH_SCHEMA};
pub use scene::{sample_scene, generate_scene, Building, Scene, SceneSpec};

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, RigidTransform, SpatialIndex};
use crate::error::{Error, Result};

/// Default neighbor radius (m) for overlap ratios.
pub const OVERLAP_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Degrees.
    pub e_r: f64,
    /// Meters.
    #[serde(with = "float_or_inf")]
    pub e_t: f64,
    /// Meters.
    #[serde(with = "float_or_inf")]
    pub rmsd: f64,
    pub success: bool,
}

/// JSON has no infinity; failure sentinels are written as the string
/// `"inf"`.
pub(crate) mod float_or_inf {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            Err(serde::ser::Error::custom("value must be finite or +inf"))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

impl MetricReport {
    /// Report recorded for a trial whose registration errored.
    pub fn failure() -> Self {
        Self {
            e_r: 180.0,
            e_t: f64::INFINITY,
            rmsd: f64::INFINITY,
            success: false,
        }
    }

    pub fn evaluate(
        source: &PointCloud,
        estimate: &RigidTransform,
        truth: &RigidTransform,
        sigma_r: f64,
        sigma_t: f64,
    ) -> Self {
        let (e_r, e_t) = rotation_translation_error(&residual_transform(estimate, truth));
        Self {
            e_r,
            e_t,
            rmsd: rmsd(source, estimate, truth),
            success: is_success(e_r, e_t, sigma_r, sigma_t),
        }
    }
}

fn is_success(e_r: f64, e_t: f64, sigma_r: f64, sigma_t: f64) -> bool {
    e_r < sigma_r && e_t < sigma_t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub trials: usize,
    /// Degrees.
    pub rot_range: [f64; 2],
    /// Meters.
    pub trans_range: [f64; 2],
    /// Degrees.
    pub sigma_r: f64,
    /// Meters.
    pub sigma_t: f64,
    pub rng_seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            rot_range: [0.0, 90.0],
            trans_range: [0.0, 100.0],
            sigma_r: 5.0,
            sigma_t: 2.0,
            rng_seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        for (name, [lo, hi]) in [("rot_range", self.rot_range), ("trans_range", self.trans_range)] {
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be a non-negative, ordered interval"
                )));
            }
        }
        if self.rot_range[1] > 180.0 {
            return Err(Error::InvalidParameter("rot_range exceeds 180 degrees".into()));
        }
        if !(self.sigma_r > 0.0 && self.sigma_t > 0.0) {
            return Err(Error::InvalidParameter("thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// `T_est · T_gt⁻¹`; identity when the estimate is exact.
pub fn residual_transform(estimate: &RigidTransform, truth: &RigidTransform) -> RigidTransform {
    estimate.compose(&truth.inverse())
}

/// Rotation error in degrees and translation error in meters.
pub fn rotation_translation_error(delta: &RigidTransform) -> (f64, f64) {
    let c = ((delta.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    (c.acos().to_degrees(), delta.translation.norm())
}

pub fn rmsd(source: &PointCloud, estimate: &RigidTransform, truth: &RigidTransform) -> f64 {
    if source.is_empty() {
        return 0.0;
    }
    let sum: f64 = source
        .iter()
        .map(|p| (estimate.apply(p) - truth.apply(p)).norm_squared())
        .sum();
    (sum / source.len() as f64).sqrt()
}

/// Fraction of reports with both errors strictly below the thresholds.
pub fn srr(reports: &[MetricReport], sigma_r: f64, sigma_t: f64) -> f64 {
    if reports.is_empty() {
        return 0.0;
    }
    let ok = reports
        .iter()
        .filter(|r| is_success(r.e_r, r.e_t, sigma_r, sigma_t))
        .count();
    ok as f64 / reports.len() as f64
}

/// Rotation about a uniform random axis by a uniform angle in `rot_range`,
/// translation along a uniform random direction with uniform magnitude in
/// `trans_range`.
pub fn sample_random_transform(cfg: &BenchmarkConfig, rng: &mut impl Rng) -> RigidTransform {
    let axis = Vector3::from(UnitSphere.sample(rng));
    let angle = uniform(rng, cfg.rot_range).to_radians();
    let dir = Vector3::from(UnitSphere.sample(rng));
    let mag = uniform(rng, cfg.trans_range);
    RigidTransform::from_axis_angle(axis, angle, dir * mag)
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Fractions of source and target points with a neighbor in the other cloud
/// within `radius`.
pub fn compute_overlap_ratio(source: &PointCloud, target: &PointCloud, radius: f64) -> (f64, f64) {
    fn frac(from: &PointCloud, to: &PointCloud, radius: f64) -> f64 {
        if from.is_empty() {
            return 0.0;
        }
        let Ok(index) = SpatialIndex::build(to) else {
            return 0.0;
        };
        let hits = from
            .points
            .par_iter()
            .filter(|p| index.has_neighbor_within(p, radius))
            .count();
        hits as f64 / from.len() as f64
    }
    (frac(source, target, radius), frac(target, source, radius))
}
