//! RANSAC ground-plane extraction and gravity alignment.
//!
//! The ground is the consensus plane with the most inliers, preferring planes
//! that have almost all remaining points on one side (terrain with structures
//! standing on it). Facades separate points on both sides and lose to the
//! ground even when the cloud has been tilted far from its capture pose.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{apply_transform, Point3, PointCloud, RigidTransform};
use crate::error::{Error, Result};

/// Plane `{p : normal·p + d = 0}` with a unit, upward-canonical normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub d: f64,
}

impl Plane {
    /// Normalizes `normal` and flips the plane so that `normal.z >= 0`.
    pub fn new(normal: Vector3<f64>, d: f64) -> Self {
        let len = normal.norm();
        let (mut n, mut d) = (normal / len, d / len);
        if n.z < 0.0 {
            n = -n;
            d = -d;
        }
        Plane { normal: n, d }
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&p.coords) + self.d
    }

    fn through(a: &Point3, b: &Point3, c: &Point3) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        let scale = (b - a).norm() * (c - a).norm();
        if !(len > 1e-9 * scale) {
            return None;
        }
        Some(Plane::new(n, -n.dot(&a.coords)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub iterations: usize,
    pub inlier_threshold: f64,
    pub min_inlier_fraction: f64,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            inlier_threshold: 0.2,
            min_inlier_fraction: 0.15,
            rng_seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidParameter("ransac iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidParameter(
                "ransac inlier threshold must be positive".into(),
            ));
        }
        if !(self.min_inlier_fraction > 0.0 && self.min_inlier_fraction <= 1.0) {
            return Err(Error::InvalidParameter(
                "min inlier fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Hypotheses are scored on at most this many points.
const SCORE_SAMPLE: usize = 20_000;
/// A plane is one-sided when at most this fraction of its off-plane points
/// lie on the minority side.
const ONE_SIDED_MINORITY: f64 = 0.2;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    plane: Plane,
    inliers: usize,
    one_sided: bool,
    iteration: usize,
}

impl Candidate {
    /// Total order used to pick the winner; independent of evaluation order.
    fn key(&self) -> (bool, usize, std::cmp::Reverse<usize>) {
        (self.one_sided, self.inliers, std::cmp::Reverse(self.iteration))
    }
}

fn score(plane: Plane, points: &[Point3], threshold: f64, iteration: usize) -> Candidate {
    let (mut inliers, mut above, mut below) = (0usize, 0usize, 0usize);
    for p in points {
        let s = plane.signed_distance(p);
        if s.abs() <= threshold {
            inliers += 1;
        } else if s > 0.0 {
            above += 1;
        } else {
            below += 1;
        }
    }
    let off = above + below;
    Candidate {
        plane,
        inliers,
        one_sided: off == 0 || (above.min(below) as f64) <= ONE_SIDED_MINORITY * off as f64,
        iteration,
    }
}

/// Total-least-squares plane through `points`.
fn refit(points: &[Point3]) -> Option<Plane> {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let normal: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
    if !normal.iter().all(|c| c.is_finite()) {
        return None;
    }
    Some(Plane::new(normal, -normal.dot(&centroid)))
}

/// Fits the ground plane and returns it with its inlier count over the full cloud.
pub fn fit_ground_plane(cloud: &PointCloud, cfg: &RansacConfig) -> Result<(Plane, usize)> {
    cfg.validate()?;
    let pts = &cloud.points;
    let n = pts.len();
    if n < 3 {
        return Err(Error::InsufficientPoints(n));
    }
    let required = ((cfg.min_inlier_fraction * n as f64).ceil() as usize).max(3);

    // Deterministic scoring subset: a fixed stride over the cloud.
    let eval: Vec<Point3> = if n > SCORE_SAMPLE {
        let step = n as f64 / SCORE_SAMPLE as f64;
        (0..SCORE_SAMPLE)
            .map(|k| pts[(k as f64 * step) as usize])
            .collect()
    } else {
        pts.clone()
    };
    let eval_required = cfg.min_inlier_fraction * eval.len() as f64;

    let best = (0..cfg.iterations)
        .into_par_iter()
        .filter_map(|it| {
            // Per-iteration substream: results do not depend on scheduling.
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(it as u64);
            let mut idx = [0usize; 3];
            for k in 0..3 {
                idx[k] = loop {
                    let i = rng.gen_range(0..n);
                    if !idx[..k].contains(&i) {
                        break i;
                    }
                };
            }
            let plane = Plane::through(&pts[idx[0]], &pts[idx[1]], &pts[idx[2]])?;
            let c = score(plane, &eval, cfg.inlier_threshold, it);
            (c.inliers as f64 >= eval_required).then_some(c)
        })
        .max_by_key(Candidate::key);

    let Some(best) = best else {
        return Err(Error::NoConsensus { best: 0, required });
    };

    let inliers: Vec<Point3> = pts
        .iter()
        .filter(|p| best.plane.signed_distance(p).abs() <= cfg.inlier_threshold)
        .copied()
        .collect();
    let plane = if inliers.len() >= 3 {
        refit(&inliers).unwrap_or(best.plane)
    } else {
        best.plane
    };
    let count = pts
        .iter()
        .filter(|p| plane.signed_distance(p).abs() <= cfg.inlier_threshold)
        .count();
    if count < required {
        return Err(Error::NoConsensus {
            best: count,
            required,
        });
    }
    Ok((plane, count))
}

/// Minimal rotation taking the unit vector `n` onto `+z`.
///
/// Antiparallel input rotates 180° about `+x`.
pub fn rotation_to_z(n: &Vector3<f64>) -> Matrix3<f64> {
    let n = n.normalize();
    let ez = Vector3::z();
    let axis = n.cross(&ez);
    let s = axis.norm();
    let c = n.dot(&ez);
    if (n + ez).norm() <= 1e-9 {
        return Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    }
    if s == 0.0 {
        return Matrix3::identity();
    }
    // Rodrigues with k = axis / s: R = I + s[k]× + (1 − c)[k]×²
    let k = axis / s;
    let kx = k.cross_matrix();
    Matrix3::identity() + kx * s + kx * kx * (1.0 - c)
}

/// Rotates `cloud` so that `plane` becomes parallel to the XOY plane.
pub fn align_to_xoy(cloud: &PointCloud, plane: &Plane) -> (PointCloud, RigidTransform) {
    let canonical = Plane::new(plane.normal, plane.d);
    let t = RigidTransform::from_rotation(rotation_to_z(&canonical.normal));
    (apply_transform(cloud, &t), t)
}
