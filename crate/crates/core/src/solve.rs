//! Rigid transform estimation: weighted Kabsch, iterative SVD outlier
//! rejection and point-to-point ICP refinement.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud, RigidTransform, SpatialIndex};
use crate::error::{Error, Result};
use crate::lift::{Correspondence3D, CorrespondenceSet};

pub use crate::pipeline::{register, RegistrationReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub max_reject_iters: usize,
    pub residual_multiplier: f64,
    /// Meters; the rejection threshold never drops below this.
    pub min_abs_residual: f64,
    /// Minimal-sample hypotheses tried before rejection starts; 0 disables.
    pub consensus_iters: usize,
    /// Meters; residual under which a pair supports a hypothesis.
    pub consensus_threshold: f64,
    pub rng_seed: u64,
    pub icp_max_iters: usize,
    pub icp_max_corr_dist: f64,
    pub icp_convergence_eps_m: f64,
    pub icp_convergence_eps_deg: f64,
    /// Voxel size (m) for the ICP target; 0 keeps the full cloud.
    pub icp_target_voxel: f64,
    /// Voxel size (m) for the ICP source; 0 keeps the full cloud.
    pub icp_source_voxel: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_reject_iters: 10,
            residual_multiplier: 3.0,
            min_abs_residual: 1.0,
            consensus_iters: 4000,
            consensus_threshold: 2.0,
            rng_seed: 0,
            icp_max_iters: 50,
            icp_max_corr_dist: 2.0,
            icp_convergence_eps_m: 1e-3,
            icp_convergence_eps_deg: 1e-3,
            icp_target_voxel: 0.5,
            icp_source_voxel: 1.0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("residual_multiplier", self.residual_multiplier),
            ("min_abs_residual", self.min_abs_residual),
            ("consensus_threshold", self.consensus_threshold),
            ("icp_max_corr_dist", self.icp_max_corr_dist),
            ("icp_convergence_eps_m", self.icp_convergence_eps_m),
            ("icp_convergence_eps_deg", self.icp_convergence_eps_deg),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if self.max_reject_iters < 1 || self.icp_max_iters < 1 {
            return Err(Error::InvalidParameter(
                "iteration counts must be at least 1".into(),
            ));
        }
        if self.icp_target_voxel < 0.0 || self.icp_source_voxel < 0.0 {
            return Err(Error::InvalidParameter("voxel sizes must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Inlier count after consensus and after each rejection pass.
    pub inlier_counts: Vec<usize>,
    /// RMS residual (m) over the final inliers or ICP pairs.
    pub final_rms: f64,
    pub icp_iterations: usize,
    /// Mean matched-pair distance (m) before and after ICP.
    pub icp_initial_mean: Option<f64>,
    pub icp_final_mean: Option<f64>,
}

/// Least-squares rigid transform taking `source[k]` onto `target[k]`,
/// weighted by `weights`.
fn kabsch_weighted(source: &[Point3], target: &[Point3], weights: &[f64]) -> Result<RigidTransform> {
    let n = source.len();
    if n < 3 {
        return Err(Error::TooFewCorrespondences(n));
    }
    let uniform = !weights.iter().all(|w| w.is_finite() && *w >= 0.0)
        || weights.iter().sum::<f64>() <= 0.0;
    let w = |k: usize| if uniform { 1.0 } else { weights[k] };
    let wsum: f64 = (0..n).map(w).sum();

    let mut cs = Vector3::zeros();
    let mut ct = Vector3::zeros();
    for k in 0..n {
        cs += source[k].coords * w(k);
        ct += target[k].coords * w(k);
    }
    cs /= wsum;
    ct /= wsum;

    let mut h = Matrix3::zeros();
    for k in 0..n {
        h += (source[k].coords - cs) * (target[k].coords - ct).transpose() * w(k);
    }
    let svd = h.svd(true, true);
    let mut sv = svd.singular_values;
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] < 1e-9 * sv[0] {
        return Err(Error::DegenerateConfiguration);
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let mut correction = Matrix3::identity();
    correction[(2, 2)] = d;
    let r = v * correction * u.transpose();
    Ok(RigidTransform::new(r, ct - r * cs))
}

fn split(pairs: &[Correspondence3D]) -> (Vec<Point3>, Vec<Point3>, Vec<f64>) {
    let mut s = Vec::with_capacity(pairs.len());
    let mut t = Vec::with_capacity(pairs.len());
    let mut w = Vec::with_capacity(pairs.len());
    for c in pairs {
        s.push(c.source);
        t.push(c.target);
        w.push(c.confidence);
    }
    (s, t, w)
}

/// Confidence-weighted SVD alignment of source onto target points.
pub fn kabsch(cs: &CorrespondenceSet) -> Result<RigidTransform> {
    let (s, t, w) = split(&cs.pairs);
    kabsch_weighted(&s, &t, &w)
}

fn residual(t: &RigidTransform, c: &Correspondence3D) -> f64 {
    (t.apply(&c.source) - c.target).norm()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Best-supported transform from three-pair samples; returns the indices of
/// its supporting pairs.
fn consensus(pairs: &[Correspondence3D], cfg: &SolveConfig) -> Vec<usize> {
    let n = pairs.len();
    let best = (0..cfg.consensus_iters)
        .into_par_iter()
        .filter_map(|it| {
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
            let s: Vec<Point3> = idx.iter().map(|&i| pairs[i].source).collect();
            let t: Vec<Point3> = idx.iter().map(|&i| pairs[i].target).collect();
            let model = kabsch_weighted(&s, &t, &[1.0; 3]).ok()?;
            let mut support = 0usize;
            let mut cost = 0.0;
            for c in pairs {
                let r = residual(&model, c);
                if r <= cfg.consensus_threshold {
                    support += 1;
                    cost += r;
                }
            }
            Some((support, cost, it, model))
        })
        .max_by(|a, b| {
            a.0.cmp(&b.0)
                .then(b.1.total_cmp(&a.1))
                .then(b.2.cmp(&a.2))
        });
    match best {
        Some((_, _, _, model)) => (0..n)
            .filter(|&i| residual(&model, &pairs[i]) <= cfg.consensus_threshold)
            .collect(),
        None => Vec::new(),
    }
}

/// Iterative SVD with median-scaled residual rejection, seeded by a
/// minimal-sample consensus search when `cfg.consensus_iters > 0`.
pub fn robust_estimate(
    cs: &CorrespondenceSet,
    cfg: &SolveConfig,
) -> Result<(RigidTransform, SolveDiagnostics)> {
    cfg.validate()?;
    let pairs = &cs.pairs;
    if pairs.len() < 3 {
        return Err(Error::TooFewCorrespondences(pairs.len()));
    }
    let mut diag = SolveDiagnostics::default();
    let mut inliers: Vec<usize> = if cfg.consensus_iters > 0 {
        let seed = consensus(pairs, cfg);
        if seed.len() < 3 {
            return Err(Error::ConvergenceFailed);
        }
        seed
    } else {
        (0..pairs.len()).collect()
    };
    diag.inlier_counts.push(inliers.len());

    let subset = |idx: &[usize]| -> Vec<Correspondence3D> { idx.iter().map(|&i| pairs[i]).collect() };
    for _ in 0..cfg.max_reject_iters {
        let (s, t, w) = split(&subset(&inliers));
        let model = kabsch_weighted(&s, &t, &w)?;
        let mut res: Vec<f64> = inliers.iter().map(|&i| residual(&model, &pairs[i])).collect();
        let threshold = cfg
            .min_abs_residual
            .max(cfg.residual_multiplier * median(&mut res.clone()));
        let kept: Vec<usize> = inliers
            .iter()
            .zip(res.iter_mut())
            .filter(|(_, r)| **r <= threshold)
            .map(|(&i, _)| i)
            .collect();
        if kept.len() == inliers.len() {
            break;
        }
        if kept.len() < 3 {
            return Err(Error::ConvergenceFailed);
        }
        inliers = kept;
        diag.inlier_counts.push(inliers.len());
    }

    let final_set = subset(&inliers);
    let (s, t, w) = split(&final_set);
    let model = kabsch_weighted(&s, &t, &w)?;
    let sq: f64 = final_set.iter().map(|c| residual(&model, c).powi(2)).sum();
    diag.final_rms = (sq / final_set.len() as f64).sqrt();
    Ok((model, diag))
}

struct Matching {
    source: Vec<Point3>,
    target: Vec<Point3>,
    mean: f64,
    sum_sq: f64,
}

fn match_nearest(
    source: &[Point3],
    index: &SpatialIndex,
    t: &RigidTransform,
    max_dist: f64,
) -> Matching {
    let found: Vec<Option<(Point3, Point3, f64)>> = source
        .par_iter()
        .map(|p| {
            let q = t.apply(p);
            index
                .nearest_within(&q, max_dist)
                .map(|(i, d2)| (*p, index.points()[i], d2))
        })
        .collect();
    // Sequential reduction keeps the sums independent of thread scheduling.
    let mut m = Matching {
        source: Vec::new(),
        target: Vec::new(),
        mean: f64::INFINITY,
        sum_sq: 0.0,
    };
    let mut sum = 0.0;
    for (p, q, d2) in found.into_iter().flatten() {
        m.source.push(p);
        m.target.push(q);
        sum += d2.sqrt();
        m.sum_sq += d2;
    }
    if !m.source.is_empty() {
        m.mean = sum / m.source.len() as f64;
    }
    m
}

/// Point-to-point ICP from `initial`; never returns a transform whose mean
/// matched-pair distance exceeds that of `initial`.
pub fn icp_refine(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    cfg: &SolveConfig,
) -> Result<(RigidTransform, SolveDiagnostics)> {
    cfg.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = SpatialIndex::build(target)?;
    icp_with_index(&source.points, &index, initial, cfg)
}

pub(crate) fn icp_with_index(
    source: &[Point3],
    index: &SpatialIndex,
    initial: &RigidTransform,
    cfg: &SolveConfig,
) -> Result<(RigidTransform, SolveDiagnostics)> {
    let mut current = *initial;
    let mut m = match_nearest(source, index, &current, cfg.icp_max_corr_dist);
    if m.source.is_empty() {
        return Err(Error::NoCorrespondencesInRange(cfg.icp_max_corr_dist));
    }
    let mut diag = SolveDiagnostics {
        icp_initial_mean: Some(m.mean),
        ..Default::default()
    };
    let mut best = (current, m.mean, m.sum_sq / m.source.len() as f64);

    for it in 0..cfg.icp_max_iters {
        diag.icp_iterations = it + 1;
        let ones = vec![1.0; m.source.len()];
        let Ok(next) = kabsch_weighted(&m.source, &m.target, &ones) else {
            break;
        };
        let delta = next.compose(&current.inverse());
        current = next;
        m = match_nearest(source, index, &current, cfg.icp_max_corr_dist);
        if m.source.is_empty() {
            break;
        }
        if m.mean < best.1 {
            best = (current, m.mean, m.sum_sq / m.source.len() as f64);
        }
        if delta.translation.norm() < cfg.icp_convergence_eps_m
            && delta.rotation_angle().to_degrees() < cfg.icp_convergence_eps_deg
        {
            break;
        }
    }
    diag.icp_final_mean = Some(best.1);
    diag.final_rms = best.2.sqrt();
    Ok((best.0, diag))
}
