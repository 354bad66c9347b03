//! Random-perturbation benchmark over one cloud pair.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_random_transform, srr, BenchmarkConfig, MetricReport};
use crate::cloud::{apply_transform, PointCloud, RigidTransform};
use crate::error::{Error, Result};
use crate::pipeline::{register, PipelineConfig};

pub const BENCH_SCHEMA: &str = "mtpcr-bench/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Transform applied to the source before registration.
    pub perturbation: RigidTransform,
    /// Degrees.
    pub perturbation_angle: f64,
    /// Meters.
    pub perturbation_distance: f64,
    pub metrics: MetricReport,
    /// Pipeline error message when the trial failed to register.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    /// Wall-clock seconds, present only when the pipeline records timings.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seconds: Option<f64>,
}

/// Means over a subset of trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanErrors {
    pub trials: usize,
    /// Degrees.
    pub e_r: f64,
    /// Meters.
    #[serde(with = "super::float_or_inf")]
    pub e_t: f64,
    /// Meters.
    #[serde(with = "super::float_or_inf")]
    pub rmsd: f64,
}

impl MeanErrors {
    fn over<'a>(reports: impl Iterator<Item = &'a MetricReport>) -> Option<Self> {
        let (mut n, mut r, mut t, mut d) = (0usize, 0.0, 0.0, 0.0);
        for m in reports {
            n += 1;
            r += m.e_r;
            t += m.e_t;
            d += m.rmsd;
        }
        (n > 0).then(|| {
            let k = n as f64;
            Self {
                trials: n,
                e_r: r / k,
                e_t: t / k,
                rmsd: d / k,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema: String,
    pub config: BenchmarkConfig,
    pub successes: usize,
    pub srr: f64,
    /// Means over every trial, failures entering with their sentinels
    /// (180°, infinite translation and RMSD).
    pub mean_all: MeanErrors,
    /// Means over successful trials only; absent when none succeeded.
    pub mean_successful: Option<MeanErrors>,
    /// Means over trials whose registration returned a transform, whether
    /// or not it met the thresholds.
    pub mean_completed: Option<MeanErrors>,
    pub records: Vec<TrialRecord>,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-trial rows: `trial,e_r_deg,e_t_m,rmsd_m,success`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,e_r_deg,e_t_m,rmsd_m,success\n");
        for r in &self.records {
            let m = &r.metrics;
            out += &format!("{},{},{},{},{}\n", r.trial, m.e_r, m.e_t, m.rmsd, m.success as u8);
        }
        out
    }
}

/// Seed of trial `k`: substream `k` of the benchmark seed.
fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Runs `cfg.trials` registrations of a perturbed `source` against `target`.
/// `ground_truth` maps the unperturbed source onto the target. Each trial
/// draws its perturbation and pipeline seed from its own substream, so the
/// report does not depend on `jobs`.
pub fn run_benchmark(
    source: &PointCloud,
    target: &PointCloud,
    ground_truth: &RigidTransform,
    cfg: &BenchmarkConfig,
    pipeline: &PipelineConfig,
    jobs: usize,
) -> Result<BenchmarkReport> {
    cfg.validate()?;
    pipeline.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if jobs < 1 {
        return Err(Error::InvalidParameter("jobs must be at least 1".into()));
    }
    let run_trial = |k: usize| {
        let mut rng = trial_rng(cfg.rng_seed, k);
        let perturbation = sample_random_transform(cfg, &mut rng);
        let pcfg = pipeline.clone().with_seed(rng.gen());
        let moved = apply_transform(source, &perturbation);
        let truth = ground_truth.compose(&perturbation.inverse());
        let start = Instant::now();
        let (metrics, error) = match register(&moved, target, &pcfg) {
            Ok((estimate, _)) => (
                MetricReport::evaluate(&moved, &estimate, &truth, cfg.sigma_r, cfg.sigma_t),
                None,
            ),
            Err(e) => (MetricReport::failure(), Some(e.to_string())),
        };
        TrialRecord {
            trial: k,
            perturbation,
            perturbation_angle: perturbation.rotation_angle().to_degrees(),
            perturbation_distance: perturbation.translation.norm(),
            metrics,
            error,
            seconds: pcfg.record_timings.then(|| start.elapsed().as_secs_f64()),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let records: Vec<TrialRecord> = pool.install(|| (0..cfg.trials).into_par_iter().map(run_trial).collect());

    let metrics: Vec<MetricReport> = records.iter().map(|r| r.metrics).collect();
    Ok(BenchmarkReport {
        schema: BENCH_SCHEMA.to_string(),
        config: cfg.clone(),
        successes: metrics.iter().filter(|m| m.success).count(),
        srr: srr(&metrics, cfg.sigma_r, cfg.sigma_t),
        mean_all: MeanErrors::over(metrics.iter()).expect("at least one trial"),
        mean_successful: MeanErrors::over(metrics.iter().filter(|m| m.success)),
        mean_completed: MeanErrors::over(records.iter().filter(|r| r.error.is_none()).map(|r| &r.metrics)),
        records,
    })
}
