use std::fs;
use std::path::{Path, PathBuf};

use mtpcr::bev::{compute_resolution, decode_image, encode_image, enhance, rasterize_cloud, BevMetadata};
use mtpcr::cloud::{load_cloud, save_cloud, CloudFormat, PointCloud, RigidTransform};
use mtpcr::eval::{generate_scene, run_benchmark, BenchmarkConfig, MetricReport, SceneSpec, OVERLAP_RADIUS};
use mtpcr::ground::{align_to_xoy, fit_ground_plane};
use mtpcr::match2d::{match_pipeline_with_stats, MatchSet, MatchStats, MATCH_SCHEMA};
use mtpcr::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Overrides, RunConfig};
use crate::viz;

pub const TRANSFORM_SCHEMA: &str = "mtpcr-transform/1";
pub const SCENE_SCHEMA: &str = "mtpcr-scene/1";

fn read_cloud(path: &Path) -> Result<PointCloud> {
    let format = CloudFormat::from_path(path).ok_or_else(|| {
        Error::InvalidParameter(format!("cannot infer cloud format of {}", path.display()))
    })?;
    load_cloud(path, format)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

fn pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Transform file: rotation rows, translation and the 4×4 matrix.
#[derive(Debug, Serialize, Deserialize)]
pub struct TransformFile {
    #[serde(default)]
    pub schema: Option<String>,
    #[serde(flatten)]
    pub transform: RigidTransform,
    #[serde(default, skip_deserializing)]
    pub matrix: Option<[[f64; 4]; 4]>,
}

fn transform_json(t: &RigidTransform) -> String {
    pretty(&TransformFile {
        schema: Some(TRANSFORM_SCHEMA.to_string()),
        transform: *t,
        matrix: Some(t.to_homogeneous()),
    })
}

fn read_transform(path: &Path) -> Result<RigidTransform> {
    let file: TransformFile = read_json(path)?;
    if !file.transform.is_proper(1e-6) {
        return Err(Error::InvalidParameter(format!(
            "{} does not hold a proper rotation",
            path.display()
        )));
    }
    Ok(file.transform)
}

pub fn register(
    cfg: &RunConfig,
    source: &Path,
    target: &Path,
    out_dir: Option<&Path>,
    ground_truth: Option<&Path>,
) -> Result<()> {
    let src = read_cloud(source)?;
    let tgt = read_cloud(target)?;
    let truth = ground_truth.map(read_transform).transpose()?;
    let (transform, report) = mtpcr::solve::register(&src, &tgt, &cfg.pipeline)?;

    let mut doc = serde_json::to_value(&report).expect("report serializes");
    if let Some(truth) = truth {
        let b = &cfg.benchmark;
        let m = MetricReport::evaluate(&src, &transform, &truth, b.sigma_r, b.sigma_t);
        doc["evaluation"] = serde_json::to_value(m).expect("metrics serialize");
    }
    match out_dir {
        Some(dir) => {
            create_dir(dir)?;
            write_text(&dir.join("transform.json"), &transform_json(&transform))?;
            write_text(&dir.join("report.json"), &pretty(&doc))
        }
        None => {
            print!("{}", transform_json(&transform));
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct BevSidecar {
    #[serde(flatten)]
    meta: BevMetadata,
    points: usize,
    enhanced: bool,
    image: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    raw_image: Option<String>,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn bev(cfg: &RunConfig, cloud_path: &Path, out: &Path, res: Option<f64>, align: bool) -> Result<()> {
    let mut cloud = read_cloud(cloud_path)?;
    if align {
        let (plane, _) = fit_ground_plane(&cloud, &cfg.pipeline.ransac)?;
        cloud = align_to_xoy(&cloud, &plane).0;
    }
    let res = match res {
        Some(r) if r > 0.0 && r.is_finite() => r,
        Some(r) => return Err(Error::InvalidParameter(format!("res must be positive, got {r}"))),
        None if cfg.pipeline.use_resolution_scaling => compute_resolution(&cloud, cfg.pipeline.gamma)?,
        None => 1.0,
    };
    let raster = rasterize_cloud(&cloud, res)?;
    let enhanced = cfg.pipeline.use_enhancement;
    let raw_path: Option<PathBuf> = enhanced.then(|| out.with_extension("raw.pgm"));
    if let Some(raw) = &raw_path {
        encode_image(&enhance(&raster.gray), out)?;
        encode_image(&raster.gray, raw)?;
    } else {
        encode_image(&raster.gray, out)?;
    }
    let sidecar = BevSidecar {
        meta: raster.metadata(),
        points: cloud.len(),
        enhanced,
        image: file_name(out),
        raw_image: raw_path.as_deref().map(file_name),
    };
    write_text(&out.with_extension("json"), &pretty(&sidecar))
}

pub fn synth(
    cfg: &RunConfig,
    overrides: &Overrides,
    out_dir: &Path,
    spec_path: Option<&Path>,
    overlap: Option<f64>,
    format: CloudFormat,
) -> Result<()> {
    let mut spec: SceneSpec = match spec_path {
        Some(p) => read_json(p)?,
        None => cfg.scene.clone(),
    };
    if let Some(seed) = overrides.seed {
        spec.rng_seed = seed;
    }
    if let Some(o) = overlap {
        spec.target_overlap = o;
    }
    let scene = generate_scene(&spec)?;
    let ext = match format {
        CloudFormat::Ply => "ply",
        CloudFormat::Xyz => "xyz",
    };
    create_dir(out_dir)?;
    let (aerial, terrestrial) = (format!("aerial.{ext}"), format!("terrestrial.{ext}"));
    save_cloud(&scene.aerial, &out_dir.join(&aerial), format)?;
    save_cloud(&scene.terrestrial, &out_dir.join(&terrestrial), format)?;
    let manifest = json!({
        "schema": SCENE_SCHEMA,
        "spec": spec,
        "aerial": { "file": aerial, "points": scene.aerial.len() },
        "terrestrial": { "file": terrestrial, "points": scene.terrestrial.len() },
        "ground_truth": scene.ground_truth,
        "overlap": { "radius": OVERLAP_RADIUS, "aerial": scene.overlap.0, "terrestrial": scene.overlap.1 },
        "coverage": scene.coverage,
        "buildings": scene.buildings,
    });
    write_text(&out_dir.join("scene.json"), &pretty(&manifest))
}

pub fn bench(
    cfg: &RunConfig,
    clouds: Option<(&Path, &Path)>,
    ground_truth: Option<&Path>,
    trials: Option<usize>,
    jobs: usize,
    out: Option<&Path>,
    csv: Option<&Path>,
) -> Result<()> {
    let (source, target, truth) = match clouds {
        Some((s, t)) => {
            let truth = ground_truth.map(read_transform).transpose()?.unwrap_or_default();
            (read_cloud(s)?, read_cloud(t)?, truth)
        }
        None => {
            let scene = generate_scene(&cfg.scene)?;
            (scene.aerial, scene.terrestrial, scene.ground_truth)
        }
    };
    let bcfg = BenchmarkConfig {
        trials: trials.unwrap_or(cfg.benchmark.trials),
        ..cfg.benchmark.clone()
    };
    let report = run_benchmark(&source, &target, &truth, &bcfg, &cfg.pipeline, jobs)?;
    let mut text = report.to_json();
    text.push('\n');
    match out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = csv {
        write_text(p, &report.to_csv())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MatchDocument<'a> {
    schema: &'a str,
    matches: Vec<serde_json::Value>,
    stats: MatchStats,
}

fn match_document(ms: &MatchSet, stats: MatchStats) -> String {
    let matches = ms
        .pairs
        .iter()
        .map(|p| json!({ "u0": p.a.u, "v0": p.a.v, "u1": p.b.u, "v1": p.b.v, "score": p.confidence }))
        .collect();
    pretty(&MatchDocument {
        schema: MATCH_SCHEMA,
        matches,
        stats,
    })
}

pub fn matchviz(cfg: &RunConfig, img_a: &Path, img_b: &Path, out: &Path, matches: Option<&Path>) -> Result<()> {
    let a = decode_image(img_a)?;
    let b = decode_image(img_b)?;
    let (ms, stats) = match_pipeline_with_stats(&a, &b, &cfg.pipeline.matcher, cfg.pipeline.use_focus)?;
    if ms.is_empty() {
        eprintln!("warning: no matches between {} and {}", img_a.display(), img_b.display());
    }
    encode_image(&viz::composite(&a, &b, &ms), out)?;
    if let Some(p) = matches {
        write_text(p, &match_document(&ms, stats))?;
    }
    Ok(())
}
