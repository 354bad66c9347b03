use mtpcr::cloud::RigidTransform;
use mtpcr::eval::{generate_scene, run_benchmark, srr, BenchmarkConfig, BenchmarkReport, MetricReport, SceneSpec};
use mtpcr::pipeline::PipelineConfig;

fn small_spec() -> SceneSpec {
    SceneSpec {
        extent: [200.0, 200.0],
        building_count: 40,
        trajectory: vec![[-90.0, -10.0], [90.0, 10.0]],
        target_overlap: 0.4,
        ..Default::default()
    }
}

fn bench(jobs: usize) -> BenchmarkReport {
    let scene = generate_scene(&small_spec()).unwrap();
    let cfg = BenchmarkConfig {
        trials: 4,
        rng_seed: 3,
        ..Default::default()
    };
    run_benchmark(&scene.aerial, &scene.terrestrial, &scene.ground_truth, &cfg, &PipelineConfig::default(), jobs)
        .unwrap()
}

#[test]
fn report_is_independent_of_jobs() {
    let one = bench(1);
    let four = bench(4);
    assert_eq!(one.to_json(), four.to_json());
    assert_eq!(one.to_csv(), four.to_csv());
}

#[test]
fn aggregates_agree_with_records() {
    let r = bench(2);
    let metrics: Vec<MetricReport> = r.records.iter().map(|t| t.metrics).collect();
    assert_eq!(r.srr, srr(&metrics, r.config.sigma_r, r.config.sigma_t));
    assert_eq!(r.successes, metrics.iter().filter(|m| m.success).count());
    assert_eq!(r.mean_all.trials, 4);
    let mean_r = metrics.iter().map(|m| m.e_r).sum::<f64>() / 4.0;
    assert!((r.mean_all.e_r - mean_r).abs() < 1e-12);
    for (k, rec) in r.records.iter().enumerate() {
        assert_eq!(rec.trial, k);
        assert!(rec.perturbation_angle <= 90.0 + 1e-9);
        assert!(rec.perturbation_distance <= 100.0 + 1e-9);
        assert!(rec.seconds.is_none());
    }
    let csv_successes = r.to_csv().lines().skip(1).filter(|l| l.ends_with(",1")).count();
    assert_eq!(csv_successes, r.successes);
}

#[test]
fn json_round_trips_with_failure_sentinels() {
    let mut r = bench(1);
    r.records[0].metrics = MetricReport::failure();
    let text = r.to_json();
    assert!(text.contains("\"inf\""));
    let back: BenchmarkReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back.records[0].metrics.e_t, f64::INFINITY);
    assert_eq!(back.records[1..], r.records[1..]);
}

#[test]
fn rejects_empty_inputs() {
    let scene = generate_scene(&small_spec()).unwrap();
    let empty = mtpcr::cloud::PointCloud::default();
    let cfg = BenchmarkConfig::default();
    let pipe = PipelineConfig::default();
    let id = RigidTransform::identity();
    assert!(run_benchmark(&empty, &scene.terrestrial, &id, &cfg, &pipe, 1).is_err());
    assert!(run_benchmark(&scene.aerial, &scene.terrestrial, &id, &cfg, &pipe, 0).is_err());
}
