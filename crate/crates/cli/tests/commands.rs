mod common;

use std::process::Command;
use std::sync::Arc;

use common::*;
use lampo::baselines::Method;
use lampo::eval::load_report;
use lampo::oracle::{SimulatedBackend, SimulatedConfig};
use lampo::thresholding::ThresholdStrategy;
use lampo::Generator;
use lampo_cli::{baseline_with, calibrate_with, classify_with};

fn simulated(noise: f64) -> Arc<SimulatedBackend> {
    let labels: Vec<String> = LABELS.iter().map(|s| s.to_string()).collect();
    Arc::new(SimulatedBackend::new(SimulatedConfig::new(noise, 0.0, 3).with_labels(&labels)))
}

#[test]
fn noise_free_classification_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset_file(dir.path(), 5, 30, &[0, 1]);
    let m = manifest(&data, &dir.path().join("out"), "shots = 5", SIMULATED);
    let run = classify_with(&m, simulated(0.0)).unwrap();
    let report = run.report.unwrap();
    assert_eq!(report.mean, Some(1.0));
    assert_eq!(report.seeds.len(), 2);
    assert_eq!(report.seeds[0].backend_calls, 2 * 15 * 30);
    assert_eq!(run.plan.planned, 2 * 2 * 15 * 30);
    let written = load_report(&dir.path().join("out/report.json")).unwrap();
    assert_eq!(written.reports, vec![report.clone()]);
    assert_eq!(written.std_convention, "population");
    for key in ["window_half_width", "parallelism", "probing", "decoding", "template", "backend"] {
        assert!(report.settings.contains_key(key), "missing setting {key}");
    }
    let preds = std::fs::read_to_string(dir.path().join("out/predictions_seed1.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 30);
}

#[test]
fn dry_run_makes_no_calls_and_counts_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset_file(dir.path(), 5, 20, &[0]);
    let probes = dir.path().join("probes.txt");
    write_probe_file(&probes, 12);
    let mut m = with_probing(manifest(&data, &dir.path().join("out"), "shots = 5", SIMULATED), &probes);
    m.dry_run = true;
    let backend = simulated(0.0);
    let run = classify_with(&m, backend.clone()).unwrap();
    assert_eq!(run.plan.planned, 2 * 15 * 20);
    assert!(run.report.is_none());

    m.run.strategy = ThresholdStrategy::SelfSupervised;
    let run = classify_with(&m, backend.clone()).unwrap();
    assert_eq!(run.plan.planned, 2 * 15 * 20 + 2 * 15 * 12);
    assert_eq!(run.plan.uncached, run.plan.planned);
    assert_eq!(backend.call_count(), 0);
    assert!(!dir.path().join("out/comparisons.jsonl").exists());
}

#[test]
fn resumed_runs_match_uninterrupted_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset_file(dir.path(), 3, 25, &[0]);
    let probes = dir.path().join("probes.txt");
    write_probe_file(&probes, 10);
    let base = |out: &str| {
        let mut m = with_probing(manifest(&data, &dir.path().join(out), "shots = 3", SIMULATED), &probes);
        m.run.strategy = ThresholdStrategy::Mixture;
        m
    };

    let clean = classify_with(&base("clean"), simulated(0.25)).unwrap();

    let interrupted = base("resumed");
    let flaky = Arc::new(FailAfter::new(simulated(0.25), 200));
    let err = classify_with(&interrupted, flaky).err().expect("interrupted run fails");
    assert_eq!(lampo_cli::exit::exit_code(&err), lampo_cli::exit::TRANSPORT);
    assert!(format!("{err:#}").contains("outstanding"), "{err:#}");

    let mut resume = base("resumed");
    resume.resume = true;
    let backend = simulated(0.25);
    let resumed = classify_with(&resume, backend.clone()).unwrap();
    assert_eq!(resumed.predictions, clean.predictions);
    assert_eq!(backend.call_count(), 2 * 9 * 35 - 200);
    assert_eq!(resumed.report.unwrap().mean, clean.report.unwrap().mean);
}

#[test]
fn identical_manifests_and_caches_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset_file(dir.path(), 3, 20, &[0, 4]);
    let mut m = manifest(&data, &dir.path().join("out"), "shots = 3\nstrategy = \"self_supervised\"", SIMULATED);
    m.probing.n_target = 16;
    classify_with(&m, simulated(0.2)).unwrap();
    m.resume = true;
    let report_path = dir.path().join("out/report.json");
    classify_with(&m, simulated(0.2)).unwrap();
    let first = std::fs::read(&report_path).unwrap();
    classify_with(&m, simulated(0.2)).unwrap();
    assert_eq!(std::fs::read(&report_path).unwrap(), first);
}

#[test]
fn calibration_document_has_all_three_sets() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset_file(dir.path(), 5, 3, &[0]);
    let probes = dir.path().join("probes.txt");
    write_probe_file(&probes, 30);
    let m = with_probing(manifest(&data, &dir.path().join("out"), "shots = 5", SIMULATED), &probes);
    let doc = calibrate_with(&m, simulated(0.0)).unwrap();
    let c = &doc.seeds[0].calibration;
    assert_eq!(c.expected.to_string(), "{10, 20}");
    let mix: Vec<f64> = c
        .expected
        .to_f64()
        .iter()
        .zip(c.self_supervised.to_f64())
        .map(|(a, b)| (a + b) / 2.0)
        .collect();
    assert_eq!(c.mixture.to_f64(), mix);
    assert!(!doc.seeds[0].warning);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/calibration.json")).unwrap()).unwrap();
    assert!(json["seeds"][0]["calibration"]["search"]["entropy"].is_number());
}

#[test]
fn calibration_falls_back_when_probing_fails() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset_file(dir.path(), 2, 3, &[0]);
    let mut cfg = SimulatedConfig::new(0.0, 0.0, 1);
    cfg.probe_lines = 0;
    let m = manifest(&data, &dir.path().join("out"), "shots = 2", SIMULATED);
    let doc = calibrate_with(&m, Arc::new(SimulatedBackend::new(cfg))).unwrap();
    let s = &doc.seeds[0];
    assert!(s.warning);
    assert!(s.probing_error.as_deref().unwrap().contains("probing file"));
    assert_eq!(s.calibration.mixture, s.calibration.expected);
}

#[test]
fn baseline_cells_for_infeasible_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset_file(dir.path(), 2, 6, &[0, 1]);

    let mut m = manifest(&data, &dir.path().join("cc"), "shots = 2", SIMULATED);
    m.run.method = Method::Cc;
    let mut generation_only = SimulatedConfig::new(0.0, 0.0, 1);
    generation_only.expose_probabilities = false;
    generation_only.labels = LABELS.iter().map(|s| s.to_string()).collect();
    let report = baseline_with(&m, Arc::new(SimulatedBackend::new(generation_only))).unwrap().report.unwrap();
    assert_eq!(report.cell(), "NA(unsupported)");

    let mut m = manifest(&data, &dir.path().join("icl"), "shots = 2", SIMULATED);
    m.run.method = Method::Icl;
    let mut tiny = SimulatedConfig::new(0.0, 0.0, 1);
    tiny.context_budget = Some(8);
    tiny.labels = LABELS.iter().map(|s| s.to_string()).collect();
    let report = baseline_with(&m, Arc::new(SimulatedBackend::new(tiny))).unwrap().report.unwrap();
    assert_eq!(report.cell(), "NA(context-overflow)");
    let md = std::fs::read_to_string(dir.path().join("icl/report_icl.md")).unwrap();
    assert!(md.contains("NA(context-overflow)"), "{md}");
}

#[test]
fn baselines_run_noise_free() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset_file(dir.path(), 2, 12, &[0]);
    for method in [Method::Icl, Method::Cc, Method::Globale] {
        let mut m = manifest(&data, &dir.path().join(method.name()), "shots = 2", SIMULATED);
        m.run.method = method;
        m.run.globale_candidates = 4;
        m.probing.n_target = 12;
        let report = baseline_with(&m, simulated(0.0)).unwrap().report.unwrap();
        assert_eq!(report.mean, Some(1.0), "{method:?}");
        assert_eq!(report.method, method.name());
    }
    let mut m = manifest(&data, &dir.path().join("lampo"), "shots = 2", SIMULATED);
    m.run.method = Method::Lampo;
    assert!(baseline_with(&m, simulated(0.0)).is_err());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_lampo");
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "output_dir = 3").unwrap();
    let status = Command::new(bin).args(["classify", bad.to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let data = write_dataset_file(dir.path(), 2, 4, &[0]);
    let job = dir.path().join("job.toml");
    std::fs::write(&job, manifest_text(&data, &dir.path().join("out"), "shots = 2", SIMULATED)).unwrap();
    let out = Command::new(bin)
        .args(["classify", job.to_str().unwrap(), "--dry-run"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("planned backend calls: 48"), "{stdout}");

    let wrong_shots = dir.path().join("wrong.toml");
    std::fs::write(&wrong_shots, manifest_text(&data, &dir.path().join("out"), "shots = 5", SIMULATED)).unwrap();
    let status = Command::new(bin).args(["classify", wrong_shots.to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn cache_inspect_and_prune() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset_file(dir.path(), 2, 4, &[0]);
    let m = manifest(&data, &dir.path().join("out"), "shots = 2", SIMULATED);
    classify_with(&m, simulated(0.0)).unwrap();
    let path = dir.path().join("out/comparisons.jsonl");
    let mut body = std::fs::read_to_string(&path).unwrap();
    body.push_str("not json\n");
    std::fs::write(&path, body).unwrap();
    let summary = lampo_cli::cache::inspect(&path).unwrap();
    assert_eq!(summary.entries, 48);
    assert_eq!(summary.unreadable_lines, 1);
    let template = summary.by_template.keys().next().unwrap().clone();
    let pruned = lampo_cli::cache::prune(&path, &[template]).unwrap();
    assert_eq!((pruned.kept, pruned.removed, pruned.unreadable_lines), (48, 0, 1));
    assert_eq!(lampo_cli::cache::inspect(&path).unwrap().unreadable_lines, 0);
    let pruned = lampo_cli::cache::prune(&path, &["other@0".into()]).unwrap();
    assert_eq!(pruned.kept, 0);
}

#[test]
fn convert_dataset_command() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.csv");
    std::fs::write(&src, "sentence,score\ngood,2\nbad,0\n").unwrap();
    let out = dir.path().join("data.jsonl");
    let status = Command::new(env!("CARGO_BIN_EXE_lampo"))
        .args([
            "convert-dataset",
            "--input",
            src.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
            "--format",
            "csv",
            "--text-field",
            "sentence",
            "--label-field",
            "score",
            "--label-names",
            "negative,neutral,positive",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let body = std::fs::read_to_string(out).unwrap();
    assert!(body.lines().next().unwrap().contains("\"label\":\"positive\""), "{body}");
}
