#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use lampo::eval::dataset::write_dataset;
use lampo::eval::{DatasetRecord, Split};
use lampo::oracle::GenerationRequest;
use lampo::{BackendError, Generator};
use lampo_cli::JobManifest;

pub const LABELS: [&str; 3] = ["negative", "neutral", "positive"];

/// Balanced demonstrations per seed plus test items; every text carries its
/// class as latent.
pub fn write_dataset_file(dir: &Path, shots: usize, tests: usize, seeds: &[u64]) -> PathBuf {
    let mut records = Vec::new();
    for &seed in seeds {
        for (j, label) in LABELS.iter().enumerate() {
            for i in 0..shots {
                records.push(DatasetRecord {
                    split: Split::Demo,
                    seed: Some(seed),
                    text: format!("seed {seed} demo {j}.{i} latent={j}"),
                    label: label.to_string(),
                    aspect: None,
                });
            }
        }
    }
    for i in 0..tests {
        let j = (i * 7 + 3) % 3;
        records.push(DatasetRecord {
            split: Split::Test,
            seed: None,
            text: format!("test item {i} latent={j}"),
            label: LABELS[j].to_string(),
            aspect: None,
        });
    }
    let path = dir.join("data.jsonl");
    write_dataset(&path, &records).unwrap();
    path
}

/// Writes probe lines with distinct latents spread over `[0, 2]`.
pub fn write_probe_file(path: &Path, n: usize) {
    let body: String = (0..n)
        .map(|i| format!("probe {i} latent={:.4}\n", 2.0 * i as f64 / (n - 1).max(1) as f64))
        .collect();
    std::fs::write(path, body).unwrap();
}

pub fn manifest_text(dataset: &Path, output: &Path, extra_run: &str, backend: &str) -> String {
    format!(
        r#"output_dir = "{out}"

[run]
dataset = "twitter"
dataset_path = "{data}"
{extra_run}

[backend]
{backend}
"#,
        out = output.display(),
        data = dataset.display(),
    )
}

pub const SIMULATED: &str = "kind = \"simulated\"\nnoise = 0.0\ntie_margin = 0.0\nseed = 7";

pub fn manifest(dataset: &Path, output: &Path, extra_run: &str, backend: &str) -> JobManifest {
    JobManifest::from_toml(&manifest_text(dataset, output, extra_run, backend)).unwrap()
}

pub fn with_probing(mut m: JobManifest, path: &Path) -> JobManifest {
    m.probing.path = Some(path.display().to_string());
    m
}

/// Delegates to `inner` for the first `budget` generation calls, then fails.
pub struct FailAfter {
    pub inner: Arc<dyn Generator>,
    pub budget: AtomicI64,
}

impl FailAfter {
    pub fn new(inner: Arc<dyn Generator>, budget: i64) -> Self {
        Self {
            inner,
            budget: AtomicI64::new(budget),
        }
    }
}

impl Generator for FailAfter {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        if self.budget.fetch_sub(1, Ordering::SeqCst) <= 0 {
            return Err(BackendError::Transport {
                attempts: 1,
                message: "connection reset".into(),
            });
        }
        self.inner.generate(request)
    }

    fn call_count(&self) -> u64 {
        self.inner.call_count()
    }
}
