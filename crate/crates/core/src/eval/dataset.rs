//! Dataset files.
//!
//! One JSON object per line:
//!
//! ```text
//! {"split":"demo","seed":0,"text":"...","label":"positive"}
//! {"split":"test","text":"...","label":"neutral","aspect":"battery"}
//! ```
//!
//! Demonstration rows carry the seed they belong to; test rows ignore it.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Demonstration, DemonstrationSet, OrderedLabelSpace, Passage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Demo,
    Test,
}

/// A raw row as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub text: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<String>,
}

/// A validated test item with its gold label index.
#[derive(Debug, Clone, PartialEq)]
pub struct TestItem {
    pub text: String,
    pub gold: usize,
    pub aspect: Option<String>,
}

impl TestItem {
    pub fn passage(&self) -> Passage<'_> {
        Passage::with_aspect(&self.text, self.aspect.as_deref())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub label_space: OrderedLabelSpace,
    /// Demonstration sets keyed by seed.
    pub demos: BTreeMap<u64, DemonstrationSet>,
    pub test: Vec<TestItem>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub shots_per_class: Option<usize>,
    pub aspect_based: bool,
}

pub fn load_dataset(path: &Path, space: &OrderedLabelSpace, opts: LoadOptions) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut demos: BTreeMap<u64, Vec<Demonstration>> = BTreeMap::new();
    let mut test = Vec::new();
    let row_error = |line: usize, message: String| Error::Dataset {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| row_error(n, format!("malformed row: {e}")))?;
        if record.text.is_empty() {
            return Err(row_error(n, "empty text".into()));
        }
        let (label, folded) = space
            .index_of_casefold(&record.label)
            .map_err(|_| row_error(n, format!("unknown label `{}`", record.label)))?;
        if folded {
            log::info!(
                "{}:{n}: label `{}` matched `{}` after case folding",
                path.display(),
                record.label,
                space.labels()[label]
            );
        }
        if opts.aspect_based && record.aspect.is_none() {
            return Err(row_error(n, "missing aspect on an aspect-based task".into()));
        }
        match record.split {
            Split::Demo => {
                let seed = record
                    .seed
                    .ok_or_else(|| row_error(n, "demonstration row without a seed".into()))?;
                let mut demo = Demonstration::new(record.text, label);
                demo.aspect = record.aspect;
                demos.entry(seed).or_default().push(demo);
            }
            Split::Test => test.push(TestItem {
                text: record.text,
                gold: label,
                aspect: record.aspect,
            }),
        }
    }
    let demos = demos
        .into_iter()
        .map(|(seed, items)| {
            DemonstrationSet::new(items, space.clone(), opts.shots_per_class)
                .map(|set| (seed, set))
                .map_err(|e| row_error(0, format!("seed {seed}: {e}")))
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        label_space: space.clone(),
        demos,
        test,
    })
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    Jsonl,
    Csv,
    Tsv,
}

impl std::str::FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(SourceFormat::Jsonl),
            "csv" => Ok(SourceFormat::Csv),
            "tsv" => Ok(SourceFormat::Tsv),
            other => Err(Error::Config(format!("unknown source format `{other}` (jsonl, csv, tsv)"))),
        }
    }
}

/// Field mapping from a source file onto [`DatasetRecord`].
#[derive(Debug, Clone)]
pub struct ConvertOptions {
    pub format: SourceFormat,
    pub text_field: String,
    pub label_field: String,
    pub aspect_field: Option<String>,
    /// Split for every row in the source.
    pub split: Split,
    pub seed: Option<u64>,
    /// Maps integer labels onto names (index `i` names label `i`).
    pub label_names: Option<Vec<String>>,
}

fn field_text(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn map_label(raw: String, names: Option<&[String]>) -> std::result::Result<String, String> {
    match names {
        None => Ok(raw),
        Some(names) => raw
            .trim()
            .parse::<usize>()
            .ok()
            .and_then(|i| names.get(i).cloned())
            .ok_or_else(|| format!("label `{raw}` is not an index into {} names", names.len())),
    }
}

/// Converts a jsonl/csv/tsv source into dataset records.
pub fn convert_records(input: &Path, opts: &ConvertOptions) -> Result<Vec<DatasetRecord>> {
    let mut rows: Vec<(usize, BTreeMap<String, String>)> = Vec::new();
    match opts.format {
        SourceFormat::Jsonl => {
            let body = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
            for (i, line) in body.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let obj: serde_json::Map<String, serde_json::Value> =
                    serde_json::from_str(line).map_err(|e| Error::Dataset {
                        path: input.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                rows.push((i + 1, obj.iter().map(|(k, v)| (k.clone(), field_text(v))).collect()));
            }
        }
        SourceFormat::Csv | SourceFormat::Tsv => {
            let delimiter = if opts.format == SourceFormat::Csv { b',' } else { b'\t' };
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(delimiter)
                .from_path(input)
                .map_err(|e| Error::Config(format!("{}: {e}", input.display())))?;
            let headers = reader
                .headers()
                .map_err(|e| Error::Config(format!("{}: {e}", input.display())))?
                .clone();
            for (i, row) in reader.records().enumerate() {
                let row = row.map_err(|e| Error::Dataset {
                    path: input.to_path_buf(),
                    line: i + 2,
                    message: e.to_string(),
                })?;
                rows.push((i + 2, headers.iter().map(str::to_string).zip(row.iter().map(str::to_string)).collect()));
            }
        }
    }
    rows.into_iter()
        .map(|(line, mut row)| {
            let err = |message: String| Error::Dataset {
                path: input.to_path_buf(),
                line,
                message,
            };
            let mut take = |field: &str| row.remove(field).ok_or_else(|| err(format!("missing field `{field}`")));
            let text = take(&opts.text_field)?;
            let label = map_label(take(&opts.label_field)?, opts.label_names.as_deref()).map_err(err)?;
            let aspect = match &opts.aspect_field {
                Some(f) => Some(take(f)?),
                None => None,
            };
            Ok(DatasetRecord {
                split: opts.split,
                seed: opts.seed,
                text,
                label,
                aspect,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> OrderedLabelSpace {
        OrderedLabelSpace::new(["negative", "neutral", "positive"]).unwrap()
    }

    fn row(split: Split, seed: Option<u64>, text: &str, label: &str) -> DatasetRecord {
        DatasetRecord {
            split,
            seed,
            text: text.into(),
            label: label.into(),
            aspect: None,
        }
    }

    #[test]
    fn three_seeds_of_fifteen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut records = Vec::new();
        for seed in 0..3 {
            for (j, label) in ["negative", "neutral", "positive"].iter().enumerate() {
                for i in 0..5 {
                    records.push(row(Split::Demo, Some(seed), &format!("s{seed} c{j} {i}"), label));
                }
            }
        }
        records.push(row(Split::Test, None, "t1", "Positive"));
        write_dataset(&path, &records).unwrap();
        let ds = load_dataset(&path, &space(), LoadOptions { shots_per_class: Some(5), aspect_based: false }).unwrap();
        assert_eq!(ds.demos.len(), 3);
        assert!(ds.demos.values().all(|d| d.len() == 15));
        assert_eq!(ds.test[0].gold, 2);
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, "{\"split\":\"test\",\"text\":\"a\",\"label\":\"neutral\"}\n{\"split\":\"test\",\"text\":\"b\",\"label\":\"happy\"}\n").unwrap();
        let err = load_dataset(&path, &space(), LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains(":2:") && err.to_string().contains("happy"), "{err}");
        std::fs::write(&path, "{\"split\":\"test\",\"text\"\n").unwrap();
        let err = load_dataset(&path, &space(), LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
        std::fs::write(&path, "{\"split\":\"test\",\"text\":\"a\",\"label\":\"neutral\"}\n").unwrap();
        let aspect = LoadOptions { shots_per_class: None, aspect_based: true };
        assert!(load_dataset(&path, &space(), aspect).unwrap_err().to_string().contains("aspect"));
    }

    #[test]
    fn converts_tsv_with_integer_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("src.tsv");
        std::fs::write(&path, "sentence\tlabel\nvery good\t2\nawful\t0\n").unwrap();
        let opts = ConvertOptions {
            format: SourceFormat::Tsv,
            text_field: "sentence".into(),
            label_field: "label".into(),
            aspect_field: None,
            split: Split::Demo,
            seed: Some(1),
            label_names: Some(space().labels().to_vec()),
        };
        let records = convert_records(&path, &opts).unwrap();
        assert_eq!(records[0], row(Split::Demo, Some(1), "very good", "positive"));
        assert_eq!(records[1].label, "negative");
        std::fs::write(&path, "sentence\tlabel\nx\t9\n").unwrap();
        assert!(convert_records(&path, &opts).unwrap_err().to_string().contains(":2:"));
    }

    #[test]
    fn converts_jsonl_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("src.jsonl");
        std::fs::write(&path, "{\"sentence\":\"ok\",\"polarity\":\"neutral\",\"term\":\"screen\"}\n").unwrap();
        let opts = ConvertOptions {
            format: SourceFormat::Jsonl,
            text_field: "sentence".into(),
            label_field: "polarity".into(),
            aspect_field: Some("term".into()),
            split: Split::Test,
            seed: None,
            label_names: None,
        };
        let records = convert_records(&path, &opts).unwrap();
        assert_eq!(records[0].aspect.as_deref(), Some("screen"));
    }
}
