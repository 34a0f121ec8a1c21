//! Unlabeled probing sets sampled from the model.
//!
//! Demonstrations are linearized as `input:<text> type:<label>`, shuffled
//! into several orderings and fed to the model as a prefix. Every
//! `input:` segment of the continuation that also carries a ` type:` field
//! yields one probe text; the generated labels are thrown away.
//!
//! File format: UTF-8, one probe text per line. Metadata lives next to it
//! in `<file>.meta.json`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Demonstration, DemonstrationSet, OrderedLabelSpace, Passage};
use crate::oracle::{GenerationRequest, Generator, Purpose};

const INPUT: &str = "input:";
const TYPE: &str = " type:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Generated,
    File,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbingMetadata {
    pub orderings: Option<usize>,
    pub backend: Option<String>,
    pub seed: Option<u64>,
    pub max_tokens: Option<usize>,
    pub generation_calls: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbingSet {
    texts: Vec<String>,
    provenance: Provenance,
    metadata: ProbingMetadata,
}

impl ProbingSet {
    pub fn new(texts: Vec<String>, provenance: Provenance, metadata: ProbingMetadata) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::Probing("probing set is empty".into()));
        }
        if let Some(bad) = texts.iter().find(|t| t.contains(['\n', '\r'])) {
            return Err(Error::Probing(format!("probe text spans lines: {bad:?}")));
        }
        Ok(Self {
            texts,
            provenance,
            metadata,
        })
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn metadata(&self) -> &ProbingMetadata {
        &self.metadata
    }

    pub fn passages(&self) -> Vec<Passage<'_>> {
        self.texts.iter().map(|t| Passage::new(t)).collect()
    }
}

/// `input:<text> type:<label>`.
pub fn linearize(text: &str, label: &str) -> String {
    format!("{INPUT}{text}{TYPE}{label}")
}

pub fn linearize_example(demo: &Demonstration, space: &OrderedLabelSpace) -> Result<String> {
    let label = space
        .label(demo.label)
        .ok_or_else(|| Error::InvalidDemonstrations(format!("label index {} out of range", demo.label)))?;
    Ok(linearize(&demo.text, label))
}

/// Inverse of [`linearize`]: the text ends at the first ` type:`.
pub fn parse_linearized(line: &str) -> Option<(&str, &str)> {
    let body = line.strip_prefix(INPUT)?;
    let at = body.find(TYPE)?;
    Some((&body[..at], &body[at + TYPE.len()..]))
}

/// Probe texts from a generated continuation.
pub fn extract_probes(generated: &str) -> Vec<String> {
    generated
        .split(INPUT)
        .skip(1)
        .filter_map(|segment| {
            let at = segment.find(TYPE)?;
            let text = segment[..at].replace(['\r', '\n'], " ");
            let text = text.trim();
            (!text.is_empty()).then(|| text.to_string())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbingOptions {
    pub n_target: usize,
    pub n_orderings: usize,
    pub max_tokens: usize,
    pub seed: u64,
    /// Orderings generated concurrently per round.
    pub batch: usize,
}

impl Default for ProbingOptions {
    fn default() -> Self {
        Self {
            n_target: 50,
            n_orderings: 10,
            max_tokens: 512,
            seed: 0,
            batch: crate::oracle::DEFAULT_PARALLELISM,
        }
    }
}

/// Up to `n` permutations of `0..len`, distinct while distinct ones remain.
pub fn sample_permutations(len: usize, n: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distinct = (1..=len).try_fold(1usize, |acc, i| acc.checked_mul(i)).unwrap_or(usize::MAX);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let base: Vec<usize> = (0..len).collect();
    while out.len() < n {
        let mut p = base.clone();
        p.shuffle(&mut rng);
        if seen.len() < distinct && !seen.insert(p.clone()) {
            continue;
        }
        out.push(p);
    }
    out
}

fn context_for(demos: &DemonstrationSet, order: &[usize]) -> Result<String> {
    let mut context = String::new();
    for &i in order {
        context.push_str(&linearize_example(&demos.items()[i], demos.label_space())?);
        context.push('\n');
    }
    Ok(context)
}

/// Samples continuations of shuffled linearized demonstrations until
/// `n_target` probe texts are collected or the orderings run out.
pub fn construct_probing_set(
    demos: &DemonstrationSet,
    generator: &dyn Generator,
    opts: &ProbingOptions,
) -> Result<ProbingSet> {
    if opts.n_target == 0 {
        return Err(Error::Probing("n_target must be at least 1".into()));
    }
    if opts.n_orderings == 0 || opts.batch == 0 {
        return Err(Error::Probing("n_orderings and batch must be at least 1".into()));
    }
    let orderings = sample_permutations(demos.len(), opts.n_orderings, opts.seed);
    let mut texts = Vec::with_capacity(opts.n_target);
    let mut used = 0;
    let mut issued = 0;
    for chunk in orderings.chunks(opts.batch) {
        issued += chunk.len();
        let generated: Vec<_> = chunk
            .par_iter()
            .map(|order| {
                let context = context_for(demos, order)?;
                let request = GenerationRequest::new(&context, Purpose::Probe).max_tokens(opts.max_tokens);
                generator.generate(&request).map_err(Error::from)
            })
            .collect::<Result<_>>()?;
        for continuation in generated {
            used += 1;
            texts.extend(extract_probes(&continuation));
            if texts.len() >= opts.n_target {
                break;
            }
        }
        if texts.len() >= opts.n_target {
            break;
        }
    }
    if texts.is_empty() {
        return Err(Error::Probing(format!(
            "no probe texts could be extracted from {used} generation(s); supply a probing file instead"
        )));
    }
    if texts.len() < opts.n_target {
        log::warn!("probing set has {} of {} requested texts", texts.len(), opts.n_target);
    }
    texts.truncate(opts.n_target);
    ProbingSet::new(
        texts,
        Provenance::Generated,
        ProbingMetadata {
            orderings: Some(used),
            backend: Some(generator.id()),
            seed: Some(opts.seed),
            max_tokens: Some(opts.max_tokens),
            generation_calls: Some(issued),
        },
    )
}

pub fn metadata_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    provenance: Provenance,
    #[serde(flatten)]
    metadata: ProbingMetadata,
}

pub fn save_probing_set(set: &ProbingSet, path: &Path) -> Result<()> {
    let mut body = set.texts.join("\n");
    body.push('\n');
    std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
    let meta = metadata_path(path);
    let sidecar = Sidecar {
        provenance: set.provenance,
        metadata: set.metadata.clone(),
    };
    std::fs::write(&meta, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&meta, e))
}

/// Reads one text per line, dropping blank lines. Provenance is `File`;
/// metadata comes from the sidecar when present.
pub fn load_probing_set(path: &Path) -> Result<ProbingSet> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let texts: Vec<String> = body
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    if texts.is_empty() {
        return Err(Error::Probing(format!("{} contains no probe texts", path.display())));
    }
    let meta = metadata_path(path);
    let metadata = if meta.exists() {
        let raw = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        serde_json::from_str::<Sidecar>(&raw)?.metadata
    } else {
        ProbingMetadata::default()
    };
    ProbingSet::new(texts, Provenance::File, metadata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{SimulatedBackend, SimulatedConfig};
    use proptest::prelude::*;

    fn space() -> OrderedLabelSpace {
        OrderedLabelSpace::new(["negative", "neutral", "positive"]).unwrap()
    }

    fn demos() -> DemonstrationSet {
        let items = (0..9)
            .map(|i| Demonstration::new(format!("demo {i} latent={}", i / 3), i / 3))
            .collect();
        DemonstrationSet::new(items, space(), Some(3)).unwrap()
    }

    #[test]
    fn linearize_examples() {
        let s = space();
        assert_eq!(
            linearize_example(&Demonstration::new("great movie", 2), &s).unwrap(),
            "input:great movie type:positive"
        );
        assert_eq!(linearize_example(&Demonstration::new("", 1), &s).unwrap(), "input: type:neutral");
        assert_eq!(parse_linearized("input: type:neutral"), Some(("", "neutral")));
        assert!(linearize_example(&Demonstration::new("x", 7), &s).is_err());
    }

    #[test]
    fn extraction_grammar() {
        let generated = "input:first one type:positive\ninput:no label here\ninput:  spaced\nout type:neg\ninput: type:x\ntrailing";
        assert_eq!(extract_probes(generated), vec!["first one", "spaced out"]);
        assert!(extract_probes("nothing to see").is_empty());
    }

    #[test]
    fn simulated_generation_fills_target() {
        let backend = SimulatedBackend::new(SimulatedConfig::new(0.0, 0.0, 3).with_labels(space().labels()));
        let opts = ProbingOptions {
            n_target: 20,
            ..ProbingOptions::default()
        };
        let set = construct_probing_set(&demos(), &backend, &opts).unwrap();
        assert_eq!(set.len(), 20);
        assert_eq!(set.provenance(), Provenance::Generated);
        for text in set.texts() {
            assert!(text.starts_with("synthetic probe "), "{text}");
            assert!(!text.contains("type:"));
        }
        // 8 lines per generation, so three orderings are needed
        assert_eq!(set.metadata().orderings, Some(3));
        let again = construct_probing_set(&demos(), &backend, &opts).unwrap();
        assert_eq!(again, set);
        assert_eq!(ProbingOptions::default().n_target, 50);
    }

    #[test]
    fn generation_errors() {
        let backend = SimulatedBackend::new(SimulatedConfig::new(0.0, 0.0, 3).with_labels(space().labels()));
        let zero = ProbingOptions {
            n_target: 0,
            ..ProbingOptions::default()
        };
        assert!(matches!(construct_probing_set(&demos(), &backend, &zero), Err(Error::Probing(_))));

        struct Silent;
        impl Generator for Silent {
            fn id(&self) -> String {
                "silent".into()
            }
            fn generate(&self, _: &GenerationRequest<'_>) -> std::result::Result<String, crate::BackendError> {
                Ok("I have nothing to add.".into())
            }
            fn call_count(&self) -> u64 {
                0
            }
        }
        let err = construct_probing_set(&demos(), &Silent, &ProbingOptions::default()).unwrap_err();
        assert!(err.to_string().contains("probing file"), "{err}");
    }

    #[test]
    fn permutations_are_distinct_when_possible() {
        let perms = sample_permutations(4, 10, 1);
        assert_eq!(perms.len(), 10);
        assert_eq!(perms.iter().collect::<HashSet<_>>().len(), 10);
        // only 2 distinct orders of 2 items
        let small = sample_permutations(2, 5, 1);
        assert_eq!(small.len(), 5);
        assert_eq!(sample_permutations(4, 10, 1), perms);
    }

    #[test]
    fn load_drops_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probes.txt");
        let mut body: String = (0..50).map(|i| format!("probe {i}\n")).collect();
        body.push_str("\n  \n\n");
        std::fs::write(&path, body).unwrap();
        let set = load_probing_set(&path).unwrap();
        assert_eq!(set.len(), 50);
        assert_eq!(set.provenance(), Provenance::File);
        std::fs::write(&path, "\n\n").unwrap();
        assert!(load_probing_set(&path).is_err());
        assert!(load_probing_set(&dir.path().join("missing.txt")).is_err());
    }

    proptest! {
        #[test]
        fn linearization_round_trips(text in "[^\r\n]{0,40}", label in 0usize..3) {
            prop_assume!(!text.contains(" type:"));
            let s = space();
            let line = linearize_example(&Demonstration::new(text.clone(), label), &s).unwrap();
            let (t, l) = parse_linearized(&line).unwrap();
            prop_assert_eq!(t, text.as_str());
            prop_assert_eq!(s.index_of(l).unwrap(), label);
        }

        #[test]
        fn save_load_is_byte_exact(texts in proptest::collection::vec("[a-zA-Z0-9][^\r\n]{0,30}", 1..20)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.txt");
            let set = ProbingSet::new(texts, Provenance::Generated, ProbingMetadata { seed: Some(4), ..Default::default() }).unwrap();
            save_probing_set(&set, &path).unwrap();
            let back = load_probing_set(&path).unwrap();
            prop_assert_eq!(back.texts(), set.texts());
            prop_assert_eq!(back.metadata(), set.metadata());
        }
    }
}
