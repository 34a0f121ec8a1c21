//! Comparison prompt templates.
//!
//! Placeholders are `{item1}`, `{item2}` and, for aspect-based tasks,
//! `{aspect1}`, `{aspect2}`. Substitution is a single left-to-right pass, so
//! passage text that happens to contain a placeholder is inserted verbatim.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labels::Passage;

const ITEM1: &str = "{item1}";
const ITEM2: &str = "{item2}";
const ASPECT1: &str = "{aspect1}";
const ASPECT2: &str = "{aspect2}";

/// Names of the built-in task templates.
pub const BUILTIN_TEMPLATES: [&str; 7] =
    ["twitter", "sst5", "yelp5", "lap14", "hate", "offensive", "irony"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    name: String,
    text: String,
    aspect_based: bool,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>, aspect_based: bool) -> Result<Self> {
        let name = name.into();
        let text = text.into();
        for placeholder in [ITEM1, ITEM2] {
            let n = text.matches(placeholder).count();
            if n != 1 {
                return Err(Error::Template(format!(
                    "`{name}`: {placeholder} must appear exactly once, found {n}"
                )));
            }
        }
        for placeholder in [ASPECT1, ASPECT2] {
            let n = text.matches(placeholder).count();
            let want = usize::from(aspect_based);
            if n != want {
                return Err(Error::Template(format!(
                    "`{name}`: {placeholder} must appear {want} time(s) for {} template, found {n}",
                    if aspect_based { "an aspect-based" } else { "a plain" }
                )));
            }
        }
        Ok(Self {
            name,
            text,
            aspect_based,
        })
    }

    /// Parses a template file body; aspect-based iff it uses `{aspect1}`.
    pub fn from_text(name: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let aspect_based = text.contains(ASPECT1) || text.contains(ASPECT2);
        Self::new(name, text, aspect_based)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        Self::from_text(name, text)
    }

    /// Looks up a built-in template by task name (case-insensitive; `sst-5`,
    /// `yelp-5` and similar spellings are accepted).
    pub fn builtin(task: &str) -> Result<Self> {
        let key: String = task
            .to_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        let (name, labels, dimension, aspect) = match key.as_str() {
            "twitter" => ("twitter", "['negative', 'neutral', 'positive']", "more positive in terms of its sentiment", false),
            "sst5" => ("sst5", FIVE_WAY, "more positive in terms of its sentiment", false),
            "yelp5" => ("yelp5", FIVE_WAY, "more positive in terms of its sentiment", false),
            "lap14" => ("lap14", "['negative', 'neutral', 'positive']", "more positive in terms of its sentiment towards its aspect", true),
            "hate" => ("hate", "['non-hate', 'hate']", "more hateful in terms of its sentiment", false),
            "offensive" => ("offensive", "['non-offensive', 'offensive']", "more offensive in terms of its sentiment", false),
            "irony" => ("irony", "['non_irony', 'irony']", "more ironic in terms of its sentiment", false),
            _ => {
                return Err(Error::Template(format!(
                    "unknown built-in template `{task}` (known: {})",
                    BUILTIN_TEMPLATES.join(", ")
                )))
            }
        };
        let text = if aspect {
            format!(
                "Given two Passages, compare their sentiments towards their respective aspects with labels from {labels}.\n\n\
                 Passage A: {ITEM1} (sentiment towards {ASPECT1}),\n\n\
                 Passage B: {ITEM2} (sentiment towards {ASPECT2})\n\n\
                 Which Passage is {dimension}?\n\n\
                 Output Passage A or Passage B:"
            )
        } else {
            let subject = if name == "irony" { "their irony" } else { "their sentiments" };
            format!(
                "Given two Passages, compare {subject} with labels from {labels}.\n\n\
                 Passage A: {ITEM1}\n\n\
                 Passage B: {ITEM2}\n\n\
                 Which Passage is {dimension}?\n\n\
                 Output Passage A or Passage B:"
            )
        };
        Self::new(name, text, aspect)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn is_aspect_based(&self) -> bool {
        self.aspect_based
    }

    /// Identity used in cache keys: name plus a digest of the template text,
    /// so editing a template invalidates its cached comparisons.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(self.text.as_bytes());
        format!("{}@{}", self.name, &hex::encode(digest)[..12])
    }

    /// Fills the template with `a` in slot A and `b` in slot B.
    pub fn render(&self, a: Passage<'_>, b: Passage<'_>) -> Result<String> {
        let (aspect_a, aspect_b) = if self.aspect_based {
            match (a.aspect, b.aspect) {
                (Some(x), Some(y)) => (x, y),
                _ => return Err(Error::MissingAspect(self.name.clone())),
            }
        } else {
            ("", "")
        };
        let mut out = String::with_capacity(self.text.len() + a.text.len() + b.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            let (value, len) = if tail.starts_with(ITEM1) {
                (a.text, ITEM1.len())
            } else if tail.starts_with(ITEM2) {
                (b.text, ITEM2.len())
            } else if self.aspect_based && tail.starts_with(ASPECT1) {
                (aspect_a, ASPECT1.len())
            } else if self.aspect_based && tail.starts_with(ASPECT2) {
                (aspect_b, ASPECT2.len())
            } else {
                ("{", 1)
            };
            out.push_str(value);
            rest = &tail[len..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

const FIVE_WAY: &str = "['very negative', 'negative', 'neutral', 'positive', 'very positive']";
