use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Demonstration, DemonstrationSet, OrderedLabelSpace, Passage};
use crate::oracle::{estimate_tokens, GenerationRequest, Generator, Purpose};
use crate::probing::linearize;

/// Tokens requested for a pointwise answer.
pub const ANSWER_TOKENS: usize = 16;

/// Instruction, ordered demonstrations and the id of their ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub instruction: String,
    pub demonstrations: Vec<Demonstration>,
    pub ordering_id: usize,
}

impl PromptContext {
    pub fn new(instruction: impl Into<String>, demonstrations: Vec<Demonstration>, ordering_id: usize) -> Self {
        Self {
            instruction: instruction.into(),
            demonstrations,
            ordering_id,
        }
    }

    /// Demonstrations of `set` taken in `order`.
    pub fn from_order(instruction: impl Into<String>, set: &DemonstrationSet, order: &[usize], ordering_id: usize) -> Self {
        Self::new(
            instruction,
            order.iter().map(|&i| set.items()[i].clone()).collect(),
            ordering_id,
        )
    }

    /// The prompt for `x`: the instruction, one `input:... type:...` line per
    /// demonstration, then `input:<x> type:` for the model to complete.
    pub fn render(&self, x: Passage<'_>, space: &OrderedLabelSpace) -> Result<String> {
        let mut out = String::new();
        if !self.instruction.is_empty() {
            out.push_str(&self.instruction);
            out.push_str("\n\n");
        }
        for demo in &self.demonstrations {
            let label = space
                .label(demo.label)
                .ok_or_else(|| Error::InvalidDemonstrations(format!("label index {} out of range", demo.label)))?;
            out.push_str(&linearize(&with_aspect(&demo.text, demo.aspect.as_deref()), label));
            out.push('\n');
        }
        out.push_str(&linearize(&with_aspect(x.text, x.aspect), ""));
        Ok(out)
    }
}

fn with_aspect(text: &str, aspect: Option<&str>) -> String {
    match aspect {
        Some(a) => format!("{text} aspect:{a}"),
        None => text.to_string(),
    }
}

pub fn default_instruction(space: &OrderedLabelSpace) -> String {
    format!(
        "Classify each input with one of the labels: {}.",
        space.labels().join(", ")
    )
}

/// Index of the longest label occurring in `output` (case-insensitive).
pub fn match_label(output: &str, space: &OrderedLabelSpace) -> Option<usize> {
    let haystack = output.to_lowercase();
    space
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| haystack.contains(&l.to_lowercase()))
        .max_by_key(|(i, l)| (l.chars().count(), std::cmp::Reverse(*i)))
        .map(|(i, _)| i)
}

pub(crate) fn check_budget(prompt: &str, backend: &dyn Generator) -> Result<()> {
    if let Some(budget) = backend.context_budget() {
        let needed = estimate_tokens(prompt);
        if needed > budget {
            return Err(Error::ContextOverflow { needed, budget });
        }
    }
    Ok(())
}

/// Generates a label for `x` and maps the first output line onto the label space.
pub fn icl_predict(ctx: &PromptContext, x: Passage<'_>, backend: &dyn Generator, space: &OrderedLabelSpace) -> Result<usize> {
    let prompt = ctx.render(x, space)?;
    check_budget(&prompt, backend)?;
    let raw = backend.generate(&GenerationRequest::new(&prompt, Purpose::Classify).max_tokens(ANSWER_TOKENS))?;
    let first = raw.trim_start().lines().next().unwrap_or("");
    match_label(first, space).ok_or(Error::UnparseablePrediction(raw))
}
