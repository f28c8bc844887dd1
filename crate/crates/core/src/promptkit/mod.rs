//! Prompt templates and the prompt-to-label association.
//!
//! Labels travel with each [`Prompt`] as stored data; nothing here ever
//! recovers a class by parsing prompt text.

mod fixtures;
mod llm;

pub use fixtures::{parse_caption_fixture, CaptionFixture, FixtureClass};
pub use llm::{
    postprocess_llm_output, rewrite_request, select_candidate, ANSWER_MARKER, CAPTION_MARKER,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataman::{ClassMap, Manifest, Provenance};

const PHOTO_PREFIX: &str = "A photo of ";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("class name is empty")]
    EmptyClassName,
    #[error("caption is empty")]
    EmptyCaption,
    #[error("records without a caption: {indices:?}")]
    MissingCaption { indices: Vec<u64> },
    #[error("label {0} is not in the class map")]
    UnknownLabel(usize),
    #[error("prompt set is empty")]
    EmptyPromptSet,
    #[error("text contains no \"# Answer\" marker")]
    NoAnswerMarker,
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("fixture line {line}: {message}")]
    Fixture { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    Basic,
    Cip,
    Llm,
}

impl Template {
    /// Provenance recorded on synthetic samples generated from this template.
    pub fn provenance(self) -> Provenance {
        match self {
            Template::Basic => Provenance::SyntheticBasic,
            Template::Cip => Provenance::SyntheticCip,
            Template::Llm => Provenance::SyntheticLlm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub label: usize,
    pub source_index: Option<u64>,
    pub template: Template,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    prompts: Vec<Prompt>,
    class_map: ClassMap,
}

impl PromptSet {
    pub fn new(prompts: Vec<Prompt>, class_map: ClassMap) -> Result<Self, PromptError> {
        if prompts.is_empty() {
            return Err(PromptError::EmptyPromptSet);
        }
        if let Some(p) = prompts.iter().find(|p| !class_map.contains(p.label)) {
            return Err(PromptError::UnknownLabel(p.label));
        }
        Ok(Self { prompts, class_map })
    }

    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    pub fn class_map(&self) -> &ClassMap {
        &self.class_map
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    /// Concatenation, keeping every prompt (used for mixture-linearity checks).
    pub fn union(&self, other: &PromptSet) -> Result<PromptSet, PromptError> {
        let mut prompts = self.prompts.clone();
        prompts.extend(other.prompts.iter().cloned());
        PromptSet::new(prompts, self.class_map.clone())
    }
}

/// `"A photo of {class_name}"`.
pub fn basic_prompt(class_name: &str) -> Result<String, PromptError> {
    if class_name.is_empty() {
        return Err(PromptError::EmptyClassName);
    }
    Ok(format!("{PHOTO_PREFIX}{class_name}"))
}

/// `"A photo of {class_name}, {caption}"`.
pub fn cip_prompt(class_name: &str, caption: &str) -> Result<String, PromptError> {
    if class_name.is_empty() {
        return Err(PromptError::EmptyClassName);
    }
    if caption.is_empty() {
        return Err(PromptError::EmptyCaption);
    }
    Ok(format!("{PHOTO_PREFIX}{class_name}, {caption}"))
}

/// One prompt per record, in record order. `Cip` and `Llm` read each
/// record's caption (for `Llm`, the already rewritten one).
pub fn build_prompt_set(manifest: &Manifest, template: Template) -> Result<PromptSet, PromptError> {
    let classes = &manifest.class_map;
    if template != Template::Basic {
        let missing: Vec<u64> = manifest
            .records
            .iter()
            .filter(|r| r.caption.as_deref().map_or(true, str::is_empty))
            .map(|r| r.index)
            .collect();
        if !missing.is_empty() {
            return Err(PromptError::MissingCaption { indices: missing });
        }
    }
    let prompts = manifest
        .records
        .iter()
        .map(|r| {
            let name = classes.name(r.label).ok_or(PromptError::UnknownLabel(r.label))?;
            let text = match template {
                Template::Basic => basic_prompt(name)?,
                Template::Cip | Template::Llm => {
                    cip_prompt(name, r.caption.as_deref().unwrap_or_default())?
                }
            };
            Ok(Prompt { text, label: r.label, source_index: Some(r.index), template })
        })
        .collect::<Result<Vec<_>, PromptError>>()?;
    PromptSet::new(prompts, classes.clone())
}
