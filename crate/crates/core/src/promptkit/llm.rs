//! Caption rewriting through a language model: the request text and the
//! clean-up applied to whatever the model sends back.

use std::sync::OnceLock;

use rand::Rng;
use regex::Regex;

use super::PromptError;

pub const CAPTION_MARKER: &str = "# Caption:";
pub const ANSWER_MARKER: &str = "# Answer:";

/// Builds the rewrite instruction for one caption. The result always ends
/// with [`ANSWER_MARKER`].
pub fn rewrite_request(class_name: &str, caption: &str) -> Result<String, PromptError> {
    if class_name.is_empty() {
        return Err(PromptError::EmptyClassName);
    }
    if caption.is_empty() {
        return Err(PromptError::EmptyCaption);
    }
    Ok(format!(
        "This is an image caption about {class_name} category. Can you unemotionally and \
         succinctly rewrite it to 2 captions by containing the word of {class_name} in more \
         diverse scenarios?\n{CAPTION_MARKER}\n{caption}\n{ANSWER_MARKER}"
    ))
}

fn numbered_item() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|\s)\d+[.)](?:\s|$)").unwrap())
}

fn clean_candidate(raw: &str) -> String {
    let kept: String = raw
        .chars()
        .filter_map(|c| match c {
            c if c.is_alphabetic() => Some(c),
            c if c.is_whitespace() => Some(' '),
            '-' | '/' | '\u{2013}' | '\u{2014}' => Some(' '),
            _ => None,
        })
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Extracts caption candidates from a raw completion.
///
/// Takes the text after the last `# Answer` marker, splits it on line breaks
/// and on `1.` / `2)` style list numbers, then keeps only letters and single
/// spaces. Emoji, digits and punctuation are dropped; empty candidates are
/// discarded.
pub fn postprocess_llm_output(raw: &str) -> Result<Vec<String>, PromptError> {
    let marker = "# Answer";
    let start = raw.rfind(marker).ok_or(PromptError::NoAnswerMarker)?;
    let tail = &raw[start + marker.len()..];
    let tail = tail.strip_prefix(':').unwrap_or(tail);
    let mut out = Vec::new();
    for line in tail.lines() {
        for piece in numbered_item().split(line) {
            let cleaned = clean_candidate(piece);
            if !cleaned.is_empty() {
                out.push(cleaned);
            }
        }
    }
    Ok(out)
}

/// Uniform choice among candidates.
pub fn select_candidate<R: Rng + ?Sized>(candidates: &[String], rng: &mut R) -> Result<String, PromptError> {
    if candidates.is_empty() {
        return Err(PromptError::EmptyCandidates);
    }
    Ok(candidates[rng.gen_range(0..candidates.len())].clone())
}
