//! Caption fixture files: UTF-8 text, one caption per line, grouped under
//! `# class: <name> | <synset>` headers. Other `#` lines are comments.

use super::PromptError;
use crate::dataman::{ClassEntry, ClassMap, Manifest, Record};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureClass {
    pub name: String,
    pub synset: Option<String>,
    pub captions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionFixture {
    pub classes: Vec<FixtureClass>,
}

pub fn parse_caption_fixture(text: &str) -> Result<CaptionFixture, PromptError> {
    let mut classes: Vec<FixtureClass> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix("# class:") {
            let mut parts = header.splitn(2, '|');
            let name = parts.next().unwrap_or_default().trim().to_string();
            if name.is_empty() {
                return Err(PromptError::Fixture { line: i + 1, message: "empty class name".into() });
            }
            let synset = parts.next().map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
            classes.push(FixtureClass { name, synset, captions: Vec::new() });
        } else if line.starts_with('#') {
            continue;
        } else {
            let Some(current) = classes.last_mut() else {
                return Err(PromptError::Fixture {
                    line: i + 1,
                    message: "caption before any class header".into(),
                });
            };
            current.captions.push(line.to_string());
        }
    }
    Ok(CaptionFixture { classes })
}

impl CaptionFixture {
    pub fn class_map(&self) -> ClassMap {
        ClassMap::new(
            self.classes
                .iter()
                .enumerate()
                .map(|(id, c)| ClassEntry { id, name: c.name.clone(), synset: c.synset.clone() })
                .collect(),
        )
        .expect("fixture class names are distinct")
    }

    /// Reference string for caption `j` of class `class`.
    pub fn sample_ref(&self, ref_prefix: &str, class: usize, j: usize) -> String {
        let c = &self.classes[class];
        let dir = c.synset.as_deref().unwrap_or(&c.name);
        format!("{ref_prefix}/{dir}/{j}.jpg")
    }

    /// Real manifest with one record per caption line (captions not attached).
    pub fn real_manifest(&self, ref_prefix: &str, global_seed: u64) -> Manifest {
        let mut m = Manifest::new(self.class_map(), global_seed);
        for (class, c) in self.classes.iter().enumerate() {
            for j in 0..c.captions.len() {
                m.push(Record::real(0, self.sample_ref(ref_prefix, class, j), class))
                    .expect("fixture labels are in range");
            }
        }
        m
    }

    /// `(sample_ref, caption)` pairs in manifest order.
    pub fn captions(&self, ref_prefix: &str) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (class, c) in self.classes.iter().enumerate() {
            for (j, cap) in c.captions.iter().enumerate() {
                out.push((self.sample_ref(ref_prefix, class, j), cap.clone()));
            }
        }
        out
    }
}
