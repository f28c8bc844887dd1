//! Dataset manifests: class maps, records and the JSONL on-disk format.
//!
//! A manifest file is JSON Lines. Line 1 is a header object carrying
//! `format_version`, `global_seed` and `classes`; every following line is one
//! [`Record`]. Both real datasets (T) and synthetic ones (S) use the same
//! format and differ only in each record's [`Provenance`].

mod io;
mod seed;

pub use io::{
    append_records, load_manifest, manifest_to_bytes, repair_torn_tail, save_manifest,
    ManifestWriter,
};
pub use seed::{derive_seed, splitmix64};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current manifest format version written by [`save_manifest`].
pub const FORMAT_VERSION: u32 = 1;

/// Feature vectors up to this dimension may be inlined in a record's `ref`.
pub const INLINE_MAX_DIM: usize = 16;

const INLINE_PREFIX: &str = "vec:";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("index gap: expected record index {expected}, found {found}")]
    IndexGap { expected: u64, found: u64 },
    #[error("torn trailing line {line} (incomplete write)")]
    TornTail { line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: usize,
    pub name: String,
    pub synset: Option<String>,
}

/// Ordered class list with contiguous ids `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ClassMap {
    entries: Vec<ClassEntry>,
}

impl ClassMap {
    pub fn new(entries: Vec<ClassEntry>) -> Result<Self, ManifestError> {
        if entries.is_empty() {
            return Err(ManifestError::Invariant("class map must contain at least one class".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for (pos, e) in entries.iter().enumerate() {
            if e.id != pos {
                return Err(ManifestError::Invariant(format!(
                    "class ids must be contiguous from 0: position {pos} has id {}",
                    e.id
                )));
            }
            if e.name.trim().is_empty() {
                return Err(ManifestError::Invariant(format!("class {pos} has an empty name")));
            }
            if !seen.insert(e.name.as_str()) {
                return Err(ManifestError::Invariant(format!("duplicate class name {:?}", e.name)));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, ManifestError> {
        Self::new(
            names
                .iter()
                .enumerate()
                .map(|(id, n)| ClassEntry { id, name: n.as_ref().to_string(), synset: None })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(|e| e.name.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn contains(&self, id: usize) -> bool {
        id < self.entries.len()
    }
}

impl<'de> Deserialize<'de> for ClassMap {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let entries = Vec::<ClassEntry>::deserialize(de)?;
        ClassMap::new(entries).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Real,
    SyntheticBasic,
    SyntheticCip,
    SyntheticZeroshot,
    SyntheticLlm,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::SyntheticBasic => "synthetic-basic",
            Provenance::SyntheticCip => "synthetic-cip",
            Provenance::SyntheticZeroshot => "synthetic-zeroshot",
            Provenance::SyntheticLlm => "synthetic-llm",
        }
    }

    pub fn is_synthetic(self) -> bool {
        self != Provenance::Real
    }
}

/// One sample. Field order here is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub index: u64,
    #[serde(rename = "ref")]
    pub sample_ref: String,
    pub label: usize,
    pub caption: Option<String>,
    pub prompt: Option<String>,
    pub seed: Option<u64>,
    pub provenance: Provenance,
    #[serde(rename = "backend")]
    pub backend_id: Option<String>,
}

impl Record {
    pub fn real(index: u64, sample_ref: impl Into<String>, label: usize) -> Self {
        Self {
            index,
            sample_ref: sample_ref.into(),
            label,
            caption: None,
            prompt: None,
            seed: None,
            provenance: Provenance::Real,
            backend_id: None,
        }
    }

    fn validate(&self, classes: &ClassMap) -> Result<(), ManifestError> {
        if !classes.contains(self.label) {
            return Err(ManifestError::Invariant(format!(
                "record {} has label {} outside 0..{}",
                self.index,
                self.label,
                classes.len()
            )));
        }
        if self.provenance.is_synthetic() && (self.prompt.is_none() || self.seed.is_none()) {
            return Err(ManifestError::Invariant(format!(
                "synthetic record {} must carry both prompt and seed",
                self.index
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub class_map: ClassMap,
    pub records: Vec<Record>,
    pub global_seed: u64,
    pub format_version: u32,
}

impl Manifest {
    pub fn new(class_map: ClassMap, global_seed: u64) -> Self {
        Self { class_map, records: Vec::new(), global_seed, format_version: FORMAT_VERSION }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks every manifest and record invariant.
    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ManifestError::Invariant(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        for (pos, r) in self.records.iter().enumerate() {
            if r.index != pos as u64 {
                return Err(ManifestError::IndexGap { expected: pos as u64, found: r.index });
            }
            r.validate(&self.class_map)?;
        }
        Ok(())
    }

    /// Appends `record`, renumbering it to the next contiguous index.
    pub fn push(&mut self, mut record: Record) -> Result<(), ManifestError> {
        record.index = self.records.len() as u64;
        record.validate(&self.class_map)?;
        self.records.push(record);
        Ok(())
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_map.len()];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }

    /// Decodes every record's inline feature vector.
    pub fn feature_vectors(&self) -> Result<Vec<(Vec<f64>, usize)>, ManifestError> {
        self.records
            .iter()
            .map(|r| {
                decode_inline_vector(&r.sample_ref)
                    .map(|v| (v, r.label))
                    .ok_or_else(|| {
                        ManifestError::Invariant(format!(
                            "record {} does not carry an inline feature vector",
                            r.index
                        ))
                    })
            })
            .collect()
    }
}

/// Inline encoding for small feature vectors: `vec:` followed by
/// comma-separated shortest round-trip decimals.
pub fn encode_inline_vector(v: &[f64]) -> String {
    debug_assert!(v.len() <= INLINE_MAX_DIM);
    let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("{INLINE_PREFIX}{}", parts.join(","))
}

pub fn decode_inline_vector(s: &str) -> Option<Vec<f64>> {
    let body = s.strip_prefix(INLINE_PREFIX)?;
    if body.is_empty() {
        return None;
    }
    let v: Option<Vec<f64>> = body.split(',').map(|p| p.parse::<f64>().ok()).collect();
    v.filter(|v| !v.is_empty() && v.len() <= INLINE_MAX_DIM && v.iter().all(|x| x.is_finite()))
}
