use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassMap, Manifest, ManifestError, Record};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    global_seed: u64,
    classes: ClassMap,
}

fn record_line(r: &Record) -> Vec<u8> {
    let mut line = serde_json::to_vec(r).expect("record serialization is infallible");
    line.push(b'\n');
    line
}

/// Serializes a manifest to its canonical byte form.
pub fn manifest_to_bytes(manifest: &Manifest) -> Vec<u8> {
    let header = Header {
        format_version: manifest.format_version,
        global_seed: manifest.global_seed,
        classes: manifest.class_map.clone(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serialization is infallible");
    out.push(b'\n');
    for r in &manifest.records {
        out.extend_from_slice(&record_line(r));
    }
    out
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes the manifest atomically (temp file + rename).
pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<(), ManifestError> {
    manifest.validate()?;
    let path = path.as_ref();
    let tmp = temp_sibling(path);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&manifest_to_bytes(manifest))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_manifest(text: &str) -> Result<Manifest, ManifestError> {
    let ends_clean = text.is_empty() || text.ends_with('\n');
    let lines: Vec<&str> = text.split_terminator('\n').collect();
    let Some(first) = lines.first() else {
        return Err(ManifestError::Parse { line: 1, message: "missing header line".into() });
    };
    let torn = |line: usize, message: String| {
        if !ends_clean && line == lines.len() {
            ManifestError::TornTail { line }
        } else {
            ManifestError::Parse { line, message }
        }
    };
    let header: Header = serde_json::from_str(first).map_err(|e| torn(1, e.to_string()))?;
    let mut manifest = Manifest {
        class_map: header.classes,
        records: Vec::with_capacity(lines.len().saturating_sub(1)),
        global_seed: header.global_seed,
        format_version: header.format_version,
    };
    for (i, line) in lines.iter().enumerate().skip(1) {
        let record: Record = serde_json::from_str(line).map_err(|e| torn(i + 1, e.to_string()))?;
        manifest.records.push(record);
    }
    manifest.validate()?;
    Ok(manifest)
}

/// Loads and validates a manifest; never returns a partially built value.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, ManifestError> {
    let text = fs::read_to_string(path)?;
    parse_manifest(&text)
}

/// Truncates an incomplete trailing line left behind by an interrupted append.
/// Returns whether anything was removed.
pub fn repair_torn_tail(path: impl AsRef<Path>) -> Result<bool, ManifestError> {
    let path = path.as_ref();
    let mut f = OpenOptions::new().read(true).write(true).open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(false);
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map(|p| p + 1).unwrap_or(0);
    f.set_len(keep as u64)?;
    f.sync_all()?;
    Ok(true)
}

/// Single-writer appender over an existing manifest file.
pub struct ManifestWriter {
    file: File,
    class_map: ClassMap,
    next_index: u64,
}

impl ManifestWriter {
    /// Opens `path` for appending after validating its current contents.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let existing = load_manifest(path)?;
        let mut file = OpenOptions::new().append(true).open(path)?;
        file.seek(SeekFrom::End(0))?;
        Ok(Self {
            file,
            class_map: existing.class_map,
            next_index: existing.records.len() as u64,
        })
    }

    /// Creates a fresh manifest file holding only the header.
    pub fn create(path: impl AsRef<Path>, class_map: ClassMap, global_seed: u64) -> Result<Self, ManifestError> {
        save_manifest(&Manifest::new(class_map, global_seed), &path)?;
        Self::open(path)
    }

    pub fn len(&self) -> u64 {
        self.next_index
    }

    pub fn is_empty(&self) -> bool {
        self.next_index == 0
    }

    /// Appends records one line at a time; each line is a single write
    /// followed by a data sync.
    pub fn append(&mut self, records: &[Record]) -> Result<(), ManifestError> {
        for (offset, r) in records.iter().enumerate() {
            let expected = self.next_index + offset as u64;
            if r.index != expected {
                return Err(ManifestError::IndexGap { expected, found: r.index });
            }
            r.validate(&self.class_map)?;
        }
        for r in records {
            self.file.write_all(&record_line(r))?;
            self.file.sync_data()?;
            self.next_index += 1;
        }
        Ok(())
    }
}

/// Appends `records` to the manifest at `path`; indices must continue the
/// existing sequence.
pub fn append_records(path: impl AsRef<Path>, records: &[Record]) -> Result<(), ManifestError> {
    if records.is_empty() {
        // Still validate the target so a bad path is reported.
        load_manifest(path)?;
        return Ok(());
    }
    ManifestWriter::open(path)?.append(records)
}
