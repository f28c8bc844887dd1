//! Plain-text classifier checkpoints:
//!
//! ```text
//! cip-classifier 1
//! model mlp 16
//! shape 2 4
//! train_seed 7
//! mean -0.1 2.5
//! scale 1.0 0.9
//! params 116
//! 0.0123
//! ...
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a checkpoint reloads
//! bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::{Classifier, ModelKind, Shape, TrainError};

pub const CHECKPOINT_VERSION: u32 = 1;

fn floats(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

pub fn write_classifier(c: &Classifier) -> String {
    let mut s = format!("cip-classifier {CHECKPOINT_VERSION}\n");
    match c.shape.kind {
        ModelKind::LinearSoftmax => s.push_str("model linear-softmax\n"),
        ModelKind::Mlp { hidden } => writeln!(s, "model mlp {hidden}").unwrap(),
    }
    writeln!(s, "shape {} {}", c.shape.d, c.shape.k).unwrap();
    writeln!(s, "train_seed {}", c.train_seed).unwrap();
    writeln!(s, "mean {}", floats(&c.mean)).unwrap();
    writeln!(s, "scale {}", floats(&c.scale)).unwrap();
    writeln!(s, "params {}", c.params.len()).unwrap();
    for p in &c.params {
        writeln!(s, "{p:?}").unwrap();
    }
    s
}

pub fn parse_classifier(text: &str) -> Result<Classifier, TrainError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let err = |line: usize, message: String| TrainError::Checkpoint { line, message };
    let mut field = |key: &str| -> Result<(usize, Vec<String>), TrainError> {
        let (n, line) = lines.next().ok_or_else(|| err(0, format!("missing {key:?} line")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(err(n, format!("expected {key:?}")));
        }
        Ok((n, parts.map(str::to_string).collect()))
    };
    let parse_f = |n: usize, s: &str| s.parse::<f64>().map_err(|e| err(n, e.to_string()));
    let parse_u = |n: usize, s: &str| s.parse::<u64>().map_err(|e| err(n, e.to_string()));

    let (n, v) = field("cip-classifier")?;
    if v.len() != 1 || parse_u(n, &v[0])? != u64::from(CHECKPOINT_VERSION) {
        return Err(err(n, "unsupported checkpoint version".into()));
    }
    let (n, v) = field("model")?;
    let kind = match v.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["linear-softmax"] => ModelKind::LinearSoftmax,
        ["mlp", h] => ModelKind::Mlp { hidden: parse_u(n, h)? as usize },
        _ => return Err(err(n, "unknown model".into())),
    };
    let (n, v) = field("shape")?;
    if v.len() != 2 {
        return Err(err(n, "shape needs d and k".into()));
    }
    let shape = Shape { kind, d: parse_u(n, &v[0])? as usize, k: parse_u(n, &v[1])? as usize };
    let (n, v) = field("train_seed")?;
    let train_seed = parse_u(n, v.first().ok_or_else(|| err(n, "missing seed".into()))?)?;
    let (n, v) = field("mean")?;
    let mean = v.iter().map(|s| parse_f(n, s)).collect::<Result<Vec<_>, _>>()?;
    let (n2, v) = field("scale")?;
    let scale = v.iter().map(|s| parse_f(n2, s)).collect::<Result<Vec<_>, _>>()?;
    if mean.len() != shape.d || scale.len() != shape.d {
        return Err(err(n, "standardization length differs from d".into()));
    }
    let (n, v) = field("params")?;
    let count = parse_u(n, v.first().ok_or_else(|| err(n, "missing count".into()))?)? as usize;
    if count != shape.n_params() {
        return Err(err(n, format!("expected {} parameters for this shape", shape.n_params())));
    }
    let mut params = Vec::with_capacity(count);
    for (n, line) in lines {
        let p = parse_f(n, line.trim())?;
        if !p.is_finite() {
            return Err(err(n, "non-finite parameter".into()));
        }
        params.push(p);
    }
    if params.len() != count {
        return Err(err(0, format!("found {} parameters, header says {count}", params.len())));
    }
    Ok(Classifier { shape, mean, scale, params, train_seed })
}

/// Writes the checkpoint atomically (temp file + rename).
pub fn save_classifier(c: &Classifier, path: impl AsRef<Path>) -> Result<(), TrainError> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let io = |e: std::io::Error| TrainError::Io(e.to_string());
    std::fs::write(&tmp, write_classifier(c)).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<Classifier, TrainError> {
    let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io(e.to_string()))?;
    parse_classifier(&text)
}
