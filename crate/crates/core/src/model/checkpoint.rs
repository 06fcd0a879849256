//! Plain-text checkpoint format.
//!
//! Line 1 is a JSON header carrying the format tag, version, model config
//! and both vocabularies. Each weight block follows as `# name rows cols`
//! and `rows` lines of whitespace-separated values. Values are written with
//! shortest round-trip formatting, so save/load is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams, Translator, Vocab, BLOCK_NAMES};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "multiref-checkpoint";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    src_vocab: Vocab,
    tgt_vocab: Vocab,
}

pub(super) fn to_text(model: &Translator) -> Result<String> {
    let header = Header {
        format: FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        src_vocab: model.src_vocab.clone(),
        tgt_vocab: model.tgt_vocab.clone(),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for ((name, shape), data) in BLOCK_NAMES.iter().zip(model.params.shapes()).zip(model.params.blocks()) {
        let (rows, cols) = match shape.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            _ => unreachable!("blocks are 1-D or 2-D"),
        };
        let _ = writeln!(out, "# {name} {rows} {cols}");
        for r in 0..rows {
            let row = &data[r * cols..(r + 1) * cols];
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    Ok(out)
}

pub(super) fn from_text(text: &str) -> Result<Translator> {
    let mut lines = text.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Checkpoint("empty checkpoint".into()))?;
    let raw: serde_json::Value =
        serde_json::from_str(first).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if raw.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Checkpoint("header lacks a version".into()))?;
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::VersionMismatch {
            found: version as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    header.config.validate()?;
    if header.src_vocab.len() != header.config.src_vocab || header.tgt_vocab.len() != header.config.tgt_vocab {
        return Err(Error::Checkpoint("vocabulary sizes disagree with config".into()));
    }

    let mut params = ModelParams::zeros(&header.config);
    let expected = params.shapes();
    for ((name, want), block) in BLOCK_NAMES.iter().zip(expected).zip(params.blocks_mut()) {
        let tag = lines
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("missing block `{name}`")))?;
        let parts: Vec<&str> = tag.split_whitespace().collect();
        let dims: Vec<usize> = match parts.as_slice() {
            ["#", n, r, c] if n == name => vec![
                r.parse()
                    .map_err(|_| Error::Checkpoint(format!("bad row count in `{tag}`")))?,
                c.parse()
                    .map_err(|_| Error::Checkpoint(format!("bad column count in `{tag}`")))?,
            ],
            _ => return Err(Error::Checkpoint(format!("expected block `{name}`, found `{tag}`"))),
        };
        let want_2d = if want.len() == 1 {
            vec![1, want[0]]
        } else {
            want.clone()
        };
        if dims != want_2d {
            return Err(Error::ShapeMismatch {
                block: (*name).to_owned(),
                expected: want,
                found: dims,
            });
        }
        let cols = dims[1];
        for r in 0..dims[0] {
            let line = lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("block `{name}` is truncated")))?;
            let values: Vec<&str> = line.split_whitespace().collect();
            if values.len() != cols {
                return Err(Error::ShapeMismatch {
                    block: (*name).to_owned(),
                    expected: want_2d.clone(),
                    found: vec![dims[0], values.len()],
                });
            }
            for (slot, v) in block[r * cols..(r + 1) * cols].iter_mut().zip(values) {
                *slot = v
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad value `{v}` in block `{name}`")))?;
            }
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(Error::Checkpoint("trailing data after last block".into()));
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("checkpoint weights".into()));
    }
    Ok(Translator {
        config: header.config,
        src_vocab: header.src_vocab,
        tgt_vocab: header.tgt_vocab,
        params,
    })
}

pub fn save_checkpoint(model: &Translator, path: &Path) -> Result<()> {
    let text = to_text(model)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Translator> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}
